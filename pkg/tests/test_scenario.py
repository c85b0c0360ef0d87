"""Scenario model: loading, validation report, synthesis determinism."""

import dataclasses
import json

import numpy as np
import pytest

from evshare.builtin import build_ieee33_scenario, bundled_scenario_path
from evshare.scenario import (
    EvTask,
    InvariantError,
    SchemaError,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    synthesize_fleet,
    validate_scenario,
)


@pytest.fixture(scope="module")
def bundled():
    return load_scenario(bundled_scenario_path())


def test_bundled_scenario_shape(bundled):
    assert len(bundled.network.buses) == 33
    assert len(bundled.network.lines) == 32
    assert len(bundled.stations) == 4
    assert len(bundled.storages) == 1
    assert bundled.time.horizon_slots == 24
    assert sum(len(s.fleet) for s in bundled.stations) == 74


def test_bundled_scenario_validates_clean(bundled):
    assert validate_scenario(bundled) == []


def test_roundtrip_identity(bundled, tmp_path):
    path = tmp_path / "copy.json"
    save_scenario(bundled, path)
    again = load_scenario(path)
    assert again == bundled


def test_tariff_no_arbitrage_rejected(bundled, tmp_path):
    doc = scenario_to_dict(bundled)
    doc["tariff"]["sell_price"][5] = doc["tariff"]["buy_price"][5]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(InvariantError, match="tariff no-arbitrage violated"):
        load_scenario(path)


def test_cycle_rejected_as_non_radial(bundled, tmp_path):
    doc = scenario_to_dict(bundled)
    doc["network"]["lines"].append([33, 18, 0.01, 0.01, 25.0])
    path = tmp_path / "cycle.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(InvariantError, match="network not radial"):
        load_scenario(path)


def test_schema_error_names_field(bundled, tmp_path):
    doc = scenario_to_dict(bundled)
    del doc["network"]["s_base"]
    path = tmp_path / "nofield.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="s_base"):
        load_scenario(path)
    path.write_text("{not json")
    with pytest.raises(SchemaError, match="not valid JSON"):
        load_scenario(path)


def test_unreachable_requirement_reported(bundled):
    station = bundled.stations[0]
    bad_task = dataclasses.replace(
        station.fleet[0], arrival_slot=10, departure_slot=12,
        initial_energy=10.0, required_energy=50.0)
    bad_station = dataclasses.replace(station, fleet=station.fleet + (bad_task,))
    scenario = dataclasses.replace(
        bundled, stations=(bad_station,) + bundled.stations[1:])
    issues = validate_scenario(scenario)
    assert len(issues) == 1
    assert issues[0].entity == f"cs1/ev{len(station.fleet)}"
    assert "unreachable" in issues[0].message


def test_missing_connected_station_reported(bundled):
    storage = dataclasses.replace(
        bundled.storages[0],
        connected_stations=bundled.storages[0].connected_stations + ("ghost",))
    scenario = dataclasses.replace(bundled, storages=(storage,))
    issues = validate_scenario(scenario)
    assert len(issues) == 1
    assert issues[0].entity == "ses1"
    assert "ghost" in issues[0].message


def test_radiality_count_and_connectivity(bundled):
    net = bundled.network
    assert len(net.lines) == len(net.buses) - 1
    reached = {net.slack_bus_id}
    frontier = [net.slack_bus_id]
    children = {}
    for line in net.lines:
        children.setdefault(line.from_bus, []).append(line.to_bus)
    while frontier:
        node = frontier.pop()
        for child in children.get(node, ()):
            assert child not in reached
            reached.add(child)
            frontier.append(child)
    assert reached == {b.bus_id for b in net.buses}


@pytest.mark.parametrize("pattern", ["residential", "workplace", "leisure"])
def test_synthesized_fleets_valid(pattern):
    tasks = synthesize_fleet(40, pattern, seed=3)
    assert len(tasks) == 40
    for task in tasks:
        assert 0 <= task.arrival_slot < task.departure_slot <= 24
        assert task.energy_min <= task.initial_energy <= task.energy_max
        assert task.energy_min <= task.required_energy <= task.energy_max
        window_h = task.departure_slot - task.arrival_slot
        need_h = (task.required_energy - task.initial_energy) / (
            task.power_max * task.eff_charge)
        assert need_h <= window_h


def test_residential_arrivals_concentrated_in_evening():
    tasks = synthesize_fleet(20, "residential", seed=7)
    arrivals = [t.arrival_slot for t in tasks]
    assert min(arrivals) >= 15
    assert np.median(arrivals) >= 17


def test_synthesize_fleet_pure_function():
    assert synthesize_fleet(12, "workplace", 1) == synthesize_fleet(12, "workplace", 1)
    assert synthesize_fleet(0, "workplace", 1) == ()
    assert synthesize_fleet(12, "workplace", 1) != synthesize_fleet(12, "workplace", 2)


def test_scenario_from_dict_rejects_bad_schema_version(bundled):
    doc = scenario_to_dict(bundled)
    doc["schema"] = 99
    with pytest.raises(SchemaError, match="schema version"):
        scenario_from_dict(doc)


def test_multi_cluster_builder_uses_distinct_buses():
    scenario = build_ieee33_scenario(n_clusters=3, fleet_sizes=(5, 5, 5, 5))
    assert validate_scenario(scenario) == []
    buses = {sto.bus_id for sto in scenario.storages}
    assert len(buses) == 3
    assert len(scenario.stations) == 12
    fleets = [st.fleet for st in scenario.stations]
    assert fleets[0] != fleets[4]  # replicated clusters get fresh fleets

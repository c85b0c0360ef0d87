"""Storage model: degradation, SOC recurrence, feasibility, subproblem."""

import dataclasses

import numpy as np
import pytest

from evshare.builtin import build_ieee33_scenario
from evshare.kernel import solve
from evshare.scenario import StorageSpec, TimeGrid
from evshare.storage import (
    StorageSchedule,
    assemble_seso_subproblem,
    check_storage_feasibility,
    decode_seso_solution,
    degradation_cost,
    simulate_soc,
)

GRID = TimeGrid(horizon_slots=24, slot_hours=1.0)
STATIONS = ("cs1", "cs2", "cs3", "cs4")


def make_spec(**kwargs) -> StorageSpec:
    base = dict(storage_id="ses1", bus_id=6, connected_stations=STATIONS,
                capacity=650.0, energy_min=65.0, energy_max=585.0,
                power_charge_max=195.0, power_discharge_max=195.0,
                eff_charge=0.95, eff_discharge=0.95,
                degradation_coeff=0.01, initial_energy=325.0)
    base.update(kwargs)
    return StorageSpec(**base)


def zero_schedule(spec=None) -> StorageSchedule:
    return StorageSchedule.zeros(STATIONS, spec or make_spec(), GRID)


def with_soc(schedule: StorageSchedule, spec: StorageSpec) -> StorageSchedule:
    schedule.net_from_station = (schedule.to_station_charge
                                 - schedule.to_station_discharge)
    schedule.net_from_grid = schedule.grid_charge - schedule.grid_discharge
    schedule.soc = simulate_soc(schedule, spec, GRID)
    return schedule


def test_degradation_cost_reference_case():
    spec = make_spec()
    schedule = zero_schedule(spec)
    schedule.grid_charge[4] = 100.0
    assert degradation_cost(schedule, spec, GRID) == pytest.approx(1.00, abs=1e-12)


def test_degradation_cost_zero_and_linear():
    spec = make_spec()
    assert degradation_cost(zero_schedule(spec), spec, GRID) == 0.0
    rng = np.random.RandomState(0)
    schedule = zero_schedule(spec)
    schedule.to_station_charge = rng.rand(4, 24)
    schedule.grid_discharge = rng.rand(24)
    base = degradation_cost(schedule, spec, GRID)
    doubled = dataclasses.replace(
        schedule,
        to_station_charge=2 * schedule.to_station_charge,
        grid_discharge=2 * schedule.grid_discharge)
    assert degradation_cost(doubled, spec, GRID) == pytest.approx(2 * base, rel=1e-12)


def test_degradation_never_below_net_flow_bound():
    # any nonneg split with given nets costs at least c_b * dt * sum |net|
    rng = np.random.RandomState(5)
    spec = make_spec()
    for _ in range(20):
        net_station = rng.uniform(-30, 30, (4, 24))
        slack = rng.uniform(0, 10, (4, 24))
        schedule = zero_schedule(spec)
        schedule.to_station_charge = np.maximum(net_station, 0) + slack
        schedule.to_station_discharge = np.maximum(-net_station, 0) + slack
        cost = degradation_cost(schedule, spec, GRID)
        bound = spec.degradation_coeff * GRID.slot_hours * np.abs(net_station).sum()
        assert cost >= bound - 1e-9


def test_simulate_soc_single_step_reference():
    spec = make_spec()
    schedule = zero_schedule(spec)
    schedule.grid_charge[0] = 100.0
    soc = simulate_soc(schedule, spec, GRID)
    assert soc[0] == 325.0
    assert soc[1] == pytest.approx(420.0, abs=1e-12)


def test_simulate_soc_constant_when_idle():
    spec = make_spec()
    np.testing.assert_allclose(simulate_soc(zero_schedule(spec), spec, GRID), 325.0)


def test_simulate_soc_roundtrip_identity():
    spec = make_spec()
    schedule = zero_schedule(spec)
    x = 80.0
    schedule.grid_charge[2] = x
    schedule.grid_discharge[3] = x * spec.eff_charge * spec.eff_discharge
    soc = simulate_soc(schedule, spec, GRID)
    assert soc[4] == pytest.approx(soc[0], abs=1e-10)


def test_check_storage_feasibility_zero_ok():
    spec = make_spec()
    assert check_storage_feasibility(zero_schedule(spec), spec, GRID) == []


def test_check_storage_feasibility_discharge_cap():
    spec = make_spec()
    schedule = zero_schedule(spec)
    schedule.to_station_discharge[:, 5] = (spec.power_discharge_max + 1.0) / 4
    schedule = with_soc(schedule, spec)
    violations = check_storage_feasibility(schedule, spec, GRID, enforce_cyclic=False)
    assert any(v.startswith("aggregate discharge cap") for v in violations)


def test_check_storage_feasibility_soc_floor():
    spec = make_spec()
    schedule = zero_schedule(spec)
    # discharge until the trajectory dips 0.5 kWh below the floor
    need = (spec.initial_energy - spec.energy_min + 0.5) * spec.eff_discharge
    slots = int(np.ceil(need / 150.0))
    schedule.grid_discharge[:slots] = need / slots
    schedule = with_soc(schedule, spec)
    violations = check_storage_feasibility(schedule, spec, GRID, enforce_cyclic=False)
    assert any(v.startswith("soc bounds") for v in violations)


def test_cyclic_toggle():
    spec = make_spec()
    schedule = zero_schedule(spec)
    schedule.grid_charge[0] = 10.0
    schedule = with_soc(schedule, spec)
    on = check_storage_feasibility(schedule, spec, GRID, enforce_cyclic=True)
    off = check_storage_feasibility(schedule, spec, GRID, enforce_cyclic=False)
    assert any(v.startswith("cyclic soc") for v in on)
    assert off == []


def subproblem_inputs(spec, pv=None, demand=None, station_grid=None):
    T = GRID.horizon_slots
    pv = pv if pv is not None else {s: np.zeros(T) for s in spec.connected_stations}
    demand = demand if demand is not None else {
        s: np.zeros(T) for s in spec.connected_stations}
    station_grid = station_grid if station_grid is not None else {
        s: np.zeros(T) for s in spec.connected_stations}
    return dict(
        spec=spec, grid=GRID, pv_by_station=pv,
        lambda_duals={s: np.zeros(T) for s in spec.connected_stations},
        mu_dual=np.zeros(T),
        anchor_demand=demand,
        anchor_station_grid=station_grid,
        anchor_grid_from_storage=np.zeros(T),
        beta=0.05,
    )


def test_seso_subproblem_structure_counts():
    spec = make_spec()
    program = assemble_seso_subproblem(**subproblem_inputs(spec))
    # per slot: 2 components per station + 2 grid components; soc has T+1
    assert program.num_vars == (2 * 4 + 2) * 24 + 25
    # recurrence rows per slot, one initial pin, one cyclic pin
    assert program.eq_rhs.shape[0] == 24 + 2


def test_seso_subproblem_balanced_anchors_idle():
    spec = make_spec()
    program = assemble_seso_subproblem(**subproblem_inputs(spec))
    sol = solve(program)
    assert sol.status == "optimal"
    schedule = decode_seso_solution(program, sol, spec, GRID)
    assert degradation_cost(schedule, spec, GRID) == pytest.approx(0.0, abs=1e-5)
    assert sol.objective == pytest.approx(0.0, abs=1e-6)


def test_seso_subproblem_mu_monotone_response():
    spec = make_spec()
    base_kwargs = subproblem_inputs(spec)
    program = assemble_seso_subproblem(**base_kwargs)
    sol = solve(program)
    low = decode_seso_solution(program, sol, spec, GRID)

    raised = dict(base_kwargs)
    mu = np.zeros(24)
    mu[7] = 0.5  # reward for net grid charging on slot 7
    raised["mu_dual"] = mu
    program2 = assemble_seso_subproblem(**raised)
    sol2 = solve(program2)
    high = decode_seso_solution(program2, sol2, spec, GRID)
    assert high.net_from_grid[7] > low.net_from_grid[7] + 1.0


def test_seso_solution_consistent_and_feasible():
    # anchors nearly balance each station so the storage sees mild residuals,
    # the regime where throughput cost suppresses simultaneous charge/discharge
    scenario = build_ieee33_scenario()
    spec = scenario.storages[0]
    rng = np.random.RandomState(2)
    pv = {s.station_id: np.asarray(s.pv_profile) for s in scenario.stations}
    demand = {s.station_id: rng.uniform(0, 30, 24) for s in scenario.stations}
    station_grid = {
        s.station_id: pv[s.station_id] - demand[s.station_id]
        + rng.uniform(-15, 15, 24)
        for s in scenario.stations
    }
    kwargs = subproblem_inputs(spec, pv=pv, demand=demand,
                               station_grid=station_grid)
    kwargs["lambda_duals"] = {s: rng.uniform(-0.1, 0.0, 24)
                              for s in spec.connected_stations}
    kwargs["mu_dual"] = rng.uniform(-0.1, 0.0, 24)
    program = assemble_seso_subproblem(**kwargs)
    sol = solve(program)
    assert sol.status == "optimal"
    schedule = decode_seso_solution(program, sol, spec, GRID)
    assert check_storage_feasibility(schedule, spec, GRID) == []
    np.testing.assert_allclose(simulate_soc(schedule, spec, GRID), schedule.soc,
                               atol=1e-6)
    products = schedule.to_station_charge * schedule.to_station_discharge
    assert np.all(products <= 1e-6)
    assert np.all(schedule.grid_charge * schedule.grid_discharge <= 1e-6)

"""Network model: branch-flow correctness against a fixed-point oracle."""

import numpy as np
import pytest

from evshare.builtin import build_ieee33_scenario
from evshare.kernel import solve
from evshare.network import (
    FlowState,
    assemble_dso_subproblem,
    check_network_feasibility,
    decode_flow_state,
    dso_energy_cost,
    relaxation_gap,
)
from evshare.scenario import (
    BusSpec,
    LineSpec,
    NetworkSpec,
    Scenario,
    Tariff,
    TimeGrid,
    validate_scenario,
)


def two_bus_scenario(load_kw=100.0, load_kvar=50.0, T=2) -> Scenario:
    buses = (
        BusSpec(1, (-5000.0, 5000.0), (-5000.0, 5000.0), (0.8836, 1.1236),
                (0.0,) * T, (0.0,) * T),
        BusSpec(2, (-5000.0, 5000.0), (-5000.0, 5000.0), (0.8836, 1.1236),
                (load_kw,) * T, (load_kvar,) * T),
    )
    lines = (LineSpec(1, 2, 0.01, 0.01, 25.0),)
    network = NetworkSpec(buses=buses, lines=lines, slack_bus_id=1,
                          s_base=1000.0, v_base=12.66)
    return Scenario(
        time=TimeGrid(horizon_slots=T, slot_hours=1.0),
        network=network, stations=(), storages=(),
        tariff=Tariff((0.1,) * T, (0.01,) * T),
    )


def solve_dso(scenario, **overrides):
    T = scenario.time.horizon_slots
    kwargs = dict(
        lambda_duals={s.station_id: np.zeros(T) for s in scenario.stations},
        mu_duals={s.storage_id: np.zeros(T) for s in scenario.storages},
        anchor_demand={s.station_id: np.zeros(T) for s in scenario.stations},
        anchor_storage={s.station_id: np.zeros(T) for s in scenario.stations},
        anchor_storage_grid={s.storage_id: np.zeros(T) for s in scenario.storages},
        beta=0.05,
    )
    kwargs.update(overrides)
    program = assemble_dso_subproblem(scenario, **kwargs)
    solution = solve(program)
    return program, solution


def fixed_point_flow(p_load, q_load, r, x, v_from=1.0, iterations=60):
    """Independent single-line power-flow oracle via fixed-point iteration."""
    P, Q, ell = p_load, q_load, 0.0
    for _ in range(iterations):
        ell = (P ** 2 + Q ** 2) / v_from
        P = p_load + r * ell
        Q = q_load + x * ell
    return P, Q, ell


def test_two_bus_matches_fixed_point_oracle():
    scenario = two_bus_scenario()
    assert validate_scenario(scenario) == []
    program, solution = solve_dso(scenario)
    assert solution.status == "optimal"
    fs = decode_flow_state(program, solution, scenario)
    P_ref, Q_ref, ell_ref = fixed_point_flow(0.1, 0.05, 0.01, 0.01)
    assert P_ref > 0.1  # losses strictly positive
    np.testing.assert_allclose(fs.line_p[0], P_ref, atol=1e-6)
    np.testing.assert_allclose(fs.line_q[0], Q_ref, atol=1e-6)
    np.testing.assert_allclose(fs.current_sq[0], ell_ref, atol=1e-6)
    v2_ref = 1.0 - 2 * (0.01 * P_ref + 0.01 * Q_ref) + 2e-4 * ell_ref
    np.testing.assert_allclose(fs.volt_sq[1], v2_ref, atol=1e-6)
    np.testing.assert_allclose(fs.grid_buy, 1000.0 * P_ref, atol=1e-3)
    np.testing.assert_allclose(fs.grid_sell, 0.0, atol=1e-6)
    assert check_network_feasibility(fs, scenario) == []


def test_zero_load_network_idles_at_zero():
    scenario = two_bus_scenario(load_kw=0.0, load_kvar=0.0)
    program, solution = solve_dso(scenario)
    assert solution.status == "optimal"
    assert solution.objective == pytest.approx(0.0, abs=1e-6)
    fs = decode_flow_state(program, solution, scenario)
    np.testing.assert_allclose(fs.line_p, 0.0, atol=1e-6)
    np.testing.assert_allclose(fs.current_sq, 0.0, atol=1e-6)


def test_dso_structure_counts_on_33_bus():
    scenario = build_ieee33_scenario()
    T = scenario.time.horizon_slots
    program, solution = solve_dso(scenario)
    for label in ("flow_p", "flow_q", "volt_drop"):
        assert len(program.eq_rows(label)) == 32 * T
    assert len(program.cone_blocks) == 32 * T
    assert solution.status == "optimal"


def test_dso_no_simultaneous_buy_sell():
    scenario = build_ieee33_scenario()
    program, solution = solve_dso(scenario)
    fs = decode_flow_state(program, solution, scenario)
    # one side of the exchange is always numerically zero
    assert np.all(np.minimum(fs.grid_buy, fs.grid_sell) <= 1e-4)


def test_relaxation_exact_at_33_bus_optimum():
    scenario = build_ieee33_scenario()
    program, solution = solve_dso(scenario)
    fs = decode_flow_state(program, solution, scenario)
    max_gap, gaps = relaxation_gap(fs, scenario.network)
    assert gaps.shape == (32, 24)
    assert max_gap <= 1e-6


def test_relaxation_gap_zero_flow_and_perturbation():
    scenario = two_bus_scenario(T=1)
    fs = FlowState(
        line_p=np.zeros((1, 1)), line_q=np.zeros((1, 1)),
        current_sq=np.zeros((1, 1)), volt_sq=np.ones((2, 1)),
        bus_p=np.zeros((2, 1)), bus_q=np.zeros((2, 1)),
        grid_buy=np.zeros(1), grid_sell=np.zeros(1),
        station_exchange={}, storage_exchange={},
    )
    max_gap, gaps = relaxation_gap(fs, scenario.network)
    assert max_gap == 0.0
    fs.current_sq[0, 0] += 0.01
    max_gap, gaps = relaxation_gap(fs, scenario.network)
    assert gaps[0, 0] == pytest.approx(0.01, abs=1e-15)
    assert max_gap == pytest.approx(0.01, abs=1e-15)


def test_dso_energy_cost_reference_cases():
    grid = TimeGrid(horizon_slots=2, slot_hours=1.0)
    tariff = Tariff((0.10, 0.10), (0.01, 0.01))
    assert dso_energy_cost(np.array([100.0, 0.0]), np.zeros(2), tariff, grid) \
        == pytest.approx(10.0, abs=1e-12)
    assert dso_energy_cost(np.zeros(2), np.zeros(2), tariff, grid) == 0.0
    # selling 50 kWh at the floor price
    assert dso_energy_cost(np.zeros(2), np.array([50.0, 0.0]), tariff, grid) \
        == pytest.approx(-0.50, abs=1e-12)


def test_feasibility_check_flags_voltage_and_exchange():
    scenario = two_bus_scenario()
    program, solution = solve_dso(scenario)
    fs = decode_flow_state(program, solution, scenario)
    assert check_network_feasibility(fs, scenario) == []
    fs.volt_sq[1, 0] = 0.94 ** 2 - 0.01
    violations = check_network_feasibility(fs, scenario)
    assert any(v.startswith("voltage bounds") for v in violations)


def test_feasibility_check_flags_cluster_imbalance():
    scenario = build_ieee33_scenario()
    program, solution = solve_dso(scenario)
    fs = decode_flow_state(program, solution, scenario)
    assert check_network_feasibility(fs, scenario) == []
    fs.station_exchange["cs1"] = fs.station_exchange["cs1"] + 1.0
    violations = check_network_feasibility(fs, scenario)
    assert any(v.startswith("cluster exchange balance") for v in violations)


def test_storage_grid_link_checked_when_supplied():
    scenario = build_ieee33_scenario()
    program, solution = solve_dso(scenario)
    fs = decode_flow_state(program, solution, scenario)
    linked = {"ses1": -fs.storage_exchange["ses1"]}
    assert check_network_feasibility(fs, scenario, storage_net_from_grid=linked) == []
    broken = {"ses1": -fs.storage_exchange["ses1"] + 0.5}
    violations = check_network_feasibility(fs, scenario, storage_net_from_grid=broken)
    assert any(v.startswith("storage grid link") for v in violations)


def test_station_price_dual_monotone_export_response():
    # under the stored dual sign a negative lambda prices exports for the
    # network (it pays the economic price -lambda), so exports shrink
    scenario = build_ieee33_scenario()
    T = scenario.time.horizon_slots
    program, solution = solve_dso(scenario)
    base = decode_flow_state(program, solution, scenario)
    lam = {s.station_id: np.zeros(T) for s in scenario.stations}
    lam["cs1"] = np.full(T, -0.5)
    program2, solution2 = solve_dso(scenario, lambda_duals=lam)
    priced = decode_flow_state(program2, solution2, scenario)
    assert priced.station_exchange["cs1"].sum() \
        < base.station_exchange["cs1"].sum() - 1.0

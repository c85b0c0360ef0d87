"""Solver kernel: analytic KKT cases, residual recomputation, duality checks."""

import numpy as np
import pytest

from evshare.kernel import (
    ConicSolution,
    ProgramBuilder,
    SolveTolerances,
    dump_program,
    kkt_residuals,
    price_from_dual,
    solve,
)


def build_halfspace_qp():
    # min x^2 s.t. x >= 1
    b = ProgramBuilder()
    x = b.add_vars("x", 1, lower=1.0)
    b.add_quadratic_diag(x, 1.0)
    return b.build()


def test_qp_with_active_inequality():
    program = build_halfspace_qp()
    sol = solve(program)
    assert sol.status == "optimal"
    assert sol.primal[0] == pytest.approx(1.0, abs=1e-7)
    # stationarity 2x + G'z = 0 with G = [-1]: z = 2
    assert sol.ineq_duals[0] == pytest.approx(2.0, abs=1e-6)


def test_soc_epigraph_norm():
    # min t s.t. t >= ||(3, 4)||
    b = ProgramBuilder()
    t = b.add_vars("t", 1)
    u = b.add_vars("u", 2)
    b.add_linear_cost(t, 1.0)
    b.add_eq([u[0]], [1.0], 3.0)
    b.add_eq([u[1]], [1.0], 4.0)
    b.add_cone(t[0], u)
    sol = solve(b.build())
    assert sol.status == "optimal"
    assert sol.primal[t[0]] == pytest.approx(5.0, abs=1e-6)


def test_equality_dual_convention():
    # min (x-2)^2 s.t. x = 0.5: stationarity 2(x-2) + y = 0 -> y = 3
    b = ProgramBuilder()
    x = b.add_vars("x", 1)
    b.add_squared_affine(1.0, x, [1.0], -2.0)
    b.add_eq(x, [1.0], 0.5, label="pin")
    program = b.build()
    sol = solve(program)
    assert sol.status == "optimal"
    assert sol.primal[0] == pytest.approx(0.5, abs=1e-8)
    assert sol.eq_duals[program.eq_rows("pin")[0]] == pytest.approx(3.0, abs=1e-6)


def test_price_from_dual_sign_map():
    assert price_from_dual(3.0) == -3.0
    assert price_from_dual(0.0) == 0.0
    price = 1.75
    assert price_from_dual(-price) == price
    np.testing.assert_allclose(price_from_dual(np.array([1.0, -2.0])), [-1.0, 2.0])


def test_kkt_residuals_on_solver_output():
    program = build_halfspace_qp()
    sol = solve(program)
    res = kkt_residuals(program, sol)
    assert max(res) <= 1e-7


def test_kkt_residuals_flag_non_optimal_point():
    program = build_halfspace_qp()
    sol = solve(program)
    doctored = ConicSolution(
        primal=np.array([2.0]), eq_duals=sol.eq_duals, ineq_duals=np.zeros_like(sol.ineq_duals),
        cone_duals=[], objective=4.0, status="optimal", residuals=(0, 0, 0),
    )
    primal, dual, _ = kkt_residuals(program, doctored)
    assert primal <= 1e-12  # x = 2 is feasible
    assert dual > 0.1       # but not stationary


def test_zero_dimensional_program():
    program = ProgramBuilder().build()
    sol = solve(program)
    assert sol.status == "optimal"
    assert kkt_residuals(program, sol) == (0.0, 0.0, 0.0)


def test_infeasible_and_unbounded_reported():
    b = ProgramBuilder()
    x = b.add_vars("x", 1, lower=1.0, upper=0.0)
    b.add_quadratic_diag(x, 1.0)
    assert solve(b.build()).status == "infeasible"

    b = ProgramBuilder()
    x = b.add_vars("x", 1, upper=5.0)
    b.add_linear_cost(x, 1.0)
    assert solve(b.build()).status == "unbounded"


def test_determinism_bit_identical():
    program = build_halfspace_qp()
    first = solve(program)
    second = solve(program)
    assert np.array_equal(first.primal, second.primal)
    assert np.array_equal(first.ineq_duals, second.ineq_duals)


def _random_feasible_qp(rng):
    n = rng.randint(3, 8)
    b = ProgramBuilder()
    x = b.add_vars("x", n, lower=-5.0, upper=5.0)
    diag = rng.rand(n) + 0.5
    b.add_quadratic_diag(x, diag)
    b.add_linear_cost(x, rng.randn(n))
    m = rng.randint(1, n)
    A = rng.randn(m, n)
    x0 = rng.rand(n) * 2.0 - 1.0  # strictly interior point
    rhs = A @ x0
    for j in range(m):
        b.add_eq(x, A[j], rhs[j], label=f"eq{j}")
    return b.build()


def test_strong_duality_on_random_qps():
    rng = np.random.RandomState(11)
    for _ in range(25):
        program = _random_feasible_qp(rng)
        sol = solve(program)
        assert sol.status == "optimal"
        x, y, z = sol.primal, sol.eq_duals, sol.ineq_duals
        quad = 0.5 * x @ (program.quadratic_term @ x)
        primal_obj = quad + program.linear_term @ x
        dual_obj = -quad - program.eq_rhs @ y - program.ineq_rhs @ z
        assert abs(primal_obj - dual_obj) <= 1e-6 * (1.0 + abs(primal_obj))


def test_dual_perturbation_predicts_objective_shift():
    # raising b_j by eps moves the optimum by -y_j * eps + o(eps)
    rng = np.random.RandomState(7)
    checked = 0
    for _ in range(50):
        program = _random_feasible_qp(rng)
        sol = solve(program)
        assert sol.status == "optimal"
        j = rng.randint(program.eq_rhs.shape[0])
        eps = 1e-5
        perturbed = ConvexProgramShift(program, j, eps).build()
        sol2 = solve(perturbed)
        assert sol2.status == "optimal"
        observed = sol2.objective - sol.objective
        predicted = -sol.eq_duals[j] * eps
        magnitude = max(abs(observed), abs(predicted))
        if magnitude >= 1e-6:
            assert abs(observed - predicted) / magnitude <= 1e-3
            checked += 1
        else:  # shift below solver resolution: require absolute agreement
            assert abs(observed - predicted) <= 1e-9
    assert checked >= 25


class ConvexProgramShift:
    """Helper cloning a program with one equality rhs nudged."""

    def __init__(self, program, row, eps):
        self.program = program
        self.row = row
        self.eps = eps

    def build(self):
        import copy

        clone = copy.deepcopy(self.program)
        clone.eq_rhs = clone.eq_rhs.copy()
        clone.eq_rhs[self.row] += self.eps
        return clone


def test_cone_feasibility_margin_at_optimum():
    rng = np.random.RandomState(3)
    for _ in range(10):
        b = ProgramBuilder()
        t = b.add_vars("t", 1)
        u = b.add_vars("u", 3)
        target = rng.randn(3) * 2
        for k in range(3):
            b.add_eq([u[k]], [1.0], target[k])
        b.add_linear_cost(t, 1.0)
        b.add_cone(t[0], u)
        sol = solve(b.build())
        assert sol.status == "optimal"
        assert sol.primal[t[0]] - np.linalg.norm(sol.primal[u]) >= -1e-8


def test_duplicate_cone_head_rejected():
    b = ProgramBuilder()
    t = b.add_vars("t", 1)
    u = b.add_vars("u", 2)
    b.add_linear_cost(t, 1.0)
    b.add_cone(t[0], u)
    b.add_cone(t[0], u[:1])
    with pytest.raises(ValueError):
        b.build()


def test_dump_program_roundtrips_sizes(tmp_path):
    program = build_halfspace_qp()
    path = tmp_path / "program.txt"
    dump_program(program, path)
    text = path.read_text().splitlines()
    assert text[0] == "vars 1"
    assert any(line.startswith("G 1 1") for line in text)
    assert "np.float64" not in path.read_text()


def test_tight_tolerances_reachable():
    program = build_halfspace_qp()
    sol = solve(program, SolveTolerances(1e-10, 1e-10, 1e-10, 200))
    assert sol.status == "optimal"
    assert max(sol.residuals) <= 1e-9

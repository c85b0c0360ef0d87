"""Canonical convex program representation and a deterministic conic solver.

Programs are quadratic objectives over linear equalities, linear
inequalities, and second-order cones:

    minimize    0.5 x'Px + q'x + constant
    subject to  A x  = b
                G x <= h
                x[t] >= || x[u] ||   for each cone block (t, u)

The dual sign convention is fixed as

    P x + q + A' y + G' z - sum_blocks S_k' w_k = 0,     z >= 0,

where ``y`` are the equality duals, ``z`` the inequality duals, ``w_k``
the cone duals (one vector per block, first component paired with x[t]),
and ``S_k`` the selector matrix of block k.  Under this convention the
dual of an equality row written ``lhs - rhs = 0`` is the marginal
*increase* of the optimum per unit of lhs, so trading prices in the
surrounding model are recovered through :func:`price_from_dual`.

The numerical engine is cvxopt's primal-dual interior-point method
(coneqp, with conelp for programs without curvature), which matches the
convention above directly.  Solutions are deterministic: fixed iteration
order and no time- or entropy-based state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

import cvxopt
import cvxopt.solvers

__all__ = [
    "ConvexProgram",
    "ConicSolution",
    "ProgramBuilder",
    "SolveTolerances",
    "solve",
    "kkt_residuals",
    "price_from_dual",
    "dump_program",
]


@dataclass(frozen=True)
class SolveTolerances:
    """Interior-point stopping tolerances."""

    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iterations: int = 200


DEFAULT_TOLERANCES = SolveTolerances()


@dataclass
class ConvexProgram:
    """Frozen program data in the canonical form above.

    ``variable_names`` maps a group name to the (global, flat) indices of
    its entries so solutions can be decoded back into model arrays.
    ``row_labels`` does the same for equality rows, which is how coupling
    duals are located for price extraction.
    """

    quadratic_term: sparse.csc_matrix  # P, symmetric PSD
    linear_term: np.ndarray            # q
    eq_matrix: sparse.csr_matrix       # A
    eq_rhs: np.ndarray                 # b
    ineq_matrix: sparse.csr_matrix     # G, rows mean Gx <= h
    ineq_rhs: np.ndarray               # h
    cone_blocks: list[tuple[int, np.ndarray]]
    variable_names: dict[str, np.ndarray]
    constant: float = 0.0
    row_labels: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return self.linear_term.shape[0]

    def indices(self, name: str) -> np.ndarray:
        return self.variable_names[name]

    def unpack(self, x: np.ndarray, name: str) -> np.ndarray:
        """Decode the entries of variable group ``name`` from a solution vector."""
        return x[self.variable_names[name]]

    def eq_rows(self, label: str) -> np.ndarray:
        return self.row_labels[label]

    def objective_value(self, x: np.ndarray) -> float:
        quad = 0.5 * float(x @ (self.quadratic_term @ x))
        return quad + float(self.linear_term @ x) + self.constant

    def validate(self, eig_check: bool = False) -> None:
        """Raise ValueError on dimension or convexity violations."""
        n = self.num_vars
        if self.quadratic_term.shape != (n, n):
            raise ValueError("quadratic term shape mismatch")
        if self.eq_matrix.shape != (self.eq_rhs.shape[0], n):
            raise ValueError("equality block shape mismatch")
        if self.ineq_matrix.shape != (self.ineq_rhs.shape[0], n):
            raise ValueError("inequality block shape mismatch")
        asym = abs(self.quadratic_term - self.quadratic_term.T)
        if asym.nnz and asym.max() > 1e-12:
            raise ValueError("quadratic term not symmetric")
        seen_heads: set[int] = set()
        for t_index, u_indices in self.cone_blocks:
            if t_index in seen_heads:
                raise ValueError(f"variable {t_index} heads two cone blocks")
            seen_heads.add(t_index)
            if np.any(u_indices < 0) or np.any(u_indices >= n) or not (0 <= t_index < n):
                raise ValueError("cone block index out of range")
        if eig_check and n:
            dense = self.quadratic_term.toarray()
            if np.linalg.eigvalsh(dense).min() < -1e-9:
                raise ValueError("quadratic term not positive semidefinite")


@dataclass
class ConicSolution:
    """Primal-dual solution with independently checkable residuals."""

    primal: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    cone_duals: list[np.ndarray]
    objective: float
    status: str               # optimal | infeasible | unbounded | max_iter
    residuals: tuple[float, float, float]  # (primal_res, dual_res, gap)


def price_from_dual(eq_dual):
    """Map a kernel equality dual to the coordination-layer price sign.

    The surrounding model's Lagrangian subtracts price * (lhs - rhs), the
    kernel's adds its dual, hence the involution price = -dual.
    """
    return -eq_dual


def _cone_selector_matrix(program: ConvexProgram) -> sparse.csr_matrix | None:
    """Rows of -S stacked per block, matching the cvxopt SOC slot order."""
    if not program.cone_blocks:
        return None
    rows, cols, vals = [], [], []
    r = 0
    for t_index, u_indices in program.cone_blocks:
        rows.append(r)
        cols.append(t_index)
        vals.append(-1.0)
        r += 1
        for u in u_indices:
            rows.append(r)
            cols.append(int(u))
            vals.append(-1.0)
            r += 1
    return sparse.csr_matrix((vals, (rows, cols)), shape=(r, program.num_vars))


def _to_cvxopt(mat: sparse.spmatrix) -> cvxopt.spmatrix:
    coo = mat.tocoo()
    return cvxopt.spmatrix(
        coo.data, coo.row.astype(int), coo.col.astype(int), size=coo.shape
    )


def _sparse_kkt_factory(P: sparse.spmatrix, A: sparse.spmatrix,
                        G: sparse.spmatrix, dims: dict):
    """cvxopt kktsolver backed by scipy's sparse LU.

    cvxopt's built-in KKT solvers densify once second-order cones are
    present, which is hopeless at feeder scale.  This factory factors

        [ P   A'   G'   ]
        [ A   0    0    ]
        [ G   0   -W'W  ]

    sparsely each scaling update.  Per the engine contract the returned
    function receives (bx, by, bz) in place and must leave (ux, uy,
    W uz).  One step of iterative refinement guards the LU solve.
    """
    n = P.shape[0]
    p = A.shape[0]
    m = G.shape[0] if G is not None else 0
    n_lin = dims["l"]

    def factory(W):
        if m:
            d = np.asarray(W["d"]).ravel()
            scaling_blocks = [sparse.diags(d * d)] if d.size else []
            soc_mats = []
            for beta, v in zip(W["beta"], W["v"]):
                v = np.asarray(v).ravel()
                J = np.diag(np.r_[1.0, -np.ones(v.size - 1)])
                Wk = beta * (2.0 * np.outer(v, v) - J)
                soc_mats.append(Wk)
                scaling_blocks.append(sparse.csc_matrix(Wk @ Wk))
            WtW = sparse.block_diag(scaling_blocks, format="csc")
            K = sparse.bmat(
                [[P, A.T if p else None, G.T],
                 [A if p else None, None, None],
                 [G, None, -WtW]], format="csc")
        else:
            soc_mats = []
            K = sparse.bmat([[P, A.T], [A, None]], format="csc")
        # tiny diagonal regularization keeps the LU of the (possibly
        # curvature-free) saddle system well posed
        reg = sparse.diags(np.r_[np.full(n, 1e-12), np.full(p, -1e-12),
                                 np.full(m, -1e-12)])
        lu = splu((K + reg).tocsc())

        def apply_w(uz):
            out = np.empty_like(uz)
            out[:n_lin] = d[:n_lin] * uz[:n_lin] if n_lin else uz[:n_lin]
            offset = n_lin
            for Wk in soc_mats:
                k = Wk.shape[0]
                out[offset:offset + k] = Wk @ uz[offset:offset + k]
                offset += k
            return out

        def solve(x, y, z):
            bx = np.asarray(x).ravel().copy()
            by = np.asarray(y).ravel().copy() if p else np.zeros(0)
            bz = np.asarray(z).ravel().copy() if m else np.zeros(0)
            rhs = np.concatenate([bx, by, bz])
            sol = lu.solve(rhs)
            residual = rhs - K @ sol
            sol += lu.solve(residual)
            ux = sol[:n]
            uy = sol[n:n + p]
            uz = sol[n + p:]
            x[:] = cvxopt.matrix(ux)
            if p:
                y[:] = cvxopt.matrix(uy)
            if m:
                z[:] = cvxopt.matrix(apply_w(uz))

        return solve

    return factory


def solve(program: ConvexProgram, tol: SolveTolerances = DEFAULT_TOLERANCES) -> ConicSolution:
    """Solve a program; never raises on infeasibility, reports it as status.

    The returned status is ``optimal`` only when the independently
    recomputed KKT residuals meet the (scaled) 1e-7 contract; interior
    point runs that stall short of it are reported as ``max_iter``.
    """
    n = program.num_vars
    if n == 0:
        return ConicSolution(
            primal=np.zeros(0), eq_duals=np.zeros(program.eq_rhs.shape[0]),
            ineq_duals=np.zeros(0), cone_duals=[], objective=program.constant,
            status="optimal", residuals=(0.0, 0.0, 0.0),
        )

    n_lin = program.ineq_rhs.shape[0]
    cone_rows = _cone_selector_matrix(program)
    if cone_rows is not None:
        G = sparse.vstack([program.ineq_matrix, cone_rows], format="csr")
        h = np.concatenate([program.ineq_rhs, np.zeros(cone_rows.shape[0])])
    else:
        G = program.ineq_matrix
        h = program.ineq_rhs
    dims = {
        "l": n_lin,
        "q": [1 + len(u) for _, u in program.cone_blocks],
        "s": [],
    }

    options = {
        "show_progress": False,
        "abstol": tol.abs_tol,
        "reltol": tol.rel_tol,
        "feastol": tol.feas_tol,
        "maxiters": tol.max_iterations,
        "refinement": 2,
    }
    q_cv = cvxopt.matrix(program.linear_term)
    G_cv = _to_cvxopt(G) if G.shape[0] else None
    h_cv = cvxopt.matrix(h) if G.shape[0] else None
    A_cv = _to_cvxopt(program.eq_matrix) if program.eq_rhs.shape[0] else None
    b_cv = cvxopt.matrix(program.eq_rhs) if program.eq_rhs.shape[0] else None
    kkt = _sparse_kkt_factory(
        program.quadratic_term, program.eq_matrix,
        G if G.shape[0] else None, dims)

    status_map = {
        "optimal": "optimal",
        "primal infeasible": "infeasible",
        "dual infeasible": "unbounded",
        "unknown": "max_iter",
    }
    try:
        if program.quadratic_term.nnz:
            P_cv = _to_cvxopt(program.quadratic_term)
            raw = cvxopt.solvers.coneqp(
                P_cv, q_cv, G_cv, h_cv, dims, A_cv, b_cv,
                options=options, kktsolver=kkt,
            )
        elif G_cv is None:
            # conelp requires a cone part; an equality-only LP is solved as
            # a degenerate QP with zero curvature instead.
            P_cv = _to_cvxopt(sparse.csc_matrix((n, n)))
            raw = cvxopt.solvers.coneqp(
                P_cv, q_cv, None, None, None, A_cv, b_cv,
                options=options, kktsolver=kkt,
            )
        else:
            raw = cvxopt.solvers.conelp(
                q_cv, G_cv, h_cv, dims, A_cv, b_cv,
                options=options, kktsolver=kkt,
            )
    except (ValueError, ArithmeticError, RuntimeError):
        # coneqp assumes a feasible program and fails hard otherwise;
        # classify by an explicit feasibility probe before giving up.
        status = "infeasible" if _probe_infeasible(
            G_cv, h_cv, dims, A_cv, b_cv, n, options) else "max_iter"
        return ConicSolution(
            primal=np.full(n, np.nan), eq_duals=np.zeros(program.eq_rhs.shape[0]),
            ineq_duals=np.zeros(n_lin), cone_duals=[], objective=np.nan,
            status=status, residuals=(np.inf, np.inf, np.inf),
        )

    status = status_map.get(raw["status"], "max_iter")
    if raw["x"] is None:
        empty = ConicSolution(
            primal=np.full(n, np.nan), eq_duals=np.zeros(program.eq_rhs.shape[0]),
            ineq_duals=np.zeros(n_lin), cone_duals=[], objective=np.nan,
            status=status if status != "optimal" else "max_iter",
            residuals=(np.inf, np.inf, np.inf),
        )
        return empty

    x = np.asarray(raw["x"]).ravel()
    y = np.asarray(raw["y"]).ravel() if raw["y"] is not None else np.zeros(0)
    z_all = np.asarray(raw["z"]).ravel() if raw["z"] is not None else np.zeros(0)
    z_lin = z_all[:n_lin]
    cone_duals = []
    offset = n_lin
    for _, u in program.cone_blocks:
        width = 1 + len(u)
        cone_duals.append(z_all[offset:offset + width])
        offset += width

    solution = ConicSolution(
        primal=x,
        eq_duals=y,
        ineq_duals=z_lin,
        cone_duals=cone_duals,
        objective=program.objective_value(x),
        status=status,
        residuals=(np.inf, np.inf, np.inf),
    )
    solution.residuals = kkt_residuals(program, solution)
    if status == "optimal" and max(solution.residuals) > 1e-7:
        solution.status = "max_iter"
    return solution


def _probe_infeasible(G_cv, h_cv, dims, A_cv, b_cv, n, options) -> bool:
    """Zero-objective conelp probe; True when primal infeasibility is certified."""
    zero_c = cvxopt.matrix(np.zeros(n))
    if G_cv is None:
        # equality-only system: solvable iff b is in the range of A
        if A_cv is None:
            return False
        A = np.array(cvxopt.matrix(A_cv))
        b = np.asarray(b_cv).ravel()
        x, *_ = np.linalg.lstsq(A, b, rcond=None)
        return bool(np.linalg.norm(A @ x - b) > 1e-7 * (1 + np.linalg.norm(b)))
    try:
        probe = cvxopt.solvers.conelp(zero_c, G_cv, h_cv, dims, A_cv, b_cv,
                                      options=options)
    except (ValueError, ArithmeticError):
        return False
    return probe["status"] == "primal infeasible"


def kkt_residuals(program: ConvexProgram, solution: ConicSolution) -> tuple[float, float, float]:
    """Recompute (primal, dual, complementarity) residuals from raw data.

    All three are scaled: constraint residuals relative to 1 + |rhs|,
    stationarity relative to 1 + |q|, complementarity relative to
    1 + |objective|.  Independent of whatever the engine reported.
    """
    n = program.num_vars
    if n == 0:
        return (0.0, 0.0, 0.0)
    x = solution.primal
    y = solution.eq_duals
    z = solution.ineq_duals

    primal = 0.0
    if program.eq_rhs.shape[0]:
        r = program.eq_matrix @ x - program.eq_rhs
        primal = max(primal, np.abs(r).max() / (1.0 + np.abs(program.eq_rhs).max()))
    if program.ineq_rhs.shape[0]:
        r = program.ineq_matrix @ x - program.ineq_rhs
        scale = 1.0 + (np.abs(program.ineq_rhs).max() if program.ineq_rhs.size else 0.0)
        primal = max(primal, max(0.0, r.max()) / scale)
    for t_index, u_indices in program.cone_blocks:
        violation = np.linalg.norm(x[u_indices]) - x[t_index]
        primal = max(primal, max(0.0, violation) / (1.0 + abs(x[t_index])))

    stationarity = program.quadratic_term @ x + program.linear_term
    if y.shape[0]:
        stationarity = stationarity + program.eq_matrix.T @ y
    if z.shape[0]:
        stationarity = stationarity + program.ineq_matrix.T @ z
    for (t_index, u_indices), w in zip(program.cone_blocks, solution.cone_duals):
        if w.shape[0] == 0:  # failed solves carry no cone duals
            continue
        stationarity[t_index] -= w[0]
        stationarity[u_indices] -= w[1:]
    dual = np.abs(stationarity).max() / (1.0 + np.abs(program.linear_term).max())
    if z.shape[0]:
        dual = max(dual, max(0.0, -z.min()))
    for w in solution.cone_duals:
        if w.shape[0]:
            dual = max(dual, max(0.0, np.linalg.norm(w[1:]) - w[0]) / (1.0 + abs(w[0])))

    comp = 0.0
    obj_scale = 1.0 + abs(program.objective_value(x))
    if z.shape[0]:
        slack = program.ineq_rhs - program.ineq_matrix @ x
        comp += abs(float(z @ slack))
    for (t_index, u_indices), w in zip(program.cone_blocks, solution.cone_duals):
        if w.shape[0] == 0:
            continue
        s = np.concatenate([[x[t_index]], x[u_indices]])
        comp += abs(float(w @ s))
    return (float(primal), float(dual), float(comp / obj_scale))


def dump_program(program: ConvexProgram, path) -> None:
    """Plain-text row-major listing of the program for external cross-checks.

    Intended for small debug instances; matrices are densified.
    """
    with open(path, "w") as fh:
        fh.write(f"vars {program.num_vars}\n")
        fh.write(f"constant {program.constant!r}\n")
        for title, mat in (("P", program.quadratic_term), ("A", program.eq_matrix),
                           ("G", program.ineq_matrix)):
            dense = mat.toarray()
            fh.write(f"{title} {dense.shape[0]} {dense.shape[1]}\n")
            for row in dense:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        for title, vec in (("q", program.linear_term), ("b", program.eq_rhs),
                           ("h", program.ineq_rhs)):
            fh.write(f"{title} {vec.shape[0]}\n")
            fh.write(" ".join(repr(float(v)) for v in vec) + "\n")
        fh.write(f"cones {len(program.cone_blocks)}\n")
        for t_index, u_indices in program.cone_blocks:
            fh.write(f"{t_index} : {' '.join(str(int(u)) for u in u_indices)}\n")


class ProgramBuilder:
    """Incremental assembly of a ConvexProgram.

    Variables are registered in named groups; constraints may be added
    row by row or as COO batches with local row numbering.  Quadratic
    cost enters either as diagonal terms ``sum c_i x_i^2`` or as squared
    affine expressions ``coeff * (a'x + c)^2``, which covers every model
    objective in this package.
    """

    def __init__(self):
        self._n = 0
        self._names: dict[str, np.ndarray] = {}
        self._lb: list[tuple[int, float]] = []
        self._ub: list[tuple[int, float]] = []
        self._P_rows: list[np.ndarray] = []
        self._P_cols: list[np.ndarray] = []
        self._P_vals: list[np.ndarray] = []
        self._q: list[tuple[np.ndarray, np.ndarray]] = []
        self._constant = 0.0
        self._A_rows: list[np.ndarray] = []
        self._A_cols: list[np.ndarray] = []
        self._A_vals: list[np.ndarray] = []
        self._b: list[float] = []
        self._eq_count = 0
        self._labels: dict[str, list[int]] = {}
        self._G_rows: list[np.ndarray] = []
        self._G_cols: list[np.ndarray] = []
        self._G_vals: list[np.ndarray] = []
        self._h: list[float] = []
        self._ineq_count = 0
        self._cones: list[tuple[int, np.ndarray]] = []

    # -- variables ---------------------------------------------------------

    def add_vars(self, name: str, shape, lower=None, upper=None) -> np.ndarray:
        """Register a variable group; returns its global indices (shaped)."""
        if name in self._names:
            raise ValueError(f"duplicate variable group {name!r}")
        count = int(np.prod(shape)) if not np.isscalar(shape) else int(shape)
        idx = np.arange(self._n, self._n + count)
        self._n += count
        self._names[name] = idx
        shaped = idx if np.isscalar(shape) else idx.reshape(shape)
        if lower is not None:
            lows = np.broadcast_to(np.asarray(lower, dtype=float), (count,)) \
                if not np.isscalar(lower) else np.full(count, float(lower))
            self._lb.extend(zip(idx.tolist(), lows.tolist()))
        if upper is not None:
            ups = np.broadcast_to(np.asarray(upper, dtype=float), (count,)) \
                if not np.isscalar(upper) else np.full(count, float(upper))
            self._ub.extend(zip(idx.tolist(), ups.tolist()))
        return shaped

    # -- constraints -------------------------------------------------------

    def add_eq(self, indices, coeffs, rhs: float, label: str | None = None) -> int:
        """Single equality row sum(coeffs * x[indices]) = rhs."""
        indices = np.atleast_1d(np.asarray(indices, dtype=int))
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        row = self._eq_count
        self._A_rows.append(np.full(indices.shape[0], row))
        self._A_cols.append(indices)
        self._A_vals.append(coeffs)
        self._b.append(float(rhs))
        self._eq_count += 1
        if label is not None:
            self._labels.setdefault(label, []).append(row)
        return row

    def add_eq_batch(self, local_rows, indices, coeffs, rhs, label: str | None = None) -> np.ndarray:
        """COO batch of equality rows; ``local_rows`` are 0-based within the batch."""
        local_rows = np.asarray(local_rows, dtype=int)
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        base = self._eq_count
        self._A_rows.append(local_rows + base)
        self._A_cols.append(np.asarray(indices, dtype=int))
        self._A_vals.append(np.asarray(coeffs, dtype=float))
        self._b.extend(rhs.tolist())
        self._eq_count += rhs.shape[0]
        rows = np.arange(base, base + rhs.shape[0])
        if label is not None:
            self._labels.setdefault(label, []).extend(rows.tolist())
        return rows

    def add_ineq(self, indices, coeffs, rhs: float) -> int:
        """Single row sum(coeffs * x[indices]) <= rhs."""
        indices = np.atleast_1d(np.asarray(indices, dtype=int))
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        row = self._ineq_count
        self._G_rows.append(np.full(indices.shape[0], row))
        self._G_cols.append(indices)
        self._G_vals.append(coeffs)
        self._h.append(float(rhs))
        self._ineq_count += 1
        return row

    def add_ineq_batch(self, local_rows, indices, coeffs, rhs) -> np.ndarray:
        local_rows = np.asarray(local_rows, dtype=int)
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        base = self._ineq_count
        self._G_rows.append(local_rows + base)
        self._G_cols.append(np.asarray(indices, dtype=int))
        self._G_vals.append(np.asarray(coeffs, dtype=float))
        self._h.extend(rhs.tolist())
        self._ineq_count += rhs.shape[0]
        return np.arange(base, base + rhs.shape[0])

    def add_cone(self, t_index: int, u_indices) -> None:
        """x[t_index] >= || x[u_indices] ||."""
        self._cones.append((int(t_index), np.asarray(u_indices, dtype=int)))

    # -- objective ---------------------------------------------------------

    def add_linear_cost(self, indices, coeffs) -> None:
        indices = np.atleast_1d(np.asarray(indices, dtype=int))
        coeffs = np.broadcast_to(np.asarray(coeffs, dtype=float), indices.shape)
        self._q.append((indices, coeffs.copy()))

    def add_constant_cost(self, value: float) -> None:
        self._constant += float(value)

    def add_quadratic_diag(self, indices, coeffs) -> None:
        """Adds sum coeffs_i * x_i^2 (note: not halved)."""
        indices = np.atleast_1d(np.asarray(indices, dtype=int))
        coeffs = np.broadcast_to(np.asarray(coeffs, dtype=float), indices.shape)
        self._P_rows.append(indices)
        self._P_cols.append(indices)
        self._P_vals.append(2.0 * coeffs)

    def add_squared_affine(self, weight: float, indices, coeffs, const: float) -> None:
        """Adds weight * (sum coeffs*x[indices] + const)^2."""
        indices = np.atleast_1d(np.asarray(indices, dtype=int))
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        outer = 2.0 * weight * np.outer(coeffs, coeffs)
        grid_r, grid_c = np.meshgrid(indices, indices, indexing="ij")
        self._P_rows.append(grid_r.ravel())
        self._P_cols.append(grid_c.ravel())
        self._P_vals.append(outer.ravel())
        if const != 0.0:
            self._q.append((indices, 2.0 * weight * const * coeffs))
        self._constant += weight * const * const

    # -- assembly ----------------------------------------------------------

    def build(self) -> ConvexProgram:
        n = self._n
        for i, lo in self._lb:
            self.add_ineq([i], [-1.0], -lo)
        for i, up in self._ub:
            self.add_ineq([i], [1.0], up)
        self._lb, self._ub = [], []

        if self._P_rows:
            rows = np.concatenate(self._P_rows)
            cols = np.concatenate(self._P_cols)
            vals = np.concatenate(self._P_vals)
            P = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
            # contributions are symmetric; averaging removes float round-off
            P = (P + P.T) * 0.5
        else:
            P = sparse.csc_matrix((n, n))

        q = np.zeros(n)
        for idx, coeffs in self._q:
            np.add.at(q, idx, coeffs)

        if self._A_rows:
            A = sparse.csr_matrix(
                (np.concatenate(self._A_vals),
                 (np.concatenate(self._A_rows), np.concatenate(self._A_cols))),
                shape=(self._eq_count, n))
        else:
            A = sparse.csr_matrix((0, n))
        if self._G_rows:
            G = sparse.csr_matrix(
                (np.concatenate(self._G_vals),
                 (np.concatenate(self._G_rows), np.concatenate(self._G_cols))),
                shape=(self._ineq_count, n))
        else:
            G = sparse.csr_matrix((0, n))

        program = ConvexProgram(
            quadratic_term=P,
            linear_term=q,
            eq_matrix=A,
            eq_rhs=np.asarray(self._b, dtype=float),
            ineq_matrix=G,
            ineq_rhs=np.asarray(self._h, dtype=float),
            cone_blocks=list(self._cones),
            variable_names=dict(self._names),
            constant=self._constant,
            row_labels={k: np.asarray(v, dtype=int) for k, v in self._labels.items()},
        )
        program.validate()
        return program

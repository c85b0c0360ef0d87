"""Distribution-network side: branch-flow SOCP model and the DSO subproblem.

The radial feeder is modeled with line flows P, Q, squared currents,
and squared voltages; the quadratic current equality is relaxed to a
second-order cone written as ||(2P, 2Q, l - v)|| <= l + v through
auxiliary variables.  Stations and storages trade active power at their
buses (kW, converted to per unit at the injection boundary) and only
the slack bus exchanges with the utility, split into nonnegative buy
and sell streams so the no-arbitrage tariff keeps them exclusive.

Bus net consumption is ``base load - cluster exchange``: a station or
storage selling power lowers its bus's consumption.  The slack voltage
is pinned at 1 p.u. squared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import ConicSolution, ConvexProgram, ProgramBuilder
from .scenario import NetworkSpec, Scenario, Tariff, TimeGrid

__all__ = [
    "FlowState",
    "NetworkHandles",
    "add_network_block",
    "add_network_cost",
    "assemble_dso_subproblem",
    "decode_flow_state",
    "relaxation_gap",
    "dso_energy_cost",
    "check_network_feasibility",
]

FEASIBILITY_TOL = 1e-6
SLACK_VOLT_SQ = 1.0


@dataclass
class FlowState:
    """Network operating point; line/bus quantities in p.u., trades in kW."""

    line_p: np.ndarray                       # (L, T)
    line_q: np.ndarray                       # (L, T)
    current_sq: np.ndarray                   # (L, T)
    volt_sq: np.ndarray                      # (B, T)
    bus_p: np.ndarray                        # (B, T) net consumption
    bus_q: np.ndarray                        # (B, T)
    grid_buy: np.ndarray                     # (T,) kW from utility
    grid_sell: np.ndarray                    # (T,) kW to utility
    station_exchange: dict[str, np.ndarray]  # kW sold to the network
    storage_exchange: dict[str, np.ndarray]  # kW bought by the network


@dataclass
class NetworkHandles:
    """Variable indices of the network block inside a program."""

    line_p: np.ndarray
    line_q: np.ndarray
    current_sq: np.ndarray
    volt_sq: np.ndarray
    grid_buy: np.ndarray
    grid_sell: np.ndarray
    slack_reactive: np.ndarray
    station_exchange: dict[str, np.ndarray]
    storage_exchange: dict[str, np.ndarray]


def _topology(net: NetworkSpec):
    bus_pos = {b.bus_id: i for i, b in enumerate(net.buses)}
    children: dict[int, list[int]] = {b.bus_id: [] for b in net.buses}
    parent_line: dict[int, int] = {}
    for li, line in enumerate(net.lines):
        children[line.from_bus].append(li)
        parent_line[line.to_bus] = li
    return bus_pos, children, parent_line


def add_network_block(builder: ProgramBuilder, scenario: Scenario,
                      prefix: str = "") -> NetworkHandles:
    """Adds flow variables and all feeder constraints; returns the handles.

    Equality families are labelled ``{prefix}flow_p``, ``{prefix}flow_q``,
    ``{prefix}volt_drop`` (one row per line and slot, in line-major
    order) plus per-slot ``{prefix}slack_p`` / ``{prefix}slack_q``.
    """
    net = scenario.network
    grid = scenario.time
    T = grid.horizon_slots
    L = len(net.lines)
    B = len(net.buses)
    s_base = net.s_base
    bus_pos, children, parent_line = _topology(net)

    stations_at: dict[int, list[str]] = {}
    for st in scenario.stations:
        stations_at.setdefault(st.bus_id, []).append(st.station_id)
    storages_at: dict[int, list[str]] = {}
    for sto in scenario.storages:
        storages_at.setdefault(sto.bus_id, []).append(sto.storage_id)

    line_p = builder.add_vars(f"{prefix}line_p", (L, T))
    line_q = builder.add_vars(f"{prefix}line_q", (L, T))
    l_max = np.repeat([line.current_sq_max for line in net.lines], T)
    current = builder.add_vars(f"{prefix}current_sq", (L, T), upper=l_max)
    volt = builder.add_vars(f"{prefix}volt_sq", (B, T))
    grid_buy = builder.add_vars(f"{prefix}grid_buy", T, lower=0.0)
    grid_sell = builder.add_vars(f"{prefix}grid_sell", T, lower=0.0)
    slack_q = builder.add_vars(f"{prefix}slack_reactive", T)
    station_vars = {
        sid: builder.add_vars(f"{prefix}exchange_{sid}", T)
        for st in scenario.stations for sid in [st.station_id]
    }
    storage_vars = {
        stid: builder.add_vars(f"{prefix}exchange_{stid}", T)
        for sto in scenario.storages for stid in [sto.storage_id]
    }

    def cluster_terms(bus_id: int, t: int) -> tuple[list[int], list[float]]:
        idx, coef = [], []
        for sid in stations_at.get(bus_id, ()):
            idx.append(station_vars[sid][t])
            coef.append(1.0 / s_base)
        for stid in storages_at.get(bus_id, ()):
            idx.append(storage_vars[stid][t])
            coef.append(1.0 / s_base)
        return idx, coef

    # line flow balances and voltage drops
    for li, line in enumerate(net.lines):
        j = line.to_bus
        jb = bus_pos[j]
        base_p = np.asarray(net.buses[jb].base_load_p) / s_base
        base_q = np.asarray(net.buses[jb].base_load_q) / s_base
        child_lines = children[j]
        fb = bus_pos[line.from_bus]
        for t in range(T):
            cl_idx, cl_coef = cluster_terms(j, t)
            idx = [line_p[li, t], current[li, t]] \
                + [line_p[k, t] for k in child_lines] + cl_idx
            coef = [1.0, -line.resistance] + [-1.0] * len(child_lines) + cl_coef
            builder.add_eq(idx, coef, float(base_p[t]), label=f"{prefix}flow_p")
        for t in range(T):
            idx = [line_q[li, t], current[li, t]] \
                + [line_q[k, t] for k in child_lines]
            coef = [1.0, -line.reactance] + [-1.0] * len(child_lines)
            builder.add_eq(idx, coef, float(base_q[t]), label=f"{prefix}flow_q")
        rx_sq = line.resistance ** 2 + line.reactance ** 2
        for t in range(T):
            builder.add_eq(
                [volt[jb, t], volt[fb, t], line_p[li, t], line_q[li, t],
                 current[li, t]],
                [1.0, -1.0, 2.0 * line.resistance, 2.0 * line.reactance, -rx_sq],
                0.0, label=f"{prefix}volt_drop")

    # slack bus: fixed voltage, utility exchange closes both balances
    slack = net.slack_bus_id
    sb = bus_pos[slack]
    slack_base_p = np.asarray(net.buses[sb].base_load_p) / s_base
    slack_base_q = np.asarray(net.buses[sb].base_load_q) / s_base
    slack_children = children[slack]
    for t in range(T):
        builder.add_eq([volt[sb, t]], [1.0], SLACK_VOLT_SQ)
        cl_idx, cl_coef = cluster_terms(slack, t)
        idx = [line_p[k, t] for k in slack_children] \
            + [grid_buy[t], grid_sell[t]] + cl_idx
        coef = [1.0] * len(slack_children) \
            + [-1.0 / s_base, 1.0 / s_base] + [-c for c in cl_coef]
        builder.add_eq(idx, coef, -float(slack_base_p[t]), label=f"{prefix}slack_p")
        builder.add_eq(
            [line_q[k, t] for k in slack_children] + [slack_q[t]],
            [1.0] * len(slack_children) + [-1.0 / s_base],
            -float(slack_base_q[t]), label=f"{prefix}slack_q")

    # voltage boxes (slack pinned above), and bus power boxes where variable
    for bi, bus in enumerate(net.buses):
        if bus.bus_id == slack:
            continue
        lo, hi = bus.v_bounds
        for t in range(T):
            builder.add_ineq([volt[bi, t]], [-1.0], -lo)
            builder.add_ineq([volt[bi, t]], [1.0], hi)
    for bus in net.buses:
        has_cluster = bus.bus_id in stations_at or bus.bus_id in storages_at
        is_slack = bus.bus_id == slack
        if not has_cluster and not is_slack:
            continue  # fixed base load, verified at validation time
        base_p = np.asarray(bus.base_load_p) / s_base
        plo, phi = bus.p_bounds[0] / s_base, bus.p_bounds[1] / s_base
        for t in range(T):
            cl_idx, cl_coef = cluster_terms(bus.bus_id, t)
            idx, coef = list(cl_idx), [-c for c in cl_coef]
            if is_slack:
                idx += [grid_buy[t], grid_sell[t]]
                coef += [-1.0 / s_base, 1.0 / s_base]
            # consumption = base - cluster - utility within [plo, phi]
            builder.add_ineq(idx, coef, phi - float(base_p[t]))
            builder.add_ineq(idx, [-c for c in coef], float(base_p[t]) - plo)

    # second-order cone per line and slot via auxiliary variables
    aux = builder.add_vars(f"{prefix}cone_aux", (L, T, 4))
    for li, line in enumerate(net.lines):
        fb = bus_pos[line.from_bus]
        for t in range(T):
            s0, s1, s2, s3 = aux[li, t]
            builder.add_eq([s0, current[li, t], volt[fb, t]],
                           [1.0, -1.0, -1.0], 0.0)
            builder.add_eq([s1, line_p[li, t]], [1.0, -2.0], 0.0)
            builder.add_eq([s2, line_q[li, t]], [1.0, -2.0], 0.0)
            builder.add_eq([s3, current[li, t], volt[fb, t]],
                           [1.0, -1.0, 1.0], 0.0)
            builder.add_cone(s0, [s1, s2, s3])

    return NetworkHandles(
        line_p=line_p, line_q=line_q, current_sq=current, volt_sq=volt,
        grid_buy=grid_buy, grid_sell=grid_sell, slack_reactive=slack_q,
        station_exchange=station_vars, storage_exchange=storage_vars)


def add_network_cost(builder: ProgramBuilder, handles: NetworkHandles,
                     tariff: Tariff, grid: TimeGrid) -> None:
    """Utility exchange cost: buy at the wholesale price, sell at the floor."""
    dt = grid.slot_hours
    builder.add_linear_cost(handles.grid_buy,
                            dt * np.asarray(tariff.buy_price, dtype=float))
    builder.add_linear_cost(handles.grid_sell,
                            -dt * np.asarray(tariff.sell_price, dtype=float))


def assemble_dso_subproblem(
    scenario: Scenario,
    lambda_duals: dict[str, np.ndarray],
    mu_duals: dict[str, np.ndarray],
    anchor_demand: dict[str, np.ndarray],
    anchor_storage: dict[str, np.ndarray],
    anchor_storage_grid: dict[str, np.ndarray],
    beta: float,
) -> ConvexProgram:
    """Network operator's local coordination update at fixed anchors.

    Minimizes the utility exchange cost minus price-weighted station and
    storage trades plus quadratic penalties on the coupled balances,
    over the feeder feasibility set.  ``anchor_demand`` and
    ``anchor_storage`` carry fresh station-side predictions,
    ``anchor_storage_grid`` the storages' predicted grid trades.
    """
    if beta <= 0:
        raise ValueError("penalty beta must be positive")
    T = scenario.time.horizon_slots
    builder = ProgramBuilder()
    handles = add_network_block(builder, scenario)
    add_network_cost(builder, handles, scenario.tariff, scenario.time)
    for st in scenario.stations:
        sid = st.station_id
        exchange = handles.station_exchange[sid]
        builder.add_linear_cost(exchange, -np.asarray(lambda_duals[sid], dtype=float))
        pv = np.asarray(st.pv_profile, dtype=float)
        const = (np.asarray(anchor_demand[sid], dtype=float)
                 + np.asarray(anchor_storage[sid], dtype=float) - pv)
        for t in range(T):
            builder.add_squared_affine(0.5 * beta, [exchange[t]], [1.0],
                                       float(const[t]))
    for sto in scenario.storages:
        stid = sto.storage_id
        exchange = handles.storage_exchange[stid]
        builder.add_linear_cost(exchange, -np.asarray(mu_duals[stid], dtype=float))
        anchor = np.asarray(anchor_storage_grid[stid], dtype=float)
        for t in range(T):
            builder.add_squared_affine(0.5 * beta, [exchange[t]], [1.0],
                                       float(anchor[t]))
    return builder.build()


def decode_flow_state(program: ConvexProgram, solution: ConicSolution,
                      scenario: Scenario, prefix: str = "") -> FlowState:
    """Unpacks network variables into a FlowState with derived bus injections."""
    net = scenario.network
    grid = scenario.time
    T = grid.horizon_slots
    L = len(net.lines)
    B = len(net.buses)
    s_base = net.s_base
    x = solution.primal
    station_exchange = {
        st.station_id: program.unpack(x, f"{prefix}exchange_{st.station_id}").copy()
        for st in scenario.stations
    }
    storage_exchange = {
        sto.storage_id: program.unpack(x, f"{prefix}exchange_{sto.storage_id}").copy()
        for sto in scenario.storages
    }
    grid_buy = program.unpack(x, f"{prefix}grid_buy").copy()
    grid_sell = program.unpack(x, f"{prefix}grid_sell").copy()

    bus_p = np.zeros((B, T))
    bus_q = np.zeros((B, T))
    for bi, bus in enumerate(net.buses):
        bus_p[bi] = np.asarray(bus.base_load_p) / s_base
        bus_q[bi] = np.asarray(bus.base_load_q) / s_base
    for st in scenario.stations:
        bi = [b.bus_id for b in net.buses].index(st.bus_id)
        bus_p[bi] -= station_exchange[st.station_id] / s_base
    for sto in scenario.storages:
        bi = [b.bus_id for b in net.buses].index(sto.bus_id)
        bus_p[bi] -= storage_exchange[sto.storage_id] / s_base
    sb = [b.bus_id for b in net.buses].index(net.slack_bus_id)
    bus_p[sb] -= (grid_buy - grid_sell) / s_base
    bus_q[sb] -= program.unpack(x, f"{prefix}slack_reactive") / s_base

    return FlowState(
        line_p=program.unpack(x, f"{prefix}line_p").reshape(L, T).copy(),
        line_q=program.unpack(x, f"{prefix}line_q").reshape(L, T).copy(),
        current_sq=program.unpack(x, f"{prefix}current_sq").reshape(L, T).copy(),
        volt_sq=program.unpack(x, f"{prefix}volt_sq").reshape(B, T).copy(),
        bus_p=bus_p,
        bus_q=bus_q,
        grid_buy=grid_buy,
        grid_sell=grid_sell,
        station_exchange=station_exchange,
        storage_exchange=storage_exchange,
    )


def relaxation_gap(fs: FlowState, net: NetworkSpec) -> tuple[float, np.ndarray]:
    """Cone slack l - (P^2 + Q^2)/v_from per line and slot, and its maximum."""
    bus_pos = {b.bus_id: i for i, b in enumerate(net.buses)}
    gaps = np.empty_like(fs.current_sq)
    for li, line in enumerate(net.lines):
        v_from = fs.volt_sq[bus_pos[line.from_bus]]
        gaps[li] = fs.current_sq[li] - (fs.line_p[li] ** 2 + fs.line_q[li] ** 2) / v_from
    return float(gaps.max()), gaps


def dso_energy_cost(grid_buy: np.ndarray, grid_sell: np.ndarray,
                    tariff: Tariff, grid: TimeGrid) -> float:
    """Utility exchange cost in dollars."""
    dt = grid.slot_hours
    buy = np.asarray(grid_buy, dtype=float)
    sell = np.asarray(grid_sell, dtype=float)
    return dt * float(buy @ np.asarray(tariff.buy_price)
                      - sell @ np.asarray(tariff.sell_price))


def check_network_feasibility(fs: FlowState, scenario: Scenario,
                              storage_net_from_grid: dict[str, np.ndarray] | None = None,
                              ) -> list[str]:
    """All feeder-constraint violations at 1e-6 p.u.; empty when feasible.

    Verifies the flow balances, voltage drops, relaxed cone, every box
    bound, the cluster exchange balance at trading buses, and, when
    ``storage_net_from_grid`` is supplied, that each storage's network
    trade cancels its own grid trade.
    """
    tol = FEASIBILITY_TOL
    net = scenario.network
    s_base = net.s_base
    bus_pos, children, _ = _topology(net)
    out = []

    def worst(arr) -> float:
        return float(np.max(arr)) if np.size(arr) else 0.0

    for li, line in enumerate(net.lines):
        jb = bus_pos[line.to_bus]
        residual = fs.line_p[li] - line.resistance * fs.current_sq[li] \
            - sum(fs.line_p[k] for k in children[line.to_bus]) - fs.bus_p[jb]
        if worst(np.abs(residual)) > tol:
            out.append(f"active flow balance: line ({line.from_bus},{line.to_bus})")
        residual = fs.line_q[li] - line.reactance * fs.current_sq[li] \
            - sum(fs.line_q[k] for k in children[line.to_bus]) - fs.bus_q[jb]
        if worst(np.abs(residual)) > tol:
            out.append(f"reactive flow balance: line ({line.from_bus},{line.to_bus})")
        fb = bus_pos[line.from_bus]
        rx_sq = line.resistance ** 2 + line.reactance ** 2
        residual = fs.volt_sq[jb] - fs.volt_sq[fb] \
            + 2 * (line.resistance * fs.line_p[li] + line.reactance * fs.line_q[li]) \
            - rx_sq * fs.current_sq[li]
        if worst(np.abs(residual)) > tol:
            out.append(f"voltage drop: line ({line.from_bus},{line.to_bus})")
        cone = (fs.line_p[li] ** 2 + fs.line_q[li] ** 2) / fs.volt_sq[fb] \
            - fs.current_sq[li]
        if worst(cone) > tol:
            out.append(f"cone feasibility: line ({line.from_bus},{line.to_bus})")
        if worst(fs.current_sq[li] - line.current_sq_max) > tol \
                or worst(-fs.current_sq[li]) > tol:
            out.append(f"current bound: line ({line.from_bus},{line.to_bus})")

    sb = bus_pos[net.slack_bus_id]
    root_balance = sum(fs.line_p[k] for k in children[net.slack_bus_id]) \
        + fs.bus_p[sb]
    if worst(np.abs(root_balance)) > tol:
        out.append("active flow balance: slack bus")
    root_q = sum(fs.line_q[k] for k in children[net.slack_bus_id]) + fs.bus_q[sb]
    if worst(np.abs(root_q)) > tol:
        out.append("reactive flow balance: slack bus")
    if worst(np.abs(fs.volt_sq[sb] - SLACK_VOLT_SQ)) > tol:
        out.append("slack voltage pin: not at nominal")

    for bi, bus in enumerate(net.buses):
        if bus.bus_id == net.slack_bus_id:
            continue
        lo, hi = bus.v_bounds
        if worst(lo - fs.volt_sq[bi]) > tol or worst(fs.volt_sq[bi] - hi) > tol:
            out.append(f"voltage bounds: bus {bus.bus_id}")
    for bi, bus in enumerate(net.buses):
        plo, phi = bus.p_bounds[0] / s_base, bus.p_bounds[1] / s_base
        if worst(plo - fs.bus_p[bi]) > tol or worst(fs.bus_p[bi] - phi) > tol:
            out.append(f"bus power bounds: bus {bus.bus_id}")

    if worst(-fs.grid_buy) > tol * s_base or worst(-fs.grid_sell) > tol * s_base:
        out.append("utility exchange: negative buy or sell")

    # cluster exchange balance: consumption net of base load equals the
    # negated sum of station and storage trades at each trading bus
    expected = np.zeros_like(fs.bus_p)
    for bi, bus in enumerate(net.buses):
        expected[bi] = np.asarray(bus.base_load_p) / s_base
    for st in scenario.stations:
        expected[bus_pos[st.bus_id]] -= fs.station_exchange[st.station_id] / s_base
    for sto in scenario.storages:
        expected[bus_pos[sto.bus_id]] -= fs.storage_exchange[sto.storage_id] / s_base
    expected[sb] -= (fs.grid_buy - fs.grid_sell) / s_base
    mismatch = np.abs(expected - fs.bus_p)
    if worst(mismatch) > tol:
        bad = np.argwhere(mismatch > tol)
        out.append(f"cluster exchange balance: bus index {bad[0][0]}")

    if storage_net_from_grid is not None:
        for stid, net_from_grid in storage_net_from_grid.items():
            residual = (fs.storage_exchange[stid] + np.asarray(net_from_grid)) / s_base
            if worst(np.abs(residual)) > tol:
                out.append(f"storage grid link: {stid}")
    return out

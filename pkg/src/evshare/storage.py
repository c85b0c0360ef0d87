"""Shared-storage side: degradation cost, state of charge, subproblem.

Sign convention: a positive net station flow means power moves from the
station into the storage, and a positive net grid flow means the grid
charges the storage.  The state of charge is tracked at slot starts
with one trailing entry for the end of the horizon; the cyclic option
pins that trailing entry back to the initial level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import ConicSolution, ConvexProgram, ProgramBuilder
from .scenario import StorageSpec, TimeGrid

__all__ = [
    "StorageSchedule",
    "degradation_cost",
    "simulate_soc",
    "check_storage_feasibility",
    "StorageHandles",
    "add_storage_block",
    "assemble_seso_subproblem",
    "decode_seso_solution",
]

FEASIBILITY_TOL = 1e-6


@dataclass
class StorageSchedule:
    """Storage dispatch split into nonnegative charge/discharge components."""

    station_ids: tuple[str, ...]
    to_station_charge: np.ndarray      # (n_stations, T) kW, station -> storage
    to_station_discharge: np.ndarray   # (n_stations, T) kW, storage -> station
    grid_charge: np.ndarray            # (T,) kW, grid -> storage
    grid_discharge: np.ndarray         # (T,) kW, storage -> grid
    net_from_station: np.ndarray       # (n_stations, T) charge - discharge
    net_from_grid: np.ndarray          # (T,) grid_charge - grid_discharge
    soc: np.ndarray                    # (T+1,) kWh at slot starts

    @classmethod
    def zeros(cls, station_ids: tuple[str, ...], spec: StorageSpec,
              grid: TimeGrid) -> "StorageSchedule":
        n, T = len(station_ids), grid.horizon_slots
        return cls(
            station_ids=station_ids,
            to_station_charge=np.zeros((n, T)),
            to_station_discharge=np.zeros((n, T)),
            grid_charge=np.zeros(T),
            grid_discharge=np.zeros(T),
            net_from_station=np.zeros((n, T)),
            net_from_grid=np.zeros(T),
            soc=np.full(T + 1, spec.initial_energy),
        )


def degradation_cost(schedule: StorageSchedule, spec: StorageSpec,
                     grid: TimeGrid) -> float:
    """Throughput-proportional degradation in dollars."""
    throughput = (schedule.to_station_charge.sum()
                  + schedule.to_station_discharge.sum()
                  + schedule.grid_charge.sum()
                  + schedule.grid_discharge.sum())
    return spec.degradation_coeff * throughput * grid.slot_hours


def simulate_soc(schedule: StorageSchedule, spec: StorageSpec,
                 grid: TimeGrid) -> np.ndarray:
    """State of charge (T+1 entries) from the storage energy recurrence."""
    dt = grid.slot_hours
    charge = schedule.to_station_charge.sum(axis=0) + schedule.grid_charge
    discharge = schedule.to_station_discharge.sum(axis=0) + schedule.grid_discharge
    soc = np.empty(grid.horizon_slots + 1)
    soc[0] = spec.initial_energy
    for t in range(grid.horizon_slots):
        soc[t + 1] = soc[t] + charge[t] * dt * spec.eff_charge \
            - discharge[t] * dt / spec.eff_discharge
    return soc


def check_storage_feasibility(schedule: StorageSchedule, spec: StorageSpec,
                              grid: TimeGrid,
                              enforce_cyclic: bool | None = None) -> list[str]:
    """All storage-constraint violations; empty when the dispatch is feasible.

    ``enforce_cyclic`` overrides the spec's own cyclic flag when given.
    """
    tol = FEASIBILITY_TOL
    cyclic = spec.cyclic_soc if enforce_cyclic is None else enforce_cyclic
    out = []
    for name, arr in (("station charge", schedule.to_station_charge),
                      ("station discharge", schedule.to_station_discharge),
                      ("grid charge", schedule.grid_charge),
                      ("grid discharge", schedule.grid_discharge)):
        if np.any(np.asarray(arr) < -tol):
            out.append(f"component nonnegativity: negative {name} power")
    discharge_total = schedule.to_station_discharge.sum(axis=0) + schedule.grid_discharge
    if np.any(discharge_total > spec.power_discharge_max + tol):
        out.append("aggregate discharge cap: total discharge exceeds limit")
    charge_total = schedule.to_station_charge.sum(axis=0) + schedule.grid_charge
    if np.any(charge_total > spec.power_charge_max + tol):
        out.append("aggregate charge cap: total charge exceeds limit")
    net_st = schedule.to_station_charge - schedule.to_station_discharge
    if np.max(np.abs(net_st - schedule.net_from_station), initial=0.0) > tol:
        out.append("net station flow identity: net != charge - discharge")
    net_g = schedule.grid_charge - schedule.grid_discharge
    if np.max(np.abs(net_g - schedule.net_from_grid)) > tol:
        out.append("net grid flow identity: net != charge - discharge")
    soc = simulate_soc(schedule, spec, grid)
    if np.max(np.abs(soc - schedule.soc)) > tol:
        out.append("soc recurrence: stored trajectory inconsistent with flows")
    if np.any(soc < spec.energy_min - tol) or np.any(soc > spec.energy_max + tol):
        out.append("soc bounds: trajectory outside [energy_min, energy_max]")
    if abs(soc[0] - spec.initial_energy) > tol:
        out.append("initial soc: trajectory does not start at initial_energy")
    if cyclic and abs(soc[-1] - soc[0]) > tol:
        out.append("cyclic soc: end-of-horizon level differs from initial")
    return out


# ---------------------------------------------------------------------------
# subproblem assembly


@dataclass
class StorageHandles:
    """Variable indices of one storage block inside a program."""

    station_ids: tuple[str, ...]
    st_charge: np.ndarray      # (n, T) indices
    st_discharge: np.ndarray   # (n, T)
    grid_charge: np.ndarray | None      # (T,) or None without grid trade
    grid_discharge: np.ndarray | None
    soc: np.ndarray            # (T+1,)


def add_storage_block(builder: ProgramBuilder, spec: StorageSpec, grid: TimeGrid,
                      station_ids: tuple[str, ...], include_grid_trade: bool = True,
                      cyclic: bool | None = None, prefix: str = "") -> StorageHandles:
    """Adds storage variables and physical constraints; returns the handles."""
    T = grid.horizon_slots
    dt = grid.slot_hours
    n = len(station_ids)
    cyclic = spec.cyclic_soc if cyclic is None else cyclic
    st_charge = builder.add_vars(f"{prefix}st_charge", (n, T), lower=0.0)
    st_discharge = builder.add_vars(f"{prefix}st_discharge", (n, T), lower=0.0)
    if include_grid_trade:
        grid_charge = builder.add_vars(f"{prefix}grid_charge", T, lower=0.0)
        grid_discharge = builder.add_vars(f"{prefix}grid_discharge", T, lower=0.0)
    else:
        grid_charge = grid_discharge = None
    soc = builder.add_vars(f"{prefix}soc", T + 1)

    for t in range(T):
        dis_idx = list(st_discharge[:, t])
        ch_idx = list(st_charge[:, t])
        if include_grid_trade:
            dis_idx.append(grid_discharge[t])
            ch_idx.append(grid_charge[t])
        builder.add_ineq(dis_idx, np.ones(len(dis_idx)), spec.power_discharge_max)
        builder.add_ineq(ch_idx, np.ones(len(ch_idx)), spec.power_charge_max)
        row_idx = [soc[t + 1], soc[t]] + dis_idx + ch_idx
        row_coef = [1.0, -1.0] + [dt / spec.eff_discharge] * len(dis_idx) \
            + [-dt * spec.eff_charge] * len(ch_idx)
        builder.add_eq(row_idx, row_coef, 0.0)

    builder.add_eq([soc[0]], [1.0], spec.initial_energy)
    if cyclic:
        builder.add_eq([soc[T]], [1.0], spec.initial_energy)
    last_bounded = T if not cyclic else T - 1
    for t in range(1, last_bounded + 1):
        builder.add_ineq([soc[t]], [-1.0], -spec.energy_min)
        builder.add_ineq([soc[t]], [1.0], spec.energy_max)
    return StorageHandles(
        station_ids=station_ids, st_charge=st_charge, st_discharge=st_discharge,
        grid_charge=grid_charge, grid_discharge=grid_discharge, soc=soc)


def add_storage_net_vars(builder: ProgramBuilder, handles: StorageHandles,
                         grid: TimeGrid, prefix: str = ""
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Explicit net-flow variables tied to the charge/discharge split.

    Used where coupling rows need the nets as first-class variables so
    their duals can be read off (the centralized pricing program)."""
    T = grid.horizon_slots
    n = len(handles.station_ids)
    net_station = builder.add_vars(f"{prefix}net_station", (n, T))
    for k in range(n):
        for t in range(T):
            builder.add_eq(
                [net_station[k, t], handles.st_charge[k, t],
                 handles.st_discharge[k, t]],
                [1.0, -1.0, 1.0], 0.0)
    net_grid = builder.add_vars(f"{prefix}net_grid", T)
    for t in range(T):
        builder.add_eq(
            [net_grid[t], handles.grid_charge[t], handles.grid_discharge[t]],
            [1.0, -1.0, 1.0], 0.0)
    return net_station, net_grid


def add_storage_cost(builder: ProgramBuilder, handles: StorageHandles,
                     spec: StorageSpec, grid: TimeGrid) -> None:
    """Adds the throughput degradation cost over all components."""
    dep = spec.degradation_coeff * grid.slot_hours
    if dep <= 0.0:
        return
    builder.add_linear_cost(handles.st_charge.ravel(), dep)
    builder.add_linear_cost(handles.st_discharge.ravel(), dep)
    if handles.grid_charge is not None:
        builder.add_linear_cost(handles.grid_charge, dep)
        builder.add_linear_cost(handles.grid_discharge, dep)


def assemble_seso_subproblem(
    spec: StorageSpec,
    grid: TimeGrid,
    pv_by_station: dict[str, np.ndarray],
    lambda_duals: dict[str, np.ndarray],
    mu_dual: np.ndarray,
    anchor_demand: dict[str, np.ndarray],
    anchor_station_grid: dict[str, np.ndarray],
    anchor_grid_from_storage: np.ndarray,
    beta: float,
) -> ConvexProgram:
    """Storage operator's local coordination update at fixed anchors.

    Minimizes degradation minus price-weighted station and grid trades
    plus quadratic penalties on every coupled balance, over the storage
    feasibility set.  ``anchor_demand`` carries the stations' freshly
    predicted demands, the other anchors the current trade iterates.
    """
    if beta <= 0:
        raise ValueError("penalty beta must be positive")
    T = grid.horizon_slots
    station_ids = spec.connected_stations
    builder = ProgramBuilder()
    handles = add_storage_block(builder, spec, grid, station_ids,
                                include_grid_trade=True)
    add_storage_cost(builder, handles, spec, grid)
    for k, sid in enumerate(station_ids):
        lam = np.asarray(lambda_duals[sid], dtype=float)
        # trade income: -lambda * (charge - discharge)
        builder.add_linear_cost(handles.st_charge[k], -lam)
        builder.add_linear_cost(handles.st_discharge[k], lam)
        pv = np.asarray(pv_by_station[sid], dtype=float)
        residual_anchor = (np.asarray(anchor_demand[sid], dtype=float)
                           + np.asarray(anchor_station_grid[sid], dtype=float) - pv)
        for t in range(T):
            builder.add_squared_affine(
                0.5 * beta,
                [handles.st_charge[k, t], handles.st_discharge[k, t]],
                [1.0, -1.0], float(residual_anchor[t]))
    mu = np.asarray(mu_dual, dtype=float)
    builder.add_linear_cost(handles.grid_charge, -mu)
    builder.add_linear_cost(handles.grid_discharge, mu)
    for t in range(T):
        builder.add_squared_affine(
            0.5 * beta,
            [handles.grid_charge[t], handles.grid_discharge[t]],
            [1.0, -1.0], float(anchor_grid_from_storage[t]))
    return builder.build()


def decode_storage_handles(x: np.ndarray, program: ConvexProgram,
                           spec: StorageSpec, grid: TimeGrid,
                           station_ids: tuple[str, ...],
                           prefix: str = "") -> StorageSchedule:
    """Unpack storage variables (with or without grid trade) into a schedule."""
    T = grid.horizon_slots
    n = len(station_ids)
    st_charge = program.unpack(x, f"{prefix}st_charge").reshape(n, T)
    st_discharge = program.unpack(x, f"{prefix}st_discharge").reshape(n, T)
    names = program.variable_names
    if f"{prefix}grid_charge" in names:
        grid_charge = program.unpack(x, f"{prefix}grid_charge").copy()
        grid_discharge = program.unpack(x, f"{prefix}grid_discharge").copy()
    else:
        grid_charge = np.zeros(T)
        grid_discharge = np.zeros(T)
    return StorageSchedule(
        station_ids=station_ids,
        to_station_charge=st_charge,
        to_station_discharge=st_discharge,
        grid_charge=grid_charge,
        grid_discharge=grid_discharge,
        net_from_station=st_charge - st_discharge,
        net_from_grid=grid_charge - grid_discharge,
        soc=program.unpack(x, f"{prefix}soc").copy(),
    )


def decode_seso_solution(program: ConvexProgram, solution: ConicSolution,
                         spec: StorageSpec, grid: TimeGrid) -> StorageSchedule:
    return decode_storage_handles(solution.primal, program, spec, grid,
                                  spec.connected_stations)

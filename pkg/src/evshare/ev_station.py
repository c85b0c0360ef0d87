"""Charging-station side: CASAP baselines, fleet feasibility, cost, subproblem.

Schedules hold full-horizon arrays; an EV's charge and discharge are
zero outside its availability window and its battery energy is tracked
at slot starts, with one extra trailing entry for the end of horizon.
The deviation cost weighs per-slot energy against the
charge-as-soon-as-possible (CASAP) reference profile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import ConicSolution, ConvexProgram, ProgramBuilder
from .scenario import EvTask, StationSpec, TimeGrid, min_slots_for_charge

__all__ = [
    "EvSchedule",
    "StationState",
    "min_charge_time",
    "casap_profile",
    "casap_station_cost",
    "simulate_ev_energy",
    "check_ev_feasibility",
    "station_cost",
    "aggregate_demand",
    "FleetHandles",
    "add_fleet_block",
    "add_fleet_cost",
    "assemble_cso_subproblem",
    "decode_cso_solution",
]

FEASIBILITY_TOL = 1e-6


@dataclass
class EvSchedule:
    """One EV's dispatch: powers in kW per slot, energy in kWh at slot starts."""

    charge_power: np.ndarray     # (T,)
    discharge_power: np.ndarray  # (T,)
    net_power: np.ndarray        # (T,), charge - discharge
    energy: np.ndarray           # (T+1,)


@dataclass
class StationState:
    """Station-level aggregates per slot (kW)."""

    demand: np.ndarray      # total fleet net charging power
    to_grid: np.ndarray     # power sold to the network
    to_storage: np.ndarray  # power sent to the shared storage


def min_charge_time(task: EvTask) -> float:
    """Hours of full-power charging needed to lift initial to required energy."""
    charge = task.required_energy - task.initial_energy
    if charge <= 0.0:
        return 0.0
    return charge / (task.power_max * task.eff_charge)


def casap_profile(task: EvTask, grid: TimeGrid) -> np.ndarray:
    """Charge-as-soon-as-possible power profile (kW per slot).

    Full power from arrival, one partial remainder slot, zero after; the
    profile lands exactly on the required energy through the charging
    recurrence.  Raises ValueError when it cannot fit before departure.
    """
    profile = np.zeros(grid.horizon_slots)
    full, remainder = min_slots_for_charge(task, grid.slot_hours)
    used = full + (1 if remainder > 0.0 else 0)
    if task.arrival_slot + used > task.departure_slot:
        raise ValueError(
            f"CASAP profile infeasible: needs {used} slots from arrival "
            f"{task.arrival_slot}, departure {task.departure_slot}")
    profile[task.arrival_slot:task.arrival_slot + full] = task.power_max
    if remainder > 0.0:
        profile[task.arrival_slot + full] = remainder
    return profile


def casap_station_cost(station: StationSpec, grid: TimeGrid) -> float:
    """Fleet cost when every EV follows CASAP: pure charging depreciation."""
    total = 0.0
    for task in station.fleet:
        charge = max(task.required_energy - task.initial_energy, 0.0)
        total += task.depreciation_coeff * charge / task.eff_charge
    return total


def simulate_ev_energy(charge_power: np.ndarray, discharge_power: np.ndarray,
                       task: EvTask, grid: TimeGrid) -> np.ndarray:
    """Battery energy trajectory (T+1 entries) under the charging recurrence."""
    dt = grid.slot_hours
    energy = np.empty(grid.horizon_slots + 1)
    energy[0] = task.initial_energy
    for t in range(grid.horizon_slots):
        energy[t + 1] = (energy[t]
                         + charge_power[t] * dt * task.eff_charge
                         - discharge_power[t] * dt / task.eff_discharge)
    return energy


def check_ev_feasibility(schedule: EvSchedule, task: EvTask,
                         grid: TimeGrid) -> list[str]:
    """All charging-constraint violations, empty when the schedule is feasible.

    Checks power bounds and availability, the net-power identity, the
    energy recurrence against the stored trajectory, energy bounds, and
    the arrival/departure boundary energies, all at 1e-6 kW / kWh.
    """
    tol = FEASIBILITY_TOL
    T = grid.horizon_slots
    out = []
    window = np.zeros(T, dtype=bool)
    window[task.arrival_slot:task.departure_slot] = True

    if np.any(schedule.charge_power < -tol) or \
            np.any(schedule.charge_power[window] > task.power_max + tol):
        out.append("charge power bound: outside [0, power_max]")
    if np.any(schedule.discharge_power < -tol) or \
            np.any(schedule.discharge_power[window] > task.power_max + tol):
        out.append("discharge power bound: outside [0, power_max]")
    if np.max(np.abs(schedule.net_power
                     - (schedule.charge_power - schedule.discharge_power))) > tol:
        out.append("net power identity: net != charge - discharge")
    off = ~window
    if np.any(np.abs(schedule.charge_power[off]) > tol) or \
            np.any(np.abs(schedule.discharge_power[off]) > tol):
        out.append("availability window: nonzero power outside [arrival, departure)")
    simulated = simulate_ev_energy(schedule.charge_power, schedule.discharge_power,
                                   task, grid)
    if np.max(np.abs(simulated - schedule.energy)) > tol:
        out.append("energy recurrence: stored trajectory inconsistent with flows")
    if np.any(schedule.energy < task.energy_min - tol) or \
            np.any(schedule.energy > task.energy_max + tol):
        out.append("energy bounds: trajectory outside [energy_min, energy_max]")
    if abs(schedule.energy[task.arrival_slot] - task.initial_energy) > tol:
        out.append("arrival energy: energy at arrival != initial_energy")
    if abs(schedule.energy[task.departure_slot] - task.required_energy) > tol:
        out.append("departure energy: energy at departure != required_energy")
    return out


def station_cost(schedules: list[EvSchedule], tasks: list[EvTask],
                 grid: TimeGrid) -> float:
    """Fleet inconvenience-plus-depreciation cost in dollars.

    Per EV and slot: inconvenience_coeff * (net kWh - CASAP kWh)^2 plus
    depreciation_coeff * (charge + discharge) kWh.
    """
    dt = grid.slot_hours
    total = 0.0
    for schedule, task in zip(schedules, tasks):
        reference = casap_profile(task, grid)
        deviation = (schedule.net_power - reference) * dt
        total += task.inconvenience_coeff * float(deviation @ deviation)
        throughput = (schedule.charge_power + schedule.discharge_power).sum() * dt
        total += task.depreciation_coeff * throughput
    return total


def aggregate_demand(schedules: list[EvSchedule]) -> np.ndarray:
    """Station demand: elementwise sum of fleet net power."""
    if not schedules:
        return np.zeros(0)
    out = np.zeros_like(schedules[0].net_power)
    for schedule in schedules:
        out += schedule.net_power
    return out


# ---------------------------------------------------------------------------
# subproblem assembly


@dataclass
class FleetHandles:
    """Variable indices of one station's fleet block inside a program."""

    demand: np.ndarray                       # (T,) demand variable indices
    charge: list[np.ndarray]                 # per EV, window-length indices
    discharge: list[np.ndarray]
    energy: list[np.ndarray]                 # per EV, window-length + 1
    references: list[np.ndarray]             # per EV CASAP profile (T,)


def add_fleet_block(builder: ProgramBuilder, station: StationSpec,
                    grid: TimeGrid, prefix: str = "") -> FleetHandles:
    """Adds fleet variables and charging constraints; returns the handles.

    Charge/discharge variables exist only inside each EV's window; the
    energy chain carries both window endpoints, pinned to the initial
    and required energies.  A length-T demand variable aggregates fleet
    net power through equality rows labelled ``{prefix}aggregate``.
    """
    T = grid.horizon_slots
    dt = grid.slot_hours
    demand = builder.add_vars(f"{prefix}demand", T)
    handles = FleetHandles(demand=demand, charge=[], discharge=[], energy=[],
                           references=[])
    per_slot: list[list[tuple[int, float]]] = [[] for _ in range(T)]
    for v, task in enumerate(station.fleet):
        w = task.departure_slot - task.arrival_slot
        charge = builder.add_vars(f"{prefix}ev{v}_charge", w,
                                  lower=0.0, upper=task.power_max)
        discharge = builder.add_vars(f"{prefix}ev{v}_discharge", w,
                                     lower=0.0, upper=task.power_max)
        energy = builder.add_vars(f"{prefix}ev{v}_energy", w + 1)
        builder.add_eq([energy[0]], [1.0], task.initial_energy)
        for j in range(w):
            builder.add_eq(
                [energy[j + 1], energy[j], charge[j], discharge[j]],
                [1.0, -1.0, -dt * task.eff_charge, dt / task.eff_discharge],
                0.0)
        builder.add_eq([energy[w]], [1.0], task.required_energy)
        for j in range(1, w):
            builder.add_ineq([energy[j]], [-1.0], -task.energy_min)
            builder.add_ineq([energy[j]], [1.0], task.energy_max)
        for j in range(w):
            t = task.arrival_slot + j
            per_slot[t].append((charge[j], 1.0))
            per_slot[t].append((discharge[j], -1.0))
        handles.charge.append(charge)
        handles.discharge.append(discharge)
        handles.energy.append(energy)
        handles.references.append(casap_profile(task, grid))
    for t in range(T):
        idx = [demand[t]] + [i for i, _ in per_slot[t]]
        coef = [1.0] + [-c for _, c in per_slot[t]]
        builder.add_eq(idx, coef, 0.0, label=f"{prefix}aggregate")
    return handles


def add_fleet_cost(builder: ProgramBuilder, handles: FleetHandles,
                   station: StationSpec, grid: TimeGrid) -> None:
    """Adds the fleet deviation and depreciation cost terms."""
    dt = grid.slot_hours
    for v, task in enumerate(station.fleet):
        reference = handles.references[v]
        charge = handles.charge[v]
        discharge = handles.discharge[v]
        weight = task.inconvenience_coeff * dt * dt
        if weight > 0.0:
            for j in range(charge.shape[0]):
                t = task.arrival_slot + j
                builder.add_squared_affine(
                    weight, [charge[j], discharge[j]], [1.0, -1.0],
                    -reference[t])
        dep = task.depreciation_coeff * dt
        if dep > 0.0:
            builder.add_linear_cost(charge, dep)
            builder.add_linear_cost(discharge, dep)


def assemble_cso_subproblem(station: StationSpec, grid: TimeGrid,
                            price_duals: np.ndarray,
                            anchor_to_grid: np.ndarray,
                            anchor_to_storage: np.ndarray,
                            beta: float) -> ConvexProgram:
    """Station's local coordination update at fixed anchors.

    Minimizes fleet cost minus the price-weighted demand plus the
    quadratic penalty on the station power-balance residual, over the
    charging feasibility set.  Anchors are the current grid/storage
    trade iterates; the penalty constant keeps objective values exact.
    """
    if beta <= 0:
        raise ValueError("penalty beta must be positive")
    T = grid.horizon_slots
    pv = np.asarray(station.pv_profile, dtype=float)
    builder = ProgramBuilder()
    handles = add_fleet_block(builder, station, grid)
    add_fleet_cost(builder, handles, station, grid)
    builder.add_linear_cost(handles.demand, -np.asarray(price_duals, dtype=float))
    for t in range(T):
        builder.add_squared_affine(
            0.5 * beta, [handles.demand[t]], [1.0],
            float(anchor_to_grid[t] + anchor_to_storage[t] - pv[t]))
    return builder.build()


def decode_fleet_handles(x: np.ndarray, program: ConvexProgram,
                         station: StationSpec, grid: TimeGrid,
                         prefix: str = "") -> tuple[list[EvSchedule], np.ndarray]:
    """Unpacks a fleet block into full-horizon schedules and the demand."""
    T = grid.horizon_slots
    schedules = []
    for v, task in enumerate(station.fleet):
        charge = np.zeros(T)
        discharge = np.zeros(T)
        window = slice(task.arrival_slot, task.departure_slot)
        charge[window] = program.unpack(x, f"{prefix}ev{v}_charge")
        discharge[window] = program.unpack(x, f"{prefix}ev{v}_discharge")
        energy = np.empty(T + 1)
        energy[:task.arrival_slot + 1] = task.initial_energy
        energy[task.arrival_slot:task.departure_slot + 1] = \
            program.unpack(x, f"{prefix}ev{v}_energy")
        energy[task.departure_slot:] = energy[task.departure_slot]
        schedules.append(EvSchedule(
            charge_power=charge,
            discharge_power=discharge,
            net_power=charge - discharge,
            energy=energy,
        ))
    return schedules, program.unpack(x, f"{prefix}demand").copy()


def decode_cso_solution(program: ConvexProgram, solution: ConicSolution,
                        station: StationSpec, grid: TimeGrid
                        ) -> tuple[list[EvSchedule], np.ndarray]:
    """Unpacks a solved station subproblem into schedules and the demand."""
    return decode_fleet_handles(solution.primal, program, station, grid)

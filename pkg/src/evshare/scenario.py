"""Problem-instance data model: loading, validation, and fleet synthesis.

A scenario bundles the time grid, the radial network, the charging
stations with their EV fleets and PV profiles, the shared storages, and
the utility tariff.  Instances are immutable after construction and safe
to share across workers.

Conventions: slot indices are 0-based; an EV may charge or discharge in
slots ``arrival_slot .. departure_slot - 1`` and its battery energy is
measured at slot starts, so the departure requirement applies at the
start of ``departure_slot`` (equivalently the end of the last active
slot).  Network quantities that describe buses are in kW/kvar, line
parameters in per unit on ``s_base``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

__all__ = [
    "TimeGrid",
    "EvTask",
    "StationSpec",
    "StorageSpec",
    "BusSpec",
    "LineSpec",
    "NetworkSpec",
    "Tariff",
    "Scenario",
    "ValidationIssue",
    "ScenarioError",
    "SchemaError",
    "InvariantError",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "validate_scenario",
    "synthesize_fleet",
    "min_slots_for_charge",
]

SCHEMA_VERSION = 1

EV_BATTERY_KWH = 60.0          # Tesla Model 3 class battery
EV_POWER_MAX_KW = 6.6
EV_EFFICIENCY = 0.95
EV_INCONVENIENCE = 1e-4        # $/kWh^2 deviation weight
EV_DEPRECIATION = 0.01         # $/kWh throughput

FLEET_PATTERNS = ("residential", "workplace", "leisure")


class ScenarioError(Exception):
    """Base class for scenario construction problems."""


class SchemaError(ScenarioError):
    """Structural problem in a scenario file (missing or mistyped field)."""


class InvariantError(ScenarioError):
    """Well-formed file whose content violates model invariants."""

    def __init__(self, issues: list["ValidationIssue"]):
        self.issues = issues
        super().__init__("; ".join(str(i) for i in issues))


@dataclass(frozen=True)
class ValidationIssue:
    entity: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.message}"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform dispatch grid of ``horizon_slots`` slots of ``slot_hours`` hours."""

    horizon_slots: int
    slot_hours: float = 1.0


@dataclass(frozen=True)
class EvTask:
    """One EV charging request.

    Energies in kWh, powers in kW.  ``inconvenience_coeff`` weighs the
    squared per-slot energy deviation from the charge-as-soon-as-possible
    profile; ``depreciation_coeff`` prices charge/discharge throughput.
    """

    arrival_slot: int
    departure_slot: int
    initial_energy: float
    required_energy: float
    energy_min: float = 0.0
    energy_max: float = EV_BATTERY_KWH
    power_max: float = EV_POWER_MAX_KW
    eff_charge: float = EV_EFFICIENCY
    eff_discharge: float = EV_EFFICIENCY
    inconvenience_coeff: float = EV_INCONVENIENCE
    depreciation_coeff: float = EV_DEPRECIATION


@dataclass(frozen=True)
class StationSpec:
    station_id: str
    bus_id: int
    pv_profile: tuple[float, ...]   # kW per slot
    fleet: tuple[EvTask, ...]


@dataclass(frozen=True)
class StorageSpec:
    """Shared storage parameters; ``cyclic_soc`` toggles the equal

    start/end energy restriction on the dispatch cycle."""

    storage_id: str
    bus_id: int
    connected_stations: tuple[str, ...]
    capacity: float                 # kWh
    energy_min: float
    energy_max: float
    power_charge_max: float         # kW
    power_discharge_max: float      # kW
    eff_charge: float = 0.95
    eff_discharge: float = 0.95
    degradation_coeff: float = 0.01        # $/kWh throughput
    initial_energy: float | None = None    # defaults to capacity midpoint
    cyclic_soc: bool = True

    def __post_init__(self):
        if self.initial_energy is None:
            object.__setattr__(self, "initial_energy", 0.5 * self.capacity)


@dataclass(frozen=True)
class BusSpec:
    bus_id: int
    p_bounds: tuple[float, float]    # kW, net consumption limits
    q_bounds: tuple[float, float]    # kvar
    v_bounds: tuple[float, float]    # squared voltage magnitude, p.u.^2
    base_load_p: tuple[float, ...]   # kW per slot
    base_load_q: tuple[float, ...]   # kvar per slot


@dataclass(frozen=True)
class LineSpec:
    from_bus: int
    to_bus: int
    resistance: float        # p.u.
    reactance: float         # p.u.
    current_sq_max: float    # p.u. squared current limit


@dataclass(frozen=True)
class NetworkSpec:
    buses: tuple[BusSpec, ...]
    lines: tuple[LineSpec, ...]
    slack_bus_id: int
    s_base: float = 1000.0   # kVA
    v_base: float = 12.66    # kV

    def bus(self, bus_id: int) -> BusSpec:
        for b in self.buses:
            if b.bus_id == bus_id:
                return b
        raise KeyError(bus_id)


@dataclass(frozen=True)
class Tariff:
    buy_price: tuple[float, ...]    # $/kWh per slot
    sell_price: tuple[float, ...]   # $/kWh per slot


@dataclass(frozen=True)
class Scenario:
    time: TimeGrid
    network: NetworkSpec
    stations: tuple[StationSpec, ...]
    storages: tuple[StorageSpec, ...]
    tariff: Tariff

    def station(self, station_id: str) -> StationSpec:
        for s in self.stations:
            if s.station_id == station_id:
                return s
        raise KeyError(station_id)

    def storage(self, storage_id: str) -> StorageSpec:
        for s in self.storages:
            if s.storage_id == storage_id:
                return s
        raise KeyError(storage_id)

    def storage_of_station(self, station_id: str) -> StorageSpec | None:
        for s in self.storages:
            if station_id in s.connected_stations:
                return s
        return None


def min_slots_for_charge(task: EvTask, slot_hours: float) -> tuple[int, float]:
    """(full-power slots, remainder kW) of the as-soon-as-possible profile.

    Guards the floor against round-off so an exactly integral minimum
    charging time yields a zero remainder slot.
    """
    charge = task.required_energy - task.initial_energy
    if charge <= 0.0:
        return 0, 0.0
    slots_exact = charge / (task.power_max * task.eff_charge * slot_hours)
    full = math.floor(slots_exact + 1e-9)
    remainder = charge / (task.eff_charge * slot_hours) - full * task.power_max
    if remainder < 1e-9:
        remainder = 0.0
    return full, remainder


# ---------------------------------------------------------------------------
# validation


def _validate_task(task: EvTask, horizon: int, slot_hours: float, entity: str,
                   issues: list[ValidationIssue]) -> None:
    if not (0 <= task.arrival_slot < task.departure_slot <= horizon):
        issues.append(ValidationIssue(
            entity, f"arrival/departure slots ({task.arrival_slot}, "
                    f"{task.departure_slot}) not ordered within horizon {horizon}"))
        return
    if task.power_max <= 0:
        issues.append(ValidationIssue(entity, "power_max must be positive"))
        return
    for name in ("eff_charge", "eff_discharge"):
        eff = getattr(task, name)
        if not (0.0 < eff <= 1.0):
            issues.append(ValidationIssue(entity, f"{name}={eff} outside (0, 1]"))
    if not (task.energy_min <= task.initial_energy <= task.energy_max):
        issues.append(ValidationIssue(
            entity, f"initial_energy {task.initial_energy} outside "
                    f"[{task.energy_min}, {task.energy_max}]"))
    if not (task.energy_min <= task.required_energy <= task.energy_max):
        issues.append(ValidationIssue(
            entity, f"required_energy {task.required_energy} outside "
                    f"[{task.energy_min}, {task.energy_max}]"))
    window_hours = (task.departure_slot - task.arrival_slot) * slot_hours
    charge = task.required_energy - task.initial_energy
    if charge > 0:
        hours_needed = charge / (task.power_max * task.eff_charge)
        if hours_needed > window_hours + 1e-9:
            issues.append(ValidationIssue(
                entity, f"required_energy unreachable: needs {hours_needed:.3f} h "
                        f"of full-power charging in a {window_hours:.3f} h window"))
            return
        full, remainder = min_slots_for_charge(task, slot_hours)
        used = full + (1 if remainder > 0.0 else 0)
        if task.arrival_slot + used > task.departure_slot:
            issues.append(ValidationIssue(
                entity, "as-soon-as-possible profile does not fit before departure"))
    if task.inconvenience_coeff < 0 or task.depreciation_coeff < 0:
        issues.append(ValidationIssue(entity, "cost coefficients must be nonnegative"))


def _validate_network(net: NetworkSpec, horizon: int,
                      issues: list[ValidationIssue]) -> None:
    bus_ids = [b.bus_id for b in net.buses]
    if len(set(bus_ids)) != len(bus_ids):
        issues.append(ValidationIssue("network", "duplicate bus ids"))
        return
    bus_set = set(bus_ids)
    if net.slack_bus_id not in bus_set:
        issues.append(ValidationIssue("network", "slack bus id not among buses"))
        return
    if net.s_base <= 0 or net.v_base <= 0:
        issues.append(ValidationIssue("network", "s_base and v_base must be positive"))
    for line in net.lines:
        if line.from_bus not in bus_set or line.to_bus not in bus_set:
            issues.append(ValidationIssue(
                "network", f"line ({line.from_bus},{line.to_bus}) references unknown bus"))
            return
    parents: dict[int, int] = {}
    radial = True
    if len(net.lines) != len(net.buses) - 1:
        radial = False
    for line in net.lines:
        if line.to_bus in parents or line.to_bus == net.slack_bus_id:
            radial = False
            break
        parents[line.to_bus] = line.from_bus
    if radial:
        for b in bus_set - {net.slack_bus_id}:
            hops = 0
            node = b
            while node != net.slack_bus_id:
                node = parents.get(node)
                hops += 1
                if node is None or hops > len(bus_set):
                    radial = False
                    break
            if not radial:
                break
    if not radial:
        issues.append(ValidationIssue("network", "network not radial"))
    for b in net.buses:
        if len(b.base_load_p) != horizon or len(b.base_load_q) != horizon:
            issues.append(ValidationIssue(
                f"bus {b.bus_id}", f"base load profiles must have length {horizon}"))
        if not (0.0 < b.v_bounds[0] < b.v_bounds[1]):
            issues.append(ValidationIssue(
                f"bus {b.bus_id}", "squared voltage bounds must satisfy 0 < lo < hi"))
        if b.p_bounds[0] > b.p_bounds[1] or b.q_bounds[0] > b.q_bounds[1]:
            issues.append(ValidationIssue(f"bus {b.bus_id}", "power bounds reversed"))
    for line in net.lines:
        if line.resistance < 0 or line.reactance < 0 or line.current_sq_max <= 0:
            issues.append(ValidationIssue(
                f"line ({line.from_bus},{line.to_bus})",
                "resistance/reactance must be nonnegative, current limit positive"))


def validate_scenario(scenario: Scenario) -> list[ValidationIssue]:
    """Every violated invariant, with the entity it concerns; empty when sound."""
    issues: list[ValidationIssue] = []
    grid = scenario.time
    if grid.horizon_slots < 1:
        issues.append(ValidationIssue("time", "horizon_slots must be >= 1"))
        return issues
    if grid.slot_hours <= 0:
        issues.append(ValidationIssue("time", "slot_hours must be positive"))
        return issues
    horizon = grid.horizon_slots

    _validate_network(scenario.network, horizon, issues)
    bus_set = {b.bus_id for b in scenario.network.buses}

    station_ids = [s.station_id for s in scenario.stations]
    if len(set(station_ids)) != len(station_ids):
        issues.append(ValidationIssue("stations", "duplicate station ids"))
    for st in scenario.stations:
        if st.bus_id not in bus_set:
            issues.append(ValidationIssue(st.station_id, f"bus {st.bus_id} not in network"))
        if len(st.pv_profile) != horizon:
            issues.append(ValidationIssue(
                st.station_id, f"pv_profile must have length {horizon}"))
        if any(v < 0 for v in st.pv_profile):
            issues.append(ValidationIssue(st.station_id, "pv_profile must be nonnegative"))
        for v, task in enumerate(st.fleet):
            _validate_task(task, horizon, grid.slot_hours,
                           f"{st.station_id}/ev{v}", issues)

    owners: dict[str, str] = {}
    for sto in scenario.storages:
        if sto.bus_id not in bus_set:
            issues.append(ValidationIssue(sto.storage_id, f"bus {sto.bus_id} not in network"))
        if not sto.connected_stations:
            issues.append(ValidationIssue(sto.storage_id, "connected_stations empty"))
        for sid in sto.connected_stations:
            if sid not in station_ids:
                issues.append(ValidationIssue(
                    sto.storage_id, f"connected station {sid!r} does not exist"))
            elif sid in owners:
                issues.append(ValidationIssue(
                    sto.storage_id, f"station {sid!r} already connected to {owners[sid]!r}"))
            else:
                owners[sid] = sto.storage_id
        if not (0.0 <= sto.energy_min <= sto.initial_energy <= sto.energy_max
                <= sto.capacity):
            issues.append(ValidationIssue(
                sto.storage_id, "energy bounds must satisfy "
                                "0 <= min <= initial <= max <= capacity"))
        if sto.power_charge_max <= 0 or sto.power_discharge_max <= 0:
            issues.append(ValidationIssue(sto.storage_id, "power limits must be positive"))
        for name in ("eff_charge", "eff_discharge"):
            eff = getattr(sto, name)
            if not (0.0 < eff <= 1.0):
                issues.append(ValidationIssue(sto.storage_id, f"{name}={eff} outside (0, 1]"))
        if sto.degradation_coeff < 0:
            issues.append(ValidationIssue(sto.storage_id, "degradation_coeff negative"))

    tariff = scenario.tariff
    if len(tariff.buy_price) != horizon or len(tariff.sell_price) != horizon:
        issues.append(ValidationIssue("tariff", f"price series must have length {horizon}"))
    else:
        for t, (buy, sell) in enumerate(zip(tariff.buy_price, tariff.sell_price)):
            if sell >= buy:
                issues.append(ValidationIssue(
                    "tariff", f"tariff no-arbitrage violated at slot {t}: "
                              f"sell {sell} >= buy {buy}"))
    return issues


# ---------------------------------------------------------------------------
# serialization


def _require(mapping: dict, key: str, kind, where: str):
    if key not in mapping:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = mapping[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise SchemaError(f"{where}: field {key!r} must be {kind.__name__}, "
                          f"got {type(value).__name__}")
    return value


def _number_list(mapping: dict, key: str, where: str) -> tuple[float, ...]:
    raw = _require(mapping, key, list, where)
    try:
        return tuple(float(v) for v in raw)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: field {key!r} must be a numeric array")


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a Scenario from parsed JSON; schema errors name field and reason."""
    if not isinstance(doc, dict):
        raise SchemaError("document: top level must be an object")
    version = _require(doc, "schema", int, "document")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"document: unsupported schema version {version}")

    tdoc = _require(doc, "time", dict, "document")
    grid = TimeGrid(
        horizon_slots=_require(tdoc, "horizon_slots", int, "time"),
        slot_hours=_require(tdoc, "slot_hours", float, "time"),
    )

    ndoc = _require(doc, "network", dict, "document")
    buses = []
    for i, bdoc in enumerate(_require(ndoc, "buses", list, "network")):
        where = f"network.buses[{i}]"
        if not isinstance(bdoc, dict):
            raise SchemaError(f"{where}: must be an object")
        buses.append(BusSpec(
            bus_id=_require(bdoc, "bus_id", int, where),
            p_bounds=tuple(_number_list(bdoc, "p_bounds", where)),
            q_bounds=tuple(_number_list(bdoc, "q_bounds", where)),
            v_bounds=tuple(_number_list(bdoc, "v_bounds", where)),
            base_load_p=_number_list(bdoc, "base_load_p", where),
            base_load_q=_number_list(bdoc, "base_load_q", where),
        ))
    lines = []
    for i, row in enumerate(_require(ndoc, "lines", list, "network")):
        where = f"network.lines[{i}]"
        if not (isinstance(row, list) and len(row) == 5):
            raise SchemaError(f"{where}: must be [from, to, r_pu, x_pu, l_max_pu]")
        lines.append(LineSpec(int(row[0]), int(row[1]),
                              float(row[2]), float(row[3]), float(row[4])))
    network = NetworkSpec(
        buses=tuple(buses),
        lines=tuple(lines),
        slack_bus_id=_require(ndoc, "slack_bus_id", int, "network"),
        s_base=_require(ndoc, "s_base", float, "network"),
        v_base=_require(ndoc, "v_base", float, "network"),
    )

    stations = []
    for i, sdoc in enumerate(_require(doc, "stations", list, "document")):
        where = f"stations[{i}]"
        if not isinstance(sdoc, dict):
            raise SchemaError(f"{where}: must be an object")
        fleet = []
        for v, fdoc in enumerate(_require(sdoc, "fleet", list, where)):
            fwhere = f"{where}.fleet[{v}]"
            if not isinstance(fdoc, dict):
                raise SchemaError(f"{fwhere}: must be an object")
            fleet.append(EvTask(
                arrival_slot=_require(fdoc, "arrival_slot", int, fwhere),
                departure_slot=_require(fdoc, "departure_slot", int, fwhere),
                initial_energy=_require(fdoc, "initial_energy", float, fwhere),
                required_energy=_require(fdoc, "required_energy", float, fwhere),
                energy_min=_require(fdoc, "energy_min", float, fwhere),
                energy_max=_require(fdoc, "energy_max", float, fwhere),
                power_max=_require(fdoc, "power_max", float, fwhere),
                eff_charge=_require(fdoc, "eff_charge", float, fwhere),
                eff_discharge=_require(fdoc, "eff_discharge", float, fwhere),
                inconvenience_coeff=_require(fdoc, "inconvenience_coeff", float, fwhere),
                depreciation_coeff=_require(fdoc, "depreciation_coeff", float, fwhere),
            ))
        stations.append(StationSpec(
            station_id=_require(sdoc, "station_id", str, where),
            bus_id=_require(sdoc, "bus_id", int, where),
            pv_profile=_number_list(sdoc, "pv_profile", where),
            fleet=tuple(fleet),
        ))

    storages = []
    for i, sdoc in enumerate(_require(doc, "storages", list, "document")):
        where = f"storages[{i}]"
        if not isinstance(sdoc, dict):
            raise SchemaError(f"{where}: must be an object")
        storages.append(StorageSpec(
            storage_id=_require(sdoc, "storage_id", str, where),
            bus_id=_require(sdoc, "bus_id", int, where),
            connected_stations=tuple(_require(sdoc, "connected_stations", list, where)),
            capacity=_require(sdoc, "capacity", float, where),
            energy_min=_require(sdoc, "energy_min", float, where),
            energy_max=_require(sdoc, "energy_max", float, where),
            power_charge_max=_require(sdoc, "power_charge_max", float, where),
            power_discharge_max=_require(sdoc, "power_discharge_max", float, where),
            eff_charge=_require(sdoc, "eff_charge", float, where),
            eff_discharge=_require(sdoc, "eff_discharge", float, where),
            degradation_coeff=_require(sdoc, "degradation_coeff", float, where),
            initial_energy=_require(sdoc, "initial_energy", float, where),
            cyclic_soc=_require(sdoc, "cyclic_soc", bool, where),
        ))

    tdoc = _require(doc, "tariff", dict, "document")
    tariff = Tariff(
        buy_price=_number_list(tdoc, "buy_price", "tariff"),
        sell_price=_number_list(tdoc, "sell_price", "tariff"),
    )
    return Scenario(time=grid, network=network, stations=tuple(stations),
                    storages=tuple(storages), tariff=tariff)


def scenario_to_dict(scenario: Scenario) -> dict:
    doc = {
        "schema": SCHEMA_VERSION,
        "time": {
            "horizon_slots": scenario.time.horizon_slots,
            "slot_hours": scenario.time.slot_hours,
        },
        "network": {
            "s_base": scenario.network.s_base,
            "v_base": scenario.network.v_base,
            "slack_bus_id": scenario.network.slack_bus_id,
            "buses": [
                {
                    "bus_id": b.bus_id,
                    "p_bounds": list(b.p_bounds),
                    "q_bounds": list(b.q_bounds),
                    "v_bounds": list(b.v_bounds),
                    "base_load_p": list(b.base_load_p),
                    "base_load_q": list(b.base_load_q),
                }
                for b in scenario.network.buses
            ],
            "lines": [
                [l.from_bus, l.to_bus, l.resistance, l.reactance, l.current_sq_max]
                for l in scenario.network.lines
            ],
        },
        "stations": [
            {
                "station_id": s.station_id,
                "bus_id": s.bus_id,
                "pv_profile": list(s.pv_profile),
                "fleet": [asdict(task) for task in s.fleet],
            }
            for s in scenario.stations
        ],
        "storages": [
            {
                "storage_id": s.storage_id,
                "bus_id": s.bus_id,
                "connected_stations": list(s.connected_stations),
                "capacity": s.capacity,
                "energy_min": s.energy_min,
                "energy_max": s.energy_max,
                "power_charge_max": s.power_charge_max,
                "power_discharge_max": s.power_discharge_max,
                "eff_charge": s.eff_charge,
                "eff_discharge": s.eff_discharge,
                "degradation_coeff": s.degradation_coeff,
                "initial_energy": s.initial_energy,
                "cyclic_soc": s.cyclic_soc,
            }
            for s in scenario.storages
        ],
        "tariff": {
            "buy_price": list(scenario.tariff.buy_price),
            "sell_price": list(scenario.tariff.sell_price),
        },
    }
    return doc


def load_scenario(path) -> Scenario:
    """Load and fully validate a scenario file.

    Raises SchemaError for structural problems and InvariantError (with
    the full issue list) when the content violates model invariants.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"document: not valid JSON ({exc})") from exc
    scenario = scenario_from_dict(doc)
    issues = validate_scenario(scenario)
    if issues:
        raise InvariantError(issues)
    return scenario


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# fleet synthesis


def synthesize_fleet(count: int, pattern: str, seed: int) -> tuple[EvTask, ...]:
    """Deterministic daily fleet for a 24-slot, 1 h grid.

    Patterns shift the arrival mass: residential fleets arrive in the
    evening, workplace fleets in the morning, leisure fleets around
    midday with shorter stays.  Requested energies are capped so the
    as-soon-as-possible profile always fits strictly inside the window.
    """
    if pattern not in FLEET_PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {FLEET_PATTERNS}")
    if count < 0:
        raise ValueError("count must be nonnegative")
    horizon = 24
    rng = np.random.RandomState(seed)
    tasks = []
    for _ in range(count):
        if pattern == "residential":
            arrival = int(np.clip(round(rng.normal(18.0, 1.5)), 15, 21))
            stay = int(rng.randint(5, 10))
            departure = min(horizon, arrival + stay)
        elif pattern == "workplace":
            arrival = int(np.clip(round(rng.normal(8.5, 1.2)), 6, 11))
            stay = int(rng.randint(6, 10))
            departure = min(horizon, arrival + stay)
        else:  # leisure
            arrival = int(np.clip(round(rng.normal(12.5, 2.5)), 8, 17))
            stay = int(rng.randint(3, 7))
            departure = min(horizon, arrival + stay)
        window = departure - arrival
        initial = float(rng.uniform(8.0, 25.0))
        cap = EV_POWER_MAX_KW * EV_EFFICIENCY * (window - 1) * 0.999
        charge = float(min(rng.uniform(8.0, 30.0), cap,
                           EV_BATTERY_KWH - 3.0 - initial))
        charge = max(charge, 0.0)
        tasks.append(EvTask(
            arrival_slot=arrival,
            departure_slot=departure,
            initial_energy=round(initial, 3),
            required_energy=round(initial + charge, 3),
        ))
    return tuple(tasks)

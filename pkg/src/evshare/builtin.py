"""Built-in scenarios: the 33-bus feeder with charging-station clusters.

The feeder is the standard 12.66 kV 33-bus radial test system (Baran-Wu
branch and load data).  Nominal loads are modulated by a daily shape so
voltage limits bite without making the base case infeasible.  Each
cluster couples four stations with distinct demand patterns to one
shared storage at a single bus.
"""

from __future__ import annotations

import importlib.resources

from .scenario import (
    BusSpec,
    LineSpec,
    NetworkSpec,
    Scenario,
    StationSpec,
    StorageSpec,
    Tariff,
    TimeGrid,
    load_scenario,
    synthesize_fleet,
)

# from_bus, to_bus, R (ohm), X (ohm); receiving-bus load P (kW), Q (kvar)
BRANCH_OHM = (
    (1, 2, 0.0922, 0.0470),
    (2, 3, 0.4930, 0.2511),
    (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070),
    (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351),
    (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650),
    (11, 12, 0.3744, 0.1238),
    (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129),
    (14, 15, 0.5910, 0.5260),
    (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740),
    (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554),
    (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083),
    (23, 24, 0.8980, 0.7091),
    (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034),
    (26, 27, 0.2842, 0.1447),
    (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585),
    (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619),
    (32, 33, 0.3410, 0.5302),
)

NOMINAL_LOAD = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20),
    7: (200, 100), 8: (200, 100), 9: (60, 20), 10: (60, 20), 11: (45, 30),
    12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10), 16: (60, 20),
    17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40),
    22: (90, 40), 23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25),
    27: (60, 25), 28: (60, 20), 29: (120, 70), 30: (200, 600), 31: (150, 70),
    32: (210, 100), 33: (60, 40),
}

V_BASE_KV = 12.66
S_BASE_KVA = 1000.0
VOLT_SQ_BOUNDS = (0.94 ** 2, 1.06 ** 2)
CURRENT_SQ_MAX = 25.0

# daily multipliers, slot = hour of day
LOAD_SHAPE = (
    0.42, 0.39, 0.37, 0.36, 0.36, 0.38, 0.44, 0.50, 0.53, 0.55, 0.56, 0.57,
    0.57, 0.56, 0.55, 0.55, 0.56, 0.57, 0.58, 0.58, 0.56, 0.52, 0.48, 0.44,
)
PV_SHAPE = (
    0.0, 0.0, 0.0, 0.0, 0.0, 0.02, 0.12, 0.30, 0.50, 0.68, 0.83, 0.94,
    1.00, 0.98, 0.90, 0.77, 0.60, 0.40, 0.20, 0.05, 0.0, 0.0, 0.0, 0.0,
)
# hourly wholesale buying price, $/kWh, evening-peaked
BUY_PRICE = (
    0.034, 0.031, 0.029, 0.028, 0.029, 0.033, 0.042, 0.055, 0.063, 0.068,
    0.071, 0.074, 0.077, 0.080, 0.084, 0.092, 0.104, 0.118, 0.124, 0.112,
    0.094, 0.071, 0.052, 0.041,
)
SELL_PRICE_FLAT = 0.01

CLUSTER_BUSES = (6, 12, 22, 25, 28, 15)
CLUSTER_PATTERNS = ("residential", "workplace", "leisure", "leisure")
CLUSTER_FLEET_SIZES = (20, 16, 20, 18)
PV_PEAKS_KW = (90.0, 150.0, 130.0, 110.0)

STORAGE_CAPACITY_KWH = 650.0
STORAGE_ENERGY_FRACTIONS = (0.1, 0.9)    # of capacity
STORAGE_POWER_FRACTION = 0.3             # of capacity, both directions
STORAGE_EFFICIENCY = 0.95
STORAGE_DEGRADATION = 0.01


def ieee33_network(horizon: int = 24, load_shape=LOAD_SHAPE) -> NetworkSpec:
    """The 33-bus feeder with shaped base loads, per unit on S_BASE_KVA."""
    z_base = (V_BASE_KV * 1000.0) ** 2 / (S_BASE_KVA * 1000.0)
    buses = []
    for bus_id in range(1, 34):
        p_nom, q_nom = NOMINAL_LOAD.get(bus_id, (0.0, 0.0))
        profile_p = tuple(round(p_nom * load_shape[t % len(load_shape)], 6)
                          for t in range(horizon))
        profile_q = tuple(round(q_nom * load_shape[t % len(load_shape)], 6)
                          for t in range(horizon))
        wide = 5000.0 if bus_id == 1 else 3000.0
        buses.append(BusSpec(
            bus_id=bus_id,
            p_bounds=(-wide, wide),
            q_bounds=(-wide, wide),
            v_bounds=VOLT_SQ_BOUNDS,
            base_load_p=profile_p,
            base_load_q=profile_q,
        ))
    lines = tuple(
        LineSpec(f, t, round(r / z_base, 8), round(x / z_base, 8), CURRENT_SQ_MAX)
        for f, t, r, x in BRANCH_OHM
    )
    return NetworkSpec(buses=tuple(buses), lines=lines, slack_bus_id=1,
                       s_base=S_BASE_KVA, v_base=V_BASE_KV)


def build_ieee33_scenario(
    n_clusters: int = 1,
    seed: int = 7,
    fleet_sizes: tuple[int, ...] = CLUSTER_FLEET_SIZES,
    storage_capacity: float = STORAGE_CAPACITY_KWH,
    cyclic_soc: bool = True,
    horizon: int = 24,
) -> Scenario:
    """Scenario with ``n_clusters`` four-station clusters on the feeder.

    Fleets are synthesized deterministically from ``seed``; cluster g's
    stations get seeds offset by station index so replicated clusters
    differ in their EV populations.
    """
    if not (1 <= n_clusters <= len(CLUSTER_BUSES)):
        raise ValueError(f"n_clusters must be in 1..{len(CLUSTER_BUSES)}")
    network = ieee33_network(horizon)
    stations = []
    storages = []
    for g in range(n_clusters):
        bus = CLUSTER_BUSES[g]
        ids = []
        for k, (pattern, size, pv_peak) in enumerate(
                zip(CLUSTER_PATTERNS, fleet_sizes, PV_PEAKS_KW)):
            sid = f"cs{g * 4 + k + 1}"
            ids.append(sid)
            fleet = synthesize_fleet(size, pattern, seed + 61 * g + 13 * k)
            pv = tuple(round(pv_peak * PV_SHAPE[t % 24], 4) for t in range(horizon))
            stations.append(StationSpec(
                station_id=sid, bus_id=bus, pv_profile=pv, fleet=fleet))
        storages.append(StorageSpec(
            storage_id=f"ses{g + 1}",
            bus_id=bus,
            connected_stations=tuple(ids),
            capacity=storage_capacity,
            energy_min=STORAGE_ENERGY_FRACTIONS[0] * storage_capacity,
            energy_max=STORAGE_ENERGY_FRACTIONS[1] * storage_capacity,
            power_charge_max=STORAGE_POWER_FRACTION * storage_capacity,
            power_discharge_max=STORAGE_POWER_FRACTION * storage_capacity,
            eff_charge=STORAGE_EFFICIENCY,
            eff_discharge=STORAGE_EFFICIENCY,
            degradation_coeff=STORAGE_DEGRADATION,
            initial_energy=0.5 * storage_capacity,
            cyclic_soc=cyclic_soc,
        ))
    tariff = Tariff(
        buy_price=tuple(BUY_PRICE[t % 24] for t in range(horizon)),
        sell_price=tuple(SELL_PRICE_FLAT for _ in range(horizon)),
    )
    return Scenario(
        time=TimeGrid(horizon_slots=horizon, slot_hours=1.0),
        network=network,
        stations=tuple(stations),
        storages=tuple(storages),
        tariff=tariff,
    )


def bundled_scenario_path(name: str = "ieee33_4cs_1ses"):
    """Filesystem path of a bundled scenario file."""
    return importlib.resources.files("evshare.data") / f"{name}.json"


def load_bundled(name: str = "ieee33_4cs_1ses") -> Scenario:
    return load_scenario(bundled_scenario_path(name))

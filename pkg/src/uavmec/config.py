"""Scenario configuration: YAML schema, unit conversion, instance assembly.

Config files are plain YAML with the field names below.  Fields carrying
``_db``/``_dbm`` suffixes are converted to linear watts (or ratios) here;
everything downstream is linear SI.  Geometry can be given explicitly
(``td_positions_m`` / ``uav_start_positions_m``) or generated from a seeded
cluster layout (``geometry`` block): TDs uniform in a few circular regions,
UAVs at the midpoints between adjacent region centers.

Two energy budgets may be left as ``null`` to use the workload-derived rules:
the UAV com budget sizes each task for a 3 GHz share, and the propulsion
budget allows cruising at 20 m/s for 3 s per slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import scenario as sm


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** (x_dbm / 10.0) * 1e-3


DEFAULTS: dict = {
    "num_uavs": 3,
    "num_tds": 4,
    "num_slots": 20,
    "uav_altitude_m": 50.0,
    "total_bandwidth_hz": 120e6,
    "ref_channel_gain_db": -50.0,
    "noise_psd_dbm": -130.0,
    "td_tx_power_dbm": 23.0,
    "uav_tx_power_dbm": 35.0,
    "td_cpu_max_hz": 0.5e9,
    "uav_cpu_max_hz": 10e9,
    "cycles_per_bit": 1e3,
    "capacitance": 1e-27,
    "v_max_mps": 35.0,
    "d_min_m": 10.0,
    "tau_comm_max_s": 0.5,
    "w_time": 1.0,
    "w_com_td": 0.09,
    "w_com_uav": 0.01,
    "w_fly": 1e-4,
    "td_com_energy_budget_j": 10.0,
    "uav_com_energy_budget_j": None,   # derived from workload when null
    "prop_energy_budget_j": None,      # derived from the cruise rule when null
    "geometry": {
        "area_size_m": 200.0,
        "cluster_radius_m": 40.0,
        "num_clusters": 3,
        "seed": 7,
    },
    "propulsion": {
        "p_blade_w": 79.86,
        "p_induced_w": 88.63,
        "tip_speed_mps": 120.0,
        "v_hover_mps": 4.03,
        "drag_ratio": 0.6,
        "air_density": 1.225,
        "solidity": 0.05,
        "rotor_area_m2": 0.503,
    },
    # generator knobs consumed by the task-graph module via the harness
    "workload_mbits": [0.8, 1.0],
    "edge_mbits": [0.1, 0.2],
    "input_mbits": [1.5, 3.0],
    "subtasks_per_layer": [1, 3],
    "dependency_coeff": 0.02,
}


def default_config() -> dict:
    """Deep copy of the built-in Table-style defaults."""
    import copy

    return copy.deepcopy(DEFAULTS)


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        user = yaml.safe_load(fh) or {}
    cfg = default_config()
    for key, val in user.items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    return cfg


def generate_geometry(cfg: dict) -> tuple[np.ndarray, np.ndarray]:
    """Clustered TD layout plus midpoint UAV launch points."""
    geo = cfg["geometry"]
    rng = np.random.default_rng(geo.get("seed", 0))
    side = float(geo["area_size_m"])
    radius = float(geo["cluster_radius_m"])
    n_clusters = int(geo["num_clusters"])
    margin = radius + 0.05 * side
    angles = np.linspace(0.0, 2.0 * math.pi, n_clusters, endpoint=False) + math.pi / 2.0
    ring = side / 2.0 - margin
    centers = np.stack([side / 2.0 + ring * np.cos(angles),
                        side / 2.0 + ring * np.sin(angles)], axis=1)

    u = int(cfg["num_tds"])
    td = np.zeros((u, 2))
    for i in range(u):
        c = centers[i % n_clusters]
        r = radius * math.sqrt(rng.uniform())
        a = rng.uniform(0.0, 2.0 * math.pi)
        td[i] = c + r * np.array([math.cos(a), math.sin(a)])

    m = int(cfg["num_uavs"])
    mids = np.stack([(centers[i] + centers[(i + 1) % n_clusters]) / 2.0
                     for i in range(n_clusters)])
    uav = np.zeros((m, 2))
    for j in range(m):
        uav[j] = mids[j % n_clusters]
        if j >= n_clusters:  # stack extra UAVs on an offset ring
            uav[j] += (1 + j // n_clusters) * np.array([0.0, 2.0 * cfg["d_min_m"]])
    return td, uav


def make_scenario(cfg: dict) -> sm.Scenario:
    """Build a Scenario from a config dict; derived budgets start provisional.

    The UAV com budget depends on the generated workload, so callers that use
    the derived rule must call :func:`finalize_budgets` once the task graph
    exists.  The provisional value is a large stand-in.
    """
    m, u = int(cfg["num_uavs"]), int(cfg["num_tds"])
    if "td_positions_m" in cfg and cfg["td_positions_m"] is not None:
        td_pos = np.asarray(cfg["td_positions_m"], dtype=float)
        uav_pos = np.asarray(cfg["uav_start_positions_m"], dtype=float)
    else:
        td_pos, uav_pos = generate_geometry(cfg)
    if td_pos.shape != (u, 2) or uav_pos.shape != (m, 2):
        raise ValueError("geometry arrays do not match device counts")

    prop = cfg["propulsion"]
    budget_com = np.empty(m + u)
    budget_com[m:] = float(cfg["td_com_energy_budget_j"])
    budget_com[:m] = (cfg["uav_com_energy_budget_j"]
                      if cfg["uav_com_energy_budget_j"] is not None else 1e9)

    scn = sm.Scenario(
        num_uavs=m,
        num_tds=u,
        num_slots=int(cfg["num_slots"]),
        td_positions=td_pos,
        uav_altitude=float(cfg["uav_altitude_m"]),
        uav_start_positions=uav_pos,
        total_bandwidth=float(cfg["total_bandwidth_hz"]),
        ref_channel_gain=db_to_linear(float(cfg["ref_channel_gain_db"])),
        noise_psd=dbm_to_watts(float(cfg["noise_psd_dbm"])),
        td_tx_power_max=dbm_to_watts(float(cfg["td_tx_power_dbm"])),
        uav_tx_power_max=dbm_to_watts(float(cfg["uav_tx_power_dbm"])),
        td_cpu_max=float(cfg["td_cpu_max_hz"]),
        uav_cpu_max=float(cfg["uav_cpu_max_hz"]),
        cycles_per_bit=np.full(m + u, float(cfg["cycles_per_bit"])),
        capacitance=np.full(m + u, float(cfg["capacitance"])),
        v_max=float(cfg["v_max_mps"]),
        d_min=float(cfg["d_min_m"]),
        tau_comm_max=float(cfg["tau_comm_max_s"]),
        energy_budget_com=budget_com,
        energy_budget_prop=np.full(m, 1e9),
        p_blade=float(prop["p_blade_w"]),
        p_induced=float(prop["p_induced_w"]),
        tip_speed=float(prop["tip_speed_mps"]),
        v_hover=float(prop["v_hover_mps"]),
        drag_ratio=float(prop["drag_ratio"]),
        air_density=float(prop["air_density"]),
        solidity=float(prop["solidity"]),
        rotor_area=float(prop["rotor_area_m2"]),
        w_time=float(cfg["w_time"]),
        w_com=np.concatenate([np.full(m, float(cfg["w_com_uav"])),
                              np.full(u, float(cfg["w_com_td"]))]),
        w_fly=np.full(m, float(cfg["w_fly"])),
    )
    return finalize_budgets(scn, None, cfg)


def finalize_budgets(scn: sm.Scenario, graph, cfg: dict) -> sm.Scenario:
    """Fill in the workload-derived budgets once the task graph is known."""
    m = scn.num_uavs
    budget_com = scn.energy_budget_com.copy()
    if cfg.get("uav_com_energy_budget_j") is not None:
        budget_com[:m] = float(cfg["uav_com_energy_budget_j"])
    elif graph is not None:
        total = 0.0
        for u in range(scn.num_tds):
            bits = graph.total_interior_bits(u)
            total += bits * scn.cycles_per_bit[scn.td_device(u)] \
                * scn.capacitance[0] * (3e9) ** 2
        budget_com[:m] = total / m

    if cfg.get("prop_energy_budget_j") is not None:
        budget_prop = np.full(m, float(cfg["prop_energy_budget_j"]))
    else:
        budget_prop = np.full(m, scn.num_slots * 3.0 * sm.propulsion_power(scn, 20.0))
    return scn.with_budgets(budget_com, budget_prop)

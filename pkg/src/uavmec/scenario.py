"""Physical system model for the multi-UAV edge-computing planner.

Everything here is a pure, closed-form evaluation on concrete data: channel
gains and link rates, per-slot computation/communication times, the energy
models (radio, CPU, rotary-wing propulsion) and the weighted system cost.
The optimizers never score themselves; they hand their decision back to this
module.

Device indexing convention (used across the whole package):

* global device ids ``0 .. M-1`` are UAVs, ``M .. M+U-1`` are terminal
  devices (TDs),
* the per-sub-task offload choice vector has ``M+1`` entries: choice ``0``
  means "run locally on the owning TD", choice ``c >= 1`` means UAV ``c-1``.

Time structure: ``N`` slots, each split into a computation unit followed by
a communication unit.  Unit ``t`` (1-based, ``t = 1..2N``) moves a UAV from
``q[t]`` to ``q[t+1]``; the trajectory array therefore has ``2N+2`` columns
with ``q[0]`` the launch point and ``q[2N+1]`` the (required) return point.
Slot ``n`` (0-based) owns computation unit ``2n+1`` and communication unit
``2n+2``; rates for slot ``n`` are evaluated at the communication-unit
boundary position ``q[2n+2]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class ModelError(ValueError):
    """Base class for physical-model violations."""


class InvalidLinkError(ModelError):
    """Raised for a TD-to-TD link, which does not exist in this system."""


class DegenerateGeometryError(ModelError):
    """Raised when two UAVs coincide and the channel model breaks down."""


class InfeasibleLinkError(ModelError):
    """Raised when data must cross a link whose rate is zero."""


RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class Scenario:
    """All physical quantities of one instance.

    Radio/power quantities are linear SI units (W, Hz, W/Hz); any dB/dBm
    conversion happens at config-load time, never here.  Per-device arrays
    are indexed by global device id (UAVs first, then TDs).
    """

    num_uavs: int
    num_tds: int
    num_slots: int
    td_positions: np.ndarray          # (U, 2) m
    uav_altitude: float               # m
    uav_start_positions: np.ndarray   # (M, 2) m
    total_bandwidth: float            # Hz
    ref_channel_gain: float           # linear power ratio at 1 m
    noise_psd: float                  # W/Hz
    td_tx_power_max: float            # W
    uav_tx_power_max: float           # W
    td_cpu_max: float                 # Hz
    uav_cpu_max: float                # Hz
    cycles_per_bit: np.ndarray        # (M+U,) cycles/bit
    capacitance: np.ndarray           # (M+U,) J s^2 / cycle^3
    v_max: float                      # m/s
    d_min: float                      # m
    tau_comm_max: float               # s
    energy_budget_com: np.ndarray     # (M+U,) J
    energy_budget_prop: np.ndarray    # (M,) J
    # rotary-wing propulsion constants
    p_blade: float = 79.86            # blade profile power at hover, W
    p_induced: float = 88.63          # induced power at hover, W
    tip_speed: float = 120.0          # rotor tip speed, m/s
    v_hover: float = 4.03             # mean rotor induced velocity at hover, m/s
    drag_ratio: float = 0.6           # fuselage drag ratio
    air_density: float = 1.225        # kg/m^3
    solidity: float = 0.05            # rotor solidity
    rotor_area: float = 0.503         # rotor disc area, m^2
    # cost weights
    w_time: float = 1.0               # 1/s
    w_com: np.ndarray = field(default=None)   # (M+U,) 1/J
    w_fly: np.ndarray = field(default=None)   # (M,) 1/J

    def __post_init__(self):
        if self.num_uavs < 1 or self.num_tds < 1 or self.num_slots < 1:
            raise ValueError("need at least one UAV, one TD and one slot")
        for name in ("td_tx_power_max", "uav_tx_power_max", "td_cpu_max",
                     "uav_cpu_max", "total_bandwidth", "noise_psd"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if np.any(self.energy_budget_com <= 0) or np.any(self.energy_budget_prop <= 0):
            raise ValueError("energy budgets must be strictly positive")
        if self.subcarrier_bandwidth <= 0:
            raise ValueError("per-link bandwidth must be positive")

    # --- index helpers -------------------------------------------------

    @property
    def num_devices(self) -> int:
        return self.num_uavs + self.num_tds

    def is_uav(self, z: int) -> bool:
        return 0 <= z < self.num_uavs

    def td_device(self, u: int) -> int:
        """Global device id of TD ``u`` (the choice-0 alias target)."""
        return self.num_uavs + u

    # --- radio ----------------------------------------------------------

    @property
    def subcarrier_bandwidth(self) -> float:
        """Per-link OFDMA share: total bandwidth over the number of device pairs."""
        z = self.num_devices
        return 2.0 * self.total_bandwidth / (z * (z - 1))

    @property
    def td_tx_power(self) -> float:
        """Per-link TD transmit power (cap split across the M UAV links)."""
        return self.td_tx_power_max / self.num_uavs

    @property
    def uav_tx_power(self) -> float:
        """Per-link UAV transmit power (cap split across all other devices)."""
        return self.uav_tx_power_max / (self.num_devices - 1)

    def tx_power(self, z: int) -> float:
        return self.uav_tx_power if self.is_uav(z) else self.td_tx_power

    def cpu_cap(self, z: int) -> float:
        return self.uav_cpu_max if self.is_uav(z) else self.td_cpu_max

    def device_position(self, z: int, q_t: np.ndarray) -> np.ndarray:
        """Horizontal position of device ``z`` given UAV positions at one unit."""
        if self.is_uav(z):
            return q_t[z]
        return self.td_positions[z - self.num_uavs]

    def with_budgets(self, energy_budget_com=None, energy_budget_prop=None) -> "Scenario":
        kw = {}
        if energy_budget_com is not None:
            kw["energy_budget_com"] = np.asarray(energy_budget_com, dtype=float)
        if energy_budget_prop is not None:
            kw["energy_budget_prop"] = np.asarray(energy_budget_prop, dtype=float)
        return replace(self, **kw)


@dataclass
class Decision:
    """One complete plan: offloading, frequencies, unit durations, trajectories.

    ``offload[u]`` and ``freq[u]`` are ``(K_u, M+1)`` arrays over the interior
    sub-tasks of TD ``u`` (source and sink are pinned to the TD and carry no
    compute).  Offload rows are fractional during optimization and one-hot
    after rounding.  ``freq`` is in Hz.  ``tau1``/``tau2`` are the declared
    computation/communication unit durations per slot (s).  ``traj`` is
    ``(M, 2N+2, 2)`` in meters.
    """

    offload: list[np.ndarray]
    freq: list[np.ndarray]
    tau1: np.ndarray
    tau2: np.ndarray
    traj: np.ndarray

    def copy(self) -> "Decision":
        return Decision(
            offload=[x.copy() for x in self.offload],
            freq=[f.copy() for f in self.freq],
            tau1=self.tau1.copy(),
            tau2=self.tau2.copy(),
            traj=self.traj.copy(),
        )

    def unit_durations(self) -> np.ndarray:
        """Durations of units 1..2N as a flat array (position 0 unused)."""
        n = len(self.tau1)
        dt = np.zeros(2 * n + 1)
        dt[1::2] = self.tau1
        dt[2::2] = self.tau2
        return dt


@dataclass
class MetricsReport:
    """Cost breakdown plus feasibility residuals, all from exact formulas."""

    total_cost: float
    total_delay: float
    slot_durations: np.ndarray        # (N,)
    comm_energy: np.ndarray           # (M+U,) J, summed over slots
    comp_energy: np.ndarray           # (M+U,) J
    prop_energy: np.ndarray           # (M,) J
    balance_factor: float
    residuals: dict[str, float]
    feasible: bool


# --------------------------------------------------------------------------
# channel and rates
# --------------------------------------------------------------------------

def channel_gain(scn: Scenario, a: int, b: int, qa: np.ndarray, qb: np.ndarray) -> float:
    """Inverse-square line-of-sight gain between devices ``a`` and ``b``.

    UAV-TD links use the 3-D distance (altitude included); UAV-UAV links fly
    at a common altitude so only the horizontal distance counts.
    """
    if a == b:
        raise ValueError("no channel from a device to itself")
    a_uav, b_uav = scn.is_uav(a), scn.is_uav(b)
    if not a_uav and not b_uav:
        raise InvalidLinkError(f"TD-TD link {a}->{b} does not exist")
    if not (np.all(np.isfinite(qa)) and np.all(np.isfinite(qb))):
        raise ValueError("positions must be finite")
    d2 = float(np.sum((np.asarray(qa, dtype=float) - np.asarray(qb, dtype=float)) ** 2))
    if a_uav and b_uav:
        if d2 == 0.0:
            raise DegenerateGeometryError(f"UAVs {a} and {b} coincide")
    else:
        d2 += scn.uav_altitude ** 2
    return scn.ref_channel_gain / d2


def link_rate(scn: Scenario, a: int, b: int, gain: float) -> float:
    """Shannon rate of the ``a -> b`` link in bits/s; self links are infinite."""
    if a == b:
        return math.inf
    if gain < 0:
        raise ValueError("gain must be nonnegative")
    p = scn.tx_power(a)
    bw = scn.subcarrier_bandwidth
    snr = p * gain / (bw * scn.noise_psd)
    return bw * math.log2(1.0 + snr)


def rate_matrix(scn: Scenario, q_t: np.ndarray) -> np.ndarray:
    """All pairwise rates at one time unit; TD-TD entries are NaN (no link)."""
    z = scn.num_devices
    rates = np.full((z, z), np.nan)
    for a in range(z):
        for b in range(z):
            if a == b:
                rates[a, b] = math.inf
            elif scn.is_uav(a) or scn.is_uav(b):
                g = channel_gain(scn, a, b, scn.device_position(a, q_t),
                                 scn.device_position(b, q_t))
                rates[a, b] = link_rate(scn, a, b, g)
    return rates


# --------------------------------------------------------------------------
# per-slot timing
# --------------------------------------------------------------------------

def comp_time(scn: Scenario, z: int, entries: list[tuple[float, float, float]]) -> float:
    """Computation-unit time on device ``z``: max over its parallel sub-tasks.

    ``entries`` holds ``(x, c_bits, f_hz)`` triples for the sub-tasks the
    device may execute this slot.  Sub-tasks run in parallel, so the unit
    lasts as long as the slowest one.
    """
    theta = scn.cycles_per_bit[z]
    worst = 0.0
    for x, c_bits, f_hz in entries:
        load = x * c_bits * theta
        if load == 0.0:
            continue
        if f_hz <= 0.0:
            raise ModelError(f"sub-task assigned to device {z} with zero frequency")
        worst = max(worst, load / f_hz)
    return worst


def transfer_bits(scn: Scenario, graph, decision: Decision, n: int) -> np.ndarray:
    """Data volume (bits) each device sends to each other device in slot ``n``.

    An edge ``k -> k'`` with ``k`` computed in slot ``n`` contributes
    ``x_k[z] * x_k'[z'] * bits`` to the ``(z, z')`` cell; co-located transfers
    land on the diagonal and cost nothing.
    """
    z = scn.num_devices
    out = np.zeros((z, z))
    for (u, k, k2, bits) in graph.slot_edges(n):
        wa = _assign_vector(scn, graph, decision, u, k)
        wb = _assign_vector(scn, graph, decision, u, k2)
        out += np.outer(wa, wb) * bits
    return out


def _assign_vector(scn: Scenario, graph, decision: Decision, u: int, k: int) -> np.ndarray:
    """Offload fractions of sub-task ``(u, k)`` over global device ids."""
    vec = np.zeros(scn.num_devices)
    if graph.is_interior(u, k):
        row = decision.offload[u][k - 1]
        vec[: scn.num_uavs] = row[1:]
        vec[scn.td_device(u)] = row[0]
    else:
        vec[scn.td_device(u)] = 1.0  # source and sink live on the TD
    return vec


def comm_times(scn: Scenario, graph, decision: Decision, n: int,
               rates: np.ndarray | None = None) -> np.ndarray:
    """Communication-unit time per sending device in slot ``n``.

    Transfers to distinct receivers ride orthogonal sub-carriers, so the
    sender is done when its slowest outgoing aggregate finishes.
    """
    if rates is None:
        rates = rate_matrix(scn, decision.traj[:, 2 * n + 2, :])
    data = transfer_bits(scn, graph, decision, n)
    z = scn.num_devices
    times = np.zeros(z)
    for a in range(z):
        worst = 0.0
        for b in range(z):
            if b == a or data[a, b] == 0.0:
                continue
            r = rates[a, b]
            if not np.isfinite(r) or r <= 0.0:
                raise InfeasibleLinkError(f"data on dead link {a}->{b} in slot {n}")
            worst = max(worst, data[a, b] / r)
        times[a] = worst
    return times


def comp_times(scn: Scenario, graph, decision: Decision, n: int) -> np.ndarray:
    """Computation-unit time per device in slot ``n``."""
    z = scn.num_devices
    per_dev: list[list[tuple[float, float, float]]] = [[] for _ in range(z)]
    for (u, k) in graph.slot_nodes(n):
        c = graph.compute_bits_of(u, k)
        if c == 0.0 or not graph.is_interior(u, k):
            continue
        row_x = decision.offload[u][k - 1]
        row_f = decision.freq[u][k - 1]
        per_dev[scn.td_device(u)].append((row_x[0], c, row_f[0]))
        for m in range(scn.num_uavs):
            per_dev[m].append((row_x[m + 1], c, row_f[m + 1]))
    return np.array([comp_time(scn, z_id, per_dev[z_id]) for z_id in range(z)])


def slot_duration(comp: np.ndarray, comm: np.ndarray) -> float:
    """Slot length: slowest computation unit plus slowest communication unit."""
    comp = np.asarray(comp, dtype=float)
    comm = np.asarray(comm, dtype=float)
    if np.any(comp < 0) or np.any(comm < 0):
        raise ValueError("unit times must be nonnegative")
    return float(comp.max(initial=0.0) + comm.max(initial=0.0))


# --------------------------------------------------------------------------
# energy
# --------------------------------------------------------------------------

def propulsion_power(scn: Scenario, speed: float) -> float:
    """Rotary-wing propulsion power at a given horizontal speed.

    Blade-profile and parasite terms grow with speed; the induced term decays
    from its hover value.  At speed zero this reduces exactly to
    ``p_blade + p_induced``.
    """
    if speed < 0:
        raise ValueError("speed must be nonnegative")
    v2 = speed * speed
    blade = scn.p_blade * (1.0 + 3.0 * v2 / scn.tip_speed ** 2)
    parasite = 0.5 * scn.drag_ratio * scn.air_density * scn.rotor_area * scn.solidity * speed ** 3
    v0_2 = scn.v_hover ** 2
    radicand = math.sqrt(1.0 + v2 * v2 / (4.0 * v0_2 * v0_2)) - v2 / (2.0 * v0_2)
    induced = scn.p_induced * math.sqrt(max(radicand, 0.0))
    return blade + parasite + induced


def unit_flight_energy(scn: Scenario, dist: float, dt: float) -> float:
    """Flight energy of one time unit from displacement and duration.

    Equals ``dt * propulsion_power(dist/dt)``; written in the duration-domain
    form so the zero-duration/zero-displacement unit cleanly costs nothing.
    """
    if dt <= 0.0:
        if dist > 0.0:
            raise ModelError("positive displacement in a zero-length unit")
        return 0.0
    v0_2 = scn.v_hover ** 2
    blade = scn.p_blade * (dt + 3.0 * dist ** 2 / (dt * scn.tip_speed ** 2))
    parasite = 0.5 * scn.drag_ratio * scn.air_density * scn.rotor_area * scn.solidity \
        * dist ** 3 / dt ** 2
    radicand = math.sqrt(dt ** 4 + dist ** 4 / (4.0 * v0_2 * v0_2)) - dist ** 2 / (2.0 * v0_2)
    induced = scn.p_induced * math.sqrt(max(radicand, 0.0))
    return blade + parasite + induced


def energy_breakdown(scn: Scenario, graph, decision: Decision):
    """Per-slot communication, computation and flight energies.

    Returns ``(comm (Z,N), comp (Z,N), prop (M,N))`` in joules.  Senders pay
    for radio time link by link; CPUs pay ``c * theta * gamma * f^2`` per
    executed sub-task; UAVs pay duration-weighted propulsion for both units
    of each slot.
    """
    z, n_slots, m = scn.num_devices, scn.num_slots, scn.num_uavs
    comm = np.zeros((z, n_slots))
    comp = np.zeros((z, n_slots))
    prop = np.zeros((m, n_slots))
    for n in range(n_slots):
        rates = rate_matrix(scn, decision.traj[:, 2 * n + 2, :])
        data = transfer_bits(scn, graph, decision, n)
        for a in range(z):
            acc = 0.0
            for b in range(z):
                if b == a or data[a, b] == 0.0:
                    continue
                r = rates[a, b]
                if not np.isfinite(r) or r <= 0.0:
                    raise InfeasibleLinkError(f"data on dead link {a}->{b} in slot {n}")
                acc += data[a, b] / r
            comm[a, n] = scn.tx_power(a) * acc
        for (u, k) in graph.slot_nodes(n):
            if not graph.is_interior(u, k):
                continue
            c = graph.compute_bits_of(u, k)
            row_x = decision.offload[u][k - 1]
            row_f = decision.freq[u][k - 1]
            td = scn.td_device(u)
            comp[td, n] += row_x[0] * c * scn.cycles_per_bit[td] * scn.capacitance[td] * row_f[0] ** 2
            for mm in range(m):
                comp[mm, n] += row_x[mm + 1] * c * scn.cycles_per_bit[mm] \
                    * scn.capacitance[mm] * row_f[mm + 1] ** 2
        for mm in range(m):
            for t in (2 * n + 1, 2 * n + 2):
                dist = float(np.linalg.norm(decision.traj[mm, t + 1] - decision.traj[mm, t]))
                dt = decision.tau1[n] if t % 2 == 1 else decision.tau2[n]
                prop[mm, n] += unit_flight_energy(scn, dist, dt)
    return comm, comp, prop


# --------------------------------------------------------------------------
# cost and feasibility
# --------------------------------------------------------------------------

def constraint_residuals(scn: Scenario, graph, decision: Decision) -> dict[str, float]:
    """Signed-violation residuals for every plan constraint (0 = satisfied).

    Each named residual responds to exactly one constraint family so a test
    can perturb one constraint and watch only its own residual move.
    """
    m, n_slots = scn.num_uavs, scn.num_slots
    res: dict[str, float] = {}

    sums = [np.abs(x.sum(axis=1) - 1.0).max() if x.size else 0.0 for x in decision.offload]
    res["assign_sum"] = float(max(sums, default=0.0))

    td_cap = 0.0
    uav_cap = 0.0
    for n in range(n_slots):
        loads = np.zeros(scn.num_devices)
        for (u, k) in graph.slot_nodes(n):
            if not graph.is_interior(u, k):
                continue
            row_f = decision.freq[u][k - 1]
            loads[scn.td_device(u)] += row_f[0]
            loads[:m] += row_f[1:]
        for z in range(scn.num_devices):
            over = loads[z] - scn.cpu_cap(z)
            if scn.is_uav(z):
                uav_cap = max(uav_cap, over)
            else:
                td_cap = max(td_cap, over)
    res["td_cpu_cap"] = max(td_cap, 0.0)
    res["uav_cpu_cap"] = max(uav_cap, 0.0)

    res["comm_unit_cap"] = float(max(np.max(decision.tau2[1:] - scn.tau_comm_max, initial=0.0), 0.0)) \
        if n_slots > 1 else 0.0

    cover_comp = 0.0
    cover_comm = 0.0
    for n in range(n_slots):
        cover_comp = max(cover_comp, comp_times(scn, graph, decision, n).max() - decision.tau1[n])
        cover_comm = max(cover_comm, comm_times(scn, graph, decision, n).max() - decision.tau2[n])
    res["duration_cover_comp"] = max(cover_comp, 0.0)
    res["duration_cover_comm"] = max(cover_comm, 0.0)

    res["deadline"] = max(float(decision.tau1.sum() + decision.tau2.sum() - graph.deadlines.min()), 0.0)

    dt = decision.unit_durations()
    motion = 0.0
    for mm in range(m):
        step0 = np.linalg.norm(decision.traj[mm, 1] - decision.traj[mm, 0])
        motion = max(motion, step0)  # launch anchor: unit 1 starts at the stored origin
        for t in range(1, 2 * n_slots + 1):
            step = np.linalg.norm(decision.traj[mm, t + 1] - decision.traj[mm, t])
            motion = max(motion, step - scn.v_max * dt[t])
    res["motion"] = max(motion, 0.0)

    res["slot1_stationary"] = float(max(
        np.linalg.norm(decision.traj[mm, 3] - decision.traj[mm, 2]) for mm in range(m)))

    coll = 0.0
    for t in range(2 * n_slots + 2):
        for a in range(m):
            for b in range(a + 1, m):
                d2 = np.sum((decision.traj[a, t] - decision.traj[b, t]) ** 2)
                coll = max(coll, scn.d_min ** 2 - d2)
    res["collision"] = max(float(coll), 0.0)

    res["return_to_start"] = float(max(
        np.linalg.norm(decision.traj[mm, -1] - decision.traj[mm, 0]) for mm in range(m)))

    comm_e, comp_e, prop_e = energy_breakdown(scn, graph, decision)
    res["com_energy_budget"] = float(max(np.max(
        comm_e.sum(axis=1) + comp_e.sum(axis=1) - scn.energy_budget_com), 0.0))
    res["prop_energy_budget"] = float(max(np.max(
        prop_e.sum(axis=1) - scn.energy_budget_prop), 0.0))
    return res


def balance_factor(comp_energies: np.ndarray) -> float:
    """Population standard deviation of per-UAV computation energy (J)."""
    e = np.asarray(comp_energies, dtype=float)
    if e.size < 1:
        raise ValueError("need at least one UAV energy")
    return float(np.sqrt(np.mean((e - e.mean()) ** 2)))


def system_cost(scn: Scenario, graph, decision: Decision,
                tol: float = RESIDUAL_TOL) -> MetricsReport:
    """Exact weighted system cost plus the full feasibility report.

    Delay comes from the max-computation + max-communication slot lengths;
    energies from :func:`energy_breakdown`.  Infeasibility never raises, it
    is reported through the residual map.
    """
    n_slots = scn.num_slots
    slot_len = np.zeros(n_slots)
    for n in range(n_slots):
        slot_len[n] = slot_duration(comp_times(scn, graph, decision, n),
                                    comm_times(scn, graph, decision, n))
    comm_e, comp_e, prop_e = energy_breakdown(scn, graph, decision)
    comm_tot = comm_e.sum(axis=1)
    comp_tot = comp_e.sum(axis=1)
    prop_tot = prop_e.sum(axis=1)
    total = scn.w_time * slot_len.sum() \
        + float(np.dot(scn.w_com, comm_tot + comp_tot)) \
        + float(np.dot(scn.w_fly, prop_tot))
    residuals = constraint_residuals(scn, graph, decision)
    return MetricsReport(
        total_cost=total,
        total_delay=float(slot_len.sum()),
        slot_durations=slot_len,
        comm_energy=comm_tot,
        comp_energy=comp_tot,
        prop_energy=prop_tot,
        balance_factor=balance_factor(comp_tot[: scn.num_uavs]),
        residuals=residuals,
        feasible=all(v <= tol for v in residuals.values()),
    )

"""Dual-loop penalty/multiplier solver for the joint offloading problem.

The binary offloading variables are relaxed to [0,1] and tied to auxiliary
copies through two coupling identities, ``x*(aux-1) = 0`` and ``x - aux = 0``,
enforced by an augmented-Lagrangian penalty.  The outer loop tunes the
multipliers when the coupling violation is small and shrinks the penalty
parameter otherwise; the inner loop block-optimizes

1. the auxiliary copies (closed form),
2. offloading fractions + CPU frequencies + unit durations (convex program
   with convexified product terms, trajectory held fixed),
3. UAV trajectories + communication durations (convex program with
   linearized rate terms, assignment held fixed),

each block through :mod:`uavmec.subproblems`.  Every convexified term is an
upper bound that is tight at the current iterate, so accepted block updates
never increase the tracked objective; a guard keeps the previous iterate
when a solver fails or returns an ascent step.

Once the coupling violation is driven below tolerance, the fractions are
snapped to one-hot and a final frozen-assignment re-solve restores an exactly
feasible integral plan.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import scenario as sm
from . import trajectories


@dataclass
class PddConfig:
    rho0: float = 0.1                 # initial penalty parameter
    decay: float = 0.9                # penalty shrink factor (in (0,1))
    eta0: float = 1e-3                # initial coupling-violation slack
    inner_tol: float = 1e-3           # objective-change tolerance, inner loop
    outer_tol: float = 1e-10          # violation tolerance, outer loop
    max_inner: int = 20
    max_outer: int = 50
    optimize_trajectory: bool = True
    circle_radius: float = 5.0        # starting trajectory
    freq_floor: float = 1e6           # Hz, keeps 1/f terms in-domain
    tau_floor: float = 1e-4           # s, keeps 1/tau terms in-domain
    aux_floor: float = 1e-3           # floor for induced-power slacks
    solver_tol: float = 1e-6
    descent_slack: float = 1e-9       # acceptance slack on block descent
    feas_tol: float = 1e-6


@dataclass
class PddState:
    aux: np.ndarray                   # (S, M+1) auxiliary copies of x
    lam1: np.ndarray                  # (S, M+1) multiplier, product coupling
    lam2: np.ndarray                  # (S, M+1) multiplier, difference coupling
    rho: float
    eta: float
    decay: float
    outer_iter: int = 0
    inner_iter: int = 0
    h_history: list = field(default_factory=list)


@dataclass
class TraceRow:
    outer: int
    inner: int
    block: str
    al_objective: float
    true_cost: float
    violation: float
    rho: float
    max_residual: float
    accepted: bool
    restore: bool


@dataclass
class PddResult:
    decision: sm.Decision
    metrics: sm.MetricsReport
    status: str                       # converged | max-outer | infeasible | stalled
    h_trace: list[float]
    trace: list[TraceRow]
    outer_iters: int
    rounding_warn: bool
    runtime_s: float
    fractional_cost: float | None = None


# --------------------------------------------------------------------------
# flat index over sub-tasks, edges and device pairs
# --------------------------------------------------------------------------

class ProblemIndex:
    """Flattened view of (scenario, graph) used by every optimization block.

    Interior sub-tasks get contiguous ids ``0..S-1``; an offload choice ``c``
    of sub-task ``s`` maps to a physical device through :meth:`choice_device`.
    Edges carry either variable endpoints (interior node ids) or fixed
    endpoints (source/sink pinned to the owning TD).
    """

    def __init__(self, scn: sm.Scenario, graph):
        self.scn, self.graph = scn, graph
        self.subtasks: list[tuple[int, int]] = []
        self.sub_id: dict[tuple[int, int], int] = {}
        for u in range(graph.num_tds):
            for k in range(1, graph.sink_index(u)):
                self.sub_id[(u, k)] = len(self.subtasks)
                self.subtasks.append((u, k))
        self.S = len(self.subtasks)
        self.M = scn.num_uavs
        self.owner = np.array([u for (u, _) in self.subtasks], dtype=int)
        self.slot_of = np.array([graph.node_slot(u, k) for (u, k) in self.subtasks],
                                dtype=int)
        self.c_bits = np.array([graph.compute_bits_of(u, k) for (u, k) in self.subtasks])
        self.slot_subs: list[list[int]] = [[] for _ in range(scn.num_slots)]
        for s, n in enumerate(self.slot_of):
            self.slot_subs[n].append(s)

        # ordered physical pairs that can ever carry data
        self.pairs: list[tuple[int, int]] = []
        for m in range(self.M):
            for m2 in range(self.M):
                if m != m2:
                    self.pairs.append((m, m2))
        for u in range(scn.num_tds):
            td = scn.td_device(u)
            for m in range(self.M):
                self.pairs.append((td, m))
                self.pairs.append((m, td))
        self.pair_id = {p: i for i, p in enumerate(self.pairs)}
        self.P = len(self.pairs)

        # edges grouped by the slot whose communication unit moves them
        self.slot_pair_edges: list[dict[int, list]] = [dict() for _ in range(scn.num_slots)]
        for n in range(scn.num_slots):
            for (u, k, k2, bits) in graph.slot_edges(n):
                src = self._ref(u, k)
                dst = self._ref(u, k2)
                for pid, (z, z2) in enumerate(self.pairs):
                    ca = self._choice(src, z, u)
                    cb = self._choice(dst, z2, u)
                    if ca is None or cb is None:
                        continue
                    self.slot_pair_edges[n].setdefault(pid, []).append((ca, cb, bits))

    def _ref(self, u: int, k: int):
        if self.graph.is_interior(u, k):
            return ("var", self.sub_id[(u, k)])
        return ("fixed", u)

    def _choice(self, ref, z: int, u: int):
        """Coefficient of ``ref`` landing on device ``z``: ('var', s, c),
        ('one',) for a pinned match, or None when structurally zero."""
        kind = ref[0]
        if kind == "fixed":
            return ("one",) if z == self.scn.td_device(u) else None
        s = ref[1]
        if self.scn.is_uav(z):
            return ("var", s, z + 1)
        if z == self.scn.td_device(self.owner[s]):
            return ("var", s, 0)
        return None

    def choice_device(self, s: int, c: int) -> int:
        return self.scn.td_device(self.owner[s]) if c == 0 else c - 1

    def pair_power(self, pid: int) -> float:
        return self.scn.tx_power(self.pairs[pid][0])

    def pair_rate(self, pid: int, q_t: np.ndarray) -> float:
        a, b = self.pairs[pid]
        g = sm.channel_gain(self.scn, a, b, self.scn.device_position(a, q_t),
                            self.scn.device_position(b, q_t))
        return sm.link_rate(self.scn, a, b, g)

    # --- decision <-> flat arrays ---------------------------------------

    def flat_x(self, decision: sm.Decision) -> np.ndarray:
        if self.S == 0:
            return np.zeros((0, self.M + 1))
        return np.vstack([decision.offload[u][k - 1] for (u, k) in self.subtasks])

    def flat_f(self, decision: sm.Decision) -> np.ndarray:
        if self.S == 0:
            return np.zeros((0, self.M + 1))
        return np.vstack([decision.freq[u][k - 1] for (u, k) in self.subtasks])

    def put_x(self, decision: sm.Decision, x: np.ndarray) -> None:
        for s, (u, k) in enumerate(self.subtasks):
            decision.offload[u][k - 1] = x[s]

    def put_f(self, decision: sm.Decision, f: np.ndarray) -> None:
        for s, (u, k) in enumerate(self.subtasks):
            decision.freq[u][k - 1] = f[s]

    def pair_data(self, x: np.ndarray, n: int) -> np.ndarray:
        """Data volume per pair in slot ``n`` for flat fractions ``x`` (bits)."""
        out = np.zeros(self.P)
        for pid, edges in self.slot_pair_edges[n].items():
            acc = 0.0
            for (ca, cb, bits) in edges:
                va = 1.0 if ca[0] == "one" else x[ca[1], ca[2]]
                vb = 1.0 if cb[0] == "one" else x[cb[1], cb[2]]
                acc += va * vb * bits
            out[pid] = acc
        return out


# --------------------------------------------------------------------------
# closed-form pieces
# --------------------------------------------------------------------------

def update_auxiliary(x: np.ndarray, lam1: np.ndarray, lam2: np.ndarray,
                     rho: float) -> np.ndarray:
    """Stationary point of the penalty term in the auxiliary copies.

    Derived by zeroing the derivative of
    ``(x*(aux-1) + rho*lam1)^2 + (x - aux + rho*lam2)^2`` in ``aux``,
    then clipping to the box.
    """
    aux = (x * x + x - rho * lam1 * x + rho * lam2) / (x * x + 1.0)
    return np.clip(aux, 0.0, 1.0)


def violation_indicator(x: np.ndarray, aux: np.ndarray) -> float:
    """Worst squared residual of the two binariness couplings."""
    if x.size == 0:
        return 0.0
    prod = (x * (aux - 1.0)) ** 2
    diff = (x - aux) ** 2
    return float(max(prod.max(), diff.max()))


def bilinear_surrogate(a, b, a_j, b_j):
    """Convex upper bound on ``a*b``, tight at the expansion point.

    ``(a+b)^2/2`` keeps the convex half of the product identity; the two
    concave squares are replaced by their tangents at ``(a_j, b_j)``.
    """
    return ((np.asarray(a) + np.asarray(b)) ** 2 / 2.0
            - (2.0 * np.asarray(a) * a_j - np.asarray(a_j) ** 2) / 2.0
            - (2.0 * np.asarray(b) * b_j - np.asarray(b_j) ** 2) / 2.0)


def round_binaries(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Snap fractions to one-hot rows; ties go to the smallest choice index."""
    out = np.zeros_like(x)
    warn = False
    for s in range(x.shape[0]):
        best = int(np.argmax(x[s]))
        out[s, best] = 1.0
        if x[s, best] < 0.5:
            warn = True
    return out, warn


def penalty_term(x: np.ndarray, aux: np.ndarray, lam1: np.ndarray,
                 lam2: np.ndarray, rho: float) -> float:
    psi = (x * (aux - 1.0) + rho * lam1) ** 2 + (x - aux + rho * lam2) ** 2
    return float(psi.sum()) / (2.0 * rho)


# --------------------------------------------------------------------------
# tracked objective
# --------------------------------------------------------------------------

def slack_cost(scn: sm.Scenario, idx: ProblemIndex, decision: sm.Decision) -> float:
    """Inner-loop cost: declared durations, whole-window comm energy.

    This is the objective the blocks actually optimize: delay as the sum of
    declared unit durations, communication energy charged as transmit power
    times the communication window, computation and flight energy exact.
    """
    delay = float(decision.tau1.sum() + decision.tau2.sum())
    k_comm = float(sum(scn.w_com[z] * scn.tx_power(z) for z in range(scn.num_devices)))
    comm = k_comm * float(decision.tau2.sum())
    x = idx.flat_x(decision)
    f = idx.flat_f(decision)
    comp = 0.0
    for s in range(idx.S):
        for c in range(idx.M + 1):
            dev = idx.choice_device(s, c)
            comp += scn.w_com[dev] * x[s, c] * idx.c_bits[s] \
                * scn.cycles_per_bit[dev] * scn.capacitance[dev] * f[s, c] ** 2
    fly = 0.0
    dt = decision.unit_durations()
    for m in range(scn.num_uavs):
        for t in range(1, 2 * scn.num_slots + 1):
            dist = float(np.linalg.norm(decision.traj[m, t + 1] - decision.traj[m, t]))
            fly += scn.w_fly[m] * sm.unit_flight_energy(scn, dist, max(dt[t], 1e-12))
    return scn.w_time * delay + comm + comp + fly


def al_objective(scn: sm.Scenario, idx: ProblemIndex, decision: sm.Decision,
                 state: PddState) -> float:
    x = idx.flat_x(decision)
    return slack_cost(scn, idx, decision) + penalty_term(
        x, state.aux, state.lam1, state.lam2, state.rho)


# --------------------------------------------------------------------------
# initialization
# --------------------------------------------------------------------------

def init(scn: sm.Scenario, graph, cfg: PddConfig | None = None,
         idx: ProblemIndex | None = None) -> tuple[sm.Decision, PddState]:
    """Uniform-fraction start with equal CPU splits and the circular path.

    The start satisfies the assignment and cap constraints exactly; unit
    durations come from evaluating the timing formulas on the split (the
    deadline may still be violated here; the first convex block restores it
    when the instance admits any feasible plan).
    """
    cfg = cfg or PddConfig()
    idx = idx or ProblemIndex(scn, graph)
    m = scn.num_uavs
    offload, freq = [], []
    for u in range(graph.num_tds):
        k_u = graph.interior_count(u)
        offload.append(np.full((k_u, m + 1), 1.0 / (m + 1)))
        freq.append(np.zeros((k_u, m + 1)))
    for n in range(scn.num_slots):
        subs = idx.slot_subs[n]
        if not subs:
            continue
        per_td: dict[int, int] = {}
        for s in subs:
            per_td[idx.owner[s]] = per_td.get(idx.owner[s], 0) + 1
        for s in subs:
            u, k = idx.subtasks[s]
            freq[u][k - 1, 0] = scn.td_cpu_max / per_td[u]
            freq[u][k - 1, 1:] = scn.uav_cpu_max / len(subs)

    decision = sm.Decision(offload=offload, freq=freq,
                           tau1=np.zeros(scn.num_slots), tau2=np.zeros(scn.num_slots),
                           traj=trajectories.hover(scn))
    _set_tight_durations(scn, graph, decision, cfg)
    decision.traj = trajectories.circle(scn, cfg.circle_radius,
                                        decision.unit_durations())
    _set_tight_durations(scn, graph, decision, cfg)

    x = idx.flat_x(decision)
    state = PddState(aux=x.copy(), lam1=np.zeros_like(x), lam2=np.zeros_like(x),
                     rho=cfg.rho0, eta=cfg.eta0, decay=cfg.decay)
    return decision, state


def _set_tight_durations(scn, graph, decision, cfg):
    for n in range(scn.num_slots):
        decision.tau1[n] = max(sm.comp_times(scn, graph, decision, n).max(),
                               cfg.tau_floor)
        decision.tau2[n] = max(sm.comm_times(scn, graph, decision, n).max(),
                               cfg.tau_floor)


# --------------------------------------------------------------------------
# loops
# --------------------------------------------------------------------------

def _decision_feasible(scn, graph, decision, tol) -> bool:
    res = sm.constraint_residuals(scn, graph, decision)
    return all(v <= tol for v in res.values())


def _guarded_accept(scn, graph, idx, state, cfg, old, old_al, cand,
                    old_feasible: bool):
    """Monotone block acceptance: feasibility restoration bypasses the guard."""
    if cand is None:
        return old, old_al, False, False
    cand_al = al_objective(scn, idx, cand, state)
    if not old_feasible:
        return cand, cand_al, True, True
    if cand_al <= old_al + cfg.descent_slack:
        return cand, cand_al, True, False
    return old, old_al, False, False


def inner_loop(scn, graph, idx, blocks, decision: sm.Decision, state: PddState,
               cfg: PddConfig, trace: list[TraceRow], outer: int):
    """One multiplier-fixed pass: cycle the three blocks to a stationary point."""
    al_prev = None
    status = "ok"
    for j in range(cfg.max_inner):
        state.inner_iter = j
        x = idx.flat_x(decision)
        state.aux = update_auxiliary(x, state.lam1, state.lam2, state.rho)
        al_now = al_objective(scn, idx, decision, state)
        feasible = _decision_feasible(scn, graph, decision, cfg.feas_tol)
        any_accept = False

        for name, block in blocks:
            if block is None:
                continue
            cand = block.solve(decision, state)
            decision, al_now, accepted, restored = _guarded_accept(
                scn, graph, idx, state, cfg, decision, al_now, cand, feasible)
            if accepted:
                any_accept = True
                feasible = _decision_feasible(scn, graph, decision, cfg.feas_tol)
            rep = sm.system_cost(scn, graph, decision)
            trace.append(TraceRow(
                outer=outer, inner=j, block=name, al_objective=al_now,
                true_cost=rep.total_cost,
                violation=violation_indicator(idx.flat_x(decision), state.aux),
                rho=state.rho, max_residual=max(rep.residuals.values()),
                accepted=accepted, restore=restored))

        if not any_accept and j > 0:
            status = "stalled"
            break
        if al_prev is not None and abs(al_prev - al_now) < cfg.inner_tol:
            break
        al_prev = al_now
    return decision, status


def outer_loop(scn, graph, seed: int = 0, cfg: PddConfig | None = None) -> PddResult:
    """Full dual-loop run: relax, iterate, round, repair, score."""
    from . import subproblems

    t0 = time.time()
    cfg = cfg or PddConfig()
    idx = ProblemIndex(scn, graph)
    decision, state = init(scn, graph, cfg, idx)

    offload_block = subproblems.OffloadFreqBlock(scn, graph, idx, cfg)
    traj_block = (subproblems.TrajectoryBlock(scn, graph, idx, cfg)
                  if cfg.optimize_trajectory else None)
    blocks = [("offload_freq", offload_block), ("trajectory", traj_block)]

    trace: list[TraceRow] = []
    h_trace: list[float] = []
    status = "max-outer"
    for l in range(cfg.max_outer):
        state.outer_iter = l
        decision, inner_status = inner_loop(scn, graph, idx, blocks, decision,
                                            state, cfg, trace, l)
        if inner_status == "stalled" and l == 0:
            if not _decision_feasible(scn, graph, decision, cfg.feas_tol):
                elapsed = time.time() - t0
                return PddResult(decision=decision,
                                 metrics=sm.system_cost(scn, graph, decision),
                                 status="infeasible", h_trace=h_trace, trace=trace,
                                 outer_iters=l + 1, rounding_warn=False,
                                 runtime_s=elapsed)
        x = idx.flat_x(decision)
        h = violation_indicator(x, state.aux)
        h_trace.append(h)
        state.h_history.append(h)
        if h < cfg.outer_tol:
            status = "converged"
            break
        if h <= state.eta:
            state.lam1 = state.lam1 + x * (state.aux - 1.0) / state.rho
            state.lam2 = state.lam2 + (x - state.aux) / state.rho
        else:
            state.rho *= cfg.decay
        state.eta = 0.7 * h

    fractional_cost = sm.system_cost(scn, graph, decision).total_cost
    x_int, warn = round_binaries(idx.flat_x(decision))
    idx.put_x(decision, x_int)
    repair = subproblems.FrozenAssignmentBlock(scn, graph, idx, cfg, decision.traj)
    repaired = repair.solve(x_int)
    if repaired is not None:
        idx.put_f(decision, repaired["freq"])
        decision.tau1 = repaired["tau1"]
        decision.tau2 = repaired["tau2"]
    metrics = sm.system_cost(scn, graph, decision)
    return PddResult(decision=decision, metrics=metrics, status=status,
                     h_trace=h_trace, trace=trace, outer_iters=len(h_trace),
                     rounding_warn=warn, runtime_s=time.time() - t0,
                     fractional_cost=fractional_cost)

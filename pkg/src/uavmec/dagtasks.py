"""Per-TD DAGs of interdependent sub-tasks and their slot layering.

Each task is a layered DAG: node 0 is the source (the input upload), interior
nodes carry compute bits, and the last node is the sink (the result
download).  Layers map one-to-one onto time slots: the source layer owns
slot 0 (its communication unit carries the upload), interior layer ``j``
computes in slot ``j``'s computation unit and ships its outputs in that
slot's communication unit, and the sink receives during the final slot's
communication unit.  A scenario with ``N`` slots therefore carries ``N-1``
interior layers.

Every edge points to a strictly later layer, so one layer per slot is enough
to honor all dependencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FORMAT_HEADER = "uavmec-taskgraph v1"


@dataclass
class TaskGraph:
    """Immutable-after-construction DAG bundle for all TDs of one instance.

    Per TD ``u``: ``compute_bits[u]`` has ``K_u + 2`` entries (source and sink
    are zero), ``layers[u]`` gives each node's layer (0 source, ``L+1`` sink),
    ``edges[u]`` holds ``(k, k2, bits)`` with ``layer[k] < layer[k2]``.
    """

    num_slots: int
    num_tds: int
    compute_bits: list[np.ndarray]
    layers: list[np.ndarray]
    edges: list[list[tuple[int, int, float]]]
    deadlines: np.ndarray = field(default=None)

    # --- structure queries ----------------------------------------------

    def interior_count(self, u: int) -> int:
        return len(self.compute_bits[u]) - 2

    def sink_index(self, u: int) -> int:
        return len(self.compute_bits[u]) - 1

    def is_interior(self, u: int, k: int) -> bool:
        return 0 < k < self.sink_index(u)

    def total_interior_bits(self, u: int) -> float:
        return float(self.compute_bits[u][1:-1].sum())

    def compute_bits_of(self, u: int, k: int) -> float:
        return float(self.compute_bits[u][k])

    def node_slot(self, u: int, k: int) -> int | None:
        """Slot whose computation unit runs this node (None for the sink)."""
        lay = int(self.layers[u][k])
        if k == self.sink_index(u):
            return None
        return lay

    def slot_nodes(self, n: int) -> list[tuple[int, int]]:
        """All nodes computed in slot ``n`` (sources appear in slot 0)."""
        out = []
        for u in range(self.num_tds):
            for k in range(self.sink_index(u)):
                if int(self.layers[u][k]) == n:
                    out.append((u, k))
        return out

    def slot_edges(self, n: int) -> list[tuple[int, int, int, float]]:
        """Edges whose data moves in slot ``n``'s communication unit."""
        out = []
        for u in range(self.num_tds):
            for (k, k2, bits) in self.edges[u]:
                if k != self.sink_index(u) and int(self.layers[u][k]) == n:
                    out.append((u, k, k2, bits))
        return out

    def successors(self, u: int, k: int) -> list[int]:
        return [k2 for (a, k2, _) in self.edges[u] if a == k]

    def predecessors(self, u: int, k: int) -> list[int]:
        return [a for (a, k2, _) in self.edges[u] if k2 == k]

    def compute_bits_total(self) -> float:
        return float(sum(b[1:-1].sum() for b in self.compute_bits))


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------

def generate(scn, seed: int, layers: int | None = None,
             subtasks_per_layer=(1, 3), workload_mbits=(0.8, 1.0),
             edge_mbits=(0.1, 0.2), input_mbits=(1.5, 3.0),
             dependency_coeff: float = 0.02,
             min_assignable_freq: float = 1.5e9) -> TaskGraph:
    """Layer-by-layer random construction of every TD's DAG.

    ``layers`` counts interior layers and defaults to ``N - 1`` so the built
    graph fills the scenario's slot structure exactly.  Per interior layer
    the node count is uniform on ``subtasks_per_layer``; workloads and edge
    volumes are uniform on their Mbit ranges.  Each node draws its successor
    count from ``[1, max(1, dependency_coeff * (K - k))]`` among strictly
    later layers; last-layer nodes feed the sink.  The source fans out to
    every first-layer node with an input-volume edge, and any node left
    without a predecessor gets a repair edge from the previous layer so all
    data provably flows source to sink.

    Deadlines allot each task the time it would need at a flat
    ``min_assignable_freq``.
    """
    if layers is None:
        layers = scn.num_slots - 1
    if layers < 1:
        raise ValueError("need at least one interior layer")
    lo, hi = int(subtasks_per_layer[0]), int(subtasks_per_layer[1])
    if lo < 1 or hi < lo:
        raise ValueError("bad subtasks_per_layer range")
    for rng_pair in (workload_mbits, edge_mbits, input_mbits):
        if rng_pair[0] <= 0 or rng_pair[1] < rng_pair[0]:
            raise ValueError("ranges must be positive and ordered")

    rng = np.random.default_rng(seed)
    all_bits, all_layers, all_edges = [], [], []
    for u in range(scn.num_tds):
        counts = rng.integers(lo, hi + 1, size=layers)
        k_total = int(counts.sum())
        bits = np.zeros(k_total + 2)
        lay = np.zeros(k_total + 2, dtype=int)
        lay[-1] = layers + 1
        node = 1
        layer_nodes: list[list[int]] = [[] for _ in range(layers + 1)]
        for j in range(1, layers + 1):
            for _ in range(counts[j - 1]):
                bits[node] = rng.uniform(*workload_mbits) * 1e6
                lay[node] = j
                layer_nodes[j].append(node)
                node += 1
        sink = k_total + 1
        edges: list[tuple[int, int, float]] = []
        for k in range(1, k_total + 1):
            j = int(lay[k])
            if j == layers:
                edges.append((k, sink, rng.uniform(*edge_mbits) * 1e6))
                continue
            cap = max(1, int(dependency_coeff * (k_total - k)))
            later = [n2 for j2 in range(j + 1, layers + 1) for n2 in layer_nodes[j2]]
            n_suc = int(rng.integers(1, cap + 1))
            n_suc = min(n_suc, len(later))
            chosen = rng.choice(len(later), size=n_suc, replace=False)
            for idx in sorted(chosen):
                edges.append((k, later[idx], rng.uniform(*edge_mbits) * 1e6))
        for k in layer_nodes[1]:
            edges.append((0, k, rng.uniform(*input_mbits) * 1e6))
        # repair: orphaned nodes in layers >= 2 pull data from the previous layer
        has_pred = {k2 for (_, k2, _) in edges}
        for j in range(2, layers + 1):
            for k in layer_nodes[j]:
                if k not in has_pred:
                    src = layer_nodes[j - 1][int(rng.integers(len(layer_nodes[j - 1])))]
                    edges.append((src, k, rng.uniform(*edge_mbits) * 1e6))
        edges.sort()
        all_bits.append(bits)
        all_layers.append(lay)
        all_edges.append(edges)

    deadlines = np.array([
        all_bits[u][1:-1].sum() * scn.cycles_per_bit[scn.td_device(u)] / min_assignable_freq
        for u in range(scn.num_tds)])
    return TaskGraph(num_slots=scn.num_slots, num_tds=scn.num_tds,
                     compute_bits=all_bits, layers=all_layers,
                     edges=all_edges, deadlines=deadlines)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def validate(graph: TaskGraph) -> list[str]:
    """Return the list of broken invariants (empty when the graph is sound)."""
    bad: list[str] = []
    for u in range(graph.num_tds):
        bits = graph.compute_bits[u]
        lay = graph.layers[u]
        sink = graph.sink_index(u)
        if bits[0] != 0.0:
            bad.append(f"td{u}: source carries compute bits")
        if bits[sink] != 0.0:
            bad.append(f"td{u}: sink carries compute bits")
        if np.any(bits[1:sink] <= 0.0):
            bad.append(f"td{u}: interior node with nonpositive workload")
        if lay[0] != 0:
            bad.append(f"td{u}: source not in layer 0")
        n_layers = int(lay[sink])
        if n_layers != graph.num_slots:
            bad.append(f"td{u}: sink layer {n_layers} != slot count {graph.num_slots}")
        for (k, k2, bits_e) in graph.edges[u]:
            if not (0 <= k <= sink and 0 <= k2 <= sink):
                bad.append(f"td{u}: edge ({k},{k2}) out of range")
                continue
            if lay[k] >= lay[k2]:
                bad.append(f"td{u}: edge ({k},{k2}) not layer-increasing (acyclicity)")
            if bits_e < 0:
                bad.append(f"td{u}: edge ({k},{k2}) with negative volume")
        if graph.predecessors(u, 0):
            bad.append(f"td{u}: source has predecessors")
        if graph.successors(u, sink):
            bad.append(f"td{u}: sink has successors")
        for k in range(1, sink):
            if not graph.predecessors(u, k):
                bad.append(f"td{u}: node {k} unreachable from source")
            if not graph.successors(u, k):
                bad.append(f"td{u}: node {k} cannot reach sink")
    return bad


# --------------------------------------------------------------------------
# priorities
# --------------------------------------------------------------------------

def rbfs_priority(graph: TaskGraph) -> list[tuple[int, int]]:
    """Reverse breadth-first priorities across all TDs.

    Walk from each sink backwards level by level: a node's depth is one more
    than its deepest successor (sink depth 0), so emitting by decreasing
    depth always respects dependencies.  Ties break by (TD index, node
    index), which also fixes the interleaving between TDs.
    """
    order: list[tuple[int, int, int]] = []
    for u in range(graph.num_tds):
        sink = graph.sink_index(u)
        lay = graph.layers[u]
        depth = np.zeros(sink + 1, dtype=int)
        for k in sorted(range(sink + 1), key=lambda k: -int(lay[k])):
            sucs = graph.successors(u, k)
            if sucs:
                depth[k] = 1 + max(depth[s] for s in sucs)
            elif k != sink:
                raise ValueError(f"td{u}: node {k} has no path to the sink")
        for k in range(sink + 1):
            order.append((-int(depth[k]), u, k))
    order.sort()
    return [(u, k) for (_, u, k) in order]


# --------------------------------------------------------------------------
# serialization (line-oriented, diff-friendly)
# --------------------------------------------------------------------------

def dumps(graph: TaskGraph) -> str:
    lines = [FORMAT_HEADER,
             f"slots {graph.num_slots}",
             f"tds {graph.num_tds}"]
    for u in range(graph.num_tds):
        lines.append(f"deadline {u} {float(graph.deadlines[u])!r}")
    for u in range(graph.num_tds):
        for k in range(len(graph.compute_bits[u])):
            lines.append(
                f"node {u} {k} {int(graph.layers[u][k])} {float(graph.compute_bits[u][k])!r}")
    for u in range(graph.num_tds):
        for (k, k2, bits) in graph.edges[u]:
            lines.append(f"edge {u} {k} {k2} {float(bits)!r}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> TaskGraph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != FORMAT_HEADER:
        raise ValueError("not a task-graph file (bad header)")
    num_slots = num_tds = None
    deadlines: dict[int, float] = {}
    nodes: dict[int, dict[int, tuple[int, float]]] = {}
    edges: dict[int, list[tuple[int, int, float]]] = {}
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "slots":
            num_slots = int(parts[1])
        elif parts[0] == "tds":
            num_tds = int(parts[1])
        elif parts[0] == "deadline":
            deadlines[int(parts[1])] = float(parts[2])
        elif parts[0] == "node":
            u, k, lay, bits = int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])
            nodes.setdefault(u, {})[k] = (lay, bits)
        elif parts[0] == "edge":
            u, k, k2, bits = int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])
            edges.setdefault(u, []).append((k, k2, bits))
        else:
            raise ValueError(f"unknown record {parts[0]!r}")
    if num_slots is None or num_tds is None:
        raise ValueError("missing slots/tds records")
    all_bits, all_layers, all_edges = [], [], []
    for u in range(num_tds):
        ks = sorted(nodes[u])
        if ks != list(range(len(ks))):
            raise ValueError(f"td{u}: non-contiguous node ids")
        all_bits.append(np.array([nodes[u][k][1] for k in ks]))
        all_layers.append(np.array([nodes[u][k][0] for k in ks], dtype=int))
        all_edges.append(sorted(edges.get(u, [])))
    dl = np.array([deadlines[u] for u in range(num_tds)])
    return TaskGraph(num_slots=num_slots, num_tds=num_tds, compute_bits=all_bits,
                     layers=all_layers, edges=all_edges, deadlines=dl)


def save(graph: TaskGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(graph))


def load(path: str) -> TaskGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())

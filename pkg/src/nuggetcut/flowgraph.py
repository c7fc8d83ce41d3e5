"""Capacitated s-t graph construction, max-flow solving, cut extraction.

Graph layout for a lattice of R rays x n nodes (node id = ray * n + index):

* intra arcs: (r, i) -> (r, i-1) with infinite capacity, directed inward.
  A finite cut can pass between consecutive nodes in the free direction,
  but any source-side node drags every node inside it along - the cut's
  source side is a contiguous inner run per ray (closed set).
* inter arcs: for every adjacent ray pair, both orientations and every
  level i, (r, i) -> (q, max(i - delta_r, 0)) with infinite capacity.
  A finite cut therefore satisfies |k_r - k_q| <= delta_r.
* terminal arcs: a node with positive weight w gets s->v capacity w, a
  negative weight gets v->t capacity -w, zero gets none - at most one
  terminal arc per node.
* forced assignments override terminal weights with the infinity
  sentinel, and every innermost node (r, 0) is forced to foreground.

Infinity is the finite sentinel INF_CAP = float64 max / 2**32: summing
one sentinel per arc over millions of arcs cannot overflow, and it still
exceeds any finite terminal weight by far more than the required 1e9x.

The solver is a dual-search-tree augmenting-path algorithm
(grow / augment / adopt) over index-linked arc arrays with forward and
reverse arcs paired by index XOR; ties break by arc insertion order, so
results are reproducible.  Instances too large for the Python solver to
meet the interactive budget are delegated to scipy's C Dinic solver on
deterministically scaled integer capacities; the source side is the
s-reachable set of the final residual graph either way, which is the
same minimal min-cut for every maximum flow.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .errors import ClosedSetViolationError, ConstraintConflictError
from .geometry import RayLattice

INF_CAP = np.finfo(np.float64).max / 2.0 ** 32

# Largest node count still solved by the Python dual-tree engine when the
# caller does not pick one explicitly.
BK_AUTO_NODE_LIMIT = 3000

# scipy's solver is only reliable for capacities below 2**31 regardless of
# the matrix dtype, so scaled capacities are kept inside an int32 budget:
# the sentinel is 2**30 and the sum of all finite capacities (an upper
# bound on any finite cut value) stays below 2**29.
_INT_INF = 2 ** 30
_SCALE_BUDGET = 2.0 ** 29
_MAX_SCALE = 2.0 ** 20


@dataclass(frozen=True)
class FlowGraph:
    """Directed arcs between lattice nodes plus per-node terminal capacities
    toward the implicit source s and sink t."""

    node_count: int
    arc_from: np.ndarray = field(repr=False)
    arc_to: np.ndarray = field(repr=False)
    arc_cap: np.ndarray = field(repr=False)
    cap_source: np.ndarray = field(repr=False)
    cap_sink: np.ndarray = field(repr=False)

    def __post_init__(self):
        arc_from = np.ascontiguousarray(self.arc_from, dtype=np.int64)
        arc_to = np.ascontiguousarray(self.arc_to, dtype=np.int64)
        arc_cap = np.ascontiguousarray(self.arc_cap, dtype=np.float64)
        cap_source = np.ascontiguousarray(self.cap_source, dtype=np.float64)
        cap_sink = np.ascontiguousarray(self.cap_sink, dtype=np.float64)
        n = int(self.node_count)
        if len(arc_from) != len(arc_to) or len(arc_from) != len(arc_cap):
            raise ValueError("arc arrays must have equal length")
        if len(cap_source) != n or len(cap_sink) != n:
            raise ValueError("terminal arrays must have node_count entries")
        if np.any(arc_cap < 0) or np.any(cap_source < 0) or np.any(cap_sink < 0):
            raise ValueError("capacities must be >= 0")
        if len(arc_from) and (arc_from.min() < 0 or arc_from.max() >= n
                              or arc_to.min() < 0 or arc_to.max() >= n):
            raise ValueError("arc endpoints must be valid node indices")
        if np.any(arc_from == arc_to):
            raise ValueError("self-loop arcs are not allowed")
        for a in (arc_from, arc_to, arc_cap, cap_source, cap_sink):
            a.flags.writeable = False
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "arc_from", arc_from)
        object.__setattr__(self, "arc_to", arc_to)
        object.__setattr__(self, "arc_cap", arc_cap)
        object.__setattr__(self, "cap_source", cap_source)
        object.__setattr__(self, "cap_sink", cap_sink)

    @property
    def arc_count(self) -> int:
        return len(self.arc_from)


@dataclass(frozen=True)
class CutResult:
    """Maximum flow value and the s-reachable side of the residual graph."""

    flow_value: float
    source_side: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CutIndices:
    """Per-ray index of the outermost source-side node (-1: none)."""

    k: np.ndarray = field(repr=False)
    nodes_per_ray: int

    def cut_radii_mm(self, lattice: RayLattice) -> np.ndarray:
        return (self.k + 1) * lattice.node_spacing_mm


def build_graph(
    lattice: RayLattice,
    tlinks: np.ndarray,
    delta_r: int,
    constraints=(),
) -> FlowGraph:
    """Assemble the capacitated graph for ``lattice``.

    ``tlinks`` holds one signed terminal weight per node, shaped
    (ray_count, nodes_per_ray) or flat.  ``constraints`` is an iterable of
    (ray, index, foreground: bool) forced assignments.
    """
    rays = lattice.ray_count
    n = lattice.nodes_per_ray
    if delta_r < 0:
        raise ValueError(f"delta_r must be >= 0, got {delta_r}")
    w = np.asarray(tlinks, dtype=np.float64).reshape(rays, n)
    node_count = rays * n

    # (a) intra arcs, directed inward along each ray.
    idx = np.arange(1, n, dtype=np.int64)
    ray_idx = np.arange(rays, dtype=np.int64)
    intra_from = (ray_idx[:, None] * n + idx[None, :]).reshape(-1)
    intra_to = intra_from - 1

    # (b) inter arcs between adjacent rays, both orientations, all levels.
    pairs = lattice.adjacency
    levels = np.arange(n, dtype=np.int64)
    targets = np.maximum(levels - delta_r, 0)
    src_rays = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst_rays = np.concatenate([pairs[:, 1], pairs[:, 0]])
    inter_from = (src_rays[:, None] * n + levels[None, :]).reshape(-1)
    inter_to = (dst_rays[:, None] * n + targets[None, :]).reshape(-1)

    arc_from = np.concatenate([intra_from, inter_from])
    arc_to = np.concatenate([intra_to, inter_to])
    arc_cap = np.full(len(arc_from), INF_CAP)

    # (c) terminal arcs from the sign of the weight; one side per node.
    cap_source = np.where(w > 0, w, 0.0).reshape(-1)
    cap_sink = np.where(w < 0, -w, 0.0).reshape(-1)

    # (d) forced assignments override the weight-derived arcs.
    forced_fg = np.zeros(node_count, dtype=bool)
    forced_bg = np.zeros(node_count, dtype=bool)
    for ray, index, foreground in constraints:
        if not (0 <= ray < rays and 0 <= index < n):
            raise ValueError(f"constraint ({ray}, {index}) outside lattice")
        node = ray * n + index
        if foreground:
            forced_fg[node] = True
        else:
            forced_bg[node] = True
    innermost = ray_idx * n
    conflict = forced_fg & forced_bg
    if np.any(forced_bg[innermost]):
        conflict = conflict.copy()
        conflict[innermost] |= forced_bg[innermost]
    if np.any(conflict):
        node = int(np.argmax(conflict))
        raise ConstraintConflictError(
            f"node (ray {node // n}, index {node % n}) forced to both sides"
        )
    cap_source[forced_fg] = INF_CAP
    cap_sink[forced_fg] = 0.0
    cap_sink[forced_bg] = INF_CAP
    cap_source[forced_bg] = 0.0
    # (e) the seed is inside the object: innermost nodes are foreground.
    # Their weight-derived sink arcs stay in place (always-crossing
    # constants), keeping the cut value equal to the lattice energy.
    cap_source[innermost] = INF_CAP

    return FlowGraph(node_count, arc_from, arc_to, arc_cap,
                     cap_source, cap_sink)


# ---------------------------------------------------------------------------
# Dual-search-tree augmenting-path solver
# ---------------------------------------------------------------------------

_FREE, _SOURCE_TREE, _SINK_TREE = 0, 1, 2


def _solve_bk(graph: FlowGraph) -> CutResult:
    n = graph.node_count
    s, t = n, n + 1
    fg = np.flatnonzero(graph.cap_source > 0)
    bg = np.flatnonzero(graph.cap_sink > 0)
    live = np.flatnonzero(graph.arc_cap > 0)
    m = len(fg) + len(bg) + len(live)

    # Paired arc arrays: forward at 2j, reverse (capacity 0) at 2j + 1.
    arc_src = np.empty(2 * m, dtype=np.int64)
    arc_dst = np.empty(2 * m, dtype=np.int64)
    cap = np.zeros(2 * m, dtype=np.float64)
    src_fwd = np.concatenate([
        np.full(len(fg), s, dtype=np.int64),
        bg,
        graph.arc_from[live],
    ])
    dst_fwd = np.concatenate([
        fg,
        np.full(len(bg), t, dtype=np.int64),
        graph.arc_to[live],
    ])
    cap_fwd = np.concatenate([
        graph.cap_source[fg], graph.cap_sink[bg], graph.arc_cap[live],
    ])
    arc_src[0::2] = src_fwd
    arc_dst[0::2] = dst_fwd
    arc_src[1::2] = dst_fwd
    arc_dst[1::2] = src_fwd
    cap[0::2] = cap_fwd

    order = np.argsort(arc_src, kind="stable")
    starts = np.searchsorted(arc_src[order], np.arange(n + 3))
    adj = [order[starts[u]:starts[u + 1]].tolist() for u in range(n + 2)]
    arc_src_l = arc_src.tolist()
    arc_dst_l = arc_dst.tolist()
    cap_l = cap.tolist()

    tree = [_FREE] * (n + 2)
    parent = [-1] * (n + 2)  # arc into the node (S) / out of the node (T)
    tree[s] = _SOURCE_TREE
    tree[t] = _SINK_TREE
    active = deque([s, t])
    orphans = deque()
    flow = 0.0

    def origin_valid(x):
        while True:
            if x == s or x == t:
                return True
            a = parent[x]
            if a < 0:
                return False
            x = arc_dst_l[a] if tree[x] == _SINK_TREE else arc_src_l[a]

    def grow():
        while active:
            u = active[0]
            if tree[u] == _FREE:
                active.popleft()
                continue
            u_tree = tree[u]
            for a in adj[u]:
                res = cap_l[a] if u_tree == _SOURCE_TREE else cap_l[a ^ 1]
                if res <= 0.0:
                    continue
                v = arc_dst_l[a]
                if tree[v] == _FREE:
                    tree[v] = u_tree
                    parent[v] = a if u_tree == _SOURCE_TREE else a ^ 1
                    active.append(v)
                elif tree[v] != u_tree:
                    # Meeting arc always reported source-side -> sink-side.
                    return a if u_tree == _SOURCE_TREE else a ^ 1
            active.popleft()
        return -1

    def augment(meet):
        bottleneck = cap_l[meet]
        x = arc_src_l[meet]
        while x != s:
            a = parent[x]
            bottleneck = min(bottleneck, cap_l[a])
            x = arc_src_l[a]
        x = arc_dst_l[meet]
        while x != t:
            a = parent[x]
            bottleneck = min(bottleneck, cap_l[a])
            x = arc_dst_l[a]

        def push(a):
            cap_l[a] -= bottleneck
            cap_l[a ^ 1] += bottleneck
            return cap_l[a] <= 0.0

        push(meet)
        x = arc_src_l[meet]
        while x != s:
            a = parent[x]
            if push(a):
                parent[x] = -1
                orphans.append(x)
            x = arc_src_l[a]
        x = arc_dst_l[meet]
        while x != t:
            a = parent[x]
            if push(a):
                parent[x] = -1
                orphans.append(x)
            x = arc_dst_l[a]
        return bottleneck

    def adopt():
        while orphans:
            x = orphans.popleft()
            x_tree = tree[x]
            found = False
            for a in adj[x]:
                # Arc that could feed x from a same-tree neighbor.
                res = cap_l[a ^ 1] if x_tree == _SOURCE_TREE else cap_l[a]
                if res <= 0.0:
                    continue
                v = arc_dst_l[a]
                if tree[v] != x_tree or not origin_valid(v):
                    continue
                parent[x] = (a ^ 1) if x_tree == _SOURCE_TREE else a
                found = True
                break
            if found:
                continue
            for a in adj[x]:
                v = arc_dst_l[a]
                if tree[v] != x_tree:
                    continue
                res = cap_l[a ^ 1] if x_tree == _SOURCE_TREE else cap_l[a]
                if res > 0.0:
                    active.append(v)
                pa = parent[v]
                if pa >= 0:
                    # v hung off x exactly when its parent arc is this arc
                    # (S tree stores the arc into v, T tree the arc out).
                    if (x_tree == _SOURCE_TREE and pa == a) or (
                            x_tree == _SINK_TREE and pa == (a ^ 1)):
                        parent[v] = -1
                        orphans.append(v)
            tree[x] = _FREE

    while True:
        meet = grow()
        if meet < 0:
            break
        flow += augment(meet)
        adopt()

    # Source side: s-reachable set of the final residual graph.
    reach = [False] * (n + 2)
    reach[s] = True
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for a in adj[u]:
            if cap_l[a] > 0.0:
                v = arc_dst_l[a]
                if not reach[v]:
                    reach[v] = True
                    queue.append(v)
    source_side = np.array(reach[:n], dtype=bool)
    return CutResult(flow_value=float(flow), source_side=source_side)


# ---------------------------------------------------------------------------
# Large-instance engine (scipy Dinic on scaled integer capacities)
# ---------------------------------------------------------------------------

def _integer_scale(finite_caps: np.ndarray) -> float:
    """Deterministic scale factor mapping float capacities to integers.

    The sum of all scaled finite capacities bounds every finite cut value
    and must stay below the budget so the sentinel is never the cheaper
    side of a comparison.
    """
    if len(finite_caps) == 0:
        return 1.0
    total = float(finite_caps.sum())
    if total <= 0:
        return 1.0
    integral = np.all(finite_caps == np.rint(finite_caps))
    if integral and total <= _SCALE_BUDGET:
        return 1.0
    return min(_MAX_SCALE, _SCALE_BUDGET / total)


def _solve_scipy(graph: FlowGraph) -> CutResult:
    n = graph.node_count
    s, t = n, n + 1
    fg = np.flatnonzero(graph.cap_source > 0)
    bg = np.flatnonzero(graph.cap_sink > 0)
    rows = np.concatenate([
        np.full(len(fg), s, dtype=np.int64), bg, graph.arc_from,
    ])
    cols = np.concatenate([
        fg, np.full(len(bg), t, dtype=np.int64), graph.arc_to,
    ])
    caps = np.concatenate([
        graph.cap_source[fg], graph.cap_sink[bg], graph.arc_cap,
    ])
    is_inf = caps >= INF_CAP
    scale = _integer_scale(caps[~is_inf])
    data = np.full(len(caps), _INT_INF, dtype=np.int64)
    data[~is_inf] = np.rint(caps[~is_inf] * scale).astype(np.int64)
    matrix = csr_matrix((data, (rows, cols)), shape=(n + 2, n + 2))
    matrix.sum_duplicates()
    result = maximum_flow(matrix, s, t)
    residual = matrix - result.flow
    residual.data = (residual.data > 0).astype(np.int64)
    residual.eliminate_zeros()
    reachable = breadth_first_order(
        residual, s, directed=True, return_predecessors=False
    )
    source_side = np.zeros(n + 2, dtype=bool)
    source_side[reachable] = True
    return CutResult(
        flow_value=float(result.flow_value) / scale,
        source_side=source_side[:n],
    )


def max_flow(graph: FlowGraph, engine: str = "auto") -> CutResult:
    """Maximum s-t flow and the minimal min-cut source side.

    ``engine`` is "auto" (size-based), "bk" (Python dual-tree solver) or
    "scipy" (C Dinic on scaled integer capacities).
    """
    if engine == "auto":
        engine = "bk" if graph.node_count <= BK_AUTO_NODE_LIMIT else "scipy"
    if engine == "bk":
        return _solve_bk(graph)
    if engine == "scipy":
        return _solve_scipy(graph)
    raise ValueError(f"unknown engine {engine!r}")


def extract_cut(result: CutResult, lattice: RayLattice) -> CutIndices:
    """Per-ray cut indices from a solved graph built on ``lattice``.

    Asserts the closed-set property: the source side of every ray must be
    a contiguous inner run of nodes.
    """
    rays = lattice.ray_count
    n = lattice.nodes_per_ray
    src = result.source_side.reshape(rays, n)
    monotone = np.all(src[:, :-1].astype(np.int8)
                      >= src[:, 1:].astype(np.int8))
    if not monotone:
        bad = int(np.argmax(np.any(src[:, :-1] < src[:, 1:], axis=1)))
        raise ClosedSetViolationError(
            f"ray {bad}: source side is not a prefix - infinity sentinel "
            "too small or constraints infeasible"
        )
    k = src.sum(axis=1).astype(np.int64) - 1
    return CutIndices(k=k, nodes_per_ray=n)


def cut_crossing_capacity(graph: FlowGraph, source_side: np.ndarray) -> float:
    """Total capacity of arcs crossing from the source side to its
    complement, counting terminal arcs (duality check helper)."""
    src = np.asarray(source_side, dtype=bool)
    crossing = src[graph.arc_from] & ~src[graph.arc_to]
    total = float(graph.arc_cap[crossing].sum())
    total += float(graph.cap_source[~src].sum())
    total += float(graph.cap_sink[src].sum())
    return total


def dump_graph(graph: FlowGraph, fp) -> None:
    """Line-oriented text dump (one arc per line) for oracle cross-checks."""
    for v in np.flatnonzero(graph.cap_source > 0):
        fp.write(f"s {v} {graph.cap_source[v]:.17g}\n")
    for v in np.flatnonzero(graph.cap_sink > 0):
        fp.write(f"{v} t {graph.cap_sink[v]:.17g}\n")
    for u, v, c in zip(graph.arc_from, graph.arc_to, graph.arc_cap):
        fp.write(f"{u} {v} {c:.17g}\n")

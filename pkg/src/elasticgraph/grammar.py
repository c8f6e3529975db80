"""Graph rewriting operations and the grammar-driven structure search."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import EnergyBreakdown
from .errors import (AllTrimmedError, ConfigError, GraphValidationError, NoCandidateError,
                     SingularSystemError)
from .fitter import (FitConfig, FitResult, Partition, PointCloud, fit_embedding, init_circle,
                     init_default, partition_points, update_partition)
from .graph import DEFAULT_MU, ElasticGraph, check_graph

log = logging.getLogger(__name__)

BISECT_EDGE = "bisect_edge"
ADD_NODE_TO_NODE = "add_node_to_node"
REMOVE_LEAF = "remove_leaf"
SHRINK_INTERNAL_EDGE = "shrink_internal_edge"

OPERATIONS = (BISECT_EDGE, ADD_NODE_TO_NODE, REMOVE_LEAF, SHRINK_INTERNAL_EDGE)
EDGE_OPERATIONS = (BISECT_EDGE, SHRINK_INTERNAL_EDGE)

GROW = (BISECT_EDGE, ADD_NODE_TO_NODE)
SHRINK = (REMOVE_LEAF, SHRINK_INTERNAL_EDGE)


@dataclass(frozen=True)
class GrammarOp:
    """One rewriting rule, optionally restricted to targets whose degree lies in ``degree_range``.

    For edge rules both endpoints must satisfy the restriction.
    """

    kind: str
    degree_range: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in OPERATIONS:
            raise ValueError(f"unknown grammar operation {self.kind!r}")

    def admits_degree(self, deg: int) -> bool:
        if self.degree_range is None:
            return True
        lo, hi = self.degree_range
        return lo <= deg <= hi


@dataclass(frozen=True, eq=False)
class Candidate:
    graph: ElasticGraph
    embedding: np.ndarray
    provenance: tuple
    # old node index -> new node index (-1 for removed nodes)
    index_map: np.ndarray | None = None


def _as_ops(grammar) -> tuple[GrammarOp, ...]:
    ops = []
    for g in grammar:
        ops.append(g if isinstance(g, GrammarOp) else GrammarOp(g))
    if not ops:
        raise ValueError("grammar set is empty")
    return tuple(ops)


def _finish(n_nodes, edges, lambdas, mus, phi):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    mus = np.asarray(mus, dtype=float).copy()
    deg = np.bincount(edges.ravel(), minlength=n_nodes)
    mus[deg < 2] = 0.0
    graph = ElasticGraph(n_nodes, edges, lambdas, mus)
    phi = np.array(phi, dtype=float)
    phi.setflags(write=False)
    return graph, phi


def _compact(n_nodes, removed, edges):
    keep = np.ones(n_nodes, dtype=bool)
    keep[list(removed)] = False
    index_map = np.full(n_nodes, -1, dtype=np.int64)
    index_map[keep] = np.arange(int(keep.sum()))
    return keep, index_map, index_map[np.asarray(edges, dtype=np.int64).reshape(-1, 2)]


def bisect_edge(graph: ElasticGraph, embedding, edge: int, default_mu: float = DEFAULT_MU) -> Candidate:
    """Split edge ``edge`` = {A, B} by a new node C at the midpoint.

    Both new edges inherit the stretching modulus of {A, B}; C becomes a 2-star
    center with bending modulus ``default_mu``.
    """
    if not 0 <= edge < graph.n_edges:
        raise GraphValidationError(f"no edge with index {edge}")
    phi = np.asarray(embedding, dtype=float)
    a, b = (int(v) for v in graph.edges[edge])
    c = graph.n_nodes
    lam = graph.lambdas[edge]
    keep = np.arange(graph.n_edges) != edge
    edges = np.vstack([graph.edges[keep], [(a, c), (b, c)]])
    lambdas = np.concatenate([graph.lambdas[keep], [lam, lam]])
    mus = np.append(graph.mus, default_mu)
    new_phi = np.vstack([phi, (phi[a] + phi[b]) / 2])
    g, p = _finish(c + 1, edges, lambdas, mus, new_phi)
    return Candidate(g, p, (BISECT_EDGE, (a, b)), np.arange(graph.n_nodes))


def add_node_to_node(graph: ElasticGraph, embedding, cloud: PointCloud | None,
                     partition: Partition | None, node: int,
                     default_mu: float = DEFAULT_MU) -> Candidate | None:
    """Attach a new node C to ``node`` = A.

    Leaf A: the new edge copies the modulus of A's edge, A's new star copies the
    modulus of the neighbor's star (``default_mu`` when the neighbor is not a
    star center), and C continues A's edge by its own length. Internal A: the
    new edge gets the mean modulus of A's edges, A's star keeps its modulus, and
    C is put at the weighted mean of the points whose nearest node is A.
    Returns ``None`` when that mean is undefined (no points assigned to A).
    """
    if not 0 <= node < graph.n_nodes:
        raise GraphValidationError(f"no node {node}")
    phi = np.asarray(embedding, dtype=float)
    deg = graph.degrees
    c = graph.n_nodes
    mus = np.append(graph.mus, 0.0)
    inc = graph.incident_edges(node)
    if deg[node] == 1:
        (b,) = graph.neighbors(node)
        lam = graph.lambdas[inc[0]]
        mus[node] = graph.mus[b] if deg[b] >= 2 else default_mu
        pos = 2 * phi[node] - phi[b]
    else:
        if partition is None or cloud is None:
            raise ValueError("a partition is needed to add a node to a non-leaf node")
        mine = partition.assign == node
        if not mine.any():
            return None
        w = cloud.w[mine]
        pos = (w @ cloud.x[mine]) / w.sum()
        if deg[node] == 0:
            lam = float(graph.lambdas.mean()) if graph.n_edges else None
            if lam is None:
                return None
        else:
            lam = float(graph.lambdas[inc].mean())
    edges = np.vstack([graph.edges, [(node, c)]])
    lambdas = np.append(graph.lambdas, lam)
    g, p = _finish(c + 1, edges, lambdas, mus, np.vstack([phi, pos]))
    return Candidate(g, p, (ADD_NODE_TO_NODE, int(node)), np.arange(graph.n_nodes))


def remove_leaf(graph: ElasticGraph, embedding, node: int) -> Candidate:
    """Delete leaf ``node`` = A and its edge {A, B}.

    A 2-star at B disappears (its modulus is zeroed); a larger star at B keeps
    its modulus. Remaining nodes keep their positions and are re-indexed.
    """
    if not 0 <= node < graph.n_nodes or graph.degrees[node] != 1:
        raise GraphValidationError(f"node {node} is not a leaf")
    phi = np.asarray(embedding, dtype=float)
    inc = graph.incident_edges(node)[0]
    keep_e = np.arange(graph.n_edges) != inc
    keep, index_map, edges = _compact(graph.n_nodes, [node], graph.edges[keep_e])
    g, p = _finish(int(keep.sum()), edges, graph.lambdas[keep_e], graph.mus[keep], phi[keep])
    return Candidate(g, p, (REMOVE_LEAF, int(node)), index_map)


def shrink_internal_edge(graph: ElasticGraph, embedding, edge: int) -> Candidate:
    """Contract internal edge ``edge`` = {A, B} into B.

    The higher-indexed endpoint is removed and its other edges are moved to the
    lower-indexed one, which is placed at the midpoint and gets the mean of the
    two bending moduli. Edges that become duplicates (contracting a triangle)
    are merged keeping the larger modulus.
    """
    if not 0 <= edge < graph.n_edges:
        raise GraphValidationError(f"no edge with index {edge}")
    b, a = (int(v) for v in graph.edges[edge])  # keep b (lower), remove a
    deg = graph.degrees
    if deg[a] < 2 or deg[b] < 2:
        raise GraphValidationError(f"edge {{{b}, {a}}} is not internal")
    phi = np.array(embedding, dtype=float)
    merged: dict[tuple[int, int], float] = {}
    for i, (u, v) in enumerate(graph.edges):
        if i == edge:
            continue
        u, v = int(u), int(v)
        u = b if u == a else u
        v = b if v == a else v
        key = (min(u, v), max(u, v))
        lam = float(graph.lambdas[i])
        merged[key] = max(merged.get(key, lam), lam)
    mus = graph.mus.copy()
    mus[b] = (graph.mus[a] + graph.mus[b]) / 2
    phi[b] = (phi[a] + phi[b]) / 2
    keys = list(merged)
    keep, index_map, edges = _compact(graph.n_nodes, [a], keys)
    g, p = _finish(int(keep.sum()), edges, [merged[k] for k in keys], mus[keep], phi[keep])
    return Candidate(g, p, (SHRINK_INTERNAL_EDGE, (b, a)), index_map)


def enumerate_candidates(graph: ElasticGraph, embedding, cloud: PointCloud | None, grammar,
                         partition: Partition | None = None,
                         default_mu: float = DEFAULT_MU) -> list[Candidate]:
    """Apply every rule of ``grammar`` to every admissible target.

    Candidates come out grouped by rule, in the order the rules are given,
    then by target index.
    """
    ops = _as_ops(grammar)
    deg = graph.degrees
    out = []
    for op in ops:
        if op.kind in EDGE_OPERATIONS:
            for i, (u, v) in enumerate(graph.edges):
                if not (op.admits_degree(deg[u]) and op.admits_degree(deg[v])):
                    continue
                if op.kind == BISECT_EDGE:
                    out.append(bisect_edge(graph, embedding, i, default_mu))
                elif deg[u] > 1 and deg[v] > 1:
                    out.append(shrink_internal_edge(graph, embedding, i))
        else:
            for v in range(graph.n_nodes):
                if not op.admits_degree(deg[v]):
                    continue
                if op.kind == REMOVE_LEAF:
                    if deg[v] == 1:
                        out.append(remove_leaf(graph, embedding, v))
                else:
                    if deg[v] >= 2 and partition is None:
                        if cloud is None:
                            raise ValueError("data are needed to add nodes to non-leaf nodes")
                        partition = partition_points(cloud, embedding)
                    cand = add_node_to_node(graph, embedding, cloud, partition, v, default_mu)
                    if cand is not None:
                        out.append(cand)
    return out


@dataclass(frozen=True, eq=False)
class Strategy:
    """Search schedule: the grammar set used at each phase, cycled until ``target_nodes``."""

    kind: str
    grammar_cycle: tuple[tuple[GrammarOp, ...], ...]
    target_nodes: int
    alpha: float = 0.0
    # (graph, embedding); None means "derive from the data"
    init: tuple[ElasticGraph, np.ndarray] | None = None

    def with_init(self, graph: ElasticGraph, embedding) -> "Strategy":
        if self.target_nodes < graph.n_nodes:
            raise ConfigError("target_nodes is below the size of the initial graph")
        return replace(self, init=(graph, np.asarray(embedding, dtype=float)))

    def initial(self, cloud: PointCloud, config: FitConfig):
        if self.init is not None:
            return self.init
        if self.kind == "circle":
            return init_circle(cloud, config.lam, config.mu)
        return init_default(cloud, config.lam, config.mu)


def make_strategy(kind: str, target_nodes: int, alpha: float = 0.0) -> Strategy:
    """Standard schedules.

    ``curve``: bisect only, from two nodes. ``circle``: bisect only, from a ring
    of four nodes. ``tree``: two growing phases (bisect, add node) followed by
    one shrinking phase (remove leaf, shrink internal edge), from two nodes.
    """
    grow = _as_ops(GROW)
    shrink = _as_ops(SHRINK)
    bisect = _as_ops([BISECT_EDGE])
    if kind == "curve":
        cycle, init_size = (bisect,), 2
    elif kind == "circle":
        cycle, init_size = (bisect,), 4
    elif kind == "tree":
        cycle, init_size = (grow, grow, shrink), 2
    else:
        raise ConfigError(f"unknown strategy kind {kind!r}")
    if target_nodes < init_size:
        raise ConfigError(f"{kind} strategy needs target_nodes >= {init_size}")
    if alpha < 0:
        raise ConfigError("alpha must be nonnegative")
    return Strategy(kind, cycle, int(target_nodes), float(alpha))


@dataclass(frozen=True)
class StepRecord:
    phase: int
    kind: str
    target: object
    energy: float
    n_nodes: int
    candidate_energies: tuple[float, ...]
    graph: ElasticGraph = field(repr=False, compare=False)

    def as_dict(self) -> dict:
        target = list(self.target) if isinstance(self.target, tuple) else self.target
        return {"kind": self.kind, "target": target, "energy": self.energy}


@dataclass(frozen=True, eq=False)
class PrincipalGraphResult:
    graph: ElasticGraph
    embedding: np.ndarray
    partition: Partition
    energy: EnergyBreakdown
    alpha: float
    r0: float
    history: list[StepRecord] = field(default_factory=list)
    fit_trace: list[EnergyBreakdown] = field(default_factory=list)

    @property
    def energy_trace(self) -> list[float]:
        return [h.energy for h in self.history]


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("ELPI_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def _fit_candidate(cloud, cand, config, parent):
    try:
        part = None
        if parent is not None:
            old_phi, old_part = parent
            part = update_partition(cloud, old_part, old_phi, cand.embedding, config.r0,
                                    cand.index_map)
        return fit_embedding(cloud, cand.graph, cand.embedding, config, partition=part)
    except (SingularSystemError, AllTrimmedError) as exc:
        log.debug("candidate %s failed: %s", cand.provenance, exc)
        return exc


def _fit_all(cloud, candidates, config, workers, parent=None):
    if workers > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda c: _fit_candidate(cloud, c, config, parent), candidates))
    return [_fit_candidate(cloud, c, config, parent) for c in candidates]


def grow_graph(cloud: PointCloud, strategy: Strategy, config: FitConfig | None = None,
               workers: int | None = 1) -> PrincipalGraphResult:
    """Grammar-driven structure search.

    At each phase every candidate produced by the phase's grammar set is fitted
    with the coarse settings of ``config``; the candidate of lowest total energy
    (first one on ties) is accepted and refined with the tight settings. Phases
    cycle until the graph has ``strategy.target_nodes`` nodes.
    """
    config = replace(config or FitConfig(), alpha=strategy.alpha)
    workers = resolve_workers(workers)
    graph, phi = strategy.initial(cloud, config)
    check_graph(graph)
    if strategy.target_nodes < graph.n_nodes:
        raise ConfigError("target_nodes is below the size of the initial graph")
    fine = config.refined()
    fit = fit_embedding(cloud, graph, phi, fine)
    history: list[StepRecord] = []
    phase = 0
    while graph.n_nodes < strategy.target_nodes:
        grammar = strategy.grammar_cycle[phase % len(strategy.grammar_cycle)]
        candidates = enumerate_candidates(graph, fit.embedding, cloud, grammar,
                                          fit.partition, config.mu)
        if not candidates:
            names = ", ".join(op.kind for op in grammar)
            raise NoCandidateError(f"no admissible candidate at phase {phase} ({names}) "
                                   f"for a graph with {graph.n_nodes} nodes")
        fits = _fit_all(cloud, candidates, config, workers, (fit.embedding, fit.partition))
        failed = [f for f in fits if isinstance(f, Exception)]
        if len(failed) == len(fits):
            raise failed[0]
        energies = [math.inf if isinstance(f, Exception) else f.energy.total for f in fits]
        best = int(np.argmin(energies))
        cand = candidates[best]
        graph = cand.graph
        fit = fit_embedding(cloud, graph, fits[best].embedding, fine,
                            partition=fits[best].partition)
        kind, target = cand.provenance
        history.append(StepRecord(phase, kind, target, energies[best], graph.n_nodes,
                                  tuple(energies), graph))
        log.debug("phase %d: %s %s -> %d nodes, energy %.6g", phase, kind, target,
                  graph.n_nodes, energies[best])
        phase += 1
    return PrincipalGraphResult(graph, fit.embedding, fit.partition, fit.energy,
                                config.alpha, config.r0, history, fit.trace)

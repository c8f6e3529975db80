"""Resampled graph ensembles and their consensus graph."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .analysis import PathParametrization
from .errors import ConfigError, EmptyConsensusError, NoBranchError
from .fitter import FitConfig, PointCloud
from .grammar import PrincipalGraphResult, Strategy, grow_graph, resolve_workers
from .graph import DEFAULT_LAMBDA, ElasticGraph
from .robust import estimate_trimming_radius

DEFAULT_REPLICAS = 100
DEFAULT_FRACTION = 0.9


@dataclass(frozen=True, eq=False)
class EnsembleMember:
    result: PrincipalGraphResult
    # sampled point indices; None for members read back from disk, which keep only the digest
    indices: np.ndarray | None = field(repr=False)
    digest: str | None = None

    @property
    def graph(self) -> ElasticGraph:
        return self.result.graph

    @property
    def embedding(self) -> np.ndarray:
        return self.result.embedding

    @property
    def indices_hash(self) -> str:
        if self.indices is None:
            return self.digest
        return hashlib.sha256(np.ascontiguousarray(self.indices, dtype="<i8").tobytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class GraphEnsemble:
    members: list[EnsembleMember]
    fraction: float
    replicas: int
    seed: int
    n_points: int

    def manifest(self) -> dict:
        return {"seed": self.seed, "replicas": self.replicas, "fraction": self.fraction,
                "n_points": self.n_points,
                "sample_size": math.ceil(self.fraction * self.n_points),
                "indices_sha256": [m.indices_hash for m in self.members]}


def sample_indices(n: int, k: int, p: float, seed: int) -> list[np.ndarray]:
    """``k`` independent sorted samples of ``ceil(p*n)`` indices without replacement."""
    m = math.ceil(p * n)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]
    return [np.sort(r.choice(n, m, replace=False)) for r in rngs]


def bootstrap_ensemble(cloud: PointCloud, strategy: Strategy, config: FitConfig | None = None,
                       k: int = DEFAULT_REPLICAS, p: float = DEFAULT_FRACTION, seed: int = 0,
                       workers: int | None = 1) -> GraphEnsemble:
    """Fit ``k`` graphs, each on its own uniform sample (without replacement) of ``ceil(p*n)`` points."""
    if not 0.0 < p <= 1.0:
        raise ConfigError("sample fraction p must lie in (0, 1]")
    if k < 1:
        raise ConfigError("the number of replicas k must be at least 1")
    samples = sample_indices(cloud.n, k, p, seed)

    def fit(idx):
        return EnsembleMember(grow_graph(cloud.subset(idx), strategy, config, 1), idx)

    workers = resolve_workers(workers)
    if workers > 1 and k > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            members = list(pool.map(fit, samples))
    else:
        members = [fit(idx) for idx in samples]
    return GraphEnsemble(members, float(p), int(k), int(seed), cloud.n)


# k-means on pooled node positions

def _assign(x, centers):
    d = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    lab = np.argmin(d, axis=1)
    return lab, d[np.arange(len(x)), lab]


def _plusplus(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d.sum()
        if total == 0:
            j = int(rng.integers(len(x)))
        else:
            j = int(np.searchsorted(np.cumsum(d), rng.random() * total, side="right"))
            j = min(j, len(x) - 1)
        centers.append(x[j])
        d = np.minimum(d, ((x - x[j]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(x, centers, max_iter):
    k = len(centers)
    lab = None
    for _ in range(max_iter):
        new, dist = _assign(x, centers)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # reseed an empty cluster at the pooled node farthest from its center
            far = int(np.argmax(dist))
            new[far] = j
            dist[far] = 0.0
            counts = np.bincount(new, minlength=k)
        if lab is not None and np.array_equal(new, lab):
            break
        lab = new
        centers = np.array([x[lab == j].mean(axis=0) for j in range(k)])
    lab, dist = _assign(x, centers)
    return lab, centers, float(dist.sum())


def kmeans(x, k: int, n_init: int = 10, max_iter: int = 300, seed: int = 0):
    """Lloyd's algorithm from k-means++ starts; returns ``(labels, centers)`` of the lowest-inertia restart."""
    x = np.asarray(x, dtype=float)
    if k > len(x):
        raise ConfigError(f"cannot form {k} clusters from {len(x)} nodes")
    best = None
    for r in np.random.SeedSequence(seed).spawn(n_init):
        lab, centers, inertia = _lloyd(x, _plusplus(x, k, np.random.default_rng(r)), max_iter)
        if best is None or inertia < best[2]:
            best = (lab, centers, inertia)
    return best[0], best[1]


@dataclass(frozen=True)
class ConsensusFilters:
    min_node_local_density: float | None = None
    density_radius: float | None = None
    edge_len_min: float | None = None
    edge_len_max: float | None = None
    drop_unconnected: bool = False

    @property
    def empty(self) -> bool:
        return (self.min_node_local_density is None and self.edge_len_min is None
                and self.edge_len_max is None and not self.drop_unconnected)


@dataclass(frozen=True, eq=False)
class ConsensusGraph:
    """Cluster centroids of pooled member nodes joined by thresholded cross-cluster edge counts.

    ``cluster_of[i]`` maps pooled member node ``i`` (members concatenated in
    order) to its consensus node, or -1 when the node was filtered out.
    """

    positions: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    cluster_of: np.ndarray
    n_clusters: int
    edge_threshold: int
    seed: int
    filters: ConsensusFilters = ConsensusFilters()
    # pooled member nodes and edges, kept so filters can be re-applied from scratch
    pool_positions: np.ndarray = field(default=None, repr=False)
    pool_edges: np.ndarray = field(default=None, repr=False)
    replicas: int = 1

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    def to_graph(self, lam: float = DEFAULT_LAMBDA, mu: float = 0.0) -> ElasticGraph:
        return ElasticGraph.from_edges(self.n_nodes, self.edges, lam, mu)


def _pool(ensemble: GraphEnsemble):
    if not ensemble.members:
        raise EmptyConsensusError("the ensemble has no members")
    pos, edges, offset = [], [], 0
    for m in ensemble.members:
        pos.append(m.embedding)
        edges.append(m.graph.edges + offset)
        offset += m.graph.n_nodes
    return np.vstack(pos), np.vstack(edges).astype(np.int64)


def count_cross_edges(labels, pool_edges):
    """Number of pooled edges between every pair of distinct clusters, as a dict ``(i, j) -> count``, i < j."""
    counts: dict[tuple[int, int], int] = {}
    for a, b in pool_edges:
        ca, cb = int(labels[a]), int(labels[b])
        if ca < 0 or cb < 0 or ca == cb:
            continue
        key = (min(ca, cb), max(ca, cb))
        counts[key] = counts.get(key, 0) + 1
    return counts


def _build(pool_pos, pool_edges, keep, M, threshold, seed, n_init, replicas, filters):
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        raise EmptyConsensusError("every pooled node was filtered out")
    lab, centers = kmeans(pool_pos[idx], M, n_init=n_init, seed=seed)
    cluster_of = np.full(len(pool_pos), -1, dtype=np.int64)
    cluster_of[idx] = lab
    counts = count_cross_edges(cluster_of, pool_edges)
    pairs = sorted(k for k, c in counts.items() if c > threshold)
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    weights = np.array([counts[k] for k in pairs], dtype=np.int64)
    return ConsensusGraph(centers, edges, weights, cluster_of, M, threshold, seed, filters,
                          pool_pos, pool_edges, replicas)


def consensus_graph(ensemble: GraphEnsemble, M: int, edge_threshold: int = 0, seed: int = 0,
                    n_init: int = 10) -> ConsensusGraph:
    """Cluster the pooled member nodes into ``M`` groups and keep edges seen more than ``edge_threshold`` times."""
    if M < 2:
        raise ConfigError("the consensus needs M >= 2 clusters")
    pos, edges = _pool(ensemble)
    if len(pos) < M:
        raise ConfigError(f"M = {M} exceeds the {len(pos)} pooled member nodes")
    return _build(pos, edges, np.ones(len(pos), bool), M, edge_threshold, seed, n_init,
                  len(ensemble.members), ConsensusFilters())


def node_density_mask(pool_pos, replicas, d_min=None, radius=None, seed=0):
    """Pooled nodes with at least ``d_min`` pooled nodes (self included) within ``radius``."""
    if d_min is None:
        d_min = 0.05 * replicas
    if radius is None:
        radius = estimate_trimming_radius(PointCloud(pool_pos), quantile=0.1, seed=seed)
    counts = cKDTree(pool_pos).query_ball_point(pool_pos, radius, return_length=True)
    return np.asarray(counts) >= d_min


def filter_consensus(consensus: ConsensusGraph, filters: ConsensusFilters,
                     n_init: int = 10) -> ConsensusGraph:
    """Apply, in order, the node-density filter (on pooled nodes, before clustering),
    the edge-length band and the removal of unconnected consensus nodes.

    Filtering always starts again from the stored pool, so re-applying the same
    filters gives the same graph.
    """
    if filters.empty:
        return consensus
    pos, pedges = consensus.pool_positions, consensus.pool_edges
    keep = np.ones(len(pos), bool)
    if filters.min_node_local_density is not None:
        keep = node_density_mask(pos, consensus.replicas, filters.min_node_local_density,
                                 filters.density_radius, consensus.seed)
        if keep.sum() < consensus.n_clusters:
            raise EmptyConsensusError("too few pooled nodes survive the density filter")
    c = _build(pos, pedges, keep, consensus.n_clusters, consensus.edge_threshold,
               consensus.seed, n_init, consensus.replicas, filters)
    edges, weights = c.edges, c.weights
    if len(edges):
        length = np.linalg.norm(c.positions[edges[:, 0]] - c.positions[edges[:, 1]], axis=1)
        band = np.ones(len(edges), bool)
        if filters.edge_len_min is not None:
            band &= length >= filters.edge_len_min
        if filters.edge_len_max is not None:
            band &= length <= filters.edge_len_max
        edges, weights = edges[band], weights[band]
    positions, cluster_of = c.positions, c.cluster_of
    if filters.drop_unconnected:
        used = np.zeros(len(positions), bool)
        used[edges.ravel()] = True
        if not used.any():
            raise EmptyConsensusError("no consensus node is connected after filtering")
        remap = np.full(len(positions), -1, dtype=np.int64)
        remap[used] = np.arange(int(used.sum()))
        positions = positions[used]
        edges = remap[edges]
        cluster_of = np.where(cluster_of >= 0, remap[np.maximum(cluster_of, 0)], -1)
    return replace(c, positions=positions, edges=edges, weights=weights, cluster_of=cluster_of)


@dataclass(frozen=True, eq=False)
class BranchInterval:
    lo: float
    hi: float
    values: np.ndarray
    skipped: int


def branch_point_interval(ensemble: GraphEnsemble, graph: ElasticGraph, embedding, path,
                          branch_node: int, quantiles=(0.025, 0.975)) -> BranchInterval:
    """Spread of the matched branching point over the ensemble, in pseudotime along ``path``.

    Each member's branching node (degree >= 3) nearest in space to
    ``branch_node`` is projected on the reference path; members without
    branching nodes are skipped.
    """
    phi = np.asarray(embedding, dtype=float)
    param = PathParametrization.build(graph, phi, path)
    ref = phi[branch_node]
    found, skipped = [], 0
    for m in ensemble.members:
        b = np.flatnonzero(m.graph.degrees >= 3)
        if len(b) == 0:
            skipped += 1
            continue
        pos = m.embedding[b]
        found.append(pos[np.argmin(((pos - ref) ** 2).sum(axis=1))])
    if not found:
        raise NoBranchError("no ensemble member has a branching node")
    values = param.at(param.locate(phi, np.array(found)))
    lo, hi = np.quantile(values, quantiles)
    return BranchInterval(float(lo), float(hi), values, skipped)

"""Trimmed (local) fitting: radius heuristics, density seeding, principal forests and curve clustering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .analysis import project_dataset
from .errors import ConfigError, DegenerateDataError
from .fitter import FitConfig, PointCloud
from .grammar import PrincipalGraphResult, Strategy, grow_graph, make_strategy
from .graph import DEFAULT_LAMBDA, ElasticGraph

UNCAPTURED = -1
DENSITY_SAMPLE = 2000


def _sample(n, size, rng):
    if n <= size:
        return np.arange(n)
    return np.sort(rng.choice(n, size, replace=False))


def estimate_trimming_radius(cloud: PointCloud, sample_size: int = 1000, quantile: float = 0.5,
                             seed: int = 0) -> float:
    """Quantile of the pairwise distances within a uniform sample of ``min(sample_size, n)`` points."""
    if sample_size < 2:
        raise ConfigError("sample_size must be at least 2")
    if not 0.0 <= quantile <= 1.0:
        raise ConfigError("quantile must lie in [0, 1]")
    if cloud.n < 2:
        raise DegenerateDataError("need at least two points to estimate a radius")
    idx = _sample(cloud.n, sample_size, np.random.default_rng(seed))
    r = float(np.quantile(pdist(cloud.x[idx]), quantile))
    if r == 0.0:
        raise DegenerateDataError("zero trimming radius: sampled points coincide")
    return r


def local_density(cloud: PointCloud, radius: float, sample_size: int = DENSITY_SAMPLE,
                  seed: int = 0):
    """Neighbor counts within ``radius`` (self included) for a uniform sample of points.

    Returns ``(sample_indices, counts)`` with indices sorted increasingly.
    """
    idx = _sample(cloud.n, sample_size, np.random.default_rng(seed))
    counts = cKDTree(cloud.x).query_ball_point(cloud.x[idx], radius, return_length=True)
    return idx, np.asarray(counts)


def density_seed(cloud: PointCloud, density_radius: float | None = None,
                 lam: float = DEFAULT_LAMBDA, sample_size: int = DENSITY_SAMPLE, seed: int = 0):
    """Two-node graph at the densest point and its nearest distinct neighbor.

    Ties in density go to the lowest point index.
    """
    x = cloud.x
    if cloud.n < 2 or np.all(x == x[0]):
        raise DegenerateDataError("density seeding needs at least two distinct points")
    if density_radius is None:
        density_radius = estimate_trimming_radius(cloud, quantile=0.25, seed=seed)
    idx, counts = local_density(cloud, density_radius, sample_size, seed)
    first = int(idx[np.argmax(counts)])
    d = np.sum((x - x[first]) ** 2, axis=1)
    d[d == 0] = np.inf
    second = int(np.argmin(d))
    graph = ElasticGraph.from_edges(2, [(0, 1)], lam)
    return graph, np.vstack([x[first], x[second]])


def _node_sqdist(x, phi):
    tree = cKDTree(phi)
    d, _ = tree.query(x)
    return d * d


def captured_by(cloud: PointCloud, embedding, r0: float) -> np.ndarray:
    """Points strictly within ``r0`` of some node (the complement of the trimming rule)."""
    return _node_sqdist(cloud.x, np.asarray(embedding, dtype=float)) < r0 * r0


@dataclass(frozen=True, eq=False)
class ForestResult:
    graphs: list[PrincipalGraphResult]
    point_labels: np.ndarray

    @property
    def n_graphs(self) -> int:
        return len(self.graphs)


def _default_min_remaining(n):
    return max(20, int(math.ceil(0.01 * n)))


def principal_forest(cloud: PointCloud, strategy: Strategy, config: FitConfig,
                     min_remaining: int | None = None, density_radius: float | None = None,
                     max_graphs: int | None = None, workers: int | None = 1,
                     seed: int = 0) -> ForestResult:
    """Fit graphs one at a time, removing the points each one captures.

    Every round seeds a graph at the densest remaining point, grows it on the
    remaining points with the trimmed energy and labels the points within
    ``config.r0`` of its nodes. Rounds stop when no more than ``min_remaining``
    points are left or a round captures nothing. With ``r0 = inf`` the first
    graph captures everything and the result is a plain :func:`grow_graph` fit.
    """
    if min_remaining is None:
        min_remaining = _default_min_remaining(cloud.n)
    labels = np.full(cloud.n, UNCAPTURED, dtype=np.int64)
    graphs: list[PrincipalGraphResult] = []
    remaining = np.arange(cloud.n)
    while len(remaining) > min_remaining:
        if max_graphs is not None and len(graphs) >= max_graphs:
            break
        sub = cloud.subset(remaining)
        if math.isinf(config.r0):
            strat = strategy
        else:
            strat = strategy.with_init(*density_seed(sub, density_radius, config.lam, seed=seed))
        result = grow_graph(sub, strat, config, workers)
        got = captured_by(sub, result.embedding, config.r0)
        if not got.any():
            break
        labels[remaining[got]] = len(graphs)
        graphs.append(result)
        remaining = remaining[~got]
    return ForestResult(graphs, labels)


@dataclass(frozen=True, eq=False)
class MazeResult:
    curves: list[PrincipalGraphResult]
    labels: np.ndarray
    # which curve captured each point during the search (UNCAPTURED if none)
    captured: np.ndarray = field(repr=False)


def nearest_curve(cloud: PointCloud, curves) -> np.ndarray:
    """Index of the curve at the smallest point-to-polyline distance; ties go to the first curve."""
    best = np.full(cloud.n, np.inf)
    labels = np.zeros(cloud.n, dtype=np.int64)
    for k, c in enumerate(curves):
        sq = project_dataset(c.graph, c.embedding, cloud).sqdist
        better = sq < best
        best[better] = sq[better]
        labels[better] = k
    return labels


def travel_maze_cluster(cloud: PointCloud, n_nodes: int, config: FitConfig, max_curves: int = 10,
                        min_remaining: int | None = None, density_radius: float | None = None,
                        workers: int | None = 1, seed: int = 0) -> MazeResult:
    """Cluster a dataset made of (possibly intersecting) curves.

    Each local principal curve is fitted on the complete dataset with the
    trimmed energy, starting from the densest uncaptured point and its nearest
    uncaptured neighbor. Uncaptured points within ``config.r0`` of its nodes
    are then captured. Final labels assign every point to its nearest curve.
    """
    if math.isinf(config.r0):
        raise ConfigError("travel maze clustering needs a finite trimming radius")
    if max_curves < 1:
        raise ConfigError("max_curves must be at least 1")
    if min_remaining is None:
        min_remaining = _default_min_remaining(cloud.n)
    base = make_strategy("curve", n_nodes, config.alpha)
    captured = np.full(cloud.n, UNCAPTURED, dtype=np.int64)
    curves: list[PrincipalGraphResult] = []
    while len(curves) < max_curves:
        free = np.flatnonzero(captured == UNCAPTURED)
        if len(free) <= min_remaining:
            break
        init = density_seed(cloud.subset(free), density_radius, config.lam, seed=seed)
        result = grow_graph(cloud, base.with_init(*init), config, workers)
        got = captured_by(cloud, result.embedding, config.r0) & (captured == UNCAPTURED)
        if not got.any():
            break
        captured[got] = len(curves)
        curves.append(result)
    labels = nearest_curve(cloud, curves) if curves else np.full(cloud.n, UNCAPTURED, np.int64)
    return MazeResult(curves, labels, captured)

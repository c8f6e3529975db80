"""Fitting a fixed graph structure to data by alternating partitioning and a linear solve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .energy import EnergyBreakdown
from .errors import (AllTrimmedError, DataError, DegenerateDataError,
                     DegenerateWeightsError, SingularSystemError)
from .graph import DEFAULT_LAMBDA, DEFAULT_MU, ElasticGraph, elastic_laplacian, effective_lambdas

TRIMMED = -1

@dataclass(frozen=True, eq=False)
class PointCloud:
    x: np.ndarray
    w: np.ndarray | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"point cloud must be a non-empty n x m matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("point cloud contains non-finite values")
        if self.w is None:
            w = np.ones(x.shape[0])
        else:
            w = np.array(self.w, dtype=float, copy=True).reshape(-1)
            if w.shape[0] != x.shape[0]:
                raise DataError("weights must have one entry per point")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise DegenerateWeightsError("point weights must be finite and positive")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.x[idx], self.w[idx])

    @cached_property
    def weighted_x(self) -> np.ndarray:
        return self.x * self.w[:, None]

    @cached_property
    def diameter(self) -> float:
        """Bounding-box diagonal, used as the scale of node displacements."""
        span = self.x.max(axis=0) - self.x.min(axis=0)
        d = float(np.sqrt(span @ span))
        return d if d > 0 else 1.0


@dataclass(frozen=True, eq=False)
class Partition:
    """Nearest-node assignment of every point.

    ``assign[i]`` is a node index or ``TRIMMED``; ``sqdist[i]`` is the squared
    distance to the nearest node (also for trimmed points); ``counts[j]`` is
    the total weight assigned to node ``j``. ``nearest`` is the assignment
    before trimming and ``second`` a lower bound on the distance from each
    point to every other node, used to update the partition incrementally.
    """

    assign: np.ndarray
    sqdist: np.ndarray
    counts: np.ndarray
    nearest: np.ndarray = field(repr=False)
    second: np.ndarray = field(repr=False)

    @property
    def trimmed(self) -> np.ndarray:
        return self.assign == TRIMMED


@dataclass(frozen=True)
class FitConfig:
    epsilon: float = 1e-2
    max_iter: int = 10
    r0: float = math.inf
    alpha: float = 0.0
    lam: float = DEFAULT_LAMBDA
    mu: float = DEFAULT_MU
    # tolerance for the refinement of accepted structures
    final_epsilon: float = 1e-3
    final_max_iter: int = 100

    def __post_init__(self):
        if not self.epsilon > 0 or not self.final_epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1 or self.final_max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive or inf")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    def refined(self) -> "FitConfig":
        return replace(self, epsilon=self.final_epsilon, max_iter=self.final_max_iter)


@dataclass(frozen=True, eq=False)
class FitResult:
    embedding: np.ndarray
    partition: Partition
    energy: EnergyBreakdown
    iterations: int
    trace: list[EnergyBreakdown] = field(default_factory=list)
    converged: bool = False


def _scan(x, phi):
    n = x.shape[0]
    idx = np.empty(n, dtype=np.int64)
    sq = np.empty(n)
    second = np.empty(n)
    _kernels.scan(x, phi, idx, sq, second)
    return idx, sq, second


def partition_points(cloud: PointCloud, embedding, r0: float = math.inf) -> Partition:
    """Assign each point to its nearest node, or to ``TRIMMED`` if that node is not closer than ``r0``.

    Ties go to the lowest node index.
    """
    phi = np.ascontiguousarray(embedding, dtype=float)
    if phi.ndim != 2 or phi.shape[1] != cloud.dim:
        raise ValueError("embedding dimension does not match the data")
    idx, sq, second = _scan(cloud.x, phi)
    return _make_partition(cloud, idx, sq, second, phi.shape[0], r0)


def _make_partition(cloud, idx, sq, second, n_nodes, r0):
    assign = np.where(sq < float(r0) ** 2, idx, TRIMMED)
    counts, _ = _kernels.accumulate(assign, cloud.weighted_x[:, :0], cloud.w, n_nodes)
    for a in (assign, sq, counts, idx, second):
        a.setflags(write=False)
    return Partition(assign, sq, counts, idx, second)


def update_partition(cloud: PointCloud, partition: Partition, old_embedding, new_embedding,
                     r0: float = math.inf, index_map=None) -> Partition:
    """Partition for ``new_embedding`` derived from the partition of ``old_embedding``.

    ``index_map[j]`` is the new index of old node ``j`` (-1 when removed);
    new nodes not in its image are treated as added. A point keeps its nearest
    node when triangle-inequality bounds prove it is still the nearest; all
    other points are rescanned, so the result equals
    ``partition_points(cloud, new_embedding, r0)``.
    """
    old = np.asarray(old_embedding, dtype=float)
    new = np.ascontiguousarray(new_embedding, dtype=float)
    n_new = new.shape[0]
    if index_map is None:
        index_map = np.arange(old.shape[0])
    index_map = np.asarray(index_map, dtype=np.int64)
    kept_old = np.flatnonzero(index_map >= 0)
    added = np.setdiff1d(np.arange(n_new), index_map[kept_old]).astype(np.int64)
    near = index_map[partition.nearest]
    shift = np.zeros(n_new)
    diff = new[index_map[kept_old]] - old[kept_old]
    shift[index_map[kept_old]] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    order = np.argsort(-shift, kind="stable")
    top = int(order[0])
    top_shift = float(shift[top])
    runner_shift = float(shift[order[1]]) if n_new > 1 else 0.0
    n = cloud.n
    idx = np.empty(n, dtype=np.int64)
    sq = np.empty(n)
    second = np.empty(n)
    _kernels.update(cloud.x, new, near, partition.second, top, top_shift, runner_shift,
                    added, idx, sq, second)
    return _make_partition(cloud, idx, sq, second, n_new, r0)


def _components(lap):
    coupling = lap != 0
    np.fill_diagonal(coupling, False)
    return connected_components(coupling, directed=False)


def solve_embedding(lap: np.ndarray, partition: Partition, cloud: PointCloud) -> np.ndarray:
    """Minimize the quadratic energy for a fixed partition.

    Solves ``(diag(counts) / W + L) phi = S / W`` where ``S[j]`` is the weighted
    sum of the points assigned to node ``j`` and ``W`` the total weight of all
    points; trimmed points are left out of both sides.
    """
    n_nodes = lap.shape[0]
    wsum = float(cloud.w.sum())
    if not np.any(partition.assign >= 0):
        raise AllTrimmedError("every point is farther than the trimming radius from the graph")
    ncomp, labels = _components(lap)
    comp_weight = np.bincount(labels, weights=partition.counts, minlength=ncomp)
    empty = np.flatnonzero(comp_weight <= 0)
    if empty.size:
        nodes = np.flatnonzero(np.isin(labels, empty))
        raise SingularSystemError(
            f"singular system: nodes {nodes.tolist()} have no data and no elastic coupling to data",
            nodes)
    _, rhs = _kernels.accumulate(partition.assign, cloud.weighted_x, cloud.w, n_nodes)
    rhs /= wsum
    a = lap + np.diag(partition.counts / wsum)
    try:
        return np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"singular system: {exc}") from exc


def _energy(cloud, graph, phi, partition, alpha, r0):
    # same quantity as energy.total_energy, reusing the partition's distances
    w = cloud.w
    wsum = float(w.sum())
    r0sq = float(r0) ** 2
    trimmed = partition.assign == TRIMMED
    mse = float(w @ np.minimum(partition.sqdist, r0sq)) / wsum
    if graph.n_edges:
        d = phi[graph.edges[:, 0]] - phi[graph.edges[:, 1]]
        u_e = float(effective_lambdas(graph, alpha) @ np.einsum("ij,ij->i", d, d))
    else:
        u_e = 0.0
    u_r = 0.0
    deg = graph.degrees
    if np.any(graph.mus[deg >= 2] > 0):
        e = graph.edges
        nb_sum = np.zeros_like(phi)
        np.add.at(nb_sum, e[:, 0], phi[e[:, 1]])
        np.add.at(nb_sum, e[:, 1], phi[e[:, 0]])
        centers = np.flatnonzero(deg >= 2)
        dev = phi[centers] - nb_sum[centers] / deg[centers, None]
        u_r = float(graph.mus[centers] @ np.einsum("ij,ij->i", dev, dev))
    return EnergyBreakdown(mse, u_e, u_r, mse + u_e + u_r, int(trimmed.sum()))


def fit_embedding(cloud: PointCloud, graph: ElasticGraph, init, config: FitConfig,
                  lap: np.ndarray | None = None, partition: Partition | None = None) -> FitResult:
    """Fit node positions of a fixed graph to the data.

    Alternates nearest-node partitioning and the linear solve until the largest
    node displacement, relative to the data bounding-box diagonal, is at most
    ``config.epsilon`` or ``config.max_iter`` solves were done. The energy of
    every visited state (embedding plus its own partition) is recorded in
    ``trace``; it is non-increasing.

    ``lap`` and ``partition`` may be supplied when already known for ``graph``
    and ``init``.
    """
    phi = np.array(init, dtype=float, copy=True)
    if phi.shape != (graph.n_nodes, cloud.dim):
        raise ValueError(f"initial embedding shape {phi.shape} does not match "
                         f"({graph.n_nodes}, {cloud.dim})")
    if lap is None:
        lap = elastic_laplacian(graph, config.alpha)
    if partition is None:
        partition = partition_points(cloud, phi, config.r0)
    trace = [_energy(cloud, graph, phi, partition, config.alpha, config.r0)]
    scale = cloud.diameter
    converged = False
    it = 0
    while it < config.max_iter:
        new_phi = solve_embedding(lap, partition, cloud)
        it += 1
        partition = update_partition(cloud, partition, phi, new_phi, config.r0)
        trace.append(_energy(cloud, graph, new_phi, partition, config.alpha, config.r0))
        shift = np.sqrt(np.einsum("ij,ij->i", new_phi - phi, new_phi - phi)).max(initial=0.0)
        phi = new_phi
        if shift <= config.epsilon * scale:
            converged = True
            break
    phi.setflags(write=False)
    return FitResult(phi, partition, trace[-1], it, trace, converged)


def principal_axes(cloud: PointCloud, k: int = 1):
    """Weighted mean, leading ``k`` unit axes (rows) and their standard deviations."""
    w = cloud.w / cloud.w.sum()
    mean = w @ cloud.x
    xc = cloud.x - mean
    cov = (xc * w[:, None]).T @ xc
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:k]
    axes = vecs[:, order].T.copy()
    for a in axes:
        nz = np.flatnonzero(np.abs(a) > 1e-12)
        if nz.size and a[nz[0]] < 0:
            a *= -1
    sdev = np.sqrt(np.clip(vals[order], 0, None))
    return mean, axes, sdev


def first_principal_component(cloud: PointCloud):
    """Return ``(mean, axis, sdev)`` of the leading principal direction.

    The sign of ``axis`` is fixed so that its first nonzero component is positive.
    """
    if cloud.n < 2:
        raise DegenerateDataError("at least two points are needed")
    mean, axes, sdev = principal_axes(cloud, 1)
    scale = max(1.0, float(np.abs(cloud.x).max()))
    if not sdev[0] > 1e-12 * scale:
        raise DegenerateDataError("data has zero variance")
    return mean, axes[0], float(sdev[0])


def init_default(cloud: PointCloud, lam: float = DEFAULT_LAMBDA, mu: float = DEFAULT_MU):
    """Two nodes at mean -/+ one standard deviation along the first principal component."""
    mean, axis, sdev = first_principal_component(cloud)
    phi = np.vstack([mean - sdev * axis, mean + sdev * axis])
    return ElasticGraph.from_edges(2, [(0, 1)], lam, mu), phi


def init_circle(cloud: PointCloud, lam: float = DEFAULT_LAMBDA, mu: float = DEFAULT_MU):
    """Four nodes joined in a ring, spanning the plane of the first two principal components."""
    if cloud.dim < 2:
        raise DegenerateDataError("a circle needs at least two dimensions")
    if cloud.n < 3:
        raise DegenerateDataError("at least three points are needed")
    mean, axes, sdev = principal_axes(cloud, 2)
    if not sdev[1] > 0:
        raise DegenerateDataError("data spans fewer than two dimensions")
    phi = np.vstack([mean + sdev[0] * axes[0], mean + sdev[1] * axes[1],
                     mean - sdev[0] * axes[0], mean - sdev[1] * axes[1]])
    graph = ElasticGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)], lam, mu)
    return graph, phi

"""Geometry of fitted graphs: edge projections, leaf extension, branches and pseudotime."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DisconnectedError, EmptyGraphError, GraphValidationError
from .fitter import PointCloud, partition_points
from .graph import DEFAULT_MU, ElasticGraph


def _project(points, a, b):
    d = b - a
    dd = np.sum(d * d)
    t = np.sum((points - a) * d, axis=-1) / dd
    t = np.clip(t, 0.0, 1.0)
    # a clamped end is the node itself, so ties at a shared node are exact
    q = np.where(t[..., None] == 1.0, b, a + t[..., None] * d)
    r = points - q
    return t, np.sum(r * r, axis=-1)


def project_point_on_edge(point, a, b) -> tuple[float, float]:
    """Clamped position ``t`` of the closest point of segment [a, b] and the squared distance to it.

    >>> project_point_on_edge([0.5, 1.0], [0.0, 0.0], [1.0, 0.0])
    (0.5, 1.0)
    """
    point, a, b = (np.asarray(v, dtype=float) for v in (point, a, b))
    if np.array_equal(a, b):
        raise GraphValidationError("degenerate edge: both endpoints coincide")
    t, sq = _project(point, a, b)
    return float(t), float(sq)


@dataclass(frozen=True, eq=False)
class EdgeProjection:
    """Per point: index of the closest edge, clamped position along it
    (0 at ``edges[e][0]``, 1 at ``edges[e][1]``) and squared distance."""

    edge: np.ndarray
    t: np.ndarray
    sqdist: np.ndarray


def project_dataset(graph: ElasticGraph, embedding, cloud: PointCloud) -> EdgeProjection:
    if graph.n_edges == 0:
        raise EmptyGraphError("cannot project onto a graph without edges")
    phi = np.asarray(embedding, dtype=float)
    x = cloud.x
    best = np.full(len(x), np.inf)
    edge = np.zeros(len(x), dtype=np.int64)
    tt = np.zeros(len(x))
    for e, (u, v) in enumerate(graph.edges):
        if np.array_equal(phi[u], phi[v]):
            raise GraphValidationError(f"degenerate edge {e}: both endpoints coincide")
        t, sq = _project(x, phi[u], phi[v])
        # strict comparison keeps the lowest edge index on ties
        better = sq < best
        best[better] = sq[better]
        edge[better] = e
        tt[better] = t[better]
    return EdgeProjection(edge, tt, best)


def _attach(graph, phi, leaf, pos, default_mu):
    (b,) = graph.neighbors(leaf)
    lam = graph.lambdas[graph.incident_edges(leaf)[0]]
    c = graph.n_nodes
    mus = np.append(graph.mus, 0.0)
    mus[leaf] = graph.mus[b] if graph.degrees[b] >= 2 else default_mu
    g = ElasticGraph(c + 1, np.vstack([graph.edges, [(leaf, c)]]),
                     np.append(graph.lambdas, lam), mus)
    return g, np.vstack([phi, pos])


def extend_leaves(graph: ElasticGraph, embedding, cloud: PointCloud, mode: str = "centroid",
                  partition=None, default_mu: float = DEFAULT_MU):
    """Add one node beyond each leaf that has data past its end.

    The data past a leaf are the points assigned to the leaf whose projection
    on the leaf edge falls beyond the leaf. The new node is put at their
    centroid (``mode="centroid"``), or in the direction of the centroid at the
    largest projection length of those points (``mode="max"``).
    """
    if mode not in ("centroid", "max"):
        raise ValueError(f"unknown extension mode {mode!r}")
    phi = np.asarray(embedding, dtype=float)
    if partition is None:
        partition = partition_points(cloud, phi)
    x, w = cloud.x, cloud.w
    out_graph, out_phi = graph, phi
    for leaf in graph.leaves():
        (b,) = graph.neighbors(leaf)
        d = phi[leaf] - phi[b]
        dd = float(d @ d)
        if dd == 0:
            continue
        s = ((x - phi[b]) @ d) / dd
        sel = (partition.assign == leaf) & (s > 1.0)
        if not sel.any():
            continue
        centroid = (w[sel] @ x[sel]) / w[sel].sum()
        u = centroid - phi[leaf]
        norm = float(np.sqrt(u @ u))
        if norm == 0:
            continue
        if mode == "centroid":
            pos = centroid
        else:
            u /= norm
            pos = phi[leaf] + ((x[sel] - phi[leaf]) @ u).max() * u
        out_graph, out_phi = _attach(out_graph, out_phi, int(leaf), pos, default_mu)
    return out_graph, out_phi


def filter_branches(graph: ElasticGraph, embedding, cloud: PointCloud, min_points: int):
    """Drop edges onto which fewer than ``min_points`` points project, then isolated nodes."""
    phi = np.asarray(embedding, dtype=float)
    if min_points <= 0:
        return graph, phi
    proj = project_dataset(graph, phi, cloud)
    counts = np.bincount(proj.edge, minlength=graph.n_edges)
    keep_e = counts >= min_points
    edges = graph.edges[keep_e]
    deg = np.bincount(edges.ravel(), minlength=graph.n_nodes)
    keep = deg > 0
    if not keep.any():
        raise EmptyGraphError(f"no edge has at least {min_points} projected points")
    index_map = np.full(graph.n_nodes, -1, dtype=np.int64)
    index_map[keep] = np.arange(int(keep.sum()))
    mus = np.where(deg >= 2, graph.mus, 0.0)[keep]
    g = ElasticGraph(int(keep.sum()), index_map[edges], graph.lambdas[keep_e], mus)
    return g, phi[keep]


@dataclass(frozen=True)
class Branch:
    """Maximal path whose interior nodes have degree 2. A cycle branch starts and ends at the same node."""

    nodes: tuple[int, ...]
    is_cycle: bool = False

    @property
    def n_edges(self) -> int:
        return len(self.nodes) - 1


def extract_branches(graph: ElasticGraph) -> list[Branch]:
    adj = graph.adjacency_lists()
    deg = graph.degrees
    used: set[tuple[int, int]] = set()

    def walk(start, nxt):
        path = [start, nxt]
        used.add((min(start, nxt), max(start, nxt)))
        prev, cur = start, nxt
        while deg[cur] == 2 and cur != start:
            a, b = adj[cur]
            step = b if a == prev else a
            key = (min(cur, step), max(cur, step))
            if key in used:
                break
            used.add(key)
            path.append(step)
            prev, cur = cur, step
        return path

    branches = []
    for v in range(graph.n_nodes):
        if deg[v] == 2:
            continue
        for nb in adj[v]:
            if (min(v, nb), max(v, nb)) in used:
                continue
            path = walk(v, nb)
            branches.append(Branch(tuple(path), path[0] == path[-1]))
    # components that are pure cycles
    for v in range(graph.n_nodes):
        for nb in adj[v]:
            if (min(v, nb), max(v, nb)) not in used:
                path = walk(v, nb)
                branches.append(Branch(tuple(path), True))
    return branches


def _bfs_dist(adj, src):
    dist = np.full(len(adj), -1, dtype=np.int64)
    dist[src] = 0
    q = deque([src])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def graph_path(graph: ElasticGraph, root: int, leaf: int) -> list[int]:
    """Fewest-edges path from ``root`` to ``leaf``; ties go to the lexicographically smallest node sequence."""
    n = graph.n_nodes
    if not (0 <= root < n and 0 <= leaf < n):
        raise GraphValidationError("root or leaf is not a node of the graph")
    adj = graph.adjacency_lists()
    dist = _bfs_dist(adj, leaf)
    if dist[root] < 0:
        raise DisconnectedError(f"nodes {root} and {leaf} are not connected")
    path = [root]
    while path[-1] != leaf:
        cur = path[-1]
        path.append(min(v for v in adj[cur] if dist[v] == dist[cur] - 1))
    return path


@dataclass(frozen=True, eq=False)
class PathParametrization:
    """Arc length along a node path and its piecewise-linear map to pseudotime.

    Branching nodes (degree >= 3) inside the path are pinned to equally spaced
    values between 0 (first node) and 1 (last node); pseudotime is linear in
    arc length between consecutive pinned nodes.
    """

    path: tuple[int, ...]
    arclength: np.ndarray
    knots: np.ndarray
    values: np.ndarray

    @classmethod
    def build(cls, graph: ElasticGraph, embedding, path) -> "PathParametrization":
        phi = np.asarray(embedding, dtype=float)
        path = tuple(int(v) for v in path)
        seg = np.linalg.norm(np.diff(phi[list(path)], axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        deg = graph.degrees
        pinned = [0] + [i for i in range(1, len(path) - 1) if deg[path[i]] >= 3] + [len(path) - 1]
        values = np.arange(len(pinned)) / (len(pinned) - 1)
        return cls(path, s, s[pinned], values)

    def at(self, s):
        return np.interp(s, self.knots, self.values)

    @property
    def node_values(self) -> np.ndarray:
        return self.at(self.arclength)

    def locate(self, embedding, points):
        """Arc-length position of the closest point on the path for each of ``points``."""
        phi = np.asarray(embedding, dtype=float)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        best = np.full(len(points), np.inf)
        pos = np.zeros(len(points))
        for k in range(len(self.path) - 1):
            a, b = phi[self.path[k]], phi[self.path[k + 1]]
            t, sq = _project(points, a, b)
            better = sq < best
            best[better] = sq[better]
            pos[better] = self.arclength[k] + t[better] * (self.arclength[k + 1] - self.arclength[k])
        return pos


@dataclass(frozen=True, eq=False)
class PseudotimeTable:
    pseudotime: np.ndarray
    on_path: np.ndarray
    edge: np.ndarray
    t: np.ndarray
    path: tuple[int, ...]
    node_pseudotime: np.ndarray


def pseudotime(graph: ElasticGraph, embedding, projections: EdgeProjection,
               root: int, leaf: int) -> PseudotimeTable:
    """Pseudotime along the path from ``root`` (0) to ``leaf`` (1).

    Points whose closest edge is not on the path are flagged and get NaN.
    """
    if root == leaf:
        raise GraphValidationError("root and leaf must differ")
    path = graph_path(graph, root, leaf)
    param = PathParametrization.build(graph, embedding, path)
    # path edge index -> (position along the path, orientation)
    step_of = {}
    for k in range(len(path) - 1):
        e = graph.edge_index(path[k], path[k + 1])
        step_of[e] = (k, graph.edges[e][0] == path[k])
    n = len(projections.edge)
    s = np.full(n, np.nan)
    on = np.zeros(n, dtype=bool)
    for e, (k, forward) in step_of.items():
        sel = projections.edge == e
        if not sel.any():
            continue
        t = projections.t[sel] if forward else 1.0 - projections.t[sel]
        s[sel] = param.arclength[k] + t * (param.arclength[k + 1] - param.arclength[k])
        on[sel] = True
    pt = np.full(n, np.nan)
    pt[on] = param.at(s[on])
    return PseudotimeTable(pt, on, projections.edge, projections.t, tuple(path), param.node_values)

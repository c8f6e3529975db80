"""Elastic graph structure, elastic matrix and the associated Laplacian operator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphValidationError

DEFAULT_LAMBDA = 0.01
DEFAULT_MU = 0.1


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ElasticGraph:
    """Primitive elastic graph.

    Edges are stored as ``(i, j)`` pairs with ``i < j`` in lexicographic order;
    ``lambdas`` is aligned to ``edges`` and ``mus`` to nodes. Every node of
    degree >= 2 is the center of the star formed by all its neighbors, with
    bending modulus ``mus[node]``.
    """

    n_nodes: int
    edges: np.ndarray
    lambdas: np.ndarray
    mus: np.ndarray
    _degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        lambdas = np.asarray(self.lambdas, dtype=float).reshape(-1)
        if lambdas.shape[0] != edges.shape[0]:
            raise ValueError("lambdas must be aligned to edges")
        mus = np.asarray(self.mus, dtype=float).reshape(-1)
        if mus.shape[0] != self.n_nodes:
            raise ValueError("mus must have one entry per node")
        if edges.size and (edges.min() < 0 or edges.max() >= self.n_nodes):
            raise ValueError("edge endpoint out of range")
        # canonical form: (min, max) pairs in lexicographic order
        edges = np.sort(edges, axis=1)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        object.__setattr__(self, "n_nodes", int(self.n_nodes))
        object.__setattr__(self, "edges", _frozen(edges[order], np.int64))
        object.__setattr__(self, "lambdas", _frozen(lambdas[order], float))
        object.__setattr__(self, "mus", _frozen(mus, float))
        deg = np.bincount(self.edges.ravel(), minlength=self.n_nodes)
        object.__setattr__(self, "_degrees", _frozen(deg, np.int64))

    @classmethod
    def from_edges(cls, n_nodes, edges, lam=DEFAULT_LAMBDA, mu=DEFAULT_MU):
        """Build a graph with uniform moduli.

        ``mu`` is assigned to every node of degree >= 2 and zero elsewhere.
        Either argument may also be a per-edge / per-node sequence.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        lambdas = np.broadcast_to(np.asarray(lam, dtype=float), (len(edges),))
        deg = np.bincount(edges.ravel(), minlength=n_nodes)
        if np.ndim(mu) == 0:
            mus = np.where(deg >= 2, float(mu), 0.0)
        else:
            mus = np.asarray(mu, dtype=float)
        return cls(n_nodes, edges, lambdas, mus)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    def neighbors(self, node: int) -> list[int]:
        e = self.edges
        nb = np.concatenate([e[e[:, 0] == node, 1], e[e[:, 1] == node, 0]])
        return sorted(int(v) for v in nb)

    def adjacency_lists(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n_nodes)]
        for a, b in self.edges:
            adj[a].append(int(b))
            adj[b].append(int(a))
        return [sorted(nb) for nb in adj]

    def incident_edges(self, node: int) -> np.ndarray:
        e = self.edges
        return np.flatnonzero((e[:, 0] == node) | (e[:, 1] == node))

    def edge_index(self, a: int, b: int) -> int:
        a, b = min(a, b), max(a, b)
        hit = np.flatnonzero((self.edges[:, 0] == a) & (self.edges[:, 1] == b))
        if hit.size == 0:
            raise KeyError(f"no edge {{{a}, {b}}}")
        return int(hit[0])

    def star_centers(self) -> np.ndarray:
        return np.flatnonzero(self.degrees >= 2)

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.degrees == 1)

    def n_components(self) -> int:
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        n = self.n_nodes
        if n == 0:
            return 0
        e = self.edges
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return int(connected_components(adj, directed=False)[0])

    def is_tree(self) -> bool:
        return self.n_nodes > 0 and self.n_edges == self.n_nodes - 1 and self.n_components() == 1

    def is_path(self) -> bool:
        return self.is_tree() and int(self.degrees.max(initial=0)) <= 2

    def is_cycle(self) -> bool:
        return (self.n_nodes >= 3 and self.n_edges == self.n_nodes
                and self.n_components() == 1 and bool(np.all(self.degrees == 2)))

    def canonical(self) -> dict:
        """Plain-data form used for serialization."""
        return {
            "n_nodes": self.n_nodes,
            "edges": self.edges.tolist(),
            "lambdas": self.lambdas.tolist(),
            "mus": self.mus.tolist(),
        }

    def structurally_equal(self, other: "ElasticGraph") -> bool:
        return (self.n_nodes == other.n_nodes
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.lambdas, other.lambdas)
                and np.array_equal(self.mus, other.mus))


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    info: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_graph(graph: ElasticGraph) -> ValidationReport:
    """Check the structural invariants of ``graph``; never raises."""
    report = ValidationReport()
    e = graph.edges
    for a, b in e[e[:, 0] == e[:, 1]]:
        report.violations.append(f"self-loop at node {a}")
    if len(e) > 1:
        dup = np.all(e[1:] == e[:-1], axis=1)
        for a, b in e[1:][dup]:
            report.violations.append(f"duplicate edge {{{a}, {b}}}")
    # zero stretching is tolerated so that lambda = mu = 0 reduces to k-means
    for i in np.flatnonzero(~(graph.lambdas >= 0) | ~np.isfinite(graph.lambdas)):
        a, b = e[i]
        report.violations.append(f"nonpositive stretching modulus on edge {{{a}, {b}}}")
    bad_mu = ~(graph.mus >= 0) | ~np.isfinite(graph.mus)
    for v in np.flatnonzero(bad_mu):
        report.violations.append(f"negative bending modulus at node {v}")
    for v in np.flatnonzero((graph.mus > 0) & (graph.degrees < 2)):
        report.violations.append(f"bending modulus at non-center node {v}")
    ncomp = graph.n_components()
    if ncomp > 1:
        report.info.append(f"graph has {ncomp} connected components")
    return report


def check_graph(graph: ElasticGraph) -> None:
    report = validate_graph(graph)
    if not report.ok:
        raise GraphValidationError("; ".join(report.violations))


def effective_lambdas(graph: ElasticGraph, alpha: float) -> np.ndarray:
    """Per-edge stretching weights with the branching penalty folded in."""
    if graph.n_edges == 0:
        return np.zeros(0)
    deg = graph.degrees
    a, b = graph.edges[:, 0], graph.edges[:, 1]
    bracket = np.maximum(2, np.maximum(deg[a], deg[b])) - 2
    return graph.lambdas + alpha * bracket


def build_elastic_matrix(graph: ElasticGraph, effective_alpha: float = 0.0) -> np.ndarray:
    """Symmetric |V| x |V| elastic matrix.

    Off-diagonal entries hold the (alpha-penalized) edge moduli, the diagonal
    holds the bending modulus of the star centered at each node.
    """
    check_graph(graph)
    if effective_alpha < 0:
        raise ValueError("alpha must be nonnegative")
    n = graph.n_nodes
    em = np.zeros((n, n))
    a, b = graph.edges[:, 0], graph.edges[:, 1]
    w = effective_lambdas(graph, effective_alpha)
    em[a, b] = w
    em[b, a] = w
    em[np.diag_indices(n)] = np.where(graph.degrees >= 2, graph.mus, 0.0)
    return em


def _check_consistent(em: np.ndarray, graph: ElasticGraph) -> None:
    n = graph.n_nodes
    if em.shape != (n, n):
        raise GraphValidationError(f"elastic matrix shape {em.shape} does not match {n} nodes")
    if not np.array_equal(em, em.T):
        raise GraphValidationError("elastic matrix is not symmetric")
    off = em.copy()
    off[np.diag_indices(n)] = 0.0
    mask = np.zeros((n, n), dtype=bool)
    a, b = graph.edges[:, 0], graph.edges[:, 1]
    mask[a, b] = mask[b, a] = True
    if np.any(off[~mask] != 0):
        raise GraphValidationError("elastic matrix has weights outside the edge set")
    if np.any(np.diag(em)[graph.degrees < 2] != 0):
        raise GraphValidationError("elastic matrix has a bending modulus at a non-center node")


def decompose_elastic_matrix(em: np.ndarray, graph: ElasticGraph):
    """Split the elastic matrix into three weighted adjacency matrices.

    Returns
    -------
    lam : ndarray
        Edge springs.
    star_edges : ndarray
        Springs from each k-star center to its leaves, weight mu/k. An edge
        shared by two stars receives both contributions.
    star_leaves : ndarray
        Repulsive springs between every leaf pair of each star, weight -mu/k**2.
    """
    _check_consistent(em, graph)
    n = graph.n_nodes
    lam = em.copy()
    lam[np.diag_indices(n)] = 0.0
    star_edges = np.zeros((n, n))
    star_leaves = np.zeros((n, n))
    adj = graph.adjacency_lists()
    for c in graph.star_centers():
        mu = em[c, c]
        if mu == 0.0:
            continue
        nb = np.asarray(adj[c])
        k = len(nb)
        star_edges[c, nb] += mu / k
        star_edges[nb, c] += mu / k
        block = np.full((k, k), -mu / k**2)
        np.fill_diagonal(block, 0.0)
        star_leaves[np.ix_(nb, nb)] += block
    return lam, star_edges, star_leaves


def laplacian(adjacency: np.ndarray) -> np.ndarray:
    """L(A)_ij = delta_ij * sum_k A_kj - A_ij."""
    return np.diag(adjacency.sum(axis=0)) - adjacency


def graph_laplacian_sum(em: np.ndarray, graph: ElasticGraph) -> np.ndarray:
    """Sum of the edge, star-edge and star-leaf Laplacians.

    ``2 * L @ phi`` is the gradient of the elastic energy with respect to the
    node positions ``phi``.
    """
    lam, star_edges, star_leaves = decompose_elastic_matrix(em, graph)
    return laplacian(lam) + laplacian(star_edges) + laplacian(star_leaves)


def elastic_laplacian(graph: ElasticGraph, alpha: float = 0.0) -> np.ndarray:
    """Shortcut: Laplacian operator straight from the graph."""
    return graph_laplacian_sum(build_elastic_matrix(graph, alpha), graph)

"""Elastic energy of an embedded graph and the full data-fitting objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError
from .graph import ElasticGraph, effective_lambdas


@dataclass(frozen=True)
class EnergyBreakdown:
    mse: float
    u_e: float
    u_r: float
    total: float
    trimmed_count: int

    def as_dict(self) -> dict:
        return {"mse": self.mse, "u_e": self.u_e, "u_r": self.u_r,
                "total": self.total, "trimmed_count": self.trimmed_count}


def _check_embedding(graph, embedding):
    phi = np.asarray(embedding, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != graph.n_nodes or phi.shape[1] < 1:
        raise ValueError(
            f"embedding of shape {phi.shape} does not match a graph with {graph.n_nodes} nodes")
    return phi


def stretching_energy(graph: ElasticGraph, embedding, alpha: float = 0.0) -> float:
    phi = _check_embedding(graph, embedding)
    if graph.n_edges == 0:
        return 0.0
    d = phi[graph.edges[:, 0]] - phi[graph.edges[:, 1]]
    return float(np.dot(effective_lambdas(graph, alpha), np.einsum("ij,ij->i", d, d)))


def harmonicity_energy(graph: ElasticGraph, embedding) -> float:
    """Sum over stars of mu * |center - mean(leaves)|^2."""
    phi = _check_embedding(graph, embedding)
    total = 0.0
    adj = graph.adjacency_lists()
    for c in graph.star_centers():
        mu = graph.mus[c]
        if mu == 0.0:
            continue
        dev = phi[c] - phi[adj[c]].mean(axis=0)
        total += mu * float(dev @ dev)
    return total


def elastic_energy(graph: ElasticGraph, embedding, alpha: float = 0.0) -> tuple[float, float]:
    """Return ``(u_e, u_r)``: stretching (with branching penalty) and harmonicity terms."""
    return stretching_energy(graph, embedding, alpha), harmonicity_energy(graph, embedding)


def approximation_error(cloud, embedding, partition, r0: float = np.inf) -> tuple[float, int]:
    """Trimmed, weight-normalized mean squared distance of points to their nodes.

    Points marked as trimmed contribute ``r0**2``.
    """
    x, w = cloud.x, cloud.w
    wsum = float(w.sum())
    if not wsum > 0:
        raise DegenerateWeightsError("sum of point weights is zero")
    phi = np.asarray(embedding, dtype=float)
    assign = partition.assign
    kept = assign >= 0
    r0sq = float(r0) ** 2
    d = x[kept] - phi[assign[kept]]
    sq = np.minimum(np.einsum("ij,ij->i", d, d), r0sq)
    trimmed = int((~kept).sum())
    acc = float(w[kept] @ sq)
    if trimmed:
        acc += float(w[~kept].sum()) * r0sq
    return acc / wsum, trimmed


def total_energy(cloud, graph: ElasticGraph, embedding, partition,
                 alpha: float = 0.0, r0: float = np.inf) -> EnergyBreakdown:
    mse, trimmed = approximation_error(cloud, embedding, partition, r0)
    u_e, u_r = elastic_energy(graph, embedding, alpha)
    return EnergyBreakdown(mse, u_e, u_r, mse + u_e + u_r, trimmed)

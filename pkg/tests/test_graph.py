import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elasticgraph.errors import GraphValidationError
from elasticgraph.graph import (ElasticGraph, build_elastic_matrix, decompose_elastic_matrix,
                                effective_lambdas, elastic_laplacian, graph_laplacian_sum,
                                laplacian, validate_graph)

from conftest import random_connected_edges


def star3():
    return ElasticGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)], lam=0.5, mu=0.2)


def test_edges_are_canonicalized():
    g = ElasticGraph(3, [(2, 1), (1, 0)], [0.3, 0.7], [0.0, 0.1, 0.0])
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert g.lambdas.tolist() == [0.7, 0.3]
    assert g.degrees.tolist() == [1, 2, 1]
    assert not g.edges.flags.writeable


def test_from_edges_puts_mu_only_on_star_centers():
    g = star3()
    assert g.mus.tolist() == [0.2, 0.0, 0.0, 0.0]
    assert g.star_centers().tolist() == [0]
    assert g.leaves().tolist() == [1, 2, 3]


def test_shape_predicates():
    path = ElasticGraph.from_edges(3, [(0, 1), (1, 2)])
    ring = ElasticGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert path.is_path() and path.is_tree() and not path.is_cycle()
    assert ring.is_cycle() and not ring.is_tree()
    assert star3().is_tree() and not star3().is_path()
    two = ElasticGraph.from_edges(4, [(0, 1), (2, 3)])
    assert two.n_components() == 2


def test_validation_flags_violations():
    bad = ElasticGraph(3, [(0, 0), (0, 1), (1, 0)], [-1.0, 0.1, 0.1], [-0.5, 0.1, 0.2])
    rep = validate_graph(bad)
    text = " ".join(rep.violations)
    assert "self-loop" in text and "duplicate" in text and "stretching" in text
    assert "negative bending" in text and "non-center" in text
    assert not rep.ok


def test_validation_reports_components_as_info():
    rep = validate_graph(ElasticGraph.from_edges(4, [(0, 1), (2, 3)]))
    assert rep.ok and rep.info


def test_elastic_matrix_layout():
    em = build_elastic_matrix(star3())
    expect = np.zeros((4, 4))
    expect[0, 1:] = expect[1:, 0] = 0.5
    expect[0, 0] = 0.2
    np.testing.assert_array_equal(em, expect)


def test_elastic_matrix_rejects_invalid_graph():
    with pytest.raises(GraphValidationError):
        build_elastic_matrix(ElasticGraph(2, [(0, 0)], [0.1], [0.0, 0.0]))


def test_alpha_folds_into_edges_at_branching_nodes():
    g = ElasticGraph.from_edges(6, [(0, 1), (0, 2), (0, 3), (0, 4), (4, 5)], lam=1.0)
    # node 0 has degree 4: its edges get 2 * alpha; edge (4, 5) touches degree <= 2
    np.testing.assert_array_equal(effective_lambdas(g, 0.5), [2.0, 2.0, 2.0, 2.0, 1.0])


def test_decomposition_of_a_three_star():
    lam, se, sl = decompose_elastic_matrix(build_elastic_matrix(star3()), star3())
    assert lam[0, 1] == 0.5 and lam[0, 0] == 0
    np.testing.assert_allclose(se[0, 1:], 0.2 / 3)
    np.testing.assert_allclose(sl[1, 2], -0.2 / 9)
    assert sl[1, 1] == 0 and sl[0, 1] == 0


def test_shared_edge_accumulates_both_star_contributions():
    g = ElasticGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)], lam=1.0, mu=0.6)
    _, se, _ = decompose_elastic_matrix(build_elastic_matrix(g), g)
    # edge (1, 2) belongs to the 2-stars centered at 1 and at 2
    assert se[1, 2] == pytest.approx(0.6 / 2 + 0.6 / 2)


def test_laplacian_rows_sum_to_zero(rng):
    a = rng.random((5, 5))
    a = a + a.T
    np.testing.assert_allclose(laplacian(a).sum(axis=1), 0, atol=1e-12)


def brute_elastic_energy(g, phi, alpha):
    u = 0.0
    deg = g.degrees
    for (a, b), lam in zip(g.edges, g.lambdas):
        u += (lam + alpha * (max(2, deg[a], deg[b]) - 2)) * np.sum((phi[a] - phi[b]) ** 2)
    for c in range(g.n_nodes):
        if deg[c] >= 2:
            nb = g.neighbors(c)
            u += g.mus[c] * np.sum((phi[c] - phi[nb].mean(axis=0)) ** 2)
    return u


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(0, 3), st.integers(0, 2**31 - 1))
def test_quadratic_form_equals_energy(n, extra, seed):
    rng = np.random.default_rng(seed)
    edges = random_connected_edges(n, rng, extra)
    g = ElasticGraph.from_edges(n, edges, rng.random(len(edges)), 0.0)
    g = ElasticGraph(n, g.edges, g.lambdas, np.where(g.degrees >= 2, rng.random(n), 0.0))
    phi = rng.normal(size=(n, 3))
    alpha = float(rng.random())
    lap = elastic_laplacian(g, alpha)
    np.testing.assert_allclose(lap, lap.T, atol=1e-14)
    quad = float(np.trace(phi.T @ lap @ phi))
    assert quad == pytest.approx(brute_elastic_energy(g, phi, alpha), rel=1e-10, abs=1e-12)


def test_laplacian_sum_matches_shortcut():
    g = star3()
    em = build_elastic_matrix(g, 0.3)
    np.testing.assert_array_equal(graph_laplacian_sum(em, g), elastic_laplacian(g, 0.3))

import math
from itertools import permutations

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from elasticgraph import synthetic
from elasticgraph.errors import ConfigError, DegenerateDataError
from elasticgraph.fitter import FitConfig, PointCloud
from elasticgraph.grammar import grow_graph, make_strategy
from elasticgraph.robust import (UNCAPTURED, density_seed, estimate_trimming_radius,
                                 principal_forest, travel_maze_cluster)


def test_radius_of_two_points():
    assert estimate_trimming_radius(PointCloud([[0.0, 0.0], [3.0, 4.0]])) == 5.0


def test_radius_matches_all_pairs_median():
    x = np.linspace(0, 1, 301)
    expect = float(np.median([abs(a - b) for i, a in enumerate(x) for b in x[i + 1:]]))
    got = estimate_trimming_radius(PointCloud(x), sample_size=1000)
    assert got == pytest.approx(expect, rel=1e-12)


def test_radius_max_quantile_and_errors():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2))
    assert estimate_trimming_radius(PointCloud(x), quantile=1.0) == pytest.approx(pdist(x).max())
    with pytest.raises(DegenerateDataError):
        estimate_trimming_radius(PointCloud(np.ones((5, 2))))
    with pytest.raises(ConfigError):
        estimate_trimming_radius(PointCloud(x), sample_size=1)


def test_radius_is_deterministic_under_seed():
    x = np.random.default_rng(1).normal(size=(3000, 2))
    a = estimate_trimming_radius(PointCloud(x), seed=7)
    assert a == estimate_trimming_radius(PointCloud(x), seed=7)


def test_density_seed_prefers_the_blob():
    rng = np.random.default_rng(2)
    blob = rng.normal(scale=0.05, size=(200, 2))
    outliers = rng.uniform(-5, 5, size=(20, 2))
    g, phi = density_seed(PointCloud(np.vstack([outliers, blob])), density_radius=0.1)
    assert g.n_nodes == 2 and g.n_edges == 1
    assert np.all(np.abs(phi) < 0.3)
    assert not np.array_equal(phi[0], phi[1])


def test_density_seed_two_points_and_ties():
    g, phi = density_seed(PointCloud([[0.0, 0.0], [1.0, 0.0]]), density_radius=0.1)
    np.testing.assert_array_equal(phi, [[0.0, 0.0], [1.0, 0.0]])
    grid = np.arange(10, dtype=float)[:, None]
    _, phi = density_seed(PointCloud(grid), density_radius=0.5)
    assert phi[0, 0] == 0.0 and phi[1, 0] == 1.0
    with pytest.raises(DegenerateDataError):
        density_seed(PointCloud([[1.0], [1.0]]))


def two_segments():
    a = synthetic.line(150, 1.0, 2, 0.01, seed=1)
    b = synthetic.line(150, 1.0, 2, 0.01, seed=2) + [0.0, 3.0]
    return np.vstack([a, b])


def test_forest_separates_two_segments():
    x = two_segments()
    forest = principal_forest(PointCloud(x), make_strategy("curve", 6), FitConfig(r0=0.3))
    assert forest.n_graphs == 2
    census = {tuple(np.unique(forest.point_labels[s])) for s in (slice(0, 150), slice(150, 300))}
    assert census == {(0,), (1,)}


def test_forest_single_cluster_and_immediate_stop():
    x = synthetic.line(200, 1.0, 2, 0.02, seed=3)
    one = principal_forest(PointCloud(x), make_strategy("curve", 6), FitConfig(r0=0.5))
    assert one.n_graphs == 1
    none = principal_forest(PointCloud(x), make_strategy("curve", 6), FitConfig(r0=0.5),
                            min_remaining=len(x))
    assert none.n_graphs == 0 and np.all(none.point_labels == UNCAPTURED)


def test_forest_with_infinite_radius_is_a_plain_fit():
    x = two_segments()
    cloud = PointCloud(x)
    forest = principal_forest(cloud, make_strategy("curve", 6), FitConfig())
    direct = grow_graph(cloud, make_strategy("curve", 6), FitConfig())
    assert forest.n_graphs == 1
    np.testing.assert_array_equal(forest.graphs[0].embedding, direct.embedding)
    assert np.all(forest.point_labels == 0)


def label_accuracy(labels, truth, k):
    return max(np.mean(np.array(p)[labels] == truth) for p in permutations(range(k)))


def test_maze_on_parallel_segments():
    x = two_segments()
    truth = np.repeat([0, 1], 150)
    maze = travel_maze_cluster(PointCloud(x), 8, FitConfig(r0=0.3), max_curves=5)
    assert len(maze.curves) == 2
    assert all(c.graph.is_path() for c in maze.curves)
    assert label_accuracy(maze.labels, truth, 2) == 1.0


def test_maze_on_a_single_curve():
    x = synthetic.line(200, 1.0, 2, 0.01, seed=4)
    maze = travel_maze_cluster(PointCloud(x), 10, FitConfig(r0=0.3), max_curves=5)
    assert len(maze.curves) == 1
    assert np.all(maze.labels == 0)


def test_maze_captures_are_disjoint_and_need_finite_radius():
    x = two_segments()
    maze = travel_maze_cluster(PointCloud(x), 8, FitConfig(r0=0.3), max_curves=1)
    assert len(maze.curves) == 1
    assert set(np.unique(maze.captured)) <= {UNCAPTURED, 0}
    with pytest.raises(ConfigError):
        travel_maze_cluster(PointCloud(x), 8, FitConfig())

from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_tree_edges(n, rng):
    """Uniform-attachment random tree on ``n`` nodes."""
    return [(int(rng.integers(i)), i) for i in range(1, n)]


def random_connected_edges(n, rng, extra=0):
    edges = set(map(tuple, random_tree_edges(n, rng)))
    for _ in range(extra):
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        edges.add((a, b))
    return sorted((min(a, b), max(a, b)) for a, b in edges)

"""Synthetic point clouds with known one-dimensional skeletons.

Every generator takes a ``seed`` and returns plain arrays; generators with a
skeleton also return per-point ground-truth labels and the skeleton segments
(pairs of endpoints) so that fits can be scored against them.
"""

from __future__ import annotations

import numpy as np


def line(n=200, length=1.0, dim=2, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    x = np.zeros((n, dim))
    x[:, 0] = np.linspace(0.0, length, n)
    if noise:
        x += rng.normal(scale=noise, size=x.shape)
    return x


def star(n_per_arm=100, n_arms=3, arm_length=1.0, noise=0.05, seed=0):
    """Arms radiating from the origin in 2-D at equal angles.

    Returns ``(x, labels, segments)``.
    """
    rng = np.random.default_rng(seed)
    pts, labels, segments = [], [], []
    for k in range(n_arms):
        theta = 2 * np.pi * k / n_arms + np.pi / 2
        u = np.array([np.cos(theta), np.sin(theta)])
        s = rng.uniform(0.0, arm_length, n_per_arm)
        pts.append(s[:, None] * u + rng.normal(scale=noise, size=(n_per_arm, 2)))
        labels.append(np.full(n_per_arm, k))
        segments.append((np.zeros(2), arm_length * u))
    return np.vstack(pts), np.concatenate(labels), segments


def downsample(x, fraction, seed=0):
    rng = np.random.default_rng(seed)
    m = max(2, int(round(fraction * len(x))))
    return x[np.sort(rng.choice(len(x), m, replace=False))]


def oversample(x, factor=20, spread=0.02, seed=0):
    """``factor`` new points scattered around each original point."""
    rng = np.random.default_rng(seed)
    rep = np.repeat(x, factor, axis=0)
    return rep + rng.normal(scale=spread, size=rep.shape)


def circle(n=300, radius=1.0, noise=0.05, seed=0):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * np.pi, n)
    r = radius + rng.normal(scale=noise, size=n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def uniform_noise(n, low, high, seed=0):
    rng = np.random.default_rng(seed)
    low, high = np.asarray(low, float), np.asarray(high, float)
    return rng.uniform(low, high, size=(n, len(low)))


def thick_turn(n=600, noise_min=0.02, noise_max=0.15, seed=0):
    """Points along a half circle whose thickness grows towards the turn.

    The local spread is ``noise_min`` at both ends and ``noise_max`` at the apex.
    """
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, 1.0, n)
    theta = np.pi * s
    centre = np.column_stack([np.cos(theta), np.sin(theta)])
    spread = noise_min + (noise_max - noise_min) * np.sin(theta)
    return centre + rng.normal(size=(n, 2)) * spread[:, None]


def crossing_threads(n_per_thread=300, n_threads=3, length=2.0, noise=0.01, seed=0):
    """Straight threads through a common centre at equally spaced angles.

    Returns ``(x, labels)``.
    """
    rng = np.random.default_rng(seed)
    pts, labels = [], []
    for k in range(n_threads):
        theta = np.pi * k / n_threads + 0.1
        u = np.array([np.cos(theta), np.sin(theta)])
        s = rng.uniform(-length / 2, length / 2, n_per_thread)
        pts.append(s[:, None] * u + rng.normal(scale=noise, size=(n_per_thread, 2)))
        labels.append(np.full(n_per_thread, k))
    return np.vstack(pts), np.concatenate(labels)


def hidden_branch_tree(n_per_branch=150, dim=10, noise=0.03, seed=0):
    """Branching tree in ``dim`` dimensions with one branch orthogonal to the main plane.

    A trunk along axis 0 and two branches in the plane of axes 0 and 1 carry most
    of the variance; a fourth branch leaves the junction along axis 2 and
    vanishes when the data are projected on their first two principal
    components. Returns ``(x, labels)``.
    """
    rng = np.random.default_rng(seed)
    junction = np.zeros(dim)
    ends = []
    e = np.zeros(dim); e[0] = -2.0; ends.append(e)
    e = np.zeros(dim); e[0] = 1.6; e[1] = 1.2; ends.append(e)
    e = np.zeros(dim); e[0] = 1.6; e[1] = -1.2; ends.append(e)
    e = np.zeros(dim); e[2] = 1.0; ends.append(e)
    pts, labels = [], []
    for k, end in enumerate(ends):
        s = rng.uniform(0.0, 1.0, n_per_branch)
        pts.append(junction + s[:, None] * (end - junction)
                   + rng.normal(scale=noise, size=(n_per_branch, dim)))
        labels.append(np.full(n_per_branch, k))
    return np.vstack(pts), np.concatenate(labels)


def segment_distance(points, segments):
    """Distance from each point to the nearest of the given segments."""
    points = np.atleast_2d(points)
    best = np.full(len(points), np.inf)
    for a, b in segments:
        d = b - a
        t = np.clip(((points - a) @ d) / (d @ d), 0.0, 1.0)
        r = points - (a + t[:, None] * d)
        best = np.minimum(best, np.sqrt(np.einsum("ij,ij->i", r, r)))
    return best

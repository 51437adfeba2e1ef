"""Synthetic point-cloud classes: spheres, cubes, pyramids and planes.

Four geometrically distinct families with additive noise, intended to be
easily separable by a tiny classifier while still exercising the full
point-cloud pipeline.
"""
from __future__ import annotations

import numpy as np

CLASS_NAMES = ("sphere", "cube", "pyramid", "plane")


def _sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d


def _cube(rng: np.random.Generator, n: int) -> np.ndarray:
    # points on the surface of the unit cube
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    axis = rng.integers(0, 3, size=n)
    sign = rng.choice([-1.0, 1.0], size=n)
    pts[np.arange(n), axis] = sign
    return pts


def _pyramid(rng: np.random.Generator, n: int) -> np.ndarray:
    # square base at z = 0, apex at (0, 0, 1.5); sample on the lateral faces
    u = rng.uniform(size=(n, 1))            # height fraction
    base = rng.uniform(-1.0, 1.0, size=(n, 2))
    side = rng.integers(0, 4, size=n)
    xy = base.copy()
    xy[side == 0, 1] = -1.0
    xy[side == 1, 1] = 1.0
    xy[side == 2, 0] = -1.0
    xy[side == 3, 0] = 1.0
    pts = np.concatenate([xy * (1.0 - u), 1.5 * u], axis=1)
    return pts


def _plane(rng: np.random.Generator, n: int) -> np.ndarray:
    pts = np.zeros((n, 3))
    pts[:, :2] = rng.uniform(-1.2, 1.2, size=(n, 2))
    return pts


_GENERATORS = (_sphere, _cube, _pyramid, _plane)


def make_cloud(label: int, n_points: int, rng: np.random.Generator,
               noise: float = 0.02) -> np.ndarray:
    pts = _GENERATORS[label](rng, n_points)
    return pts + rng.normal(scale=noise, size=pts.shape)


def make_dataset(n_per_class: int, n_points: int, seed: int,
                 n_classes: int = 4, noise: float = 0.02):
    """Balanced dataset of (clouds, labels) with clouds (B, n_points, 3)."""
    if not 2 <= n_classes <= len(_GENERATORS):
        raise ValueError(f"n_classes must be in 2..{len(_GENERATORS)}")
    rng = np.random.default_rng(seed)
    clouds = []
    labels = []
    for c in range(n_classes):
        for _ in range(n_per_class):
            clouds.append(make_cloud(c, n_points, rng, noise))
            labels.append(c)
    order = rng.permutation(len(labels))
    return (np.stack(clouds)[order],
            np.asarray(labels, dtype=np.int64)[order])

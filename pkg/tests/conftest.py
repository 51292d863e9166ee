"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from mme.geometry import PointCloud, as_unit


def random_rotation(rng) -> np.ndarray:
    """Uniform-ish random proper rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def planar_cloud(rng, n=120, normal=(0.0, 0.0, 1.0), offset=0.0, jitter=0.0,
                 extent=1.0) -> np.ndarray:
    """Points scattered on (or near) one plane, as an (n, 3) array."""
    normal = as_unit(np.asarray(normal, dtype=float))
    seed = np.array([1.0, 0.0, 0.0])
    if abs(normal @ seed) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    e1 = as_unit(np.cross(normal, seed))
    e2 = np.cross(normal, e1)
    uv = rng.uniform(-extent, extent, size=(n, 2))
    pts = offset * normal + uv[:, :1] * e1 + uv[:, 1:] * e2
    if jitter > 0.0:
        pts = pts + rng.normal(0.0, jitter, size=(n, 1)) * normal
    return pts


def two_plane_cloud(rng, n_per=80, angle_deg=90.0, jitter=0.0):
    """Two planar patches meeting at a given dihedral angle.

    Returns (PointCloud with labels, [normal0, normal1]) where the normals
    are the exact patch normals.
    """
    n0 = np.array([0.0, 0.0, 1.0])
    rad = np.radians(angle_deg)
    n1 = np.array([np.sin(rad), 0.0, np.cos(rad)])
    p0 = planar_cloud(rng, n_per, n0, offset=0.0, jitter=jitter)
    p1 = planar_cloud(rng, n_per, n1, offset=0.5, jitter=jitter)
    cloud = PointCloud(
        np.vstack([p0, p1]),
        labels=np.repeat([0, 1], n_per),
    )
    return cloud, [n0, n1]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

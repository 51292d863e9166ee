"""Per-point normal estimation from k-nearest-neighbor plane fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DegenerateInput, PointCloud


@dataclass(frozen=True)
class NormalEstimationConfig:
    """k_neighbors excludes the point itself; the fit uses k+1 points.

    The viewpoint disambiguates normal orientation: every normal is
    flipped, if needed, so it points toward the sensor.  Clouds produced
    by the synthetic generator are in camera coordinates, so the default
    origin viewpoint is the sensor position.
    """

    k_neighbors: int = 7
    viewpoint: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.k_neighbors < 3:
            raise ValueError("k_neighbors must be at least 3")


def estimate_normals(cloud: PointCloud, cfg: NormalEstimationConfig | None = None) -> PointCloud:
    """Estimate a unit normal per point from its local neighborhood.

    Each point's neighborhood (itself plus its k nearest Euclidean
    neighbors) gets a total-least-squares plane; the plane normal, oriented
    toward cfg.viewpoint, becomes the point normal.  Rank-deficient
    neighborhoods produce a zero normal flagged invalid in ``normal_ok``
    instead of raising.

    Returns a new PointCloud sharing the input points and labels.
    """
    if cfg is None:
        cfg = NormalEstimationConfig()
    pts = cloud.points
    n = pts.shape[0]
    if n < cfg.k_neighbors + 1:
        raise DegenerateInput(
            f"need at least {cfg.k_neighbors + 1} points, got {n}"
        )
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=cfg.k_neighbors + 1)

    # batched covariance of each neighborhood, eigh for the smallest axis
    hoods = pts[idx]                                  # (n, k+1, 3)
    centered = hoods - hoods.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0]

    # a usable neighborhood must have two independent in-plane directions
    ok = (evals[:, 2] > 0.0) & (evals[:, 1] > 1e-12 * evals[:, 2])

    norms = np.linalg.norm(normals, axis=1)
    ok &= norms > 1e-12
    safe = np.where(ok, norms, 1.0)
    normals = normals / safe[:, None]

    # orient toward the viewpoint
    to_vp = np.asarray(cfg.viewpoint, dtype=float) - pts
    flip = np.einsum("ni,ni->n", normals, to_vp) < 0.0
    normals[flip] = -normals[flip]
    normals[~ok] = 0.0

    return PointCloud(pts, normals=normals, labels=cloud.labels, normal_ok=ok)

"""Core 3D types and angle arithmetic shared by the whole pipeline.

Planes are stored as (unit normal, signed offset) with normal . p = offset
for points p on the plane.  Angles are always handled in degrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateInput(ValueError):
    """Input geometry cannot support the requested operation."""


def vec3(x: float, y: float, z: float) -> np.ndarray:
    """Build a finite 3-vector; NaN/Inf components are rejected."""
    v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise DegenerateInput(f"non-finite vector components: {v}")
    return v


def as_unit(v) -> np.ndarray:
    """Return v scaled to unit length; near-zero vectors are rejected."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or n < 1e-12:
        raise DegenerateInput("cannot normalize a near-zero vector")
    return v / n


def angle_between(a, b) -> float:
    """Angle between two unit vectors, in degrees, in [0, 180]."""
    d = float(np.clip(np.dot(a, b), -1.0, 1.0))
    return float(np.degrees(np.arccos(d)))


def angle_deviation(measured_deg: float, model_deg: float) -> float:
    """Absolute deviation of a measured plane angle from a model entry.

    Model entries <= 90 are compared orientation-free: both angles are
    folded onto [0, 90] so the sign of either normal cannot matter.
    Obtuse model entries are compared raw; they only make sense when the
    measured angle comes from consistently oriented (outward) normals.
    """
    if model_deg <= 90.0:
        return abs(min(measured_deg, 180.0 - measured_deg) - model_deg)
    return abs(measured_deg - model_deg)


def canonical_normal(n) -> np.ndarray:
    """Flip a unit normal so its largest-magnitude component is >= 0.

    Ties between components resolve to the first of x, y, z.  Gives every
    plane a unique, orientation-free representative.
    """
    n = np.asarray(n, dtype=float)
    idx = int(np.argmax(np.abs(n)))  # argmax returns the first of ties
    return -n if n[idx] < 0 else n


def oriented_normals(normals, reference_directions=None) -> np.ndarray:
    """Flip each normal, where a reference is given, to within 90 deg of it.

    Angle measurements against obtuse model entries need orientation-
    consistent normals; references (e.g. per-group mean estimated normals
    or known outward directions) pin the sign of each fitted normal.
    """
    normals = np.asarray(normals, dtype=float)
    if reference_directions is None:
        return normals
    refs = np.asarray(reference_directions, dtype=float)
    if refs.shape != normals.shape:
        raise DegenerateInput("need one reference direction per normal")
    sign = np.where(np.einsum("ij,ij->i", normals, refs) < 0.0, -1.0, 1.0)
    return normals * sign[:, None]


@dataclass(frozen=True, eq=False)
class PlaneModel:
    """An infinite plane with fit bookkeeping.

    normal . p = offset for points p on the plane.  ``inliers`` indexes
    whatever cloud the plane was fitted against; ``residual_bound`` is the
    largest orthogonal distance seen among the fitted points.
    """

    normal: np.ndarray
    offset: float
    centroid: np.ndarray
    inliers: np.ndarray
    residual_bound: float = 0.0

    def __post_init__(self):
        if abs(float(np.linalg.norm(self.normal)) - 1.0) > 1e-9:
            raise DegenerateInput("plane normal must be unit length")

    def distances(self, points) -> np.ndarray:
        """Orthogonal distances from points (N, 3) to the plane."""
        return np.abs(np.asarray(points, dtype=float) @ self.normal - self.offset)


def plane_angle(p: PlaneModel, q: PlaneModel) -> float:
    """Angle between two plane normals in degrees, in [0, 180]."""
    return angle_between(p.normal, q.normal)


def fit_plane_lsq(points, indices=None) -> PlaneModel:
    """Total-least-squares plane through >= 3 points.

    Minimizes the sum of squared orthogonal distances: the plane passes
    through the centroid with normal along the smallest principal axis of
    the centered covariance.  The normal is canonicalized so results do
    not depend on point order or eigensolver sign conventions.

    Raises DegenerateInput for < 3 points or (near-)collinear input.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateInput(f"expected (N, 3) points, got {pts.shape}")
    if pts.shape[0] < 3:
        raise DegenerateInput(f"need at least 3 points, got {pts.shape[0]}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    # rank < 2 over the in-plane directions means collinear or coincident
    if evals[2] <= 0.0 or evals[1] <= 1e-12 * evals[2]:
        raise DegenerateInput("points are collinear or coincident")
    normal = canonical_normal(as_unit(evecs[:, 0]))
    offset = float(normal @ centroid)
    residuals = np.abs(centered @ normal)
    if indices is None:
        inliers = np.arange(pts.shape[0])
    else:
        inliers = np.asarray(indices, dtype=int)
    return PlaneModel(normal, offset, centroid, inliers, float(residuals.max()))


@dataclass(eq=False)
class PointCloud:
    """Points with optional per-point normals and integer face labels.

    ``normal_ok`` flags points whose normal estimate is usable; points with
    degenerate neighborhoods are carried along rather than dropped.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    labels: np.ndarray | None = None
    normal_ok: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise DegenerateInput(f"expected (N, 3) points, got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise DegenerateInput("point coordinates must be finite")
        n = self.points.shape[0]
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float)
            if self.normals.shape != (n, 3):
                raise DegenerateInput("normals must match points in shape")
            if self.normal_ok is None:
                self.normal_ok = np.ones(n, dtype=bool)
        if self.normal_ok is not None:
            self.normal_ok = np.asarray(self.normal_ok, dtype=bool)
            if self.normal_ok.shape != (n,):
                raise DegenerateInput("normal_ok must be one flag per point")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (n,):
                raise DegenerateInput("labels must be one integer per point")

    def __len__(self) -> int:
        return self.points.shape[0]

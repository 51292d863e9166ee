"""Point-cloud clustering against a known inter-plane angle model.

The pipeline: joint position+normal k-means over-segments the cloud, near-
parallel clusters are merged, the cluster-vs-cluster angle matrix is
compared row-wise with the model matrix to prune candidate assignments,
and a backtracking search maps clusters onto model planes (possibly
leaving model planes empty) maximizing the number of points explained.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import DegenerateInput, PointCloud, angle_between, as_unit
from .normals import NormalEstimationConfig, estimate_normals

logger = logging.getLogger(__name__)

#: a model plane left without a cluster in a PccSolution mapping
EMPTY = None


class NoSolution(RuntimeError):
    """No cluster-to-model-plane assignment satisfies the constraints."""


@dataclass(eq=False)
class ConstraintMatrix:
    """Symmetric matrix of pairwise plane angles in degrees.

    Entry (i, j) is the angle between plane i and plane j; the diagonal is
    zero.  Entries <= 90 are compared orientation-free by consumers;
    obtuse entries assume consistently oriented (outward) normals.
    """

    entries: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        m = self.entries
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValueError(f"constraint matrix must be square, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("constraint matrix entries must be finite")
        if np.any(m < 0.0) or np.any(m > 180.0):
            raise ValueError("constraint angles must lie in [0, 180] degrees")
        if np.max(np.abs(m - m.T)) > 1e-6:
            raise ValueError("constraint matrix must be symmetric")
        if np.max(np.abs(np.diag(m))) > 1e-9:
            raise ValueError("constraint matrix diagonal must be zero")

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def read_constraint_matrix(path) -> ConstraintMatrix:
    """Read a plain-text constraint matrix.

    Format: optional ``#`` comment lines, then the plane count n on its own
    line, then n whitespace-separated rows of n angles in degrees.
    Errors carry the offending line number.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.readlines()
    rows: list[tuple[int, list[float]]] = []
    n = None
    for lineno, line in enumerate(raw, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        fields = text.split()
        if n is None:
            if len(fields) != 1:
                raise ValueError(f"{path}: line {lineno}: expected the plane count alone")
            try:
                n = int(fields[0])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: plane count must be an integer") from None
            if n < 1:
                raise ValueError(f"{path}: line {lineno}: plane count must be >= 1")
            continue
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: malformed angle value") from None
        if len(values) != n:
            raise ValueError(f"{path}: line {lineno}: expected {n} angles, got {len(values)}")
        rows.append((lineno, values))
        if len(rows) == n:
            break
    if n is None:
        raise ValueError(f"{path}: line 1: empty constraint file")
    if len(rows) != n:
        raise ValueError(f"{path}: line {len(raw)}: expected {n} rows, got {len(rows)}")
    entries = np.array([r for _, r in rows], dtype=float)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(entries[i, j] - entries[j, i]) > 1e-6:
                raise ValueError(
                    f"{path}: line {rows[j][0]}: entry ({j + 1},{i + 1})={entries[j, i]:g} "
                    f"does not mirror ({i + 1},{j + 1})={entries[i, j]:g}"
                )
    try:
        return ConstraintMatrix(entries)
    except ValueError as err:
        raise ValueError(f"{path}: line {rows[0][0]}: {err}") from None


def write_constraint_matrix(path, matrix: ConstraintMatrix, comments=()) -> None:
    """Write a constraint matrix in the plain-text format of read_constraint_matrix."""
    lines = [
        "# inter-plane angle constraints, degrees",
        "# entries <= 90 are compared orientation-free;",
        "# obtuse entries assume consistently oriented (outward) normals",
    ]
    lines += [f"# {c}" for c in comments]
    lines.append(str(matrix.size))
    for row in matrix.entries:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class PccConfig:
    cluster_surplus_fraction: float = 0.4
    merge_angle_deg: float = 10.0
    similarity_threshold_deg: float = 20.0
    constraint_tolerance_deg: float = 20.0
    kmeans_max_iter: int = 100
    kmeans_restarts: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.cluster_surplus_fraction < 0:
            raise ValueError("cluster_surplus_fraction must be >= 0")
        if self.merge_angle_deg < 0 or self.similarity_threshold_deg <= 0:
            raise ValueError("angle thresholds must be positive")
        if self.kmeans_max_iter < 1:
            raise ValueError("kmeans_max_iter must be >= 1")
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be >= 1")


@dataclass(eq=False)
class Cluster:
    point_indices: np.ndarray
    centroid: np.ndarray
    mean_normal: np.ndarray

    @property
    def size(self) -> int:
        return self.point_indices.shape[0]


@dataclass(eq=False)
class Clustering:
    """Disjoint clusters over a cloud; assignment[i] == -1 means unclustered."""

    assignment: np.ndarray
    clusters: list[Cluster]


@dataclass(frozen=True)
class PccSolution:
    """mapping[i] is the cluster id assigned to model plane i, or EMPTY."""

    mapping: tuple
    total_points: int


def normalize_features(cloud: PointCloud) -> np.ndarray:
    """Joint position+normal feature rows, one per point.

    Positions are min-max scaled per axis onto [-1, 1] so they weigh
    comparably with the unit normals; an axis with zero extent maps to 0.
    """
    if cloud.normals is None:
        raise DegenerateInput("cloud has no normals; estimate them first")
    pts = cloud.points
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        scaled = np.where(span > 0.0, 2.0 * (pts - lo) / np.where(span > 0, span, 1.0) - 1.0, 0.0)
    return np.hstack([scaled, cloud.normals])


def choose_k(max_visible_planes: int, cfg: PccConfig) -> int:
    """Cluster count: the model size plus a surplus fraction, rounded up."""
    n = int(max_visible_planes)
    if n < 1:
        raise ValueError("model must have at least one plane")
    # tiny epsilon so e.g. 5 * 0.4 -> 2 despite float representation
    surplus = math.ceil(n * cfg.cluster_surplus_fraction - 1e-9)
    return n + max(surplus, 0)


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp_init(feats: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, feats.shape[1]))
    first = int(rng.integers(feats.shape[0]))
    centers[0] = feats[first]
    d2 = ((feats - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a center; reuse any point
            centers[j] = feats[int(rng.integers(feats.shape[0]))]
            continue
        pick = int(rng.choice(feats.shape[0], p=d2 / total))
        centers[j] = feats[pick]
        d2 = np.minimum(d2, ((feats - centers[j]) ** 2).sum(axis=1))
    return centers


def _build_clustering(cloud: PointCloud, full_assignment: np.ndarray) -> Clustering:
    ids = sorted(int(v) for v in np.unique(full_assignment) if v >= 0)
    remap = {old: new for new, old in enumerate(ids)}
    assignment = np.array([remap.get(int(v), -1) for v in full_assignment], dtype=int)
    clusters = []
    for new_id in range(len(ids)):
        idx = np.flatnonzero(assignment == new_id)
        centroid = cloud.points[idx].mean(axis=0)
        mean_normal = as_unit(cloud.normals[idx].mean(axis=0))
        clusters.append(Cluster(idx, centroid, mean_normal))
    return Clustering(assignment, clusters)


def _kmeans_once(feats: np.ndarray, k: int, rng: np.random.Generator, cfg: PccConfig):
    """One k-means++ / Lloyd run; returns (assignment, within-cluster SSE)."""
    centers = _kmeans_pp_init(feats, k, rng)
    prev = None
    assign = np.zeros(feats.shape[0], dtype=int)
    for _ in range(cfg.kmeans_max_iter):
        d2 = _sqdist(feats, centers)
        assign = np.argmin(d2, axis=1)
        own = d2[np.arange(feats.shape[0]), assign]
        empty = [j for j in range(k) if not np.any(assign == j)]
        if empty:
            donors_used: set[int] = set()
            order = np.argsort(-own)
            for j in empty:
                donor = next(int(i) for i in order if int(i) not in donors_used)
                donors_used.add(donor)
                centers[j] = feats[donor]
                assign[donor] = j
        elif prev is not None and np.array_equal(assign, prev):
            break
        prev = assign.copy()
        for j in range(k):
            centers[j] = feats[assign == j].mean(axis=0)
    sse = float(_sqdist(feats, centers)[np.arange(feats.shape[0]), assign].sum())
    return assign, sse


def kmeans_cluster(features: np.ndarray, k: int, cfg: PccConfig, cloud: PointCloud) -> Clustering:
    """Seeded k-means (k-means++ init) over the valid-normal points.

    Runs Lloyd iterations to an assignment fixpoint (or kmeans_max_iter).
    A cluster that empties is re-seeded from the point currently farthest
    from its own center.  Points flagged with invalid normals stay
    unassigned (-1).  With kmeans_restarts > 1 the run with the smallest
    within-cluster squared error wins (ties keep the earliest run).
    """
    valid = cloud.normal_ok if cloud.normal_ok is not None else np.ones(len(cloud), bool)
    vidx = np.flatnonzero(valid)
    feats = features[vidx]
    if k < 1 or k > feats.shape[0]:
        raise ValueError(f"k={k} out of range for {feats.shape[0]} usable points")
    best_assign = None
    best_sse = math.inf
    for seed in np.random.SeedSequence(cfg.rng_seed).spawn(cfg.kmeans_restarts):
        assign, sse = _kmeans_once(feats, k, np.random.default_rng(seed), cfg)
        if sse < best_sse:
            best_assign, best_sse = assign, sse
    full = np.full(len(cloud), -1, dtype=int)
    full[vidx] = best_assign
    return _build_clustering(cloud, full)


def merge_similar_clusters(clustering: Clustering, cfg: PccConfig, cloud: PointCloud) -> Clustering:
    """Merge clusters whose mean normals are closer than merge_angle_deg.

    Repeats until no pair is below the threshold; mean normals and
    centroids are recomputed from the union after each merge, so the
    result is a fixpoint (idempotent under re-application).
    """
    groups = [c.point_indices.copy() for c in clustering.clusters]
    means = [c.mean_normal.copy() for c in clustering.clusters]
    changed = True
    while changed:
        changed = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if angle_between(means[i], means[j]) < cfg.merge_angle_deg:
                    groups[i] = np.sort(np.concatenate([groups[i], groups[j]]))
                    means[i] = as_unit(cloud.normals[groups[i]].mean(axis=0))
                    del groups[j], means[j]
                    changed = True
                    break
            if changed:
                break
    full = np.full(len(cloud), -1, dtype=int)
    for new_id, idx in enumerate(groups):
        full[idx] = new_id
    return _build_clustering(cloud, full)


def object_matrix(clustering: Clustering) -> ConstraintMatrix:
    """Pairwise angles between cluster mean normals."""
    m = len(clustering.clusters)
    entries = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            a = angle_between(clustering.clusters[i].mean_normal, clustering.clusters[j].mean_normal)
            entries[i, j] = a
            entries[j, i] = a
    return ConstraintMatrix(entries, label="clusters")


def _row_without_diag(matrix: ConstraintMatrix, i: int) -> list[float]:
    row = matrix.entries[i]
    return [float(v) for j, v in enumerate(row) if j != i]


def _match_count(model_row: list[float], cluster_row: list[float], threshold: float) -> int:
    """One-to-one greedy pairing: how many model-row angles find a cluster-row
    angle within the threshold, each cluster angle consumed at most once."""
    used = [False] * len(cluster_row)
    count = 0
    for a in sorted(model_row):
        best = -1
        best_d = None
        for idx, b in enumerate(cluster_row):
            if used[idx]:
                continue
            d = abs(a - b)
            if best_d is None or d < best_d:
                best, best_d = idx, d
        if best >= 0 and best_d < threshold:
            used[best] = True
            count += 1
    return count


def similarity_reduction(model: ConstraintMatrix, observed: ConstraintMatrix, cfg: PccConfig) -> list[list[int]]:
    """Per cluster, the model planes whose angle rows match it best.

    A cluster's row similarity to model plane y counts the values of model
    row y that pair, one-to-one, with a value of the cluster's row at
    distance below similarity_threshold_deg.  All maximizers are kept; if
    a cluster matches nothing, every model plane stays a candidate.
    """
    candidates: list[list[int]] = []
    for x in range(observed.size):
        crow = _row_without_diag(observed, x)
        counts = [
            _match_count(_row_without_diag(model, y), crow, cfg.similarity_threshold_deg)
            for y in range(model.size)
        ]
        best = max(counts)
        if best == 0:
            logger.info("cluster %d matches no model plane; keeping all candidates", x)
        candidates.append([y for y, c in enumerate(counts) if c == best])
    return candidates


def tree_search(
    model: ConstraintMatrix,
    observed: ConstraintMatrix,
    candidates: list[list[int]],
    cluster_sizes,
    cfg: PccConfig,
) -> PccSolution:
    """Depth-first assignment of clusters to model planes.

    Level i decides model plane i: any unused cluster that lists plane i
    among its candidates and whose angles to all previously assigned
    clusters stay within constraint_tolerance_deg of the model entries —
    or EMPTY.  Among complete assignments the one explaining the most
    points wins; ties resolve to the lexicographically smallest mapping
    (EMPTY ordering after every cluster id).  All-EMPTY is no solution.
    """
    n = model.size
    m = observed.size
    sizes = [int(s) for s in cluster_sizes]
    if len(sizes) != m or len(candidates) != m:
        raise ValueError("candidates and cluster_sizes must have one entry per cluster")
    allowed = [[j for j in range(m) if i in candidates[j]] for i in range(n)]
    a = model.entries
    b = observed.entries
    tol = cfg.constraint_tolerance_deg

    best_total = 0
    best_mapping = None
    mapping: list[int | None] = [EMPTY] * n
    used = [False] * m

    def admissible(i: int, j: int) -> bool:
        for k in range(i):
            l = mapping[k]
            if l is not None and abs(b[j, l] - a[i, k]) > tol:
                return False
        return True

    def dfs(level: int, total: int) -> None:
        nonlocal best_total, best_mapping
        if level == n:
            if total > best_total:
                best_total = total
                best_mapping = tuple(mapping)
            return
        for j in allowed[level]:
            if not used[j] and admissible(level, j):
                mapping[level] = j
                used[j] = True
                dfs(level + 1, total + sizes[j])
                used[j] = False
        mapping[level] = EMPTY
        dfs(level + 1, total)

    dfs(0, 0)
    if best_mapping is None:
        raise NoSolution("no admissible cluster-to-model assignment")
    return PccSolution(best_mapping, best_total)


def run_pcc(
    cloud: PointCloud,
    model: ConstraintMatrix,
    cfg: PccConfig | None = None,
    normal_cfg: NormalEstimationConfig | None = None,
) -> tuple[PccSolution, Clustering]:
    """Full clustering pipeline: features, k-means, merge, reduce, search.

    Estimates normals first when the cloud has none.  Returns the winning
    assignment together with the merged clustering it refers to.
    """
    if cfg is None:
        cfg = PccConfig()
    if cloud.normals is None:
        cloud = estimate_normals(cloud, normal_cfg)
    features = normalize_features(cloud)
    k = choose_k(model.size, cfg)
    usable = int(np.count_nonzero(cloud.normal_ok)) if cloud.normal_ok is not None else len(cloud)
    if usable < 1:
        raise DegenerateInput("no points with usable normals")
    if k > usable:
        logger.warning("reducing k from %d to %d usable points", k, usable)
        k = usable
    clustering = kmeans_cluster(features, k, cfg, cloud)
    merged = merge_similar_clusters(clustering, cfg, cloud)
    observed = object_matrix(merged)
    candidates = similarity_reduction(model, observed, cfg)
    sizes = [c.size for c in merged.clusters]
    solution = tree_search(model, observed, candidates, sizes, cfg)
    return solution, merged


def solution_groups(solution: PccSolution, clustering: Clustering) -> list[np.ndarray]:
    """Point-index groups for the mapped model planes, in model-plane order."""
    return [
        clustering.clusters[c].point_indices
        for c in solution.mapping
        if c is not None
    ]

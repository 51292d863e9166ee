"""Clustering pipeline: features, k-means, merging, reduction, tree search."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import planar_cloud
from mme.geometry import DegenerateInput, PointCloud, as_unit
from mme.normals import NormalEstimationConfig
from mme.pcc import (
    EMPTY,
    Cluster,
    Clustering,
    ConstraintMatrix,
    NoSolution,
    PccConfig,
    choose_k,
    kmeans_cluster,
    merge_similar_clusters,
    normalize_features,
    object_matrix,
    read_constraint_matrix,
    run_pcc,
    similarity_reduction,
    solution_groups,
    tree_search,
    write_constraint_matrix,
)
from mme.synth import NoiseSpec, generate_view, get_object, turntable_view
from oracle import enumerate_assignments, random_search_instance

# Reference example: a 3-plane model observed as 4 clusters.  The measured
# cluster matrix is symmetrized (44.5 averages its two off-diagonal
# readings); threshold 5 on the row similarity and on the pairwise search.
MODEL_3 = np.array([
    [0.0, 45.0, 90.0],
    [45.0, 0.0, 45.0],
    [90.0, 45.0, 0.0],
])
OBSERVED_4 = np.array([
    [0.0, 44.0, 70.0, 91.0],
    [44.0, 0.0, 44.5, 73.0],
    [70.0, 44.5, 0.0, 80.0],
    [91.0, 73.0, 80.0, 0.0],
])


class TestConstraintMatrix:
    def test_validation(self):
        with pytest.raises(ValueError):
            ConstraintMatrix(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            ConstraintMatrix(np.array([[0.0, 10.0], [20.0, 0.0]]))
        with pytest.raises(ValueError):
            ConstraintMatrix(np.array([[0.0, -5.0], [-5.0, 0.0]]))
        with pytest.raises(ValueError):
            ConstraintMatrix(np.array([[0.0, 200.0], [200.0, 0.0]]))
        with pytest.raises(ValueError):
            ConstraintMatrix(np.array([[1.0, 45.0], [45.0, 0.0]]))
        with pytest.raises(ValueError):
            ConstraintMatrix(np.array([[0.0, np.nan], [np.nan, 0.0]]))
        m = ConstraintMatrix(MODEL_3)
        assert m.size == 3

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "model.constraints"
        write_constraint_matrix(path, ConstraintMatrix(OBSERVED_4, label="obs"))
        back = read_constraint_matrix(path)
        assert np.array_equal(back.entries, OBSERVED_4)

    def test_read_errors_carry_line_numbers(self, tmp_path):
        path = tmp_path / "bad.constraints"
        path.write_text("# comment\n2\n0 80\n80 oops\n")
        with pytest.raises(ValueError, match="line 4"):
            read_constraint_matrix(path)
        path.write_text("2\n0 80 99\n80 0\n")
        with pytest.raises(ValueError, match="line 2"):
            read_constraint_matrix(path)
        path.write_text("2\n0 80\n81 0\n")
        with pytest.raises(ValueError, match="line 3"):
            read_constraint_matrix(path)
        path.write_text("# only comments\n")
        with pytest.raises(ValueError, match="line 1"):
            read_constraint_matrix(path)
        path.write_text("2\n0 80\n")
        with pytest.raises(ValueError):
            read_constraint_matrix(path)


class TestFeaturesAndK:
    def test_normalize_features_scales_positions(self, rng):
        pts = np.array([[0.0, 0.0, 5.0], [2.0, 0.0, 5.0], [1.0, 10.0, 5.0]])
        normals = np.tile([0.0, 0.0, 1.0], (3, 1))
        feats = normalize_features(PointCloud(pts, normals=normals))
        assert feats.shape == (3, 6)
        assert feats[:, 0].min() == pytest.approx(-1.0)
        assert feats[:, 0].max() == pytest.approx(1.0)
        # zero-extent axis maps to 0 rather than dividing by zero
        assert np.allclose(feats[:, 2], 0.0)
        assert np.allclose(feats[:, 3:], normals)

    def test_normalize_features_needs_normals(self):
        with pytest.raises(DegenerateInput):
            normalize_features(PointCloud(np.zeros((3, 3))))

    def test_choose_k(self):
        cfg = PccConfig()  # surplus fraction 0.4
        assert choose_k(3, cfg) == 5
        assert choose_k(5, cfg) == 7
        assert choose_k(2, cfg) == 3
        assert choose_k(1, cfg) == 2
        assert choose_k(4, PccConfig(cluster_surplus_fraction=0.0)) == 4
        with pytest.raises(ValueError):
            choose_k(0, cfg)


def blob_cloud(rng):
    """Three well-separated planar patches with distinct normals."""
    normals = [as_unit(v) for v in ([0, 0, 1.0], [1.0, 0, 0], [0, 1.0, 0])]
    patches = [
        planar_cloud(rng, 60, normals[i], offset=4.0 * i, extent=0.5)
        for i in range(3)
    ]
    pts = np.vstack(patches)
    nrm = np.vstack([np.tile(n, (60, 1)) for n in normals])
    return PointCloud(pts, normals=nrm, labels=np.repeat([0, 1, 2], 60))


class TestKmeans:
    def test_recovers_separated_blobs(self, rng):
        cloud = blob_cloud(rng)
        feats = normalize_features(cloud)
        clustering = kmeans_cluster(feats, 3, PccConfig(rng_seed=3), cloud)
        assert len(clustering.clusters) == 3
        for c in clustering.clusters:
            labs = cloud.labels[c.point_indices]
            assert (labs == labs[0]).all()

    def test_deterministic_and_restart_quality(self, rng):
        cloud = blob_cloud(rng)
        feats = normalize_features(cloud)

        def sse_of(clustering):
            total = 0.0
            for c in clustering.clusters:
                f = feats[c.point_indices]
                total += float(((f - f.mean(axis=0)) ** 2).sum())
            return total

        one = kmeans_cluster(feats, 4, PccConfig(rng_seed=9), cloud)
        two = kmeans_cluster(feats, 4, PccConfig(rng_seed=9), cloud)
        assert np.array_equal(one.assignment, two.assignment)
        multi = kmeans_cluster(feats, 4, PccConfig(rng_seed=9, kmeans_restarts=6), cloud)
        assert sse_of(multi) <= sse_of(one) + 1e-9

    def test_skips_invalid_normals(self, rng):
        cloud = blob_cloud(rng)
        cloud.normal_ok[:10] = False
        feats = normalize_features(cloud)
        clustering = kmeans_cluster(feats, 3, PccConfig(rng_seed=0), cloud)
        assert (clustering.assignment[:10] == -1).all()
        assert (clustering.assignment[10:] >= 0).all()

    def test_k_out_of_range(self, rng):
        cloud = blob_cloud(rng)
        feats = normalize_features(cloud)
        with pytest.raises(ValueError):
            kmeans_cluster(feats, 0, PccConfig(), cloud)
        with pytest.raises(ValueError):
            kmeans_cluster(feats, len(cloud) + 1, PccConfig(), cloud)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PccConfig(kmeans_restarts=0)
        with pytest.raises(ValueError):
            PccConfig(kmeans_max_iter=0)
        with pytest.raises(ValueError):
            PccConfig(cluster_surplus_fraction=-0.1)
        with pytest.raises(ValueError):
            PccConfig(similarity_threshold_deg=0.0)


def tiny_clustering(cloud, groups):
    assignment = np.full(len(cloud), -1, dtype=int)
    clusters = []
    for ci, idx in enumerate(groups):
        idx = np.asarray(idx, dtype=int)
        assignment[idx] = ci
        clusters.append(Cluster(idx, cloud.points[idx].mean(axis=0),
                                as_unit(cloud.normals[idx].mean(axis=0))))
    return Clustering(assignment, clusters)


class TestMerge:
    def make(self, rng, angle_deg):
        n0 = np.array([0.0, 0.0, 1.0])
        rad = np.radians(angle_deg)
        n1 = np.array([np.sin(rad), 0.0, np.cos(rad)])
        pts = np.vstack([
            planar_cloud(rng, 40, n0, offset=0.0),
            planar_cloud(rng, 40, n1, offset=2.0),
        ])
        nrm = np.vstack([np.tile(n0, (40, 1)), np.tile(n1, (40, 1))])
        cloud = PointCloud(pts, normals=nrm)
        return cloud, tiny_clustering(cloud, [np.arange(40), np.arange(40, 80)])

    def test_merges_near_parallel(self, rng):
        cloud, clustering = self.make(rng, 5.0)
        merged = merge_similar_clusters(clustering, PccConfig(), cloud)
        assert len(merged.clusters) == 1
        assert merged.clusters[0].size == 80
        assert (merged.assignment == 0).all()

    def test_keeps_distinct(self, rng):
        cloud, clustering = self.make(rng, 15.0)
        merged = merge_similar_clusters(clustering, PccConfig(), cloud)
        assert len(merged.clusters) == 2

    def test_idempotent(self, rng):
        cloud, clustering = self.make(rng, 5.0)
        once = merge_similar_clusters(clustering, PccConfig(), cloud)
        twice = merge_similar_clusters(once, PccConfig(), cloud)
        assert len(once.clusters) == len(twice.clusters)
        assert np.array_equal(once.assignment, twice.assignment)


class TestSimilarityReduction:
    def test_reference_example(self):
        cfg = PccConfig(similarity_threshold_deg=5.0)
        cands = similarity_reduction(ConstraintMatrix(MODEL_3),
                                     ConstraintMatrix(OBSERVED_4), cfg)
        assert cands == [[0, 2], [1], [0, 1, 2], [0, 2]]

    def test_no_match_keeps_all_candidates(self):
        model = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        observed = ConstraintMatrix(np.array([[0.0, 20.0], [20.0, 0.0]]))
        cands = similarity_reduction(model, observed, PccConfig(similarity_threshold_deg=5.0))
        assert cands == [[0, 1], [0, 1]]

    def test_object_matrix(self, rng):
        cloud, clustering = TestMerge().make(rng, 30.0)
        mat = object_matrix(clustering)
        assert mat.size == 2
        assert mat.entries[0, 1] == pytest.approx(30.0, abs=1e-9)
        assert mat.entries[1, 0] == mat.entries[0, 1]
        assert mat.entries[0, 0] == 0.0


class TestTreeSearch:
    CFG = PccConfig(similarity_threshold_deg=5.0, constraint_tolerance_deg=5.0)

    def test_reference_example_selects_largest_total(self):
        model = ConstraintMatrix(MODEL_3)
        observed = ConstraintMatrix(OBSERVED_4)
        cands = similarity_reduction(model, observed, self.CFG)
        sol = tree_search(model, observed, cands, [100, 200, 100, 100], self.CFG)
        assert sol.mapping == (0, 1, EMPTY)
        assert sol.total_points == 300

    def test_equal_total_breaks_ties_lexicographically(self):
        model = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        observed = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        cands = [[0, 1], [0, 1]]
        sol = tree_search(model, observed, cands, [50, 50], self.CFG)
        # (0, 1) and (1, 0) both explain 100 points; the smaller mapping wins
        assert sol.mapping == (0, 1)

    def test_empty_sorts_after_any_cluster(self):
        model = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        observed = ConstraintMatrix(np.array([[0.0, 30.0], [30.0, 0.0]]))
        # pairing both clusters violates the 90-degree entry, so the best
        # mappings assign exactly one cluster; (0, EMPTY) must beat
        # (EMPTY, 0) and cluster 0 must beat cluster 1 at equal size
        sol = tree_search(model, observed, [[0, 1], [0, 1]], [70, 70], self.CFG)
        assert sol.mapping == (0, EMPTY)
        assert sol.total_points == 70

    def test_prefers_more_points_over_more_planes(self):
        model = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        observed = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        # mapping the big cluster alone beats mapping both small ones
        big = tree_search(model, observed, [[0, 1], [0, 1]], [500, 10], self.CFG)
        assert big.total_points == 510  # both admissible, takes everything
        observed_bad = ConstraintMatrix(np.array([[0.0, 40.0], [40.0, 0.0]]))
        only_big = tree_search(model, observed_bad, [[0, 1], [0, 1]], [500, 10], self.CFG)
        assert only_big.mapping == (0, EMPTY)
        assert only_big.total_points == 500

    def test_respects_candidates(self):
        model = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        observed = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        sol = tree_search(model, observed, [[1], [0]], [100, 200], self.CFG)
        assert sol.mapping == (1, 0)

    def test_no_solution_raises(self):
        model = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        observed = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        with pytest.raises(NoSolution):
            tree_search(model, observed, [[], []], [100, 100], self.CFG)

    def test_input_length_mismatch(self):
        model = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        observed = ConstraintMatrix(np.array([[0.0, 90.0], [90.0, 0.0]]))
        with pytest.raises(ValueError):
            tree_search(model, observed, [[0]], [100, 100], self.CFG)
        with pytest.raises(ValueError):
            tree_search(model, observed, [[0], [1]], [100], self.CFG)

    def test_matches_bruteforce_enumeration(self):
        rng = np.random.default_rng(42)
        checked = 0
        for _ in range(100):
            model, observed, cands, sizes, tol = random_search_instance(rng)
            cfg = PccConfig(constraint_tolerance_deg=tol)
            expected = enumerate_assignments(model, observed, cands, sizes, tol)
            try:
                sol = tree_search(ConstraintMatrix(model), ConstraintMatrix(observed),
                                  cands, sizes, cfg)
                got = (sol.mapping, sol.total_points)
            except NoSolution:
                got = None
            assert got == expected
            checked += 1
        assert checked == 100


class TestRunPcc:
    def test_end_to_end_on_clean_view(self):
        obj = get_object("cube")
        view = turntable_view(obj, 3)
        cloud = generate_view(obj, view, noise=NoiseSpec(0.0, 0.0), rng_seed=5)
        solution, clustering = run_pcc(cloud, obj.model_matrix,
                                       PccConfig(rng_seed=5),
                                       NormalEstimationConfig(k_neighbors=7))
        groups = solution_groups(solution, clustering)
        assert 1 <= len(groups) <= obj.model_matrix.size
        majors = []
        for g in groups:
            labs = cloud.labels[g]
            counts = np.bincount(labs)
            majors.append(int(counts.argmax()))
            assert counts.max() / labs.shape[0] > 0.9
        assert len(set(majors)) == len(majors)

    def test_solution_groups_skip_empty(self):
        cloud = PointCloud(np.zeros((6, 3)),
                           normals=np.tile([0.0, 0.0, 1.0], (6, 1)))
        clustering = tiny_clustering(cloud, [np.arange(3), np.arange(3, 6)])
        from mme.pcc import PccSolution
        sol = PccSolution((1, EMPTY), 3)
        groups = solution_groups(sol, clustering)
        assert len(groups) == 1
        assert np.array_equal(groups[0], np.arange(3, 6))

    def test_degenerate_cloud_raises(self):
        pts = np.outer(np.linspace(0, 1, 30), [1.0, 0.0, 0.0])
        with pytest.raises(DegenerateInput):
            run_pcc(PointCloud(pts), ConstraintMatrix(np.array([[0.0]])),
                    PccConfig(), NormalEstimationConfig(k_neighbors=5))

import numpy as np
import pytest

from fewgauge.gauges import (
    GaugeReport,
    db_score,
    lr_confidence,
    lr_training_loss,
    nth_eigenvalue_gauge,
    reports_to_csv,
    similarity_metric,
)
from oracles import db_score_loops


class TestLrTrainingLoss:
    def test_confident_correct_is_zero(self):
        probs = np.eye(3)
        assert lr_training_loss(probs, [0, 1, 2]) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_five_way(self):
        probs = np.full((10, 5), 0.2)
        labels = np.zeros(10, dtype=int)
        assert lr_training_loss(probs, labels) == pytest.approx(np.log(5), abs=1e-12)

    def test_half_quarter_case(self):
        probs = np.array([[0.5, 0.5], [0.25, 0.75]])
        labels = [0, 0]
        expected = -(np.log(0.5) + np.log(0.25)) / 2.0
        assert lr_training_loss(probs, labels) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(1.03972, abs=1e-5)

    def test_zero_probability_errors(self):
        probs = np.array([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="clamp"):
            lr_training_loss(probs, [1, 1])

    def test_zero_iff_all_true_probs_one(self):
        rng = np.random.default_rng(0)
        raw = rng.random((6, 4)) + 1e-3
        probs = raw / raw.sum(axis=1, keepdims=True)
        labels = rng.integers(0, 4, size=6)
        assert lr_training_loss(probs, labels) > 0.0


class TestSimilarity:
    def test_all_identical_support_is_zero(self):
        features = np.tile([1.0, 1.0], (6, 1))
        labels = [0, 0, 0, 1, 1, 1]
        assert similarity_metric(features, labels) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_tight_classes_score_one(self):
        features = np.array(
            [[1.0, 0.0, 0.0]] * 3 + [[0.0, 1.0, 0.0]] * 3 + [[0.0, 0.0, 1.0]] * 3
        )
        labels = [0] * 3 + [1] * 3 + [2] * 3
        assert similarity_metric(features, labels) == pytest.approx(1.0, abs=1e-12)

    def test_one_shot_uses_unit_intra(self):
        features = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        labels = [0, 1, 2]
        sim01 = np.sqrt(0.5)
        expected = np.mean([1 - sim01, 1 - sim01, 1 - sim01])
        assert similarity_metric(features, labels) == pytest.approx(expected, abs=1e-9)

    def test_bounds_and_permutation_invariance(self):
        rng = np.random.default_rng(1)
        feats = np.abs(rng.standard_normal((20, 6)))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        labels = np.repeat(np.arange(4), 5)
        value = similarity_metric(feats, labels)
        assert -1.0 <= value <= 1.0
        perm = rng.permutation(20)
        assert similarity_metric(feats[perm], labels[perm]) == pytest.approx(
            value, abs=1e-12
        )
        assert similarity_metric(feats, 3 - labels) == pytest.approx(value, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="2 classes"):
            similarity_metric(np.ones((3, 2)), [0, 0, 0])


class TestDbScore:
    def test_singleton_clusters_score_zero(self):
        features = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert db_score(features, [0, 1, 2]) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_half(self):
        features = np.array([[0.0, 0.0], [0.0, 2.0], [4.0, 0.0], [4.0, 2.0]])
        assert db_score(features, [0, 0, 1, 1]) == pytest.approx(0.5, abs=1e-12)

    def test_three_copies_max_rule(self):
        base = np.array([[0.0, 0.0], [0.0, 2.0], [4.0, 0.0], [4.0, 2.0]])
        features = np.vstack([base, base + [0.0, 100.0], base + [100.0, 0.0]])
        labels = [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
        assert db_score(features, labels) == pytest.approx(
            db_score_loops(features, labels), abs=1e-12
        )

    def test_matches_loop_oracle_random(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(6, 20))
            k = int(rng.integers(2, 5))
            features = rng.standard_normal((n, 3))
            labels = rng.integers(0, k, size=n)
            while np.unique(labels).size < 2:
                labels = rng.integers(0, k, size=n)
            assert db_score(features, labels) == pytest.approx(
                db_score_loops(features, labels), abs=1e-9
            )

    def test_translation_rotation_scale_invariance(self):
        rng = np.random.default_rng(3)
        features = rng.standard_normal((12, 2))
        labels = rng.integers(0, 3, size=12)
        base = db_score(features, labels)
        shifted = db_score(features + [10.0, -4.0], labels)
        theta = 0.7
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        rotated = db_score(features @ rot, labels)
        scaled = db_score(3.5 * features, labels)
        assert shifted == pytest.approx(base, abs=1e-9)
        assert rotated == pytest.approx(base, abs=1e-9)
        assert scaled == pytest.approx(base, abs=1e-9)

    def test_coincident_centroids_error(self):
        features = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        with pytest.raises(ValueError, match="degenerate"):
            db_score(features, [0, 0, 1, 1])


class TestNthEigenvalue:
    def test_n_components_give_zero(self):
        # three tight orthogonal clumps -> 3 components in a 1-NN-ish graph
        features = np.array(
            [[1.0, 0.0, 0.0]] * 3 + [[0.0, 1.0, 0.0]] * 3 + [[0.0, 0.0, 1.0]] * 3
        )
        assert nth_eigenvalue_gauge(features, 3, k_neighbors=2) == pytest.approx(
            0.0, abs=1e-8
        )

    def test_connected_graph_positive_second(self):
        rng = np.random.default_rng(4)
        features = np.abs(rng.standard_normal((10, 3))) + 0.5
        assert nth_eigenvalue_gauge(features, 2, k_neighbors=9) > 0.0

    def test_complete_uniform_graph_last_eigenvalue(self):
        # identical rows: complete graph with unit weights; spectrum {0, n...n}
        n = 6
        features = np.tile([1.0, 2.0], (n, 1))
        assert nth_eigenvalue_gauge(features, n, k_neighbors=n - 1) == pytest.approx(
            float(n), abs=1e-9
        )

    def test_needs_enough_vertices(self):
        with pytest.raises(ValueError, match="vertices"):
            nth_eigenvalue_gauge(np.ones((2, 2)), 3)


class TestLrConfidence:
    def test_perfectly_confident(self):
        conf = lr_confidence(np.eye(4))
        assert conf.log_form == pytest.approx(0.0, abs=1e-12)
        assert conf.mean_max_prob == pytest.approx(1.0, abs=1e-12)

    def test_uniform_five_way(self):
        conf = lr_confidence(np.full((7, 5), 0.2))
        assert conf.log_form == pytest.approx(np.log(5), abs=1e-12)
        assert conf.mean_max_prob == pytest.approx(0.2, abs=1e-12)

    def test_half_and_one(self):
        conf = lr_confidence(np.array([[0.5, 0.5], [1.0, 0.0]]))
        assert conf.log_form == pytest.approx(0.34657, abs=1e-5)
        assert conf.mean_max_prob == pytest.approx(0.75, abs=1e-12)

    def test_jensen_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            raw = rng.random((9, 4)) + 1e-6
            probs = raw / raw.sum(axis=1, keepdims=True)
            conf = lr_confidence(probs)
            assert conf.log_form >= -np.log(conf.mean_max_prob) - 1e-12
            assert conf.log_form >= 0.0


class TestReportCsv:
    def test_fixed_column_order_and_blanks(self):
        report = GaugeReport(
            episode_id=3,
            setting="unsupervised",
            n_way=5,
            k_shot=0,
            q_query=35,
            lr_training_loss=None,
            similarity=None,
            db_score=0.5,
            nth_eigenvalue=1.25,
            lr_confidence_log=None,
            lr_confidence_mean_max_prob=None,
            performance=0.625,
        )
        text = reports_to_csv([report])
        lines = text.splitlines()
        assert lines[0] == (
            "episode_id,setting,N,K,Q,lr_loss,similarity,db_score,nth_egv,"
            "lr_conf_log,lr_conf_mmp,performance"
        )
        assert lines[1] == "3,unsupervised,5,0,35,,,0.5,1.25,,,0.625"

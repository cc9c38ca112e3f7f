import json
import math

import numpy as np
import pytest

from echokit import classifier as clf
from echokit.classifier import (
    EchoClass,
    LabeledSample,
    cross_validate,
    decision_value,
    evaluate,
    label_estimate,
    load_dataset,
    load_model,
    predict,
    save_dataset,
    save_model,
    split_dataset,
    train_svm,
)
from echokit.pipeline import EchoFeature


def _samples(points, labels):
    """Build samples from points living in the model's compressed feature
    space (delay, log10 power): the power coordinate is exponentiated so the
    raw features stay physically valid (positive power)."""
    return [
        LabeledSample(EchoFeature(float(p[0]), float(10.0 ** p[1])), lab, 0.0) for p, lab in zip(points, labels)
    ]


def _blobs(seed=0, n=120, sep=3.0, sigma=0.5):
    rng = np.random.default_rng(seed)
    a = rng.normal([-sep / 2, -sep / 2], sigma, (n, 2))
    b = rng.normal([sep / 2, sep / 2], sigma, (n, 2))
    points = np.concatenate([a, b])
    labels = [EchoClass.WALL] * n + [EchoClass.NO_WALL] * n
    return _samples(points, labels)


class TestLabeling:
    def test_nine_samples_is_wall(self):
        assert label_estimate(109.0, 100.0) == EchoClass.WALL

    def test_ten_samples_is_no_wall(self):
        # strict inequality at the boundary
        assert label_estimate(110.0, 100.0) == EchoClass.NO_WALL

    def test_symmetric(self):
        assert label_estimate(91.0, 100.0) == EchoClass.WALL
        assert label_estimate(90.0, 100.0) == EchoClass.NO_WALL


class TestSplit:
    def test_paper_sizes(self):
        samples = _samples(np.zeros((1989, 2)), [EchoClass.WALL] * 1989)
        train, test = split_dataset(samples, 0.8, seed=0)
        assert (len(train), len(test)) == (1591, 398)

    def test_even_split(self):
        samples = _samples(np.zeros((10, 2)), [EchoClass.WALL] * 10)
        train, test = split_dataset(samples, 0.5, seed=0)
        assert (len(train), len(test)) == (5, 5)

    def test_deterministic(self):
        samples = _blobs()
        a_train, _ = split_dataset(samples, 0.8, seed=3)
        b_train, _ = split_dataset(samples, 0.8, seed=3)
        assert [id(s) for s in a_train] == [id(s) for s in b_train]

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            split_dataset([], 0.8, seed=0)
        with pytest.raises(ValueError):
            split_dataset(_blobs(), 1.0, seed=0)


class TestTrainSvm:
    def test_separable_blobs_perfect(self):
        samples = _blobs()
        model = train_svm(samples, box_c=10.0, rbf_width=1.0)
        assert evaluate(model, samples) == 1.0

    def test_xor_beats_any_linear_separator(self):
        rng = np.random.default_rng(1)
        centers = [(-1, -1), (1, 1), (-1, 1), (1, -1)]
        points = np.concatenate([rng.normal(c, 0.3, (50, 2)) for c in centers])
        labels = [EchoClass.WALL] * 100 + [EchoClass.NO_WALL] * 100
        samples = _samples(points, labels)
        model = train_svm(samples, box_c=10.0, rbf_width=1.0)
        rbf_acc = evaluate(model, samples)

        # brute-force linear separator sweep (in the compressed feature
        # space, which is where a linear rule would operate) as the oracle
        y = np.array([1.0 if lab == EchoClass.WALL else -1.0 for lab in labels])
        best_linear = 0.0
        for angle in np.linspace(0, math.pi, 90, endpoint=False):
            w = np.array([math.cos(angle), math.sin(angle)])
            proj = points @ w
            for b in np.quantile(proj, np.linspace(0.01, 0.99, 60)):
                for sign in (1.0, -1.0):
                    acc = np.mean(np.where(sign * (proj - b) >= 0, 1.0, -1.0) == y)
                    best_linear = max(best_linear, float(acc))
        assert best_linear <= 0.80
        assert rbf_acc >= 0.95

    def test_duplicated_training_set_same_decision_function(self):
        # identical decision function when every point is duplicated,
        # provided no dual variable sits at the box (C large enough)
        samples = _blobs(seed=2, n=40)
        model_a = train_svm(samples, box_c=1000.0, rbf_width=0.5, tol=1e-8)
        assert np.all(np.abs(model_a.dual_coeffs) < 1000.0 * 0.999)
        model_b = train_svm(samples + samples, box_c=1000.0, rbf_width=0.5, tol=1e-8)
        rng = np.random.default_rng(3)
        for probe_point in rng.uniform(-3, 3, (25, 2)):
            feature = EchoFeature(float(probe_point[0]), float(probe_point[1]))
            assert decision_value(model_a, feature) == pytest.approx(decision_value(model_b, feature), abs=1e-6)

    def test_single_class_rejected(self):
        samples = _samples(np.random.default_rng(0).normal(0, 1, (10, 2)), [EchoClass.WALL] * 10)
        with pytest.raises(ValueError):
            train_svm(samples)

    def test_dual_feasibility(self):
        samples = _blobs(seed=4, n=80, sep=1.5, sigma=0.8)  # overlapping classes
        box_c = 5.0
        x, y = clf._features_labels(samples)
        z = clf._compress(x)
        z = (z - z.mean(axis=0)) / z.std(axis=0)
        kernel = clf._rbf_kernel(z, z, 1.0)
        alphas, _ = clf._solve_dual(kernel, y, box_c, 1e-3, 200000)
        assert np.all(alphas >= -1e-12)
        assert np.all(alphas <= box_c + 1e-12)
        assert abs(np.sum(alphas * y)) < 1e-6

    def test_free_support_vectors_classified_correctly(self):
        samples = _blobs(seed=5, n=60)
        box_c = 10.0
        model = train_svm(samples, box_c=box_c, rbf_width=1.0)
        x, y = clf._features_labels(samples)
        z = model.normalize(x)
        kernel = clf._rbf_kernel(z, model.support_vectors, model.rbf_width)
        values = kernel @ model.dual_coeffs + model.bias
        for sv, coeff in zip(model.support_vectors, model.dual_coeffs):
            if abs(coeff) < box_c * 0.999:  # unbounded support vector
                idx = int(np.argmin(np.linalg.norm(z - sv, axis=1)))
                assert np.sign(values[idx]) == y[idx]

    def test_decision_lipschitz_bound(self):
        # RBF gradient bound in the normalized feature space:
        # |f(a) - f(b)| <= sum|coeffs| sqrt(2 width / e) |z(a) - z(b)|
        samples = _blobs(seed=6, n=50, sep=1.0, sigma=0.7)
        model = train_svm(samples, box_c=3.0, rbf_width=2.0)
        lip = np.sum(np.abs(model.dual_coeffs)) * math.sqrt(2.0 * model.rbf_width / math.e)
        rng = np.random.default_rng(7)
        for _ in range(40):
            a = np.array([rng.uniform(-3, 3), 10.0 ** rng.uniform(-2, 2)])
            b = a * np.array([1.0, rng.uniform(0.9, 1.1)]) + np.array([rng.normal(0, 0.05), 0.0])
            fa = decision_value(model, EchoFeature(*a))
            fb = decision_value(model, EchoFeature(*b))
            z_step = float(np.linalg.norm(model.normalize(a[None, :]) - model.normalize(b[None, :])))
            assert abs(fb - fa) <= lip * z_step * (1 + 1e-9) + 1e-12


class TestPredict:
    def test_zero_decision_is_wall(self):
        samples = _blobs(seed=8)
        model = train_svm(samples)
        probe_feature = EchoFeature(0.0, 1.0)
        model.bias -= decision_value(model, probe_feature)
        label, value = predict(model, probe_feature)
        assert value == pytest.approx(0.0, abs=1e-12)
        assert label == EchoClass.WALL

    def test_feature_rescaling_invariance(self):
        # rescaling raw features and retraining gives identical decisions
        # because the normalized coordinates are unchanged: affine on the
        # delay, multiplicative on the (log-compressed) power
        samples = _blobs(seed=9, n=60)
        model_a = train_svm(samples, box_c=10.0, rbf_width=1.0, tol=1e-8)
        scaled = [
            LabeledSample(EchoFeature(5.0 * s.feature.toa_delay + 3.0, 0.1 * s.feature.beam_power), s.label, 0.0)
            for s in samples
        ]
        model_b = train_svm(scaled, box_c=10.0, rbf_width=1.0, tol=1e-8)
        for s, t in zip(samples, scaled):
            assert decision_value(model_a, s.feature) == pytest.approx(decision_value(model_b, t.feature), abs=1e-8)


class TestCrossValidate:
    def test_five_equal_folds(self):
        y = np.array([1.0] * 50 + [-1.0] * 50)
        folds = clf._stratified_folds(y, 5, seed=0)
        assert len(folds) == 5
        assert sorted(len(f) for f in folds) == [20] * 5
        for fold in folds:
            labels = y[fold]
            assert np.sum(labels > 0) == 10

    def test_single_grid_cell(self):
        samples = _blobs(seed=10, n=40)
        best_c, best_w, acc = cross_validate(samples, c_grid=[2.0], width_grid=[0.5], folds=5)
        assert (best_c, best_w) == (2.0, 0.5)
        assert 0.0 <= acc <= 1.0

    def test_separable_reaches_perfect_cv(self):
        samples = _blobs(seed=11, n=50)
        _, _, acc = cross_validate(samples, c_grid=[100.0], width_grid=[1.0], folds=5)
        assert acc == 1.0

    def test_selected_pair_maximizes_measured_grid(self):
        samples = _blobs(seed=12, n=40, sep=1.2, sigma=0.8)
        c_grid, w_grid = [0.5, 5.0], [0.1, 1.0]
        best_c, best_w, best_acc = cross_validate(samples, c_grid, w_grid, folds=3)
        for c in c_grid:
            for w in w_grid:
                _, _, acc = cross_validate(samples, [c], [w], folds=3)
                assert acc <= best_acc + 1e-12

    def test_fold_count_exceeding_class_rejected(self):
        samples = _blobs(seed=13, n=3)
        with pytest.raises(ValueError):
            cross_validate(samples, folds=5)


class TestPersistence:
    def test_model_round_trip(self, tmp_path):
        samples = _blobs(seed=14, n=30)
        model = train_svm(samples, box_c=7.0, rbf_width=0.3)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        rng = np.random.default_rng(15)
        for point in rng.uniform(-3, 3, (10, 2)):
            feature = EchoFeature(float(point[0]), float(point[1]))
            assert decision_value(model, feature) == decision_value(loaded, feature)

    def test_model_json_is_typed(self, tmp_path):
        samples = _blobs(seed=16, n=20)
        save_model(train_svm(samples), tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        assert doc["kind"] == "echokit-svm"

    def test_dataset_round_trip(self, tmp_path):
        samples = _blobs(seed=17, n=10)
        for i, s in enumerate(samples):
            samples[i] = LabeledSample(s.feature, s.label, true_toa=float(i))
        path = tmp_path / "data.csv"
        save_dataset(samples, path)
        loaded = load_dataset(path)
        assert len(loaded) == len(samples)
        for a, b in zip(samples, loaded):
            assert a.feature == b.feature
            assert a.label == b.label
            assert a.true_toa == b.true_toa

"""Echo-vs-empty-space classifier: an RBF-kernel SVM trained from scratch.

Features are the estimated echo delay and the peak beamformer output power.
Labels come from mirror geometry: an estimate counts as a wall hit when its
delay lands within ten samples of the nearest wall's true delay.  The dual
problem is solved by pairwise coordinate ascent on the maximal
KKT-violating pair, libsvm style, with the full kernel matrix in memory
(fine at a couple of thousand samples).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from echokit import pipeline, room, toa
from echokit.geometry import ArrayGeometry, Pose, ProbeSignal
from echokit.pipeline import EchoFeature
from echokit.seeding import derive_seed

LABEL_TOL_SAMPLES = 10.0
DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_WIDTH_GRID = (0.01, 0.1, 1.0, 10.0)


class EchoClass(enum.IntEnum):
    """Paper-facing class encoding: wall echoes are 0, empty space is 1."""

    WALL = 0
    NO_WALL = 1


@dataclass
class LabeledSample:
    feature: EchoFeature
    label: EchoClass
    true_toa: float


@dataclass
class SvmModel:
    """Trained classifier: normalized support vectors, signed dual weights,
    bias, kernel width, and the feature normalization statistics.

    Normalization is a log compression of the beam power followed by a
    per-feature z-score.  The raw power spans the whole SNR training range,
    about eight decades, so z-scoring it directly collapses nearly all
    samples into one unresolvable cluster; the log makes the scale usable.
    """

    support_vectors: np.ndarray  # (n_sv, 2), normalized features
    dual_coeffs: np.ndarray  # (n_sv,), alpha_i * y_i
    bias: float
    rbf_width: float
    box_c: float
    feat_mean: np.ndarray
    feat_std: np.ndarray

    def __post_init__(self):
        if np.any(self.feat_std <= 0):
            raise ValueError("feature standard deviations must be positive")
        if np.any(np.abs(self.dual_coeffs) > self.box_c * (1 + 1e-9)):
            raise ValueError("dual coefficients exceed the box constraint")

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return (_compress(features) - self.feat_mean) / self.feat_std


def _compress(features: np.ndarray) -> np.ndarray:
    """(delay, power) -> (delay, log10 power); power is positive by
    construction, clipped away from zero for safety."""
    out = np.array(features, dtype=float, copy=True)
    out[..., 1] = np.log10(np.maximum(out[..., 1], 1e-30))
    return out


def label_estimate(tau_hat: float, true_tau: float) -> EchoClass:
    """Wall when the delay error is strictly below ten samples."""
    return EchoClass.WALL if abs(tau_hat - true_tau) < LABEL_TOL_SAMPLES else EchoClass.NO_WALL


def _grid_dims(count: int, extent_x: float, extent_y: float) -> tuple[int, int]:
    """Factor ``count`` into nx * ny whose ratio best matches the usable
    floor area, so the requested number of grid points is hit exactly."""
    best = (count, 1)
    best_err = float("inf")
    target = extent_x / extent_y
    for nx in range(1, count + 1):
        if count % nx:
            continue
        ny = count // nx
        err = abs(math.log((nx / ny) / target))
        if err < best_err:
            best_err = err
            best = (nx, ny)
    return best


def generate_dataset(
    room_spec: room.RoomSpec,
    grid_points: int,
    snr_range_db: tuple[float, float],
    seed: int,
    geom: ArrayGeometry,
    probe: ProbeSignal,
    cfg: toa.FreqDomainConfig,
    params: pipeline.PipelineParams = pipeline.PipelineParams(),
    sdnr_db: float = 40.0,
    include_diffuse: bool = True,
    rotor_rps: float = 70.0,
    margin_m: float = 0.5,
    jobs: int = 1,
) -> list[LabeledSample]:
    """Probe the room at ``grid_points`` positions and label each estimate.

    Per point, the SNR is drawn uniformly from ``snr_range_db``, the pipeline
    runs end to end, and the label compares the estimated delay with the
    mirror-geometry truth of the nearest wall.
    """
    if margin_m < geom.radius_m:
        raise ValueError("grid margin must be at least the array radius")
    lx, ly, _ = room_spec.dims_m
    if 2 * margin_m >= lx or 2 * margin_m >= ly:
        raise ValueError("margin leaves no room for the grid")
    nx, ny = _grid_dims(grid_points, lx - 2 * margin_m, ly - 2 * margin_m)
    xs = np.linspace(margin_m, lx - margin_m, nx)
    ys = np.linspace(margin_m, ly - margin_m, ny)
    points = [(float(x), float(y)) for y in ys for x in xs]

    tasks = list(enumerate(points))
    args = (room_spec, snr_range_db, seed, geom, probe, cfg, params, sdnr_db, include_diffuse, rotor_rps)
    if jobs > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(_dataset_point, tasks, [args] * len(tasks), chunksize=16))
    else:
        samples = [_dataset_point(task, args) for task in tasks]
    return samples


def _dataset_point(task, args) -> LabeledSample:
    index, (x, y) = task
    room_spec, snr_range_db, seed, geom, probe, cfg, params, sdnr_db, include_diffuse, rotor_rps = args
    point_seed = derive_seed(seed, "dataset", index)
    snr_db = float(np.random.default_rng(point_seed).uniform(*snr_range_db))
    noise = room.NoiseModel(
        snr_db=snr_db,
        sdnr_db=sdnr_db if include_diffuse else math.inf,
        rotor_rps=rotor_rps,
        seed=point_seed,
    )
    pose = Pose(x, y, 0.0)
    toa_est, _, feature = pipeline.probe_at_pose(pose, room_spec, geom, probe, noise, cfg, params)
    truth = pipeline.wall_echo_truth(room_spec, pose, geom, pipeline.array_height(room_spec, params))
    nearest = min(truth, key=lambda e: e.wall_distance_m)
    return LabeledSample(feature=feature, label=label_estimate(toa_est.tau, nearest.tau_samples), true_toa=nearest.tau_samples)


def split_dataset(samples: list[LabeledSample], ratio: float, seed: int) -> tuple[list[LabeledSample], list[LabeledSample]]:
    """Seeded shuffle, then split with ``int(n * ratio)`` training samples."""
    if not samples:
        raise ValueError("empty dataset")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    order = np.random.default_rng(derive_seed(seed, "split")).permutation(len(samples))
    n_train = int(len(samples) * ratio)
    train = [samples[i] for i in order[:n_train]]
    test = [samples[i] for i in order[n_train:]]
    return train, test


def _features_labels(samples: list[LabeledSample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([[s.feature.toa_delay, s.feature.beam_power] for s in samples])
    # internal encoding: wall -> +1, no wall -> -1
    y = np.array([1.0 if s.label == EchoClass.WALL else -1.0 for s in samples])
    return x, y


def _rbf_kernel(a: np.ndarray, b: np.ndarray, width: float) -> np.ndarray:
    sq = np.sum(a**2, axis=1)[:, None] + np.sum(b**2, axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-width * np.maximum(sq, 0.0))


def _solve_dual(kernel: np.ndarray, y: np.ndarray, box_c: float, tol: float, max_iter: int) -> tuple[np.ndarray, float]:
    """Pairwise coordinate ascent on the SVM dual, selecting the maximal
    KKT-violating pair each step.  Returns dual variables and bias."""
    n = y.shape[0]
    alphas = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a with Q = yy' * K
    q_diag = np.diag(kernel)
    for _ in range(max_iter):
        yg = -y * grad
        up = ((y > 0) & (alphas < box_c)) | ((y < 0) & (alphas > 0))
        low = ((y > 0) & (alphas > 0)) | ((y < 0) & (alphas < box_c))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        j = int(np.argmin(np.where(low, yg, np.inf)))
        if yg[i] - yg[j] < tol:
            break
        quad = max(q_diag[i] + q_diag[j] - 2.0 * kernel[i, j], 1e-12)
        # step along (d_alpha_i, d_alpha_j) = (y_i, -y_j) * delta, which keeps
        # sum(alpha * y) constant; clip delta to the box constraints
        delta = (yg[i] - yg[j]) / quad
        delta = min(delta, box_c - alphas[i] if y[i] > 0 else alphas[i])
        delta = min(delta, alphas[j] if y[j] > 0 else box_c - alphas[j])
        if delta <= 0.0:
            break
        d_i = y[i] * delta
        d_j = -y[j] * delta
        alphas[i] += d_i
        alphas[j] += d_j
        grad += (y * kernel[:, i]) * (y[i] * d_i) + (y * kernel[:, j]) * (y[j] * d_j)

    free = (alphas > 1e-8) & (alphas < box_c - 1e-8)
    yg = -y * grad
    if free.any():
        bias = float(np.mean(yg[free]))
    else:
        up = ((y > 0) & (alphas < box_c)) | ((y < 0) & (alphas > 0))
        low = ((y > 0) & (alphas > 0)) | ((y < 0) & (alphas < box_c))
        hi = yg[up].max() if up.any() else 0.0
        lo = yg[low].min() if low.any() else 0.0
        bias = float(0.5 * (hi + lo))
    return alphas, bias


def train_svm(
    train: list[LabeledSample], box_c: float = 10.0, rbf_width: float = 1.0, tol: float = 1e-3, max_iter: int = 200000
) -> SvmModel:
    """Fit the RBF SVM on z-scored features.

    Requires both classes; the solver runs to a KKT gap below ``tol``.
    """
    x_raw, y = _features_labels(train)
    if np.unique(y).shape[0] < 2:
        raise ValueError("training data must contain both classes")
    x_comp = _compress(x_raw)
    mean = x_comp.mean(axis=0)
    std = np.maximum(x_comp.std(axis=0), 1e-12)
    x = (x_comp - mean) / std
    kernel = _rbf_kernel(x, x, rbf_width)
    alphas, bias = _solve_dual(kernel, y, box_c, tol, max_iter)
    keep = alphas > 1e-10
    return SvmModel(
        support_vectors=x[keep],
        dual_coeffs=(alphas * y)[keep],
        bias=bias,
        rbf_width=rbf_width,
        box_c=box_c,
        feat_mean=mean,
        feat_std=std,
    )


def decision_value(model: SvmModel, feature: EchoFeature) -> float:
    z = model.normalize(np.array([[feature.toa_delay, feature.beam_power]]))
    k = _rbf_kernel(model.support_vectors, z, model.rbf_width)[:, 0]
    return float(model.dual_coeffs @ k + model.bias)


def predict(model: SvmModel, feature: EchoFeature) -> tuple[EchoClass, float]:
    """Class decision plus the raw decision value.  A value of exactly zero
    counts as a wall (conservative toward keeping points)."""
    value = decision_value(model, feature)
    return (EchoClass.WALL if value >= 0.0 else EchoClass.NO_WALL), value


def _decision_batch(model_sv, dual, bias, width, z: np.ndarray) -> np.ndarray:
    return _rbf_kernel(z, model_sv, width) @ dual + bias


def _stratified_folds(y: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(derive_seed(seed, "cv"))
    assignments = np.empty(y.shape[0], dtype=int)
    for cls in (1.0, -1.0):
        idx = np.nonzero(y == cls)[0]
        if idx.shape[0] < folds:
            raise ValueError("fold count exceeds the size of a class")
        idx = rng.permutation(idx)
        assignments[idx] = np.arange(idx.shape[0]) % folds
    return [np.nonzero(assignments == f)[0] for f in range(folds)]


def cross_validate(
    train: list[LabeledSample],
    c_grid=DEFAULT_C_GRID,
    width_grid=DEFAULT_WIDTH_GRID,
    folds: int = 5,
    seed: int = 0,
    tol: float = 1e-3,
    max_iter: int = 200000,
) -> tuple[float, float, float]:
    """Stratified k-fold grid search; returns (best_c, best_width, accuracy).

    Ties break toward the smaller C, then the smaller width.  The kernel
    matrix is computed once per (fold, width) and shared across C values.
    """
    if folds < 2:
        raise ValueError("need at least two folds")
    if not c_grid or not width_grid:
        raise ValueError("hyperparameter grids must be nonempty")
    x_raw, y = _features_labels(train)
    x_comp = _compress(x_raw)
    fold_idx = _stratified_folds(y, folds, seed)

    c_values = sorted(float(c) for c in c_grid)
    width_values = sorted(float(w) for w in width_grid)
    scores = np.zeros((len(c_values), len(width_values)))
    for val_idx in fold_idx:
        mask = np.ones(y.shape[0], dtype=bool)
        mask[val_idx] = False
        x_tr_comp, y_tr = x_comp[mask], y[mask]
        mean = x_tr_comp.mean(axis=0)
        std = np.maximum(x_tr_comp.std(axis=0), 1e-12)
        x_tr = (x_tr_comp - mean) / std
        x_va = (x_comp[val_idx] - mean) / std
        for wi, width in enumerate(width_values):
            kernel = _rbf_kernel(x_tr, x_tr, width)
            kernel_va = _rbf_kernel(x_va, x_tr, width)
            for ci, c in enumerate(c_values):
                alphas, bias = _solve_dual(kernel, y_tr, c, tol, max_iter)
                pred = kernel_va @ (alphas * y_tr) + bias
                hits = np.sum(np.where(pred >= 0.0, 1.0, -1.0) == y[val_idx])
                scores[ci, wi] += hits / val_idx.shape[0]
    scores /= folds

    best_ci, best_wi, best = 0, 0, -1.0
    for ci in range(len(c_values)):
        for wi in range(len(width_values)):
            if scores[ci, wi] > best:
                best = scores[ci, wi]
                best_ci, best_wi = ci, wi
    return c_values[best_ci], width_values[best_wi], float(best)


def evaluate(model: SvmModel, samples: list[LabeledSample]) -> float:
    """Fraction of samples whose prediction matches the label."""
    hits = sum(1 for s in samples if predict(model, s.feature)[0] == s.label)
    return hits / len(samples)


def save_model(model: SvmModel, path) -> None:
    doc = {
        "kind": "echokit-svm",
        "version": 1,
        "power_transform": "log10",
        "rbf_width": model.rbf_width,
        "box_c": model.box_c,
        "bias": model.bias,
        "feat_mean": model.feat_mean.tolist(),
        "feat_std": model.feat_std.tolist(),
        "support_vectors": model.support_vectors.tolist(),
        "dual_coeffs": model.dual_coeffs.tolist(),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, sort_keys=True, indent=2)
        handle.write("\n")


def load_model(path) -> SvmModel:
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    if doc.get("kind") != "echokit-svm":
        raise ValueError(f"{path} is not a serialized classifier")
    if doc.get("power_transform", "log10") != "log10":
        raise ValueError(f"{path}: unsupported power transform {doc['power_transform']!r}")
    return SvmModel(
        support_vectors=np.asarray(doc["support_vectors"], dtype=float).reshape(-1, 2),
        dual_coeffs=np.asarray(doc["dual_coeffs"], dtype=float),
        bias=float(doc["bias"]),
        rbf_width=float(doc["rbf_width"]),
        box_c=float(doc["box_c"]),
        feat_mean=np.asarray(doc["feat_mean"], dtype=float),
        feat_std=np.asarray(doc["feat_std"], dtype=float),
    )


def save_dataset(samples: list[LabeledSample], path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["toa_delay", "beam_power", "label", "true_toa"])
        for s in samples:
            writer.writerow([repr(s.feature.toa_delay), repr(s.feature.beam_power), int(s.label), repr(s.true_toa)])


def load_dataset(path) -> list[LabeledSample]:
    import csv

    samples = []
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            samples.append(
                LabeledSample(
                    feature=EchoFeature(float(row["toa_delay"]), float(row["beam_power"])),
                    label=EchoClass(int(row["label"])),
                    true_toa=float(row["true_toa"]),
                )
            )
    return samples

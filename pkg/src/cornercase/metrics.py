"""Image-quality and segmentation-quality metrics.

All functions are pure; per-frame evaluation can run concurrently as long
as results are merged back in frame order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imaging import gaussian_kernel_1d, luma


def _check_pair(pred: np.ndarray, actual: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if pred.shape != actual.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    return np.asarray(pred, dtype=np.float64), np.asarray(actual, dtype=np.float64)


def mse(pred: np.ndarray, actual: np.ndarray) -> float:
    """Mean squared error between two frames.

    Color frames are evaluated per channel and the three channel MSEs are
    averaged, which for equal-sized channels also equals the global mean.
    """
    p, a = _check_pair(pred, actual)
    diff = p - a
    if diff.ndim == 3:
        per_channel = [float(np.mean(diff[..., c] ** 2)) for c in range(diff.shape[2])]
        return float(np.mean(per_channel))
    return float(np.mean(diff**2))


def psnr(pred: np.ndarray, actual: np.ndarray, max_value: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; math.inf for identical frames."""
    if max_value <= 0:
        raise ValueError(f"max_value must be positive, got {max_value}")
    err = mse(pred, actual)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value * max_value / err)


def _filter_valid(arr: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # Separable correlation without padding: output shrinks by size-1 per axis.
    size = taps.shape[0]
    h = arr.shape[0] - size + 1
    out = np.zeros((h, arr.shape[1]), dtype=np.float64)
    for i, w in enumerate(taps):
        out += w * arr[i : i + h, :]
    w_out = arr.shape[1] - size + 1
    final = np.zeros((h, w_out), dtype=np.float64)
    for i, w in enumerate(taps):
        final += w * out[:, i : i + w_out]
    return final


def ssim(
    pred: np.ndarray,
    actual: np.ndarray,
    win_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 255.0,
) -> float:
    """Mean structural similarity over Gaussian-weighted local windows.

    Statistics are taken where the window fully fits inside the frame, so
    both dimensions must be at least win_size.  Color input is collapsed to
    luma first.
    """
    p, a = _check_pair(pred, actual)
    if p.ndim == 3:
        p, a = luma(p), luma(a)
    if min(p.shape) < win_size:
        raise ValueError(f"image {p.shape} smaller than the {win_size}x{win_size} window")
    taps = gaussian_kernel_1d(win_size, sigma)
    mu_p = _filter_valid(p, taps)
    mu_a = _filter_valid(a, taps)
    var_p = _filter_valid(p * p, taps) - mu_p * mu_p
    var_a = _filter_valid(a * a, taps) - mu_a * mu_a
    cov = _filter_valid(p * a, taps) - mu_p * mu_a
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2.0 * mu_p * mu_a + c1) * (2.0 * cov + c2)
    den = (mu_p * mu_p + mu_a * mu_a + c1) * (var_p + var_a + c2)
    return float(np.mean(num / den))


@dataclass
class ConfusionMatrix:
    """Pixel counts with rows = ground-truth class, columns = predicted class.

    Index 0 is the void label: row 0 stays empty because void ground truth
    only increments ignored_pixels, while predicted void lands in column 0
    (counting as a miss for the true class, never as a false positive).
    """

    counts: np.ndarray
    ignored_pixels: int

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise ValueError("cannot merge matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts, self.ignored_pixels + other.ignored_pixels)


def confusion_matrix(
    predicted: np.ndarray,
    truth: np.ndarray,
    void_label: int = 0,
    num_labels: int = 20,
) -> ConfusionMatrix:
    """Tally predicted vs ground-truth labels, skipping void ground truth."""
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    pred = np.asarray(predicted).ravel().astype(np.int64)
    true = np.asarray(truth).ravel().astype(np.int64)
    if pred.size and (pred.min() < 0 or pred.max() >= num_labels):
        raise ValueError(f"predicted labels outside [0, {num_labels - 1}]")
    if true.size and (true.min() < 0 or true.max() >= num_labels):
        raise ValueError(f"truth labels outside [0, {num_labels - 1}]")
    keep = true != void_label
    counts = np.bincount(
        true[keep] * num_labels + pred[keep], minlength=num_labels * num_labels
    ).reshape(num_labels, num_labels)
    return ConfusionMatrix(counts, int((~keep).sum()))


@dataclass
class IouResult:
    per_class: dict[int, float]
    mean: float
    frame_wise: float


def iou(matrix: ConfusionMatrix) -> IouResult:
    """Intersection over union per class, TP / (TP + FP + FN).

    Classes absent from both truth and prediction are left out of
    per_class and of the mean.  frame_wise is the class-agnostic
    aggregate: total agreeing pixels over total counted pixels plus
    misses and false alarms pooled across classes.
    """
    counts = matrix.counts
    total = counts.sum()
    if total == 0:
        raise ValueError("no measurable pixels (confusion matrix is all zero)")
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    per_class: dict[int, float] = {}
    for label in range(1, counts.shape[0]):
        union = row[label] + col[label] - counts[label, label]
        if union == 0:
            continue
        per_class[label] = float(counts[label, label]) / float(union)
    trace = np.trace(counts)
    frame_wise = float(trace) / float(2 * total - trace)
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return IouResult(per_class, mean, frame_wise)

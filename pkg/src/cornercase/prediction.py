"""Next-frame prediction baselines and their evaluation.

A predictor maps the last n observed frames to a real-valued estimate of
the frame that follows.  The two built-ins are intentionally simple
baselines; "external" pulls precomputed predictions (e.g. from a learned
model) out of a directory, matched to the target frame by filename index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import metrics
from .imaging import FrameDir, frame_source, load_frame

PREDICTOR_KINDS = ("persistence", "linear", "external")


def _window_array(window, min_len: int, kind: str) -> list[np.ndarray]:
    frames = [np.asarray(f) for f in window]
    if len(frames) < min_len:
        raise ValueError(f"{kind} prediction needs at least {min_len} frame(s), got {len(frames)}")
    shape = frames[0].shape
    for f in frames[1:]:
        if f.shape != shape:
            raise ValueError(f"window frames disagree in shape: {shape} vs {f.shape}")
    return frames


def predict_persistence(window) -> np.ndarray:
    """x_hat_t = x_{t-1}: the previous frame carried forward."""
    frames = _window_array(window, 1, "persistence")
    return np.asarray(frames[-1], dtype=np.float64)


def predict_linear(window) -> np.ndarray:
    """x_hat_t = clamp(2 x_{t-1} - x_{t-2}, 0, 255), per pixel."""
    frames = _window_array(window, 2, "linear")
    last = np.asarray(frames[-1], dtype=np.float64)
    prev = np.asarray(frames[-2], dtype=np.float64)
    return np.clip(2.0 * last - prev, 0.0, 255.0)


class ExternalPredictions:
    """Predictions produced elsewhere, one numbered file per target frame."""

    def __init__(self, directory, force_grayscale: bool = False):
        source = FrameDir(directory, force_grayscale=force_grayscale)
        self._by_index = {
            index: source.path_at(pos) for pos, index in enumerate(source.frame_indices)
        }
        self._gray = force_grayscale

    def predict(self, window, frame_index: int) -> np.ndarray:
        if frame_index not in self._by_index:
            raise ValueError(f"no external prediction for frame index {frame_index}")
        pred = load_frame(self._by_index[frame_index], force_grayscale=self._gray)
        if window:
            shape = np.asarray(window[0]).shape
            if pred.shape != shape:
                raise ValueError(
                    f"external prediction for frame {frame_index} has shape "
                    f"{pred.shape}, frames have {shape}"
                )
        return np.asarray(pred, dtype=np.float64)


def make_predictor(kind: str, external_dir=None, force_grayscale: bool = False):
    """Build a (window, frame_index) -> prediction callable.

    Returns the callable together with the minimum window length the
    predictor needs.
    """
    if kind == "persistence":
        return (lambda window, frame_index: predict_persistence(window)), 1
    if kind == "linear":
        return (lambda window, frame_index: predict_linear(window)), 2
    if kind == "external":
        if external_dir is None:
            raise ValueError("external predictor needs a prediction directory")
        ext = ExternalPredictions(external_dir, force_grayscale=force_grayscale)
        return ext.predict, 0
    raise ValueError(f"unknown predictor kind: {kind!r} (use one of {PREDICTOR_KINDS})")


def predict_next(window, kind: str, frame_index: int | None = None, external_dir=None) -> np.ndarray:
    """One-shot convenience wrapper around make_predictor()."""
    fn, _ = make_predictor(kind, external_dir=external_dir)
    return fn(window, frame_index)


@dataclass
class FrameMetricsRow:
    frame_index: int
    mse: float
    psnr: float
    ssim: float


@dataclass
class PredictionReport:
    """Per-frame metrics plus the aggregates over all evaluated frames.

    PSNR is aggregated both ways because they differ: mean_psnr averages
    the per-frame values (infinite rows propagate), psnr_of_mean_mse
    applies the dB formula to the mean MSE.
    """

    rows: list[FrameMetricsRow]
    mean_mse: float
    mean_psnr: float
    psnr_of_mean_mse: float
    mean_ssim: float


def evaluate_predictor(frames, kind: str, n: int = 2, external_dir=None) -> PredictionReport:
    """Run a predictor over a sequence and score each predicted frame.

    Frames 1..n are warm-up and get no row.  The sequence must be longer
    than n.  Accepts a FrameDir or any sequence of uint8 arrays.
    """
    if n < 1:
        raise ValueError(f"window length must be >= 1, got {n}")
    load, indices = frame_source(frames)
    if len(indices) <= n:
        raise ValueError(f"need more than {n} frames, got {len(indices)}")
    predictor, min_window = make_predictor(kind, external_dir=external_dir)
    if 0 < min_window and n < min_window:
        raise ValueError(f"{kind} prediction needs a window of at least {min_window}, got {n}")
    rows = []
    for pos in range(n, len(indices)):
        window = [load(p) for p in range(pos - n, pos)]
        actual = load(pos)
        pred = predictor(window, indices[pos])
        if pred.shape != actual.shape:
            raise ValueError(
                f"prediction shape {pred.shape} does not match frame shape {actual.shape}"
            )
        rows.append(
            FrameMetricsRow(
                frame_index=indices[pos],
                mse=metrics.mse(pred, actual),
                psnr=metrics.psnr(pred, actual),
                ssim=metrics.ssim(pred, actual),
            )
        )
    mean_mse = float(np.mean([r.mse for r in rows]))
    mean_psnr = float(np.mean([r.psnr for r in rows]))
    psnr_of_mean = math.inf if mean_mse == 0 else 10.0 * math.log10(255.0**2 / mean_mse)
    mean_ssim = float(np.mean([r.ssim for r in rows]))
    return PredictionReport(rows, mean_mse, mean_psnr, psnr_of_mean, mean_ssim)

"""Corner-case scoring: prediction error, relevance masking, row weighting,
normalization and event extraction.

A frame's raw score is the sum of its squared prediction errors, kept only
where the segmentation mask carries a relevant class and weighted linearly
by image row as a proxy for distance: the bottom row (closest to the ego
vehicle) gets weight 1, the top row weight 0.  Raw scores are min-max
normalized over the run (offline) or over the frames seen so far (online),
and frames at or above a threshold form events.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .imaging import BlurConfig, frame_source, gaussian_blur
from .prediction import make_predictor
from .segmentation import ClassTable, relevance_mask

OFFLINE = "offline"
ONLINE = "online"
NORMALIZATION_MODES = (OFFLINE, ONLINE)
PATCH_NORM_SCOPES = ("per_patch", "global")


@dataclass(frozen=True)
class DetectorConfig:
    blur: BlurConfig = field(default_factory=BlurConfig)
    apply_blur: bool = True
    table: ClassTable = field(default_factory=ClassTable)
    predictor: str = "linear"
    window: int = 2
    external_dir: str | None = None
    mode: str = OFFLINE
    threshold: float = 0.5
    patch_size: int = 32
    patch_norm: str = "per_patch"

    def __post_init__(self):
        if self.mode not in NORMALIZATION_MODES:
            raise ValueError(f"unknown normalization mode: {self.mode!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie strictly inside (0, 1), got {self.threshold}")
        if self.patch_size < 1:
            raise ValueError(f"patch size must be >= 1, got {self.patch_size}")
        if self.window < 1:
            raise ValueError(f"window length must be >= 1, got {self.window}")
        if self.patch_norm not in PATCH_NORM_SCOPES:
            raise ValueError(f"unknown patch normalization scope: {self.patch_norm!r}")


def error_map(pred: np.ndarray, actual: np.ndarray, blur: BlurConfig | None = None) -> np.ndarray:
    """Per-pixel squared prediction error, optionally after blurring both sides.

    Returns an (H, W) float64 grid; RGB input averages the three channel
    errors per pixel.
    """
    p = np.asarray(pred, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("empty input")
    if blur is not None:
        p = gaussian_blur(p, blur)
        a = gaussian_blur(a, blur)
    sq = (p - a) ** 2
    if sq.ndim == 3:
        sq = sq.mean(axis=2)
    return sq


def mask_relevant_errors(errors: np.ndarray, relevance: np.ndarray) -> np.ndarray:
    """Zero the error grid wherever the relevance grid is 0."""
    err = np.asarray(errors, dtype=np.float64)
    rel = np.asarray(relevance)
    if err.shape != rel.shape:
        raise ValueError(f"shape mismatch: {err.shape} vs {rel.shape}")
    return err * (rel != 0)


def row_weights(height: int) -> np.ndarray:
    """Linear distance weights per row: 0 at the top, 1 at the bottom row."""
    if height < 2:
        raise ValueError(f"need at least 2 rows for distance weighting, got {height}")
    return np.arange(height, dtype=np.float64) / (height - 1)


def weighted_error_score(errors: np.ndarray) -> float:
    """Raw corner-case score: row-weighted sum of an error grid."""
    err = np.asarray(errors, dtype=np.float64)
    if err.ndim != 2:
        raise ValueError(f"error grids are 2-D, got shape {err.shape}")
    return float(np.sum(err * row_weights(err.shape[0])[:, None]))


def patch_scores(errors: np.ndarray, patch_size: int = 32) -> np.ndarray:
    """Per-tile raw scores on a patch_size grid, same row weights as the
    frame score.  Right/bottom edge tiles may be smaller; the tile scores
    partition the frame score exactly.
    """
    err = np.asarray(errors, dtype=np.float64)
    if err.ndim != 2:
        raise ValueError(f"error grids are 2-D, got shape {err.shape}")
    if patch_size < 1:
        raise ValueError(f"patch size must be >= 1, got {patch_size}")
    h, w = err.shape
    weighted = err * row_weights(h)[:, None]
    row_starts = np.arange(0, h, patch_size)
    col_starts = np.arange(0, w, patch_size)
    rows = np.add.reduceat(weighted, row_starts, axis=0)
    return np.add.reduceat(rows, col_starts, axis=1)


def patch_heatmap(grid: np.ndarray, frame_h: int, frame_w: int, patch_size: int) -> np.ndarray:
    """Nearest-neighbor upsample of a normalized patch grid to frame size,
    quantized to uint8 (1.0 -> 255)."""
    g = np.asarray(grid, dtype=np.float64)
    rows = np.arange(frame_h) // patch_size
    cols = np.arange(frame_w) // patch_size
    img = g[rows[:, None], cols[None, :]]
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def normalize_series(raw, mode: str = OFFLINE, include=None) -> np.ndarray:
    """Min-max normalize a score sequence to [0, 1].

    include marks the entries belonging to the normalization set (warm-up
    frames, whose raw score is a placeholder 0, stay outside it and come
    back as 0).  Offline mode uses the min/max of the whole included set;
    online mode uses, at each step, only the included entries seen so far,
    which makes every output final as soon as it is produced.  A
    degenerate span (max == min) maps to 0.
    """
    values = np.asarray(raw, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"score series are 1-D, got shape {values.shape}")
    if values.size == 0:
        raise ValueError("empty score series")
    if include is None:
        keep = np.ones(values.shape, dtype=bool)
    else:
        keep = np.asarray(include, dtype=bool)
        if keep.shape != values.shape:
            raise ValueError("include mask must match the series length")
    if not keep.any():
        raise ValueError("normalization needs at least one non-warm-up value")
    out = np.zeros_like(values)
    if mode == OFFLINE:
        lo = values[keep].min()
        hi = values[keep].max()
        if hi > lo:
            out[keep] = (values[keep] - lo) / (hi - lo)
        return out
    if mode == ONLINE:
        lo = np.minimum.accumulate(np.where(keep, values, np.inf))
        hi = np.maximum.accumulate(np.where(keep, values, -np.inf))
        span = hi - lo
        ok = keep & (span > 0)
        out[ok] = (values[ok] - lo[ok]) / span[ok]
        return out
    raise ValueError(f"unknown normalization mode: {mode!r}")


def normalize_patch_series(patch_raw: np.ndarray, mode: str = OFFLINE, include=None,
                           scope: str = "per_patch") -> np.ndarray:
    """Normalize a (T, rows, cols) patch score stack.

    per_patch gives every tile position its own min/max over time; global
    pools min/max across all positions.  Warm-up handling and degenerate
    spans behave as in normalize_series.
    """
    stack = np.asarray(patch_raw, dtype=np.float64)
    if stack.ndim != 3:
        raise ValueError(f"patch stacks are (T, rows, cols), got shape {stack.shape}")
    steps = stack.shape[0]
    if include is None:
        keep = np.ones(steps, dtype=bool)
    else:
        keep = np.asarray(include, dtype=bool)
        if keep.shape != (steps,):
            raise ValueError("include mask must match the series length")
    if not keep.any():
        raise ValueError("normalization needs at least one non-warm-up value")
    if scope not in PATCH_NORM_SCOPES:
        raise ValueError(f"unknown patch normalization scope: {scope!r}")
    out = np.zeros_like(stack)
    keep3 = keep[:, None, None]
    if mode == OFFLINE:
        kept = stack[keep]
        if scope == "per_patch":
            lo = kept.min(axis=0)
            hi = kept.max(axis=0)
        else:
            lo = np.full(stack.shape[1:], kept.min())
            hi = np.full(stack.shape[1:], kept.max())
        span = hi - lo
        scaled = np.where(span > 0, (stack - lo) / np.where(span > 0, span, 1.0), 0.0)
        return np.where(keep3, scaled, 0.0)
    if mode == ONLINE:
        masked_lo = np.where(keep3, stack, np.inf)
        masked_hi = np.where(keep3, stack, -np.inf)
        if scope == "global":
            masked_lo = masked_lo.min(axis=(1, 2), keepdims=True)
            masked_hi = masked_hi.max(axis=(1, 2), keepdims=True)
        lo = np.minimum.accumulate(masked_lo, axis=0)
        hi = np.maximum.accumulate(masked_hi, axis=0)
        span = hi - lo
        ok = keep3 & (span > 0)
        scaled = np.where(ok, (stack - lo) / np.where(span > 0, span, 1.0), 0.0)
        return scaled
    raise ValueError(f"unknown normalization mode: {mode!r}")


@dataclass
class ScoreSeries:
    """Per-frame scoring results for one sequence."""

    frame_indices: list[int]
    raw: np.ndarray
    normalized: np.ndarray
    warmup: np.ndarray
    patch_raw: np.ndarray | None = None
    patch_norm: np.ndarray | None = None
    mse_blurred: np.ndarray | None = None
    mse_unblurred: np.ndarray | None = None


@dataclass
class Event:
    event_id: int
    start_frame: int
    end_frame: int
    peak_frame: int
    peak_score: float


def threshold_events(series: ScoreSeries, threshold: float) -> list[Event]:
    """Maximal runs of frames whose normalized score is >= threshold.

    Each event carries its peak frame (first argmax within the run).
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie strictly inside (0, 1), got {threshold}")
    events: list[Event] = []
    run_start = None
    for pos, value in enumerate(series.normalized):
        if value >= threshold:
            if run_start is None:
                run_start = pos
        elif run_start is not None:
            events.append(_make_event(series, run_start, pos, len(events) + 1))
            run_start = None
    if run_start is not None:
        events.append(_make_event(series, run_start, len(series.normalized), len(events) + 1))
    return events


def _make_event(series: ScoreSeries, start: int, stop: int, event_id: int) -> Event:
    chunk = series.normalized[start:stop]
    peak = start + int(np.argmax(chunk))
    return Event(
        event_id=event_id,
        start_frame=series.frame_indices[start],
        end_frame=series.frame_indices[stop - 1],
        peak_frame=series.frame_indices[peak],
        peak_score=float(series.normalized[peak]),
    )


def _prepare_run(frames, masks, config: DetectorConfig):
    load_frame_at, frame_indices = frame_source(frames)
    load_mask_at, mask_indices = frame_source(masks)
    mask_pos = {index: pos for pos, index in enumerate(mask_indices)}
    for index in frame_indices:
        if index not in mask_pos:
            raise ValueError(f"missing mask for frame index {index}")
    predictor, min_window = make_predictor(
        config.predictor, external_dir=config.external_dir, force_grayscale=False
    )
    if 0 < min_window and config.window < min_window:
        raise ValueError(
            f"{config.predictor} prediction needs a window of at least "
            f"{min_window}, configured window is {config.window}"
        )
    if len(frame_indices) <= config.window:
        raise ValueError(
            f"need more than {config.window} frames, got {len(frame_indices)}"
        )
    return load_frame_at, frame_indices, load_mask_at, mask_pos, predictor


def _score_one(pos, load_frame_at, frame_indices, load_mask_at, mask_pos, predictor,
               config: DetectorConfig, ref_shape, collect_mse: bool):
    actual = load_frame_at(pos)
    if actual.shape != ref_shape:
        raise ValueError(
            f"frame shape drift at index {frame_indices[pos]}: "
            f"{actual.shape} vs {ref_shape}"
        )
    mask = load_mask_at(mask_pos[frame_indices[pos]])
    if mask.shape != actual.shape[:2]:
        raise ValueError(
            f"mask shape {mask.shape} does not match frame shape "
            f"{actual.shape[:2]} at index {frame_indices[pos]}"
        )
    window = [load_frame_at(p) for p in range(pos - config.window, pos)]
    pred = predictor(window, frame_indices[pos])
    if pred.shape != actual.shape:
        raise ValueError(
            f"prediction shape {pred.shape} does not match frame shape "
            f"{actual.shape} at index {frame_indices[pos]}"
        )
    blur = config.blur if config.apply_blur else None
    errors = error_map(pred, actual, blur=blur)
    relevant = mask_relevant_errors(errors, relevance_mask(mask, config.table))
    raw = weighted_error_score(relevant)
    patches = patch_scores(relevant, config.patch_size)
    mse_b = mse_u = np.nan
    if collect_mse:
        mse_u = float(np.mean(error_map(pred, actual, blur=None)))
        mse_b = float(np.mean(errors)) if blur is not None else mse_u
    return raw, patches, mse_b, mse_u


def score_frames(frames, masks, config: DetectorConfig, workers: int = 1,
                 collect_mse: bool = False):
    """Raw per-frame scores for a sequence; the normalization-free half of
    the pipeline.

    Returns (frame_indices, raw, warmup, patch_raw, mse_blurred,
    mse_unblurred).  Results are merged in frame order, so the output does
    not depend on the worker count.
    """
    load_frame_at, frame_indices, load_mask_at, mask_pos, predictor = _prepare_run(
        frames, masks, config
    )
    total = len(frame_indices)
    n = config.window
    ref = load_frame_at(0)
    ref_shape = ref.shape
    grid_shape = patch_scores(np.zeros(ref_shape[:2]), config.patch_size).shape

    def task(pos):
        return _score_one(pos, load_frame_at, frame_indices, load_mask_at, mask_pos,
                          predictor, config, ref_shape, collect_mse)

    positions = range(n, total)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, positions))
    else:
        results = [task(pos) for pos in positions]

    raw = np.zeros(total, dtype=np.float64)
    warmup = np.zeros(total, dtype=bool)
    warmup[:n] = True
    patch_raw = np.zeros((total,) + grid_shape, dtype=np.float64)
    mse_b = np.full(total, np.nan)
    mse_u = np.full(total, np.nan)
    for pos, (score, patches, mb, mu) in zip(positions, results):
        raw[pos] = score
        patch_raw[pos] = patches
        mse_b[pos] = mb
        mse_u[pos] = mu
    return frame_indices, raw, warmup, patch_raw, mse_b, mse_u


def run_detector(frames, masks, config: DetectorConfig | None = None, workers: int = 1,
                 collect_mse: bool = False) -> ScoreSeries:
    """Score a whole sequence and normalize according to config.mode."""
    config = config or DetectorConfig()
    frame_indices, raw, warmup, patch_raw, mse_b, mse_u = score_frames(
        frames, masks, config, workers=workers, collect_mse=collect_mse
    )
    include = ~warmup
    normalized = normalize_series(raw, config.mode, include)
    patch_norm = normalize_patch_series(patch_raw, config.mode, include, config.patch_norm)
    return ScoreSeries(
        frame_indices=frame_indices,
        raw=raw,
        normalized=normalized,
        warmup=warmup,
        patch_raw=patch_raw,
        patch_norm=patch_norm,
        mse_blurred=mse_b if collect_mse else None,
        mse_unblurred=mse_u if collect_mse else None,
    )


@dataclass
class StreamRecord:
    """One causally final row of the online pipeline."""

    frame_index: int
    raw: float
    normalized: float
    warmup: bool
    patch_raw: np.ndarray
    patch_norm: np.ndarray


def stream_detector(frames, masks, config: DetectorConfig | None = None):
    """Generator over frames with online (running min-max) normalization.

    Every yielded record is final: it only depends on frames seen so far.
    Raw scores are identical to the offline pipeline's.
    """
    config = config or DetectorConfig()
    if config.mode != ONLINE:
        config = replace(config, mode=ONLINE)
    load_frame_at, frame_indices, load_mask_at, mask_pos, predictor = _prepare_run(
        frames, masks, config
    )
    total = len(frame_indices)
    n = config.window
    ref_shape = load_frame_at(0).shape
    grid_shape = patch_scores(np.zeros(ref_shape[:2]), config.patch_size).shape
    lo = np.inf
    hi = -np.inf
    grid_lo = np.full(grid_shape, np.inf)
    grid_hi = np.full(grid_shape, -np.inf)
    for pos in range(total):
        if pos < n:
            yield StreamRecord(frame_indices[pos], 0.0, 0.0, True,
                               np.zeros(grid_shape), np.zeros(grid_shape))
            continue
        raw, patches, _, _ = _score_one(pos, load_frame_at, frame_indices, load_mask_at,
                                        mask_pos, predictor, config, ref_shape, False)
        lo = min(lo, raw)
        hi = max(hi, raw)
        normalized = (raw - lo) / (hi - lo) if hi > lo else 0.0
        if config.patch_norm == "global":
            grid_lo = np.minimum(grid_lo, patches.min())
            grid_hi = np.maximum(grid_hi, patches.max())
        else:
            grid_lo = np.minimum(grid_lo, patches)
            grid_hi = np.maximum(grid_hi, patches)
        span = grid_hi - grid_lo
        grid_norm = np.where(span > 0, (patches - grid_lo) / np.where(span > 0, span, 1.0), 0.0)
        yield StreamRecord(frame_indices[pos], float(raw), float(normalized), False,
                           patches, grid_norm)

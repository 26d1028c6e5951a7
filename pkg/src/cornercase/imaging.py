"""Frame handling: file I/O, grayscale conversion, resizing and blurring.

Frames are plain numpy arrays: uint8 with shape (H, W) for grayscale or
(H, W, 3) for RGB.  Arithmetic (blurring, error maps) promotes to float64
and stays there; quantization back to uint8 happens only at storage
boundaries (loading, saving, resizing).
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

SUPPORTED_SUFFIXES = (".png", ".pgm", ".ppm")

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_INDEX_RE = re.compile(r"(\d+)")


def _round_half_up(values: np.ndarray) -> np.ndarray:
    # np.round ties to even; file-format quantization wants plain half-up.
    return np.floor(values + 0.5)


def luma(frame: np.ndarray) -> np.ndarray:
    """Real-valued luma plane of an RGB array (no rounding).

    Grayscale input is passed through as float64.
    """
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        r, g, b = LUMA_WEIGHTS
        return arr[..., 0] * r + arr[..., 1] * g + arr[..., 2] * b
    raise ValueError(f"expected (H, W) or (H, W, 3) array, got shape {arr.shape}")


def to_grayscale(frame: np.ndarray) -> np.ndarray:
    """Convert an RGB frame to 8-bit grayscale (0.299 R + 0.587 G + 0.114 B).

    Values round half-up to the nearest integer.  Grayscale input is
    returned unchanged, so the conversion is idempotent.
    """
    if frame.ndim == 2:
        return frame
    return np.clip(_round_half_up(luma(frame)), 0, 255).astype(np.uint8)


def load_frame(path, force_grayscale: bool = False) -> np.ndarray:
    """Load an 8-bit PNG/PGM/PPM image as a uint8 array.

    Returns shape (H, W) for grayscale files, (H, W, 3) for RGB ones.
    With force_grayscale RGB data is collapsed through to_grayscale().
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ValueError(f"unsupported image format: {path.name}")
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                raise ValueError(
                    f"{path.name}: unsupported mode {im.mode!r}, need 8-bit gray or RGB"
                )
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ValueError(f"cannot decode image file: {path}") from exc
    if arr.size == 0:
        raise ValueError(f"{path.name}: image has a zero dimension")
    if force_grayscale:
        arr = to_grayscale(arr)
    return arr


def save_frame(frame: np.ndarray, path) -> None:
    """Write a uint8 frame as PNG/PGM/PPM depending on the suffix."""
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ValueError(f"unsupported image format: {path.name}")
    arr = np.asarray(frame)
    if arr.dtype != np.uint8:
        raise ValueError("frames are stored as uint8")
    if arr.ndim == 2:
        im = Image.fromarray(arr, mode="L")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        im = Image.fromarray(arr, mode="RGB")
    else:
        raise ValueError(f"expected (H, W) or (H, W, 3) array, got shape {arr.shape}")
    im.save(path)


def resize_bilinear(frame: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize with bilinear interpolation on half-pixel-center coordinates.

    Output intensities are rounded half-up and clamped to [0, 255].
    Resizing to the input size returns an identical copy.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    h, w = frame.shape[:2]
    if (out_h, out_w) == (h, w):
        return frame.copy()
    src = np.asarray(frame, dtype=np.float64)
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    if src.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = src[y0[:, None], x0[None, :]] * (1.0 - fx) + src[y0[:, None], x1[None, :]] * fx
    bot = src[y1[:, None], x0[None, :]] * (1.0 - fx) + src[y1[:, None], x1[None, :]] * fx
    vals = top * (1.0 - fy) + bot * fy
    return np.clip(_round_half_up(vals), 0, 255).astype(np.uint8)


def gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    """Sampled 1-D Gaussian, normalized to sum to 1.

    Even sizes sample at symmetric half-integer offsets, so the kernel
    stays symmetric for any size.
    """
    if size < 1:
        raise ValueError(f"kernel size must be >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    weights = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return weights / weights.sum()


@dataclass(frozen=True)
class BlurConfig:
    """Gaussian pre-blur applied to both images before differencing."""

    kernel_size: int = 10
    sigma: float = 2.0
    border_mode: str = "replicate"

    def __post_init__(self):
        if self.kernel_size < 1:
            raise ValueError(f"kernel size must be >= 1, got {self.kernel_size}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.border_mode != "replicate":
            raise ValueError(f"unsupported border mode: {self.border_mode!r}")

    @property
    def anchor(self) -> int:
        # For even sizes this is the top-left tap of the central 2x2 block.
        return (self.kernel_size - 1) // 2

    def kernel(self) -> np.ndarray:
        """Full 2-D kernel (outer product of the 1-D taps), sum exactly 1."""
        k1 = gaussian_kernel_1d(self.kernel_size, self.sigma)
        k2 = np.outer(k1, k1)
        return k2 / k2.sum()


def _correlate_1d(arr: np.ndarray, taps: np.ndarray, axis: int, anchor: int) -> np.ndarray:
    size = taps.shape[0]
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (anchor, size - 1 - anchor)
    padded = np.pad(arr, pad, mode="edge")
    n = arr.shape[axis]
    out = np.zeros(arr.shape, dtype=np.float64)
    index = [slice(None)] * arr.ndim
    for i, w in enumerate(taps):
        index[axis] = slice(i, i + n)
        out += w * padded[tuple(index)]
    return out


def gaussian_blur(frame: np.ndarray, cfg: BlurConfig) -> np.ndarray:
    """Blur a frame with the configured Gaussian, replicating borders.

    Output is float64 with the input shape; no requantization happens here.
    RGB input is blurred per channel.  kernel_size == 1 degenerates to the
    identity.
    """
    arr = np.asarray(frame, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot blur an empty frame")
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected (H, W) or (H, W, C) array, got shape {arr.shape}")
    if cfg.kernel_size == 1:
        return arr.copy()
    taps = gaussian_kernel_1d(cfg.kernel_size, cfg.sigma)
    out = _correlate_1d(arr, taps, 0, cfg.anchor)
    out = _correlate_1d(out, taps, 1, cfg.anchor)
    return out


def list_numbered_images(directory) -> list[tuple[int, Path]]:
    """Numbered image files of a directory in lexicographic filename order.

    The frame index is the last digit group of the stem (zero padding is
    fine); files without digits are ignored.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no such directory: {directory}")
    entries = []
    for path in sorted(directory.iterdir(), key=lambda p: p.name):
        if not path.is_file() or path.suffix.lower() not in SUPPORTED_SUFFIXES:
            continue
        groups = _INDEX_RE.findall(path.stem)
        if not groups:
            continue
        entries.append((int(groups[-1]), path))
    if not entries:
        raise ValueError(f"no numbered image files in {directory}")
    seen = {}
    for index, path in entries:
        if index in seen:
            raise ValueError(
                f"duplicate frame index {index}: {seen[index].name} vs {path.name}"
            )
        seen[index] = path
    return entries


class FrameDir:
    """Lazy, cached access to the numbered image files of a directory."""

    def __init__(self, directory, force_grayscale: bool = False, cache_size: int = 8):
        self._entries = list_numbered_images(directory)
        self._gray = force_grayscale
        self._cached_load = functools.lru_cache(maxsize=cache_size)(self._load)

    @property
    def frame_indices(self) -> list[int]:
        return [index for index, _ in self._entries]

    def path_at(self, pos: int) -> Path:
        return self._entries[pos][1]

    def _load(self, pos: int) -> np.ndarray:
        return load_frame(self._entries[pos][1], force_grayscale=self._gray)

    def load_at(self, pos: int) -> np.ndarray:
        return self._cached_load(pos)

    def __len__(self) -> int:
        return len(self._entries)


def frame_source(obj):
    """Normalize a frame source to (loader, frame_indices).

    Accepts FrameDir-style objects (anything with load_at/frame_indices)
    or a plain sequence of arrays, which gets 1-based indices.
    """
    if hasattr(obj, "load_at") and hasattr(obj, "frame_indices"):
        return obj.load_at, list(obj.frame_indices)
    seq = list(obj)
    return (lambda pos: seq[pos]), list(range(1, len(seq) + 1))

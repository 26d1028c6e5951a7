"""Semantic class handling: label conventions, mask I/O, relevance masking.

The internal label set is fixed: 0 is the reserved void label, 1..19 are
the driving classes below.  Classes 12..19 (people and vehicles) form the
default relevant set for corner-case scoring.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .imaging import list_numbered_images

CLASS_NAMES = (
    "Road",
    "Sidewalk",
    "Building",
    "Wall",
    "Fence",
    "Pole",
    "Traffic light",
    "Traffic sign",
    "Vegetation",
    "Terrain",
    "Sky",
    "Person",
    "Rider",
    "Car",
    "Truck",
    "Bus",
    "Train",
    "Motorcycle",
    "Bicycle",
)

VOID_LABEL = 0
NUM_LABELS = len(CLASS_NAMES) + 1  # ids 0..19, 0 = void
DEFAULT_RELEVANT = frozenset(range(12, 20))

ID_CONVENTIONS = ("paper", "trainid")


def class_name(label: int) -> str:
    if label == VOID_LABEL:
        return "void"
    return CLASS_NAMES[label - 1]


@dataclass(frozen=True)
class ClassTable:
    """Label metadata plus the set of classes that matter for scoring."""

    relevant: frozenset = field(default_factory=lambda: DEFAULT_RELEVANT)
    void_label: int = VOID_LABEL

    def __post_init__(self):
        bad = [c for c in self.relevant if not 1 <= c <= len(CLASS_NAMES)]
        if bad:
            raise ValueError(f"relevant classes out of range 1..{len(CLASS_NAMES)}: {bad}")

    @property
    def names(self) -> tuple[str, ...]:
        return CLASS_NAMES


def _convert_labels(raw: np.ndarray, id_convention: str, path=None) -> np.ndarray:
    where = f" in {path}" if path else ""
    if id_convention == "trainid":
        bad = (raw > 18) & (raw != 255)
        if bad.any():
            value = int(raw[bad][0])
            raise ValueError(f"label {value}{where} out of range for id convention 'trainid'")
        out = np.where(raw == 255, VOID_LABEL, raw.astype(np.int16) + 1)
        return out.astype(np.uint8)
    if id_convention == "paper":
        if (raw > 19).any():
            value = int(raw[raw > 19][0])
            raise ValueError(f"label {value}{where} out of range for id convention 'paper'")
        return raw.astype(np.uint8)
    raise ValueError(f"unknown id convention: {id_convention!r}")


def load_mask(path, id_convention: str = "paper") -> np.ndarray:
    """Load a single-channel label image into internal ids 0..19.

    trainid files carry 0..18 for the classes (shifted up by one on load)
    and 255 for void; paper-convention files carry the internal ids
    directly, with 0 already meaning void.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such mask file: {path}")
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise ValueError(f"{path.name}: masks must be single-channel 8-bit, got mode {im.mode!r}")
            raw = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ValueError(f"cannot decode mask file: {path}") from exc
    if raw.size == 0:
        raise ValueError(f"{path.name}: mask has a zero dimension")
    return _convert_labels(raw, id_convention, path)


def save_mask(mask: np.ndarray, path, id_convention: str = "paper") -> None:
    """Write an internal label mask back to disk under the given convention."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"masks are 2-D, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 19:
        raise ValueError("internal labels must lie in 0..19")
    if id_convention == "trainid":
        out = np.where(arr == VOID_LABEL, 255, arr.astype(np.int16) - 1).astype(np.uint8)
    elif id_convention == "paper":
        out = arr.astype(np.uint8)
    else:
        raise ValueError(f"unknown id convention: {id_convention!r}")
    Image.fromarray(out, mode="L").save(path)


def relevance_mask(mask: np.ndarray, table: ClassTable | None = None) -> np.ndarray:
    """Binary relevance grid: 1 where the label is in the relevant set.

    Void pixels are never relevant.
    """
    table = table or ClassTable()
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"masks are 2-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= NUM_LABELS):
        raise ValueError("mask contains labels outside 0..19")
    return np.isin(arr, sorted(table.relevant)).astype(np.uint8)


class MaskDir:
    """Lazy, cached access to the numbered mask files of a directory."""

    def __init__(self, directory, id_convention: str = "paper", cache_size: int = 8):
        if id_convention not in ID_CONVENTIONS:
            raise ValueError(f"unknown id convention: {id_convention!r}")
        self._entries = list_numbered_images(directory)
        self._convention = id_convention
        self._cached_load = functools.lru_cache(maxsize=cache_size)(self._load)

    @property
    def frame_indices(self) -> list[int]:
        return [index for index, _ in self._entries]

    def path_at(self, pos: int) -> Path:
        return self._entries[pos][1]

    def _load(self, pos: int) -> np.ndarray:
        return load_mask(self._entries[pos][1], id_convention=self._convention)

    def load_at(self, pos: int) -> np.ndarray:
        return self._cached_load(pos)

    def __len__(self) -> int:
        return len(self._entries)

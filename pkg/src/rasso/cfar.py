"""2-D cell-averaging CFAR with an integral-image noise estimate, plus the
opening / connected-component / area rule that turns a detection mask into a
frame-level presence flag."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

_STRUCT_3X3 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class CfarConfig:
    guard: int = 4
    train: int = 10
    k: float = 2.0
    area_min: int = 12

    def __post_init__(self):
        if self.guard < 0 or self.train < 1:
            raise ValueError("need guard >= 0 and train >= 1")
        if not self.k > 0:
            raise ValueError("sensitivity k must be positive")
        if self.area_min < 1:
            raise ValueError("area_min must be >= 1")

    @property
    def half_width(self) -> int:
        return self.guard + self.train

    @property
    def n_train(self) -> int:
        return (2 * self.half_width + 1) ** 2 - (2 * self.guard + 1) ** 2


@dataclass(frozen=True)
class Component:
    label: int
    area: int
    bbox: tuple[int, int, int, int]  # row_min, col_min, row_max, col_max (inclusive)
    centroid: tuple[float, float]


@dataclass
class CfarResult:
    raw_mask: np.ndarray
    opened_mask: np.ndarray
    components: list[Component] = field(default_factory=list)
    presence: bool = False

    @property
    def max_component_area(self) -> int:
        return max((c.area for c in self.components), default=0)

    @property
    def largest(self) -> Component | None:
        if not self.components:
            return None
        return max(self.components, key=lambda c: (c.area, -c.label))


def _box_sums(integral: np.ndarray, half: int, shape: tuple[int, int]) -> np.ndarray:
    """Sum over the (2*half+1)^2 box around each cell, clipped at the borders."""
    rows, cols = shape
    r = np.arange(rows)
    c = np.arange(cols)
    r0 = np.clip(r - half, 0, rows)[:, None]
    r1 = np.clip(r + half + 1, 0, rows)[:, None]
    c0 = np.clip(c - half, 0, cols)[None, :]
    c1 = np.clip(c + half + 1, 0, cols)[None, :]
    return integral[r1, c1] - integral[r0, c1] - integral[r1, c0] + integral[r0, c0]


def _integral(values: np.ndarray) -> np.ndarray:
    out = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(values, axis=0, dtype=np.float64), axis=1, out=out[1:, 1:])
    return out


def training_mean(values: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """Mean over each cell's training ring, O(1) per cell via integral images.

    Near the borders the ring is clipped and the mean uses only the training
    cells that exist. Cells with no training cells at all get 0.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("CFAR operates on 2-D maps")
    shape = values.shape
    sums = _integral(values)
    ones = _integral(np.ones(shape))
    ring_sum = _box_sums(sums, cfg.half_width, shape) - _box_sums(sums, cfg.guard, shape)
    ring_count = _box_sums(ones, cfg.half_width, shape) - _box_sums(ones, cfg.guard, shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(ring_count > 0, ring_sum / np.maximum(ring_count, 1), 0.0)
    return mean


def ca_cfar(values: np.ndarray, cfg: CfarConfig, k: float | None = None) -> np.ndarray:
    """Raw detection mask ``Y > k * mu_hat`` (strict; ties are not detections)."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ValueError("CFAR input must be finite and non-negative")
    k = cfg.k if k is None else k
    return values > k * training_mean(values, cfg)


def open_3x3(mask: np.ndarray) -> np.ndarray:
    """Binary opening with a full 3x3 square; pixels outside the map count as 0."""
    mask = np.asarray(mask, dtype=bool)
    eroded = ndimage.binary_erosion(mask, structure=_STRUCT_3X3, border_value=0)
    return ndimage.binary_dilation(eroded, structure=_STRUCT_3X3, border_value=0)


def connected_components(mask: np.ndarray) -> list[Component]:
    """8-connected components, labelled in row-major order of their first pixel."""
    mask = np.asarray(mask, dtype=bool)
    labels, count = ndimage.label(mask, structure=_STRUCT_3X3)
    if count == 0:
        return []
    idx = np.arange(1, count + 1)
    areas = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    centroids = ndimage.center_of_mass(mask, labels, idx)
    slices = ndimage.find_objects(labels)
    out = []
    for lab, area, cen, sl in zip(idx, areas, centroids, slices):
        bbox = (sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1)
        out.append(Component(int(lab), int(area), bbox, (float(cen[0]), float(cen[1]))))
    return out


def frame_presence(components: Sequence[Component], cfg: CfarConfig) -> bool:
    return max((c.area for c in components), default=0) >= cfg.area_min


def detect(values: np.ndarray, cfg: CfarConfig, k: float | None = None) -> CfarResult:
    raw = ca_cfar(values, cfg, k)
    opened = open_3x3(raw)
    comps = connected_components(opened)
    return CfarResult(raw, opened, comps, frame_presence(comps, cfg))


def _max_area(mask: np.ndarray) -> int:
    opened = open_3x3(mask)
    if not opened.any():
        return 0
    labels, count = ndimage.label(opened, structure=_STRUCT_3X3)
    return int(np.bincount(labels.ravel())[1:].max())


def presence_over_k(values: np.ndarray, cfg: CfarConfig, ks: np.ndarray) -> np.ndarray:
    """Frame presence at every sensitivity in ascending ``ks``.

    Raw masks shrink as k grows, and opening and the largest-component area
    are both monotone in the mask, so presence is non-increasing in k. The
    last k that still yields presence is found by bisection.
    """
    ks = np.asarray(ks, dtype=float)
    if np.any(np.diff(ks) < 0):
        raise ValueError("k grid must be ascending")
    values = np.asarray(values, dtype=np.float64)
    mu = training_mean(values, cfg)

    def present(i: int) -> bool:
        return _max_area(values > ks[i] * mu) >= cfg.area_min

    out = np.zeros(ks.size, dtype=bool)
    if ks.size == 0 or not present(0):
        return out
    lo, hi = 0, ks.size  # present(lo) is True; present(hi) is False or hi is past the end
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if present(mid):
            lo = mid
        else:
            hi = mid
    out[: lo + 1] = True
    return out

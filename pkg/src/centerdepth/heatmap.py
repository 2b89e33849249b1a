"""Keypoint heatmaps: Gaussian rendering, peak extraction and box regions.

Heatmap cells map to image pixels through ``image = (cell + 0.5) * stride``
per axis. Pixels index the image lattice with pixel centers on integers.
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from .errors import CenterOutOfBounds


@dataclass
class Heatmap:
    values: np.ndarray
    stride: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.isscalar(self.stride):
            self.stride = (float(self.stride), float(self.stride))
        else:
            self.stride = tuple(float(s) for s in self.stride)

    @classmethod
    def empty(cls, n_rows, n_cols=None, stride=(1.0, 1.0)):
        return cls(np.zeros((n_rows, n_rows if n_cols is None else n_cols)), stride)

    @property
    def shape(self):
        return self.values.shape

    def cell_to_image(self, cell):
        x, y = cell
        return ((x + 0.5) * self.stride[0], (y + 0.5) * self.stride[1])

    def image_to_cell(self, point):
        """Nearest cell to an image point, clipped to the map."""
        h, w = self.values.shape
        x = min(max(int(math.floor(point[0] / self.stride[0])), 0), w - 1)
        y = min(max(int(math.floor(point[1] / self.stride[1])), 0), h - 1)
        return x, y


def peak_sigma(object_size):
    w, h = object_size
    return max(1.0, min(w, h) / 6.0)


def render_gaussian_peak(center, object_size, hm: Heatmap) -> Heatmap:
    """Return a copy of ``hm`` maxed with a unit Gaussian at ``center`` (cells).

    ``object_size`` is ``(w, h)`` in cells and sets the spread.
    """
    h, w = hm.values.shape
    xc, yc = float(center[0]), float(center[1])
    if not (0 <= xc <= w - 1 and 0 <= yc <= h - 1):
        raise CenterOutOfBounds(f"center {center} outside {w}x{h} heatmap")
    out = hm.values.copy()
    kernels.splat_gaussian(out, xc, yc, peak_sigma(object_size))
    return Heatmap(out, hm.stride)


def extract_peaks(hm: Heatmap, score_threshold=0.5, window=3):
    """Window maxima at or above ``score_threshold``, best first.

    Returns ``[((x, y), score), ...]`` with integer cell coordinates.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    mask = kernels.peak_mask(hm.values, float(score_threshold), window // 2)
    ys, xs = np.nonzero(mask)
    scores = hm.values[ys, xs]
    # row-major nonzero order plus a stable sort keeps ties by index
    order = np.argsort(-scores, kind="stable")
    return [((int(xs[i]), int(ys[i])), float(scores[i])) for i in order]


@dataclass(frozen=True)
class Region:
    """Integer pixel rectangle ``|x - xc| <= w/2, |y - yc| <= h/2`` clipped to the image."""

    xc: int
    yc: int
    w: float
    h: float
    x0: int
    x1: int
    y0: int
    y1: int

    @property
    def shape(self):
        return (self.y1 - self.y0 + 1, self.x1 - self.x0 + 1)

    @property
    def size(self):
        rows, cols = self.shape
        return rows * cols

    @property
    def center_index(self):
        return (self.yc - self.y0) * self.shape[1] + (self.xc - self.x0)

    def pixels(self):
        """``(xs, ys)`` of every member pixel in row-major order."""
        ys, xs = np.mgrid[self.y0:self.y1 + 1, self.x0:self.x1 + 1]
        return xs.ravel(), ys.ravel()

    def contains(self, x, y):
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def slices(self):
        return slice(self.y0, self.y1 + 1), slice(self.x0, self.x1 + 1)


def build_region(center, w, h, image_size) -> Region:
    """Region around ``center`` (rounded to the nearest pixel); ``image_size`` is (width, height)."""
    width, height = image_size
    if w < 0 or h < 0:
        raise ValueError("region size must be non-negative")
    xc = int(math.floor(center[0] + 0.5))
    yc = int(math.floor(center[1] + 0.5))
    if not (0 <= xc < width and 0 <= yc < height):
        raise CenterOutOfBounds(f"center {center} outside {width}x{height} image")
    hw = int(math.floor(w / 2.0))
    hh = int(math.floor(h / 2.0))
    return Region(
        xc, yc, float(w), float(h),
        max(0, xc - hw), min(width - 1, xc + hw),
        max(0, yc - hh), min(height - 1, yc + hh),
    )


@dataclass
class Detection:
    center: Tuple[float, float]
    size: Tuple[float, float]
    label: str
    score: float
    region: Region
    target_id: Optional[int] = field(default=None, compare=False)


def decode_detections(
    hm: Heatmap, size_map, image_size, score_threshold=0.5, window=3, labels=None
) -> List[Detection]:
    """Turn heatmap peaks into detections with regions in image pixels.

    ``size_map`` is ``(N, N, 2)`` holding box ``(w, h)`` in pixels at each cell.
    ``labels`` optionally maps ``(x, y)`` cells to a class tag.
    """
    dets = []
    for (x, y), score in extract_peaks(hm, score_threshold, window):
        u, v = hm.cell_to_image((x, y))
        u = min(u, image_size[0] - 1.0)
        v = min(v, image_size[1] - 1.0)
        bw, bh = (float(s) for s in size_map[y, x])
        label = labels.get((x, y), "object") if labels else "object"
        dets.append(Detection((u, v), (bw, bh), label, score, build_region((u, v), bw, bh, image_size)))
    return dets

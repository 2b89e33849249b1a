"""Center-depth accuracy metrics and distance-binned error."""
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyInput, EmptyMask, IoFailure, OutOfBounds

DELTA_THRESHOLD = 1.10
BIN_EDGES = (0.0, 50.0, 100.0, 150.0, 200.0)


@dataclass(frozen=True)
class DepthPair:
    pred: float
    gt: float
    frame_id: str = ""
    target_id: int = 0

    def to_dict(self):
        return {"frame_id": self.frame_id, "target_id": self.target_id, "pred_m": self.pred, "gt_m": self.gt}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["pred_m"]), float(d["gt_m"]), str(d["frame_id"]), int(d["target_id"]))


def _arrays(pred, gt):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if pred.size == 0:
        raise EmptyInput("no depth pairs")
    if pred.shape != gt.shape:
        raise ValueError("pred and gt must have the same length")
    if np.any(gt <= 0):
        raise ValueError("ground-truth depths must be positive")
    return pred, gt


def delta_metrics(pred, gt, threshold=DELTA_THRESHOLD, symmetric=True):
    """Fractions of pairs whose depth ratio is strictly below threshold**k, k = 1..3."""
    if not threshold > 1:
        raise ValueError("threshold must exceed 1")
    pred, gt = _arrays(pred, gt)
    ratio = pred / gt
    if symmetric:
        ratio = np.maximum(ratio, gt / pred)
    return tuple(float(np.mean(ratio < threshold ** k)) for k in (1, 2, 3))


def error_metrics(pred, gt):
    """``(mre, mae, rmse)``."""
    pred, gt = _arrays(pred, gt)
    err = pred - gt
    return (
        float(np.mean(np.abs(err) / gt)),
        float(np.mean(np.abs(err))),
        float(math.sqrt(np.mean(err * err))),
    )


@dataclass(frozen=True)
class BinStat:
    mae: Optional[float]
    count: int


def bin_labels(edges):
    return [f"R{i + 1}" for i in range(len(edges) - 1)]


def bin_index(gt, edges=BIN_EDGES):
    """Half-open bins ``[lo, hi)`` with the last edge closed; -1 outside."""
    edges = np.asarray(edges, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    idx = np.searchsorted(edges, gt, side="right") - 1
    idx = np.where(gt == edges[-1], len(edges) - 2, idx)
    return np.where((gt < edges[0]) | (gt > edges[-1]), -1, idx)


def binned_mae(pred, gt, edges=BIN_EDGES) -> Dict[str, BinStat]:
    edges = np.asarray(edges, dtype=np.float64)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    idx = bin_index(gt, edges)
    abs_err = np.abs(pred - gt)
    out = {}
    for b, label in enumerate(bin_labels(edges)):
        m = idx == b
        count = int(m.sum())
        out[label] = BinStat(float(abs_err[m].mean()) if count else None, count)
    return out


def extract_center_depth(depth_raster, center):
    """Raster value at the pixel nearest to ``center = (u, v)``."""
    raster = np.asarray(depth_raster)
    x = int(math.floor(center[0] + 0.5))
    y = int(math.floor(center[1] + 0.5))
    if not (0 <= y < raster.shape[0] and 0 <= x < raster.shape[1]):
        raise OutOfBounds(f"center {tuple(center)} outside {raster.shape[1]}x{raster.shape[0]} raster")
    return float(raster[y, x])


def extract_seg_depth(depth_raster, mask):
    raster = np.asarray(depth_raster, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != raster.shape:
        raise ValueError("mask must match the raster shape")
    if not mask.any():
        raise EmptyMask("segmentation mask is empty")
    return float(raster[mask].mean())


@dataclass
class MetricsReport:
    delta1: float
    delta2: float
    delta3: float
    mre: float
    mae: float
    rmse: float
    per_bin_mae: Dict[str, BinStat]
    n: int
    threshold: float = DELTA_THRESHOLD
    bin_edges: Tuple[float, ...] = BIN_EDGES
    unbinned: int = 0

    def to_dict(self):
        return {
            "n": self.n,
            "threshold": self.threshold,
            "bin_edges": list(self.bin_edges),
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta3": self.delta3,
            "mre": self.mre,
            "mae": self.mae,
            "rmse": self.rmse,
            "per_bin_mae": {k: {"mae": v.mae, "count": v.count} for k, v in self.per_bin_mae.items()},
            "unbinned": self.unbinned,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["delta1"], d["delta2"], d["delta3"], d["mre"], d["mae"], d["rmse"],
            {k: BinStat(v["mae"], int(v["count"])) for k, v in d["per_bin_mae"].items()},
            int(d["n"]), d["threshold"], tuple(d["bin_edges"]), int(d.get("unbinned", 0)),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def table(self):
        """Fixed-width text: overall row then per-bin MAE row."""
        head = f"{'n':>6} {'d1':>7} {'d2':>7} {'d3':>7} {'MRE':>7} {'RMSE':>8}"
        row = (
            f"{self.n:>6d} {self.delta1:>7.3f} {self.delta2:>7.3f} {self.delta3:>7.3f} "
            f"{self.mre:>7.3f} {self.rmse:>8.3f}"
        )
        labels = list(self.per_bin_mae)
        bhead = " ".join(f"{'MAE_' + k:>9}" for k in labels)
        brow = " ".join(
            f"{'-':>9}" if s.mae is None else f"{s.mae:>9.3f}" for s in self.per_bin_mae.values()
        )
        counts = " ".join(f"{s.count:>9d}" for s in self.per_bin_mae.values())
        return "\n".join([head, row, "", bhead, brow, counts]) + "\n"


def build_report(pairs: Sequence[DepthPair], threshold=DELTA_THRESHOLD, bin_edges=BIN_EDGES, symmetric=True):
    if len(pairs) == 0:
        raise EmptyInput("no depth pairs")
    pred = np.array([p.pred for p in pairs])
    gt = np.array([p.gt for p in pairs])
    d1, d2, d3 = delta_metrics(pred, gt, threshold, symmetric)
    mre, mae, rmse = error_metrics(pred, gt)
    bins = binned_mae(pred, gt, bin_edges)
    binned = sum(s.count for s in bins.values())
    return MetricsReport(
        d1, d2, d3, mre, mae, rmse, bins, len(pairs),
        float(threshold), tuple(float(e) for e in bin_edges), len(pairs) - binned,
    )


def write_pairs(path, pairs: Iterable[DepthPair]):
    try:
        with open(path, "w") as fh:
            for p in pairs:
                fh.write(json.dumps(p.to_dict()) + "\n")
    except OSError as e:
        raise IoFailure(path, e.strerror or str(e)) from e


def read_pairs(path) -> List[DepthPair]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise IoFailure(path, e.strerror or str(e)) from e
    return [DepthPair.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]

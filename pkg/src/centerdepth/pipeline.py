"""Per-frame glue: detections, unary corruption and CRF refinement."""
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .crf import CrfConfig, refine_center_depth
from .heatmap import Detection, build_region, extract_peaks
from .metrics import DepthPair, extract_center_depth
from .scene import SyntheticFrame, frame_rng

# stream id for unary-noise draws; 0 and 1 belong to scene synthesis
UNARY_STREAM = 2


def frame_detections(frame: SyntheticFrame, mode="gt", score_threshold=0.5, window=3) -> List[Detection]:
    """Detections for every annotation that a detector would report.

    ``gt`` uses annotation centers and box sizes directly. ``decoded`` takes
    heatmap peaks, keeps those landing on an annotation's cell, and centers
    the region on the peak's image position.
    """
    size = frame.image_size
    heat = frame.heat
    dets = []
    if mode == "gt":
        for i, a in enumerate(frame.annotations):
            cell = heat.image_to_cell(a.center)
            score = float(frame.heatmap[cell[1], cell[0]])
            region = build_region(a.center, a.width, a.height, size)
            dets.append(Detection(a.center, (a.width, a.height), a.label, score, region, target_id=i))
        return dets
    if mode != "decoded":
        raise ValueError(f"unknown detection mode {mode!r}")
    by_cell = {}
    for i, a in enumerate(frame.annotations):
        by_cell.setdefault(heat.image_to_cell(a.center), i)
    for cell, score in extract_peaks(heat, score_threshold, window):
        i = by_cell.get(cell)
        if i is None:
            continue
        a = frame.annotations[i]
        u, v = heat.cell_to_image(cell)
        u, v = min(u, size[0] - 1.0), min(v, size[1] - 1.0)
        w, h = (float(s) for s in frame.size_map[cell[1], cell[0]])
        dets.append(Detection((u, v), (w, h), a.label, score, build_region((u, v), w, h, size), target_id=i))
    dets.sort(key=lambda d: d.target_id)
    return dets


def corrupt_unary(frame: SyntheticFrame, rel_sigma, seed, frame_index, background_depth=300.0):
    """Depth raster plus zero-mean noise with std ``rel_sigma * depth`` on target pixels.

    Background pixels are left exact; they never feed a target's unary term
    unless a region spills outside its painted mask.
    """
    depth = frame.depth.astype(np.float64)
    if rel_sigma <= 0:
        return depth
    mask = depth < background_depth
    rng = frame_rng(seed, frame_index, UNARY_STREAM)
    noise = rng.standard_normal(int(mask.sum()))
    out = depth.copy()
    out[mask] += rel_sigma * depth[mask] * noise
    return out


@dataclass
class TargetResult:
    frame_id: str
    target_id: int
    label: str
    center: tuple
    bbox: tuple
    gt: float
    raw: float
    refined: float

    def pair(self, refined=True):
        return DepthPair(self.refined if refined else self.raw, self.gt, self.frame_id, self.target_id)

    def to_dict(self):
        return {
            "frame_id": self.frame_id,
            "target_id": self.target_id,
            "class": self.label,
            "center": list(self.center),
            "bbox": list(self.bbox),
            "gt_m": self.gt,
            "raw_m": self.raw,
            "depth_m": self.refined,
        }


def refine_frame(
    frame: SyntheticFrame, detections: Sequence[Detection], unary, cfg: CrfConfig
) -> List[TargetResult]:
    out = []
    for det in detections:
        a = frame.annotations[det.target_id]
        raw = extract_center_depth(unary, det.center)
        ref = refine_center_depth(frame.features, frame.stride, det.region, unary, cfg)
        out.append(TargetResult(
            frame.frame_id, det.target_id, a.label, tuple(det.center), tuple(a.bbox),
            a.depth, raw, ref.center_depth,
        ))
    return out

"""Deterministic synthetic driving frames and their on-disk dataset format.

Randomness: frame ``i`` of a run seeded with ``seed`` draws from
``PCG64(SeedSequence(seed, spawn_key=(i, stream)))`` with stream 0 for target
placement and stream 1 for feature noise, so any frame can be regenerated on
its own and results do not depend on worker scheduling.
"""
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .camera import (
    Annotation2D, BehindCamera, Box3D, CameraIntrinsics, RigidTransform, project_box,
)
from .errors import (
    ChecksumMismatch, DegenerateProjection, IoFailure, ManifestMissing, MalformedRaster,
    PlacementExhausted,
)
from .heatmap import Heatmap, build_region, render_gaussian_peak
from .raster import decode_raster, encode_raster

CLASSES = ("car", "van", "truck", "bicycle", "pedestrian")

# (length, width, height) ranges in meters
CLASS_SIZES = {
    "car": ((3.5, 5.5), (1.6, 2.0), (1.4, 1.8)),
    "van": ((4.5, 6.0), (1.8, 2.1), (1.9, 2.5)),
    "truck": ((6.0, 12.0), (2.2, 2.6), (2.8, 4.0)),
    "bicycle": ((1.5, 1.9), (0.5, 0.8), (1.5, 1.9)),
    "pedestrian": ((0.4, 0.8), (0.4, 0.8), (1.5, 2.0)),
}

DEFAULT_CLASS_WEIGHTS = (
    ("car", 0.5), ("van", 0.15), ("truck", 0.1), ("bicycle", 0.1), ("pedestrian", 0.15),
)
DEFAULT_BINS = ((0.0, 50.0), (50.0, 100.0), (100.0, 150.0), (150.0, 200.0))
FORMAT = "centerdepth-dataset/1"


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    width: int = 1242
    height: int = 375
    focal: float = 720.0
    feature_size: int = 128
    channels: int = 4
    targets_per_bin: int = 3
    bins: Tuple[Tuple[float, float], ...] = DEFAULT_BINS
    class_weights: Tuple[Tuple[str, float], ...] = DEFAULT_CLASS_WEIGHTS
    noise_sigma: float = 0.02
    background_depth: float = 300.0
    min_range: float = 5.0
    camera_height: float = 1.65
    depth_mode: str = "euclidean"
    min_visibility: float = 0.25
    max_iou: float = 0.7
    max_occlusion: float = 0.5
    max_retries: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple((float(lo), float(hi)) for lo, hi in self.bins))
        cw = self.class_weights
        if isinstance(cw, dict):
            cw = cw.items()
        object.__setattr__(self, "class_weights", tuple((str(k), float(v)) for k, v in cw))
        if self.feature_size < 16:
            raise ValueError("feature_size >= 16")
        if self.channels < 2:
            raise ValueError("channels >= 2")
        if self.targets_per_bin < 0:
            raise ValueError("targets_per_bin >= 0")
        prev_hi = 0.0
        for lo, hi in self.bins:
            if not (prev_hi <= lo < hi <= 200.0):
                raise ValueError("bins must be ordered, non-overlapping and within (0, 200]")
            if hi <= self.min_range:
                raise ValueError("every bin must reach beyond min_range")
            prev_hi = hi
        for name, weight in self.class_weights:
            if name not in CLASS_SIZES or weight < 0:
                raise ValueError(f"bad class weight entry {name!r}: {weight}")
        if sum(w for _, w in self.class_weights) <= 0:
            raise ValueError("class weights must not all be zero")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma >= 0")
        if self.depth_mode not in ("euclidean", "z"):
            raise ValueError("depth_mode must be 'euclidean' or 'z'")
        if not 0.0 <= self.max_occlusion <= 1.0:
            raise ValueError("max_occlusion must lie in [0, 1]")
        if self.min_range <= self.camera_height:
            raise ValueError("min_range must exceed camera_height")

    @property
    def intrinsics(self):
        return CameraIntrinsics.kitti_like(self.width, self.height, self.focal)

    @property
    def stride(self):
        return (self.width / self.feature_size, self.height / self.feature_size)


def frame_rng(seed, frame_index, stream):
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(frame_index), int(stream))))
    )


@dataclass
class TargetInstance:
    label: str
    position: np.ndarray
    yaw: float
    size: Tuple[float, float, float]
    annotation: Annotation2D
    texture: np.ndarray
    extent: Tuple[float, float, float, float] = field(default=(0.0, 0.0, 0.0, 0.0), repr=False)

    @property
    def box(self):
        return Box3D.from_pose(self.label, self.position, self.yaw, self.size)

    @property
    def footprint_radius(self):
        return 0.5 * math.hypot(self.size[0], self.size[1])


def _iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def _overlap(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    return ix * iy


def _area(b):
    return (b[2] - b[0]) * (b[3] - b[1])


def _inside(point, box):
    return box[0] <= point[0] <= box[2] and box[1] <= point[1] <= box[3]


def _painted_extent(ann, cfg):
    """Bounding rectangle of the pixels :func:`render_frame` paints for ``ann``, padded by one."""
    r = target_mask_region(ann, cfg)
    return (
        min(ann.bbox[0], r.x0) - 1, min(ann.bbox[1], r.y0) - 1,
        max(ann.bbox[2], r.x1) + 1, max(ann.bbox[3], r.y1) + 1,
    )


def _occlusion_ok(targets, cfg):
    """Every center stays visible and at most ``max_occlusion`` of each box is covered."""
    for t in targets:
        a = t.annotation
        covered = 0.0
        for o in targets:
            b = o.annotation
            if o is t or b.depth >= a.depth:
                continue
            if _inside(a.center, o.extent):
                return False
            covered += _overlap(t.extent, o.extent)
        if covered > cfg.max_occlusion * _area(t.extent):
            return False
    return True


def _heat_cell(center, cfg):
    """Heatmap cell holding image point ``center`` (same rule as :meth:`Heatmap.image_to_cell`)."""
    sx, sy = cfg.stride
    n = cfg.feature_size
    return (
        min(max(int(math.floor(center[0] / sx)), 0), n - 1),
        min(max(int(math.floor(center[1] / sy)), 0), n - 1),
    )


def _sample_target(rng, cfg, lo, hi, names, probs, extr):
    k = cfg.intrinsics
    label = names[rng.choice(len(names), p=probs)]
    size = tuple(float(rng.uniform(a, b)) for a, b in CLASS_SIZES[label])
    depth = float(rng.uniform(max(lo, cfg.min_range), hi))
    yaw = float(rng.uniform(-math.pi, math.pi))
    u = float(rng.uniform(0.05 * cfg.width, 0.95 * cfg.width))
    tan_az = (u - k.cx) / k.fx
    y = cfg.camera_height - size[2] / 2.0
    if cfg.depth_mode == "euclidean":
        z = math.sqrt((depth * depth - y * y) / (1.0 + tan_az * tan_az))
    else:
        z = depth
    position = np.array([tan_az * z, y, z])
    box = Box3D.from_pose(label, position, yaw, size)
    ann = project_box(box, extr, k, cfg.depth_mode)
    # depth rasters are float32; keep the label bit-identical to the raster value
    ann = replace(ann, depth=float(np.float32(ann.depth)))
    texture = rng.uniform(0.0, 1.0, cfg.channels - 2)
    return TargetInstance(label, position, yaw, size, ann, texture, _painted_extent(ann, cfg))


def _acceptable(t, placed, cfg, lo, hi, last_bin):
    a = t.annotation
    if not (lo <= a.depth < hi or (last_bin and a.depth == hi)):
        return False
    if a.visibility < cfg.min_visibility:
        return False
    u, v = a.center
    if not (0 <= u <= cfg.width - 1 and 0 <= v <= cfg.height - 1):
        return False
    cell = _heat_cell(a.center, cfg)
    for other in placed:
        if _iou(a.bbox, other.annotation.bbox) > cfg.max_iou:
            return False
        oc = _heat_cell(other.annotation.center, cfg)
        # keep heatmap peaks separable by a 3x3 window
        if max(abs(cell[0] - oc[0]), abs(cell[1] - oc[1])) < 2:
            return False
        gap = math.hypot(t.position[0] - other.position[0], t.position[2] - other.position[2])
        if gap < t.footprint_radius + other.footprint_radius:
            return False
    return _occlusion_ok(list(placed) + [t], cfg)


def generate_scene(cfg: SceneConfig, frame_index=0) -> List[TargetInstance]:
    """Place ``targets_per_bin`` targets in every depth bin."""
    rng = frame_rng(cfg.seed, frame_index, 0)
    extr = RigidTransform.identity()
    names = [n for n, _ in cfg.class_weights]
    probs = np.array([w for _, w in cfg.class_weights])
    probs = probs / probs.sum()
    placed: List[TargetInstance] = []
    per_bin: Dict[int, List[TargetInstance]] = {}
    # far bins first: small horizon targets are easy to place, near boxes then route around them
    for b in reversed(range(len(cfg.bins))):
        lo, hi = cfg.bins[b]
        last_bin = b == len(cfg.bins) - 1
        per_bin[b] = []
        for _ in range(cfg.targets_per_bin):
            for _attempt in range(cfg.max_retries + 1):
                try:
                    t = _sample_target(rng, cfg, lo, hi, names, probs, extr)
                except (DegenerateProjection, BehindCamera):
                    continue
                if _acceptable(t, placed, cfg, lo, hi, last_bin):
                    placed.append(t)
                    per_bin[b].append(t)
                    break
            else:
                raise PlacementExhausted(
                    f"frame {frame_index}: no valid placement in bin [{lo}, {hi}) "
                    f"after {cfg.max_retries} retries"
                )
    return [t for b in range(len(cfg.bins)) for t in per_bin[b]]


def target_mask_region(ann: Annotation2D, cfg: SceneConfig):
    return build_region(ann.center, ann.width, ann.height, (cfg.width, cfg.height))


def feature_signal(depth):
    """Depth-correlated channel-0 value: depth / 200 clipped to [0, 1]."""
    return np.clip(np.asarray(depth, dtype=np.float64) / 200.0, 0.0, 1.0)


def size_map_from_annotations(annotations, cfg: SceneConfig):
    n = cfg.feature_size
    sizes = np.zeros((n, n, 2), dtype=np.float32)
    for a in annotations:
        x, y = _heat_cell(a.center, cfg)
        sizes[y, x] = (a.width, a.height)
    return sizes


@dataclass
class SyntheticFrame:
    frame_id: str
    features: np.ndarray
    depth: np.ndarray
    heatmap: np.ndarray
    size_map: np.ndarray
    annotations: List[Annotation2D]
    stride: Tuple[float, float]
    target_ids: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def heat(self):
        return Heatmap(self.heatmap, self.stride)

    @property
    def image_size(self):
        return (self.depth.shape[1], self.depth.shape[0])

    def equals(self, other: "SyntheticFrame"):
        return (
            self.frame_id == other.frame_id
            and self.stride == other.stride
            and self.annotations == other.annotations
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("features", "depth", "heatmap", "size_map")
            )
        )


def frame_id(index):
    return f"{index:06d}"


def render_frame(targets: Sequence[TargetInstance], cfg: SceneConfig, frame_index=0) -> SyntheticFrame:
    """Rasterize depth, features and the GT heatmap for one frame.

    A target covers the union of its 2D box lattice and its center region;
    overlapping targets keep the nearer depth.
    """
    h, w, n = cfg.height, cfg.width, cfg.feature_size
    sx, sy = cfg.stride
    depth = np.full((h, w), cfg.background_depth, dtype=np.float32)
    owner = np.full((h, w), -1, dtype=np.int16)
    order = sorted(range(len(targets)), key=lambda i: -targets[i].annotation.depth)
    for i in order:
        a = targets[i].annotation
        x0, y0 = int(math.ceil(a.bbox[0])), int(math.ceil(a.bbox[1]))
        x1, y1 = int(math.floor(a.bbox[2])), int(math.floor(a.bbox[3]))
        rs, cs = target_mask_region(a, cfg).slices()
        for ys, xs in ((slice(y0, y1 + 1), slice(x0, x1 + 1)), (rs, cs)):
            patch = depth[ys, xs]
            nearer = patch >= np.float32(a.depth)
            patch[nearer] = a.depth
            owner[ys, xs][nearer] = i

    cols = np.minimum(((np.arange(n) + 0.5) * sx).astype(np.int64), w - 1)
    rows = np.minimum(((np.arange(n) + 0.5) * sy).astype(np.int64), h - 1)
    cell_owner = owner[rows[:, None], cols[None, :]]
    feats = np.zeros((n, n, cfg.channels))
    feats[..., 0] = feature_signal(cfg.background_depth)
    class_code = {name: (j + 1) / len(CLASSES) for j, name in enumerate(CLASSES)}
    for i, t in enumerate(targets):
        m = cell_owner == i
        feats[m, 0] = feature_signal(t.annotation.depth)
        feats[m, 1] = class_code[t.label]
        feats[m, 2:] = t.texture
    if cfg.noise_sigma > 0:
        rng = frame_rng(cfg.seed, frame_index, 1)
        feats += rng.normal(0.0, cfg.noise_sigma, feats.shape)

    heat = Heatmap(np.zeros((n, n)), cfg.stride)
    for t in targets:
        a = t.annotation
        heat = render_gaussian_peak(_heat_cell(a.center, cfg), (a.width / sx, a.height / sy), heat)

    anns = [t.annotation for t in targets]
    return SyntheticFrame(
        frame_id(frame_index),
        feats.astype(np.float32),
        depth,
        heat.values.astype(np.float32),
        size_map_from_annotations(anns, cfg),
        anns,
        cfg.stride,
        target_ids=owner,
    )


def generate_frames(cfg: SceneConfig, n_frames, workers=1) -> List[SyntheticFrame]:
    def one(i):
        return render_frame(generate_scene(cfg, i), cfg, i)

    if workers <= 1:
        return [one(i) for i in range(n_frames)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_frames)))


# --------------------------------------------------------------------------
# dataset files
# --------------------------------------------------------------------------

_SUFFIXES = {"depth": "depth.f32", "feat": "feat.f32", "heat": "heat.f32", "ann": "ann.jsonl"}


def _annotation_bytes(annotations):
    return "".join(json.dumps(a.to_dict()) + "\n" for a in annotations).encode()


def _write(path: Path, data: bytes):
    try:
        path.write_bytes(data)
    except OSError as e:
        raise IoFailure(path, e.strerror or str(e)) from e


def emit_dataset(frames: Sequence[SyntheticFrame], dir_path) -> Dict:
    """Write frames under ``dir_path`` and return the manifest that was written."""
    root = Path(dir_path)
    try:
        (root / "frames").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(root, e.strerror or str(e)) from e
    entries = []
    for fr in frames:
        payloads = {
            "depth": encode_raster(fr.depth),
            "feat": encode_raster(fr.features),
            "heat": encode_raster(fr.heatmap),
            "ann": _annotation_bytes(fr.annotations),
        }
        files, sums = {}, {}
        for key, data in payloads.items():
            rel = f"frames/{fr.frame_id}.{_SUFFIXES[key]}"
            _write(root / rel, data)
            files[key] = rel
            sums[key] = hashlib.sha256(data).hexdigest()
        entries.append({"frame_id": fr.frame_id, "files": files, "sha256": sums})
    manifest = {"format": FORMAT, "frames": entries}
    _write(root / "manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return manifest


def _read(path: Path):
    try:
        return path.read_bytes()
    except OSError as e:
        raise IoFailure(path, e.strerror or str(e)) from e


def load_dataset(dir_path, cfg: Optional[SceneConfig] = None) -> List[SyntheticFrame]:
    """Load and checksum-verify a dataset written by :func:`emit_dataset`."""
    root = Path(dir_path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise ManifestMissing(mpath, "manifest.json not found")
    try:
        manifest = json.loads(_read(mpath))
        entries = manifest["frames"]
    except (ValueError, KeyError, TypeError) as e:
        raise ManifestMissing(mpath, f"unreadable manifest ({e})") from e
    frames = []
    for entry in entries:
        arrays = {}
        for key in ("depth", "feat", "heat"):
            path = root / entry["files"][key]
            data = _read(path)
            arrays[key] = decode_raster(data, path)
            _verify(path, data, entry["sha256"][key])
        apath = root / entry["files"]["ann"]
        adata = _read(apath)
        try:
            anns = [Annotation2D.from_dict(json.loads(line)) for line in adata.decode().splitlines() if line]
        except (ValueError, KeyError, TypeError) as e:
            raise MalformedRaster(apath, f"bad annotation line ({e})") from e
        _verify(apath, adata, entry["sha256"]["ann"])
        depth = arrays["depth"]
        feats = arrays["feat"]
        if feats.ndim == 2:
            feats = feats[..., None]
        h, w = depth.shape
        n = feats.shape[0]
        frame_cfg = cfg or SceneConfig(width=w, height=h, feature_size=n, channels=max(2, feats.shape[2]))
        frames.append(SyntheticFrame(
            entry["frame_id"], feats, depth, arrays["heat"],
            size_map_from_annotations(anns, frame_cfg), anns, (w / n, h / n),
        ))
    return frames


def _verify(path, data, expected):
    if hashlib.sha256(data).hexdigest() != expected:
        raise ChecksumMismatch(path, "sha256 does not match manifest")

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from centerdepth.camera import Annotation2D
from centerdepth.crf import feature_weights
from centerdepth.errors import (
    ChecksumMismatch, IoFailure, MalformedRaster, ManifestMissing, PlacementExhausted,
)
from centerdepth.heatmap import extract_peaks
from centerdepth.raster import HEADER_SIZE, MAGIC, decode_raster, encode_raster, read_raster, write_raster
from centerdepth.scene import (
    CLASS_SIZES, SceneConfig, TargetInstance, emit_dataset, feature_signal, generate_frames,
    generate_scene, load_dataset, render_frame,
)

CFG = SceneConfig(seed=11)


def test_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(feature_size=8)
    with pytest.raises(ValueError):
        SceneConfig(channels=1)
    with pytest.raises(ValueError):
        SceneConfig(bins=((0, 60), (50, 100)))
    with pytest.raises(ValueError):
        SceneConfig(bins=((0, 50), (50, 250)))


def test_bin_balance_and_plausible_sizes():
    for i in range(10):
        targets = generate_scene(CFG, i)
        assert len(targets) == 12
        for b, (lo, hi) in enumerate(CFG.bins):
            chunk = targets[3 * b:3 * b + 3]
            assert all(lo <= t.annotation.depth <= hi for t in chunk)
        for t in targets:
            for v, (a, z) in zip(t.size, CLASS_SIZES[t.label]):
                assert a <= v <= z
            assert t.annotation.visibility >= CFG.min_visibility


def test_empty_scene():
    assert generate_scene(replace(CFG, targets_per_bin=0)) == []


def test_determinism():
    a = generate_frames(CFG, 3)
    b = generate_frames(CFG, 3, workers=2)
    for x, y in zip(a, b):
        assert x.equals(y)
        assert encode_raster(x.features) == encode_raster(y.features)
    other = generate_frames(replace(CFG, seed=12), 1)[0]
    assert not np.array_equal(other.depth, a[0].depth)


def test_frame_invariants():
    for fr in generate_frames(CFG, 4):
        assert fr.heatmap.min() >= 0 and fr.heatmap.max() <= 1
        assert np.all(fr.depth > 0)
        peaks = {c for c, s in extract_peaks(fr.heat, 0.99)}
        for a in fr.annotations:
            assert fr.heat.image_to_cell(a.center) in peaks


def test_depth_inside_box():
    for fr in generate_frames(CFG, 4):
        for i, a in enumerate(fr.annotations):
            x0, y0 = math.ceil(a.bbox[0]), math.ceil(a.bbox[1])
            x1, y1 = math.floor(a.bbox[2]), math.floor(a.bbox[3])
            box = fr.depth[y0:y1 + 1, x0:x1 + 1]
            own = fr.target_ids[y0:y1 + 1, x0:x1 + 1] == i
            assert np.all(box[own] == np.float32(a.depth))
            # other pixels belong to nearer occluders only
            assert np.all(box <= np.float32(a.depth))


def test_zero_noise_fidelity():
    cfg = replace(CFG, noise_sigma=0.0)
    fr = generate_frames(cfg, 1)[0]
    n = cfg.feature_size
    sx, sy = cfg.stride
    cols = np.minimum(((np.arange(n) + 0.5) * sx).astype(int), cfg.width - 1)
    rows = np.minimum(((np.arange(n) + 0.5) * sy).astype(int), cfg.height - 1)
    owner = fr.target_ids[rows[:, None], cols[None, :]]
    for i, a in enumerate(fr.annotations):
        cells = fr.features[owner == i]
        if len(cells) == 0:
            continue
        assert np.all(cells[:, 0] == np.float32(feature_signal(a.depth)))
        w = feature_weights(cells[:, :1].astype(float), cells[0, :1].astype(float), 0.1)
        assert np.all(w == 1.0)


def make_target(label, center, bbox, depth):
    ann = Annotation2D(label, bbox, center, depth, 1.0)
    return TargetInstance(label, np.zeros(3), 0.0, (4.0, 1.8, 1.5), ann, np.full(2, 0.5))


def test_overlap_takes_nearer_depth():
    cfg = replace(CFG, noise_sigma=0.0)
    a = make_target("car", (100.0, 100.0), (80.0, 90.0, 120.0, 110.0), 30.0)
    b = make_target("van", (110.0, 100.0), (95.0, 85.0, 125.0, 115.0), 20.0)
    fr = render_frame([a, b], cfg)
    # brute-force per-pixel minimum over the painted rectangles
    expect = np.full((cfg.height, cfg.width), cfg.background_depth, dtype=np.float32)
    for t in (a, b):
        x0, y0, x1, y1 = (int(v) for v in t.annotation.bbox)
        patch = expect[y0:y1 + 1, x0:x1 + 1]
        np.minimum(patch, np.float32(t.annotation.depth), out=patch)
    assert np.array_equal(fr.depth, expect)


def test_single_target_feature_value():
    cfg = replace(CFG, noise_sigma=0.0)
    t = make_target("car", (600.0, 180.0), (560.0, 150.0, 640.0, 210.0), 50.0)
    fr = render_frame([t], cfg)
    cell = fr.heat.image_to_cell((600.0, 180.0))
    assert fr.features[cell[1], cell[0], 0] == np.float32(feature_signal(50.0))
    assert feature_signal(50.0) == 0.25


def test_no_targets():
    fr = render_frame([], CFG)
    assert np.all(fr.depth == CFG.background_depth)
    assert not fr.heatmap.any()


def test_placement_exhausted():
    cfg = replace(CFG, targets_per_bin=40, max_retries=5)
    with pytest.raises(PlacementExhausted):
        generate_scene(cfg)


def test_raster_round_trip(tmp_path):
    a = np.random.default_rng(0).uniform(-5, 5, (7, 9, 3)).astype(np.float32)
    data = encode_raster(a)
    assert data[:8] == MAGIC and len(data) == HEADER_SIZE + a.size * 4
    assert np.array_equal(decode_raster(data), a)
    write_raster(tmp_path / "x.f32", a[..., 0])
    assert read_raster(tmp_path / "x.f32").shape == (7, 9)
    with pytest.raises(MalformedRaster):
        decode_raster(data[:-4])
    with pytest.raises(MalformedRaster):
        decode_raster(b"NOTMAGIC" + data[8:])
    with pytest.raises(MalformedRaster):
        decode_raster(data[:10])
    with pytest.raises(IoFailure):
        read_raster(tmp_path / "missing.f32")


@pytest.fixture
def dataset(tmp_path):
    frames = generate_frames(CFG, 2)
    manifest = emit_dataset(frames, tmp_path / "ds")
    return frames, manifest, tmp_path / "ds"


def test_emit_and_load(dataset):
    frames, manifest, root = dataset
    files = sorted(p.name for p in (root / "frames").iterdir())
    assert len(files) == 8
    assert sum(f.endswith(".ann.jsonl") for f in files) == 2
    assert (root / "manifest.json").is_file()
    assert len(manifest["frames"]) == 2
    loaded = load_dataset(root)
    for a, b in zip(frames, loaded):
        assert a.equals(b)


def test_truncated_raster(dataset):
    _, manifest, root = dataset
    path = root / manifest["frames"][1]["files"]["depth"]
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(MalformedRaster) as e:
        load_dataset(root)
    assert str(path) in str(e.value)


def test_checksum_mismatch(dataset):
    _, manifest, root = dataset
    manifest["frames"][0]["sha256"]["heat"] = "0" * 64
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ChecksumMismatch) as e:
        load_dataset(root)
    assert "heat.f32" in str(e.value)


def test_manifest_missing(tmp_path):
    with pytest.raises(ManifestMissing):
        load_dataset(tmp_path)


def test_unwritable_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoFailure) as e:
        emit_dataset(generate_frames(CFG, 1), blocker / "ds")
    assert "file" in str(e.value)

import json
from pathlib import Path

import pytest
import yaml

from centerdepth import cli
from centerdepth.config import (
    MalformedConfig, RunConfig, UnknownField, ValidationFailure, default_dict, dump_config,
    parse_config, parse_override,
)
from centerdepth.metrics import MetricsReport


def test_empty_file_gives_defaults(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("")
    cfg = parse_config(f)
    assert cfg == RunConfig()
    assert yaml.safe_load(dump_config(cfg)) == default_dict()


def test_precedence(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("crf:\n  sigma_f: 0.2\n")
    assert parse_config(f).crf.sigma_f == 0.2
    assert parse_config(f, ["crf.sigma_f=0.3"]).crf.sigma_f == 0.3
    assert parse_config(f, ["seed=4"], seed=9).seed == 9
    assert parse_config(seed=9).scene.seed == 9


def test_validation_failure_names_invariant():
    with pytest.raises(ValidationFailure, match="sigma_f > 0"):
        parse_config(overrides=["crf.sigma_f=-1"])
    with pytest.raises(ValidationFailure):
        parse_config(overrides=["crf.max_iters=0"])


def test_unknown_and_malformed(tmp_path):
    with pytest.raises(UnknownField):
        parse_config(overrides=["crf.bogus=1"])
    with pytest.raises(UnknownField):
        parse_config(overrides=["nothing=1"])
    f = tmp_path / "bad.yaml"
    f.write_text("crf:\n  sigma_f: [1, 2\n")
    with pytest.raises(MalformedConfig, match=r"bad.yaml:\d+"):
        parse_config(f)
    with pytest.raises(MalformedConfig):
        parse_override("no-equals-sign")


def test_parse_override_types():
    assert parse_override("eval.bin_edges=[0, 100, 200]") == {"eval": {"bin_edges": [0, 100, 200]}}
    assert parse_override("crf.spatial_term=true") == {"crf": {"spatial_term": True}}


def newest(out, prefix):
    return sorted(Path(out).glob(f"{prefix}-*"))[-1]


@pytest.fixture(scope="module")
def gen_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    assert cli.main(["gen", "--seed", "3", "--override", "frames=3", "--out", str(out)]) == 0
    return out, newest(out, "gen")


def test_gen_refine_eval_plan(gen_run):
    out, gen_dir = gen_run
    assert (gen_dir / "dataset" / "manifest.json").is_file()
    assert (gen_dir / "config.yaml").is_file() and (gen_dir / "run.json").is_file()
    assert cli.main(["refine", "--input", str(gen_dir / "dataset"), "--out", str(out)]) == 0
    ref_dir = newest(out, "refine")
    pairs = (ref_dir / "pairs.jsonl").read_text().splitlines()
    # every generated target passes the range and visibility filter
    assert len(pairs) == 3 * 12
    assert cli.main(["eval", "--input", str(ref_dir / "pairs.jsonl"), "--out", str(out)]) == 0
    ev = newest(out, "eval")
    report = MetricsReport.from_json((ev / "report.json").read_text())
    assert report.n == 36
    bins = (ev / "bins.csv").read_text().splitlines()
    assert len(bins) == 1 + 4
    assert cli.main(["plan", "--input", str(ref_dir / "detections.jsonl"), "--out", str(out)]) == 0
    pl = newest(out, "plan")
    plan = json.loads((pl / "plan.json").read_text())
    occ_rows = (pl / "bev_occupied.csv").read_text().splitlines()[1:]
    path_rows = (pl / "path.csv").read_text().splitlines()[1:]
    assert len(occ_rows) == len(plan["grid"]["occupied"])
    assert len(path_rows) == len(plan["path"]["cells"])


def test_eval_missing_input_exits_2(tmp_path, capsys):
    assert cli.main(["eval", "--input", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 2
    assert "does not exist" in capsys.readouterr().err
    assert cli.main(["eval", "--out", str(tmp_path)]) == 2
    assert cli.main(["gen", "--override", "crf.sigma_f=-1", "--out", str(tmp_path)]) == 2


def test_pipeline_error_leaves_marker(tmp_path):
    bad = tmp_path / "ds"
    bad.mkdir()
    status = cli.main(["refine", "--input", str(bad), "--out", str(tmp_path / "runs")])
    assert status == 1
    run_dir = newest(tmp_path / "runs", "refine")
    assert (run_dir / "FAILED").is_file()
    assert not list(run_dir.glob("*.part"))


def test_unreachable_plan_exits_1(tmp_path):
    # a row of obstacles at z = 20 m spanning the whole grid width blocks the goal
    fx, cx, depth = 720.0, 621.0, 20.0
    lines = []
    for x in range(-20, 21, 2):
        u = cx + x * fx / depth
        width_px = 2 * 1.5 * fx / depth
        lines.append(json.dumps({"frame_id": "000000", "center": [u, 187.5],
                                 "bbox": [u - width_px / 2, 150, u + width_px / 2, 220], "depth_m": depth}))
    rows = tmp_path / "d.jsonl"
    rows.write_text("\n".join(lines) + "\n")
    status = cli.main(["plan", "--input", str(rows), "--out", str(tmp_path / "runs")])
    assert status == 1
    run_dir = newest(tmp_path / "runs", "plan")
    plan = json.loads((run_dir / "plan.json").read_text())
    assert plan["status"] == "unreachable" and plan["path"] is None
    assert (run_dir / "FAILED").is_file()


def test_worker_cap(monkeypatch):
    cfg = parse_config(overrides=["workers=8"])
    monkeypatch.setenv("CENTERDEPTH_THREADS", "2")
    assert cli.worker_count(cfg) == 2
    monkeypatch.delenv("CENTERDEPTH_THREADS")
    assert cli.worker_count(cfg) == 8


def test_refine_with_external_predictions(gen_run, tmp_path):
    from centerdepth.raster import write_raster
    from centerdepth.scene import load_dataset

    out, gen_dir = gen_run
    pred_dir = tmp_path / "pred"
    pred_dir.mkdir()
    for fr in load_dataset(gen_dir / "dataset"):
        write_raster(pred_dir / f"{fr.frame_id}.pred.f32", fr.depth)
    status = cli.main(["refine", "--input", str(gen_dir / "dataset"), "--out", str(tmp_path / "r"),
                       "--override", f"refine.unary={pred_dir}"])
    assert status == 0
    rows = [json.loads(l) for l in (newest(tmp_path / "r", "refine") / "detections.jsonl").read_text().splitlines()]
    # exact predictions leave the raw center reading equal to ground truth
    assert all(r["raw_m"] == r["gt_m"] for r in rows)

"""``centerdepth <gen|refine|eval|plan|demo>`` command-line entry point.

Every run writes into a fresh timestamped directory under ``--out`` holding
the echoed config (``config.yaml``), ``run.json`` (the only file carrying
timestamps) and the command's artifacts. A failed run leaves a ``FAILED``
marker; artifacts are written to a temporary name and renamed into place, so
no truncated file is ever left under its final name.
"""
import argparse
import csv
import io
import json
import logging
import os
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .bev import GridSpec, astar, detection_to_bev, export_plan, nearest_free_cell, rasterize_obstacles
from .camera import MAX_RANGE, filter_targets
from .config import dump_config, parse_config
from .errors import CenterDepthError, ConfigError, IoFailure, Unreachable
from .metrics import build_report, read_pairs
from .pipeline import corrupt_unary, frame_detections, refine_frame
from .raster import read_raster
from .scene import emit_dataset, generate_frames, load_dataset

log = logging.getLogger("centerdepth")

COMMANDS = ("gen", "refine", "eval", "plan", "demo")
EXIT_OK, EXIT_PIPELINE, EXIT_USAGE = 0, 1, 2


def worker_count(cfg):
    cap = os.environ.get("CENTERDEPTH_THREADS")
    n = cfg.workers
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def write_artifact(path, data):
    """Write bytes or text atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    if isinstance(data, str):
        data = data.encode()
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(path, e.strerror or str(e)) from e


def _jsonl(rows):
    return "".join(json.dumps(r) + "\n" for r in rows)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# plot data
# --------------------------------------------------------------------------

def emit_plot_data(out_dir, report=None, grid=None, path=None, points=(), prefix=""):
    """Delimited-text series for plotting; returns the written file names."""
    out_dir = Path(out_dir)
    written = []
    if report is not None:
        edges = report.bin_edges
        rows = [
            [label, edges[i], edges[i + 1], "" if s.mae is None else repr(s.mae), s.count]
            for i, (label, s) in enumerate(report.per_bin_mae.items())
        ]
        name = f"{prefix}bins.csv"
        write_artifact(out_dir / name, _csv(["bin", "lo_m", "hi_m", "mae_m", "count"], rows))
        written.append(name)
    if grid is not None:
        spec = grid.spec
        occ = [spec.cell_center(int(r), int(c)) for r, c in zip(*grid.cells.nonzero())]
        write_artifact(out_dir / "bev_occupied.csv", _csv(["x_m", "z_m"], [[repr(x), repr(z)] for x, z in occ]))
        write_artifact(
            out_dir / "bev_obstacles.csv",
            _csv(["x_m", "z_m", "radius_m"], [[repr(p.x), repr(p.z), repr(p.radius)] for p in points]),
        )
        written += ["bev_occupied.csv", "bev_obstacles.csv"]
        if path is not None:
            poly = [spec.cell_center(r, c) for r, c in path.cells]
            write_artifact(out_dir / "path.csv", _csv(["x_m", "z_m"], [[repr(x), repr(z)] for x, z in poly]))
            written.append("path.csv")
    return written


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_gen(cfg, run_dir):
    frames = generate_frames(cfg.scene, cfg.frames, worker_count(cfg))
    _emit(frames, run_dir / "dataset")
    log.info("wrote %d frames to %s", len(frames), run_dir / "dataset")
    return frames


def _emit(frames, target):
    staging = target.with_name(target.name + ".part")
    emit_dataset(frames, staging)
    os.replace(staging, target)


def _unary_for(cfg, frame):
    source = cfg.refine.unary
    if source == "noisy_gt":
        return corrupt_unary(frame, cfg.refine.unary_noise, cfg.seed, int(frame.frame_id), cfg.scene.background_depth)
    if source == "gt":
        return frame.depth.astype("float64")
    return read_raster(Path(source) / f"{frame.frame_id}.pred.f32").astype("float64")


def refine_frames(cfg, frames):
    def one(frame):
        keep = {id(a) for a in filter_targets(frame.annotations, MAX_RANGE, cfg.scene.min_visibility)}
        dets = [
            d for d in frame_detections(frame, cfg.refine.detections, cfg.refine.score_threshold, cfg.refine.window)
            if id(frame.annotations[d.target_id]) in keep
        ]
        return refine_frame(frame, dets, _unary_for(cfg, frame), cfg.crf)

    return [r for rs in _map(one, frames, worker_count(cfg)) for r in rs]


def _write_refined(run_dir, results):
    write_artifact(run_dir / "detections.jsonl", _jsonl(r.to_dict() for r in results))
    write_artifact(run_dir / "pairs.jsonl", _jsonl(r.pair().to_dict() for r in results))
    write_artifact(run_dir / "pairs_raw.jsonl", _jsonl(r.pair(refined=False).to_dict() for r in results))


def cmd_refine(cfg, run_dir):
    frames = load_dataset(cfg.refine.dataset)
    results = refine_frames(cfg, frames)
    _write_refined(run_dir, results)
    log.info("refined %d targets from %d frames", len(results), len(frames))
    return results


def _report(cfg, pairs):
    e = cfg.eval
    return build_report(pairs, e.threshold, e.bin_edges, e.symmetric)


def _write_report(run_dir, report, prefix=""):
    write_artifact(run_dir / f"{prefix}report.json", report.to_json())
    write_artifact(run_dir / f"{prefix}report.txt", report.table())
    emit_plot_data(run_dir, report=report, prefix=prefix)


def cmd_eval(cfg, run_dir):
    report = _report(cfg, read_pairs(cfg.eval.pairs))
    _write_report(run_dir, report)
    sys.stdout.write(report.table())
    return report


def plan_from_rows(cfg, rows):
    """BEV grid and A* path for one frame's refined detections."""
    k = cfg.scene.intrinsics
    p = cfg.plan
    points = [
        detection_to_bev(r["center"], r["bbox"][2] - r["bbox"][0], r["depth_m"], k) for r in rows
    ]
    spec = GridSpec(p.resolution, p.x_min, p.x_max, p.z_min, p.z_max)
    grid = rasterize_obstacles(points, spec, p.inflation)
    nz, nx = spec.shape
    clamp = lambda rc: (min(max(rc[0], 0), nz - 1), min(max(rc[1], 0), nx - 1))
    start = nearest_free_cell(grid.cells, clamp(spec.cell_of(*p.start)))
    goal = nearest_free_cell(grid.cells, clamp(spec.cell_of(*p.goal)))
    try:
        path = astar(grid, start, goal)
    except Unreachable:
        path = None
    return points, grid, path, start, goal


def _write_plan(run_dir, frame_id, points, grid, path, start, goal):
    record = export_plan(grid, path, points)
    record.update({"frame_id": frame_id, "start": list(start), "goal": list(goal),
                   "status": "ok" if path is not None else "unreachable"})
    write_artifact(run_dir / "plan.json", json.dumps(record, indent=2) + "\n")
    emit_plot_data(run_dir, grid=grid, path=path, points=points)


def _read_rows(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise IoFailure(path, e.strerror or str(e)) from e
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def cmd_plan(cfg, run_dir):
    rows = _read_rows(cfg.plan.detections)
    if not rows:
        raise CenterDepthError("detections file is empty")
    fid = cfg.plan.frame_id or rows[0]["frame_id"]
    rows = [r for r in rows if r["frame_id"] == fid]
    points, grid, path, start, goal = plan_from_rows(cfg, rows)
    _write_plan(run_dir, fid, points, grid, path, start, goal)
    if path is None:
        raise Unreachable(f"no path from {start} to {goal} in frame {fid}")
    log.info("frame %s: %d obstacles, path cost %.3f", fid, len(points), path.cost)
    return path


def cmd_demo(cfg, run_dir):
    cmd_gen(cfg, run_dir)
    frames = load_dataset(run_dir / "dataset")

    decoded = [len(frame_detections(f, "decoded", cfg.refine.score_threshold, cfg.refine.window)) for f in frames]
    total = sum(len(f.annotations) for f in frames)
    write_artifact(run_dir / "decode.json", json.dumps(
        {"annotations": total, "decoded_matches": sum(decoded), "recall": sum(decoded) / total if total else None},
        indent=2) + "\n")

    results = refine_frames(cfg, frames)
    _write_refined(run_dir, results)
    refined = _report(cfg, [r.pair() for r in results])
    raw = _report(cfg, [r.pair(refined=False) for r in results])
    _write_report(run_dir, refined)
    _write_report(run_dir, raw, prefix="raw_")
    write_artifact(run_dir / "binned_table.txt", binned_table({"center (raw unary)": raw, "center CRF": refined}))

    fid = frames[0].frame_id
    rows = [r.to_dict() for r in results if r.frame_id == fid]
    _write_plan(run_dir, fid, *plan_from_rows(cfg, rows))
    return refined


def binned_table(reports):
    labels = list(next(iter(reports.values())).per_bin_mae)
    width = max(len(k) for k in reports) + 2
    lines = [f"{'method':<{width}}" + "".join(f"{'MAE_' + l:>10}" for l in labels)]
    for name, rep in reports.items():
        cells = "".join(
            f"{'-':>10}" if s.mae is None else f"{s.mae:>10.3f}" for s in rep.per_bin_mae.values()
        )
        lines.append(f"{name:<{width}}" + cells)
    return "\n".join(lines) + "\n"


HANDLERS = {"gen": cmd_gen, "refine": cmd_refine, "eval": cmd_eval, "plan": cmd_plan, "demo": cmd_demo}
REQUIRED_INPUT = {"refine": ("refine", "dataset"), "eval": ("eval", "pairs"), "plan": ("plan", "detections")}


def check_inputs(command, cfg):
    if command not in REQUIRED_INPUT:
        return
    section, key = REQUIRED_INPUT[command]
    value = getattr(getattr(cfg, section), key)
    if not value:
        raise ConfigError(f"{command} needs {section}.{key} (or --input)")
    if not Path(value).exists():
        raise ConfigError(f"{section}.{key}: {value} does not exist")


def make_run_dir(out_root, command):
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(out_root) / f"{command}-{stamp}"
    run_dir, n = base, 1
    while run_dir.exists():
        run_dir = base.with_name(f"{base.name}-{n}")
        n += 1
    run_dir.mkdir(parents=True)
    return run_dir


def run(command, cfg, out_root="runs"):
    """Execute one command; returns ``(exit_status, run_dir)``."""
    try:
        check_inputs(command, cfg)
    except ConfigError as e:
        print(f"centerdepth: {e}", file=sys.stderr)
        return EXIT_USAGE, None
    run_dir = make_run_dir(out_root, command)
    write_artifact(run_dir / "config.yaml", dump_config(cfg))
    started = time.time()
    try:
        HANDLERS[command](cfg, run_dir)
    except (CenterDepthError, OSError, ValueError, KeyError) as e:
        msg = f"{type(e).__name__}: {e}"
        print(f"centerdepth {command}: {msg}", file=sys.stderr)
        (run_dir / "FAILED").write_text(msg + "\n")
        for part in run_dir.glob("*.part"):
            shutil.rmtree(part) if part.is_dir() else part.unlink()
        return EXIT_PIPELINE, run_dir
    finally:
        write_artifact(run_dir / "run.json", json.dumps({
            "command": command, "version": __version__,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "elapsed_s": round(time.time() - started, 3),
        }, indent=2) + "\n")
    return EXIT_OK, run_dir


INPUT_KEY = {"refine": "refine.dataset", "eval": "eval.pairs", "plan": "plan.detections"}


def build_parser():
    p = argparse.ArgumentParser(prog="centerdepth", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="runs", help="parent directory for run directories")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--input", help="shorthand for the command's input path override")
    p.add_argument("--version", action="version", version=__version__)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = list(args.override)
    if args.input:
        if args.command not in INPUT_KEY:
            print(f"centerdepth: {args.command} takes no --input", file=sys.stderr)
            return EXIT_USAGE
        # JSON quoting keeps the path a string when parsed as YAML
        overrides.insert(0, f"{INPUT_KEY[args.command]}={json.dumps(args.input)}")
    try:
        cfg = parse_config(args.config, overrides, args.seed)
    except ConfigError as e:
        print(f"centerdepth: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=cfg.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    status, run_dir = run(args.command, cfg, args.out)
    if run_dir is not None:
        print(run_dir)
    return status


if __name__ == "__main__":
    sys.exit(main())

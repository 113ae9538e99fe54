"""Command-line surface: sample, recall, train, detect, eval, bench, convert."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import benchutil, data_io, evalmetrics, geometry, kitti, sampling
from .config import (
    ExperimentConfig,
    load_experiment_config,
    resolve_out,
    scenes_from_config,
)
from .detector import Detector, write_detections, read_detections
from .errors import ConfigError, DataError, NumericError
from .report import ReportTable
from .train import load_detector_checkpoint, save_detector_checkpoint, train_detector

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


# ---------------------------------------------------------------------------
# helpers


def _oracle_scorer(scene: data_io.LabeledScene, kind: str):
    """Label-derived sampling scores: soft center masks for ctr-aware,
    box-membership indicators for cls-aware."""

    def scorer(subcloud: sampling.PointCloud, _orig, _layer) -> np.ndarray:
        coords = subcloud.coords
        scores = np.zeros(len(coords))
        for b in scene.boxes:
            if kind == "ctr-aware":
                m = geometry.soft_point_masks(coords, b)
            else:
                m = geometry.points_in_box(coords, b).astype(float)
            np.maximum(scores, m, out=scores)
        return scores

    return scorer


def strategy_schedule(base: list[tuple[str, int]], strategy: str) -> list[tuple[str, int]]:
    """Per-row layer strategies: random/d-fps rows use that strategy at every
    layer; feat-fps keeps d-fps in the first layer; the instance-aware rows
    keep d-fps in all but the last two layers."""
    ks = [k for _, k in base]
    n = len(ks)
    if strategy in ("random", "d-fps"):
        return [(strategy, k) for k in ks]
    if strategy == "feat-fps":
        return [("d-fps" if i == 0 else "feat-fps", k) for i, k in enumerate(ks)]
    if strategy in ("cls-aware", "ctr-aware"):
        return [("d-fps" if i < n - 2 else strategy, k) for i, k in enumerate(ks)]
    raise ConfigError(f"unknown strategy {strategy!r}")


def _with_features(cloud: sampling.PointCloud) -> sampling.PointCloud:
    """Attach coordinate(+intensity) features so feat-fps is runnable on raw
    clouds."""
    if cloud.features is not None:
        return cloud
    cols = [cloud.coords]
    if cloud.intensity is not None:
        cols.append(cloud.intensity.reshape(-1, 1))
    return sampling.PointCloud(cloud.coords, cloud.intensity, np.column_stack(cols))


def _write_table(table: ReportTable, out: str, fmt: str) -> None:
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table.emit(fmt))


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(cfg: ExperimentConfig, args) -> int:
    scenes = scenes_from_config(cfg)
    cloud = _with_features(scenes[0].cloud)
    n = len(cloud)
    k = min(cfg.bench_k, n)
    out_dir = Path(resolve_out(cfg, args.out))
    out_dir.mkdir(parents=True, exist_ok=True)

    table = ReportTable(f"sampling {n}->{k}", ["median_ms", "p95_ms", "peak_mb"])
    for strategy in cfg.strategies:
        if strategy == "random":
            fn = lambda: sampling.sample_random(cloud, k, cfg.seed)
        elif strategy == "d-fps":
            fn = lambda: sampling.sample_dfps(cloud, k)
        elif strategy == "feat-fps":
            fn = lambda: sampling.sample_featfps(cloud, k)
        elif strategy in ("cls-aware", "ctr-aware"):
            scores = _oracle_scorer(scenes[0], strategy)(cloud, None, 0)
            fn = lambda: sampling.sample_topk(scores, k)
        else:
            raise ConfigError(f"unknown strategy {strategy!r}")
        outcome = fn()
        stats = benchutil.time_callable(fn, warmup=3, reps=10)
        peak = benchutil.peak_allocation(fn)
        table.add_row(strategy, [stats["median_ms"], stats["p95_ms"], peak / 2**20])
        payload = {
            "strategy": strategy,
            "seed": cfg.seed,
            "k": k,
            "indices": outcome.indices.tolist(),
        }
        (out_dir / f"outcome_{strategy}.json").write_text(
            json.dumps(payload, sort_keys=True) + "\n"
        )
    _write_table(table, str(out_dir / f"timing.{args.format}"), args.format)
    print(table.emit(args.format))
    return EXIT_OK


def cmd_recall(cfg: ExperimentConfig, args) -> int:
    scenes = scenes_from_config(cfg)
    for scene in scenes:
        if not scene.boxes:
            raise DataError(f"frame {scene.frame_id}: recall needs labeled scenes")
    class_names = data_io.CLASS_NAMES
    layer_ks = [k for _, k in cfg.schedule]
    columns = [f"{k}p:{name}" for k in layer_ks for name in class_names]
    table = ReportTable("instance recall", columns)

    def one_scene(scene, strategy):
        schedule = strategy_schedule(cfg.schedule, strategy)
        cloud = _with_features(scene.cloud)
        scorer = _oracle_scorer(scene, strategy) if strategy in sampling.TOPK_STRATEGIES else None
        outcomes = sampling.run_schedule(cloud, schedule, scorer=scorer, seed=cfg.seed)
        row = []
        for outcome in outcomes:
            report = sampling.instance_recall(scene, outcome, cfg.min_recall_points)
            row.extend(report.per_class.get(c, float("nan")) for c in range(len(class_names)))
        return row

    for strategy in cfg.strategies:
        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                rows = list(pool.map(lambda s: one_scene(s, strategy), scenes))
        else:
            rows = [one_scene(s, strategy) for s in scenes]
        mean = np.nanmean(np.asarray(rows, dtype=float), axis=0)
        table.add_row(strategy, [float(v) for v in mean])

    out = resolve_out(cfg, args.out)
    _write_table(table, out, args.format)
    print(table.emit(args.format))
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, args) -> int:
    scenes = scenes_from_config(cfg)
    if cfg.augment is not None:
        bank = data_io.extract_bank(scenes, cfg.augment.min_paste_points)
        scenes = [
            data_io.augment(s, cfg.augment, bank, seed=cfg.seed + i)[0]
            for i, s in enumerate(scenes)
        ]
    out = resolve_out(cfg, args.out)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    log_path = out + ".log.jsonl"

    if args.resume:
        detector, meta, opt_arrays = load_detector_checkpoint(args.resume)
        detector, opt, _ = train_detector(
            scenes, steps=cfg.train_steps, seed=int(meta["train_seed"]),
            peak_lr=float(meta["peak_lr"]), log_path=log_path, detector=detector,
            optimizer_state=opt_arrays, start_step=int(meta["step"]),
            total_steps=int(meta["total_steps"]),
        )
        step = int(meta["step"]) + cfg.train_steps
        total = int(meta["total_steps"])
        peak_lr = float(meta["peak_lr"])
        train_seed = int(meta["train_seed"])
    else:
        detector, opt, _ = train_detector(
            scenes, cfg.detector_config(), steps=cfg.train_steps, seed=cfg.seed,
            peak_lr=cfg.peak_lr, log_path=log_path,
        )
        step = total = cfg.train_steps
        peak_lr = cfg.peak_lr
        train_seed = cfg.seed
    save_detector_checkpoint(out, detector, opt, step=step, total_steps=total,
                             peak_lr=peak_lr, train_seed=train_seed)
    print(f"checkpoint written to {out} after {step} steps (log: {log_path})")
    return EXIT_OK


def cmd_detect(cfg: ExperimentConfig, args) -> int:
    detector, _meta, _opt = load_detector_checkpoint(args.checkpoint)
    scenes = scenes_from_config(cfg)
    out = resolve_out(cfg, args.out)
    Path(out).parent.mkdir(parents=True, exist_ok=True)

    def run(scene):
        return scene.frame_id, detector.detect(scene.cloud, seed=cfg.seed)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run, scenes))
    else:
        results = [run(s) for s in scenes]
    Path(out).write_text("")
    for frame_id, proposals in results:
        write_detections(out, frame_id, proposals, detector.config.class_names, append=True)
    print(f"{sum(len(p) for _, p in results)} detections over {len(results)} frames -> {out}")
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    detections = read_detections(args.detections)
    scenes = scenes_from_config(cfg)
    ground_truth = {s.frame_id: s.boxes for s in scenes}
    for frame in detections:
        if frame not in ground_truth:
            raise DataError(f"detections reference unknown frame {frame!r}")
    positions = args.positions or cfg.ap_positions
    results = evalmetrics.evaluate_detections(
        detections, ground_truth, cfg.iou_thresholds, positions=positions
    )
    table = ReportTable(f"AP@{positions}", ["ap", "recall", "matched", "total_gt"])
    for c, res in results.items():
        table.add_row(data_io.CLASS_NAMES[c],
                      [res.ap, res.recall, float(res.matched), float(res.total_gt)])
    out = resolve_out(cfg, args.out)
    _write_table(table, out, args.format)
    print(table.emit(args.format))
    return EXIT_OK


def cmd_bench(cfg: ExperimentConfig, args) -> int:
    rng = np.random.default_rng(cfg.seed)
    table = ReportTable("micro-benchmarks", ["median_ms", "p95_ms"])

    for n in cfg.bench_sizes:
        k = min(cfg.bench_k, n)
        coords = rng.uniform(-20, 20, size=(n, 3))
        cloud = sampling.PointCloud(coords, features=coords.copy())
        scores = rng.uniform(size=n)
        timings = {}
        for name, fn in [
            ("random", lambda: sampling.sample_random(cloud, k, cfg.seed)),
            ("d-fps", lambda: sampling.sample_dfps(cloud, k)),
            ("feat-fps", lambda: sampling.sample_featfps(cloud, k)),
            ("top-k", lambda: sampling.sample_topk(scores, k)),
        ]:
            stats = benchutil.time_callable(fn, warmup=2, reps=10)
            timings[name] = stats
            table.add_row(f"sample/{name}@{n}->{k}", [stats["median_ms"], stats["p95_ms"]])
        speedup = timings["d-fps"]["median_ms"] / max(timings["top-k"]["median_ms"], 1e-9)
        table.add_row(f"sample/dfps_over_topk_speedup@{n}", [speedup, speedup])

    from . import neighborhood
    coords = rng.uniform(-10, 10, size=(2000, 3))
    cloud = sampling.PointCloud(coords)
    centers = coords[rng.choice(2000, 128, replace=False)]
    stats = benchutil.time_callable(
        lambda: neighborhood.ball_query(cloud, centers, 0.8, 16), warmup=2, reps=10
    )
    table.add_row("ball_query@2000x128", [stats["median_ms"], stats["p95_ms"]])

    boxes = [
        geometry.Box7(*rng.uniform(-5, 5, 2), 0.0, *rng.uniform(1, 4, 3), rng.uniform(-3, 3))
        for _ in range(100)
    ]
    pairs = [(boxes[i], boxes[(i * 7 + 1) % 100]) for i in range(100)]
    stats = benchutil.time_callable(
        lambda: [geometry.iou_3d(a, b) for a, b in pairs], warmup=2, reps=10
    )
    table.add_row("iou_3d@100pairs", [stats["median_ms"], stats["p95_ms"]])

    scored = [geometry.ScoredBox(b, float(s)) for b, s in zip(boxes, rng.uniform(size=100))]
    stats = benchutil.time_callable(
        lambda: geometry.nms_3d(scored, 0.1), warmup=2, reps=10
    )
    table.add_row("nms_3d@100", [stats["median_ms"], stats["p95_ms"]])

    out = resolve_out(cfg, args.out)
    _write_table(table, out, args.format)
    print(table.emit(args.format))
    return EXIT_OK


def cmd_convert(cfg: ExperimentConfig, args) -> int:
    label_dir, calib_dir = Path(args.labels), Path(args.calib)
    out_dir = Path(resolve_out(cfg, args.out))
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for label_path in sorted(label_dir.glob("*.txt")):
        calib_path = calib_dir / label_path.name
        if not calib_path.exists():
            raise DataError(f"missing calibration file {calib_path}")
        boxes = kitti.convert_label_file(label_path, calib_path)
        data_io.write_scene_labels(out_dir / label_path.name, boxes)
        count += 1
    print(f"converted {count} label files -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointdet",
        description="Instance-aware point-cloud downsampling and toy 3D detection experiments.",
    )
    parser.add_argument("--config", help="experiment config JSON (schema pointdet/v1)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output path (also POINTDET_OUT)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--threads", type=int, default=1)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("sample", help="run sampling strategies, emit outcomes + timings")
    sub.add_parser("recall", help="per-strategy per-layer per-class instance recall table")
    p_train = sub.add_parser("train", help="train the toy detector end to end")
    p_train.add_argument("--resume", help="checkpoint to resume from")
    p_detect = sub.add_parser("detect", help="run detection with a checkpoint")
    p_detect.add_argument("--checkpoint", required=True)
    p_eval = sub.add_parser("eval", help="AP/recall table from a detections file")
    p_eval.add_argument("--detections", required=True)
    p_eval.add_argument("--positions", type=int, choices=(11, 40))
    sub.add_parser("bench", help="micro-benchmarks: sampling, ball query, IoU, NMS")
    p_conv = sub.add_parser("convert", help="KITTI camera-frame labels -> native labels")
    p_conv.add_argument("--labels", required=True)
    p_conv.add_argument("--calib", required=True)
    return parser


COMMANDS = {
    "sample": cmd_sample,
    "recall": cmd_recall,
    "train": cmd_train,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "convert": cmd_convert,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            cfg = load_experiment_config(args.config)
        else:
            cfg = ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

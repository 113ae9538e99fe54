#!/usr/bin/env python3
"""Overfit the toy detector on a handful of fixed scenes and report AP/recall.

Sanity-checks the full pipeline end to end: scene generation, context-aware
target assignment, training, decoding, NMS, and AP evaluation. With the
defaults the detector reaches AP 1.0 on all three classes in about six
minutes on one core.
"""

import argparse
import sys
import time

from pointdet import evalmetrics
from pointdet.data_io import SceneGenSpec, generate_scene
from pointdet.detector import toy_config
from pointdet.train import save_detector_checkpoint, train_detector


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenes", type=int, default=5)
    parser.add_argument("--steps", type=int, default=1500)
    parser.add_argument("--peak-lr", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=100,
                        help="seed of the first scene; scene i uses seed+i")
    parser.add_argument("--checkpoint", help="optional path to save the model")
    args = parser.parse_args()

    scenes = [
        generate_scene(
            SceneGenSpec(extent=14.0, background_points=900,
                         instances_per_class=((1, 2), (1, 2), (1, 2)),
                         points_per_instance=(60, 120), seed=args.seed + i),
            frame_id=str(i))
        for i in range(args.scenes)
    ]

    t0 = time.time()
    detector, _opt, breakdowns = train_detector(
        scenes, toy_config(), steps=args.steps, seed=0, peak_lr=args.peak_lr)
    print(f"trained {args.steps} steps in {time.time() - t0:.0f}s "
          f"(loss {breakdowns[0].total:.1f} -> {breakdowns[-1].total:.2f})")

    dets = {s.frame_id: [(p.box, p.score) for p in detector.detect(s.cloud, seed=0)]
            for s in scenes}
    gts = {s.frame_id: s.boxes for s in scenes}
    results = evalmetrics.evaluate_detections(dets, gts, (0.5, 0.5, 0.5))
    for cls, r in sorted(results.items()):
        print(f"class {cls}: ap={r.ap:.3f} recall={r.recall:.3f} "
              f"gt={r.total_gt}")

    if args.checkpoint:
        save_detector_checkpoint(args.checkpoint, detector,
                                 meta={"step": args.steps})
        print(f"checkpoint written to {args.checkpoint}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Compare instance recall of sampling strategies on generated scenes.

Writes a per-class recall table (rows = strategies) to --out. This is a thin
wrapper around the `pointdet recall` subcommand with a config built from
command-line knobs instead of a JSON file.
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from pointdet.cli import main as cli_main
from pointdet.config import SCHEMA_ID


def build_config(args) -> dict:
    return {
        "schema": SCHEMA_ID,
        "seed": args.seed,
        "num_scenes": args.scenes,
        "schedule": [["d-fps", 4096], ["d-fps", 1024], ["ctr-aware", 512],
                     ["ctr-aware", 256]],
        "strategies": ["random", "d-fps", "feat-fps", "ctr-aware"],
        "scene_gen": {
            "extent": args.extent,
            "background_points": args.background,
            "instances_per_class": [[2, 4], [2, 4], [2, 4]],
            "points_per_instance": [40, 120],
        },
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output table path")
    parser.add_argument("--scenes", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--extent", type=float, default=40.0)
    parser.add_argument("--background", type=int, default=16000)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as td:
        cfg = Path(td) / "cfg.json"
        cfg.write_text(json.dumps(build_config(args)))
        return cli_main(["--config", str(cfg), "--out", args.out,
                         "--format", args.format, "recall"])


if __name__ == "__main__":
    sys.exit(main())

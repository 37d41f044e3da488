#!/usr/bin/env python3
"""Average band metrics over several seeds for one preset/method pair."""

import argparse
import json
from pathlib import Path

import numpy as np

from deuq import experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="linear_ode")
    parser.add_argument("--method", default="bbb")
    parser.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2])
    parser.add_argument("--out", default="runs/sweep")
    args = parser.parse_args()

    reports = []
    for seed in args.seeds:
        config = experiment.ExperimentConfig(
            preset=args.preset, method=args.method, seed=seed, output_dir=args.out,
        )
        paths = experiment.run(config)
        reports.append(json.loads(Path(paths.report_json).read_text()))
        print(f"seed {seed}: inflation={reports[-1]['inflation_ratio']:.2f} "
              f"coverage={reports[-1]['coverage_k2']:.3f}")

    keys = ("coverage_k2", "inflation_ratio", "mean_std_train", "rmse_train")
    print("\nmean over seeds:")
    for key in keys:
        print(f"  {key}: {np.mean([r[key] for r in reports]):.4g}")


if __name__ == "__main__":
    main()

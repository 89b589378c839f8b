#!/usr/bin/env python3
"""Run a mode/algorithm comparison sweep and write records.csv + report.txt.

Without --config this runs the default comparison: CEM and random search on
four noisy phantoms, three seeds each. Pass a `key = value` config file to
change anything (see vesselreg.harness.SweepConfig for the schema), e.g.:

    cases = 10
    modes = search, online
    algorithms = cem, grid, ppo
    seeds = 0, 1, 2
    timesteps = 2000, 10000
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vesselreg.harness import SweepConfig, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="sweep config file; defaults to the built-in comparison")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--seeds", type=int, default=None, help="shortcut: use seeds 0..N-1")
    args = parser.parse_args()

    if args.config:
        cfg = SweepConfig.from_file(args.config)
    else:
        cfg = SweepConfig(seeds=[0, 1, 2])
    if args.seeds is not None:
        cfg.seeds = list(range(args.seeds))

    report = run_experiment(cfg)
    report.save(args.out_dir)
    sys.stdout.write(report.format_table())
    print(f"\nwrote {Path(args.out_dir) / 'records.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

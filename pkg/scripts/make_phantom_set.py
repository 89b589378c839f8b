#!/usr/bin/env python3
"""Generate the standard phantom corpora used by the evaluation suite.

Presets:
  recovery  20 noiseless full-fill cases (self-registration benchmark)
  learning  10 noisy partial-fill cases with gantry-informed rotation offsets
            (online-learning benchmark)
  demo      3 mixed cases at service-friendly resolution for the annotator UI

Cases land in one directory per case (volume.bvol, dsa.pgm, case.meta,
truth.pose) and can be served directly with `vesselreg serve`.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vesselreg.cases import save_case
from vesselreg.phantom import CaseSampler, make_case


def sampler_for(preset: str) -> tuple[CaseSampler, int]:
    if preset == "recovery":
        return CaseSampler().compact().noiseless(), 20
    if preset == "learning":
        s = CaseSampler().compact()
        s.noise_sigma = 0.03
        s.fill_range = (0.7, 0.7)
        s.max_streaks = 0
        s.offset_r_deg = 3.0
        return s, 10
    if preset == "demo":
        s = CaseSampler(image_dim=256, offset_t_px=12.0, offset_r_deg=6.0)
        s.noise_sigma = 0.02
        return s, 3
    raise SystemExit(f"unknown preset {preset!r}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("preset", choices=("recovery", "learning", "demo"))
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--count", type=int, default=None, help="override the preset's case count")
    parser.add_argument("--seed-start", type=int, default=0)
    args = parser.parse_args()

    sampler, default_count = sampler_for(args.preset)
    count = args.count if args.count is not None else default_count
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        case = make_case(args.seed_start + i, sampler)
        case_dir = save_case(case, out / case.case_id)
        print(f"wrote {case_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Run the preset scaling studies and write one report directory per study.

    python3 scripts/run_scaling.py --trials 20 --out results/scaling
    python3 scripts/run_scaling.py gmm gmm_dimension --trials 5
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from contraction_lab.harness import emit_report, fit_rate_exponent, run_scaling_study
from contraction_lab.presets import STUDIES, preset_study

# exponent windows used to grade each preset
WINDOWS = {
    "logistic": (-0.60, -0.40),
    "single_index": (-0.33, -0.17),
    "gmm": (-0.33, -0.17),
    "gmm_dimension": (0.12, 0.40),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("studies", nargs="*", default=list(WINDOWS), help=f"any of {sorted(STUDIES)}")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", default="results/scaling")
    args = ap.parse_args(argv)

    bad = 0
    for name in args.studies:
        cfg = preset_study(name, trials=args.trials, master_seed=args.seed)
        out = Path(args.out) / name
        cfg = replace(cfg, output_dir=str(out))
        t0 = time.perf_counter()
        table = run_scaling_study(cfg)
        fit = fit_rate_exponent(table)
        emit_report(table, [fit], out)
        lo, hi = WINDOWS.get(name, (-float("inf"), float("inf")))
        ok = lo <= fit.slope <= hi
        bad += not ok
        print(
            f"{name:>14s}  exponent={fit.slope:+.4f} +- {fit.stderr:.4f}  window=[{lo}, {hi}]  "
            f"{'ok' if ok else 'OUT'}  {time.perf_counter() - t0:.0f}s  -> {out}"
        )
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())

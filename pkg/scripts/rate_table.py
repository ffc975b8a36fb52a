"""Predicted contraction radius z*(n) for each preset profile, with the
fitted log-log slope in n.

    python3 scripts/rate_table.py --d 4 --delta 0.1
"""

import argparse
import math
import sys

import numpy as np

from contraction_lab.perturbation import ols_slope
from contraction_lab.rate_theory import perturbation_level, preset_profile, solve_rate_equation, tail_const_term


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--B", type=float, default=0.0)
    args = ap.parse_args(argv)

    ns = [int(v) for v in np.geomspace(1e3, 1e7, 9)]
    print("n".rjust(10) + "".join(name.rjust(14) for name in ("logistic", "single_index", "gmm")))
    cols = {name: [] for name in ("logistic", "single_index", "gmm")}
    for n in ns:
        eps = perturbation_level(args.d, n, args.delta)
        const = tail_const_term(args.d, n, args.delta, args.B)
        line = f"{n:10d}"
        for name in cols:
            z = solve_rate_equation(preset_profile(name, n=n, p=2), eps, const).z_star
            cols[name].append(z)
            line += f"{z:14.6g}"
        print(line)
    print("slope".rjust(10) + "".join(f"{ols_slope(np.log(ns), np.log(v)).slope:14.4f}" for v in cols.values()))
    print(f"(log n range {math.log10(ns[0]):.0f}..{math.log10(ns[-1]):.0f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Tabulate the profile checks for every preset model."""

import argparse
import json
import sys

import numpy as np

from contraction_lab.presets import default_model
from contraction_lab.rate_theory import (
    check_profile_inequalities,
    check_growth_limit,
    check_weak_concavity,
    gmm_profile,
    logistic_profile,
    perturbation_level,
    profile_shape_report,
    single_index_profile,
    strongly_concave_profile,
)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--json", help="dump every report to this file")
    args = ap.parse_args(argv)

    cases = [
        ("gaussian_location", 3, strongly_concave_profile()),
        ("logistic", 3, logistic_profile()),
        ("single_index", 4, single_index_profile(2)),
        ("gmm", 4, gmm_profile(args.n)),
    ]
    grid = np.logspace(-3, 3, 241)
    dump = {}
    print(f"{'model':>18s} {'shape':>6s} {'ineq':>5s} {'growth lim':>11s} {'concavity':>10s} {'c1_hat':>9s}")
    for kind, d, prof in cases:
        spec = default_model(kind, d)
        shape = profile_shape_report(prof)
        ineq = check_profile_inequalities(prof, grid)
        growth = check_growth_limit(prof, perturbation_level(d, args.n, args.delta))
        conc = check_weak_concavity(spec, prof)
        c1 = conc.constants.get("c1_hat") or conc.constants.get("mu_hat")
        print(
            f"{kind:>18s} {'ok' if all(shape.values()) else 'no':>6s} {'ok' if ineq.passed() else 'no':>5s} "
            f"{growth.liminf:11.6f} {'ok' if conc.passed() else 'no':>10s} {c1:9.4f}"
        )
        for k, v in ineq.verdicts.items():
            if not v:
                print(f"{'':>18s}   fails {k}")
        dump[kind] = {"shape": shape, "ineq": ineq.to_dict(), "growth_liminf": growth.liminf, "concavity": conc.to_dict()}
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(dump, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())

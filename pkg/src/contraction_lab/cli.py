"""``contraction-lab`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ContractionLabError
from .harness import (
    dump_study_config,
    emit_report,
    fit_rate_exponent,
    load_report,
    load_study_config,
    run_scaling_study,
)
from .langevin import DiffusionConfig, estimate_moment_radius, estimate_quantile_radius, save_trajectory, simulate_chains
from .model_zoo import ModelKind, PriorSpec, generate_dataset, load_dataset, parse_kind, posterior_oracle
from .perturbation import deviation_grid, fit_envelope, fit_radius_slope
from .presets import default_model, preset_study
from .rate_theory import (
    RateProfile,
    check_profile_inequalities,
    check_growth_limit,
    check_weak_concavity,
    power_law_bound,
    gmm_profile,
    moment_const_term,
    perturbation_level,
    power_profile,
    preset_profile,
    profile_shape_report,
    solve_rate_equation,
    strongly_concave_profile,
    tail_const_term,
)

log = logging.getLogger("contraction_lab")

# small-radius power forms (alpha, beta) of the preset profiles
POWER_FORMS = {"logistic": (2.0, 0.0), "gmm": (4.0, 1.0), "strongly_concave": (2.0, 0.0)}


def _int_list(text: str) -> list[int]:
    return [int(float(v)) for v in text.split(",") if v.strip()]


def _float_grid(text: str) -> list[float]:
    """``lo:hi:count`` (inclusive linspace) or a comma list."""
    if ":" in text:
        lo, hi, count = text.split(":")
        return [float(v) for v in np.linspace(float(lo), float(hi), int(count))]
    return [float(v) for v in text.split(",") if v.strip()]


def _add_model_args(p, need_n=True):
    p.add_argument("--model", required=True, help="logistic | single_index | gmm | gaussian_location")
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--p", type=int, default=2, help="single-index degree")
    if need_n:
        p.add_argument("--n", type=int, default=1000)


def _profile_for(args) -> RateProfile:
    if args.profile_json:
        return RateProfile.from_dict(json.loads(Path(args.profile_json).read_text()))
    if args.profile == "power":
        return power_profile(args.alpha, args.beta)
    return preset_profile(args.profile, n=args.n, p=args.p)


def cmd_simulate(args) -> int:
    if args.data:
        spec, data = load_dataset(args.data)
    else:
        spec = default_model(args.model, args.d, args.p)
        data = generate_dataset(spec, args.n, args.seed)
    prior = PriorSpec.isotropic(spec.d, args.prior_scale)
    cfg = DiffusionConfig(
        step_size=args.step_size,
        n_steps=args.steps,
        burn_in=args.burn_in if args.burn_in is not None else args.steps // 2,
        n_chains=args.chains,
        sampler=args.sampler,
        thinning=args.thinning,
    )
    chains = simulate_chains(posterior_oracle(spec, data, prior), cfg, args.seed)
    if args.out:
        base = Path(args.out)
        base.parent.mkdir(parents=True, exist_ok=True)
        for c in chains:
            save_trajectory(c, base.parent / f"{base.name}_chain{c.chain}")
    rho = estimate_quantile_radius(chains, spec.theta, args.delta)
    mom = estimate_moment_radius(chains, spec.theta, 2.0)
    print(f"model={spec.kind.value} d={spec.d} n={data.n} sampler={cfg.sampler.value} chains={cfg.n_chains}")
    print(f"acceptance={np.mean([c.acceptance_rate for c in chains]):.4f} step_size={np.median([c.step_size for c in chains]):.6g}")
    print(f"rho_quantile(delta={args.delta})={rho.rho:.6g} +- {rho.mc_stderr:.2g}")
    print(f"rho_moment2={mom.rho:.6g}")
    for w in sorted({w for c in chains for w in c.warnings}):
        print(f"warning: {w}")
    return 0


def cmd_solve_rate(args) -> int:
    profile = _profile_for(args)
    eps = args.epsilon if args.epsilon is not None else perturbation_level(args.d, args.n, args.delta)
    if args.const_term is not None:
        const = args.const_term
    elif args.moment is not None:
        const = moment_const_term(args.d, args.n, args.moment, args.B)
    else:
        const = tail_const_term(args.d, args.n, args.delta, args.B)
    sol = solve_rate_equation(profile, eps, const)
    print(f"profile={profile.name} epsilon={eps:.6g} const_term={const:.6g}")
    print(f"z_star={sol.z_star:.12g}")
    print(f"residual={sol.residual:.3e} bracket=[{sol.bracket[0]:.12g}, {sol.bracket[1]:.12g}] iterations={sol.iterations}")
    form = None
    if args.profile == "power":
        form = (args.alpha, args.beta)
    elif profile.name.startswith("single_index"):
        form = (2.0 * args.p, args.p - 1.0)
    else:
        form = POWER_FORMS.get(profile.name)
    if form and form[0] > form[1] + 1:
        cb = power_law_bound(form[0], form[1], args.d, args.n, args.delta, args.B)
        a, b = form
        print(
            f"power_law_bound(alpha={a:g}, beta={b:g}, c=1)={cb.value:.6g} "
            f"exponents=({cb.exponents[0]:.6g}, {cb.exponents[1]:.6g}) selected={cb.selected_exponent:.6g}"
        )
    if args.dump_profile:
        Path(args.dump_profile).write_text(json.dumps(profile.to_dict(), indent=2) + "\n")
    return 0


def cmd_check_assumptions(args) -> int:
    kind = parse_kind(args.model)
    spec = default_model(kind, args.d, args.p)
    if kind is ModelKind.GAUSSIAN_LOCATION:
        profile = strongly_concave_profile()
    elif kind is ModelKind.OVERSPEC_GMM:
        profile = gmm_profile(args.n)
    else:
        profile = preset_profile(kind.value, n=args.n, p=args.p)
    grid = np.logspace(-3, 3, args.grid_points)
    ineq = check_profile_inequalities(profile, grid)
    eps = perturbation_level(spec.d, args.n, args.delta)
    growth = check_growth_limit(profile, eps)
    conc = check_weak_concavity(spec, profile)
    shape = profile_shape_report(profile)
    doc = {
        "profile": profile.to_dict(),
        "shape": shape,
        "ineq": ineq.to_dict(),
        "growth": {"holds": growth.holds, "liminf": growth.liminf, "ratios": list(growth.ratios), "monotone": growth.monotone, "epsilon": eps},
        "concavity": conc.to_dict(),
    }
    print(f"profile={profile.name}")
    for k, v in shape.items():
        print(f"  shape {k}: {'pass' if v else 'FAIL'}")
    for k, v in ineq.verdicts.items():
        print(f"  inequalities {k}: {'pass' if v else 'FAIL'}")
    print(f"  growth ratios={['%.6g' % r for r in growth.ratios]} liminf={growth.liminf:.6g} epsilon={eps:.4g}: {'pass' if growth.holds else 'FAIL'}")
    print(f"  {conc.name} inner-product bound: {'pass' if conc.verdicts['inner_product_bound'] else 'FAIL'}")
    for k, v in conc.constants.items():
        if v is not None:
            print(f"    {k}={v:.6g}")
    for note in ineq.notes + conc.notes:
        print(f"  note: {note}")
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_perturbation(args) -> int:
    spec = default_model(args.model, args.d, args.p)
    n_grid = _int_list(args.n_grid)
    r_grid = _float_grid(args.r_grid)
    est = deviation_grid(spec, n_grid, r_grid, args.seed, args.probes, datasets=args.datasets)
    lines = ["n,r,value,probes,seed"] + [f"{e.n},{e.r!r},{e.value!r},{e.probes},{e.seed}" for e in est]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.fit:
        if args.fit == "radius":
            for n in n_grid:
                f = fit_radius_slope([e for e in est if e.n == n])
                print(f"# n={n} radius slope={f.slope:.4f} +- {f.stderr:.4f}", file=sys.stderr)
        else:
            zeta = None
            if args.fit == "zeta_shaped":
                zeta = gmm_profile if spec.kind is ModelKind.OVERSPEC_GMM else preset_profile(spec.kind.value, p=args.p)
            f = fit_envelope(est, args.fit, zeta)
            print(f"# {f.kind.value} envelope n-slope={f.slope:.4f} +- {f.slope_stderr:.4f} slack={f.slack:.3f}", file=sys.stderr)
    return 0


def _print_table(table, fits):
    print(f"axis={table.config.axis.value} model={table.config.model.kind.value} fingerprint={table.fingerprint}")
    for v in table.values:
        lo, hi = table.median_ci(v)
        print(f"  {v:>7d}  median_rho={table.median(v):.5g}  ci95=[{lo:.5g}, {hi:.5g}]  status={table.cell_status(v)}")
    for f in fits:
        print(f"  exponent={f.slope:.4f} +- {f.stderr:.4f} r2={f.r_squared:.4f} cells={list(f.cells)}")


def cmd_scaling(args) -> int:
    if args.config:
        cfg = load_study_config(args.config)
    elif args.preset:
        cfg = preset_study(args.preset, **({"trials": args.trials} if args.trials else {}))
    else:
        raise ContractionLabError("scaling needs --config or --preset")
    if args.output:
        from dataclasses import replace

        cfg = replace(cfg, output_dir=args.output)
    if args.dump_config:
        dump_study_config(cfg, args.dump_config)
        return 0

    def progress(outcome):
        r = outcome.row
        log.info("cell %s trial %d: rho=%.5g flag=%s", r.value, r.trial, r.rho_quantile, r.flag)

    table = run_scaling_study(cfg, progress=progress)
    fits = []
    try:
        fits.append(fit_rate_exponent(table))
    except ContractionLabError as exc:
        print(f"exponent fit skipped: {exc}", file=sys.stderr)
    if cfg.output_dir:
        emit_report(table, fits, cfg.output_dir)
    _print_table(table, fits)
    return 1 if table.any_failed else 0


def cmd_report(args) -> int:
    table, fits = load_report(args.dir)
    if args.refit:
        fits = [fit_rate_exponent(table, include_flagged=args.include_flagged)]
    _print_table(table, fits)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contraction-lab")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run posterior Langevin chains")
    _add_model_args(p)
    p.add_argument("--data", help="dataset CSV (with JSON sidecar) instead of generating one")
    p.add_argument("--sampler", default="mala", choices=["mala", "ula"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--chains", type=int, default=8)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--thinning", type=int, default=1)
    p.add_argument("--prior-scale", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--out", help="trajectory file prefix (one CSV + JSON per chain)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve-rate", help="solve the rate equation for a profile")
    p.add_argument("--profile", default="gmm", help="logistic | single_index | gmm | strongly_concave | power")
    p.add_argument("--profile-json", help="load the profile from a JSON document")
    p.add_argument("--dump-profile", help="write the profile as JSON")
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--B", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--const-term", type=float, default=None)
    p.add_argument("--moment", type=float, default=None, help="use the p-th moment constant (B + p d)/n")
    p.set_defaults(func=cmd_solve_rate)

    p = sub.add_parser("check-assumptions", help="numerical checks of the profile assumptions")
    _add_model_args(p)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--grid-points", type=int, default=241)
    p.add_argument("--out", help="write the full report as JSON")
    p.set_defaults(func=cmd_check_assumptions)

    p = sub.add_parser("perturbation", help="sup-deviation estimates over an (n, r) grid")
    _add_model_args(p, need_n=False)
    p.add_argument("--n-grid", default="500,2000,8000")
    p.add_argument("--r-grid", default="0.1:1.6:8")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probes", type=int, default=512)
    p.add_argument("--datasets", type=int, default=1)
    p.add_argument("--fit", choices=["affine", "zeta_shaped", "radius"])
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_perturbation)

    p = sub.add_parser("scaling", help="run a scaling study; exit status 1 if any cell failed")
    p.add_argument("--config", help="YAML study config")
    p.add_argument("--preset", help="logistic | single_index | gmm | gmm_dimension | calibration")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--output", help="report directory")
    p.add_argument("--dump-config", help="write the resolved config as YAML and exit")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("report", help="summarize a stored report")
    p.add_argument("dir")
    p.add_argument("--refit", action="store_true")
    p.add_argument("--include-flagged", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ContractionLabError, OSError) as exc:
        print(f"contraction-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

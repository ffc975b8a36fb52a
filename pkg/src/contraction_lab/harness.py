"""Scaling studies: run the sampler over a grid of sample sizes or dimensions,
collect radius estimates, fit log-log exponents and persist reports."""

from __future__ import annotations

import csv
import datetime as _dt
import enum
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, astuple, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .errors import ConfigurationError, ContractionLabError, EstimationError
from .langevin import (
    DiffusionConfig,
    estimate_moment_radius,
    estimate_quantile_radius,
    simulate_chains,
    split_chain_diagnostic,
)
from .model_zoo import ModelKind, ModelSpec, PriorSpec, generate_dataset, posterior_oracle
from .perturbation import ols_slope
from .rng import make_generator, stream_key

ROWS_HEADER = "axis,value,trial,seed,rho_quantile,rho_moment2,acceptance,flag"
THREADS_ENV = "CONTRACTION_LAB_THREADS"

OK = "ok"
DIAGNOSTIC = "diagnostic"
FAILED = "failed"


class Axis(str, enum.Enum):
    SAMPLE_SIZE = "n"
    DIMENSION = "d"


def _parse_axis(value) -> Axis:
    aliases = {"sample_size": "n", "samplesize": "n", "dimension": "d"}
    key = str(value.value if isinstance(value, Axis) else value).lower()
    try:
        return Axis(aliases.get(key, key))
    except ValueError:
        raise ConfigurationError(f"unknown axis {value!r}; use 'n' or 'd'") from None


@dataclass(frozen=True)
class StudyConfig:
    """One scaling study.

    ``axis="n"`` varies the sample size at ``model.d``; ``axis="d"`` varies
    the dimension at ``n_fixed`` (``theta*`` keeps its norm, the prior keeps
    its constant mean). ``diffusion`` holds :class:`DiffusionConfig`
    overrides. ``prior=None`` means the standard normal prior.
    """

    model: ModelSpec
    axis: Axis = Axis.SAMPLE_SIZE
    grid: tuple[int, ...] = (250, 500, 1000)
    trials: int = 5
    delta: float = 0.1
    prior: PriorSpec | None = None
    diffusion: dict = field(default_factory=dict)
    master_seed: int = 0
    output_dir: str | None = None
    n_fixed: int | None = None
    flag_threshold: float = 1.1
    acceptance_grade: bool = False

    def __post_init__(self):
        object.__setattr__(self, "axis", _parse_axis(self.axis))
        object.__setattr__(self, "grid", tuple(int(v) for v in self.grid))
        diffusion = dict(self.diffusion)
        if isinstance(diffusion.get("init"), list):
            diffusion["init"] = tuple(float(v) for v in diffusion["init"])
        object.__setattr__(self, "diffusion", diffusion)
        if not self.grid or any(v < 1 for v in self.grid):
            raise ConfigurationError("grid must be a nonempty list of positive integers")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ConfigurationError(f"grid must be strictly increasing, got {list(self.grid)}")
        if self.trials < 1:
            raise ConfigurationError("need at least one trial per cell")
        if self.acceptance_grade and (len(self.grid) < 3 or self.trials < 5):
            raise ConfigurationError("acceptance-grade studies need >= 3 grid values and >= 5 trials")
        if not 0 < self.delta < 1:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.axis is Axis.DIMENSION and self.n_fixed is None:
            raise ConfigurationError("dimension studies need n_fixed")
        self.diffusion_config()  # validates the overrides

    def diffusion_config(self) -> DiffusionConfig:
        try:
            return DiffusionConfig(**self.diffusion)
        except TypeError as exc:
            raise ConfigurationError(f"bad diffusion override: {exc}") from None

    def cell(self, value: int) -> tuple[ModelSpec, PriorSpec, int]:
        if self.axis is Axis.SAMPLE_SIZE:
            spec, n = self.model, value
        else:
            spec, n = self.model.with_dimension(value), self.n_fixed
        prior = PriorSpec.isotropic(spec.d) if self.prior is None else self.prior.resized(spec.d)
        return spec, prior, n

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "axis": self.axis.value,
            "grid": list(self.grid),
            "trials": self.trials,
            "delta": self.delta,
            "prior": None if self.prior is None else self.prior.to_dict(),
            "diffusion": dict(self.diffusion),
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "n_fixed": self.n_fixed,
            "flag_threshold": self.flag_threshold,
            "acceptance_grade": self.acceptance_grade,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StudyConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown study config keys: {sorted(unknown)}")
        model = doc.pop("model")
        doc["model"] = model if isinstance(model, ModelSpec) else ModelSpec.from_dict(model)
        prior = doc.get("prior")
        if prior is not None and not isinstance(prior, PriorSpec):
            doc["prior"] = PriorSpec.from_dict(prior)
        doc["diffusion"] = dict(doc.get("diffusion") or {})
        return cls(**doc)

    @property
    def fingerprint(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def load_study_config(path) -> StudyConfig:
    """Read a YAML (or JSON) document mirroring :class:`StudyConfig`."""
    import yaml

    text = Path(path).read_text()
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: expected a key-value document")
    return StudyConfig.from_dict(doc)


def dump_study_config(cfg: StudyConfig, path) -> None:
    import yaml

    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


# ----------------------------------------------------------------------------
# table


@dataclass(frozen=True)
class Row:
    axis: str
    value: int
    trial: int
    seed: int
    rho_quantile: float
    rho_moment2: float
    acceptance: float
    flag: str


@dataclass(frozen=True)
class TrialOutcome:
    row: Row
    detail: dict


@dataclass
class ScalingTable:
    config: StudyConfig
    rows: list[Row]
    details: dict[str, dict] = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint

    def cell_rows(self, value: int) -> list[Row]:
        return [r for r in self.rows if r.value == value]

    def cell_status(self, value: int) -> str:
        flags = {r.flag for r in self.cell_rows(value)}
        if FAILED in flags:
            return FAILED
        if DIAGNOSTIC in flags:
            return DIAGNOSTIC
        return OK

    @property
    def values(self) -> list[int]:
        return sorted({r.value for r in self.rows})

    def median(self, value: int) -> float:
        vals = [r.rho_quantile for r in self.cell_rows(value) if r.flag != FAILED]
        return float(np.median(vals)) if vals else math.nan

    def medians(self) -> dict[int, float]:
        return {v: self.median(v) for v in self.values}

    def median_ci(self, value: int, level: float = 0.95, resamples: int = 1000) -> tuple[float, float]:
        vals = np.array([r.rho_quantile for r in self.cell_rows(value) if r.flag != FAILED])
        if vals.size == 0:
            return (math.nan, math.nan)
        rng = make_generator(self.config.master_seed, "median-ci", value)
        boot = np.median(vals[rng.integers(0, vals.size, (resamples, vals.size))], axis=1)
        tail = (1.0 - level) / 2.0
        return (float(np.quantile(boot, tail)), float(np.quantile(boot, 1.0 - tail)))

    @property
    def any_failed(self) -> bool:
        return any(self.cell_status(v) == FAILED for v in self.values)

    def __eq__(self, other):
        if not isinstance(other, ScalingTable):
            return NotImplemented
        return self.config == other.config and _row_keys(self.rows) == _row_keys(other.rows) and self.details == other.details


def _row_keys(rows):
    # failed trials carry NaN radii; compare them by representation
    return [tuple(repr(v) if isinstance(v, float) else v for v in astuple(r)) for r in rows]


# ----------------------------------------------------------------------------
# trials


def trial_stream(master_seed: int, axis: Axis, value: int, trial: int) -> int:
    return stream_key(master_seed, "trial", axis.value, int(value), int(trial))


def _trial_seed(stream: int) -> int:
    return stream >> 65


def mala_trial(cfg: StudyConfig, value: int, trial: int, stream: int) -> TrialOutcome:
    """generate data -> run chains -> quantile and second-moment radii."""
    spec, prior, n = cfg.cell(value)
    seed = _trial_seed(stream)
    data = generate_dataset(spec, n, stream_key(stream, "data") >> 65)
    chains = simulate_chains(posterior_oracle(spec, data, prior), cfg.diffusion_config(), stream_key(stream, "chains") >> 65)
    ts = spec.theta
    rho = estimate_quantile_radius(chains, ts, cfg.delta, bootstrap_seed=seed)
    mom = estimate_moment_radius(chains, ts, 2.0, bootstrap_seed=seed)
    acc = float(np.mean([c.acceptance_rate for c in chains]))
    detail = {"rho_stderr": rho.mc_stderr, "step_size": float(np.median([c.step_size for c in chains]))}
    flag = OK
    if len(chains) >= 2:
        # the distance to theta* is invariant under the models' sign symmetry,
        # so mode-hopping between mirror images does not inflate it
        dist = [np.linalg.norm(c.post_burn_in() - ts, axis=1)[:, None] for c in chains]
        rhat = split_chain_diagnostic(dist, cfg.flag_threshold)
        detail["rhat"] = rhat.max
        if rhat.flagged:
            flag = DIAGNOSTIC
    warnings = sorted({w for c in chains for w in c.warnings})
    if warnings:
        detail["warnings"] = warnings
    row = Row(cfg.axis.value, int(value), int(trial), seed, rho.rho, mom.rho, acc, flag)
    return TrialOutcome(row, detail)


TrialFn = Callable[[StudyConfig, int, int, int], TrialOutcome]


def _run_one(args) -> TrialOutcome:
    cfg, value, trial, stream, fn = args
    try:
        return fn(cfg, value, trial, stream)
    except (ContractionLabError, ArithmeticError, ValueError) as exc:
        row = Row(cfg.axis.value, int(value), int(trial), _trial_seed(stream), math.nan, math.nan, math.nan, FAILED)
        return TrialOutcome(row, {"cause": f"{type(exc).__name__}: {exc}"})


def worker_count(tasks: int) -> int:
    raw = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigurationError(f"{THREADS_ENV} must be >= 1, got {cap}")
    return max(1, min(cap, tasks))


class StudyLock:
    """Exclusive ownership of a study directory via an ``O_EXCL`` lock file."""

    def __init__(self, directory):
        self.path = Path(directory) / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigurationError(f"{self.path.parent} is locked by another study ({self.path})") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def run_scaling_study(cfg: StudyConfig, trial_fn: TrialFn | None = None, progress: Callable | None = None) -> ScalingTable:
    """Run every ``(cell, trial)`` and gather rows in grid order.

    Each pair gets its own stream id ``hash(master_seed, axis, value, trial)``;
    ids are checked for collisions before anything runs. Work is spread over
    ``CONTRACTION_LAB_THREADS`` processes (default: all cores). Failed trials
    keep a row with ``flag="failed"`` and the cause in ``details``.
    """
    fn = mala_trial if trial_fn is None else trial_fn
    jobs = [(v, k, trial_stream(cfg.master_seed, cfg.axis, v, k)) for v in cfg.grid for k in range(cfg.trials)]
    if len({s for _, _, s in jobs}) != len(jobs):
        raise ConfigurationError("stream id collision between (cell, trial) pairs")

    def execute():
        args = [(cfg, v, k, s, fn) for v, k, s in jobs]
        workers = worker_count(len(args))
        if workers == 1:
            out = []
            for a in args:
                out.append(_run_one(a))
                if progress:
                    progress(out[-1])
            return out
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = []
            for res in pool.map(_run_one, args):
                out.append(res)
                if progress:
                    progress(res)
            return out

    if cfg.output_dir:
        with StudyLock(cfg.output_dir):
            outcomes = execute()
    else:
        outcomes = execute()
    details = {}
    for o in outcomes:
        if o.detail:
            details[f"{o.row.value}:{o.row.trial}"] = o.detail
    return ScalingTable(cfg, [o.row for o in outcomes], details)


# ----------------------------------------------------------------------------
# exponent fits


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    cells: tuple[int, ...]
    axis: str = "n"

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["cells"] = list(self.cells)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExponentFit":
        return cls(doc["slope"], doc["intercept"], doc["stderr"], doc["r_squared"], tuple(doc["cells"]), doc.get("axis", "n"))


def fit_rate_exponent(table: ScalingTable, include_flagged: bool = False) -> ExponentFit:
    """OLS of ``log median rho`` on ``log axis value`` over usable cells."""
    cells = []
    for v in table.values:
        status = table.cell_status(v)
        if status == FAILED or (status == DIAGNOSTIC and not include_flagged):
            continue
        med = table.median(v)
        if med > 0 and math.isfinite(med):
            cells.append((v, med))
    if len(cells) < 3:
        raise EstimationError(f"exponent fit needs >= 3 usable cells, got {len(cells)}")
    x, y = np.log(np.array(cells, dtype=float)).T
    fit = ols_slope(x, y)
    return ExponentFit(fit.slope, fit.intercept, fit.stderr, fit.r_squared, tuple(v for v, _ in cells), table.config.axis.value)


def loglog_slope_bias(cfg: StudyConfig) -> dict | None:
    """Slope contributed by ``log(log n / delta)`` in the mixture radius, ignored by the fit."""
    if cfg.model.kind is not ModelKind.OVERSPEC_GMM or cfg.axis is not Axis.SAMPLE_SIZE:
        return None
    ns = np.array(cfg.grid, dtype=float)
    if np.any(ns <= math.e):
        return None
    d = cfg.model.d
    numer = d + np.log(np.log(ns) / cfg.delta)
    bias = ols_slope(np.log(ns), 0.25 * np.log(numer)).slope if ns.size >= 2 else 0.0
    return {
        "note": "log(log n / delta) treated as constant across the grid",
        "slope_bias": float(bias),
        "relative_to_target": float(abs(bias) / 0.25),
    }


# ----------------------------------------------------------------------------
# reports


def _fmt(x) -> str:
    return repr(float(x))


def emit_report(table: ScalingTable, fits: Sequence[ExponentFit], path, timestamp: str | None = None) -> dict[str, Path]:
    """Write ``rows.csv``, ``summary.json`` and ``plot.dat`` under ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows_path = out / "rows.csv"
        with open(rows_path, "w", newline="") as fh:
            fh.write(ROWS_HEADER + "\n")
            w = csv.writer(fh, lineterminator="\n")
            for r in table.rows:
                w.writerow([r.axis, r.value, r.trial, r.seed, _fmt(r.rho_quantile), _fmt(r.rho_moment2), _fmt(r.acceptance), r.flag])
        medians = table.medians()
        summary = {
            "tool": "contraction-lab",
            "tool_version": __version__,
            "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "fingerprint": table.fingerprint,
            "config": table.config.to_dict(),
            "cells": [
                {
                    "value": v,
                    "median_rho": medians[v],
                    "ci95": list(table.median_ci(v)),
                    "status": table.cell_status(v),
                }
                for v in table.values
            ],
            "fits": [f.to_dict() for f in fits],
            "details": table.details,
            "loglog": loglog_slope_bias(table.config),
            "any_failed": table.any_failed,
        }
        summary_path = out / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=2, allow_nan=True) + "\n")
        plot_path = out / "plot.dat"
        with open(plot_path, "w") as fh:
            fh.write(f"# log10({table.config.axis.value}) log10(median_rho)\n")
            for v in table.values:
                m = medians[v]
                if m > 0 and math.isfinite(m):
                    fh.write(f"{math.log10(v)!r} {math.log10(m)!r}\n")
    except OSError as exc:
        raise ConfigurationError(f"cannot write report to {exc.filename or out}: {exc.strerror or exc}") from exc
    return {"rows": rows_path, "summary": summary_path, "plot": plot_path}


def load_report(path) -> tuple[ScalingTable, list[ExponentFit]]:
    """Inverse of :func:`emit_report`; verifies stored medians against the rows."""
    base = Path(path)
    try:
        lines = (base / "rows.csv").read_text().splitlines()
        summary = json.loads((base / "summary.json").read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read report at {exc.filename or base}: {exc.strerror or exc}") from exc
    if not lines or lines[0] != ROWS_HEADER:
        raise ConfigurationError(f"{base / 'rows.csv'}: unexpected header {lines[0] if lines else ''!r}")
    rows = []
    for rec in csv.reader(lines[1:]):
        axis, value, trial, seed, rq, rm, acc, flag = rec
        rows.append(Row(axis, int(value), int(trial), int(seed), float(rq), float(rm), float(acc), flag))
    table = ScalingTable(StudyConfig.from_dict(summary["config"]), rows, summary.get("details", {}))
    for cell in summary["cells"]:
        stored, fresh = cell["median_rho"], table.median(cell["value"])
        if not (stored == fresh or (math.isnan(stored) and math.isnan(fresh))):
            raise EstimationError(f"median for cell {cell['value']} does not match its rows ({stored} vs {fresh})")
    fits = [ExponentFit.from_dict(f) for f in summary.get("fits", [])]
    return table, fits


def spearman_rho(x, y) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(x, y).correlation)

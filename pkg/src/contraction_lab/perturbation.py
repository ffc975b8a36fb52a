"""Uniform gradient-deviation estimates and envelope fits.

The quantity of interest is ``sup_{||theta - theta*|| <= r} ||grad F_n - grad F||``.
It is not computable, so ``estimate_sup_deviation`` reports a lower bound: the
best value over random interior and boundary probes, refined by projected
gradient ascent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, EstimationError
from .model_zoo import Dataset, ModelSpec, PopulationConfig, population_grad, sample_loglik_grad
from .rate_theory import RateProfile
from .rng import make_generator


@dataclass(frozen=True)
class DeviationEstimate:
    r: float
    value: float
    argmax_theta: tuple[float, ...]
    probes: int
    seed: int
    spread: float
    n: int
    ascent_gain: float = 0.0

    def to_row(self) -> dict:
        return {"n": self.n, "r": self.r, "value": self.value, "probes": self.probes, "seed": self.seed}


def _deviation_fn(spec: ModelSpec, data: Dataset, population: PopulationConfig):
    def dev(th):
        th = np.atleast_2d(th)
        return sample_loglik_grad(spec, data, th) - population_grad(spec, th, population)

    return dev


def _ball_points(direction_rng, radius_rng, m, d, r):
    # separate streams keep the first m points identical for any larger m
    u = direction_rng.standard_normal((m, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * (r * radius_rng.random(m) ** (1.0 / d))[:, None]


def _sphere_points(rng, m, d, r):
    u = rng.standard_normal((m, d))
    return r * u / np.linalg.norm(u, axis=1, keepdims=True)


def _prefix_argmax(values):
    """Argmax of the prefixes ``values[:m], values[:m // 2], values[:m // 4], ...``.

    Doubling ``m`` adds one prefix and keeps all the others.
    """
    m = len(values)
    sizes = [m >> k for k in range(m.bit_length())]
    return [int(np.argmax(values[:s])) for s in sizes]


def _project(center, th, r):
    off = th - center
    norm = np.linalg.norm(off)
    return th if norm <= r else center + off * (r / norm)


def _ascend(dev, center, start, r, steps, fd_scale):
    """Projected gradient ascent on ``||dev||^2 / 2`` with backtracking.

    The gradient ``J^T g`` uses a central finite-difference Jacobian-vector
    product; ``J`` is a difference of Hessians and therefore symmetric.
    """
    th = start.copy()
    g = dev(th)[0]
    best = float(g @ g)
    step = r if r > 0 else 0.0
    for _ in range(steps):
        gn = math.sqrt(best)
        if gn == 0.0 or step == 0.0:
            break
        v = g / gn
        eps = fd_scale * (1.0 + np.linalg.norm(th))
        pair = dev(np.stack([th + eps * v, th - eps * v]))
        direction = gn * (pair[0] - pair[1]) / (2.0 * eps)
        dn = np.linalg.norm(direction)
        if not np.isfinite(dn) or dn == 0.0:
            break
        direction /= dn
        improved = False
        t = step
        for _ in range(8):
            cand = _project(center, th + t * direction, r)
            gc = dev(cand)[0]
            val = float(gc @ gc)
            if val > best:
                th, g, best, improved = cand, gc, val, True
                break
            t *= 0.5
        step = min(r, 2.0 * t) if improved else 0.25 * t
    return th, math.sqrt(best)


def estimate_sup_deviation(
    spec: ModelSpec,
    data: Dataset,
    r: float,
    probes: int = 512,
    seed: int = 0,
    boundary: int | None = None,
    ascent_steps: int = 20,
    population: PopulationConfig = PopulationConfig(),
    batches: int = 8,
    warm_start: Sequence | None = None,
) -> DeviationEstimate:
    """Lower bound on the sup of ``||grad F_n - grad F||`` over the ball of radius ``r`` around ``theta*``.

    ``probes`` uniform interior points and ``boundary`` sphere points
    (default ``probes // 8``) come from separate seeded substreams, so a
    larger probe count extends the same sequences. Ascent starts from the
    argmax of every halving prefix of each sequence, which makes the result
    non-decreasing when the probe count doubles. ``warm_start`` points (for
    instance argmaxes found at smaller radii) are evaluated and ascended from
    as well, after projection onto the ball.
    """
    if not r >= 0:
        raise DomainError(f"radius must be nonnegative, got {r}")
    if probes < 1:
        raise ConfigurationError("need at least one probe")
    center = spec.theta
    dev = _deviation_fn(spec, data, population)
    if r == 0:
        val = float(np.linalg.norm(dev(center)[0]))
        return DeviationEstimate(0.0, val, tuple(float(v) for v in center), 1, int(seed), 0.0, data.n)
    d = spec.d
    nb = probes // 8 if boundary is None else boundary
    inner = center + _ball_points(
        make_generator(seed, "deviation", "interior"), make_generator(seed, "deviation", "interior-radius"), probes, d, r
    )
    groups = [(inner, True)]
    if nb > 0:
        groups.append((center + _sphere_points(make_generator(seed, "deviation", "boundary"), nb, d, r), True))
    if warm_start is not None and len(warm_start):
        groups.append((np.array([_project(center, np.asarray(w, dtype=float), r) for w in warm_start]), False))
    best_val, best_th = -1.0, center
    probe_max = -1.0
    batch_max = np.full(batches, -np.inf)
    for pts, random_probes in groups:
        vals = np.linalg.norm(dev(pts), axis=1)
        if random_probes:
            for b, chunk in enumerate(np.array_split(vals, batches)):
                if chunk.size:
                    batch_max[b] = max(batch_max[b], chunk.max())
        k = int(np.argmax(vals))
        if random_probes and vals[k] > probe_max:
            probe_max = float(vals[k])
        if vals[k] > best_val:
            best_val, best_th = float(vals[k]), pts[k]
        if ascent_steps > 0:
            for start in sorted(set(_prefix_argmax(vals))):
                th, val = _ascend(dev, center, pts[start], r, ascent_steps, 1e-5)
                if val > best_val:
                    best_val, best_th = val, th
    finite = batch_max[np.isfinite(batch_max)]
    spread = float(np.std(finite)) if finite.size > 1 else 0.0
    return DeviationEstimate(
        float(r),
        best_val,
        tuple(float(v) for v in best_th),
        probes + nb,
        int(seed),
        spread,
        data.n,
        best_val - probe_max,
    )


def grid_oracle_deviation(
    spec: ModelSpec, data: Dataset, r: float, points: int = 10_000, population: PopulationConfig = PopulationConfig()
) -> float:
    """Dense-grid maximum in one or two dimensions (calibration oracle)."""
    center = spec.theta
    dev = _deviation_fn(spec, data, population)
    if spec.d == 1:
        pts = center + np.linspace(-r, r, points)[:, None]
    elif spec.d == 2:
        side = int(math.ceil(math.sqrt(points)))
        radii = np.linspace(0.0, r, side)
        angles = np.linspace(0.0, 2 * math.pi, side, endpoint=False)
        rr, aa = np.meshgrid(radii, angles, indexing="ij")
        pts = center + np.column_stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()])
    else:
        raise ConfigurationError("the grid oracle only covers d <= 2")
    vals = np.concatenate([np.linalg.norm(dev(chunk), axis=1) for chunk in np.array_split(pts, max(1, len(pts) // 2048))])
    return float(vals.max())


def radius_sweep(
    spec: ModelSpec,
    data: Dataset,
    r_grid: Sequence[float],
    probes: int = 512,
    seed: int = 0,
    ascent_steps: int = 20,
    population: PopulationConfig = PopulationConfig(),
) -> list[DeviationEstimate]:
    """Estimates at each radius (in the given order), warm-started from every
    argmax found at smaller radii so the values are non-decreasing in ``r``."""
    order = sorted(range(len(r_grid)), key=lambda i: r_grid[i])
    found: list[DeviationEstimate | None] = [None] * len(r_grid)
    starts: list[tuple] = []
    for i in order:
        est = estimate_sup_deviation(spec, data, float(r_grid[i]), probes, seed, None, ascent_steps, population, warm_start=starts)
        found[i] = est
        starts.append(est.argmax_theta)
    return found


def deviation_grid(
    spec: ModelSpec,
    n_grid: Sequence[int],
    r_grid: Sequence[float],
    seed: int = 0,
    probes: int = 512,
    ascent_steps: int = 20,
    datasets: int = 1,
    population: PopulationConfig = PopulationConfig(),
) -> list[DeviationEstimate]:
    """Deviation estimates over an ``(n, r)`` grid; one fresh dataset per ``(n, replicate)``.

    With ``datasets > 1`` the reported value per ``(n, r)`` is the median over
    replicate datasets (the sup bound holds with high probability, so the
    median across data draws is the stable observable).
    """
    from .model_zoo import generate_dataset
    from .rng import derive_seed

    out = []
    for n in n_grid:
        reps = []
        for k in range(datasets):
            data = generate_dataset(spec, int(n), derive_seed(seed, "perturbation-data", int(n), k))
            probe_seed = derive_seed(seed, "probes", int(n), k)
            reps.append(radius_sweep(spec, data, r_grid, probes, probe_seed, ascent_steps, population))
        for j in range(len(r_grid)):
            col = [rep[j] for rep in reps]
            pick = sorted(col, key=lambda e: e.value)[(len(col) - 1) // 2]
            out.append(pick)
    return out


# ----------------------------------------------------------------------------
# envelope fits


class EnvelopeKind(str, enum.Enum):
    AFFINE = "affine"  # eps1 * r + eps2
    ZETA_SHAPED = "zeta_shaped"  # eps * zeta(r)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    points: int


def ols_slope(x, y) -> SlopeFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = x.size
    if m < 2:
        raise EstimationError(f"slope fit needs at least 2 points, got {m}")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise EstimationError("slope fit needs at least two distinct abscissae")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    sse = float(resid @ resid)
    sst = float(np.sum((y - ym) ** 2))
    stderr = math.sqrt(sse / (m - 2) / sxx) if m > 2 else math.nan
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    return SlopeFit(slope, intercept, stderr, r2, m)


@dataclass(frozen=True)
class EnvelopeFit:
    kind: EnvelopeKind
    n_values: tuple[int, ...]
    coefficients: dict  # name -> tuple aligned with n_values
    residuals: tuple[float, ...]
    slope: float
    slope_stderr: float
    slack: float
    secondary_slope: float | None = None
    note: str = ""

    def envelope(self, n: int, r, zeta: Callable | None = None):
        k = self.n_values.index(n)
        r = np.asarray(r, dtype=float)
        if self.kind is EnvelopeKind.AFFINE:
            return self.coefficients["eps1"][k] * r + self.coefficients["eps2"][k]
        return self.coefficients["eps"][k] * zeta(r)


LOGLOG_NOTE = "log(log n / delta) treated as constant across the n grid"


def _zeta_for(profile, n):
    prof = profile(n) if callable(profile) and not isinstance(profile, RateProfile) else profile
    return lambda r: prof.zeta_value(r)


def fit_envelope(
    estimates: Sequence[DeviationEstimate],
    kind: EnvelopeKind | str,
    profile: RateProfile | Callable[[int], RateProfile] | None = None,
) -> EnvelopeFit:
    """Fit ``eps1 r + eps2`` or ``eps zeta(r)`` per sample size, then the log-log slope in ``n``.

    ``profile`` supplies ``zeta`` for the zeta-shaped kind and may be a
    callable ``n -> RateProfile`` when ``zeta`` depends on ``n``.
    """
    kind = EnvelopeKind(kind)
    by_n: dict[int, list[DeviationEstimate]] = {}
    for e in estimates:
        by_n.setdefault(int(e.n), []).append(e)
    ns = sorted(by_n)
    if len(ns) < 3 or ns[-1] < 10 * ns[0]:
        raise ConfigurationError("envelope fit needs >= 3 sample sizes spanning at least one decade")
    for n in ns:
        if len({e.r for e in by_n[n]}) < 4:
            raise ConfigurationError(f"envelope fit needs >= 4 radii at n={n}")
    if kind is EnvelopeKind.ZETA_SHAPED and profile is None:
        raise ConfigurationError("zeta-shaped envelopes need a profile")

    residuals, slack = [], 1.0
    coef: dict[str, list[float]] = {}
    for n in ns:
        r = np.array([e.r for e in by_n[n]])
        v = np.array([e.value for e in by_n[n]])
        if kind is EnvelopeKind.AFFINE:
            design = np.column_stack([r, np.ones_like(r)])
            (e1, e2), *_ = np.linalg.lstsq(design, v, rcond=None)
            coef.setdefault("eps1", []).append(float(e1))
            coef.setdefault("eps2", []).append(float(e2))
            fitted = e1 * r + e2
        else:
            z = _zeta_for(profile, n)(r)
            eps = float(np.mean(v / z))
            coef.setdefault("eps", []).append(eps)
            fitted = eps * z
        residuals.extend((v - fitted).tolist())
        pos = fitted > 0
        if np.any(v[~pos] > 0):
            slack = math.inf
        elif np.any(pos):
            slack = max(slack, float(np.max(v[pos] / fitted[pos])))

    logn = np.log(ns)
    lead = coef["eps1"] if kind is EnvelopeKind.AFFINE else coef["eps"]
    if min(lead) <= 0:
        raise EstimationError("fitted envelope coefficient is not positive; cannot fit a log-log slope")
    main = ols_slope(logn, np.log(lead))
    secondary = None
    if kind is EnvelopeKind.AFFINE and min(coef["eps2"]) > 0:
        secondary = ols_slope(logn, np.log(coef["eps2"])).slope
    return EnvelopeFit(
        kind,
        tuple(ns),
        {k: tuple(v) for k, v in coef.items()},
        tuple(residuals),
        main.slope,
        main.stderr,
        slack,
        secondary,
        LOGLOG_NOTE,
    )


def fit_radius_slope(estimates: Sequence[DeviationEstimate]) -> SlopeFit:
    """OLS slope of ``log value`` against ``log r`` (fixed ``n``)."""
    pts = [(e.r, e.value) for e in estimates if e.r > 0 and e.value > 0]
    if len(pts) < 3:
        raise EstimationError("radius slope needs at least 3 positive estimates")
    r, v = np.array(pts).T
    return ols_slope(np.log(r), np.log(v))


def flatness_ratio(spec: ModelSpec, data: Dataset, r_small: float, r_large: float, **kwargs) -> float:
    """``value(r_large) / value(r_small)``; stays bounded when the deviation is uniform over the space."""
    lo = estimate_sup_deviation(spec, data, r_small, **kwargs)
    hi = estimate_sup_deviation(spec, data, r_large, **kwargs)
    return hi.value / lo.value

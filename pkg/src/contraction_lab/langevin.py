"""Discretized posterior-targeting Langevin diffusion.

The continuous process is

    d theta_t = (0.5 grad F_n(theta_t) + grad log pi(theta_t) / (2n)) dt + dB_t / sqrt(n),

whose stationary law is the posterior. With step ``h`` (in the SDE's time
units) and inverse temperature ``beta`` (default ``n``) the ULA update is

    theta' = theta + h * drift(theta) + sqrt(h / beta) * xi.

MALA uses the same proposal with a Metropolis-Hastings correction against the
density ``exp(beta * (F_n + log pi / n))``, which for ``beta = n`` is the
posterior itself.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ChainAbort, ConfigurationError, DomainError, EstimationError, NumericError
from .model_zoo import GradOracle
from .rng import make_generator

log = logging.getLogger(__name__)

NOISE_BLOCK = 256
ACCEPT_BAND = (0.4, 0.8)
LOW_ACCEPT_WINDOW = 1000
LOW_ACCEPT_LEVEL = 0.01


class Sampler(str, enum.Enum):
    ULA = "ula"
    MALA = "mala"


AT_THETA_STAR = "at_theta_star"
FROM_PRIOR = "from_prior"


@dataclass(frozen=True)
class DiffusionConfig:
    """Chain settings.

    ``step_size=None`` picks ``h0 = 1 / (1 + L)`` from a finite-difference
    Lipschitz estimate ``L`` of ``grad F_n + grad log pi / n`` and, for MALA,
    tunes each chain's step during the first half of burn-in so acceptance
    lands in ``[0.4, 0.8]``. ``init`` is ``"at_theta_star"``, ``"from_prior"``
    or an explicit vector.
    """

    step_size: float | None = None
    n_steps: int = 20_000
    burn_in: int = 10_000
    n_chains: int = 8
    sampler: Sampler = Sampler.MALA
    inverse_temperature: float | None = None
    init: str | tuple = AT_THETA_STAR
    thinning: int = 1
    adapt: bool = True
    adapt_window: int = 50

    def __post_init__(self):
        object.__setattr__(self, "sampler", Sampler(self.sampler))
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigurationError(f"step size must be positive, got {self.step_size}")
        if self.n_steps < 1 or not 0 <= self.burn_in < self.n_steps:
            raise ConfigurationError(f"need 0 <= burn_in < n_steps, got {self.burn_in}, {self.n_steps}")
        if self.n_chains < 1:
            raise ConfigurationError("n_chains must be >= 1")
        if self.thinning < 1:
            raise ConfigurationError("thinning must be >= 1")
        if self.inverse_temperature is not None and not self.inverse_temperature > 0:
            raise ConfigurationError("inverse temperature must be positive")
        if self.adapt_window < 1:
            raise ConfigurationError("adapt_window must be >= 1")
        if not isinstance(self.init, str):
            object.__setattr__(self, "init", tuple(float(v) for v in np.ravel(self.init)))
        elif self.init not in (AT_THETA_STAR, FROM_PRIOR):
            raise ConfigurationError(f"unknown init {self.init!r}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["sampler"] = self.sampler.value
        doc["init"] = self.init if isinstance(self.init, str) else list(self.init)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DiffusionConfig":
        return cls(**doc)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One chain. ``states[k]`` is the state after step ``steps[k]``."""

    states: np.ndarray
    steps: np.ndarray
    acceptance_rate: float
    seed: int
    chain: int
    step_size: float
    sampler: Sampler
    burn_in: int
    fingerprint: str
    warnings: tuple[str, ...] = ()

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def post_burn_in(self) -> np.ndarray:
        return self.states[self.steps > self.burn_in]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.steps, other.steps)
            and self.acceptance_rate == other.acceptance_rate
            and self.seed == other.seed
            and self.chain == other.chain
            and self.step_size == other.step_size
            and self.sampler == other.sampler
            and self.burn_in == other.burn_in
            and self.fingerprint == other.fingerprint
            and self.warnings == other.warnings
        )

    __hash__ = None


@dataclass(frozen=True)
class RadiusEstimate:
    rho: float
    delta: float | None
    method: str
    mc_stderr: float
    n_samples: int
    moment_order: float | None = None


def _initial_states(oracle: GradOracle, cfg: DiffusionConfig, seed: int, chains: Sequence[int]):
    d = oracle.d
    if cfg.init == AT_THETA_STAR:
        return np.tile(oracle.theta_star, (len(chains), 1)).astype(float)
    if cfg.init == FROM_PRIOR:
        prior = oracle.prior
        rows = [prior.mu + prior.scale * make_generator(seed, "init", k).standard_normal(d) for k in chains]
        return np.array(rows)
    vec = np.asarray(cfg.init, dtype=float)
    if vec.shape != (d,):
        raise ConfigurationError(f"explicit init has length {vec.size}, expected {d}")
    return np.tile(vec, (len(chains), 1))


def estimate_drift_lipschitz(oracle: GradOracle, center, seed: int, probes: int = 100) -> float:
    """Max finite-difference ratio of ``grad F_n + grad log pi / n`` near ``center``."""
    rng = make_generator(seed, "lipschitz-probe")
    d, n = oracle.d, oracle.n
    scale = 1.0 / math.sqrt(n)
    base = center + scale * rng.standard_normal((probes, d))
    u = rng.standard_normal((probes, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    eta = 1e-4 * scale
    _, g = oracle.log_target_and_drift(np.vstack([base, base + eta * u]))
    diff = 2.0 * (g[probes:] - g[:probes])
    return float(np.max(np.linalg.norm(diff, axis=1)) / eta)


def default_step_size(oracle: GradOracle, center, seed: int) -> float:
    return 1.0 / (1.0 + estimate_drift_lipschitz(oracle, center, seed))


def _run(oracle: GradOracle, cfg: DiffusionConfig, seed: int, chains: Sequence[int]) -> list[Trajectory]:
    C, d, n = len(chains), oracle.d, oracle.n
    beta = float(cfg.inverse_temperature or n)
    mala = cfg.sampler is Sampler.MALA
    rngs = [make_generator(seed, "chain", k) for k in chains]
    theta = _initial_states(oracle, cfg, seed, chains)

    auto = cfg.step_size is None
    if auto:
        h = np.array([default_step_size(oracle, theta[i], seed + 7919 * k) for i, k in enumerate(chains)])
    else:
        h = np.full(C, float(cfg.step_size))
    adapt_until = cfg.burn_in // 2 if (auto and mala and cfg.adapt) else 0
    factor = np.full(C, 2.0)
    last_move = np.zeros(C)
    window_acc = np.zeros(C)
    window_len = 0

    logt, drift = oracle.log_target_and_drift(theta)
    n_keep = cfg.n_steps // cfg.thinning
    states = np.empty((C, n_keep, d))
    kept_steps = np.arange(1, n_keep + 1) * cfg.thinning
    accepted = np.zeros(C)
    sampled = 0
    low_acc = np.zeros(C)
    low_len = 0
    warnings = [[] for _ in range(C)]
    noise = unif = None
    keep = 0

    for t in range(cfg.n_steps):
        j = t % NOISE_BLOCK
        if j == 0:
            noise = np.stack([r.standard_normal((NOISE_BLOCK, d)) for r in rngs], axis=1)
            unif = np.stack([r.random(NOISE_BLOCK) for r in rngs], axis=1)
        xi = noise[j]
        sd = np.sqrt(h / beta)
        prop = theta + h[:, None] * drift + sd[:, None] * xi
        if mala:
            ok = np.all(np.isfinite(prop), axis=1)
            if not np.all(ok):
                prop = np.where(ok[:, None], prop, theta)
            try:
                logt_p, drift_p = oracle.log_target_and_drift(prop)
            except NumericError as exc:
                raise ChainAbort(f"chain aborted at step {t + 1}: {exc}", t + 1, theta.copy()) from exc
            back = theta - prop - h[:, None] * drift_p
            log_rev = -beta * np.sum(back * back, axis=1) / (2.0 * h)
            log_fwd = -0.5 * np.sum(xi * xi, axis=1)
            log_alpha = beta * (logt_p - logt) + log_rev - log_fwd
            acc = ok & (np.log(unif[j]) < log_alpha)
            theta = np.where(acc[:, None], prop, theta)
            logt = np.where(acc, logt_p, logt)
            drift = np.where(acc[:, None], drift_p, drift)
        else:
            if not np.all(np.isfinite(prop)):
                raise ChainAbort(f"non-finite state at step {t + 1}", t + 1, theta.copy())
            try:
                logt, drift = oracle.log_target_and_drift(prop)
            except NumericError as exc:
                raise ChainAbort(f"chain aborted at step {t + 1}: {exc}", t + 1, theta.copy()) from exc
            theta = prop
            acc = np.ones(C, dtype=bool)

        step = t + 1
        if step <= adapt_until:
            window_acc += acc
            window_len += 1
            if window_len == cfg.adapt_window:
                rate = window_acc / window_len
                move = np.where(rate < ACCEPT_BAND[0], -1.0, np.where(rate > ACCEPT_BAND[1], 1.0, 0.0))
                flipped = (move != 0) & (last_move != 0) & (move != last_move)
                factor = np.where(flipped, np.maximum(np.sqrt(factor), 1.05), factor)
                h = h * factor**move
                last_move = np.where(move != 0, move, last_move)
                window_acc[:] = 0
                window_len = 0
        if step > cfg.burn_in:
            accepted += acc
            sampled += 1
            if mala:
                low_acc += acc
                low_len += 1
                if low_len == LOW_ACCEPT_WINDOW:
                    for i in np.flatnonzero(low_acc / low_len < LOW_ACCEPT_LEVEL):
                        warnings[i].append(f"acceptance below 1% over steps {step - low_len + 1}-{step}")
                    low_acc[:] = 0
                    low_len = 0
        if step % cfg.thinning == 0:
            states[:, keep] = theta
            keep += 1

    fp_base = {"cfg": cfg.fingerprint, "oracle": oracle.fingerprint, "seed": int(seed)}
    out = []
    for i, k in enumerate(chains):
        fp = hashlib.sha256(json.dumps({**fp_base, "chain": int(k)}, sort_keys=True).encode()).hexdigest()[:16]
        rate = float(accepted[i] / sampled) if mala else 1.0
        for msg in warnings[i]:
            log.warning("chain %d: %s", k, msg)
        out.append(
            Trajectory(
                states=states[i],
                steps=kept_steps,
                acceptance_rate=rate,
                seed=int(seed),
                chain=int(k),
                step_size=float(h[i]),
                sampler=cfg.sampler,
                burn_in=cfg.burn_in,
                fingerprint=fp,
                warnings=tuple(warnings[i]),
            )
        )
    return out


def simulate_chains(oracle: GradOracle, cfg: DiffusionConfig, seed: int) -> list[Trajectory]:
    """Run ``cfg.n_chains`` chains in lockstep; chain ``k`` draws from stream ``(seed, k)``."""
    return _run(oracle, cfg, seed, list(range(cfg.n_chains)))


def simulate_chain(oracle: GradOracle, cfg: DiffusionConfig, seed: int, chain: int = 0) -> Trajectory:
    return _run(oracle, cfg, seed, [chain])[0]


# ----------------------------------------------------------------------------
# estimators


def _per_chain(samples) -> list[np.ndarray]:
    if isinstance(samples, Trajectory):
        return [samples.post_burn_in()]
    if isinstance(samples, np.ndarray):
        if samples.ndim != 2:
            raise ConfigurationError("samples must be (m, d) or a list of per-chain arrays")
        return [samples]
    out = []
    for s in samples:
        arr = s.post_burn_in() if isinstance(s, Trajectory) else np.asarray(s, dtype=float)
        if arr.ndim != 2:
            raise ConfigurationError("each chain's samples must be a 2-D array")
        out.append(arr)
    return out


def _distances(chains, theta_star):
    ts = np.asarray(theta_star, dtype=float)
    return [np.linalg.norm(c - ts, axis=1) for c in chains]


def _lower_quantile(dist, delta):
    m = dist.shape[0]
    idx = math.ceil(round((1.0 - delta) * m, 9))
    return float(np.sort(dist)[max(idx, 1) - 1])


def _bootstrap(groups, stat, resamples=200, seed=0):
    """Chain-level bootstrap; a single chain is cut into 10 contiguous blocks."""
    if len(groups) == 1:
        groups = [g for g in np.array_split(groups[0], 10) if g.size]
    if len(groups) < 2:
        return 0.0
    rng = make_generator(seed, "bootstrap")
    vals = []
    for _ in range(resamples):
        pick = rng.integers(0, len(groups), len(groups))
        vals.append(stat(np.concatenate([groups[i] for i in pick])))
    return float(np.std(vals, ddof=1))


def estimate_quantile_radius(samples, theta_star, delta: float, bootstrap_seed: int = 0) -> RadiusEstimate:
    """Empirical ``(1 - delta)``-quantile of ``||theta - theta_star||``.

    Lower order statistic: the ``ceil((1 - delta) m)``-th smallest distance.
    """
    if not 0 < delta <= 0.5:
        raise DomainError(f"delta must lie in (0, 0.5], got {delta}")
    dists = _distances(_per_chain(samples), theta_star)
    m = sum(x.shape[0] for x in dists)
    need = math.ceil(round(10.0 / delta, 9))
    if m < need:
        raise EstimationError(f"quantile radius at delta={delta} needs at least {need} samples, got {m}")
    pooled = np.concatenate(dists)
    rho = _lower_quantile(pooled, delta)
    se = _bootstrap(dists, lambda x: _lower_quantile(x, delta), seed=bootstrap_seed)
    return RadiusEstimate(rho, delta, "quantile", se, m)


def _power_mean(dist, p):
    if np.all(dist == 0):
        return 0.0
    with np.errstate(divide="ignore"):
        logd = np.log(dist)
    return float(np.exp((logsumexp(p * logd) - math.log(dist.shape[0])) / p))


def estimate_moment_radius(samples, theta_star, p: float = 2.0, bootstrap_seed: int = 0) -> RadiusEstimate:
    """``(mean ||theta - theta_star||^p)^(1/p)``, accumulated in the log domain."""
    if not p >= 1:
        raise DomainError(f"moment order must be >= 1, got {p}")
    dists = _distances(_per_chain(samples), theta_star)
    m = sum(x.shape[0] for x in dists)
    if m == 0:
        raise EstimationError("moment radius needs at least one sample")
    pooled = np.concatenate(dists)
    rho = _power_mean(pooled, p)
    se = _bootstrap(dists, lambda x: _power_mean(x, p), seed=bootstrap_seed)
    return RadiusEstimate(rho, None, "moment", se, m, moment_order=float(p))


@dataclass(frozen=True)
class ScaleReduction:
    rhat: np.ndarray
    threshold: float = 1.1

    @property
    def flagged(self) -> bool:
        return bool(np.any(~(self.rhat <= self.threshold)))

    @property
    def max(self) -> float:
        return float(np.max(self.rhat))


def split_chain_diagnostic(chains, threshold: float = 1.1) -> ScaleReduction:
    """Split-chain potential scale reduction per coordinate.

    Each chain is halved and the classic between/within variance ratio is
    computed over the ``2m`` halves. Zero within-chain variance returns 1 when
    the halves also agree and ``inf`` otherwise.
    """
    arrays = _per_chain(chains)
    if len(arrays) < 2:
        raise ConfigurationError("split-chain diagnostic needs at least 2 chains")
    lengths = {a.shape[0] for a in arrays}
    if len(lengths) != 1:
        raise ConfigurationError(f"chains have unequal lengths {sorted(lengths)}")
    L = lengths.pop() // 2
    if L < 2:
        raise ConfigurationError("chains too short for a split diagnostic")
    halves = []
    for a in arrays:
        a = a.reshape(a.shape[0], -1)
        halves += [a[:L], a[L : 2 * L]]
    H = np.stack(halves)  # (2m, L, k)
    means = H.mean(axis=1)
    W = H.var(axis=1, ddof=1).mean(axis=0)
    B_over_L = means.var(axis=0, ddof=1)
    var_plus = (L - 1) / L * W + B_over_L
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / W)
    degenerate = W == 0
    rhat = np.where(degenerate, np.where(B_over_L == 0, 1.0, np.inf), rhat)
    return ScaleReduction(rhat, threshold)


def batch_means_summary(chains, n_batches: int = 10):
    """Posterior mean, its batch-means standard error, and the covariance trace."""
    arrays = _per_chain(chains)
    batches = []
    for a in arrays:
        batches += [b.mean(axis=0) for b in np.array_split(a, n_batches) if b.size]
    batches = np.array(batches)
    pooled = np.concatenate(arrays)
    mean = pooled.mean(axis=0)
    stderr = batches.std(axis=0, ddof=1) / math.sqrt(batches.shape[0])
    trace = float(np.trace(np.atleast_2d(np.cov(pooled, rowvar=False))))
    return mean, stderr, trace


def drift_growth(oracle: GradOracle, radii=(1.0, 10.0, 100.0), rays: int = 32, seed: int = 0) -> dict:
    """``min_u <grad U(r u), r u> / r`` over random unit rays, ``U = -n F_n - log pi``.

    A positive, growing profile is the numerical face of the regularity
    condition needed for the diffusion to be well posed; it is reported, not
    proven.
    """
    rng = make_generator(seed, "drift-growth")
    u = rng.standard_normal((rays, oracle.d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    out = {}
    for r in radii:
        th = r * u
        _, drift = oracle.log_target_and_drift(th)
        grad_u = -2.0 * oracle.n * drift
        out[float(r)] = float(np.min(np.sum(grad_u * th, axis=1)) / r)
    return out


# ----------------------------------------------------------------------------
# export


def save_trajectory(traj: Trajectory, path) -> tuple[Path, Path]:
    base = Path(path).with_suffix("")
    csv_path, meta_path = base.with_suffix(".csv"), base.with_suffix(".json")
    with open(csv_path, "w") as fh:
        fh.write(",".join(["step"] + [f"coord{j + 1}" for j in range(traj.d)]) + "\n")
        for s, row in zip(traj.steps, traj.states):
            fh.write(",".join([str(int(s))] + [repr(float(v)) for v in row]) + "\n")
    meta = {
        "seed": traj.seed,
        "chain": traj.chain,
        "h": traj.step_size,
        "sampler": traj.sampler.value,
        "acceptance_rate": traj.acceptance_rate,
        "burn_in": traj.burn_in,
        "fingerprint": traj.fingerprint,
        "warnings": list(traj.warnings),
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return csv_path, meta_path


def load_trajectory(path) -> Trajectory:
    base = Path(path).with_suffix("")
    meta = json.loads(base.with_suffix(".json").read_text())
    with open(base.with_suffix(".csv")) as fh:
        fh.readline()
        table = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=float)
    return Trajectory(
        states=table[:, 1:],
        steps=table[:, 0].astype(int),
        acceptance_rate=meta["acceptance_rate"],
        seed=meta["seed"],
        chain=meta.get("chain", 0),
        step_size=meta["h"],
        sampler=Sampler(meta["sampler"]),
        burn_in=meta["burn_in"],
        fingerprint=meta["fingerprint"],
        warnings=tuple(meta.get("warnings", ())),
    )

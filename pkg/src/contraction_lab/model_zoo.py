"""Statistical models, data generation and log-likelihood gradients.

Four models are supported:

* ``logistic``: ``X ~ N(0, I_d)``, ``P(Y = 1 | X) = sigmoid(X @ theta_star)``,
  responses in ``{-1, +1}``.
* ``single_index``: ``Y = (X @ theta_star)**p + eps`` with standard normal
  noise and covariates.
* ``overspec_gmm``: observations from ``N(theta_star, I_d)`` (a single
  Gaussian when ``theta_star = 0``) fitted with the symmetric two-component
  mixture ``0.5 N(-theta, I) + 0.5 N(theta, I)``.
* ``gaussian_location``: observations from ``N(theta_star, I_d)`` fitted with
  the location model; conjugate to the Gaussian prior, used for calibration.

Log-likelihoods are per-sample averages ``F_n``. Additive terms that do not
depend on ``theta`` (the covariate density ``log phi(X)``) are dropped.
The single-index population log-likelihood is taken as
``-(1 + (2p-1)!! ||theta||^{2p}) / 2`` up to a constant when ``theta_star = 0``,
i.e. maximized at the truth.

All kernels accept a single parameter ``(d,)`` or a batch ``(m, d)`` and
return matching shapes.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit

from .errors import ConfigurationError, NumericError
from .rng import make_generator

LOG2 = float(np.log(2.0))


class ModelKind(str, enum.Enum):
    LOGISTIC = "logistic"
    SINGLE_INDEX = "single_index"
    OVERSPEC_GMM = "overspec_gmm"
    GAUSSIAN_LOCATION = "gaussian_location"


_KIND_ALIASES = {
    "logit": ModelKind.LOGISTIC,
    "logistic": ModelKind.LOGISTIC,
    "single-index": ModelKind.SINGLE_INDEX,
    "single_index": ModelKind.SINGLE_INDEX,
    "index": ModelKind.SINGLE_INDEX,
    "gmm": ModelKind.OVERSPEC_GMM,
    "overspec_gmm": ModelKind.OVERSPEC_GMM,
    "gaussian": ModelKind.GAUSSIAN_LOCATION,
    "gaussian_location": ModelKind.GAUSSIAN_LOCATION,
    "calibration": ModelKind.GAUSSIAN_LOCATION,
}


def parse_kind(kind) -> ModelKind:
    if isinstance(kind, ModelKind):
        return kind
    try:
        return _KIND_ALIASES[str(kind).lower()]
    except KeyError:
        raise ConfigurationError(f"unknown model kind {kind!r}") from None


def _frozen_vector(values, d=None, name="vector") -> tuple[float, ...]:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if d is not None and arr.shape[0] != d:
        raise ConfigurationError(f"{name} has length {arr.shape[0]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite")
    return tuple(float(v) for v in arr)


def double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    d: int
    theta_star: tuple[float, ...]
    p: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", parse_kind(self.kind))
        if int(self.d) != self.d or self.d < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {self.d}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "theta_star", _frozen_vector(self.theta_star, self.d, "theta_star"))
        if self.kind is ModelKind.SINGLE_INDEX:
            p = 2 if self.p is None else self.p
            if int(p) != p or p < 2:
                raise ConfigurationError(f"single-index degree p must be an integer >= 2, got {p}")
            object.__setattr__(self, "p", int(p))
        elif self.p is not None:
            raise ConfigurationError(f"degree p only applies to single_index, not {self.kind.value}")

    @classmethod
    def at_origin(cls, kind, d: int, p: int | None = None) -> "ModelSpec":
        """Model with ``theta_star = 0``, the regime where the singular models are analyzed."""
        return cls(parse_kind(kind), d, np.zeros(d), p)

    @property
    def theta(self) -> np.ndarray:
        arr = np.array(self.theta_star)
        arr.setflags(write=False)
        return arr

    def with_dimension(self, d: int) -> "ModelSpec":
        """Same model in dimension ``d``; ``theta_star`` must be a constant vector (norm kept)."""
        th = self.theta
        if not np.all(th == th[0]):
            raise ConfigurationError("with_dimension needs a constant theta_star to resize")
        norm = float(np.linalg.norm(th))
        return ModelSpec(self.kind, d, np.full(d, norm / np.sqrt(d)), self.p)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "d": self.d, "p": self.p, "theta_star": list(self.theta_star)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        return cls(doc["kind"], doc["d"], doc["theta_star"], doc.get("p"))

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed sample. ``responses`` is ``None`` for the two location models."""

    covariates: np.ndarray
    responses: np.ndarray | None
    n: int
    seed: int
    model_fingerprint: str

    def __post_init__(self):
        X = np.array(self.covariates, dtype=float)
        if X.ndim != 2:
            raise ConfigurationError("covariates must be a 2-D array")
        if self.n < 1 or X.shape[0] != self.n:
            raise ConfigurationError(f"covariates have {X.shape[0]} rows, expected n={self.n}")
        X.setflags(write=False)
        object.__setattr__(self, "covariates", X)
        if self.responses is not None:
            y = np.array(self.responses, dtype=float).reshape(-1)
            if y.shape[0] != self.n:
                raise ConfigurationError(f"responses have length {y.shape[0]}, expected n={self.n}")
            y.setflags(write=False)
            object.__setattr__(self, "responses", y)

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    @property
    def content_hash(self) -> str:
        h = hashlib.sha256(self.covariates.tobytes())
        if self.responses is not None:
            h.update(self.responses.tobytes())
        h.update(self.model_fingerprint.encode())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_y = (self.responses is None and other.responses is None) or (
            self.responses is not None
            and other.responses is not None
            and np.array_equal(self.responses, other.responses)
        )
        return (
            self.n == other.n
            and self.seed == other.seed
            and self.model_fingerprint == other.model_fingerprint
            and np.array_equal(self.covariates, other.covariates)
            and same_y
        )

    __hash__ = None


@dataclass(frozen=True)
class PriorSpec:
    """Isotropic Gaussian prior ``N(mean, scale^2 I)``."""

    mean: tuple[float, ...]
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen_vector(self.mean, name="prior mean"))
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ConfigurationError(f"prior scale must be positive, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def isotropic(cls, d: int, scale: float = 1.0, center: float = 0.0) -> "PriorSpec":
        return cls(np.full(d, center), scale)

    @property
    def mu(self) -> np.ndarray:
        return np.array(self.mean)

    @property
    def d(self) -> int:
        return len(self.mean)

    @property
    def lipschitz(self) -> float:
        return 1.0 / self.scale**2

    def log_density(self, theta) -> np.ndarray:
        """Log density up to the normalizing constant."""
        th = _as_batch(theta, self.d)
        out = -0.5 * np.sum((th - self.mu) ** 2, axis=1) / self.scale**2
        return out if np.ndim(theta) == 2 else out[0]

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "scale": self.scale}

    @classmethod
    def from_dict(cls, doc: dict) -> "PriorSpec":
        return cls(doc["mean"], doc["scale"])

    def resized(self, d: int) -> "PriorSpec":
        mu = self.mu
        if not np.all(mu == mu[0]):
            raise ConfigurationError("only constant prior means can be resized")
        return PriorSpec(np.full(d, mu[0]), self.scale)


@dataclass(frozen=True)
class PopulationConfig:
    """Settings for population-gradient evaluation.

    The mixture model uses composite Gauss-Legendre quadrature with
    ``quad_panels`` panels of ``quad_order`` nodes on each of three pieces
    (left tail, tanh transition, right tail). The logistic model uses
    ``mc_draws`` common-random-number Monte Carlo draws keyed by ``seed``.
    """

    quad_panels: int = 24
    quad_order: int = 16
    mc_draws: int | None = 200_000
    seed: int = 0
    mc_chunk: int = 16


class EvalMode(str, enum.Enum):
    SAMPLE_LOGLIK = "sample_loglik"
    POPULATION_LOGLIK = "population_loglik"
    POSTERIOR_DRIFT = "posterior_drift"


def _as_batch(theta, d) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    if th.ndim == 1:
        th = th[None, :]
    if th.ndim != 2 or th.shape[1] != d:
        raise ConfigurationError(f"theta has shape {np.shape(theta)}, expected ({d},) or (m, {d})")
    return th


def _unbatch(theta, out):
    return out if np.ndim(theta) == 2 else out[0]


def _check_data(spec: ModelSpec, data: Dataset):
    if data.d != spec.d:
        raise ConfigurationError(f"dataset dimension {data.d} does not match model dimension {spec.d}")
    needs_y = spec.kind in (ModelKind.LOGISTIC, ModelKind.SINGLE_INDEX)
    if needs_y and data.responses is None:
        raise ConfigurationError(f"{spec.kind.value} datasets need responses")
    if not needs_y and data.responses is not None:
        raise ConfigurationError(f"{spec.kind.value} datasets carry no responses")
    if spec.kind is ModelKind.LOGISTIC and not np.all(np.abs(data.responses) == 1.0):
        raise ConfigurationError("logistic responses must lie in {-1, +1}")


# ----------------------------------------------------------------------------
# data generation


def generate_dataset(spec: ModelSpec, n: int, seed: int) -> Dataset:
    if int(n) != n or n < 1:
        raise ConfigurationError(f"sample size must be a positive integer, got {n}")
    n = int(n)
    rng = make_generator(seed, "dataset", spec.fingerprint, n)
    th = spec.theta
    X = rng.standard_normal((n, spec.d))
    y = None
    if spec.kind is ModelKind.LOGISTIC:
        prob = expit(X @ th)
        y = np.where(rng.random(n) < prob, 1.0, -1.0)
    elif spec.kind is ModelKind.SINGLE_INDEX:
        y = (X @ th) ** spec.p + rng.standard_normal(n)
    elif spec.kind is ModelKind.OVERSPEC_GMM:
        if np.any(th != 0):
            labels = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            X = X + labels[:, None] * th
    else:
        X = X + th
    return Dataset(X, y, n, int(seed), spec.fingerprint)


# ----------------------------------------------------------------------------
# sample log-likelihood


def _logcosh(s):
    a = np.abs(s)
    return a + np.log1p(np.exp(-2.0 * a)) - LOG2


class _IndexMoments:
    """Moment tensors turning the single-index log-likelihood into a polynomial.

    ``F_n(theta) = -0.5 * (mean y^2 - 2 A[theta^p] + T[theta^2p])`` with
    ``A = mean y x^{(x)p}`` and ``T = mean x^{(x)2p}``.
    """

    max_entries = 1 << 16

    def __init__(self, X, y, p):
        n, d = X.shape
        self.d, self.p = d, p
        self.mean_yy = float(np.mean(y * y))
        self.A = self._moment(X, p, weights=y / n)
        self.T = self._moment(X, 2 * p, weights=np.full(n, 1.0 / n))

    @staticmethod
    def _moment(X, order, weights):
        n, d = X.shape
        out = np.zeros(d**order)
        chunk = max(1, (1 << 22) // d**order)
        for lo in range(0, n, chunk):
            xs = X[lo : lo + chunk]
            prod = weights[lo : lo + chunk, None] * xs
            for _ in range(order - 1):
                prod = (prod[:, :, None] * xs[:, None, :]).reshape(xs.shape[0], -1)
            out += prod.sum(axis=0)
        return out

    @staticmethod
    def _contract(tensor, th, times):
        """Contract the rightmost ``times`` axes of a flat tensor with each row of ``th``."""
        m, d = th.shape
        res = (tensor.reshape(-1, d) @ th.T)  # (d^{k-1}, m)
        for _ in range(times - 1):
            res = np.einsum("ajm,jm->am", res.reshape(-1, d, m), th.T)
        return res  # (d^{k-times}, m)

    def value_and_grad(self, th):
        p = self.p
        a_lin = self._contract(self.A, th, p - 1)  # (d, m)
        t_lin = self._contract(self.T, th, 2 * p - 1)  # (d, m)
        a_full = np.einsum("jm,mj->m", a_lin, th)
        t_full = np.einsum("jm,mj->m", t_lin, th)
        value = -0.5 * (self.mean_yy - 2.0 * a_full + t_full)
        grad = p * (a_lin - t_lin).T
        return value, grad

    @classmethod
    def applicable(cls, n, d, p):
        return d ** (2 * p) <= cls.max_entries and n > d ** p


def _direct_value_and_grad(spec: ModelSpec, X, y, th):
    n = X.shape[0]
    S = X @ th.T  # (n, m)
    if spec.kind is ModelKind.LOGISTIC:
        z = y[:, None] * S
        value = log_expit(z).mean(axis=0)
        w = y[:, None] * expit(-z)
        grad = (X.T @ w).T / n
    elif spec.kind is ModelKind.SINGLE_INDEX:
        p = spec.p
        resid = y[:, None] - S**p
        value = -0.5 * np.mean(resid**2, axis=0)
        w = p * resid * S ** (p - 1)
        grad = (X.T @ w).T / n
    elif spec.kind is ModelKind.OVERSPEC_GMM:
        value = np.mean(_logcosh(S), axis=0) - 0.5 * np.sum(th**2, axis=1)
        grad = (X.T @ np.tanh(S)).T / n - th
    else:
        xbar = X.mean(axis=0)
        sq = np.mean(np.sum(X * X, axis=1))
        value = -0.5 * (sq - 2.0 * th @ xbar + np.sum(th**2, axis=1))
        grad = xbar[None, :] - th
    return value, grad


def _locate_nonfinite(spec, X, y, th_row):
    for i in range(X.shape[0]):
        yi = None if y is None else y[i : i + 1]
        with np.errstate(over="ignore", invalid="ignore"):
            v, g = _direct_value_and_grad(spec, X[i : i + 1], yi, th_row[None, :])
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(g))):
            return i
    return None


def _sample_value_and_grad(spec, data, th, moments=None):
    with np.errstate(over="ignore", invalid="ignore"):
        if moments is not None:
            value, grad = moments.value_and_grad(th)
        else:
            value, grad = _direct_value_and_grad(spec, data.covariates, data.responses, th)
    if not (np.all(np.isfinite(value)) and np.all(np.isfinite(grad))):
        bad = int(np.flatnonzero(~(np.isfinite(value) & np.all(np.isfinite(grad), axis=1)))[0])
        idx = _locate_nonfinite(spec, data.covariates, data.responses, th[bad])
        raise NumericError(f"non-finite log-likelihood term at sample index {idx}", index=idx)
    return value, grad


def sample_loglik(spec: ModelSpec, data: Dataset, theta):
    """``F_n(theta)``."""
    _check_data(spec, data)
    th = _as_batch(theta, spec.d)
    return _unbatch(theta, _sample_value_and_grad(spec, data, th)[0])


def sample_loglik_grad(spec: ModelSpec, data: Dataset, theta):
    """``grad F_n(theta)``."""
    _check_data(spec, data)
    th = _as_batch(theta, spec.d)
    return _unbatch(theta, _sample_value_and_grad(spec, data, th)[1])


# ----------------------------------------------------------------------------
# population gradients


@lru_cache(maxsize=8)
def _legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _composite_nodes(lo, hi, panels, order):
    """Nodes/weights for composite Gauss-Legendre on rows of intervals ``[lo, hi]``."""
    x, w = _legendre(order)
    edges = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, panels + 1)[None, :]
    a, b = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, :, None] + half[:, :, None] * x[None, None, :]
    weights = half[:, :, None] * w[None, None, :]
    return nodes.reshape(lo.shape[0], -1), weights.reshape(lo.shape[0], -1)


GAUSS_TRUNCATION = 10.0
TANH_SATURATION = 20.0


def gaussian_tanh_moments(scale, shift, cfg: PopulationConfig = PopulationConfig()):
    """``E tanh(shift + scale W)`` and ``E W tanh(shift + scale W)`` for ``W ~ N(0, 1)``.

    The integrand turns sharply at ``w0 = -shift / scale`` when ``scale`` is
    large; the transition window gets its own panels so the result stays near
    machine precision for any scale.
    """
    a = np.atleast_1d(np.asarray(scale, dtype=float))
    m = np.broadcast_to(np.atleast_1d(np.asarray(shift, dtype=float)), a.shape)
    L = GAUSS_TRUNCATION
    safe = np.where(a > 0, a, 1.0)
    w0 = np.where(a > 0, -m / safe, 0.0)
    half = np.where(a > 0, TANH_SATURATION / safe, 2 * L)
    mid_lo = np.clip(w0 - half, -L, L)
    mid_hi = np.clip(w0 + half, -L, L)
    pieces = [(np.full_like(a, -L), mid_lo), (mid_lo, mid_hi), (mid_hi, np.full_like(a, L))]
    e0 = np.zeros_like(a)
    e1 = np.zeros_like(a)
    for lo, hi in pieces:
        nodes, weights = _composite_nodes(lo, hi, cfg.quad_panels, cfg.quad_order)
        dens = weights * np.exp(-0.5 * nodes**2) / np.sqrt(2.0 * np.pi)
        t = np.tanh(m[:, None] + a[:, None] * nodes)
        e0 += np.sum(dens * t, axis=1)
        e1 += np.sum(dens * nodes * t, axis=1)
    return e0, e1


def _gmm_population_grad(theta_star, th, cfg):
    a = np.linalg.norm(th, axis=1)
    shift = th @ theta_star
    e0, e1 = gaussian_tanh_moments(a, shift, cfg)
    # X = theta_star + Z; the Z-part of E[X tanh] lies along theta.
    along = np.where(a > 0, e1 / np.where(a > 0, a, 1.0), 0.0)
    return e0[:, None] * theta_star[None, :] + along[:, None] * th - th


@lru_cache(maxsize=4)
def _mc_covariates(d, draws, seed):
    X = make_generator(seed, "population-mc", d, draws).standard_normal((draws, d))
    X.setflags(write=False)
    return X


def _mc_population(terms_fn, d, th, cfg):
    if not cfg.mc_draws:
        raise ConfigurationError("Monte Carlo population gradient needs a positive mc_draws budget")
    X = _mc_covariates(d, int(cfg.mc_draws), cfg.seed)
    draws = X.shape[0]
    mean = np.empty_like(th)
    se = np.empty_like(th)
    for lo in range(0, th.shape[0], cfg.mc_chunk):
        blk = th[lo : lo + cfg.mc_chunk]
        W = terms_fn(X, blk)  # (draws, b): scalar weight per draw, grad term = W * X
        mean[lo : lo + cfg.mc_chunk] = (X.T @ W).T / draws
        second = ((X * X).T @ (W * W)).T / draws
        var = np.maximum(second - mean[lo : lo + cfg.mc_chunk] ** 2, 0.0)
        se[lo : lo + cfg.mc_chunk] = np.sqrt(var / draws)
    return mean, se


def _logistic_terms(theta_star):
    def fn(X, blk):
        # Y integrated out: E[Y X sigmoid(-Y X.theta) | X] = X (sigmoid(X.theta*) - sigmoid(X.theta))
        return expit(X @ theta_star)[:, None] - expit(X @ blk.T)

    return fn


def _index_terms(theta_star, p):
    def fn(X, blk):
        S = X @ blk.T
        return p * ((X @ theta_star)[:, None] ** p - S**p) * S ** (p - 1)

    return fn


def population_grad(spec: ModelSpec, theta, cfg: PopulationConfig = PopulationConfig(), return_stderr=False):
    """``grad F(theta)`` for the population log-likelihood.

    Returns the gradient, or ``(gradient, stderr)`` when ``return_stderr``;
    stderr is zero for closed-form and quadrature routes.
    """
    th = _as_batch(theta, spec.d)
    ts = spec.theta
    se = np.zeros_like(th)
    if spec.kind is ModelKind.GAUSSIAN_LOCATION:
        grad = ts[None, :] - th
    elif spec.kind is ModelKind.OVERSPEC_GMM:
        grad = _gmm_population_grad(ts, th, cfg)
    elif spec.kind is ModelKind.SINGLE_INDEX:
        p = spec.p
        if not np.any(ts):
            sq = np.sum(th**2, axis=1)
            grad = -p * double_factorial(2 * p - 1) * sq[:, None] ** (p - 1) * th
        elif p == 2:
            sq = np.sum(th**2, axis=1)
            dot = th @ ts
            grad = 2.0 * (ts @ ts * th + 2.0 * dot[:, None] * ts[None, :] - 3.0 * sq[:, None] * th)
        else:
            grad, se = _mc_population(_index_terms(ts, p), spec.d, th, cfg)
    else:
        grad, se = _mc_population(_logistic_terms(ts), spec.d, th, cfg)
    if return_stderr:
        return _unbatch(theta, grad), _unbatch(theta, se)
    return _unbatch(theta, grad)


# ----------------------------------------------------------------------------
# prior


def prior_log_grad(prior: PriorSpec, theta):
    th = _as_batch(theta, prior.d)
    return _unbatch(theta, (prior.mu[None, :] - th) / prior.scale**2)


def prior_concentration_bound(prior: PriorSpec, theta_star) -> float:
    """Exact ``sup_theta <grad log pi(theta), theta - theta_star>`` for the Gaussian prior.

    With ``u = theta - theta_star`` and ``a = mu - theta_star`` the objective is
    ``(<a, u> - ||u||^2) / sigma^2``, maximized at ``u = a / 2``.
    """
    ts = np.asarray(theta_star, dtype=float).reshape(-1)
    if ts.shape[0] != prior.d:
        raise ConfigurationError(f"theta_star has length {ts.shape[0]}, prior has dimension {prior.d}")
    gap = prior.mu - ts
    return float(gap @ gap / (4.0 * prior.scale**2))


# ----------------------------------------------------------------------------
# oracle


class GradOracle:
    """Gradient closure over a model, its data and a prior.

    ``mode`` picks what ``__call__`` returns: ``grad F_n``, ``grad F`` or the
    posterior-targeting drift ``0.5 grad F_n + grad log pi / (2n)``.
    Evaluation is pure; the single-index moment tensors are built once at
    construction.
    """

    def __init__(
        self,
        spec: ModelSpec,
        data: Dataset | None = None,
        prior: PriorSpec | None = None,
        mode: EvalMode | str = EvalMode.POSTERIOR_DRIFT,
        population: PopulationConfig = PopulationConfig(),
        use_moments: bool | None = None,
    ):
        self.spec = spec
        self.data = data
        self.prior = prior
        self.mode = EvalMode(mode)
        self.population = population
        if self.mode is not EvalMode.POPULATION_LOGLIK:
            if data is None:
                raise ConfigurationError(f"{self.mode.value} mode needs a dataset")
            _check_data(spec, data)
        if self.mode is EvalMode.POSTERIOR_DRIFT:
            if prior is None:
                raise ConfigurationError("posterior drift needs a prior")
            if prior.d != spec.d:
                raise ConfigurationError(f"prior dimension {prior.d} does not match model dimension {spec.d}")
        self._moments = None
        if data is not None and spec.kind is ModelKind.SINGLE_INDEX:
            if use_moments is None:
                use_moments = _IndexMoments.applicable(data.n, spec.d, spec.p)
            if use_moments:
                self._moments = _IndexMoments(data.covariates, data.responses, spec.p)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def theta_star(self) -> np.ndarray:
        return self.spec.theta

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256(self.mode.value.encode())
        h.update(self.spec.fingerprint.encode())
        if self.data is not None:
            h.update(self.data.content_hash.encode())
        if self.prior is not None:
            h.update(json.dumps(self.prior.to_dict(), sort_keys=True).encode())
        return h.hexdigest()[:16]

    def loglik_value_and_grad(self, theta):
        th = _as_batch(theta, self.d)
        v, g = _sample_value_and_grad(self.spec, self.data, th, self._moments)
        return _unbatch(theta, v), _unbatch(theta, g)

    def log_target_and_drift(self, theta):
        """Per-sample log posterior ``F_n + log pi / n`` (up to a constant) and the drift."""
        th = _as_batch(theta, self.d)
        v, g = _sample_value_and_grad(self.spec, self.data, th, self._moments)
        n = self.data.n
        logt = v + self.prior.log_density(th) / n
        drift = 0.5 * g + 0.5 * prior_log_grad(self.prior, th) / n
        return _unbatch(theta, logt), _unbatch(theta, drift)

    def __call__(self, theta):
        if self.mode is EvalMode.POPULATION_LOGLIK:
            return population_grad(self.spec, theta, self.population)
        if self.mode is EvalMode.SAMPLE_LOGLIK:
            return self.loglik_value_and_grad(theta)[1]
        return self.log_target_and_drift(theta)[1]


def posterior_oracle(spec: ModelSpec, data: Dataset, prior: PriorSpec, **kwargs) -> GradOracle:
    return GradOracle(spec, data, prior, EvalMode.POSTERIOR_DRIFT, **kwargs)


# ----------------------------------------------------------------------------
# CSV + JSON sidecar


def save_dataset(spec: ModelSpec, data: Dataset, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (header ``x1..xd[,y]``) and ``<path>.json``."""
    base = Path(path).with_suffix("")
    csv_path, meta_path = base.with_suffix(".csv"), base.with_suffix(".json")
    header = [f"x{j + 1}" for j in range(data.d)]
    cols = [data.covariates]
    if data.responses is not None:
        header.append("y")
        cols.append(data.responses[:, None])
    table = np.hstack(cols)
    with open(csv_path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    meta = {
        "kind": spec.kind.value,
        "d": spec.d,
        "p": spec.p,
        "theta_star": list(spec.theta_star),
        "n": data.n,
        "seed": data.seed,
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return csv_path, meta_path


def load_dataset(path) -> tuple[ModelSpec, Dataset]:
    base = Path(path).with_suffix("")
    meta = json.loads(base.with_suffix(".json").read_text())
    spec = ModelSpec(meta["kind"], meta["d"], meta["theta_star"], meta.get("p"))
    with open(base.with_suffix(".csv")) as fh:
        header = fh.readline().strip().split(",")
        table = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=float)
    expected = [f"x{j + 1}" for j in range(spec.d)]
    has_y = header[-1] == "y"
    if header[: spec.d] != expected or len(header) != spec.d + int(has_y):
        raise ConfigurationError(f"unexpected dataset header {header}")
    X = table[:, : spec.d]
    y = table[:, spec.d] if has_y else None
    data = Dataset(X, y, int(meta["n"]), int(meta["seed"]), spec.fingerprint)
    _check_data(spec, data)
    return spec, data

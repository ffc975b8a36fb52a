import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contraction_lab.errors import ChainAbort, ConfigurationError, DomainError, EstimationError, NumericError
from contraction_lab.langevin import (
    DiffusionConfig,
    Sampler,
    batch_means_summary,
    default_step_size,
    drift_growth,
    estimate_moment_radius,
    estimate_quantile_radius,
    load_trajectory,
    save_trajectory,
    simulate_chain,
    simulate_chains,
    split_chain_diagnostic,
)
from contraction_lab.model_zoo import ModelKind, ModelSpec, PriorSpec, generate_dataset, posterior_oracle
from contraction_lab.rng import make_generator

import oracles


class ZeroDrift:
    """Flat target: zero drift and constant log density."""

    def __init__(self, d, n):
        self.d, self.n = d, n
        self.theta_star = np.zeros(d)
        self.prior = PriorSpec.isotropic(d)
        self.fingerprint = "zero"

    def log_target_and_drift(self, theta):
        th = np.atleast_2d(theta)
        return np.zeros(th.shape[0]), np.zeros_like(th)


class Exploding(ZeroDrift):
    def log_target_and_drift(self, theta):
        th = np.atleast_2d(theta)
        if np.any(np.abs(th) > 0.5):
            raise NumericError("blew up", index=0)
        return np.zeros(th.shape[0]), np.full_like(th, 1.0)


def calibration(n=1000, d=3, seed=1, sigma=1.0):
    spec = ModelSpec(ModelKind.GAUSSIAN_LOCATION, d, np.zeros(d))
    data = generate_dataset(spec, n, seed)
    prior = PriorSpec.isotropic(d, sigma)
    return spec, data, prior, posterior_oracle(spec, data, prior)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DiffusionConfig(step_size=0.0)
    with pytest.raises(ConfigurationError):
        DiffusionConfig(n_steps=10, burn_in=10)
    with pytest.raises(ConfigurationError):
        DiffusionConfig(inverse_temperature=-1.0)
    with pytest.raises(ConfigurationError):
        DiffusionConfig(init="somewhere")
    with pytest.raises(ConfigurationError):
        DiffusionConfig(n_chains=0)
    cfg = DiffusionConfig(init=(1.0, 2.0), sampler="ula")
    assert cfg.sampler is Sampler.ULA and DiffusionConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_drift_single_step_is_scaled_noise():
    h, n = 0.3, 50
    cfg = DiffusionConfig(step_size=h, n_steps=1, burn_in=0, n_chains=1, sampler="ula")
    traj = simulate_chain(ZeroDrift(2, n), cfg, seed=42)
    xi0 = make_generator(42, "chain", 0).standard_normal((256, 2))[0]
    assert np.array_equal(traj.states[0], math.sqrt(h / n) * xi0)
    assert traj.acceptance_rate == 1.0


def test_trajectories_are_bit_identical():
    *_, oracle = calibration()
    cfg = DiffusionConfig(n_steps=600, burn_in=300, n_chains=3)
    a = simulate_chains(oracle, cfg, 7)
    b = simulate_chains(oracle, cfg, 7)
    assert all(x == y for x, y in zip(a, b))
    assert all(x.states.tobytes() == y.states.tobytes() for x, y in zip(a, b))
    c = simulate_chains(oracle, cfg, 8)
    assert not np.array_equal(a[0].states, c[0].states)


def test_chain_streams_do_not_depend_on_chain_count():
    *_, oracle = calibration()
    cfg = DiffusionConfig(step_size=0.5, n_steps=200, burn_in=100, n_chains=3)
    trio = simulate_chains(oracle, cfg, 4)
    solo = simulate_chain(oracle, cfg, 4, chain=2)
    assert np.array_equal(trio[2].states, solo.states)


def test_thinning_and_post_burn_in():
    *_, oracle = calibration()
    traj = simulate_chain(oracle, DiffusionConfig(step_size=0.5, n_steps=100, burn_in=40, thinning=5), 1)
    assert traj.states.shape == (20, 3)
    assert list(traj.steps[:3]) == [5, 10, 15]
    assert traj.post_burn_in().shape == (12, 3)


def test_init_modes():
    spec, data, prior, oracle = calibration()
    cfg = DiffusionConfig(step_size=1e-9, n_steps=1, burn_in=0, n_chains=2, sampler="ula", init=(1.0, 1.0, 1.0))
    assert np.allclose(simulate_chains(oracle, cfg, 0)[0].states[0], 1.0, atol=1e-4)
    cfg = DiffusionConfig(step_size=1e-12, n_steps=1, burn_in=0, n_chains=2, sampler="ula", init="from_prior")
    first = [t.states[0] for t in simulate_chains(oracle, cfg, 0)]
    assert not np.allclose(first[0], first[1])
    with pytest.raises(ConfigurationError):
        simulate_chain(oracle, DiffusionConfig(init=(1.0,), n_steps=2, burn_in=0), 0)


def test_mala_tiny_step_accepts_everything():
    *_, oracle = calibration()
    cfg = DiffusionConfig(step_size=1e-12, n_steps=2000, burn_in=0, n_chains=2)
    assert all(t.acceptance_rate >= 0.999 for t in simulate_chains(oracle, cfg, 3))


def test_default_step_size_and_adaptation():
    *_, oracle = calibration()
    h0 = default_step_size(oracle, oracle.theta_star, 0)
    assert 0.3 < h0 < 0.7  # the drift's Lipschitz constant is about 1
    chains = simulate_chains(oracle, DiffusionConfig(n_steps=4000, burn_in=2000, n_chains=4), 5)
    assert all(0.35 <= t.acceptance_rate <= 0.85 for t in chains)


def test_conjugate_mean_and_trace():
    spec, data, prior, oracle = calibration(n=500)
    chains = simulate_chains(oracle, DiffusionConfig(n_steps=8000, burn_in=2000, n_chains=4), 11)
    mean, se, trace = batch_means_summary(chains)
    ref_mean, ref_var = oracles.conjugate_posterior(data.covariates, prior.mu, prior.scale)
    assert np.all(np.abs(mean - ref_mean) <= 3.5 * se)
    assert abs(trace / (3 * ref_var) - 1) < 0.05


def test_ula_bias_shrinks_with_step():
    spec, data, prior, oracle = calibration(n=200, d=2)
    h0 = default_step_size(oracle, oracle.theta_star, 0)
    _, ref_var = oracles.conjugate_posterior(data.covariates, prior.mu, prior.scale)
    bias = []
    for h in (4 * h0, 2 * h0, h0):
        cfg = DiffusionConfig(step_size=h, n_steps=40_000, burn_in=2_000, n_chains=4, sampler="ula")
        _, _, trace = batch_means_summary(simulate_chains(oracle, cfg, 2))
        bias.append(abs(trace / (2 * ref_var) - 1))
    assert bias[0] > bias[1] > bias[2]


def test_ula_non_finite_aborts_with_step():
    cfg = DiffusionConfig(step_size=0.1, n_steps=50, burn_in=0, sampler="ula")
    with pytest.raises(ChainAbort) as info:
        simulate_chain(Exploding(1, 10), cfg, 0)
    assert 1 <= info.value.step <= 50 and np.all(np.abs(info.value.last_state) <= 0.5)


class InfiniteDrift(ZeroDrift):
    def log_target_and_drift(self, theta):
        th = np.atleast_2d(theta)
        drift = np.where(np.abs(th) > 0.3, np.inf, 0.0)
        return np.zeros(th.shape[0]), drift


def test_ula_non_finite_state_aborts():
    cfg = DiffusionConfig(step_size=0.1, n_steps=500, burn_in=0, sampler="ula")
    with pytest.raises(ChainAbort, match="non-finite state") as info:
        simulate_chain(InfiniteDrift(1, 10), cfg, 0)
    assert np.all(np.isfinite(info.value.last_state))


def test_mala_rejects_non_finite_proposals():
    cfg = DiffusionConfig(step_size=0.1, n_steps=500, burn_in=0)
    traj = simulate_chain(InfiniteDrift(1, 10), cfg, 0)
    assert np.all(np.isfinite(traj.states))


def test_low_acceptance_warning():
    *_, oracle = calibration()
    traj = simulate_chain(oracle, DiffusionConfig(step_size=500.0, n_steps=2000, burn_in=500), 0)
    assert traj.acceptance_rate < 0.01
    assert traj.warnings and "below 1%" in traj.warnings[0]


def test_trajectory_csv_round_trip(tmp_path):
    *_, oracle = calibration()
    traj = simulate_chain(oracle, DiffusionConfig(n_steps=300, burn_in=100), 3)
    csv_path, meta_path = save_trajectory(traj, tmp_path / "t")
    assert csv_path.read_text().splitlines()[0] == "step,coord1,coord2,coord3"
    import json

    meta = json.loads(meta_path.read_text())
    assert {"seed", "h", "sampler", "acceptance_rate", "fingerprint"} <= set(meta)
    assert load_trajectory(csv_path) == traj


# --- radius estimators ---------------------------------------------------------


def test_quantile_radius_examples():
    ts = np.zeros(2)
    assert estimate_quantile_radius(np.zeros((200, 2)), ts, 0.1).rho == 0.0
    pts = np.column_stack([np.arange(1, 101, dtype=float), np.zeros(100)])
    assert estimate_quantile_radius(pts, ts, 0.1).rho == 90.0
    with pytest.raises(EstimationError, match="100"):
        estimate_quantile_radius(pts[:99], ts, 0.1)
    for bad in (0.0, 0.6, 1.0):
        with pytest.raises(DomainError):
            estimate_quantile_radius(pts, ts, bad)


@given(seed=st.integers(0, 10_000), angle=st.floats(0, 2 * math.pi))
def test_quantile_radius_rotation_invariant(seed, angle):
    rng = np.random.default_rng(seed)
    ts = rng.normal(size=2)
    pts = ts + rng.normal(size=(300, 2))
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    turned = ts + (pts - ts) @ rot.T
    a = estimate_quantile_radius(pts, ts, 0.1).rho
    b = estimate_quantile_radius(turned, ts, 0.1).rho
    assert math.isclose(a, b, rel_tol=1e-12)


def test_quantile_radius_bootstrap_uses_chains():
    rng = np.random.default_rng(0)
    chains = [rng.normal(size=(500, 2)) for _ in range(4)]
    est = estimate_quantile_radius(chains, np.zeros(2), 0.1)
    assert est.n_samples == 2000 and 0 < est.mc_stderr < 0.2


def test_moment_radius_examples():
    assert estimate_moment_radius(np.array([[2.0, 0.0]]), np.zeros(2), 7.0).rho == pytest.approx(2.0, rel=1e-15)
    u = np.random.default_rng(0).normal(size=(50, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    assert estimate_moment_radius(u, np.zeros(3), 2.0).rho == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(DomainError):
        estimate_moment_radius(u, np.zeros(3), 0.5)


def test_moment_radius_survives_huge_orders():
    pts = np.array([[1e3, 0.0], [2e3, 0.0]])
    rho = estimate_moment_radius(pts, np.zeros(2), 500.0).rho
    assert math.isfinite(rho) and 1.99e3 < rho <= 2e3


@given(seed=st.integers(0, 10_000))
def test_moment_radius_monotone_in_order(seed):
    pts = np.random.default_rng(seed).normal(size=(40, 3))
    vals = [estimate_moment_radius(pts, np.zeros(3), p).rho for p in (1, 1.5, 2, 4, 8, 16)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


# --- diagnostics ---------------------------------------------------------------


def test_split_rhat_identical_constant_chains():
    c = np.full((100, 2), 3.0)
    assert np.allclose(split_chain_diagnostic([c, c.copy()]).rhat, 1.0, atol=1e-12, rtol=0)


def test_split_rhat_stationary_chains():
    rng = np.random.default_rng(0)
    chains = [rng.normal(size=(10_000, 3)) for _ in range(4)]
    assert split_chain_diagnostic(chains).max < 1.05


def test_split_rhat_detects_offset():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(1000, 2)), rng.normal(size=(1000, 2))
    b[:, 0] += 10
    r = split_chain_diagnostic([a, b])
    assert r.rhat[0] > 2 and r.rhat[1] < 1.1 and r.flagged


def test_split_rhat_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        split_chain_diagnostic([np.zeros((10, 1)), np.zeros((12, 1))])
    with pytest.raises(ConfigurationError):
        split_chain_diagnostic([np.zeros((10, 1))])


def test_drift_growth_is_positive_for_logistic():
    spec = ModelSpec(ModelKind.LOGISTIC, 3, np.full(3, 1 / math.sqrt(3)))
    data = generate_dataset(spec, 500, 0)
    growth = drift_growth(posterior_oracle(spec, data, PriorSpec.isotropic(3)), radii=(1.0, 10.0, 100.0))
    assert growth[100.0] > growth[10.0] > 0

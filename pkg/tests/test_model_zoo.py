import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contraction_lab.errors import ConfigurationError, NumericError
from contraction_lab.model_zoo import (
    Dataset,
    EvalMode,
    GradOracle,
    ModelKind,
    ModelSpec,
    PopulationConfig,
    PriorSpec,
    gaussian_tanh_moments,
    generate_dataset,
    load_dataset,
    population_grad,
    prior_concentration_bound,
    prior_log_grad,
    sample_loglik,
    sample_loglik_grad,
    save_dataset,
)

import oracles


def logistic(d=3):
    return ModelSpec(ModelKind.LOGISTIC, d, np.full(d, 1 / math.sqrt(d)))


ALL_SPECS = [
    logistic(3),
    ModelSpec.at_origin(ModelKind.SINGLE_INDEX, 3, 2),
    ModelSpec(ModelKind.SINGLE_INDEX, 2, (0.5, -0.3), 3),
    ModelSpec.at_origin(ModelKind.OVERSPEC_GMM, 3),
    ModelSpec(ModelKind.OVERSPEC_GMM, 2, (0.7, 0.2)),
    ModelSpec(ModelKind.GAUSSIAN_LOCATION, 3, (1.0, -1.0, 0.5)),
]


# --- specs and datasets ------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ModelSpec(ModelKind.LOGISTIC, 0, ())
    with pytest.raises(ConfigurationError):
        ModelSpec(ModelKind.SINGLE_INDEX, 2, (0, 0), 1)
    with pytest.raises(ConfigurationError):
        ModelSpec(ModelKind.LOGISTIC, 2, (0, 0), 2)
    with pytest.raises(ConfigurationError):
        ModelSpec(ModelKind.LOGISTIC, 2, (0, 0, 0))
    with pytest.raises(ConfigurationError):
        ModelSpec("nonsense", 2, (0, 0))


def test_at_origin_and_resizing():
    s = ModelSpec.at_origin("gmm", 5)
    assert s.kind is ModelKind.OVERSPEC_GMM and s.theta_star == (0.0,) * 5
    assert ModelSpec.at_origin("single_index", 3).p == 2
    lg = logistic(4).with_dimension(9)
    assert lg.d == 9 and math.isclose(np.linalg.norm(lg.theta), 1.0)
    with pytest.raises(ValueError):
        lg.theta[0] = 3.0


def test_spec_round_trip():
    for spec in ALL_SPECS:
        assert ModelSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_generate_validates_n():
    with pytest.raises(ConfigurationError):
        generate_dataset(logistic(), 0, 1)
    with pytest.raises(ConfigurationError):
        generate_dataset(logistic(), 2.5, 1)


def test_dataset_invariants():
    X = np.zeros((3, 2))
    with pytest.raises(ConfigurationError):
        Dataset(X, None, 4, 0, "x")
    with pytest.raises(ConfigurationError):
        Dataset(X, np.ones(2), 3, 0, "x")
    spec = ModelSpec(ModelKind.LOGISTIC, 2, (0.0, 0.0))
    bad = Dataset(X, np.array([1.0, 0.0, -1.0]), 3, 0, spec.fingerprint)
    with pytest.raises(ConfigurationError):
        sample_loglik_grad(spec, bad, np.zeros(2))


def test_logistic_labels_are_fair_at_zero():
    spec = ModelSpec.at_origin(ModelKind.LOGISTIC, 2)
    data = generate_dataset(spec, 100_000, 11)
    assert set(np.unique(data.responses)) == {-1.0, 1.0}
    assert abs(data.responses.mean()) <= 3 / math.sqrt(data.n)


def test_single_index_noise_variance():
    data = generate_dataset(ModelSpec.at_origin(ModelKind.SINGLE_INDEX, 3), 100_000, 5)
    assert abs(np.var(data.responses, ddof=1) - 1.0) <= 0.05


def test_gmm_observations_standard_normal():
    data = generate_dataset(ModelSpec.at_origin(ModelKind.OVERSPEC_GMM, 4), 100_000, 2)
    assert data.responses is None
    assert np.all(np.abs(data.covariates.mean(axis=0)) <= 3 / math.sqrt(data.n))
    assert np.allclose(np.cov(data.covariates, rowvar=False), np.eye(4), atol=0.02)


def test_generation_is_reproducible():
    spec = logistic()
    a, b = generate_dataset(spec, 50, 9), generate_dataset(spec, 50, 9)
    assert a == b and a.content_hash == b.content_hash
    assert generate_dataset(spec, 50, 10) != a


def test_dataset_csv_round_trip(tmp_path):
    for spec in ALL_SPECS:
        data = generate_dataset(spec, 17, 3)
        csv_path, meta_path = save_dataset(spec, data, tmp_path / spec.kind.value)
        header = csv_path.read_text().splitlines()[0]
        cols = [f"x{j + 1}" for j in range(spec.d)] + (["y"] if data.responses is not None else [])
        assert header == ",".join(cols)
        assert set(json.loads(meta_path.read_text())) == {"kind", "d", "p", "theta_star", "n", "seed"}
        spec2, data2 = load_dataset(csv_path)
        assert spec2 == spec and data2 == data


# --- sample gradients --------------------------------------------------------


def test_gmm_gradient_vanishes_at_zero():
    spec = ModelSpec.at_origin(ModelKind.OVERSPEC_GMM, 3)
    data = generate_dataset(spec, 100, 1)
    assert np.array_equal(sample_loglik_grad(spec, data, np.zeros(3)), np.zeros(3))


def test_logistic_single_point():
    spec = ModelSpec(ModelKind.LOGISTIC, 2, (0.0, 0.0))
    data = Dataset(np.array([[1.0, 0.0]]), np.array([1.0]), 1, 0, spec.fingerprint)
    assert np.allclose(sample_loglik_grad(spec, data, np.zeros(2)), [0.5, 0.0], rtol=0, atol=1e-15)


def test_single_index_single_point():
    spec = ModelSpec(ModelKind.SINGLE_INDEX, 2, (0.0, 0.0), 2)
    data = Dataset(np.array([[1.0, 0.0]]), np.array([2.0]), 1, 0, spec.fingerprint)
    assert np.allclose(sample_loglik_grad(spec, data, np.array([1.0, 0.0])), [2.0, 0.0], rtol=0, atol=1e-15)


@pytest.mark.parametrize("spec", ALL_SPECS[:5], ids=lambda s: f"{s.kind.value}-{s.d}")
def test_gradients_match_loops(spec):
    data = generate_dataset(spec, 200, 4)
    rng = np.random.default_rng(0)
    for _ in range(3):
        th = rng.normal(size=spec.d)
        g = sample_loglik_grad(spec, data, th)
        if spec.kind is ModelKind.LOGISTIC:
            ref = oracles.logistic_grad_loop(data.covariates, data.responses, th)
        elif spec.kind is ModelKind.SINGLE_INDEX:
            ref = oracles.single_index_grad_loop(data.covariates, data.responses, th, spec.p)
        else:
            ref = oracles.gmm_grad_loop(data.covariates, th)
        assert np.allclose(g, ref, rtol=1e-11, atol=1e-12)


def test_moment_path_matches_direct_sum():
    spec = ModelSpec(ModelKind.SINGLE_INDEX, 3, (0.2, 0.0, -0.4), 2)
    data = generate_dataset(spec, 500, 8)
    fast = GradOracle(spec, data, mode=EvalMode.SAMPLE_LOGLIK, use_moments=True)
    slow = GradOracle(spec, data, mode=EvalMode.SAMPLE_LOGLIK, use_moments=False)
    th = np.random.default_rng(1).normal(size=(6, 3))
    v1, g1 = fast.loglik_value_and_grad(th)
    v2, g2 = slow.loglik_value_and_grad(th)
    assert np.allclose(v1, v2, rtol=1e-11) and np.allclose(g1, g2, rtol=1e-10, atol=1e-12)


def _fd_gradient(f, th, step):
    g = np.zeros_like(th)
    for j in range(th.size):
        e = np.zeros_like(th)
        e[j] = step
        g[j] = (f(th + e) - f(th - e)) / (2 * step)
    return g


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind.value}-{s.d}-{s.p}")
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.05, 2.0))
def test_gradient_matches_finite_differences(spec, seed, scale):
    rng = np.random.default_rng(seed)
    data = generate_dataset(spec, 64, seed)
    th = spec.theta + scale * rng.normal(size=spec.d) / math.sqrt(spec.d)
    g = sample_loglik_grad(spec, data, th)
    step = 1e-5 * (1 + np.linalg.norm(th))
    fd = _fd_gradient(lambda t: float(sample_loglik(spec, data, t)), th, step)
    assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1e-3)


def test_batched_evaluation_matches_rows():
    for spec in ALL_SPECS:
        data = generate_dataset(spec, 40, 2)
        th = np.random.default_rng(5).normal(size=(4, spec.d))
        batch = sample_loglik_grad(spec, data, th)
        rows = np.stack([sample_loglik_grad(spec, data, t) for t in th])
        assert np.allclose(batch, rows, rtol=1e-13, atol=1e-15)


def test_dimension_mismatch_is_configuration_error():
    spec = logistic(3)
    data = generate_dataset(spec, 10, 0)
    with pytest.raises(ConfigurationError):
        sample_loglik_grad(spec, data, np.zeros(2))
    with pytest.raises(ConfigurationError):
        sample_loglik_grad(logistic(4), data, np.zeros(4))


def test_non_finite_reports_index():
    spec = ModelSpec(ModelKind.SINGLE_INDEX, 1, (0.0,), 2)
    X = np.array([[1.0], [1e200], [2.0]])
    data = Dataset(X, np.zeros(3), 3, 0, spec.fingerprint)
    with pytest.raises(NumericError) as info:
        sample_loglik_grad(spec, data, np.array([1.0]))
    assert info.value.index == 1


# --- population gradients ----------------------------------------------------


@pytest.mark.parametrize("spec", [ModelSpec.at_origin(k, 3) for k in ModelKind], ids=lambda s: s.kind.value)
def test_population_grad_zero_at_truth(spec):
    assert np.allclose(population_grad(spec, np.zeros(3)), 0.0, atol=1e-15)


def test_gmm_population_grad_is_odd():
    spec = ModelSpec.at_origin(ModelKind.OVERSPEC_GMM, 3)
    th = np.array([0.3, -1.2, 0.8])
    assert np.array_equal(population_grad(spec, -th), -population_grad(spec, th))


@pytest.mark.parametrize("norm", [1e-3, 0.1, 0.7, 1.0, math.sqrt(2), 3.0, 8.0, 25.0])
def test_gmm_population_grad_quadrature_accuracy(norm):
    spec = ModelSpec.at_origin(ModelKind.OVERSPEC_GMM, 2)
    th = norm * np.array([0.6, 0.8])
    assert np.allclose(population_grad(spec, th), oracles.gmm_population_grad_quad(th), rtol=1e-10, atol=1e-12)


def test_gaussian_tanh_moments_limits():
    m0, m1 = gaussian_tanh_moments(np.array([1e-9]), np.array([0.0]))
    assert abs(m0[0]) < 1e-15 and abs(m1[0] - 1e-9) < 1e-15
    big0, big1 = gaussian_tanh_moments(np.array([200.0]), np.array([0.0]))
    ref = oracles.gmm_population_grad_quad(np.array([200.0]))[0] + 200.0
    assert abs(big0[0]) < 1e-12 and abs(big1[0] - ref) < 1e-12
    assert abs(big1[0] - math.sqrt(2 / math.pi)) < 2e-5


def test_gmm_population_grad_general_truth_against_lln():
    spec = ModelSpec(ModelKind.OVERSPEC_GMM, 2, (0.8, -0.4))
    th = np.array([0.5, 0.1])
    data = generate_dataset(spec, 400_000, 3)
    assert np.allclose(sample_loglik_grad(spec, data, th), population_grad(spec, th), atol=5e-3)


def test_single_index_closed_form():
    spec = ModelSpec.at_origin(ModelKind.SINGLE_INDEX, 3, 2)
    e1 = np.array([1.0, 0.0, 0.0])
    g = population_grad(spec, e1)
    assert np.allclose(g, -6 * e1, rtol=0, atol=1e-15)
    assert math.isclose(g @ (spec.theta - e1), 6.0)


def test_single_index_p3_general_truth_closed_form_vs_mc():
    spec = ModelSpec(ModelKind.SINGLE_INDEX, 2, (0.4, 0.2), 2)
    th = np.array([0.1, -0.5])
    data = generate_dataset(spec, 400_000, 7)
    assert np.allclose(sample_loglik_grad(spec, data, th), population_grad(spec, th), atol=1e-2)


def test_logistic_population_grad_mc():
    spec = logistic(3)
    th = np.array([0.2, -0.1, 0.9])
    g, se = population_grad(spec, th, return_stderr=True)
    assert np.all(se > 0) and np.all(se < 5e-3)
    data = generate_dataset(spec, 400_000, 3)
    assert np.all(np.abs(sample_loglik_grad(spec, data, th) - g) < 6 * se + 4 / math.sqrt(data.n))
    assert np.array_equal(g, population_grad(spec, th))


def test_logistic_population_requires_budget():
    with pytest.raises(ConfigurationError):
        population_grad(logistic(2), np.zeros(2), PopulationConfig(mc_draws=None))


def test_lln_slope_for_singular_models():
    for spec in (ModelSpec.at_origin(ModelKind.OVERSPEC_GMM, 2), ModelSpec.at_origin(ModelKind.SINGLE_INDEX, 2)):
        th = np.array([0.6, -0.3])
        errs = []
        for n in (10_000, 100_000, 1_000_000):
            reps = [sample_loglik_grad(spec, generate_dataset(spec, n, k), th) for k in range(4)]
            errs.append(np.mean([np.linalg.norm(r - population_grad(spec, th)) for r in reps]))
        slope = np.polyfit(np.log10([1e4, 1e5, 1e6]), np.log10(errs), 1)[0]
        assert -0.8 < slope < -0.25


# --- prior ---------------------------------------------------------------------


def test_prior_gradient():
    prior = PriorSpec.isotropic(3)
    assert np.array_equal(prior_log_grad(prior, np.zeros(3)), np.zeros(3))
    assert np.array_equal(prior_log_grad(prior, np.array([1.0, 0, 0])), [-1.0, 0, 0])
    th = np.array([0.3, -2.0, 1.0])
    wide = PriorSpec(prior.mean, 2.0)
    assert np.allclose(prior_log_grad(wide, th), prior_log_grad(prior, th) / 4)
    assert prior.lipschitz == 1.0 and wide.lipschitz == 0.25
    with pytest.raises(ConfigurationError):
        PriorSpec((0.0,), 0.0)


def test_prior_concentration_bound_examples():
    assert prior_concentration_bound(PriorSpec((1.0, 2.0), 1.0), np.array([1.0, 2.0])) == 0.0
    assert prior_concentration_bound(PriorSpec((2.0, 0.0), 1.0), np.zeros(2)) == 1.0
    assert prior_concentration_bound(PriorSpec((2.0, 0.0), 2.0), np.zeros(2)) == 0.25


@given(seed=st.integers(0, 10_000))
def test_prior_concentration_bound_is_supremum(seed):
    from scipy.optimize import minimize

    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5))
    prior = PriorSpec(rng.normal(size=d) * 2, float(rng.uniform(0.3, 3)))
    ts = rng.normal(size=d)
    B = prior_concentration_bound(prior, ts)
    obj = lambda t: -float(prior_log_grad(prior, t) @ (t - ts))
    best = max(-minimize(obj, rng.normal(size=d) * 3).fun for _ in range(3))
    assert best <= B + 1e-9
    assert best >= B - 1e-6


# --- oracle --------------------------------------------------------------------


def test_oracle_modes():
    spec = logistic(2)
    data = generate_dataset(spec, 100, 1)
    prior = PriorSpec.isotropic(2, 2.0)
    th = np.array([0.3, 0.4])
    drift = GradOracle(spec, data, prior)(th)
    ref = 0.5 * sample_loglik_grad(spec, data, th) + 0.5 * prior_log_grad(prior, th) / data.n
    assert np.allclose(drift, ref, rtol=1e-14)
    assert np.array_equal(GradOracle(spec, data, mode="sample_loglik")(th), sample_loglik_grad(spec, data, th))
    assert np.array_equal(GradOracle(spec, mode="population_loglik")(th), population_grad(spec, th))
    with pytest.raises(ConfigurationError):
        GradOracle(spec, None, prior)
    with pytest.raises(ConfigurationError):
        GradOracle(spec, data, None)


def test_oracle_is_deterministic():
    spec = ModelSpec.at_origin(ModelKind.OVERSPEC_GMM, 3)
    data = generate_dataset(spec, 300, 1)
    a = GradOracle(spec, data, PriorSpec.isotropic(3))
    b = GradOracle(spec, generate_dataset(spec, 300, 1), PriorSpec.isotropic(3))
    th = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(a(th), b(th)) and a.fingerprint == b.fingerprint

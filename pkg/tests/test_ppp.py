import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imbreg.deformed import exp_q, ln_exp_q
from imbreg.io import DataError
from imbreg.ppp import (
    CovariateDistribution,
    DivergenceDetected,
    EventSample,
    HyperplaneSupportError,
    PointProcessModel,
    fit_additive_smoothing,
    penalized_objective,
    penalized_objective_derivatives,
    point_process_log_likelihood,
    q_exponential_density,
    region_intensity,
    theta_contains,
    total_intensity,
)

QS = [-1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0]


def two_point(p0):
    return CovariateDistribution(np.array([[0.0], [1.0]]), np.array([p0, 1.0 - p0]))


def three_point():
    return CovariateDistribution(np.array([[0.0], [1.0], [2.0]]), np.full(3, 1.0 / 3.0))


def random_instance(rng, p=None, J=None):
    p = p or int(rng.integers(1, 3))
    J = J or int(rng.integers(max(3, p + 1), 9))
    while True:
        support = np.round(rng.uniform(-1.0, 1.0, (J, p)), 3)
        if len({tuple(r) for r in support}) == J and np.linalg.matrix_rank(support - support.mean(0)) == p:
            break
    w = rng.uniform(0.2, 1.0, J)
    return CovariateDistribution(support, w / w.sum())


# -- parameter set and intensities -------------------------------------------


def test_theta_contains_examples():
    F = three_point()
    assert theta_contains(3.0, F, 0.0, [0.0]) == (True, 1.0)
    inside, margin = theta_contains(0.0, F, -1.0, [0.0])
    assert not inside and margin == 0.0
    assert theta_contains(1.0, F, -1e6, [1e6])[0]


def test_model_rejects_points_outside_parameter_set():
    with pytest.raises(ValueError):
        PointProcessModel(2.0, three_point(), 0.5, [0.5])


def test_total_intensity_examples():
    assert total_intensity(PointProcessModel(1.0, three_point(), 0.0, [0.0])) == pytest.approx(1.0, rel=1e-15)
    assert total_intensity(PointProcessModel(0.0, three_point(), 0.2, [0.1])) == pytest.approx(1.3, rel=1e-15)
    F = two_point(0.3)
    a, b = 0.2, -0.5
    expected = 0.3 / (1 - a) + 0.7 / (1 - a - b)
    assert total_intensity(PointProcessModel(2.0, F, a, [b])) == pytest.approx(expected, rel=1e-14)


@given(seed=st.integers(0, 10**6), q=st.sampled_from(QS))
def test_region_intensity_is_additive(seed, q):
    rng = np.random.default_rng(seed)
    F = random_instance(rng)
    scale = 0.2 if q > 1 else 1.0
    model = PointProcessModel(q, F, 0.1 * scale, rng.uniform(-scale, scale, F.p) * 0.3)
    idx = rng.permutation(F.J)
    k = int(rng.integers(0, F.J + 1))
    A, B = idx[:k], idx[k:]
    assert region_intensity(model, []) == 0.0
    assert region_intensity(model, range(F.J)) == pytest.approx(total_intensity(model), rel=1e-14)
    assert region_intensity(model, A) + region_intensity(model, B) == pytest.approx(
        region_intensity(model, idx), abs=1e-14 * total_intensity(model))


def test_density_examples():
    F = three_point()
    np.testing.assert_allclose(q_exponential_density(PointProcessModel(1.0, F, 0.0, [0.0])), F.weights, rtol=1e-15)
    G = two_point(0.4)
    a, b = 0.1, 0.3
    l0, l1 = 0.4 / (1 - a), 0.6 / (1 - a - b)
    dens = q_exponential_density(PointProcessModel(2.0, G, a, [b]))
    np.testing.assert_allclose(dens, [l0 / (l0 + l1), l1 / (l0 + l1)], rtol=1e-14)
    assert q_exponential_density(PointProcessModel(2.0, G, a, [b]), 1) == pytest.approx(dens[1], rel=1e-15)


@given(seed=st.integers(0, 10**6), q=st.sampled_from(QS))
def test_density_normalises(seed, q):
    rng = np.random.default_rng(seed)
    F = random_instance(rng)
    model = PointProcessModel(q, F, 0.05, rng.uniform(-0.2, 0.2, F.p))
    assert abs(np.sum(q_exponential_density(model)) - 1.0) <= 1e-12


# -- likelihoods ---------------------------------------------------------------


def test_penalised_objective_trivial_value():
    assert penalized_objective(1.0, three_point(), EventSample(np.zeros((0, 1))), 0.0, 0.0, [0.0]) == -1.0


@pytest.mark.parametrize("q", QS)
def test_penalised_objective_two_point_display(q):
    p0, kappa = 0.35, 0.8
    F = two_point(p0)
    n = [4, 2]
    sample = EventSample.from_counts(F, n)
    a, b = 0.15, -0.2
    l0 = p0 * exp_q(a, q)
    l1 = (1 - p0) * exp_q(a + b, q)
    display = (-l0 - l1 + n[0] * math.log(l0) + n[1] * math.log(l1)
               + kappa * (p0 * math.log(l0 / p0) + (1 - p0) * math.log(l1 / (1 - p0))))
    # the event terms use log exp_q rather than log of the cell intensity
    shift = n[0] * math.log(p0) + n[1] * math.log(1 - p0)
    assert penalized_objective(q, F, sample, kappa, a, [b]) + shift == pytest.approx(display, rel=1e-13)


def test_penalised_objective_outside_parameter_set():
    F = three_point()
    s = EventSample.from_counts(F, [1, 1, 1])
    assert penalized_objective(0.0, F, s, 1.0, -1.5, [0.0]) == -np.inf
    assert penalized_objective(2.0, F, s, 1.0, 1.5, [0.0]) == -np.inf


@pytest.mark.parametrize("q", QS)
def test_penalised_gradient_matches_finite_differences(q):
    rng = np.random.default_rng(int(10 * q) + 50)
    h = 1e-6
    for _ in range(50):
        F = random_instance(rng, p=2)
        sample = EventSample.from_counts(F, rng.integers(0, 4, F.J))
        kappa = float(rng.uniform(0.1, 1.0))
        theta = rng.uniform(-0.3, 0.3, 3) / max(1.0, q)
        f, g, H = penalized_objective_derivatives(q, F, sample, kappa, theta[0], theta[1:])
        fd = np.empty(3)
        fdH = np.empty((3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fp, gp, _ = penalized_objective_derivatives(q, F, sample, kappa, theta[0] + e[0], theta[1:] + e[1:])
            fm, gm, _ = penalized_objective_derivatives(q, F, sample, kappa, theta[0] - e[0], theta[1:] - e[1:])
            fd[k] = (fp - fm) / (2 * h)
            fdH[k] = (gp - gm) / (2 * h)
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))
        assert np.max(np.abs(H - fdH)) <= 1e-5 * max(1.0, np.max(np.abs(H)))


def test_point_process_log_likelihood_examples():
    F = three_point()
    empty = EventSample(np.zeros((0, 1)))
    assert point_process_log_likelihood(PointProcessModel(1.0, F, 0.0, [0.0]), empty) == -1.0
    model = PointProcessModel(0.5, F, 0.2, [0.1])
    v = exp_q(0.2 + 0.1 * 2.0, 0.5)
    one = EventSample(np.array([[2.0]]))
    assert point_process_log_likelihood(model, one) == pytest.approx(-total_intensity(model) + math.log(v), rel=1e-14)


@pytest.mark.parametrize("q", [0.0, 1.0, 2.0])
@pytest.mark.parametrize("n", range(6))
def test_point_process_log_likelihood_direct_product(q, n):
    rng = np.random.default_rng(n)
    F = three_point()
    model = PointProcessModel(q, F, 0.1, [0.05])
    pts = F.support[rng.integers(0, 3, n)]
    lam = total_intensity(model)
    prod = 1.0
    for x in pts:
        prod *= exp_q(0.1 + 0.05 * x[0], q)
    direct = math.log(math.exp(-lam) / math.factorial(n) * prod)
    sample = EventSample(pts.reshape(n, 1))
    assert point_process_log_likelihood(model, sample) == pytest.approx(direct, rel=1e-13)
    assert point_process_log_likelihood(model, sample) == pytest.approx(
        penalized_objective(q, F, sample, 0.0, 0.1, [0.05]) - math.lgamma(n + 1), rel=1e-13)


# -- estimator -------------------------------------------------------------------


@pytest.mark.parametrize("q", QS)
def test_two_point_closed_form(q):
    F = two_point(0.3)
    fit = fit_additive_smoothing(q, F, EventSample.from_counts(F, [3, 0]), 0.5)
    np.testing.assert_allclose(fit.model.point_intensities(), [3.15, 0.35], atol=1e-10)
    assert fit.converged and fit.margin > 0


def test_two_point_closed_form_near_the_pole():
    # the optimum sits within 3e-3 of the boundary of the parameter set
    F = two_point(0.33278945972731516)
    fit = fit_additive_smoothing(3.0, F, EventSample.from_counts(F, [9, 9]), 0.9097034905889353)
    expected = np.array([9, 9]) + 0.9097034905889353 * F.weights
    np.testing.assert_allclose(fit.model.point_intensities(), expected, atol=1e-9)
    assert fit.converged


def _example2(n, kappa):
    s = [nj + kappa / 3.0 for nj in n]
    tot = sum(s)
    return 2 * s[0] * tot / (s[0] + s[2]), 2 * s[2] * tot / (s[0] + s[2])


@pytest.mark.parametrize("n, kappa", [([2, 1, 3], 1.0), ([0, 4, 2], 0.5), ([0, 0, 0], 1.0), ([5, 0, 1], 0.0)])
def test_three_point_closed_form(n, kappa):
    F = three_point()
    fit = fit_additive_smoothing(0.0, F, EventSample.from_counts(F, n), kappa)
    theta_hat, phi_hat = _example2(n, kappa)
    assert 1.0 + fit.alpha == pytest.approx(theta_hat, abs=1e-9)
    assert 1.0 + fit.alpha + 2.0 * fit.beta[0] == pytest.approx(phi_hat, abs=1e-9)


@pytest.mark.parametrize("n", [[0, 2, 3], [4, 1, 0], [0, 0, 4]])
def test_mle_failure_reported(n):
    F = three_point()
    with pytest.raises(DivergenceDetected):
        fit_additive_smoothing(0.0, F, EventSample.from_counts(F, n), 0.0)


@pytest.mark.parametrize("q", [-1.0, 0.0, 0.5, 1.0, 2.0, 3.0])
def test_boundary_sample_without_smoothing_diverges(q):
    F = two_point(0.5)
    with pytest.raises(DivergenceDetected):
        fit_additive_smoothing(q, F, EventSample.from_counts(F, [0, 3]), 0.0)


def test_non_unique_but_existing_mle_is_not_flagged():
    # only the middle point observed: every theta + phi = 6 with theta, phi > 0 is optimal
    F = three_point()
    fit = fit_additive_smoothing(0.0, F, EventSample.from_counts(F, [0, 3, 0]), 0.0)
    assert 2.0 + 2.0 * fit.alpha + 2.0 * fit.beta[0] == pytest.approx(6.0, abs=1e-8)


def test_q_one_moment_equations():
    rng = np.random.default_rng(11)
    F = random_instance(rng, p=2, J=6)
    counts = rng.integers(0, 5, F.J)
    sample = EventSample.from_counts(F, counts)
    kappa = 0.7
    fit = fit_additive_smoothing(1.0, F, sample, kappa)
    n = counts.sum()
    assert fit.total_intensity == pytest.approx(n + kappa, abs=1e-8)
    w = F.weights * np.exp(F.support @ fit.beta)
    lhs = w @ F.support / w.sum()
    rhs = (counts @ F.support + kappa * F.weights @ F.support) / (n + kappa)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_empty_sample_with_smoothing_converges():
    F = three_point()
    for q in QS:
        fit = fit_additive_smoothing(q, F, EventSample(np.zeros((0, 1))), 1.0)
        assert fit.converged and fit.margin > 1e-8


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1), q=st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0]),
       kappa=st.sampled_from([0.1, 0.5, 1.0]))
def test_existence_interior(seed, q, kappa):
    rng = np.random.default_rng(seed)
    F = random_instance(rng)
    n = int(rng.integers(0, 7))
    sample = EventSample(F.support[rng.integers(0, F.J, n)].reshape(n, F.p))
    fit = fit_additive_smoothing(q, F, sample, kappa)
    assert fit.converged
    assert fit.margin > 1e-8


@pytest.mark.parametrize("q", [0.0, 0.5, 1.0])
def test_uniqueness_from_different_starts(q):
    rng = np.random.default_rng(int(q * 10) + 1)
    for _ in range(10):
        F = random_instance(rng)
        sample = EventSample.from_counts(F, rng.integers(0, 4, F.J))
        a = fit_additive_smoothing(q, F, sample, 0.5)
        start = np.concatenate([[0.3], np.full(F.p, -0.2)])
        b = fit_additive_smoothing(q, F, sample, 0.5, start=start, multistart=False)
        np.testing.assert_allclose(np.r_[a.alpha, a.beta], np.r_[b.alpha, b.beta], atol=1e-7)


@pytest.mark.parametrize("q", [0.0, 0.5, 1.0, 2.0])
def test_grid_oracle(q):
    F = CovariateDistribution(np.array([[0.0], [0.4], [0.7], [1.0]]), np.array([0.1, 0.2, 0.3, 0.4]))
    sample = EventSample.from_counts(F, [1, 0, 3, 2])
    kappa = 0.6
    fit = fit_additive_smoothing(q, F, sample, kappa)
    best = fit.penalized_objective
    a = np.linspace(fit.alpha - 1.0, fit.alpha + 1.0, 2001)
    b = np.linspace(fit.beta[0] - 1.0, fit.beta[0] + 1.0, 2001)
    A, B = np.meshgrid(a, b, indexing="ij")
    counts = sample.counts(F)
    grid = np.zeros_like(A)
    feasible = np.ones(A.shape, dtype=bool)
    for x, pj, nj in zip(F.support[:, 0], F.weights, counts):
        eta = A + B * x
        if q != 1.0:
            feasible &= 1.0 + (1.0 - q) * eta > 0.0
        with np.errstate(all="ignore"):
            grid += -pj * exp_q(eta, q) + (nj + kappa * pj) * ln_exp_q(eta, q)
    grid = np.where(feasible & np.isfinite(grid), grid, -np.inf)
    assert best >= grid.max() - 1e-9
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    assert abs(a[i] - fit.alpha) <= 2e-3 and abs(b[j] - fit.beta[0]) <= 2e-3


def test_vanishing_smoothing_approaches_mle():
    F = three_point()
    sample = EventSample.from_counts(F, [2, 1, 3])
    for q in (0.0, 0.5, 1.0, 2.0):
        mle = fit_additive_smoothing(q, F, sample, 0.0)
        tiny = fit_additive_smoothing(q, F, sample, 1e-6)
        np.testing.assert_allclose(np.r_[tiny.alpha, tiny.beta], np.r_[mle.alpha, mle.beta], atol=1e-4)


def test_fit_json_fields():
    F = two_point(0.5)
    d = fit_additive_smoothing(1.0, F, EventSample.from_counts(F, [1, 2]), 1.0).to_dict()
    assert set(d) >= {"q", "kappa", "alpha", "beta", "total_intensity", "objective", "converged"}


def test_off_support_events_with_flag():
    F = three_point()
    events = EventSample(np.array([[0.5], [1.5], [1.5]]))
    with pytest.raises(DataError):
        fit_additive_smoothing(1.0, F, events, 1.0)
    fit = fit_additive_smoothing(1.0, F, events, 1.0, allow_off_support=True)
    assert fit.converged


# -- data types --------------------------------------------------------------------


@pytest.mark.parametrize("support, weights", [
    ([[0.0], [1.0]], [0.5, 0.6]),          # weights do not sum to one
    ([[0.0], [1.0]], [1.0, 0.0]),          # zero weight
    ([[0.0], [0.0], [1.0]], [0.3, 0.3, 0.4]),  # repeated point
])
def test_covariate_distribution_validation(support, weights):
    with pytest.raises(ValueError):
        CovariateDistribution(np.array(support), np.array(weights))


def test_hyperplane_support_rejected():
    with pytest.raises(HyperplaneSupportError):
        CovariateDistribution(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), np.full(3, 1 / 3))


def test_empirical_distribution():
    F = CovariateDistribution.empirical(np.array([0.0, 1.0, 1.0, 3.0]))
    np.testing.assert_array_equal(F.support[:, 0], [0.0, 1.0, 3.0])
    np.testing.assert_allclose(F.weights, [0.25, 0.5, 0.25])


def test_event_matching_tolerance():
    F = three_point()
    s = EventSample(np.array([[1.0 + 1e-12], [2.0]]))
    np.testing.assert_array_equal(s.counts(F), [0, 1, 1])
    with pytest.raises(DataError):
        EventSample(np.array([[1.1]])).counts(F)


def test_csv_loading(tmp_path):
    (tmp_path / "F.csv").write_text("x,weight\n0,1\n1,3\n", encoding="utf-8")
    (tmp_path / "e.csv").write_text("x\n1\n1\n0\n", encoding="utf-8")
    F = CovariateDistribution.from_csv(tmp_path / "F.csv")
    np.testing.assert_allclose(F.weights, [0.25, 0.75])
    e = EventSample.from_csv(tmp_path / "e.csv", p=1)
    np.testing.assert_array_equal(e.counts(F), [1, 2])
    (tmp_path / "bad.csv").write_text("x,w\n0,1\n1,1\n", encoding="utf-8")
    with pytest.raises(DataError):
        CovariateDistribution.from_csv(tmp_path / "bad.csv")


def test_recession_direction_matches_convex_hull_rule():
    from imbreg.ppp import has_recession_direction

    F = CovariateDistribution(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), np.full(4, 0.25))
    # all events on one edge of the square: mean on the boundary
    assert has_recession_direction(1.0, F, EventSample.from_counts(F, [2, 3, 0, 0]))
    assert not has_recession_direction(1.0, F, EventSample.from_counts(F, [2, 0, 0, 1]))
    assert has_recession_direction(2.0, F, EventSample(np.zeros((0, 2))))

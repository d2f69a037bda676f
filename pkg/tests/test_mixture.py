import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from pixelmix.errors import EmptyStatsError, InvariantError, UsageError
from pixelmix.mixture import (
    N_MIN,
    VAR_FLOOR,
    W_FLOOR,
    ColorMode,
    GaussianComponent,
    MixtureModel,
    SufficientStats,
    floor_covariance,
    gaussian_log_density,
    joint_log_probability,
    params_from_stats,
    responsibilities,
    stats_from_params,
    stream_log_likelihood,
)

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def unit_model(d=1):
    return MixtureModel.isotropic((1 / 3, 1 / 3, 1 / 3), (0, 0, 0), (1, 1, 1), d)


# -- strategies ---------------------------------------------------------------

def _spd(draw, d):
    a = np.array(draw(st.lists(st.floats(-3, 3), min_size=d * d, max_size=d * d))).reshape(d, d)
    scale = draw(st.floats(1.0, 400.0))
    return a @ a.T + scale * np.eye(d)


@st.composite
def models(draw, d=None):
    d = d or draw(st.sampled_from([1, 3]))
    raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3)))
    means = np.array(draw(st.lists(st.floats(0, 255), min_size=3 * d, max_size=3 * d))).reshape(3, d)
    covs = np.stack([_spd(draw, d) for _ in range(3)])
    return MixtureModel(raw / raw.sum(), means, covs)


pixels = st.floats(0, 255)


# -- construction -------------------------------------------------------------

def test_color_mode_parse():
    assert ColorMode.parse("rgb") == ColorMode.RGB
    assert ColorMode.parse(1) == ColorMode.GRAY
    with pytest.raises(UsageError):
        ColorMode.parse(2)


def test_model_rejects_bad_weights():
    with pytest.raises(InvariantError):
        MixtureModel.isotropic((0.5, 0.5, 0.5), (0, 0, 0), (1, 1, 1))


def test_component_rejects_non_pd_covariance():
    with pytest.raises(InvariantError):
        GaussianComponent(1.0, [0.0], [[-1.0]])
    with pytest.raises(InvariantError):
        GaussianComponent(1.0, [0, 0, 0], np.diag([1.0, 0.0, 1.0]))


# -- gaussian_log_density -----------------------------------------------------

def test_density_at_mean_unit_variance():
    c = GaussianComponent(1.0, [5.0], [[1.0]])
    assert gaussian_log_density([5.0], c) == pytest.approx(-HALF_LOG_2PI, abs=1e-12)
    assert gaussian_log_density(5.0, c) == pytest.approx(-0.9189385332, abs=1e-9)


def test_density_one_sd_away():
    c = GaussianComponent(1.0, [5.0], [[1.0]])
    assert gaussian_log_density([6.0], c) == pytest.approx(-HALF_LOG_2PI - 0.5, abs=1e-12)


def test_density_rgb_matches_high_precision_oracle():
    c = GaussianComponent(1.0, [12, 18, 33], np.diag([4.0, 4.0, 9.0]))
    # -1.5 log(2 pi) - 0.5 log(144) - 0.5 * 3, evaluated at 50 digits
    expected = -6.7417222494020185
    got = gaussian_log_density([10, 20, 30], c)
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(float(oracles.log_gauss([10, 20, 30], c.mean, c.cov)), abs=1e-12)


def test_density_dimension_mismatch():
    c = GaussianComponent(1.0, [1.0, 2.0, 3.0], np.eye(3))
    with pytest.raises(UsageError):
        gaussian_log_density([1.0], c)


@given(mu=st.floats(0, 255), var=st.floats(1, 1000))
@settings(max_examples=50)
def test_density_peaks_at_mean(mu, var):
    c = GaussianComponent(1.0, [mu], [[var]])
    grid = np.linspace(0, 255, 257)
    values = [gaussian_log_density([g], c) for g in grid]
    assert max(values) <= gaussian_log_density([mu], c) + 1e-12


@given(m=models(), data=st.data())
@settings(max_examples=60, deadline=None)
def test_density_agrees_with_oracle(m, data):
    x = np.array(data.draw(st.lists(pixels, min_size=m.d, max_size=m.d)))
    for comp in m.components:
        got = gaussian_log_density(x, comp)
        want = float(oracles.log_gauss(x, comp.mean, comp.cov))
        assert got == pytest.approx(want, rel=1e-10, abs=1e-9)


# -- joint_log_probability ----------------------------------------------------

def test_joint_with_unit_weight_is_density():
    m = MixtureModel.isotropic((1, 0, 0), (10, 50, 90), (4, 4, 4))
    assert joint_log_probability([13.0], m, 0) == gaussian_log_density([13.0], m.components[0])


def test_joint_zero_weight_is_minus_inf():
    m = MixtureModel.isotropic((1, 0, 0), (10, 50, 90), (4, 4, 4))
    assert joint_log_probability([13.0], m, 1) == -math.inf


def test_joint_matches_oracle():
    m = MixtureModel.isotropic((0.5, 0.3, 0.2), (40, 100, 180), (25, 25, 2500))
    expected = [-245.22152362619872, -53.732349249964709, -6.6203994510669191]
    for slot, want in enumerate(expected):
        assert joint_log_probability([150.0], m, slot) == pytest.approx(want, abs=1e-10)


def test_joint_bad_slot():
    with pytest.raises(UsageError):
        joint_log_probability([0.0], unit_model(), 3)


# -- responsibilities ---------------------------------------------------------

@pytest.mark.parametrize("x", [0.0, 77.0, 255.0])
def test_degenerate_weights_give_one_hot(x):
    m = MixtureModel.isotropic((1, 0, 0), (10, 50, 90), (4, 4, 4))
    np.testing.assert_array_equal(responsibilities([x], m), [1.0, 0.0, 0.0])


def test_identical_components_split_evenly():
    m = MixtureModel.isotropic((0.5, 0.5, 0), (80, 80, 10), (9, 9, 9))
    np.testing.assert_allclose(responsibilities([91.0], m), [0.5, 0.5, 0.0], atol=1e-15)


def test_responsibilities_middle_slot_dominates():
    m = MixtureModel.isotropic((1 / 3, 1 / 3, 1 / 3), (50, 100, 150), (25, 25, 25))
    got = responsibilities([100.0], m)
    # exp(-50) / (1 + 2 exp(-50)) for the outer slots
    np.testing.assert_allclose(got, [1.9287498479639178e-22, 1.0, 1.9287498479639178e-22],
                               rtol=1e-12)
    want = oracles.responsibilities([100.0], m.weights, m.means, m.covs)
    np.testing.assert_allclose(got, [float(v) for v in want], rtol=1e-12)


@given(m=models(), data=st.data())
@settings(max_examples=100, deadline=None)
def test_responsibilities_form_distribution(m, data):
    x = np.array(data.draw(st.lists(pixels, min_size=m.d, max_size=m.d)))
    g = responsibilities(x, m)
    assert abs(g.sum() - 1.0) <= 1e-12
    assert np.all((g >= 0) & (g <= 1))


def test_responsibilities_survive_far_outliers():
    m = MixtureModel.isotropic((1 / 3, 1 / 3, 1 / 3), (0, 1, 2), (1, 1, 1), 3)
    g = responsibilities([255, 255, 255], m)
    assert np.all(np.isfinite(g))
    assert g.sum() == pytest.approx(1.0, abs=1e-12)


# -- params_from_stats --------------------------------------------------------

def test_single_sample_per_slot_is_floored():
    v = np.array([[10.0, 20, 30], [40, 50, 60], [70, 80, 90]])
    stats = SufficientStats(np.ones(3), v, np.einsum("li,lj->lij", v, v))
    m = params_from_stats(stats, ColorMode.RGB)
    np.testing.assert_allclose(m.weights, [1 / 3] * 3)
    np.testing.assert_allclose(m.means, v)
    np.testing.assert_allclose(m.covs, np.repeat(VAR_FLOOR * np.eye(3)[None], 3, 0), atol=1e-9)


def test_hand_evaluated_recovery():
    # slot 0 saw {2, 4}: N = 2, M = 6, Z = 20 -> mean 3, variance 20/2 - 9 = 1
    stats = SufficientStats([2.0, 1.0, 1.0], [6.0, 50.0, 90.0], [20.0, 2600.0, 8200.0])
    m = params_from_stats(stats, 1)
    assert m.means[0, 0] == pytest.approx(3.0)
    assert m.covs[0, 0, 0] == pytest.approx(1.0)
    np.testing.assert_allclose(m.weights, [0.5, 0.25, 0.25])
    assert m.covs[1, 0, 0] == pytest.approx(100.0)


def test_empty_stats_rejected():
    with pytest.raises(EmptyStatsError):
        params_from_stats(SufficientStats(np.zeros(3), np.zeros(3), np.zeros(3)), 1)


def test_mode_mismatch_rejected():
    stats = stats_from_params(unit_model(), 3)
    with pytest.raises(UsageError):
        params_from_stats(stats, ColorMode.RGB)


def test_weight_floor_applies():
    stats = SufficientStats([1000.0, 1e-2, 999.0], [1e5, 0.5, 2e5], [1.1e7, 30.0, 4.1e7])
    m = params_from_stats(stats)
    assert m.weights.min() >= W_FLOOR * (1 - 1e-9)
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_unsupported_slot_falls_back():
    stats = SufficientStats([10.0, 0.0, 10.0], [[1000.0], [0.0], [3000.0]],
                            [[[1.01e5]], [[0.0]], [[9.1e5]]])
    m = params_from_stats(stats)
    assert m.means[1, 0] == pytest.approx(200.0)  # pooled mean
    assert m.covs[1, 0, 0] == VAR_FLOOR
    prev = MixtureModel.isotropic((0.4, 0.2, 0.4), (100, 42, 300), (10, 77, 10))
    m = params_from_stats(stats, previous=prev)
    assert m.means[1, 0] == 42.0
    assert m.covs[1, 0, 0] == 77.0


@given(m=models(), k=st.floats(0.1, 1e4))
@settings(max_examples=100, deadline=None)
def test_stats_round_trip(m, k):
    # k * w_l stays above N_MIN here, so no slot takes the fallback path
    back = params_from_stats(stats_from_params(m, k))
    assert back.allclose(m, atol=1e-9 * max(1.0, np.abs(m.covs).max()))


@given(m=models(), c=st.floats(1e-3, 1e3))
@settings(max_examples=100, deadline=None)
def test_recovery_is_scale_invariant(m, c):
    s = stats_from_params(m, 10.0)
    assume(s.counts.min() * c >= N_MIN)
    a = params_from_stats(s)
    b = params_from_stats(s.scaled(c))
    assert a.allclose(b, atol=1e-8 * max(1.0, np.abs(a.covs).max()))


@given(m=models(), k=st.floats(0.5, 100))
@settings(max_examples=60, deadline=None)
def test_stats_satisfy_cauchy_schwarz(m, k):
    s = stats_from_params(m, k)
    for l in range(3):
        resid = s.outer[l] - np.outer(s.sums[l], s.sums[l]) / s.counts[l]
        assert np.linalg.eigvalsh(resid).min() >= -1e-7 * np.abs(s.outer[l]).max()


@given(data=st.data(), d=st.sampled_from([1, 3]))
@settings(max_examples=100, deadline=None)
def test_recovered_covariances_are_spd_above_floor(data, d):
    n = np.array(data.draw(st.lists(st.floats(0.0, 50.0), min_size=3, max_size=3)))
    if n.sum() == 0:
        n[0] = 1.0
    pts = np.array(data.draw(st.lists(pixels, min_size=3 * d, max_size=3 * d))).reshape(3, d)
    # rank-deficient on purpose: every slot concentrated on one point
    stats = SufficientStats(n, n[:, None] * pts, n[:, None, None] * np.einsum("li,lj->lij", pts, pts))
    m = params_from_stats(stats)
    for cov in m.covs:
        np.testing.assert_allclose(cov, cov.T, atol=0)
        assert np.linalg.eigvalsh(cov).min() >= VAR_FLOOR * (1 - 1e-9)


def test_floor_leaves_healthy_matrices_alone():
    cov = np.array([[[5.0, 1.0, 0.0], [1.0, 4.0, 0.5], [0.0, 0.5, 3.0]]])
    out, fired = floor_covariance(cov)
    assert not fired.any()
    np.testing.assert_array_equal(out, cov)


# -- stats_from_params ----------------------------------------------------------

def test_prior_strength_must_be_positive():
    with pytest.raises(UsageError):
        stats_from_params(unit_model(), 0)


def test_hand_evaluated_initial_stats():
    s = stats_from_params(unit_model(), 3)
    np.testing.assert_allclose(s.counts, [1, 1, 1])
    np.testing.assert_allclose(s.sums, np.zeros((3, 1)))
    np.testing.assert_allclose(s.outer, np.ones((3, 1, 1)))


# -- stream_log_likelihood ----------------------------------------------------

def test_single_point_likelihood():
    m = MixtureModel.isotropic((1, 0, 0), (7, 50, 90), (1, 4, 4))
    assert stream_log_likelihood([7.0], m) == pytest.approx(-HALF_LOG_2PI, abs=1e-12)


def test_likelihood_is_additive():
    m = MixtureModel.isotropic((0.2, 0.5, 0.3), (40, 100, 180), (25, 25, 2500))
    one = stream_log_likelihood([123.0], m)
    assert stream_log_likelihood([123.0, 123.0], m) == 2 * one


def test_likelihood_matches_per_point_oracle():
    rng = np.random.default_rng(11)
    data, _ = oracles.sample_mixture(rng, 10, (0.5, 0.3, 0.2), (30, 90, 180), (25, 25, 400))
    m = MixtureModel.isotropic((0.4, 0.4, 0.2), (35, 85, 170), (30, 30, 500))
    want = float(oracles.loglik(data, m.weights, m.means, m.covs))
    assert stream_log_likelihood(data, m) == pytest.approx(want, abs=1e-9)


def test_likelihood_rejects_empty():
    with pytest.raises(UsageError):
        stream_log_likelihood([], unit_model())

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from flowregime.engine import (
    Detector,
    Hazard,
    NumericalDegeneracy,
    RunLengthState,
    Truncation,
    enumerate_posterior,
    hazard_transition,
    mixture_moments,
    predictive_mixture,
    step,
)
from flowregime.iid import GaussianIID
from flowregime.markov import MarkovAR1

NO_TRUNC = Truncation(0.0, None)


def dense_rows(upm, hazard, xs, truncation=NO_TRUNC):
    return Detector(upm, hazard, truncation).run(xs).posterior_dense()


def test_hazard_transition_cases():
    t = hazard_transition(5, Hazard(1 / 80))
    assert_allclose([t[0], t[6]], [0.0125, 0.9875])
    assert set(t) == {0, 6}
    assert hazard_transition(7, Hazard(1.0)) == {0: 1.0}
    t = hazard_transition(0, Hazard(0.3))
    assert_allclose([t[0], t[1]], [0.3, 0.7])
    with pytest.raises(ValueError):
        hazard_transition(-1, Hazard(0.3))


@pytest.mark.parametrize("p", [0.0, -0.1, 1.5, math.nan])
def test_hazard_rejects_bad_probability(p):
    with pytest.raises(ValueError):
        Hazard(p)


def test_first_step_from_empty_state():
    upm = GaussianIID(0, 1, 1)
    s0 = RunLengthState.initial(upm)
    assert s0.t == 0 and len(s0.run_lengths) == 0
    s1 = step(s0, 0.3, Hazard(0.2), upm)
    assert s1.run_lengths.tolist() == [0]
    assert_allclose(s1.posterior, [1.0])
    assert_allclose(s1.log_evidence, upm.logpdf(upm.fresh(), 0.3)[0])


def test_two_point_series_matches_enumeration():
    upm = GaussianIID(0, 1, 1)
    hz = Hazard(0.5)
    rows = dense_rows(upm, hz, [0.0, 10.0])
    exact = enumerate_posterior([0.0, 10.0], hz, upm)
    assert_allclose(rows[1, :2], exact[1], rtol=1e-12)
    # hand check of the same two partitions
    no_cp = upm.segment_log_marginal([0.0, 10.0]) + math.log(0.5)
    cp = upm.segment_log_marginal([0.0]) + upm.segment_log_marginal([10.0]) + math.log(0.5)
    p_cp = 1 / (1 + math.exp(no_cp - cp))
    assert_allclose(rows[1, 0], p_cp, rtol=1e-12)


def test_unit_hazard_puts_all_mass_at_zero():
    upm = GaussianIID(0, 1, 1)
    out = Detector(upm, Hazard(1.0)).run(np.random.default_rng(0).normal(size=20))
    for r, p in out.posterior:
        assert r.tolist() == [0] and p.tolist() == [1.0]
    for row in enumerate_posterior(np.arange(5.0), Hazard(1.0), upm):
        assert_allclose(row, np.eye(len(row))[0])


def test_constant_data_grows_run_length():
    upm = GaussianIID(0, 1, 1)
    rows = enumerate_posterior([5, 5, 5, 5], Hazard(0.01), upm)
    assert [int(np.argmax(r)) for r in rows] == [0, 1, 2, 3]
    out = Detector(upm, Hazard(0.01), NO_TRUNC).run([5, 5, 5, 5])
    assert out.argmax.tolist() == [0, 1, 2, 3]


def test_enumeration_refuses_long_series():
    with pytest.raises(ValueError):
        enumerate_posterior(np.zeros(21), Hazard(0.1), GaussianIID())


@pytest.mark.parametrize("seed", range(10))
def test_streaming_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 11))
    xs = rng.normal(0, 2, T) + np.where(np.arange(T) >= T // 2, 3.0, 0.0)
    hz = Hazard(rng.uniform(0.05, 0.6))
    for upm in (GaussianIID(0.5, 3.0, 1.5), MarkovAR1(0.5, 3.0, 1.5, rng.uniform(-0.8, 0.8))):
        dense = dense_rows(upm, hz, xs)
        exact = enumerate_posterior(xs, hz, upm)
        for t, row in enumerate(exact):
            assert_allclose(dense[t, : t + 1], row, rtol=1e-10, atol=1e-300)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.floats(1e-3, 1.0))
def test_posterior_rows_normalized(xs, p):
    out = Detector(MarkovAR1(0, 100.0, 10.0, 0.4), Hazard(p)).run(xs)
    for r, w in out.posterior:
        assert abs(w.sum() - 1) < 1e-9
        assert np.all(np.diff(r) > 0)


def test_zero_threshold_is_bit_identical():
    rng = np.random.default_rng(5)
    xs = rng.normal(size=10)
    a = Detector(GaussianIID(), Hazard(0.1), None).run(xs)
    b = Detector(GaussianIID(), Hazard(0.1), Truncation(0.0, None)).run(xs)
    c = Detector(GaussianIID(), Hazard(0.1), Truncation(0.0, 2000)).run(xs)
    for other in (b, c):
        assert np.array_equal(a.mu_hat, other.mu_hat)
        assert a.log_evidence == other.log_evidence
        for (r1, p1), (r2, p2) in zip(a.posterior, other.posterior):
            assert np.array_equal(r1, r2) and np.array_equal(p1, p2)


def test_truncation_caps_entries_and_renormalizes():
    xs = np.random.default_rng(1).normal(size=300)
    out = Detector(GaussianIID(0, 1, 1), Hazard(0.01), Truncation(1e-12, 50)).run(xs)
    for r, p in out.posterior:
        assert len(r) <= 50
        assert abs(p.sum() - 1) < 1e-9


def test_truncated_run_close_to_exact():
    xs = np.random.default_rng(2).normal(size=400)
    full = Detector(GaussianIID(0, 1, 1), Hazard(0.02), None).run(xs)
    trunc = Detector(GaussianIID(0, 1, 1), Hazard(0.02)).run(xs)
    assert_allclose(trunc.mu_hat, full.mu_hat, atol=1e-9)
    assert np.array_equal(trunc.argmax, full.argmax)


def test_degenerate_density_raises():
    class Broken(GaussianIID):
        def logpdf(self, stats, x):
            return np.full(len(stats), -np.inf)

    with pytest.raises(NumericalDegeneracy) as info:
        Detector(Broken(), Hazard(0.1)).run([1.0, 2.0])
    assert info.value.t == 1


def test_mixture_point_mass():
    upm = GaussianIID(7.0, 1e-30, 1.0)
    st_ = upm.fresh()
    mu, sp, sf = mixture_moments(np.zeros(1), upm, st_)
    assert_allclose(mu, 7.0)


def test_mixture_two_entries():
    class Fixed:
        def moments(self, stats):
            return np.array([0.0, 2.0]), np.array([1.0, 1.0]), np.array([0.0, 2.0]), np.array([3.0, 3.0])

    mu, sp, sf = mixture_moments(np.log([0.5, 0.5]), Fixed(), None)
    assert_allclose([mu, sp], [1.0, 1.0])
    # predictive variance 3 plus the dispersion of the means (1)
    assert_allclose(sf, 2.0)


def test_prior_only_mixture():
    upm = GaussianIID(0.4, 2.5, 1.0)
    mu, sp, sf = predictive_mixture(RunLengthState.initial(upm), upm, Hazard(0.1))
    assert_allclose([mu, sp, sf], [0.4, math.sqrt(2.5), math.sqrt(3.5)])


def test_mean_modes_differ_for_markov():
    upm = MarkovAR1(0.0, 4.0, 1.0, 0.6)
    det = Detector(upm, Hazard(0.05))
    det.run([1.0, 2.0, 3.0])
    cond = predictive_mixture(det.state, upm, None, "conditional")[0]
    post = predictive_mixture(det.state, upm, None, "posterior")[0]
    assert cond != post
    with pytest.raises(ValueError):
        predictive_mixture(det.state, upm, None, "other")


def test_detection_output_accessors():
    det = Detector(GaussianIID(0, 25, 1), Hazard(0.01))
    out = det.run([0.1, -0.2, 5.0, 5.1])
    assert out.argmax.tolist() == [0, 1, 0, 1]
    assert out.cp_flag.tolist() == [True, False, True, False]
    assert out.cp_times == [3]
    assert out.forecasts[0] == out.prior_forecast == 0.0
    assert_allclose(out.forecasts[1:], out.mu_hat[:-1])
    assert_allclose(out.posterior_dense().sum(axis=1), 1.0)


def test_forecast_uses_only_the_past():
    rng = np.random.default_rng(9)
    xs = rng.normal(size=30)
    ys = xs.copy()
    ys[20:] += 100.0
    a = Detector(MarkovAR1(0, 1, 1, 0.3), Hazard(0.05)).run(xs).forecasts
    b = Detector(MarkovAR1(0, 1, 1, 0.3), Hazard(0.05)).run(ys).forecasts
    assert np.array_equal(a[:21], b[:21])
    assert not np.array_equal(a[21:], b[21:])

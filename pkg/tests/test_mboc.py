import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from flowregime import mboc as mboc_mod
from flowregime.data import SyntheticSpec, simulate
from flowregime.engine import Detector, Hazard
from flowregime.iid import GaussianIID
from flowregime.markov import MarkovAR1
from flowregime.mboc import MbocDetector, _Buffer
from flowregime.score_driven import ScoreDrivenFit, ScoreDrivenParams

LAMBDA0 = ScoreDrivenParams(0.08, 0.02, 0.05, 1.0)


def series(T=400, seed=0):
    return simulate(SyntheticSpec(T, 1 / 60, sigma0_sq=9.0, rho_mode="const", rho=0.3, seed=seed)).x


def assert_same_run(a, b, tol=1e-10):
    assert_allclose(a.mu_hat, b.mu_hat, rtol=tol, atol=tol)
    assert np.array_equal(a.argmax, b.argmax)
    for (r1, p1), (r2, p2) in zip(a.posterior, b.posterior):
        assert np.array_equal(r1, r2)
        assert_allclose(p1, p2, rtol=tol, atol=1e-300)


def test_infinite_eta_equals_fixed_correlation():
    x = series()
    a = MbocDetector(0.0, 9.0, 1.0, Hazard(1 / 60), LAMBDA0, rho_init=0.25, eta=math.inf).run(x)
    b = Detector(MarkovAR1(0.0, 9.0, 1.0, 0.25), Hazard(1 / 60)).run(x)
    assert_same_run(a, b)
    assert not a.extras["estimated"].any()


def test_reduction_chain_to_iid():
    x = series(seed=1)
    a = MbocDetector(0.0, 9.0, 1.0, Hazard(1 / 60), LAMBDA0, rho_init=0.0, eta=math.inf).run(x)
    b = Detector(MarkovAR1(0.0, 9.0, 1.0, 0.0), Hazard(1 / 60)).run(x)
    c = Detector(GaussianIID(0.0, 9.0, 1.0), Hazard(1 / 60)).run(x)
    assert_same_run(a, b)
    assert_same_run(b, c)


def test_estimation_changes_output():
    x = simulate(SyntheticSpec(600, 1 / 150, sigma0_sq=9.0, rho_mode="sd", omega=0.12, alpha=0.05, beta=0.8, seed=2)).x
    a = MbocDetector(0.0, 9.0, 1.0, Hazard(1 / 150), LAMBDA0, rho_init=0.2, eta=20).run(x)
    assert a.extras["estimated"].any()
    assert len(set(np.round(a.extras["rho_used"], 12))) > 1
    for _, p in a.posterior:
        assert abs(p.sum() - 1) < 1e-9


class _Sentinel:
    """Replaces the estimator: every call returns a distinct, recognisable correlation."""

    def __init__(self):
        self.calls = []

    def estimate(self, window, init, rho_init, **kw):
        self.calls.append(len(window))
        return ScoreDrivenFit(ScoreDrivenParams(0.0, 0.0, 0.0, 1.0), 0.0, True, 1)

    def filter_path(self, window, params, rho_init):
        class P:
            rho_next = 0.001 * len(self.calls)

        return P()


def test_correlation_is_used_one_step_later(monkeypatch):
    sent = _Sentinel()
    monkeypatch.setattr(mboc_mod, "estimate", sent.estimate)
    monkeypatch.setattr(mboc_mod, "filter_path", sent.filter_path)
    x = np.zeros(12) + 0.01 * np.arange(12)
    det = MbocDetector(0.0, 1.0, 1.0, Hazard(1e-4), LAMBDA0, rho_init=0.5, eta=2)
    out = det.run(x)
    est = out.extras["estimated"]
    used = out.extras["rho_used"]
    first = int(np.flatnonzero(est)[0])
    # nothing estimated yet: the initial correlation is used up to and including the first estimating step
    assert_allclose(used[: first + 1], 0.5)
    # the k-th estimate (made at step first + k - 1) is used at the following step
    for k, t in enumerate(np.flatnonzero(est), start=1):
        if t + 1 < len(x):
            assert_allclose(used[t + 1], 0.001 * k)
    assert sent.calls[0] == out.argmax[first] + 1


def test_no_estimation_at_first_step(monkeypatch):
    sent = _Sentinel()
    monkeypatch.setattr(mboc_mod, "estimate", sent.estimate)
    monkeypatch.setattr(mboc_mod, "filter_path", sent.filter_path)
    det = MbocDetector(0.0, 1.0, 1.0, Hazard(0.5), LAMBDA0, eta=-1)
    det.update(0.3)
    assert sent.calls == []
    det.update(0.4)
    assert len(sent.calls) == 1


def test_window_is_demeaned_by_regime_posterior(monkeypatch):
    seen = []

    def fake_estimate(window, init, rho_init, **kw):
        seen.append(np.array(window))
        # zero correlation keeps the regime posterior equal to the sample mean
        return ScoreDrivenFit(ScoreDrivenParams(0.0, 0.0, 0.0, 1.0), 0.0, True, 1)

    monkeypatch.setattr(mboc_mod, "estimate", fake_estimate)
    x = np.array([5.0, 5.2, 4.9, 5.1, 5.0])
    det = MbocDetector(0.0, 1e12, 1.0, Hazard(1e-6), LAMBDA0, rho_init=0.0, eta=1)
    det.run(x)
    last = seen[-1]
    assert len(last) == 5
    assert_allclose(last, x - x.mean(), atol=1e-9)


def test_variance_modes_map_innovation_variance():
    x = simulate(SyntheticSpec(300, 1 / 400, sigma0_sq=4.0, rho_mode="sd", omega=0.12, alpha=0.05, beta=0.8, seed=3)).x
    for mode in ("ar1", "additive"):
        det = MbocDetector(0.0, 4.0, 1.0, Hazard(1 / 400), LAMBDA0, rho_init=0.2, eta=20, variance=mode)
        out = det.run(x)
        rho = det.upm.rho
        if mode == "ar1":
            assert_allclose(det.upm.sigma_sq, det.innovation_var / (1 - rho**2))
        else:
            assert_allclose(det.upm.sigma_sq, det.innovation_var)
        assert np.all(np.abs(out.extras["rho_used"]) <= 0.999)


def test_buffer_keeps_requested_tail():
    buf = _Buffer(capacity=4)
    for v in range(10):
        buf.append(float(v), keep=3)
    assert buf.tail(3).tolist() == [7.0, 8.0, 9.0]
    with pytest.raises(IndexError):
        buf.tail(100)

"""Model-agnostic run-length filter.

Run-length convention: after observing ``x_t`` the run length ``r_t`` is the
number of observations that precede ``x_t`` in its regime, so ``r_t = 0``
means ``x_t`` opens a new regime (a change point at ``t``) and ``x_1``
always has ``r_1 = 0``.  The hypothesis ``r_t = r`` carries the statistic of
the ``r + 1`` observations ``x_{t-r}, ..., x_t``.

One step propagates the posterior through the hazard (a fresh hypothesis
with prior ``cp_prob`` and every existing one grown by one with prior
``1 - cp_prob``), multiplies by the predictive density of the new
observation, and normalizes.  The propagated mixture is also the exact
one-step predictive distribution, which is what :func:`predictive_mixture`
reports.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from .upm import PredictiveModel, log_sum_exp


class NumericalDegeneracy(ArithmeticError):
    """Every hypothesis assigns zero (or undefined) density to an observation."""

    def __init__(self, t: int, detail: str = ""):
        self.t = t
        super().__init__(f"predictive densities degenerate at t={t}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class Hazard:
    cp_prob: float = 1.0 / 80.0

    def __post_init__(self):
        if not 0.0 < self.cp_prob <= 1.0:
            raise ValueError(f"cp_prob must lie in (0, 1], got {self.cp_prob}")

    @property
    def log_cp(self) -> float:
        return math.log(self.cp_prob)

    @property
    def log_growth(self) -> float:
        return math.log1p(-self.cp_prob) if self.cp_prob < 1.0 else -math.inf


def hazard_transition(r_prev: int, hazard: Hazard) -> dict[int, float]:
    """Prior over the next run length given the previous one."""
    if r_prev < 0:
        raise ValueError("run length must be non-negative")
    out = {0: hazard.cp_prob}
    if hazard.cp_prob < 1.0:
        out[r_prev + 1] = 1.0 - hazard.cp_prob
    return out


@dataclass(frozen=True)
class Truncation:
    """Pruning of negligible run-length hypotheses.

    Hypotheses with posterior below ``threshold`` are dropped, then at most
    ``max_entries`` of the heaviest are kept.  ``threshold=0`` with
    ``max_entries=None`` disables pruning.
    """

    threshold: float = 1e-12
    max_entries: int | None = 2000

    def apply(self, run_lengths, log_post, stats):
        keep = np.isfinite(log_post)
        if self.threshold > 0:
            keep &= log_post >= math.log(self.threshold)
        idx = np.flatnonzero(keep)
        if self.max_entries is not None and len(idx) > self.max_entries:
            top = np.argpartition(log_post[idx], len(idx) - self.max_entries)[-self.max_entries :]
            idx = np.sort(idx[top])
        if len(idx) == len(log_post):
            return run_lengths, log_post, stats
        dropped = np.ones(len(log_post), dtype=bool)
        dropped[idx] = False
        # renormalize only when a hypothesis with positive mass was removed
        lost_mass = bool(np.any(dropped & np.isfinite(log_post)))
        log_post = log_post[idx]
        if lost_mass:
            log_post = log_post - log_sum_exp(log_post)
        return run_lengths[idx], log_post, stats.take(idx)


@dataclass
class RunLengthState:
    """Posterior over run lengths after ``t`` observations.

    ``log_post`` is normalized; the joint weights ``log p(r_t, x_{1:t})``
    are ``log_post + log_evidence``.
    """

    t: int
    run_lengths: np.ndarray
    log_post: np.ndarray
    stats: object
    log_evidence: float = 0.0

    @classmethod
    def initial(cls, upm: PredictiveModel) -> "RunLengthState":
        empty = upm.fresh().take(np.zeros(0, dtype=np.int64))
        return cls(0, np.zeros(0, dtype=np.int64), np.zeros(0), empty, 0.0)

    @property
    def log_joint(self) -> np.ndarray:
        return self.log_post + self.log_evidence

    @property
    def posterior(self) -> np.ndarray:
        return np.exp(self.log_post)

    def argmax(self) -> int:
        return int(self.run_lengths[np.argmax(self.log_post)])

    def propagate(self, hazard: Hazard, upm: PredictiveModel):
        """Run lengths, log prior weights and statistics for the next observation."""
        fresh = upm.fresh()
        if self.t == 0:
            return np.zeros(1, dtype=np.int64), np.zeros(1), fresh
        run_lengths = np.concatenate([[0], self.run_lengths + 1])
        log_w = np.concatenate([[hazard.log_cp], self.log_post + hazard.log_growth])
        stats = fresh.concat(self.stats)
        if hazard.cp_prob == 1.0:
            return run_lengths[:1], log_w[:1], fresh
        return run_lengths, log_w, stats


def step(
    state: RunLengthState,
    x: float,
    hazard: Hazard,
    upm: PredictiveModel,
    truncation: Truncation | None = Truncation(),
) -> RunLengthState:
    """Absorb one observation and return the posterior at ``t + 1``."""
    t = state.t + 1
    run_lengths, log_w, stats = state.propagate(hazard, upm)
    log_pred = upm.logpdf(stats, x)
    if np.isnan(log_pred).any():
        raise NumericalDegeneracy(t, "NaN predictive density")
    joint = log_w + log_pred
    increment = log_sum_exp(joint)
    if not np.isfinite(increment):
        raise NumericalDegeneracy(t)
    log_post = joint - increment
    stats = upm.extend(stats, x)
    if truncation is not None:
        run_lengths, log_post, stats = truncation.apply(run_lengths, log_post, stats)
    return RunLengthState(t, run_lengths, log_post, stats, state.log_evidence + increment)


MEAN_MODES = ("conditional", "posterior")


def mixture_moments(log_w, upm: PredictiveModel, stats, mean_mode: str = "conditional"):
    """Mixture mean and the two spread summaries over weighted hypotheses.

    Returns ``(mu_hat, sigma_paper, sigma_full)``: the weighted mean of the
    per-hypothesis means (one-step conditional means, or the regime-mean
    posteriors when ``mean_mode="posterior"``), the square root of the
    weighted posterior variances of the regime mean, and the standard
    deviation of the full Gaussian mixture predictive.
    """
    if mean_mode not in MEAN_MODES:
        raise ValueError(f"mean_mode must be one of {MEAN_MODES}")
    log_w = np.asarray(log_w, dtype=float)
    w = np.exp(log_w - log_sum_exp(log_w))
    post_mean, post_var, pred_mean, pred_var = upm.moments(stats)
    m = pred_mean if mean_mode == "conditional" else post_mean
    mu_hat = float(w @ m)
    sigma_paper = math.sqrt(float(w @ post_var))
    centre = float(w @ pred_mean)
    full_var = float(w @ (pred_var + (pred_mean - centre) ** 2))
    return mu_hat, sigma_paper, math.sqrt(max(full_var, 0.0))


def predictive_mixture(
    state: RunLengthState,
    upm: PredictiveModel,
    hazard: Hazard | None = None,
    mean_mode: str = "conditional",
):
    """Mixture summaries of ``state``.

    With ``hazard`` the state is first propagated, giving the one-step
    predictive of the next observation; without it the mixture runs over the
    current hypotheses as they stand.
    """
    if hazard is not None:
        _, log_w, stats = state.propagate(hazard, upm)
    else:
        log_w, stats = state.log_post, state.stats
    return mixture_moments(log_w, upm, stats, mean_mode)


@dataclass
class DetectionOutput:
    """Per-step outputs of a detector over a series of length ``T``.

    ``mu_hat[t]`` is the prediction of observation ``t + 1`` made after
    observing ``t`` (0-based), so :attr:`forecasts` holds the prediction of
    every observation made one step earlier.
    """

    argmax: np.ndarray
    mu_hat: np.ndarray
    sigma_paper: np.ndarray
    sigma_full: np.ndarray
    prior_forecast: float
    log_evidence: float
    posterior: list | None = None
    extras: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.argmax)

    @property
    def cp_flag(self) -> np.ndarray:
        return self.argmax == 0

    @property
    def cp_times(self) -> list[int]:
        """1-based times after the first at which a change point is declared."""
        return [int(t) + 1 for t in np.flatnonzero(self.cp_flag) if t > 0]

    @property
    def forecasts(self) -> np.ndarray:
        return np.concatenate([[self.prior_forecast], self.mu_hat[:-1]])

    def posterior_dense(self) -> np.ndarray:
        """Lower-triangular ``(T, T)`` posterior matrix, row ``t`` over run lengths."""
        if self.posterior is None:
            raise ValueError("posterior rows were not recorded")
        out = np.zeros((self.T, self.T))
        for t, (r, p) in enumerate(self.posterior):
            out[t, r] = p
        return out


class Detector:
    """Streaming run-length detector for one series.

    Examples
    --------
    >>> from flowregime.iid import GaussianIID
    >>> det = Detector(GaussianIID(0.0, 25.0, 1.0), Hazard(0.01))
    >>> out = det.run([0.1, -0.2, 5.0, 5.1])
    >>> out.argmax.tolist()
    [0, 1, 0, 1]
    """

    def __init__(
        self,
        upm: PredictiveModel,
        hazard: Hazard,
        truncation: Truncation | None = Truncation(),
        mean_mode: str = "conditional",
        keep_posterior: bool = True,
    ):
        self.upm = upm
        self.hazard = hazard
        self.truncation = truncation
        self.mean_mode = mean_mode
        self.keep_posterior = keep_posterior
        self.state = RunLengthState.initial(upm)

    def predict(self):
        return predictive_mixture(self.state, self.upm, self.hazard, self.mean_mode)

    def update(self, x: float) -> RunLengthState:
        self.state = step(self.state, float(x), self.hazard, self.upm, self.truncation)
        return self.state

    def run(self, xs) -> DetectionOutput:
        xs = np.asarray(xs, dtype=float)
        T = len(xs)
        argmax = np.zeros(T, dtype=np.int64)
        mu = np.zeros(T)
        sp = np.zeros(T)
        sf = np.zeros(T)
        rows = [] if self.keep_posterior else None
        prior_forecast = self.predict()[0]
        for t, x in enumerate(xs):
            state = self.update(x)
            argmax[t] = state.argmax()
            mu[t], sp[t], sf[t] = self.predict()
            if rows is not None:
                rows.append((state.run_lengths.copy(), state.posterior))
        return DetectionOutput(argmax, mu, sp, sf, prior_forecast, self.state.log_evidence, rows)


def enumerate_posterior(xs, hazard: Hazard, upm, max_len: int = 20) -> list[np.ndarray]:
    """Exact run-length posteriors by brute force over all segmentations.

    Row ``t`` (0-based) has length ``t + 1`` and holds ``p(r = k | x_{1:t+1})``
    for ``k = 0..t``.  Each segmentation of ``x_{1:t}`` is scored with the
    dense segment marginals of ``upm`` and the Bernoulli change-point prior;
    no part of the streaming recursion is reused.
    """
    xs = np.asarray(xs, dtype=float)
    if len(xs) > max_len:
        raise ValueError(f"enumeration is limited to {max_len} points, got {len(xs)}")
    log_h = math.log(hazard.cp_prob)
    log_g = math.log1p(-hazard.cp_prob) if hazard.cp_prob < 1 else -math.inf
    seg_cache: dict[tuple[int, int], float] = {}

    def seg(a: int, b: int) -> float:
        if (a, b) not in seg_cache:
            seg_cache[(a, b)] = upm.segment_log_marginal(xs[a:b])
        return seg_cache[(a, b)]

    rows = []
    for n in range(1, len(xs) + 1):
        acc = np.full(n, -math.inf)
        for flags in itertools.product((0, 1), repeat=n - 1):
            starts = [0] + [i + 1 for i, f in enumerate(flags) if f]
            n_cp = len(starts) - 1
            score = n_cp * log_h
            if n - 1 - n_cp:
                score += (n - 1 - n_cp) * log_g
            if score == -math.inf:
                continue
            bounds = starts + [n]
            score += sum(seg(a, b) for a, b in zip(bounds[:-1], bounds[1:]))
            r = n - 1 - starts[-1]
            acc[r] = np.logaddexp(acc[r], score)
        rows.append(np.exp(acc - log_sum_exp(acc)))
    return rows

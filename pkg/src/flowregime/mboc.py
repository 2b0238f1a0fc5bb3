"""Run-length detection with a score-driven, time-varying AR(1) correlation (MBOC).

Each step scores the new observation with the correlation filtered at the
previous step, then, when the most likely run length ``i`` exceeds ``eta``,
re-estimates the score-driven parameters on the most likely regime's window
demeaned by its posterior mean and filters the correlation to be used at the
next step.
"""

from __future__ import annotations

import numpy as np

from .engine import DetectionOutput, Detector, Hazard, Truncation
from .markov import MarkovAR1
from .score_driven import (
    DEFAULT_SIMPLEX_STEP,
    ScoreDrivenParams,
    estimate,
    filter_path,
)


class _Buffer:
    """Tail of the observed series, long enough for the longest live hypothesis."""

    def __init__(self, capacity: int = 1024):
        self._data = np.empty(capacity)
        self._n = 0

    def append(self, x: float, keep: int) -> None:
        if self._n == len(self._data):
            if keep < self._n // 2:
                self._data[:keep] = self._data[self._n - keep : self._n]
                self._n = keep
            else:
                grown = np.empty(2 * len(self._data))
                grown[: self._n] = self._data[: self._n]
                self._data = grown
        self._data[self._n] = x
        self._n += 1

    def tail(self, k: int) -> np.ndarray:
        if k > self._n:
            raise IndexError(f"buffer holds {self._n} points, {k} requested")
        return self._data[self._n - k : self._n]


class MbocDetector(Detector):
    """Streaming MBOC detector.

    Parameters
    ----------
    mu0, sigma0_sq, sigma_sq :
        Prior of the regime mean and the initial variance used by the
        predictive model before any estimate exists.
    hazard :
        Change-point prior.
    params :
        Starting point of every full maximum-likelihood search (see
        ``warm_start``).
    rho_init :
        Correlation used before any estimate, and the start of every
        filtered window.
    eta :
        Estimation runs only when the most likely run length exceeds it;
        ``math.inf`` disables estimation.
    variance :
        ``"ar1"`` keeps the exact AR(1) predictive of the constant-correlation
        model, with the estimated innovation variance mapped to the
        unconditional scale; ``"additive"`` uses ``sigma_sq + var_r`` with
        ``sigma_sq`` the estimated innovation variance.
    rho_bound :
        Bound on ``|rho|`` inside the predictive model, whose formulas are
        singular at ``|rho| = 1``.
    warm_start :
        Start every full search from the previous estimate instead of
        ``params``.  Refinements always start from the previous estimate.
    region :
        Parameter region searched by the estimator, see
        :func:`flowregime.score_driven.estimate`.
    """

    def __init__(
        self,
        mu0: float,
        sigma0_sq: float,
        sigma_sq: float,
        hazard: Hazard,
        params: ScoreDrivenParams,
        rho_init: float = 0.2,
        eta: float = 20,
        truncation: Truncation | None = Truncation(),
        mean_mode: str = "conditional",
        variance: str = "ar1",
        max_evals: int = 500,
        refine_evals: int = 60,
        tol: float = 1e-8,
        rho_bound: float = 0.999,
        keep_posterior: bool = True,
        warm_start: bool = False,
        region: str = "stationary",
    ):
        upm = MarkovAR1(mu0, sigma0_sq, sigma_sq, rho_init, variance=variance)
        upm.name = "mboc"
        super().__init__(upm, hazard, truncation, mean_mode, keep_posterior)
        self.params = params
        self.initial_params = params
        self.warm_start = warm_start
        self.region = region
        self.rho_init = float(rho_init)
        self.eta = float(eta)
        self.max_evals = max_evals
        self.refine_evals = refine_evals
        self.tol = tol
        self.rho_bound = rho_bound
        self.rho = self.rho_init
        self.innovation_var: float | None = None
        self._buffer = _Buffer()
        self._last_window_start: int | None = None
        self._last_converged = False
        self._log: dict[str, list] = {k: [] for k in ("rho_used", "sigma_sq_used", "estimated", "omega", "alpha", "beta", "lambda_sigma_sq")}

    def _sync_model(self) -> None:
        rho = min(max(self.rho, -self.rho_bound), self.rho_bound)
        self.upm.rho = rho
        if self.innovation_var is not None:
            if self.upm.variance == "ar1":
                self.upm.sigma_sq = self.innovation_var / (1.0 - rho**2)
            else:
                self.upm.sigma_sq = self.innovation_var

    def update(self, x: float):
        self._sync_model()
        self._log["rho_used"].append(self.upm.rho)
        self._log["sigma_sq_used"].append(self.upm.sigma_sq)
        state = super().update(x)
        self._buffer.append(float(x), int(state.run_lengths.max()) + 1)
        i = state.argmax()
        estimated = False
        if state.t > 1 and i > self.eta:
            self._reestimate(state, i)
            estimated = True
        else:
            self._last_window_start = None
        self._sync_model()
        p = self.params
        self._log["estimated"].append(estimated)
        self._log["omega"].append(p.omega)
        self._log["alpha"].append(p.alpha)
        self._log["beta"].append(p.beta)
        self._log["lambda_sigma_sq"].append(p.sigma_sq)
        return state

    def _reestimate(self, state, i: int) -> None:
        k = int(np.flatnonzero(state.run_lengths == i)[0])
        mu_i = float(self.upm.posterior(state.stats.take([k]))[0][0])
        window = self._buffer.tail(i + 1) - mu_i
        start = state.t - i
        refine = self._last_window_start == start and self._last_converged
        if refine:
            fit = estimate(
                window,
                self.params,
                self.rho_init,
                max_evals=self.refine_evals,
                tol=self.tol,
                simplex_step=np.asarray(DEFAULT_SIMPLEX_STEP) * 0.1,
                region=self.region,
            )
        else:
            init = self.params if self.warm_start else self.initial_params
            fit = estimate(window, init, self.rho_init, max_evals=self.max_evals, tol=self.tol, region=self.region)
        self.params = fit.params
        self._last_converged = fit.converged or refine
        self._last_window_start = start
        path = filter_path(window, fit.params, self.rho_init)
        self.rho = path.rho_next
        self.innovation_var = fit.params.sigma_sq

    def run(self, xs) -> DetectionOutput:
        out = super().run(xs)
        out.extras = {k: np.asarray(v) for k, v in self._log.items()}
        return out

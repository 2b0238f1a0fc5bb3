"""Gaussian i.i.d. predictive model with known variance (baseline BOCPD).

Within a regime ``x ~ N(theta, sigma_sq)`` and the regime mean has the
conjugate prior ``theta ~ N(mu0, sigma0_sq)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .upm import Batch, dense_log_marginal, gaussian_logpdf, kahan_add


@dataclass
class IidStatistic(Batch):
    count: np.ndarray
    total: np.ndarray
    comp: np.ndarray


class GaussianIID:
    """Conjugate normal model for the regime mean.

    Parameters
    ----------
    mu0, sigma0_sq : float
        Prior mean and variance of the regime mean.
    sigma_sq : float
        Known observation variance.
    """

    name = "bocpd"

    def __init__(self, mu0: float = 0.0, sigma0_sq: float = 1.0, sigma_sq: float = 1.0):
        if not sigma0_sq > 0 or not sigma_sq > 0:
            raise ValueError("sigma0_sq and sigma_sq must be positive")
        self.mu0 = float(mu0)
        self.sigma0_sq = float(sigma0_sq)
        self.sigma_sq = float(sigma_sq)

    def __repr__(self) -> str:
        return f"GaussianIID(mu0={self.mu0!r}, sigma0_sq={self.sigma0_sq!r}, sigma_sq={self.sigma_sq!r})"

    def fresh(self) -> IidStatistic:
        return IidStatistic(np.zeros(1, dtype=np.int64), np.zeros(1), np.zeros(1))

    def extend(self, stats: IidStatistic, x: float) -> IidStatistic:
        total, comp = kahan_add(stats.total, stats.comp, x)
        return IidStatistic(stats.count + 1, total, comp)

    def posterior(self, stats: IidStatistic) -> tuple[np.ndarray, np.ndarray]:
        precision = stats.count / self.sigma_sq + 1.0 / self.sigma0_sq
        mean = (stats.total / self.sigma_sq + self.mu0 / self.sigma0_sq) / precision
        return mean, 1.0 / precision

    def predictive(self, stats: IidStatistic) -> tuple[np.ndarray, np.ndarray]:
        mean, var = self.posterior(stats)
        return mean, var + self.sigma_sq

    def moments(self, stats: IidStatistic):
        mean, var = self.posterior(stats)
        return mean, var, mean, var + self.sigma_sq

    def logpdf(self, stats: IidStatistic, x: float) -> np.ndarray:
        mean, var = self.predictive(stats)
        return gaussian_logpdf(x, mean, var)

    def segment_log_marginal(self, xs) -> float:
        xs = np.asarray(xs, dtype=float)
        n = len(xs)
        cov = self.sigma_sq * np.eye(n) + self.sigma0_sq * np.ones((n, n))
        return dense_log_marginal(xs, self.mu0, cov)

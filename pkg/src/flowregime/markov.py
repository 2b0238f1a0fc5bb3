"""AR(1) predictive model with a fixed correlation (MBO).

Within a regime the first point is ``N(theta, sigma_sq)`` and every later
point is ``N(theta + rho (x_prev - theta), sigma_sq (1 - rho^2))``.  The
regime mean keeps the conjugate normal prior, and the posterior depends on
the window only through its first point, last point and the sum of the
points strictly in between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .upm import Batch, dense_log_marginal, gaussian_logpdf, kahan_add

VARIANCE_MODES = ("ar1", "additive")


@dataclass
class MarkovStatistic(Batch):
    count: np.ndarray
    first: np.ndarray
    interior: np.ndarray
    comp: np.ndarray
    last: np.ndarray


class InvalidCorrelation(ValueError):
    pass


class MarkovAR1:
    """Conjugate AR(1) model for the regime mean.

    ``rho`` and ``sigma_sq`` are plain attributes: the time-varying detector
    reassigns them between steps.

    ``variance`` selects the one-step predictive variance for ``r >= 1``:
    ``"ar1"`` is the exact AR(1) value ``sigma_sq (1 - rho^2) + var_r (1 - rho)^2``;
    ``"additive"`` is ``sigma_sq + var_r``.
    """

    name = "mbo"

    def __init__(
        self,
        mu0: float = 0.0,
        sigma0_sq: float = 1.0,
        sigma_sq: float = 1.0,
        rho: float = 0.0,
        variance: str = "ar1",
    ):
        if not sigma0_sq > 0 or not sigma_sq > 0:
            raise ValueError("sigma0_sq and sigma_sq must be positive")
        if variance not in VARIANCE_MODES:
            raise ValueError(f"variance must be one of {VARIANCE_MODES}")
        self.mu0 = float(mu0)
        self.sigma0_sq = float(sigma0_sq)
        self.sigma_sq = float(sigma_sq)
        self.rho = float(rho)
        self.variance = variance
        self._check_rho()

    def __repr__(self) -> str:
        return (
            f"MarkovAR1(mu0={self.mu0!r}, sigma0_sq={self.sigma0_sq!r}, "
            f"sigma_sq={self.sigma_sq!r}, rho={self.rho!r}, variance={self.variance!r})"
        )

    def _check_rho(self) -> None:
        if not abs(self.rho) < 1:
            raise InvalidCorrelation(f"|rho| must be < 1, got {self.rho}")

    def fresh(self) -> MarkovStatistic:
        z = np.zeros(1)
        return MarkovStatistic(np.zeros(1, dtype=np.int64), z.copy(), z.copy(), z.copy(), z.copy())

    def extend(self, stats: MarkovStatistic, x: float) -> MarkovStatistic:
        count = stats.count
        # only windows that already hold two points move their old last point inside
        shift = count >= 2
        inner, comp = kahan_add(stats.interior, stats.comp, np.where(shift, stats.last, 0.0))
        first = np.where(count == 0, x, stats.first)
        last = np.full_like(stats.last, x)
        return MarkovStatistic(count + 1, first, inner, comp, last)

    def ab(self, stats: MarkovStatistic) -> tuple[np.ndarray, np.ndarray]:
        """Precision ``a_r`` and linear coefficient ``b_r`` of the likelihood in theta.

        Entries with ``r = 0`` get ``a = b = 0``.
        """
        self._check_rho()
        rho, s2 = self.rho, self.sigma_sq
        r = stats.count
        denom = s2 * (1.0 - rho**2)
        a = 1.0 / s2 + (r - 1) * (1.0 - rho) ** 2 / denom
        lin = (1.0 - rho) * (stats.last - rho * stats.first)
        b2 = stats.first / s2 + lin / denom
        b3 = stats.first / s2 + ((1.0 - rho) ** 2 * stats.interior + lin) / denom
        b = np.where(r == 1, stats.first / s2, np.where(r == 2, b2, b3))
        empty = r == 0
        a[empty] = 0.0
        b[empty] = 0.0
        return a, b

    def posterior(self, stats: MarkovStatistic) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.ab(stats)
        precision = a + 1.0 / self.sigma0_sq
        return (b + self.mu0 / self.sigma0_sq) / precision, 1.0 / precision

    def predictive(self, stats: MarkovStatistic) -> tuple[np.ndarray, np.ndarray]:
        return self.moments(stats)[2:]

    def moments(self, stats: MarkovStatistic):
        mu, var = self.posterior(stats)
        rho, s2 = self.rho, self.sigma_sq
        empty = stats.count == 0
        mean = np.where(empty, self.mu0, mu + rho * (stats.last - mu))
        if self.variance == "ar1":
            v = s2 * (1.0 - rho**2) + var * (1.0 - rho) ** 2
        else:
            v = s2 + var
        return mu, var, mean, np.where(empty, s2 + self.sigma0_sq, v)

    def logpdf(self, stats: MarkovStatistic, x: float) -> np.ndarray:
        mean, var = self.predictive(stats)
        return gaussian_logpdf(x, mean, var)

    def segment_log_marginal(self, xs) -> float:
        if self.variance != "ar1":
            raise NotImplementedError("dense marginal only exists for the exact AR(1) variance")
        xs = np.asarray(xs, dtype=float)
        n = len(xs)
        lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
        cov = self.sigma_sq * self.rho**lag + self.sigma0_sq * np.ones((n, n))
        return dense_log_marginal(xs, self.mu0, cov)

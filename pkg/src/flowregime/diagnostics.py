"""Forecast evaluation and within-regime specification tests."""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import least_squares
from scipy.signal import lfilter

from .regimes import Regime, extract_regimes, regime_imbalance, regimes_from_starts

__all__ = [
    "Regime",
    "extract_regimes",
    "regime_imbalance",
    "regimes_from_starts",
    "MseResult",
    "mse",
    "ArmaFit",
    "arma11_fit_forecast",
    "TestResult",
    "jarque_bera",
    "jb_statistic",
    "ljung_box",
    "lb_statistic",
    "default_lags",
    "regime_residuals",
    "RegimeTests",
    "test_regimes",
    "length_histogram",
    "geometric_chisquare",
    "EvalReport",
]


@dataclass(frozen=True)
class MseResult:
    raw: float
    normalized: float


def mse(predictions, realized) -> MseResult:
    """Mean squared one-step error, raw and divided by the variance of ``realized``."""
    p = np.asarray(predictions, dtype=float)
    x = np.asarray(realized, dtype=float)
    if p.shape != x.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {x.shape}")
    if len(x) == 0:
        raise ValueError("no observations")
    raw = float(np.mean((p - x) ** 2))
    var = float(np.var(x))
    return MseResult(raw, raw / var if var > 0 else math.nan)


@dataclass(frozen=True)
class ArmaFit:
    """``x_t = c + phi x_{t-1} + e_t + theta e_{t-1}``; ``forecasts[t]`` predicts ``x[t]``."""

    phi: float
    theta: float
    c: float
    sigma_sq: float
    forecasts: np.ndarray = field(repr=False)
    projected: bool = False


_ARMA_BOUND = 0.999


def _arma_innovations(x, c, phi, theta):
    # e_1 = 0: the sum of squares is conditional on x_1
    y = x[1:] - c - phi * x[:-1]
    return lfilter([1.0], [1.0, theta], y)


def arma11_fit_forecast(x, min_length: int = 50) -> ArmaFit:
    """Conditional-sum-of-squares ARMA(1,1) fit with in-sample one-step forecasts."""
    x = np.asarray(x, dtype=float)
    if len(x) < min_length:
        raise ValueError(f"need at least {min_length} points, got {len(x)}")
    xc = x - x.mean()
    phi0 = float(np.clip((xc[1:] @ xc[:-1]) / (xc @ xc), -0.9, 0.9)) if xc @ xc > 0 else 0.0
    z0 = np.array([x.mean() * (1 - phi0), phi0, 0.0])

    def resid(z):
        e = _arma_innovations(x, z[0], z[1], z[2])
        return e if np.all(np.isfinite(e)) else np.full_like(e, 1e150)

    scale = max(float(np.std(x)), 1e-300)
    fit = least_squares(resid, z0, x_scale=[scale, 0.1, 0.1], method="lm")
    c, phi, theta = (float(v) for v in fit.x)
    projected = False
    if abs(phi) >= _ARMA_BOUND or abs(theta) >= _ARMA_BOUND:
        warnings.warn(
            f"ARMA(1,1) estimate phi={phi:.4f}, theta={theta:.4f} projected into |.| < {_ARMA_BOUND}",
            RuntimeWarning,
            stacklevel=2,
        )
        phi = float(np.clip(phi, -_ARMA_BOUND, _ARMA_BOUND))
        theta = float(np.clip(theta, -_ARMA_BOUND, _ARMA_BOUND))
        projected = True
    e = _arma_innovations(x, c, phi, theta)
    forecasts = np.empty_like(x)
    forecasts[0] = c / (1.0 - phi)
    forecasts[1:] = x[1:] - e
    return ArmaFit(phi, theta, c, float(np.mean(e**2)), forecasts, projected)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    skipped: bool = False
    reason: str = ""

    __test__ = False  # not a pytest class

    def passed(self, level: float = 0.05) -> bool | None:
        return None if self.skipped else bool(self.p_value > level)


def jb_statistic(n: int, skewness: float, kurtosis: float) -> float:
    return n / 6.0 * (skewness**2 + (kurtosis - 3.0) ** 2 / 4.0)


def lb_statistic(n: int, acf) -> float:
    """Ljung-Box Q from the sample autocorrelations at lags 1..len(acf)."""
    acf = np.asarray(acf, dtype=float)
    k = np.arange(1, len(acf) + 1)
    return float(n * (n + 2) * np.sum(acf**2 / (n - k)))


def jarque_bera(sample, min_n: int = 8) -> TestResult:
    x = np.asarray(sample, dtype=float)
    n = len(x)
    if n < min_n:
        return TestResult(math.nan, math.nan, True, f"n={n} < {min_n}")
    d = x - x.mean()
    m2 = float(np.mean(d**2))
    if m2 <= 0 or m2 <= 1e-28 * float(np.mean(x**2)):
        return TestResult(math.nan, math.nan, True, "zero variance")
    s = float(np.mean(d**3)) / m2**1.5
    k = float(np.mean(d**4)) / m2**2
    jb = jb_statistic(n, s, k)
    return TestResult(jb, float(stats.chi2.sf(jb, 2)))


def default_lags(n: int) -> int:
    return max(1, min(10, n // 5))


def ljung_box(residuals, lags: int | None = None) -> TestResult:
    e = np.asarray(residuals, dtype=float)
    n = len(e)
    lags = default_lags(n) if lags is None else int(lags)
    if lags < 1:
        raise ValueError("lags must be >= 1")
    if n <= lags:
        return TestResult(math.nan, math.nan, True, f"n={n} <= lags={lags}")
    d = e - e.mean()
    denom = float(d @ d)
    if denom <= 0:
        return TestResult(math.nan, math.nan, True, "zero variance")
    acf = np.array([d[j:] @ d[:-j] for j in range(1, lags + 1)]) / denom
    q = lb_statistic(n, acf)
    return TestResult(q, float(stats.chi2.sf(q, lags)))


def regime_residuals(regime: Regime, x, upm, rho_path=None, sigma_sq_path=None) -> np.ndarray:
    """One-step residuals ``x_t - E[x_t | x_start..x_{t-1}]`` for every point after the first.

    ``rho_path[t]`` and ``sigma_sq_path[t]`` override the model's
    correlation and variance when scoring ``x[t]``, as the time-varying
    detector records them.
    """
    if regime.length < 2:
        raise ValueError("regime must hold at least two points")
    x = np.asarray(x, dtype=float)
    model = copy.copy(upm)
    st = model.extend(model.fresh(), x[regime.start])
    out = np.empty(regime.length - 1)
    for j, t in enumerate(range(regime.start + 1, regime.stop)):
        if rho_path is not None:
            model.rho = float(rho_path[t])
        if sigma_sq_path is not None:
            model.sigma_sq = float(sigma_sq_path[t])
        mean, _ = model.predictive(st)
        out[j] = x[t] - float(mean[0])
        st = model.extend(st, x[t])
    return out


@dataclass(frozen=True)
class RegimeTests:
    jb: list[TestResult]
    lb: list[TestResult]
    min_length: int
    level: float

    @staticmethod
    def _rate(results, level):
        flags = [r.passed(level) for r in results if not r.skipped]
        return (float(np.mean(flags)) if flags else math.nan), len(flags)

    @property
    def jb_pass_rate(self) -> float:
        return self._rate(self.jb, self.level)[0]

    @property
    def lb_pass_rate(self) -> float:
        return self._rate(self.lb, self.level)[0]

    @property
    def n_tested(self) -> int:
        return self._rate(self.lb, self.level)[1]


def test_regimes(
    regimes: list[Regime],
    x,
    upm,
    rho_path=None,
    sigma_sq_path=None,
    min_length: int = 8,
    level: float = 0.05,
    lags: int | None = None,
) -> RegimeTests:
    """JB and Ljung-Box on the residuals of every regime of at least ``min_length`` points."""
    jb, lb = [], []
    for reg in regimes:
        if reg.length < max(min_length, 2):
            skip = TestResult(math.nan, math.nan, True, f"length {reg.length} < {min_length}")
            jb.append(skip)
            lb.append(skip)
            continue
        e = regime_residuals(reg, x, upm, rho_path, sigma_sq_path)
        jb.append(jarque_bera(e, min_n=min(min_length, 8)))
        lb.append(ljung_box(e, lags))
    return RegimeTests(jb, lb, min_length, level)


test_regimes.__test__ = False


def length_histogram(regimes: list[Regime]) -> tuple[np.ndarray, np.ndarray]:
    """Distinct regime lengths and how many regimes have each."""
    lengths = np.array([r.length for r in regimes], dtype=np.int64)
    counts = np.bincount(lengths)
    nz = np.flatnonzero(counts)
    return nz, counts[nz]


def geometric_chisquare(lengths, p: float, min_expected: float = 5.0) -> tuple[float, float]:
    """Chi-square goodness of fit of lengths to Geometric(p) on {1, 2, ...}.

    Cells run over consecutive lengths; the upper tail is pooled into one
    cell once the expected count drops below ``min_expected``.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    n = len(lengths)
    if n == 0:
        raise ValueError("no lengths")
    pmf_cells, obs = [], []
    k = 1
    while True:
        tail = (1 - p) ** (k - 1)
        if n * stats.geom.pmf(k, p) < min_expected or n * (tail - stats.geom.pmf(k, p)) < min_expected:
            pmf_cells.append(tail)
            obs.append(int(np.sum(lengths >= k)))
            break
        pmf_cells.append(stats.geom.pmf(k, p))
        obs.append(int(np.sum(lengths == k)))
        k += 1
    expected = n * np.asarray(pmf_cells)
    if len(obs) < 2:
        return 0.0, 1.0
    res = stats.chisquare(obs, expected)
    return float(res.statistic), float(res.pvalue)


@dataclass
class EvalReport:
    """Model comparison on one series."""

    mse: dict[str, MseResult]
    regime_count: int
    histogram: tuple[list[int], list[int]]
    jb_pass_rate: float
    lb_pass_rate: float
    n_tested: int
    n_excluded: int
    details: dict = field(default_factory=dict)

    def best(self) -> str:
        return min(self.mse, key=lambda k: self.mse[k].normalized)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mse"] = {k: asdict(v) for k, v in self.mse.items()}
        out["histogram"] = {"length": list(self.histogram[0]), "count": list(self.histogram[1])}
        out["best"] = self.best()
        return out

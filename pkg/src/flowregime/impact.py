"""Price response inside order-flow regimes and regime-based predictors.

All price changes are log-price differences in basis points.  Signs follow
``sign(0) = 0``; a zero sign removes the observation from the average.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import least_squares

from .regimes import Regime, regime_imbalance

BP = 1e4
DAY_POLICIES = ("skip", "carry")
DELTA_MODES = ("endpoint", "shifted")

__all__ = [
    "ImpactCurve",
    "PowerLawFit",
    "PredictorCurve",
    "regime_imbalance",
    "impact_curve",
    "power_law_points",
    "fit_power_law",
    "online_flow_predictor",
    "unconditional_flow_predictor",
    "online_impact_predictor",
    "unconditional_impact_predictor",
    "flow_predictor",
    "impact_predictor",
    "synthesize_prices",
    "iqr_inliers",
]


def _mean_se(values: list[float]) -> tuple[float, float, int]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan, 0
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return float(v.mean()), se, n


def _has_reference(reg: Regime, day_starts: set[int], policy: str) -> bool:
    if reg.start == 0:
        return False
    return not (policy == "skip" and reg.start in day_starts)


@dataclass
class ImpactCurve:
    """Mean signed price path of the regimes whose imbalance exceeds ``theta``.

    ``n[j]`` regimes are still open at step ``k[j]``; ``n_censored`` of the
    qualifying regimes end with the sample.
    """

    theta: float
    k: np.ndarray
    impact_bp: np.ndarray
    se: np.ndarray
    n: np.ndarray
    n_regimes: int
    n_censored: int


def impact_curve(
    regimes: list[Regime],
    logp,
    theta: float,
    k_max: int | None = None,
    day_starts=(),
    day_policy: str = "skip",
) -> ImpactCurve:
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    if day_policy not in DAY_POLICIES:
        raise ValueError(f"day_policy must be one of {DAY_POLICIES}")
    logp = np.asarray(logp, dtype=float)
    days = {int(d) for d in day_starts}
    chosen = [
        r
        for r in regimes
        if r.sign is not None and r.sign != 0 and r.imbalance > theta and _has_reference(r, days, day_policy)
    ]
    longest = max((r.length for r in chosen), default=0)
    k_top = longest - 1 if k_max is None else min(k_max, longest - 1)
    ks, means, ses, ns = [], [], [], []
    for k in range(k_top + 1):
        vals = [r.sign * (logp[r.start + k] - logp[r.start - 1]) * BP for r in chosen if r.start + k < r.stop]
        m, se, n = _mean_se(vals)
        if n:
            ks.append(k)
            means.append(m)
            ses.append(se)
            ns.append(n)
    return ImpactCurve(
        theta,
        np.asarray(ks, dtype=np.int64),
        np.asarray(means),
        np.asarray(ses),
        np.asarray(ns, dtype=np.int64),
        len(chosen),
        sum(r.censored for r in chosen),
    )


def power_law_points(
    regimes: list[Regime],
    x,
    logp,
    delta: str = "endpoint",
    day_starts=(),
    day_policy: str = "skip",
) -> tuple[np.ndarray, np.ndarray]:
    """Signed volume ``Q = |sum x|`` and signed price change ``y`` per regime, in bp.

    ``delta="endpoint"`` measures the change from the close before the
    regime to its last interval; ``"shifted"`` from the regime's first
    interval to the interval after its end.  Zero-sign regimes and regimes
    without the needed prices are left out.
    """
    if delta not in DELTA_MODES:
        raise ValueError(f"delta must be one of {DELTA_MODES}")
    x = np.asarray(x, dtype=float)
    logp = np.asarray(logp, dtype=float)
    days = {int(d) for d in day_starts}
    q, y = [], []
    for r in regimes:
        eps, _ = regime_imbalance(x[r.start : r.stop])
        if eps == 0:
            continue
        if delta == "endpoint":
            if not _has_reference(r, days, day_policy):
                continue
            dp = logp[r.stop - 1] - logp[r.start - 1]
        else:
            if r.stop >= len(logp):
                continue
            dp = logp[r.stop] - logp[r.start]
        q.append(eps * x[r.start : r.stop].sum())
        y.append(eps * dp * BP)
    return np.asarray(q), np.asarray(y)


@dataclass(frozen=True)
class PowerLawFit:
    A: float
    gamma: float
    se_A: float
    se_gamma: float
    n_used: int
    outliers_removed: bool
    n_removed: int = 0

    def as_dict(self) -> dict:
        return {
            "A": self.A,
            "se_A": self.se_A,
            "gamma": self.gamma,
            "se_gamma": self.se_gamma,
            "n_used": self.n_used,
            "outliers_removed": self.outliers_removed,
            "n_removed": self.n_removed,
        }


def iqr_inliers(y, factor: float = 1.5) -> np.ndarray:
    q1, q3 = np.percentile(y, [25, 75])
    iqr = q3 - q1
    return (y >= q1 - factor * iqr) & (y <= q3 + factor * iqr)


def fit_power_law(q, y, remove_outliers: bool = False) -> PowerLawFit:
    """Least-squares fit of ``y = A q^gamma``."""
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    if q.shape != y.shape:
        raise ValueError("q and y must have the same length")
    if np.any(q <= 0):
        raise ValueError("all q must be positive")
    n_removed = 0
    if remove_outliers and len(y):
        keep = iqr_inliers(y)
        n_removed = int((~keep).sum())
        q, y = q[keep], y[keep]
    if len(q) < 3:
        raise ValueError(f"need at least 3 points, got {len(q)}")
    pos = y > 0
    if pos.sum() >= 2 and np.ptp(np.log(q[pos])) > 0:
        slope, intercept = np.polyfit(np.log(q[pos]), np.log(y[pos]), 1)
        z0 = np.array([math.exp(intercept), slope])
    else:
        z0 = np.array([float(np.median(np.abs(y))) or 1.0, 0.5])
    logq = np.log(q)

    def resid(z):
        return z[0] * np.exp(z[1] * logq) - y

    def jac(z):
        g = np.exp(z[1] * logq)
        return np.column_stack([g, z[0] * g * logq])

    fit = least_squares(resid, z0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000)
    A, gamma = (float(v) for v in fit.x)
    J = jac(fit.x)
    dof = len(y) - 2
    s2 = float(fit.fun @ fit.fun) / dof if dof > 0 else math.nan
    se_A = se_g = math.nan
    with np.errstate(over="ignore", invalid="ignore"):
        JtJ = J.T @ J
        if np.all(np.isfinite(JtJ)):
            try:
                diag = np.diag(s2 * np.linalg.inv(JtJ))
                se_A, se_g = (math.sqrt(max(float(c), 0.0)) for c in diag)
            except np.linalg.LinAlgError:
                pass
    if not (math.isfinite(se_A) and math.isfinite(se_g)):
        warnings.warn("Gauss-Newton matrix singular or overflowing; standard errors undefined", RuntimeWarning, stacklevel=2)
    return PowerLawFit(A, gamma, se_A, se_g, len(y), remove_outliers, n_removed)


@dataclass
class PredictorCurve:
    """Regime-conditional predictor and its unconditional benchmark at horizons ``k``."""

    m: int
    k: np.ndarray
    conditional: np.ndarray
    conditional_se: np.ndarray
    conditional_n: np.ndarray
    benchmark: np.ndarray
    benchmark_se: np.ndarray
    benchmark_n: np.ndarray

    def margin(self) -> np.ndarray:
        """Difference over its pooled standard error."""
        return (self.conditional - self.benchmark) / np.sqrt(self.conditional_se**2 + self.benchmark_se**2)


def _qualifying_starts(starts, T: int, m: int) -> list[int]:
    starts = np.unique(np.asarray(starts, dtype=np.int64))
    out = []
    for j, a in enumerate(starts):
        nxt = starts[j + 1] if j + 1 < len(starts) else T
        # no regime start inside (a, a + m - 1]
        if a + m - 1 < T and nxt > a + m - 1:
            out.append(int(a))
    return out


def _curve(origins, x, m, k_max, target):
    x = np.asarray(x, dtype=float)
    T = len(x)
    t0 = np.asarray(list(origins), dtype=np.int64)
    t0 = t0[t0 + m <= T]
    signs = np.sign(sliding_window_view(x, m).sum(axis=1)[t0]) if len(t0) else np.zeros(0)
    k_all, means, ses, ns = [], [], [], []
    for k in range(1, k_max + 1):
        i = t0 + m - 1
        j = i + k
        ok = (j < T) & (signs != 0)
        vals, valid = target(i[ok], j[ok])
        mu, se, n = _mean_se(signs[ok][valid] * vals[valid])
        k_all.append(k)
        means.append(mu)
        ses.append(se)
        ns.append(n)
    return np.asarray(k_all), np.asarray(means), np.asarray(ses), np.asarray(ns, dtype=np.int64)


def _as_starts(starts_or_cp, T: int, one_based: bool) -> list[int]:
    s = np.asarray(list(starts_or_cp), dtype=np.int64)
    if one_based:
        s = s - 1
    return sorted({0, *[int(v) for v in s if 0 <= v < T]})


def _starts_from(regime_starts, cp_times, T):
    if (regime_starts is None) == (cp_times is None):
        raise ValueError("give exactly one of regime_starts and cp_times")
    if cp_times is not None:
        return _as_starts(cp_times, T, one_based=True)
    return _as_starts(regime_starts, T, one_based=False)


def _flow_target(x):
    def target(_, j):
        s = np.sign(x[j])
        return s, s != 0

    return target


def _price_target(logp):
    def target(i, j):
        return (logp[j] - logp[i]) * BP, np.ones(len(j), dtype=bool)

    return target


def online_flow_predictor(x, m: int, k_max: int, regime_starts=None, cp_times=None):
    """Sign agreement between the first ``m`` flows of a regime and the flow ``k`` steps later.

    Starts come either as 0-based ``regime_starts`` or as 1-based
    ``cp_times``; the first interval always opens a regime.
    """
    x = np.asarray(x, dtype=float)
    starts = _starts_from(regime_starts, cp_times, len(x))
    return _curve(_qualifying_starts(starts, len(x), m), x, m, k_max, _flow_target(x))


def unconditional_flow_predictor(x, m: int, k_max: int):
    x = np.asarray(x, dtype=float)
    return _curve(range(len(x)), x, m, k_max, _flow_target(x))


def online_impact_predictor(x, logp, m: int, k_max: int, regime_starts=None, cp_times=None):
    x = np.asarray(x, dtype=float)
    logp = np.asarray(logp, dtype=float)
    starts = _starts_from(regime_starts, cp_times, len(x))
    return _curve(_qualifying_starts(starts, len(x), m), x, m, k_max, _price_target(logp))


def unconditional_impact_predictor(x, logp, m: int, k_max: int):
    x = np.asarray(x, dtype=float)
    logp = np.asarray(logp, dtype=float)
    return _curve(range(len(x)), x, m, k_max, _price_target(logp))


def _pack(m, cond, bench) -> PredictorCurve:
    return PredictorCurve(m, cond[0], cond[1], cond[2], cond[3], bench[1], bench[2], bench[3])


def flow_predictor(x, m: int, k_max: int, regime_starts=None, cp_times=None) -> PredictorCurve:
    if m < 1 or k_max < 1:
        raise ValueError("m and k_max must be >= 1")
    cond = online_flow_predictor(x, m, k_max, regime_starts, cp_times)
    return _pack(m, cond, unconditional_flow_predictor(x, m, k_max))


def impact_predictor(x, logp, m: int, k_max: int, regime_starts=None, cp_times=None) -> PredictorCurve:
    if m < 1 or k_max < 1:
        raise ValueError("m and k_max must be >= 1")
    cond = online_impact_predictor(x, logp, m, k_max, regime_starts, cp_times)
    return _pack(m, cond, unconditional_impact_predictor(x, logp, m, k_max))


@dataclass(frozen=True)
class ImpactSpec:
    """Synthetic log-price response: ``A * sign(c) * |c|^gamma`` in bp, ``c`` the cumulative regime flow."""

    A: float = 1.0
    gamma: float = 0.5
    noise_bp: float = 0.0
    p0: float = math.log(100.0)
    seed: int = 0


def synthesize_prices(x, regime_starts, spec: ImpactSpec = ImpactSpec()) -> np.ndarray:
    """Log prices whose move since each regime's previous close follows the cumulative flow.

    Independent Gaussian increments with standard deviation ``noise_bp``
    are added on top of the deterministic response.
    """
    x = np.asarray(x, dtype=float)
    T = len(x)
    rng = np.random.default_rng(spec.seed)
    starts = sorted({0, *[int(s) for s in regime_starts]})
    stops = starts[1:] + [T]
    drift = np.empty(T)
    base = 0.0
    for a, b in zip(starts, stops):
        c = np.cumsum(x[a:b])
        drift[a:b] = base + spec.A * np.sign(c) * np.abs(c) ** spec.gamma
        base = drift[b - 1]
    noise = np.cumsum(rng.normal(0.0, spec.noise_bp, T)) if spec.noise_bp > 0 else 0.0
    return spec.p0 + (drift + noise) / BP

"""Score-driven AR(1) with a time-varying correlation.

On a demeaned window the model is

    x_t = rho_t x_{t-1} + u_t,          u_t ~ N(0, sigma_sq)
    rho_{t+1} = omega + alpha s_t + beta rho_t
    s_t = u_t x_{t-1} / sigma_sq

where ``s_t`` is the unscaled score of the Gaussian log-likelihood of
``u_t`` with respect to ``rho_t``.  The correlation is clipped to [-1, 1]
after every update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

try:
    from numba import njit
except ImportError:  # pragma: no cover - pure Python fallback
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

LOG_2PI = math.log(2.0 * math.pi)

# initial simplex edge per transformed coordinate (omega, alpha, atanh beta, log sigma_sq)
DEFAULT_SIMPLEX_STEP = (0.05, 0.02, 0.2, 0.5)


class FilterError(ArithmeticError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"non-finite value in score-driven filter at step {index}")


@dataclass(frozen=True)
class ScoreDrivenParams:
    omega: float
    alpha: float
    beta: float
    sigma_sq: float

    def __post_init__(self):
        if not self.sigma_sq > 0:
            raise ValueError("sigma_sq must be positive")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.omega, self.alpha, self.beta, self.sigma_sq)


@dataclass
class FilterPath:
    """Filtered quantities for the ``n - 1`` transitions of a window of ``n`` points.

    ``rho[j]`` is the correlation used to predict point ``j + 1`` from point
    ``j``; ``rho_next`` is the correlation for the point after the window.
    """

    rho: np.ndarray
    u: np.ndarray
    s: np.ndarray
    loglik: float
    rho_next: float
    n_clamped: int


@dataclass
class ScoreDrivenFit:
    params: ScoreDrivenParams
    loglik: float
    converged: bool
    n_evals: int


def score(u, x_prev, sigma_sq):
    """Score of ``log N(u; 0, sigma_sq)`` with respect to the correlation."""
    return u / sigma_sq * x_prev


@njit(cache=True)
def _clip(r):
    if r > 1.0:
        return 1.0, 1
    if r < -1.0:
        return -1.0, 1
    return r, 0


@njit(cache=True)
def _loglik_kernel(x, omega, alpha, beta, sigma_sq, rho_init):
    n = x.shape[0]
    rho = rho_init
    ss = 0.0
    for t in range(1, n):
        u = x[t] - rho * x[t - 1]
        ss += u * u
        rho, _ = _clip(omega + alpha * u / sigma_sq * x[t - 1] + beta * rho)
        if not math.isfinite(rho):
            return -math.inf
    out = -0.5 * ((n - 1) * (LOG_2PI + math.log(sigma_sq)) + ss / sigma_sq)
    if not math.isfinite(out):
        return -math.inf
    return out


@njit(cache=True)
def _filter_kernel(x, omega, alpha, beta, sigma_sq, rho_init, rho_out, u_out, s_out):
    n = x.shape[0]
    rho = rho_init
    clamped = 0
    for t in range(1, n):
        rho_out[t - 1] = rho
        u = x[t] - rho * x[t - 1]
        s = u / sigma_sq * x[t - 1]
        u_out[t - 1] = u
        s_out[t - 1] = s
        rho, c = _clip(omega + alpha * s + beta * rho)
        clamped += c
        if not (math.isfinite(u) and math.isfinite(rho)):
            return rho, clamped, t
    return rho, clamped, -1


def filter_path(x_centered, params: ScoreDrivenParams, rho_init: float) -> FilterPath:
    """Run the correlation recursion forward over a demeaned window."""
    x = np.ascontiguousarray(x_centered, dtype=float)
    if len(x) < 2:
        raise ValueError("window must hold at least two points")
    n = len(x) - 1
    rho, u, s = np.empty(n), np.empty(n), np.empty(n)
    rho_next, clamped, bad = _filter_kernel(x, *params.as_tuple(), float(rho_init), rho, u, s)
    if bad >= 0:
        raise FilterError(int(bad))
    loglik = float(-0.5 * (n * (LOG_2PI + math.log(params.sigma_sq)) + (u @ u) / params.sigma_sq))
    return FilterPath(rho, u, s, loglik, float(rho_next), int(clamped))


def loglik(x_centered, params: ScoreDrivenParams, rho_init: float) -> float:
    x = np.ascontiguousarray(x_centered, dtype=float)
    return float(_loglik_kernel(x, *params.as_tuple(), float(rho_init)))


PARAM_REGIONS = ("free", "stationary")


def _to_free(p: ScoreDrivenParams, region: str = "free") -> np.ndarray:
    if region == "free":
        beta = min(max(p.beta, -1 + 1e-12), 1 - 1e-12)
        return np.array([p.omega, p.alpha, math.atanh(beta), math.log(p.sigma_sq)])
    alpha = max(p.alpha, 1e-8)
    beta = min(max(p.beta, 1e-8), 1 - 1e-8)
    return np.array([p.omega, math.log(alpha), math.log(beta / (1 - beta)), math.log(p.sigma_sq)])


def _from_free(z, region: str = "free") -> ScoreDrivenParams:
    if region == "free":
        return ScoreDrivenParams(float(z[0]), float(z[1]), math.tanh(z[2]), math.exp(z[3]))
    return ScoreDrivenParams(float(z[0]), math.exp(z[1]), 1.0 / (1.0 + math.exp(-z[2])), math.exp(z[3]))


def estimate(
    x_centered,
    init: ScoreDrivenParams,
    rho_init: float,
    max_evals: int = 500,
    tol: float = 1e-8,
    simplex_step=DEFAULT_SIMPLEX_STEP,
    min_length: int = 3,
    region: str = "free",
) -> ScoreDrivenFit:
    """Maximum-likelihood estimate of (omega, alpha, beta, sigma_sq).

    Nelder-Mead minimizes the mean negative log-likelihood over
    ``(omega, alpha, atanh(beta), log(sigma_sq))`` when ``region="free"``,
    or over ``(omega, log(alpha), logit(beta), log(sigma_sq))`` when
    ``region="stationary"`` restricts the search to ``alpha > 0``,
    ``0 < beta < 1`` and a long-run correlation ``omega / (1 - beta)``
    inside (-1, 1).  The starting point is returned when the search does
    not improve on it.
    """
    if region not in PARAM_REGIONS:
        raise ValueError(f"region must be one of {PARAM_REGIONS}")
    x = np.ascontiguousarray(x_centered, dtype=float)
    if len(x) < min_length:
        raise ValueError(f"window of {len(x)} points is too short to estimate")
    n = len(x) - 1
    rho0 = float(rho_init)

    def objective(z):
        if not (abs(z[3]) < 700 and abs(z[2]) < 30 and z[1] < 700):
            return math.inf
        p = _from_free(z, region)
        if region == "stationary" and not abs(p.omega) < 1.0 - p.beta:
            return math.inf
        val = _loglik_kernel(x, p.omega, p.alpha, p.beta, p.sigma_sq, rho0)
        return -val / n if math.isfinite(val) else math.inf

    z0 = _to_free(init, region)
    f0 = objective(z0)
    simplex = np.vstack([z0, z0 + np.diag(np.asarray(simplex_step, dtype=float))])
    res = minimize(
        objective,
        z0,
        method="Nelder-Mead",
        options={
            "maxfev": int(max_evals),
            "xatol": tol,
            "fatol": tol,
            "initial_simplex": simplex,
        },
    )
    if not np.isfinite(res.fun) or not res.fun < f0:
        return ScoreDrivenFit(init, -f0 * n, bool(res.success), int(res.nfev))
    return ScoreDrivenFit(_from_free(res.x, region), -float(res.fun) * n, bool(res.success), int(res.nfev))


def simulate_path(n: int, theta: float, params: ScoreDrivenParams, rho_init: float, rng):
    """Draw ``n`` points of one regime; returns the points and the correlations.

    ``rho[j]`` is the correlation that generated point ``j + 1`` from ``j``.
    """
    sd = math.sqrt(params.sigma_sq)
    x = np.empty(n)
    rho = np.empty(max(n - 1, 0))
    x[0] = theta + sd * rng.standard_normal()
    r = float(rho_init)
    for t in range(1, n):
        rho[t - 1] = r
        u = sd * rng.standard_normal()
        prev = x[t - 1] - theta
        x[t] = theta + r * prev + u
        r = min(max(params.omega + params.alpha * u / params.sigma_sq * prev + params.beta * r, -1.0), 1.0)
    return x, rho

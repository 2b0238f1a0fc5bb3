"""Shared pieces of the underlying predictive models (UPMs).

A UPM keeps one sufficient statistic per run-length hypothesis.  Statistics
are stored column-wise (one numpy array per field, one element per
hypothesis) so the run-length filter can score and extend every hypothesis
with a handful of vectorized operations.

Every concrete model provides:

``fresh()``
    statistic of a single hypothesis that has seen no data (prior only).
``extend(stats, x)``
    every hypothesis absorbs the observation ``x``.
``posterior(stats)``
    posterior mean and variance of the regime mean.
``predictive(stats)``
    mean and variance of the Gaussian one-step predictive density.
``moments(stats)``
    both of the above in one pass: posterior mean and variance, then
    predictive mean and variance.
``logpdf(stats, x)``
    log predictive density of ``x`` under every hypothesis.
``segment_log_marginal(xs)``
    exact log marginal likelihood of a whole segment, computed densely and
    independently of the streaming recursion (used as a test oracle).
"""

from __future__ import annotations

import dataclasses
from typing import Protocol, TypeVar

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))

S = TypeVar("S", bound="Batch")


class Batch:
    """Mixin for dataclasses whose fields are equal-length numpy arrays."""

    @classmethod
    def _names(cls) -> tuple[str, ...]:
        names = cls.__dict__.get("_field_names")
        if names is None:
            names = tuple(f.name for f in dataclasses.fields(cls))
            cls._field_names = names
        return names

    def __len__(self) -> int:
        return len(getattr(self, self._names()[0]))

    def take(self: S, index) -> S:
        return type(self)(*(getattr(self, n)[index] for n in self._names()))

    def concat(self: S, other: S) -> S:
        return type(self)(*(np.concatenate((getattr(self, n), getattr(other, n))) for n in self._names()))


class PredictiveModel(Protocol):
    def fresh(self): ...

    def extend(self, stats, x: float): ...

    def posterior(self, stats) -> tuple[np.ndarray, np.ndarray]: ...

    def predictive(self, stats) -> tuple[np.ndarray, np.ndarray]: ...

    def moments(self, stats) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]: ...

    def logpdf(self, stats, x: float) -> np.ndarray: ...


def log_sum_exp(a: np.ndarray) -> float:
    """``log(sum(exp(a)))`` of a 1-d array; -inf for an empty or all -inf input."""
    if a.size == 0:
        return -np.inf
    m = a.max()
    if not np.isfinite(m):
        return float(m) if m > 0 else -np.inf
    return float(m + np.log(np.exp(a - m).sum()))


def gaussian_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def kahan_add(total: np.ndarray, comp: np.ndarray, x) -> tuple[np.ndarray, np.ndarray]:
    """Compensated addition of ``x`` to every running sum."""
    y = x - comp
    t = total + y
    comp = (t - total) - y
    return t, comp


def dense_log_marginal(xs: np.ndarray, mean: float, cov: np.ndarray) -> float:
    """Multivariate normal log density via a Cholesky factorisation."""
    xs = np.asarray(xs, dtype=float)
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, xs - mean)
    return float(-0.5 * (len(xs) * LOG_2PI + z @ z) - np.log(np.diag(chol)).sum())


def window_statistic(model, xs):
    """Statistic of a single hypothesis that has absorbed ``xs`` in order."""
    stats = model.fresh()
    for x in xs:
        stats = model.extend(stats, float(x))
    return stats


def chained_log_marginal(model, xs) -> float:
    """Sum of one-step predictive log densities along ``xs``."""
    stats = model.fresh()
    total = 0.0
    for x in xs:
        total += float(model.logpdf(stats, float(x))[0])
        stats = model.extend(stats, float(x))
    return total

"""Regimes read off an argmax run-length path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Regime:
    """A detected regime ``x[start:stop]`` (0-based, ``stop`` exclusive).

    ``censored`` marks the last regime, closed by the end of the sample
    rather than by a change point.  ``sign`` and ``imbalance`` are the sign
    of the net flow and ``|sum x| / sum |x|``; both are ``None`` when the
    regime was built without the series.
    """

    start: int
    stop: int
    censored: bool = False
    sign: int | None = None
    imbalance: float | None = None

    def __post_init__(self):
        if not self.stop > self.start >= 0:
            raise ValueError(f"empty regime [{self.start}, {self.stop})")

    @property
    def length(self) -> int:
        return self.stop - self.start

    @property
    def t_start(self) -> int:
        """1-based time of the first point."""
        return self.start + 1

    @property
    def t_end(self) -> int:
        """1-based time of the last point."""
        return self.stop


def regime_imbalance(x) -> tuple[int, float]:
    """Sign of the net flow and its imbalance ``|sum x| / sum |x|`` (0 for an all-zero window)."""
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        raise ValueError("regime is empty")
    net = float(x.sum())
    gross = float(np.abs(x).sum())
    if gross == 0.0:
        return 0, 0.0
    return int(np.sign(net)), abs(net) / gross


def extract_regimes(argmax, x=None) -> list[Regime]:
    """Split ``[0, T)`` at every step whose most likely run length is 0."""
    argmax = np.asarray(argmax)
    T = len(argmax)
    if T == 0:
        return []
    starts = np.flatnonzero(argmax == 0)
    if len(starts) == 0 or starts[0] != 0:
        starts = np.concatenate([[0], starts])
    stops = np.concatenate([starts[1:], [T]])
    out = []
    for k, (a, b) in enumerate(zip(starts, stops)):
        last = k == len(starts) - 1
        if x is None:
            out.append(Regime(int(a), int(b), last))
        else:
            s, z = regime_imbalance(np.asarray(x)[a:b])
            out.append(Regime(int(a), int(b), last, s, z))
    return out


def regimes_from_starts(starts, T: int, x=None) -> list[Regime]:
    """Regimes from 0-based start indices, e.g. a simulator's truth."""
    flag = np.ones(T, dtype=np.int64)
    flag[np.asarray(starts, dtype=np.int64)] = 0
    flag[0] = 0
    return extract_regimes(flag, x)

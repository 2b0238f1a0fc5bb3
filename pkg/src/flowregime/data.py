"""Trade ingestion, signed-volume aggregation and synthetic regime data."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .score_driven import ScoreDrivenParams, simulate_path

EXECUTION_TYPES = (4, 5)


class ConfigError(ValueError):
    pass


class MalformedRow(ValueError):
    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"line {line}: {detail}")


@dataclass(frozen=True)
class TradeRecord:
    time: float
    size: int
    price: float
    initiator_sign: int

    @property
    def signed_volume(self) -> int:
        return self.initiator_sign * self.size


@dataclass(frozen=True)
class MessageColumns:
    """Column layout of a LOBSTER message file and its unit conventions.

    ``initiator_from_direction=-1`` reads the direction column as the side
    of the resting order, so the trade initiator is its counterparty.
    """

    time: int = 0
    event_type: int = 1
    order_id: int = 2
    size: int = 3
    price: int = 4
    direction: int = 5
    price_scale: float = 1e-4
    initiator_from_direction: int = -1


def parse_messages(stream: IO[str] | IO[bytes] | Iterable[str], columns: MessageColumns = MessageColumns()) -> list[TradeRecord]:
    """Execution records (event types 4 and 5) of a LOBSTER message stream, in file order."""
    if hasattr(stream, "read"):
        text = stream.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        lines = io.StringIO(text)
    else:
        lines = stream
    need = max(columns.time, columns.event_type, columns.size, columns.price, columns.direction)
    trades = []
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if not row or not "".join(row).strip():
            continue
        if len(row) <= need:
            raise MalformedRow(lineno, f"expected at least {need + 1} columns, got {len(row)}")
        try:
            event = int(row[columns.event_type])
        except ValueError as exc:
            raise MalformedRow(lineno, f"bad event type {row[columns.event_type]!r}") from exc
        if event not in EXECUTION_TYPES:
            continue
        try:
            time = float(row[columns.time])
            size = int(row[columns.size])
            price = float(row[columns.price]) * columns.price_scale
            direction = int(row[columns.direction])
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from exc
        if size <= 0 or price <= 0 or direction not in (1, -1):
            raise MalformedRow(lineno, f"invalid size/price/direction {size}, {price}, {direction}")
        trades.append(TradeRecord(time, size, price, columns.initiator_from_direction * direction))
    return trades


@dataclass
class FlowSeries:
    """Aggregated signed volume ``x`` and last-trade log-price ``logp`` per interval.

    ``day`` labels the trading day of each interval when several per-day
    series were concatenated.
    """

    x: np.ndarray
    logp: np.ndarray | None
    N: int
    day: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.logp is not None:
            self.logp = np.asarray(self.logp, dtype=float)
            if len(self.logp) != len(self.x):
                raise ValueError("x and logp must have equal length")
        if self.day is not None:
            self.day = np.asarray(self.day, dtype=np.int64)
            if len(self.day) != len(self.x):
                raise ValueError("x and day must have equal length")

    @property
    def T(self) -> int:
        return len(self.x)

    def day_starts(self) -> np.ndarray:
        """0-based indices of the first interval of each day after the first."""
        if self.day is None:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(np.diff(self.day) != 0) + 1


def aggregate(trades: Sequence[TradeRecord], N: int) -> FlowSeries:
    """Sum ``N`` consecutive signed volumes per interval; a partial trailing block is dropped."""
    if not isinstance(N, (int, np.integer)) or N <= 0:
        raise ConfigError(f"N must be a positive integer, got {N!r}")
    T = len(trades) // N
    if T == 0:
        raise ValueError(f"need at least N={N} trades, got {len(trades)}")
    v = np.array([tr.signed_volume for tr in trades[: T * N]], dtype=np.int64).reshape(T, N)
    prices = np.array([trades[N * (t + 1) - 1].price for t in range(T)])
    return FlowSeries(v.sum(axis=1).astype(float), np.log(prices), int(N))


def aggregate_days(days: Sequence[Sequence[TradeRecord]], N: int) -> FlowSeries:
    """Aggregate each day separately and concatenate; no interval spans two days."""
    parts = [aggregate(d, N) for d in days]
    return FlowSeries(
        np.concatenate([p.x for p in parts]),
        np.concatenate([p.logp for p in parts]),
        N,
        np.concatenate([np.full(p.T, i) for i, p in enumerate(parts)]),
    )


def write_flow_csv(series: FlowSeries, path: str | Path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write ``t,x,logp`` (1-based ``t``), plus ``day`` and any extra columns."""
    cols = {"t": np.arange(1, series.T + 1), "x": series.x}
    cols["logp"] = series.logp if series.logp is not None else np.full(series.T, np.nan)
    if series.day is not None:
        cols["day"] = series.day
    cols.update(extra or {})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([_fmt(v) for v in row])


def read_flow_csv(path: str | Path, N: int = 1) -> FlowSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if "x" not in rows[0]:
        raise ValueError(f"{path}: missing column 'x'")
    x = np.array([float(r["x"]) for r in rows])
    logp = None
    if "logp" in rows[0]:
        vals = [r["logp"] for r in rows]
        if all(v not in ("", "nan") for v in vals):
            logp = np.array([float(v) for v in vals])
    day = np.array([int(r["day"]) for r in rows]) if "day" in rows[0] else None
    return FlowSeries(x, logp, N, day)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return str(int(v))
    return str(v)


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground-truth generator settings.

    ``rho_mode="const"`` draws each regime as a stationary AR(1) with
    correlation ``rho`` and unconditional variance ``sigma_sq``;
    ``rho_mode="sd"`` evolves the correlation with the score-driven
    recursion ``(omega, alpha, beta)`` and innovation variance ``sigma_sq``,
    restarting each regime at ``rho_init``.
    """

    T: int
    hazard_prob: float = 1 / 80
    mu0: float = 0.0
    sigma0_sq: float = 1.0
    sigma_sq: float = 1.0
    rho_mode: str = "const"
    rho: float = 0.0
    omega: float = 0.02
    alpha: float = 0.05
    beta: float = 0.9
    rho_init: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if self.T < 1:
            raise ConfigError("T must be positive")
        if not 0 < self.hazard_prob <= 1:
            raise ConfigError("hazard_prob must lie in (0, 1]")
        if self.sigma0_sq < 0 or not self.sigma_sq > 0:
            raise ConfigError("sigma0_sq must be >= 0 and sigma_sq > 0")
        if self.rho_mode not in ("const", "sd"):
            raise ConfigError("rho_mode must be 'const' or 'sd'")
        if self.rho_mode == "const" and not abs(self.rho) < 1:
            raise ConfigError("|rho| must be < 1")


@dataclass
class SyntheticOutput:
    """Simulated series with its truth.

    ``true_cp_times`` are the 1-based starts of every regime after the
    first; ``rho_path[t]`` is the correlation that generated point ``t``
    from ``t - 1`` (NaN at regime starts).
    """

    x: np.ndarray
    true_cp_times: list[int]
    true_means: np.ndarray
    rho_path: np.ndarray
    spec: SyntheticSpec = field(repr=False)

    @property
    def regime_starts(self) -> np.ndarray:
        """0-based start index of every true regime, including the first."""
        return np.concatenate([[0], np.asarray(self.true_cp_times, dtype=np.int64) - 1])

    def cp_indicator(self) -> np.ndarray:
        z = np.zeros(len(self.x), dtype=np.int64)
        z[np.asarray(self.true_cp_times, dtype=np.int64) - 1] = 1
        return z


def simulate(spec: SyntheticSpec) -> SyntheticOutput:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    lengths = []
    total = 0
    while total < spec.T:
        n = int(rng.geometric(spec.hazard_prob))
        lengths.append(min(n, spec.T - total))
        total += n
    x = np.empty(spec.T)
    rho = np.full(spec.T, np.nan)
    means = spec.mu0 + math.sqrt(spec.sigma0_sq) * rng.standard_normal(len(lengths))
    sd_params = ScoreDrivenParams(spec.omega, spec.alpha, spec.beta, spec.sigma_sq)
    start = 0
    for n, theta in zip(lengths, means):
        if spec.rho_mode == "const":
            seg, path = _ar1_regime(n, theta, spec.rho, spec.sigma_sq, rng), np.full(n - 1, spec.rho)
        else:
            seg, path = simulate_path(n, theta, sd_params, spec.rho_init, rng)
        x[start : start + n] = seg
        rho[start + 1 : start + n] = path
        start += n
    cps = list(np.cumsum(lengths)[:-1] + 1)
    return SyntheticOutput(x, [int(c) for c in cps], means, rho, spec)


def _ar1_regime(n: int, theta: float, rho: float, sigma_sq: float, rng) -> np.ndarray:
    out = np.empty(n)
    sd = math.sqrt(sigma_sq)
    innov = sd * math.sqrt(1.0 - rho**2)
    out[0] = theta + sd * rng.standard_normal()
    eps = rng.standard_normal(n)
    for t in range(1, n):
        out[t] = theta + rho * (out[t - 1] - theta) + innov * eps[t]
    return out


def write_synthetic(sim: SyntheticOutput, directory: str | Path, logp: np.ndarray | None = None) -> None:
    """``flow.csv`` with a ``true_cp`` column and a ``truth.json`` sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_flow_csv(FlowSeries(sim.x, logp, 1), directory / "flow.csv", {"true_cp": sim.cp_indicator()})
    truth = {
        "true_cp_times": sim.true_cp_times,
        "true_means": [float(m) for m in sim.true_means],
        "rho_path": [None if math.isnan(r) else float(r) for r in sim.rho_path],
    }
    (directory / "truth.json").write_text(json.dumps(truth, indent=1) + "\n", encoding="utf-8")

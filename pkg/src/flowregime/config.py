"""Run configuration, bundled presets and detector construction."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .data import ConfigError
from .engine import MEAN_MODES, Detector, Hazard, Truncation
from .iid import GaussianIID
from .markov import VARIANCE_MODES, MarkovAR1
from .mboc import MbocDetector
from .score_driven import PARAM_REGIONS, ScoreDrivenParams

MODELS = ("bocpd", "mbo", "mboc", "arma")
PRESETS = ("tsla-1min", "tsla-3min", "msft-1min", "msft-3min")


@dataclass
class RunConfig:
    model: str = "mboc"
    mu0: float = 0.0
    sigma0_sq: float = 1.0
    sigma_sq: float = 1.0
    cp_prob: float = 1 / 80
    rho: float = 0.2
    rho_sweep: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.3])
    rho_init: float = 0.2
    omega0: float = 0.08
    alpha0: float = 0.02
    beta0: float = 0.05
    sigma_sq0: float = 1.0
    eta: float = 20
    N: int | None = None
    threshold: float = 1e-12
    max_entries: int | None = 2000
    mean_mode: str = "conditional"
    variance: str = "ar1"
    region: str = "stationary"
    warm_start: bool = False
    max_evals: int = 500
    refine_evals: int = 60
    rho_bound: float = 0.999
    seed: int = 0
    day_policy: str = "skip"
    delta: str = "endpoint"
    thetas: list[float] = field(default_factory=lambda: [0.0, 0.5, 0.9])
    m_values: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    k_max: int = 10
    lb_lags: int | None = None
    min_regime_length: int = 8
    level: float = 0.05
    preset: str | None = None

    def validate(self) -> "RunConfig":
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(self.model in MODELS, f"model must be one of {MODELS}")
        need(0 < self.cp_prob <= 1, "cp_prob must lie in (0, 1]")
        need(self.sigma0_sq > 0 and self.sigma_sq > 0, "sigma0_sq and sigma_sq must be positive")
        need(self.sigma_sq0 > 0, "sigma_sq0 must be positive")
        need(abs(self.rho) < 1 and abs(self.rho_init) < 1, "|rho| and |rho_init| must be < 1")
        need(all(abs(r) < 1 for r in self.rho_sweep), "every rho in rho_sweep must satisfy |rho| < 1")
        need(self.eta >= 0, "eta must be >= 0")
        need(self.N is None or (isinstance(self.N, int) and self.N > 0), "N must be a positive integer")
        need(self.threshold >= 0, "threshold must be >= 0")
        need(self.max_entries is None or self.max_entries > 0, "max_entries must be positive")
        need(self.mean_mode in MEAN_MODES, f"mean_mode must be one of {MEAN_MODES}")
        need(self.variance in VARIANCE_MODES, f"variance must be one of {VARIANCE_MODES}")
        need(self.region in PARAM_REGIONS, f"region must be one of {PARAM_REGIONS}")
        need(0 < self.rho_bound < 1, "rho_bound must lie in (0, 1)")
        need(self.day_policy in ("skip", "carry"), "day_policy must be 'skip' or 'carry'")
        need(self.delta in ("endpoint", "shifted"), "delta must be 'endpoint' or 'shifted'")
        need(all(0 <= t < 1 for t in self.thetas), "thetas must lie in [0, 1)")
        need(all(int(m) >= 1 for m in self.m_values), "m values must be >= 1")
        need(self.k_max >= 1, "k_max must be >= 1")
        need(self.lb_lags is None or self.lb_lags >= 1, "lb_lags must be >= 1")
        need(0 < self.level < 1, "level must lie in (0, 1)")
        if self.model == "mboc" and self.region == "stationary":
            need(
                self.alpha0 > 0 and 0 < self.beta0 < 1 and abs(self.omega0) < 1 - self.beta0,
                "the stationary region needs alpha0 > 0, 0 < beta0 < 1 and |omega0| < 1 - beta0",
            )
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if math.isinf(d["eta"]):
            d["eta"] = "inf"
        return d

    @property
    def hazard(self) -> Hazard:
        return Hazard(self.cp_prob)

    @property
    def truncation(self) -> Truncation:
        return Truncation(self.threshold, self.max_entries)

    @property
    def params(self) -> ScoreDrivenParams:
        return ScoreDrivenParams(self.omega0, self.alpha0, self.beta0, self.sigma_sq0)


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("flowregime.presets").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_config_file(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def resolve(preset: str | None = None, flags: dict | None = None, config_file: str | Path | None = None) -> RunConfig:
    """Defaults, then the preset, then explicit flags, then the config file."""
    merged: dict = {}
    file_values = load_config_file(config_file) if config_file else {}
    preset = file_values.get("preset", preset)
    if preset:
        merged.update(load_preset(preset))
        merged["preset"] = preset
    merged.update({k: v for k, v in (flags or {}).items() if v is not None})
    merged.update(file_values)
    unknown = sorted(set(merged) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")
    if isinstance(merged.get("eta"), str):
        merged["eta"] = float(merged["eta"])
    return RunConfig(**merged).validate()


def build_detector(cfg: RunConfig, model: str | None = None, rho: float | None = None, keep_posterior: bool = True):
    model = model or cfg.model
    if model == "bocpd":
        upm = GaussianIID(cfg.mu0, cfg.sigma0_sq, cfg.sigma_sq)
    elif model == "mbo":
        upm = MarkovAR1(cfg.mu0, cfg.sigma0_sq, cfg.sigma_sq, cfg.rho if rho is None else rho)
    elif model == "mboc":
        return MbocDetector(
            cfg.mu0,
            cfg.sigma0_sq,
            cfg.sigma_sq,
            cfg.hazard,
            cfg.params,
            rho_init=cfg.rho_init,
            eta=cfg.eta,
            truncation=cfg.truncation,
            mean_mode=cfg.mean_mode,
            variance=cfg.variance,
            max_evals=cfg.max_evals,
            refine_evals=cfg.refine_evals,
            rho_bound=cfg.rho_bound,
            keep_posterior=keep_posterior,
            warm_start=cfg.warm_start,
            region=cfg.region,
        )
    else:
        raise ConfigError(f"model {model!r} is not a run-length detector")
    return Detector(upm, cfg.hazard, cfg.truncation, cfg.mean_mode, keep_posterior)

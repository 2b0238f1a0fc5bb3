"""Command-line front end: ``flowregime {simulate,detect,evaluate,impact}``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import MODELS, PRESETS, RunConfig, build_detector, resolve
from .data import ConfigError, FlowSeries, SyntheticSpec, read_flow_csv, simulate, write_synthetic
from .diagnostics import (
    EvalReport,
    arma11_fit_forecast,
    extract_regimes,
    length_histogram,
    mse,
    test_regimes,
)
from .engine import DetectionOutput
from .impact import ImpactSpec, fit_power_law, flow_predictor, impact_curve, impact_predictor, power_law_points, synthesize_prices

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return None if math.isnan(f) else ("inf" if math.isinf(f) else f)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest(out: Path, command: str, cfg: dict) -> None:
    _write_json(out / "manifest.json", {"command": command, "version": __version__, "config": cfg})


# configuration flags shared by detect / evaluate / impact: (flag, key, type)
_CFG_FLAGS = [
    ("--mu0", "mu0", float),
    ("--sigma0-sq", "sigma0_sq", float),
    ("--sigma-sq", "sigma_sq", float),
    ("--hazard", "cp_prob", float),
    ("--rho", "rho", float),
    ("--rho-init", "rho_init", float),
    ("--omega0", "omega0", float),
    ("--alpha0", "alpha0", float),
    ("--beta0", "beta0", float),
    ("--sigma-sq0", "sigma_sq0", float),
    ("--eta", "eta", float),
    ("--threshold", "threshold", float),
    ("--max-entries", "max_entries", int),
    ("--mean-mode", "mean_mode", str),
    ("--variance", "variance", str),
    ("--region", "region", str),
    ("--max-evals", "max_evals", int),
    ("--seed", "seed", int),
    ("--day-policy", "day_policy", str),
    ("--delta", "delta", str),
    ("--k-max", "k_max", int),
    ("--lb-lags", "lb_lags", int),
    ("--min-regime-length", "min_regime_length", int),
]


def _list(kind):
    def parse(text: str):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}") from exc

    return parse


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="flow CSV with columns t,x[,logp]")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--config", help="JSON file; its values override every flag")
    for flag, key, kind in _CFG_FLAGS:
        p.add_argument(flag, dest=key, type=kind, default=None)
    p.add_argument("--rho-sweep", dest="rho_sweep", type=_list(float), default=None)
    p.add_argument("--thetas", dest="thetas", type=_list(float), default=None)
    p.add_argument("--m-values", dest="m_values", type=_list(int), default=None)


def _resolve_args(args, model: str | None = None) -> RunConfig:
    flags = {key: getattr(args, key) for _, key, _ in _CFG_FLAGS}
    flags.update(rho_sweep=args.rho_sweep, thetas=args.thetas, m_values=args.m_values)
    if model is not None:
        flags["model"] = model
    return resolve(args.preset, flags, args.config)


def _load_series(path: str) -> FlowSeries:
    series = read_flow_csv(path)
    if series.T == 0:
        raise ValueError(f"{path}: empty series")
    return series


def _write_detection(out: Path, det: DetectionOutput) -> None:
    _write_json(out / "cp_times.json", {"cp_times": det.cp_times})
    rows = []
    for t, (r, p) in enumerate(det.posterior or []):
        rows.extend((t + 1, int(rr), float(pp)) for rr, pp in zip(r, p))
    _write_csv(out / "posterior.csv", ["t", "r", "prob"], rows)
    _write_csv(
        out / "pred.csv",
        ["t", "mu_hat", "sigma_paper", "sigma_full", "argmax_r"],
        zip(range(1, det.T + 1), det.mu_hat, det.sigma_paper, det.sigma_full, det.argmax),
    )
    if det.extras:
        keys = sorted(det.extras)
        _write_csv(out / "mboc_trace.csv", ["t", *keys], zip(range(1, det.T + 1), *(det.extras[k] for k in keys)))


def _write_regimes(out: Path, regimes, tests) -> None:
    rows = []
    for reg, jb, lb in zip(regimes, tests.jb, tests.lb):
        rows.append((reg.t_start, reg.t_end, reg.length, reg.sign, reg.imbalance, int(reg.censored), jb.p_value, lb.p_value))
    _write_csv(out / "regimes.csv", ["t_start", "t_end", "length", "sign", "Z", "censored", "jb_p", "lb_p"], rows)


def cmd_simulate(args) -> int:
    spec = SyntheticSpec(
        T=args.T,
        hazard_prob=args.hazard,
        mu0=args.mu0,
        sigma0_sq=args.sigma0_sq,
        sigma_sq=args.sigma_sq,
        rho_mode=args.rho_mode,
        rho=args.rho,
        omega=args.omega,
        alpha=args.alpha,
        beta=args.beta,
        rho_init=args.rho_init,
        seed=args.seed,
    )
    sim = simulate(spec)
    out = Path(args.out)
    logp = None
    prices = None
    if args.prices:
        prices = ImpactSpec(args.impact_A, args.impact_gamma, args.impact_noise, seed=args.seed)
        logp = synthesize_prices(sim.x, sim.regime_starts, prices)
    write_synthetic(sim, out, logp)
    cfg = {k: getattr(spec, k) for k in spec.__dataclass_fields__}
    if prices is not None:
        cfg["prices"] = {k: getattr(prices, k) for k in prices.__dataclass_fields__}
    _manifest(out, "simulate", cfg)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _resolve_args(args, args.model)
    if cfg.model == "arma":
        raise UsageError("detect runs a run-length model: bocpd, mbo or mboc")
    series = _load_series(args.input)
    det = build_detector(cfg).run(series.x)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_detection(out, det)
    _manifest(out, "detect", cfg.to_dict())
    return EXIT_OK


def _diagnostic_model(cfg: RunConfig, det: DetectionOutput):
    from .markov import MarkovAR1

    upm = MarkovAR1(cfg.mu0, cfg.sigma0_sq, cfg.sigma_sq, cfg.rho_init, variance=cfg.variance)
    return upm, det.extras.get("rho_used"), det.extras.get("sigma_sq_used")


def cmd_evaluate(args) -> int:
    cfg = _resolve_args(args)
    series = _load_series(args.input)
    x = series.x
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    forecasts, extra = {}, {}
    arma = arma11_fit_forecast(x)
    forecasts["arma"] = arma.forecasts
    extra["arma"] = {"phi": arma.phi, "theta": arma.theta, "c": arma.c, "sigma_sq": arma.sigma_sq}
    forecasts["bocpd"] = build_detector(cfg, "bocpd", keep_posterior=False).run(x).forecasts
    for rho in cfg.rho_sweep:
        forecasts[f"mbo_rho{rho:g}"] = build_detector(cfg, "mbo", rho=rho, keep_posterior=False).run(x).forecasts
    mboc = build_detector(cfg, "mboc", keep_posterior=False).run(x)
    forecasts["mboc"] = mboc.forecasts
    scores = {k: mse(f, x) for k, f in forecasts.items()}

    regimes = extract_regimes(mboc.argmax, x)
    upm, rho_path, s2_path = _diagnostic_model(cfg, mboc)
    tests = test_regimes(regimes, x, upm, rho_path, s2_path, cfg.min_regime_length, cfg.level, cfg.lb_lags)
    lengths, counts = length_histogram(regimes)
    report = EvalReport(
        scores,
        len(regimes),
        (lengths.tolist(), counts.tolist()),
        tests.jb_pass_rate,
        tests.lb_pass_rate,
        tests.n_tested,
        len(regimes) - tests.n_tested,
        {"arma": extra["arma"], "regimes_from": "mboc", "level": cfg.level},
    )
    _write_json(out / "report.json", report.to_dict())
    _write_regimes(out, regimes, tests)
    _write_csv(out / "histogram.csv", ["length", "count"], zip(lengths, counts))
    _manifest(out, "evaluate", cfg.to_dict())
    return EXIT_OK


def _read_argmax(directory: Path, T: int) -> np.ndarray:
    with open(directory / "pred.csv", newline="", encoding="utf-8") as fh:
        argmax = np.array([int(r["argmax_r"]) for r in csv.DictReader(fh)], dtype=np.int64)
    if len(argmax) != T:
        raise ValueError(f"{directory}/pred.csv has {len(argmax)} rows, input has {T}")
    return argmax


def cmd_impact(args) -> int:
    cfg = _resolve_args(args, args.model)
    series = _load_series(args.input)
    if series.logp is None:
        raise ValueError(f"{args.input}: impact needs a complete 'logp' column of log prices")
    x, logp = series.x, series.logp
    if args.detect_dir:
        argmax = _read_argmax(Path(args.detect_dir), series.T)
    else:
        if cfg.model == "arma":
            raise UsageError("impact needs a run-length model: bocpd, mbo or mboc")
        argmax = build_detector(cfg, keep_posterior=False).run(x).argmax
    regimes = extract_regimes(argmax, x)
    days = series.day_starts()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    powerlaw = {}
    counts = {}
    for theta in cfg.thetas:
        curve = impact_curve(regimes, logp, theta, cfg.k_max, days, cfg.day_policy)
        _write_csv(out / f"impact_theta{theta:g}.csv", ["k", "impact_bp", "se", "n"], zip(curve.k, curve.impact_bp, curve.se, curve.n))
        counts[f"{theta:g}"] = {"regimes": curve.n_regimes, "censored": curve.n_censored}
        chosen = [r for r in regimes if r.imbalance > theta]
        q, y = power_law_points(chosen, x, logp, cfg.delta, days, cfg.day_policy)
        entry = {}
        for label, flag in (("all", False), ("no_outliers", True)):
            try:
                entry[label] = fit_power_law(q, y, flag).as_dict()
            except ValueError as exc:
                entry[label] = {"error": str(exc)}
        powerlaw[f"{theta:g}"] = entry
    _write_json(out / "powerlaw.json", {"volume_units": "shares", "price_units": "bp", "fits": powerlaw, "counts": counts})
    starts = [r.start for r in regimes]
    for m in cfg.m_values:
        for kind, fn in (("flow", flow_predictor), ("impact", impact_predictor)):
            pc = fn(x, m, cfg.k_max, regime_starts=starts) if kind == "flow" else fn(x, logp, m, cfg.k_max, regime_starts=starts)
            _write_csv(
                out / f"predictor_{kind}_m{m}.csv",
                ["k", "conditional", "conditional_se", "conditional_n", "benchmark", "benchmark_se", "benchmark_n"],
                zip(pc.k, pc.conditional, pc.conditional_se, pc.conditional_n, pc.benchmark, pc.benchmark_se, pc.benchmark_n),
            )
    _manifest(out, "impact", cfg.to_dict())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowregime", description="Online regime detection for aggregated order flow.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic regime-switching series")
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--hazard", type=float, default=1 / 80)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mu0", type=float, default=0.0)
    s.add_argument("--sigma0-sq", type=float, default=1.0)
    s.add_argument("--sigma-sq", type=float, default=1.0)
    s.add_argument("--rho-mode", choices=("const", "sd"), default="const")
    s.add_argument("--rho", type=float, default=0.0)
    s.add_argument("--omega", type=float, default=0.02)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--beta", type=float, default=0.9)
    s.add_argument("--rho-init", type=float, default=0.2)
    s.add_argument("--prices", action="store_true", help="add a synthetic logp column")
    s.add_argument("--impact-A", type=float, default=1.0)
    s.add_argument("--impact-gamma", type=float, default=0.5)
    s.add_argument("--impact-noise", type=float, default=0.0, help="price noise per interval, bp")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("detect", help="run one detector over a flow series")
    d.add_argument("--model", choices=[m for m in MODELS if m != "arma"], default=None)
    _add_config_flags(d)
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("evaluate", help="compare one-step forecasts of all models")
    _add_config_flags(e)
    e.set_defaults(func=cmd_evaluate)

    i = sub.add_parser("impact", help="price response and predictors inside regimes")
    i.add_argument("--model", choices=[m for m in MODELS if m != "arma"], default=None)
    i.add_argument("--detect-dir", help="reuse pred.csv from an earlier detect run")
    _add_config_flags(i)
    i.set_defaults(func=cmd_impact)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"flowregime: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"flowregime: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"flowregime: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

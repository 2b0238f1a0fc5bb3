import csv
import json

import pytest
from numpy.testing import assert_allclose

from flowregime.cli import main
from flowregime.config import ConfigError, RunConfig, load_preset, resolve


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def sd_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = run("simulate", "--T", 1500, "--hazard", 0.0125, "--seed", 1, "--sigma0-sq", 25, "--rho-mode", "sd",
               "--omega", 0.02, "--alpha", 0.05, "--beta", 0.9, "--prices", "--impact-noise", 1.0, "--out", out)
    assert code == 0
    return out


def test_simulate_deterministic(tmp_path, sd_data):
    again = tmp_path / "again"
    assert run("simulate", "--T", 1500, "--hazard", 0.0125, "--seed", 1, "--sigma0-sq", 25, "--rho-mode", "sd",
               "--omega", 0.02, "--alpha", 0.05, "--beta", 0.9, "--prices", "--impact-noise", 1.0, "--out", again) == 0
    for name in ("flow.csv", "truth.json", "manifest.json"):
        assert (again / name).read_bytes() == (sd_data / name).read_bytes()
    truth = json.loads((sd_data / "truth.json").read_text())
    assert any(r is not None and r != 0.2 for r in truth["rho_path"])


def test_usage_error_exit_code(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        run("simulate", "--out", tmp_path)
    assert info.value.code == 2
    assert run("detect", "--model", "bocpd", "--input", tmp_path / "x.csv", "--out", tmp_path, "--hazard", 2.0) == 2


def test_detect_posterior_rows_sum_to_one(tmp_path, sd_data):
    out = tmp_path / "det"
    assert run("detect", "--model", "bocpd", "--preset", "tsla-3min", "--input", sd_data / "flow.csv", "--out", out) == 0
    rows = read_csv(out / "posterior.csv")
    sums = {}
    for r in rows:
        sums[r["t"]] = sums.get(r["t"], 0.0) + float(r["prob"])
    assert len(sums) == 1500
    assert_allclose(list(sums.values()), 1.0, atol=1e-9)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["preset"] == "tsla-3min"
    assert manifest["config"]["sigma_sq"] == 1e8
    pred = read_csv(out / "pred.csv")
    assert list(pred[0]) == ["t", "mu_hat", "sigma_paper", "sigma_full", "argmax_r"]
    cps = json.loads((out / "cp_times.json").read_text())["cp_times"]
    assert cps == [int(p["t"]) for p in pred if p["argmax_r"] == "0" and p["t"] != "1"]


def test_detect_is_byte_identical(tmp_path, sd_data):
    args = ["detect", "--model", "mboc", "--eta", 20, "--input", sd_data / "flow.csv", "--sigma0-sq", 25]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    for name in ("posterior.csv", "pred.csv", "cp_times.json", "mboc_trace.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_infinite_eta_matches_mbo(tmp_path, sd_data):
    common = ["--input", sd_data / "flow.csv", "--sigma0-sq", 25, "--rho-init", 0.3]
    assert run("detect", "--model", "mboc", "--eta", 1e18, *common, "--out", tmp_path / "a") == 0
    assert run("detect", "--model", "mbo", "--rho", 0.3, *common, "--out", tmp_path / "b") == 0
    a, b = read_csv(tmp_path / "a" / "pred.csv"), read_csv(tmp_path / "b" / "pred.csv")
    assert_allclose([float(r["mu_hat"]) for r in a], [float(r["mu_hat"]) for r in b], rtol=1e-10, atol=1e-12)
    assert [r["argmax_r"] for r in a] == [r["argmax_r"] for r in b]


def test_evaluate_report(tmp_path, sd_data):
    out = tmp_path / "ev"
    assert run("evaluate", "--input", sd_data / "flow.csv", "--sigma0-sq", 25, "--rho-sweep", "0.1,0.3", "--out", out) == 0
    rep = json.loads((out / "report.json").read_text())
    assert set(rep["mse"]) == {"arma", "bocpd", "mbo_rho0.1", "mbo_rho0.3", "mboc"}
    assert 0 <= rep["lb_pass_rate"] <= 1 and 0 <= rep["jb_pass_rate"] <= 1
    regimes = read_csv(out / "regimes.csv")
    assert len(regimes) == rep["regime_count"]
    assert sum(int(r["length"]) for r in regimes) == 1500
    hist = read_csv(out / "histogram.csv")
    assert sum(int(h["count"]) for h in hist) == rep["regime_count"]


@pytest.mark.slow
def test_evaluate_white_noise_null(tmp_path):
    data = tmp_path / "wn"
    assert run("simulate", "--T", 4000, "--hazard", 1e-9, "--sigma0-sq", 0, "--seed", 3, "--out", data) == 0
    out = tmp_path / "ev"
    # a hazard matched to a single-regime truth; at 1/80 false alarms alone cost a few percent
    assert run("evaluate", "--input", data / "flow.csv", "--hazard", 0.001, "--rho-sweep", "0.05", "--rho-init", 0.05, "--out", out) == 0
    norm = [v["normalized"] for v in json.loads((out / "report.json").read_text())["mse"].values()]
    assert max(norm) / min(norm) - 1 < 0.02


def test_evaluate_empty_input(tmp_path):
    (tmp_path / "empty.csv").write_text("t,x,logp\n")
    assert run("evaluate", "--input", tmp_path / "empty.csv", "--out", tmp_path / "o") == 1
    assert run("detect", "--input", tmp_path / "missing.csv", "--out", tmp_path / "o") == 1


def test_impact_end_to_end(tmp_path):
    data = tmp_path / "sim"
    assert run("simulate", "--T", 20000, "--hazard", 0.05, "--sigma0-sq", 100, "--rho", 0.2, "--seed", 4,
               "--prices", "--impact-A", 2.0, "--impact-noise", 0.5, "--out", data) == 0
    det = tmp_path / "det"
    assert run("detect", "--model", "mbo", "--rho", 0.2, "--hazard", 0.05, "--sigma0-sq", 100,
               "--input", data / "flow.csv", "--out", det) == 0
    out = tmp_path / "imp"
    assert run("impact", "--input", data / "flow.csv", "--detect-dir", det, "--out", out) == 0
    pl = json.loads((out / "powerlaw.json").read_text())
    n = [pl["counts"][t]["regimes"] for t in ("0", "0.5", "0.9")]
    assert n[0] >= n[1] >= n[2]
    gamma = pl["fits"]["0"]["no_outliers"]["gamma"]
    assert abs(gamma - 0.5) < 0.05
    for m in (1, 2, 3, 4):
        assert (out / f"predictor_flow_m{m}.csv").exists() and (out / f"predictor_impact_m{m}.csv").exists()
    assert read_csv(out / "impact_theta0.5.csv")[0].keys() == {"k", "impact_bp", "se", "n"}


def test_impact_requires_prices(tmp_path, capsys):
    data = tmp_path / "sim"
    assert run("simulate", "--T", 200, "--out", data) == 0
    assert run("impact", "--model", "bocpd", "--input", data / "flow.csv", "--out", tmp_path / "o") == 1
    assert "logp" in capsys.readouterr().err


# --- configuration -----------------------------------------------------------------


def test_presets_load():
    for name in ("tsla-1min", "tsla-3min", "msft-1min", "msft-3min"):
        cfg = resolve(name)
        assert cfg.preset == name and cfg.cp_prob == 0.0125 and cfg.mu0 == 0.0
        assert (cfg.omega0, cfg.alpha0, cfg.beta0, cfg.sigma_sq0) == (0.08, 0.02, 0.05, 1e8)
    assert resolve("tsla-1min").eta == 20 and resolve("tsla-3min").eta == 10
    assert resolve("msft-1min").sigma_sq == 1.5e9 and resolve("msft-1min").rho_init == 0.3
    with pytest.raises(ConfigError):
        load_preset("aapl-5min")


def test_precedence(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"eta": 7, "rho": 0.15}))
    cfg = resolve("tsla-1min", {"eta": 30, "rho": 0.4, "sigma_sq": 5.0}, cfg_file)
    assert cfg.eta == 7 and cfg.rho == 0.15  # file wins over flags
    assert cfg.sigma_sq == 5.0  # flag wins over preset
    assert cfg.sigma0_sq == 1e7  # preset wins over defaults
    assert resolve(flags={"eta": None}).eta == RunConfig().eta


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        resolve(flags={"cp_prob": 0.0})
    with pytest.raises(ConfigError):
        resolve(flags={"rho": 1.0})
    with pytest.raises(ConfigError):
        resolve(flags={"omega0": 0.99})
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(ConfigError):
        resolve(config_file=bad)
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        resolve(config_file=bad)


def test_manifest_round_trips_infinite_eta(tmp_path, sd_data):
    out = tmp_path / "d"
    assert run("detect", "--model", "mboc", "--eta", "inf", "--input", sd_data / "flow.csv", "--out", out) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["eta"] == "inf"
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({k: v for k, v in manifest["config"].items()}))
    assert resolve(config_file=cfg_file).eta == float("inf")

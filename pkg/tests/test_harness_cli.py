import copy
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from heavysign import harness as hn
from heavysign.cli import main

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"


def _cfg(name="mini_lion.json"):
    return json.loads((DATA / name).read_text())


def _tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


# --- config validation --------------------------------------------------------

def test_schema_errors_carry_json_paths():
    cfg = _cfg()
    cfg["noise"]["p"] = 3.0
    cfg["hyperparams"]["bogus"] = 1
    with pytest.raises(hn.ConfigError) as e:
        hn.validate_config(cfg)
    msg = str(e.value)
    assert "/noise/p" in msg and "/hyperparams" in msg


@pytest.mark.parametrize("mutate,needle", [
    (lambda c: c.update(T_list=[]), "no experiments"),
    (lambda c: c.update(optimizer="muon"), "does not fit"),
    (lambda c: c["hyperparams"].update(source="explicit"), "/hyperparams/eta"),
    (lambda c: c.update(optimizer="nsgd"), "no theory parameters"),
])
def test_semantic_config_errors(mutate, needle):
    cfg = _cfg()
    mutate(cfg)
    with pytest.raises(hn.ConfigError, match=needle):
        hn.validate_config(cfg)


def test_matrix_optimizer_needs_matrix_mode():
    cfg = _cfg("mini_muon.json")
    del cfg["noise"]["matrix_mode"]
    with pytest.raises(hn.ConfigError, match="matrix_mode"):
        hn.validate_config(cfg)


def test_config_hash_ignores_key_order():
    a = _cfg()
    b = json.loads(json.dumps(a, sort_keys=True))
    assert hn.config_hash(a) == hn.config_hash(b)
    b["seeds"] = [5]
    assert hn.config_hash(a) != hn.config_hash(b)


def test_initial_point_shape_check():
    cfg = _cfg()
    prob = hn.make_problem("quadratic", cfg["problem"]["params"])
    np.testing.assert_array_equal(hn.initial_point(cfg, prob), np.full(4, 0.05))
    cfg["x1"] = [1.0, 2.0]
    with pytest.raises(hn.ConfigError):
        hn.initial_point(cfg, prob)


def test_theory_hyperparams_and_beta1_admissibility():
    cfg = _cfg()
    prob = hn.make_problem("quadratic", cfg["problem"]["params"])
    spec = hn.build_noise(cfg)
    x1 = hn.initial_point(cfg, prob)
    hp, rec = hn.resolve_hyperparams(cfg, prob, spec, x1, 1024)
    lo, hi = rec["params"]["beta1_range"]
    assert hp.beta1 == lo and hp.lam == rec["params"]["lambda_max"]
    cfg["hyperparams"]["beta1"] = lo / 2
    with pytest.raises(hn.ConfigError, match="beta1"):
        hn.resolve_hyperparams(cfg, prob, spec, x1, 1024)


# --- experiments --------------------------------------------------------------

def test_run_cell_stability_holds_with_admissible_parameters():
    cell, csv = hn.run_cell(_cfg(), 256, 0)
    st = cell["stability"]
    assert st["preconditions"] and st["passed"]
    assert st["max_iterate"] <= st["bound_iterate"]
    assert csv.startswith("t,loss,")


def test_experiment_outputs_and_rate_fit(tmp_path):
    s = hn.run_experiment(_cfg(), tmp_path, workers=1, fit=True)
    assert (tmp_path / "summary.json").is_file() and (tmp_path / "rates.csv").is_file()
    assert len(list((tmp_path / "runs").glob("*.csv"))) == 8
    assert s["assertions_passed"] and s["stability_passed"]
    assert s["rate_fit"]["predicted"] == pytest.approx(0.2)


def test_zero_horizon_cell_is_undefined(tmp_path):
    cfg = _cfg("mini_muon.json")
    cfg["T_list"] = [0, 5]
    s = hn.run_experiment(cfg, tmp_path)
    c0 = s["cells"][0]
    assert c0["T"] == 0 and c0["summary"]["defined"] is False


def test_byte_identical_across_workers(tmp_path):
    cfg = _cfg()
    hn.run_experiment(copy.deepcopy(cfg), tmp_path / "a", workers=1, fit=True)
    hn.run_experiment(copy.deepcopy(cfg), tmp_path / "b", workers=4, fit=True)
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_fit_rate_guards():
    with pytest.raises(ValueError, match="spread"):
        hn.fit_rate([(10, 1.0), (20, 0.9), (40, 0.8)])
    with pytest.raises(ValueError, match="3 distinct"):
        hn.fit_rate([(10, 1.0), (1000, 0.5)])
    with pytest.raises(ValueError):
        hn.fit_rate([(10, 1.0), (100, 0.0), (1000, 0.5)])
    pairs = [(T, 3.0 * T ** -0.25) for T in (10, 100, 1000, 10000)]
    rf = hn.fit_rate(pairs + [(100, 3.0 * 100 ** -0.25)], 0.25)
    assert rf.exponent_hat == pytest.approx(0.25)
    assert rf.stderr == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_merges_seeds_by_geometric_mean():
    rf = hn.fit_rate([(10, 1.0), (10, 4.0), (100, 1.0), (1000, 1.0)])
    assert rf.points[0][1] == pytest.approx(np.log(2.0))


# --- CLI ----------------------------------------------------------------------

def _copy_configs(dst: Path) -> None:
    for name in ("mini_lion.json", "mini_muon.json"):
        shutil.copy(DATA / name, dst / name)


def test_cli_report_matches_golden(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    _copy_configs(tmp_path)
    assert main(["sweep", "--config", "mini_lion.json", "--out", "lion"]) == 0
    assert main(["run", "--config", "mini_muon.json", "--out", "muon", "--workers", "2"]) == 0
    assert main(["report", "lion", "muon", "--out", "rep", "--no-figures"]) == 0
    got = (tmp_path / "rep" / "report.md").read_text()
    assert got == (GOLDEN / "report.md").read_text()
    assert not (tmp_path / "rep" / "figures").exists()


def test_cli_report_figures_and_missing_inputs(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    _copy_configs(tmp_path)
    assert main(["sweep", "--config", "mini_lion.json", "--out", "lion"]) == 0
    assert main(["report", "lion", "nowhere", "--out", "rep"]) == 2
    figs = sorted(p.name for p in (tmp_path / "rep" / "figures").glob("*.png"))
    assert figs == ["curves_lion.png", "rate_fits.png"]
    assert "## Missing inputs" in (tmp_path / "rep" / "report.md").read_text()


def test_cli_seed_override(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    _copy_configs(tmp_path)
    assert main(["run", "--config", "mini_muon.json", "--out", "o", "--seed", "9"]) == 0
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert {c["seed"] for c in s["cells"]} == {9}


def test_cli_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"optimizer": "adam"}))
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run"]) == 2
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2


def test_cli_params(capsys):
    rc = main(["params", "--method", "signsgd", "--delta-f", "1", "--l0-norm", "1",
               "--sigma0-norm", "2", "--p", "2", "--T", "100"])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert out["beta"] == pytest.approx(0.95) and out["eta"] == pytest.approx(1.0541e-2, abs=1e-6)
    assert out["predicted_rate_exponent"] == 0.25


def test_cli_validate_noise_writes_artifacts(tmp_path, capsys):
    rc = main(["validate-noise", "--source", "vector", "--p", "2", "--sigma0", "1",
               "--sigma1", "0.5", "--draws", "2000", "--points", "8", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "noise_report.json").read_text())
    assert rep["source"] == "vector" and rep["slope"] > 0
    assert (tmp_path / "noise_points.csv").read_text().startswith("x,y\n")
    assert (tmp_path / "noise_fit.png").is_file()


def test_cli_validate_noise_matrix(tmp_path, capsys):
    rc = main(["validate-noise", "--source", "matrix", "--p", "1.5", "--v0", "1", "--v1", "0.2",
               "--draws", "2000", "--points", "6", "--no-figures", "--out", str(tmp_path)])
    assert rc == 0
    assert not (tmp_path / "noise_fit.png").exists()


def test_cli_tail_index(tmp_path, capsys):
    x = np.random.default_rng(0).standard_normal(20_000)
    f = tmp_path / "x.txt"
    f.write_text("\n".join(repr(float(v)) for v in x) + "\n")
    assert main(["tail-index", str(f)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["alpha_hat"] == pytest.approx(2.0, abs=0.15) and out["n"] == 20_000


def test_cli_verify_concentration_small(tmp_path, capsys):
    rc = main(["verify-concentration", "--trials", "300", "--out", str(tmp_path)])
    doc = json.loads((tmp_path / "concentration.json").read_text())
    assert rc == 0 and doc["passed"]
    assert {r["lemma"] for r in doc["results"]} == {"l1", "nuclear", "vbe"}
    assert len(doc["regret"]) == 3


def test_cli_verify_single_lemma(capsys):
    assert main(["verify-concentration", "--lemma", "vbe", "--trials", "200"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert {r["lemma"] for r in doc["results"]} == {"vbe"} and doc["regret"] == []

"""Config-driven experiments: (T, seed) sweeps, rate fitting and reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import theory
from .noise import MatrixNoiseMode, NoiseSpec, RngStream
from .optim import MATRIX_OPTIMIZERS, HyperParams, run
from .problems import make_problem

__all__ = [
    "ConfigError",
    "load_schema",
    "validate_config",
    "load_config",
    "config_hash",
    "build_noise",
    "initial_point",
    "resolve_hyperparams",
    "run_cell",
    "run_experiment",
    "RateFit",
    "fit_rate",
    "report",
]


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    text = resources.files("heavysign").joinpath("schema/experiment.schema.json").read_text()
    return json.loads(text)


def validate_config(cfg: dict) -> dict:
    """Schema-check a config; errors carry the JSON path of each offending key."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            path = "/" + "/".join(str(k) for k in e.absolute_path)
            lines.append(f"{path}: {e.message}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    if not cfg["T_list"]:
        raise ConfigError("no experiments: T_list is empty")
    matrix = cfg["optimizer"] in MATRIX_OPTIMIZERS
    if matrix != (cfg["problem"]["id"] == "matquad"):
        raise ConfigError(f"optimizer {cfg['optimizer']} does not fit problem {cfg['problem']['id']}")
    if matrix and "matrix_mode" not in cfg["noise"]:
        raise ConfigError("/noise/matrix_mode: required for matrix optimizers")
    hp = cfg["hyperparams"]
    if hp["source"] == "explicit" and "eta" not in hp:
        raise ConfigError("/hyperparams/eta: required when source is explicit")
    if hp["source"] == "theory" and cfg["optimizer"] in ("nsgd", "mnsgd"):
        raise ConfigError(f"/hyperparams/source: no theory parameters for {cfg['optimizer']}")
    return cfg


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    return validate_config(cfg)


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(_canonical(cfg).encode("utf-8")).hexdigest()


def build_noise(cfg: dict) -> NoiseSpec:
    nz = cfg["noise"]
    mm = nz.get("matrix_mode")
    return NoiseSpec(p=float(nz["p"]), family=nz.get("family", "gaussian"),
                     family_param=nz.get("family_param"),
                     sigma0=nz.get("sigma0", 0.0), sigma1=nz.get("sigma1", 0.0),
                     matrix_mode=MatrixNoiseMode(mm["v0_scale"], mm["v1_op"]) if mm else None)


def initial_point(cfg: dict, problem) -> np.ndarray:
    x1 = np.asarray(cfg.get("x1", 1.0), dtype=np.float64)
    shape = tuple(problem.shape)
    if x1.ndim == 0:
        return np.full(shape, float(x1))
    if x1.shape != shape:
        raise ConfigError(f"/x1: shape {x1.shape} does not match problem shape {shape}")
    return x1


def _theory_inputs(cfg: dict, problem, spec: NoiseSpec, x1: np.ndarray, T: int) -> theory.TheoryInputs:
    delta = problem.eval_f(x1) - problem.f_star
    if problem.is_matrix:
        m = problem.shape[0]
        mm = spec.matrix_mode
        return theory.TheoryInputs(delta, problem.L0_nuclear, problem.L1_op,
                                   mm.v0_scale * m, mm.v1_op, spec.p, T)
    d = problem.dim
    s0 = np.broadcast_to(spec.sigma0, (d,))
    s1 = np.broadcast_to(spec.sigma1, (d,))
    return theory.TheoryInputs(delta, float(np.sum(problem.l0)), float(np.max(problem.l1)),
                               float(np.sum(s0)), float(np.max(s1)), spec.p, T)


def resolve_hyperparams(cfg: dict, problem, spec: NoiseSpec, x1: np.ndarray, T: int):
    """HyperParams for one cell plus the theory record (None for explicit configs)."""
    h = cfg["hyperparams"]
    opt = cfg["optimizer"]
    common = {"msign_mode": h.get("msign_mode", "exact_svd"), "ns_steps": h.get("ns_steps", 5)}
    if h["source"] == "explicit":
        lam = h.get("lambda", 0.0)
        if lam == "max":
            lam = theory.lambda_max(h["eta"], max(T, 1))
        hp = HyperParams(eta=h["eta"], beta=h.get("beta", 0.0), beta1=h.get("beta1", 0.0),
                         beta2=h.get("beta2", 0.0), lam=lam, batch=h.get("batch", 1), **common)
        return hp, None
    inp = _theory_inputs(cfg, problem, spec, x1, max(T, 1))
    rec = {"inputs": asdict(inp)}
    if opt in ("signsgd", "muon"):
        tp = theory.signsgd_params(inp) if opt == "signsgd" else theory.muon_params(inp)
        rec["params"] = tp.to_dict()
        hp = HyperParams(eta=tp.eta, beta=tp.beta, batch=tp.B, **common)
    else:
        tp = theory.lion_params(inp) if opt == "lion" else theory.muonlight_params(inp)
        rec["params"] = tp.to_dict()
        lo, hi = tp.beta1_range
        default_b1 = lo if opt == "lion" else tp.beta2
        b1 = h.get("beta1", default_b1)
        if not lo <= b1 <= hi:
            raise ConfigError(f"/hyperparams/beta1: {b1} outside admissible [{lo}, {hi}]")
        lam = h.get("lambda", 0.0)
        if lam == "max":
            lam = tp.lambda_max
        hp = HyperParams(eta=tp.eta, beta1=b1, beta2=tp.beta2, lam=lam, batch=tp.B, **common)
    return hp, rec


def _stability(opt: str, hp: HyperParams, T: int, x1: np.ndarray, rec) -> dict | None:
    """Check the weight-decay stability bounds on every iterate when they apply."""
    if opt not in ("lion", "muonlight") or hp.lam <= 0 or rec.iterate_norm is None:
        return None
    lam, eta = hp.lam, hp.eta
    x1n = float(np.max(np.abs(x1))) if x1.ndim == 1 else float(np.linalg.norm(x1, 2))
    pre = lam <= theory.lambda_max(eta, T) and x1n <= 1.0 / (3.0 * lam)
    out = {"preconditions": bool(pre), "bound_iterate": 2.0 / (3.0 * lam),
           "bound_step": 5.0 * eta / 3.0,
           "max_iterate": float(np.max(rec.iterate_norm)) if T else 0.0,
           "max_step": float(np.max(rec.columns["step_norm"])) if T else 0.0}
    if pre:
        ok_x = bool(np.all(rec.iterate_norm <= out["bound_iterate"]))
        ok_s = bool(np.all(rec.columns["step_norm"] <= out["bound_step"]))
        out["passed"] = ok_x and ok_s
    else:
        out["passed"] = None
    return out


def _ratios(problem, spec: NoiseSpec, grads: np.ndarray) -> dict | None:
    nz = [g for g in grads if np.any(g)]
    if not nz:
        return None
    try:
        if problem.is_matrix:
            if problem.L0 is None or spec.matrix_mode is None or spec.matrix_mode.v0_scale == 0:
                return None
            V0 = spec.matrix_mode.v0_scale * np.eye(problem.shape[0])
            R, R1, R2 = theory.complexity_ratios(problem.L0, V0, nz, spec.p)
        else:
            s0 = np.broadcast_to(spec.sigma0, (problem.dim,))
            if not np.any(problem.l0) or not np.any(s0):
                return None
            R, R1, R2 = theory.complexity_ratios(problem.l0, s0, nz, spec.p)
    except ValueError:
        return None
    return {"R": R, "R1": R1, "R2": R2}


def cell_name(cfg: dict, T: int, seed: int) -> str:
    return f"{cfg['optimizer']}_T{T}_s{seed}"


def run_cell(cfg: dict, T: int, seed: int) -> tuple[dict, str | None]:
    """Run one (T, seed) cell.  Returns (summary dict, CSV text or None)."""
    problem = make_problem(cfg["problem"]["id"], cfg["problem"].get("params", {}))
    spec = build_noise(cfg)
    x1 = initial_point(cfg, problem)
    hp, trec = resolve_hyperparams(cfg, problem, spec, x1, T)
    diag = cfg.get("diagnostics", True)
    # one independent stream per (seed, T) cell
    rng = RngStream(seed, T)
    rec = run(cfg["optimizer"], problem, spec, hp, T, rng, x1=x1,
              record_diagnostics=diag, record_grads=diag and T <= 4096)
    cell = {"T": T, "seed": seed, "name": cell_name(cfg, T, seed),
            "hyperparams": hp.to_dict(), "theory": trec,
            "native_norm": rec.native_norm, "summary": rec.summary(),
            "skipped_steps": rec.skipped_steps,
            "stability": _stability(cfg["optimizer"], hp, T, x1, rec),
            "ratios": _ratios(problem, spec, rec.grads) if rec.grads is not None and T else None}
    return cell, (rec.to_csv() if diag else None)


def _cell_job(args):
    cfg, T, seed = args
    return run_cell(cfg, T, seed)


@dataclass
class RateFit:
    exponent_hat: float
    intercept_hat: float
    stderr: float
    points: list = field(default_factory=list)
    predicted: float | None = None
    out_of_model: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def fit_rate(pairs, predicted: float | None = None) -> RateFit:
    """OLS of log(value) on log(T), one point per distinct T.

    pairs are (T, value) from individual runs; runs sharing a T are merged
    by geometric mean.  Needs >= 3 distinct T spanning >= 2 decades.
    """
    groups: dict[int, list[float]] = {}
    for T, v in pairs:
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"rate fit needs positive finite values, got {v} at T={T}")
        groups.setdefault(int(T), []).append(float(v))
    Ts = sorted(groups)
    if len(Ts) < 3:
        raise ValueError("insufficient spread: need at least 3 distinct T values")
    if Ts[-1] / Ts[0] < 100:
        raise ValueError("insufficient spread: T values must span at least 2 decades")
    lx = np.array([math.log(T) for T in Ts])
    ly = np.array([float(np.mean(np.log(sorted(groups[T])))) for T in Ts])
    xm, ym = lx.mean(), ly.mean()
    sxx = float(np.sum((lx - xm) ** 2))
    slope = float(np.sum((lx - xm) * (ly - ym)) / sxx)
    icpt = float(ym - slope * xm)
    res = ly - icpt - slope * lx
    se = math.sqrt(float(np.sum(res ** 2)) / (len(Ts) - 2) / sxx) if len(Ts) > 2 else 0.0
    pts = [[float(a), float(b)] for a, b in zip(lx, ly)]
    return RateFit(-slope, icpt, se, pts, predicted)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def run_experiment(cfg: dict, out_dir=None, workers: int = 1, fit: bool = False) -> dict:
    """Run every (T, seed) cell and write per-run CSVs plus summary.json.

    Cells are independent and may run in parallel; the summary is assembled
    in (T, seed) order so output bytes never depend on the worker count.
    """
    cfg = validate_config(cfg)
    out = Path(out_dir if out_dir is not None else cfg.get("output", "out"))
    jobs = [(cfg, int(T), int(s)) for T in sorted(set(cfg["T_list"])) for s in sorted(set(cfg["seeds"]))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]
    spec = build_noise(cfg)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for cell, text in results:
        if text is not None:
            (out / "runs").mkdir(exist_ok=True)
            path = Path("runs") / f"{cell['name']}.csv"
            (out / path).write_text(text, encoding="utf-8")
            cell["csv"] = path.as_posix()
        cells.append(cell)
    stab = [c["stability"]["passed"] for c in cells if c["stability"] and c["stability"]["passed"] is not None]
    aborted = [c["name"] for c in cells if c["summary"]["aborted_at"] is not None]
    summary = {
        "config_hash": config_hash(cfg),
        "config": cfg,
        "optimizer": cfg["optimizer"],
        "problem": cfg["problem"],
        "noise": spec.to_dict(),
        "cells": cells,
        "aborted": aborted,
        "stability_passed": all(stab) if stab else None,
        "assertions_passed": all(stab),
    }
    if fit:
        pairs = [(c["T"], c["summary"]["avg"]) for c in cells
                 if c["summary"]["defined"] and c["summary"]["aborted_at"] is None]
        rf = fit_rate(pairs, theory.predicted_rate_exponent(spec.p))
        noiseless = (not np.any(spec.sigma0) and not np.any(spec.sigma1)
                     and (spec.matrix_mode is None
                          or (spec.matrix_mode.v0_scale == 0 and spec.matrix_mode.v1_op == 0))
                     and cfg["problem"]["id"] != "bernoulli")
        rf.out_of_model = bool(noiseless)
        summary["rate_fit"] = rf.to_dict()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["log_T", "log_avg_native_norm"])
        for a, b in rf.points:
            w.writerow([repr(a), repr(b)])
        (out / "rates.csv").write_text(buf.getvalue(), encoding="utf-8")
    (out / "summary.json").write_text(_dump(summary), encoding="utf-8")
    return summary


# --- report ------------------------------------------------------------------

def _md_table(header, rows) -> str:
    def cell(v) -> str:
        return str(v).replace("|", "\\|")

    lines = ["| " + " | ".join(cell(h) for h in header) + " |", "|" + "---|" * len(header)]
    for r in rows:
        lines.append("| " + " | ".join(cell(v) for v in r) + " |")
    return "\n".join(lines) + "\n"


def _fmt(v, digits: int = 6) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.{digits}g}"
    return str(v)


def _rel(d: Path, out: Path) -> str:
    # relative to the report so the text does not depend on where it was built
    return Path(os.path.relpath(Path(d).resolve(), out.resolve())).as_posix()


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    path.write_text(buf.getvalue(), encoding="utf-8")


def report(run_dirs, out_dir, figures: bool = True) -> dict:
    """Aggregate experiment and concentration outputs into one report directory.

    Each input directory may hold summary.json (from run/sweep) and/or
    concentration.json (from verify-concentration).  Writes report.md and
    CSV tables; with figures, PNG curves of the native gradient norm and of
    the rate fits.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries, concs, missing = [], [], []
    for d in run_dirs:
        d = Path(d)
        found = False
        if (d / "summary.json").is_file():
            summaries.append((d, json.loads((d / "summary.json").read_text(encoding="utf-8"))))
            found = True
        if (d / "concentration.json").is_file():
            concs.append((d, json.loads((d / "concentration.json").read_text(encoding="utf-8"))))
            found = True
        if not found:
            missing.append(d.as_posix())

    md = ["# heavysign report", ""]
    if missing:
        md += ["## Missing inputs", ""] + [f"- `{_rel(Path(m), out)}`" for m in missing] + [""]

    rate_rows, stab_rows, ratio_rows, conc_rows = [], [], [], []
    for d, s in summaries:
        label = f"{s['optimizer']} / {s['problem']['id']} / p={s['noise']['p']:g}"
        if "rate_fit" in s:
            rf = s["rate_fit"]
            rate_rows.append([label, _fmt(rf["exponent_hat"]), _fmt(rf["stderr"]),
                              _fmt(rf["predicted"]), _fmt(rf["out_of_model"])])
        for c in s["cells"]:
            st = c.get("stability")
            if st:
                stab_rows.append([label, c["T"], c["seed"], _fmt(st["preconditions"]),
                                  _fmt(st["max_iterate"]), _fmt(st["bound_iterate"]),
                                  _fmt(st["max_step"]), _fmt(st["bound_step"]),
                                  _fmt(st["passed"])])
            r = c.get("ratios")
            if r:
                ratio_rows.append([label, c["T"], c["seed"], _fmt(r["R1"]), _fmt(r["R2"]),
                                   _fmt(r["R"])])
    for d, cdoc in concs:
        for r in cdoc.get("results", []):
            conc_rows.append([r["lemma"], "exact" if r["exact"] else "monte carlo",
                              _fmt(r["lhs_mean"]), _fmt(r["rhs_mean"]), _fmt(r["margin"]),
                              _fmt(r["se"]), _fmt(not r["violated"])])
        for r in cdoc.get("regret", []):
            conc_rows.append(["adagrad_regret", r["kind"], _fmt(r["max_lhs_minus_rhs"]), "",
                              "", "", _fmt(r["passed"])])

    if summaries or concs:
        md += ["## Inputs", ""]
        md += [f"- `{_rel(d, out)}` (config {s['config_hash'][:12]})" for d, s in summaries]
        md += [f"- `{_rel(d, out)}` (concentration)" for d, _ in concs]
        md.append("")
    if rate_rows:
        hdr = ["run", "fitted exponent", "stderr", "predicted", "out of model"]
        md += ["## Rate fits", "", _md_table(hdr, rate_rows)]
        _write_csv(out / "rates.csv", hdr, rate_rows)
    if stab_rows:
        hdr = ["run", "T", "seed", "preconditions", "max iterate norm", "iterate bound",
               "max step", "step bound", "passed"]
        md += ["## Weight-decay stability", "", _md_table(hdr, stab_rows)]
        _write_csv(out / "stability.csv", hdr, stab_rows)
    if conc_rows:
        hdr = ["inequality", "method", "lhs", "rhs", "margin", "se", "holds"]
        md += ["## Concentration inequalities", "", _md_table(hdr, conc_rows)]
        _write_csv(out / "concentration.csv", hdr, conc_rows)
    if ratio_rows:
        hdr = ["run", "T", "seed", "R1", "R2", "R"]
        md += ["## Sign vs normalized complexity ratios", "", _md_table(hdr, ratio_rows)]
        _write_csv(out / "ratios.csv", hdr, ratio_rows)
    if summaries:
        md += ["## Reference complexities", "",
               _md_table(["setting", "algorithm", "criterion", "complexity", "improvement"],
                         theory.COMPLEXITY_TABLE)]

    figs = []
    if figures and summaries:
        from .plotting import plot_native_curves, plot_rate_fits
        fig_dir = out / "figures"
        figs += plot_native_curves(summaries, fig_dir)
        figs += plot_rate_fits(summaries, fig_dir)
        if figs:
            md += ["## Figures", ""] + [f"![{p.stem}](figures/{p.name})" for p in figs] + [""]
    text = "\n".join(md).rstrip("\n") + "\n"
    (out / "report.md").write_text(text, encoding="utf-8")
    return {"missing": missing, "figures": [p.as_posix() for p in figs],
            "summaries": len(summaries), "concentration": len(concs)}

"""Command-line entry point: ``heavysign <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import concentration as conc
from . import theory
from .harness import ConfigError, load_config, report, run_experiment
from .noise import MatrixNoiseMode, NoiseSpec, RngStream, estimate_tail_index
from .noise import noisy_gradient_batch, noisy_gradient_batch_matrix
from .problems import make_bernoulli_regression, make_matrix_quadratic, make_separable_quadratic
from .validate import validate_matrix_noise, validate_vector_noise

log = logging.getLogger("heavysign")


def _common(sub: bool) -> argparse.ArgumentParser:
    # the subcommand copy suppresses defaults so flags given before the
    # subcommand are not overwritten
    kw = {"default": argparse.SUPPRESS} if sub else {}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="experiment config (JSON)", **kw)
    p.add_argument("--seed", type=int, help="random seed (overrides config seeds)", **kw)
    p.add_argument("--workers", type=int, help="parallel worker processes",
                   **(kw or {"default": 1}))
    p.add_argument("--out", type=Path, help="output directory", **kw)
    return p


def _emit(obj, out: Path | None, name: str) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _experiment(args, fit: bool) -> int:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    out = args.out if args.out is not None else Path(cfg.get("output", "out"))
    s = run_experiment(cfg, out, workers=max(1, args.workers), fit=fit)
    brief = {"summary": (out / "summary.json").as_posix(), "cells": len(s["cells"]),
             "aborted": s["aborted"], "assertions_passed": s["assertions_passed"]}
    if fit:
        brief["rate_fit"] = {k: s["rate_fit"][k] for k in ("exponent_hat", "stderr", "predicted",
                                                          "out_of_model")}
    sys.stdout.write(json.dumps(brief, sort_keys=True, indent=2) + "\n")
    return 0 if s["assertions_passed"] else 1


def cmd_run(args) -> int:
    return _experiment(args, fit=False)


def cmd_sweep(args) -> int:
    return _experiment(args, fit=True)


def cmd_params(args) -> int:
    inp = theory.TheoryInputs(args.delta_f, args.l0_norm, args.l1_norm, args.sigma0_norm,
                              args.sigma1_norm, args.p, args.T)
    fn = {"signsgd": theory.signsgd_params, "lion": theory.lion_params,
          "muon": theory.muon_params, "muonlight": theory.muonlight_params}[args.method]
    res = fn(inp).to_dict()
    res["method"] = args.method
    res["predicted_rate_exponent"] = theory.predicted_rate_exponent(args.p)
    _emit(res, args.out, "params.json")
    return 0


def cmd_validate_noise(args) -> int:
    rng = RngStream(args.seed or 0, 0x5A11)
    p = args.p
    mags = np.geomspace(args.min_grad, args.max_grad, args.points)
    if args.source == "bernoulli":
        prob, sampler = make_bernoulli_regression(np.zeros(1), args.sigma, p)
        # |grad| = |x - x*| / 2
        traj = [np.array([2.0 * g]) for g in mags]
        rep = validate_vector_noise(prob.eval_grad, sampler, traj, None if args.estimate_p else p,
                                    args.draws, 0, rng)
    elif args.source == "vector":
        spec = NoiseSpec(p=p, family=args.family, family_param=args.family_param,
                         sigma0=args.sigma0, sigma1=args.sigma1)
        prob = make_separable_quadratic(np.ones(1), np.zeros(1))
        traj = [np.array([g]) for g in mags]

        def sampler(x, n, g):
            return noisy_gradient_batch(prob.eval_grad(x), spec, n, g)

        rep = validate_vector_noise(prob.eval_grad, sampler, traj, None if args.estimate_p else p,
                                    args.draws, 0, rng)
    else:
        m, n = args.shape
        spec = NoiseSpec(p=p, family=args.family, family_param=args.family_param,
                         matrix_mode=MatrixNoiseMode(args.v0, args.v1))
        prob = make_matrix_quadratic(np.eye(m), np.zeros((m, n)))
        base = np.eye(m, n)
        traj = [g / min(m, n) * base for g in mags]

        def sampler(X, k, g):
            return noisy_gradient_batch_matrix(prob.eval_grad(X), spec, k, g)

        rep = validate_matrix_noise(prob.eval_grad, sampler, traj, p, args.draws, rng)
    doc = rep.to_dict()
    doc["source"] = args.source
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        lines = ["x,y"] + [f"{a!r},{b!r}" for a, b in zip(rep.x, rep.y)]
        (args.out / "noise_points.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        if not args.no_figures:
            from .plotting import plot_noise_fit
            plot_noise_fit(rep.x, rep.y, rep.intercept, rep.slope, args.out / "noise_fit.png",
                           "|grad|^p", "E|noise|^p")
    _emit(doc, args.out, "noise_report.json")
    return 0


def cmd_verify_concentration(args) -> int:
    seed = args.seed or 0
    n = args.trials
    chosen = ("l1", "nuclear", "vbe", "regret") if args.lemma == "all" else (args.lemma,)
    results = []
    stable = conc.make_sampler("alpha_stable", 1.5)
    gauss = conc.make_sampler("gaussian")
    if "l1" in chosen:
        results.append(conc.exact_l1_concentration(4, 2))
        results.append(conc.exact_l1_concentration(1, 1))
        results.append(conc.verify_l1_concentration(gauss, 64, 8, n, RngStream(seed, 1)))
        results.append(conc.verify_l1_concentration(stable, 64, 8, n, RngStream(seed, 2), p=1.4))
    if "nuclear" in chosen:
        results.append(conc.exact_nuclear_concentration(4, 1, 1))
        results.append(conc.exact_nuclear_concentration(4, 2, 2))
        results.append(conc.verify_nuclear_concentration(gauss, 64, 4, 6, n, RngStream(seed, 3)))
        results.append(conc.verify_nuclear_concentration(stable, 64, 4, 6, n, RngStream(seed, 4)))
    if "vbe" in chosen:
        results.append(conc.exact_von_bahr_esseen(4, 1.5))
        results.append(conc.exact_von_bahr_esseen(4, 2.0))
        results.append(conc.verify_von_bahr_esseen(gauss, 64, 1.5, n, RngStream(seed, 5), d=4))
        results.append(conc.verify_von_bahr_esseen(stable, 64, 1.4, n, RngStream(seed, 6)))
    regret = conc.regret_stress_test(n, RngStream(seed, 0xADA)) if "regret" in chosen else []
    ok = all(not r.violated for r in results) and all(r["passed"] for r in regret)
    doc = {"results": [r.to_dict() for r in results], "regret": regret, "passed": ok,
           "trials": n, "seed": seed}
    _emit(doc, args.out, "concentration.json")
    return 0 if ok else 1


def cmd_tail_index(args) -> int:
    vals = []
    with open(args.file, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                vals.append(float(line))
    x = np.array(vals)
    if args.blocks is None:
        x = x[: x.size - x.size % 1000] if x.size % 1000 and x.size > 1000 else x
    alpha = estimate_tail_index(x, args.blocks)
    _emit({"alpha_hat": alpha, "n": int(x.size), "blocks": args.blocks}, args.out,
          "tail_index.json")
    return 0


def cmd_report(args) -> int:
    if args.out is None:
        raise ConfigError("--out is required for report")
    res = report(args.runs, args.out, figures=not args.no_figures)
    sys.stdout.write(json.dumps(res, sort_keys=True, indent=2) + "\n")
    return 2 if res["missing"] else 0


def build_parser() -> argparse.ArgumentParser:
    common = _common(sub=True)
    ap = argparse.ArgumentParser(prog="heavysign", parents=[_common(sub=False)],
                                 description="Sign-based optimizers under heavy-tailed noise.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", parents=[common], help="run every (T, seed) cell of a config")
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("sweep", parents=[common], help="run a config and fit the rate exponent")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("params", parents=[common], help="theorem hyperparameters as JSON")
    sp.add_argument("--method", choices=["signsgd", "lion", "muon", "muonlight"], required=True)
    sp.add_argument("--delta-f", type=float, required=True)
    sp.add_argument("--l0-norm", type=float, required=True)
    sp.add_argument("--l1-norm", type=float, default=0.0)
    sp.add_argument("--sigma0-norm", type=float, required=True)
    sp.add_argument("--sigma1-norm", type=float, default=0.0)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--T", type=int, required=True)
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("validate-noise", parents=[common],
                        help="fit the affine noise-moment model on a known generator")
    sp.add_argument("--source", choices=["bernoulli", "vector", "matrix"], default="bernoulli")
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--estimate-p", action="store_true", help="estimate p from pooled noise")
    sp.add_argument("--sigma", type=float, default=1.0, help="bernoulli noise scale")
    sp.add_argument("--family", default="gaussian")
    sp.add_argument("--family-param", type=float)
    sp.add_argument("--sigma0", type=float, default=1.0)
    sp.add_argument("--sigma1", type=float, default=0.0)
    sp.add_argument("--v0", type=float, default=1.0)
    sp.add_argument("--v1", type=float, default=0.0)
    sp.add_argument("--shape", type=int, nargs=2, default=(4, 6), metavar=("M", "N"))
    sp.add_argument("--points", type=int, default=20)
    sp.add_argument("--draws", type=int, default=10_000)
    sp.add_argument("--min-grad", type=float, default=0.1)
    sp.add_argument("--max-grad", type=float, default=3.0)
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_validate_noise)

    sp = sub.add_parser("verify-concentration", parents=[common],
                        help="check the concentration inequalities and regret bound")
    sp.add_argument("--lemma", choices=["l1", "nuclear", "vbe", "regret", "all"], default="all")
    sp.add_argument("--trials", type=int, default=10_000)
    sp.set_defaults(func=cmd_verify_concentration)

    sp = sub.add_parser("tail-index", parents=[common], help="estimate the tail index of a sample")
    sp.add_argument("file", type=Path, help="newline-delimited numeric file")
    sp.add_argument("--blocks", type=int)
    sp.set_defaults(func=cmd_tail_index)

    sp = sub.add_parser("report", parents=[common], help="aggregate outputs into a report")
    sp.add_argument("runs", type=Path, nargs="*", help="directories from run/sweep/verify")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as e:
        log.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())

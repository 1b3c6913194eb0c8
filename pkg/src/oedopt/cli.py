"""Command-line interface.

Subcommand groups:
  surrogate build | check     construct / validate the polynomial surrogate
  eig eval | surface          point estimates and design-grid maps of U_hat
  optimize rm | saa           replicated stochastic optimization runs
  model solve | field         direct diffusion-model queries
  experiment matrix           the full (N, M) study from a JSON config
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import harness, models, optim, polychaos
from .bounds import Bounds
from .eig import (EIGEstimator, NoiseModel, PriorSpec, draw_sample_set,
                  eig_gradient, eig_value)
from .rng import derived_seed


def _parse_point(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _load_model_config(path: str | None) -> dict:
    doc = {}
    if path:
        with open(path) as fh:
            doc = json.load(fh)
    doc.setdefault("diffusion", {})
    doc.setdefault("degree", 4)
    doc.setdefault("quadrature", {"kind": "tensor", "levels": [3, 3, 3, 3]})
    doc.setdefault("theta_bounds", [[0.0, 1.0], [0.0, 1.0]])
    doc.setdefault("design_bounds", [[0.0, 1.0], [0.0, 1.0]])
    doc.setdefault("log_space", False)
    doc.setdefault("noise", {"alpha": 0.1, "beta": 0.1})
    return doc


def _diffusion_from(doc: dict) -> models.DiffusionConfig:
    cfg = dict(doc.get("diffusion", {}))
    if "obs_times" in cfg:
        cfg["obs_times"] = tuple(cfg["obs_times"])
    return models.DiffusionConfig(**cfg)


def _quadrature_from(doc: dict) -> polychaos.QuadratureRule:
    q = doc["quadrature"]
    if q["kind"] == "tensor":
        return polychaos.tensor_quadrature(q["levels"])
    if q["kind"] == "smolyak":
        n_s = len(doc["theta_bounds"]) + len(doc["design_bounds"])
        return polychaos.smolyak_quadrature(n_s, int(q["level"]))
    raise SystemExit(f"unknown quadrature kind {q['kind']!r}")


def _benchmark_estimator(args, n, m):
    """Estimator over the benchmark surrogate or the analytic oracle."""
    if getattr(args, "oracle", False):
        model = models.linear_gaussian_forward()
        noise = NoiseModel.scaled(1, args.alpha, args.beta)
        prior = PriorSpec.standard_normal(1)
        bounds = Bounds.from_pairs([(0.0, 1.0)])
    else:
        if not args.surrogate:
            raise SystemExit("need --surrogate (or --oracle)")
        expansion = polychaos.PCExpansion.load(args.surrogate)
        model = models.SurrogateForwardModel(
            expansion, n_theta=expansion.dimension - 2)
        noise = NoiseModel.scaled(model.n_y, args.alpha, args.beta)
        pairs = [(mp.gamma - abs(mp.delta), mp.gamma + abs(mp.delta))
                 for mp in expansion.maps]
        prior = PriorSpec.uniform(pairs[:model.n_theta])
        bounds = Bounds.from_pairs(pairs[model.n_theta:])
    return EIGEstimator(model, noise, prior, N=n, M=m, design_bounds=bounds)


# -- surrogate ---------------------------------------------------------------


def _cmd_surrogate_build(args):
    doc = _load_model_config(args.config)
    cfg = _diffusion_from(doc)
    fm = models.diffusion_forward(cfg)
    pairs = [tuple(p) for p in doc["theta_bounds"]] + \
        [tuple(p) for p in doc["design_bounds"]]
    maps = polychaos.box_maps(pairs)
    rule = _quadrature_from(doc)
    iset = polychaos.total_order_index_set(len(pairs), int(doc["degree"]))
    print(f"building degree-{doc['degree']} surrogate from {rule.n_points} "
          f"model evaluations ...", file=sys.stderr)
    expansion = polychaos.project(fm.value, iset, rule, maps,
                                  n_theta=fm.n_theta,
                                  log_space=bool(doc["log_space"]))
    expansion.save(args.out)
    print(json.dumps({"out": args.out, "terms": len(iset),
                      "model_evaluations": rule.n_points}))


def _cmd_surrogate_check(args):
    doc = _load_model_config(args.config)
    cfg = _diffusion_from(doc)
    fm = models.diffusion_forward(cfg)
    expansion = polychaos.PCExpansion.load(args.surrogate)
    rng = np.random.default_rng(args.seed)
    pairs = [tuple(p) for p in doc["theta_bounds"]] + \
        [tuple(p) for p in doc["design_bounds"]]
    lo = np.array([p[0] for p in pairs])
    hi = np.array([p[1] for p in pairs])
    pts = lo + (hi - lo) * rng.random((args.samples, len(pairs)))
    direct = np.array([fm.value(p[:fm.n_theta], p[fm.n_theta:]) for p in pts])
    approx = np.array([expansion.evaluate(p[:fm.n_theta], p[fm.n_theta:])
                       for p in pts])
    num = np.sum((approx - direct) ** 2)
    den = np.sum(direct ** 2)
    per = np.sqrt(np.sum((approx - direct) ** 2, axis=0)
                  / np.sum(direct ** 2, axis=0))
    print(json.dumps({
        "n_samples": int(args.samples),
        "rel_l2_error": float(np.sqrt(num / den)),
        "per_output_rel_l2": [float(v) for v in per],
    }))


# -- eig ---------------------------------------------------------------------


def _cmd_eig_eval(args):
    est = _benchmark_estimator(args, args.n, args.m)
    d = _parse_point(args.design)
    samples = draw_sample_set(est, args.seed)
    out = eig_gradient(est, d, samples)
    print(json.dumps({
        "value": out.value,
        "gradient": [float(g) for g in out.gradient],
        "n_model_evals": out.n_model_evals,
    }))


def _cmd_eig_surface(args):
    est = _benchmark_estimator(args, args.n, args.m)
    if est.design_bounds.n_dim != 2:
        raise SystemExit("eig surface needs a 2-D design space")
    samples = draw_sample_set(est, args.seed)
    lo, hi = est.design_bounds.lo, est.design_bounds.hi
    xs = np.linspace(lo[0], hi[0], args.grid)
    ys = np.linspace(lo[1], hi[1], args.grid)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"])
        for x in xs:
            for y in ys:
                v = eig_value(est, np.array([x, y]), samples)
                writer.writerow([repr(float(x)), repr(float(y)),
                                 repr(float(v))])
    print(json.dumps({"out": args.out, "grid": args.grid}))


# -- optimize ----------------------------------------------------------------


def _write_run_csv(path, rows, with_gap):
    header = ["t", "x", "y", "objective", "reestimate", "iterations",
              "wall_s", "termination"]
    if with_gap:
        header += ["gap", "gap_variance"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path


def _reestimate(est, d, seed_parts, n, m):
    re_est = est.with_sizes(N=n, M=m)
    samples = draw_sample_set(re_est, derived_seed(*seed_parts))
    return eig_value(re_est, d, samples)


def _cmd_optimize(args):
    est = _benchmark_estimator(args, args.n, args.m)
    bounds = est.design_bounds
    if args.mode == "rm":
        opts = optim.RMOptions(bounds=bounds,
                               gain=optim.GainSchedule(args.beta),
                               max_iters=args.max_iters)
        batch = optim.rm_optimize(est, args.runs, None, opts, args.seed)
        gaps = [None] * len(batch.traces)
        optima = [None] * len(batch.traces)
    else:
        opts = optim.BFGSOptions(bounds=bounds, max_iters=args.max_iters)
        batch = optim.saa_optimize(est, args.runs, args.n_prime, None, opts,
                                   args.seed)
        gaps = batch.gaps
        optima = list(batch.optima)
    rows = []
    failed = {t for t, _ in batch.failures}
    ids = [t for t in range(1, args.runs + 1) if t not in failed]
    for t, trace, gap, opt_val in zip(ids, batch.traces, gaps, optima):
        d = trace.final
        u_hat = _reestimate(est, d, (args.seed, 999, t),
                            args.requality_n, args.requality_m)
        row = [t, repr(float(d[0])),
               repr(float(d[1])) if d.size > 1 else repr(0.0),
               repr(float(opt_val)) if opt_val is not None else "",
               repr(float(u_hat)), trace.n_iterations,
               repr(trace.wall_time), trace.termination.value]
        if args.mode == "saa":
            row += [repr(gap.gap), repr(gap.variance)]
        rows.append(row)
    csv_path = args.out_prefix + ".csv"
    _write_run_csv(csv_path, rows, with_gap=(args.mode == "saa"))
    summary = {
        "algorithm": args.mode,
        "N": args.n, "M": args.m, "runs": args.runs, "seed": args.seed,
        "failures": batch.failures,
        "mean_reestimate": float(np.mean([float(r[4]) for r in rows]))
        if rows else None,
    }
    json_path = args.out_prefix + ".json"
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=1)
    print(json.dumps({"csv": csv_path, "summary": json_path}))


# -- model -------------------------------------------------------------------


def _cmd_model_solve(args):
    doc = _load_model_config(args.config)
    fm = models.diffusion_forward(_diffusion_from(doc))
    obs = fm.value(_parse_point(args.src), _parse_point(args.sensor))
    print(json.dumps({
        "obs_times": list(fm.config.obs_times),
        "observations": [float(v) for v in obs],
    }))


def _cmd_model_field(args):
    doc = _load_model_config(args.config)
    cfg = _diffusion_from(doc)
    field = models.diffusion_solve(cfg, _parse_point(args.src))
    w = field.field_at_time(args.time)
    xs = np.linspace(0.0, 1.0, cfg.grid_n)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "w"])
        for i in range(cfg.grid_n):
            for j in range(cfg.grid_n):
                writer.writerow([repr(float(xs[i])), repr(float(xs[j])),
                                 repr(float(w[i, j]))])
    print(json.dumps({"out": args.out, "time": args.time,
                      "mass": float(field.mass[field.config.step_of(args.time)])}))


# -- experiment --------------------------------------------------------------


def _cmd_experiment_matrix(args):
    with open(args.config) as fh:
        config = harness.ExperimentConfig.from_json_dict(json.load(fh))
    result = harness.run_matrix(config)
    paths = harness.emit_reports(result, args.out)
    print(json.dumps({"out": args.out, "U_ref": result.U_ref,
                      "files": [str(p) for p in paths]}))


# -- parser ------------------------------------------------------------------


def _add_estimator_args(p, surface=False):
    p.add_argument("--n", type=int, required=True, help="outer sample count")
    p.add_argument("--m", type=int, required=True, help="inner sample count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--surrogate", help="surrogate JSON file")
    p.add_argument("--oracle", action="store_true",
                   help="use the linear-Gaussian oracle model")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta-noise", dest="beta", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oedopt",
        description="Stochastic optimization of expected information gain")
    sub = parser.add_subparsers(dest="group", required=True)

    sg = sub.add_parser("surrogate").add_subparsers(dest="cmd", required=True)
    b = sg.add_parser("build")
    b.add_argument("--config", help="model config JSON")
    b.add_argument("--out", required=True)
    b.set_defaults(func=_cmd_surrogate_build)
    c = sg.add_parser("check")
    c.add_argument("--surrogate", required=True)
    c.add_argument("--config", help="model config JSON")
    c.add_argument("--samples", type=int, default=10_000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=_cmd_surrogate_check)

    eg = sub.add_parser("eig").add_subparsers(dest="cmd", required=True)
    e = eg.add_parser("eval")
    e.add_argument("--design", required=True, help="comma-separated design")
    _add_estimator_args(e)
    e.set_defaults(func=_cmd_eig_eval)
    s = eg.add_parser("surface")
    s.add_argument("--grid", type=int, required=True)
    s.add_argument("--out", default="eig_surface.csv")
    _add_estimator_args(s)
    s.set_defaults(func=_cmd_eig_surface)

    og = sub.add_parser("optimize").add_subparsers(dest="cmd", required=True)
    r = og.add_parser("rm")
    _add_estimator_args(r)
    r.add_argument("--beta", type=float, default=1.0, help="gain scale")
    r.add_argument("--max-iters", type=int, default=50)
    r.add_argument("--runs", type=int, default=1)
    r.add_argument("--requality-n", type=int, default=1001)
    r.add_argument("--requality-m", type=int, default=1001)
    r.add_argument("--out-prefix", default="rm_runs")
    r.set_defaults(func=_cmd_optimize, mode="rm")
    a = og.add_parser("saa")
    _add_estimator_args(a)
    a.add_argument("--n-prime", type=int, required=True)
    a.add_argument("--max-iters", type=int, default=100)
    a.add_argument("--runs", type=int, default=1)
    a.add_argument("--requality-n", type=int, default=1001)
    a.add_argument("--requality-m", type=int, default=1001)
    a.add_argument("--out-prefix", default="saa_runs")
    a.set_defaults(func=_cmd_optimize, mode="saa")

    mg = sub.add_parser("model").add_subparsers(dest="cmd", required=True)
    ms = mg.add_parser("solve")
    ms.add_argument("--src", required=True)
    ms.add_argument("--sensor", required=True)
    ms.add_argument("--config")
    ms.set_defaults(func=_cmd_model_solve)
    mf = mg.add_parser("field")
    mf.add_argument("--src", required=True)
    mf.add_argument("--time", type=float, required=True)
    mf.add_argument("--out", default="field.csv")
    mf.add_argument("--config")
    mf.set_defaults(func=_cmd_model_field)

    xg = sub.add_parser("experiment").add_subparsers(dest="cmd", required=True)
    xm = xg.add_parser("matrix")
    xm.add_argument("--config", required=True)
    xm.add_argument("--out", required=True)
    xm.set_defaults(func=_cmd_experiment_matrix)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``sfsod {fit,tune,simulate,bench,certify}``.

Exit codes: 0 success (a search stopped by a time or node limit still
counts, with a warning), 1 usage error, 2 data or configuration error,
3 internal error or failed bench cells.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from .bench import generate_scenario, jsonable, run_experiment
from .config import config_echo, plan_from, read_config, runner_from, scenarios_from
from .core import Dataset, SfsodProblem, Solution, standardize_robust
from .estimator import FitConfig, fit
from .exceptions import SfsodError
from .heuristics import EnsembleConfig
from .lpformat import export_lp
from .solver import SolverConfig, certify
from .tuning import light_fit_config, tune

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
MISSING = {"", "na", "nan", "null", "none", "?"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_csv(path, response, intercept=True) -> Dataset:
    """Load a numeric CSV with a header; every cell must be present."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file or missing header")
        header = [h.strip() for h in header]
        if response not in header:
            raise DataError(f"{path}: response column {response!r} not in header")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
            vals = []
            for name, cell in zip(header, row):
                c = cell.strip()
                if c.lower() in MISSING:
                    raise DataError(f"{path}:{line}: missing value in column {name!r}")
                try:
                    v = float(c)
                except ValueError:
                    raise DataError(f"{path}:{line}: cannot parse {c!r} in column {name!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{line}: non-finite value in column {name!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    A = np.array(rows)
    j = header.index(response)
    names = [h for k, h in enumerate(header) if k != j]
    if not names:
        raise DataError(f"{path}: no predictor columns")
    return Dataset.from_arrays(A[:, j], np.delete(A, j, axis=1), intercept=intercept, names=names)


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("SFSOD_THREADS")
    if env:
        try:
            t = int(env)
        except ValueError:
            raise UsageError(f"SFSOD_THREADS must be an integer, got {env!r}") from None
        if t < 1:
            raise UsageError("SFSOD_THREADS must be positive")
        return t
    return 1


def _fit_config(args) -> FitConfig:
    threads = _threads(args)
    solver = SolverConfig(gap_tol=args.gap_tol, time_limit=args.time_limit, node_limit=args.node_limit,
                          bound_mode=args.bound_mode, thread_count=threads, seed=args.seed)
    ens = EnsembleConfig(n_starts=args.starts, seed=args.seed, threads=threads)
    return FitConfig(solver=solver, ensemble=ens)


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n")


def _sidecar(path):
    root, _ = os.path.splitext(path)
    return root + ".timings.json"


def cmd_fit(args) -> int:
    data = read_csv(args.csv, args.response, intercept=not args.no_intercept)
    k_p = args.kp if args.kp is not None else min(5, data.p)
    k_n = args.kn if args.kn is not None else 0
    res = fit(data, k_p, k_n, args.lam, _fit_config(args))
    sol, prob = res.solution, res.problem
    if args.export_lp:
        export_lp(prob, args.export_lp, bound_mode=args.bound_mode if prob.has_bigM else "sos")
    names = list(data.names)
    doc = {
        "k_p": k_p, "k_n": k_n, "lambda": args.lam, "intercept": data.intercept,
        "bound_mode": args.bound_mode,
        "beta": {nm: float(b) for nm, b in zip(names, res.beta)},
        "offset": res.offset,
        "selected_features": [names[j] for j in sol.support_beta],
        "n_selected": int(sol.support_beta.size),
        "outliers": [int(i) + 1 for i in sol.support_phi],
        "n_outliers": int(sol.support_phi.size),
        "objective": sol.objective, "lower_bound": sol.lower_bound, "gap": sol.gap,
        "status": sol.status, "nodes_explored": sol.nodes_explored,
        "standardized": {
            **sol.to_dict(timing=False),
            "bigM_beta": prob.bigM_beta, "bigM_phi": prob.bigM_phi,
        },
    }
    timings = dict(res.timings)
    out = args.out or os.path.splitext(args.csv)[0] + ".fit.json"
    _write_json(out, doc)
    _write_json(_sidecar(out), timings)
    print(f"cases {data.n}  columns {data.p}  k_p {k_p}  k_n {k_n}")
    print(f"{'feature':<24}{'coefficient':>16}")
    for nm, b in zip(names, res.beta):
        if b != 0:
            print(f"{nm:<24}{b:>16.6g}")
    print(f"outliers (1-based): {doc['outliers']}")
    print(f"objective {sol.objective:.6g}  lower bound {sol.lower_bound:.6g}  gap {sol.gap:.3g}  "
          f"status {sol.status}  nodes {sol.nodes_explored}  time {timings['total']:.2f}s")
    print(f"wrote {out}")
    if sol.status in ("time_limit", "node_limit") and sol.gap > args.gap_tol:
        print(f"warning: search stopped at the {sol.status.replace('_', ' ')} with gap {sol.gap:.3g}",
              file=sys.stderr)
    return EXIT_OK


def cmd_certify(args) -> int:
    data = read_csv(args.csv, args.response, intercept=not args.no_intercept)
    with open(args.solution, encoding="utf-8") as fh:
        doc = json.load(fh)
    std = standardize_robust(data)
    s = doc["standardized"]
    lam = float(doc["lambda"])
    mb = np.array(s["bigM_beta"], dtype=float) if s.get("bigM_beta") is not None else None
    mp = np.array(s["bigM_phi"], dtype=float) if s.get("bigM_phi") is not None else None
    prob = SfsodProblem(std, int(doc["k_p"]), int(doc["k_n"]), lam, mb, mp)
    sol = Solution(np.array(s["beta"]), np.array(s["phi"]), np.array(s["z_beta"]), np.array(s["z_phi"]),
                   float(s["objective"]), float(s["lower_bound"]), float(s["gap"]))
    report = certify(prob, sol, bound_mode=doc.get("bound_mode"))
    for name, ok in report.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"objective recomputed {report.objective:.17g} reported {report.reported_objective:.17g}")
    return EXIT_OK if report.passed else EXIT_DATA


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_tune(args) -> int:
    data = read_csv(args.csv, args.response, intercept=not args.no_intercept)
    parser = read_config(args.config) if args.config else None
    threads = _threads(args)
    overrides = dict(method=args.method, folds=args.folds, seed=args.seed, kn_start=args.kn_start,
                     fit_config=light_fit_config(args.seed, threads))
    if args.kp_max is not None:
        overrides["kp_grid"] = tuple(range(1, args.kp_max + 1))
    if args.lam is not None:
        overrides["lambda_grid"] = (args.lam,)
    plan = plan_from(parser, **overrides)
    result = tune(data, plan)
    os.makedirs(args.out_dir, exist_ok=True)
    g = lambda v: format(float(v), ".17g")
    if plan.method == "bic":
        h = data.n - plan.kn_for(data.n)
        _write_rows(os.path.join(args.out_dir, "kp_trace.csv"), ["k_p", "h", "bic"],
                    [[k, h, g(v)] for k, v in result.kp_scores.items()])
    else:
        _write_rows(os.path.join(args.out_dir, "kp_trace.csv"), ["k_p", "cv_score"],
                    [[k, g(v)] for k, v in result.kp_scores.items()])
    tr = result.kn_trace
    _write_rows(os.path.join(args.out_dir, "kn_trace.csv"), ["k_n", "min_abs_deletion_residual", "threshold"],
                [[k, g(tr.statistic[k]), g(tr.threshold[k])] for k in tr.statistic])
    doc = {"k_p": result.k_p, "k_n": result.k_n, "lambda": result.lam, "method": result.method,
           "folds": plan.folds, "seed": plan.seed, "alpha": plan.alpha}
    _write_json(os.path.join(args.out_dir, "tuned.json"), doc)
    print(f"tuned k_p {result.k_p}  k_n {result.k_n}  lambda {result.lam}  ({result.method})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    parser = read_config(args.config)
    scenarios = scenarios_from(parser)
    os.makedirs(args.out_dir, exist_ok=True)
    for c, sc in enumerate(scenarios):
        for rep in range(sc.replications):
            train, truth, test = generate_scenario(sc, rep)
            stem = os.path.join(args.out_dir, f"cell{c}_rep{rep}")
            header = ["y"] + [f"x{j}" for j in range(1, sc.p)]
            for tag, d in (("train", train), ("test", test)):
                _write_rows(f"{stem}_{tag}.csv", header,
                            [[format(v, ".17g") for v in np.concatenate([[d.y[i]], d.X[i, 1:]])]
                             for i in range(d.n)])
            _write_json(f"{stem}_truth.json", {
                "scenario": asdict(sc), "replication": rep,
                "beta": truth.beta, "outliers": [int(i) + 1 for i in truth.outliers],
                "sigma2": truth.sigma2,
            })
    print(f"wrote {sum(s.replications for s in scenarios)} replications to {args.out_dir}")
    return EXIT_OK


def cmd_bench(args) -> int:
    parser = read_config(args.config)
    scenarios = scenarios_from(parser)
    explicit = args.threads is not None or os.environ.get("SFSOD_THREADS")
    runner = runner_from(parser, threads=_threads(args) if explicit else None)
    if args.replications is not None:
        scenarios = [replace(s, replications=args.replications) for s in scenarios]
    report = run_experiment(scenarios, runner=runner, out_dir=args.out_dir, resume=not args.no_resume,
                            config_echo=config_echo(parser))
    for cell in report.cells:
        m = cell["metrics"].get("rmspe", {})
        sc = cell["scenario"]
        print(f"n={sc['n']} p={sc['p']} {cell['method']:<24} RMSPE {m.get('mean', float('nan')):.4g}"
              f"  failures {cell['failures']}")
    print(f"wrote {report.paths.get('results')}")
    if report.failures:
        print(f"{report.failures} replication(s) failed; see the error column", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def _solver_flags(p):
    p.add_argument("--kp", type=int, help="feature budget, intercept included")
    p.add_argument("--kn", type=int, help="trimming budget")
    p.add_argument("--lambda", dest="lam", type=float, default=math.inf, help="ridge radius (default: none)")
    p.add_argument("--gap-tol", type=float, default=1e-6)
    p.add_argument("--time-limit", type=float, default=math.inf, help="seconds")
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--bound-mode", choices=("bigm", "sos"), default="bigm")
    p.add_argument("--starts", type=int, default=200, help="concentration-step random starts")
    p.add_argument("--export-lp", metavar="PATH", help="also write the problem in LP format")


def _data_flags(p):
    p.add_argument("csv")
    p.add_argument("--response", required=True)
    p.add_argument("--no-intercept", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sfsod", description="Sparse robust regression with certified optimality gaps.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="solve for given budgets")
    _data_flags(f)
    _solver_flags(f)
    f.add_argument("--out", help="solution JSON path (default: next to the CSV)")
    f.add_argument("--threads", type=int)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("certify", help="re-check a solution JSON against its CSV")
    _data_flags(c)
    c.add_argument("solution")
    c.set_defaults(func=cmd_certify)

    t = sub.add_parser("tune", help="choose k_p, k_n and the ridge radius")
    _data_flags(t)
    t.add_argument("--method", choices=("trimmed_cv", "bic"), default=None)
    t.add_argument("--folds", type=int)
    t.add_argument("--kn-start", type=int)
    t.add_argument("--kp-max", type=int)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--config", help="INI file with a [tuning] section")
    t.add_argument("--out-dir", default="tuning")
    t.add_argument("--threads", type=int)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_tune)

    s = sub.add_parser("simulate", help="write simulated datasets")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", default="simulated")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="run a simulation experiment")
    b.add_argument("--config", required=True)
    b.add_argument("--out-dir", default="bench")
    b.add_argument("--replications", type=int, help="override q for every scenario")
    b.add_argument("--no-resume", action="store_true")
    b.add_argument("--threads", type=int)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sfsod: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SfsodError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"sfsod: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything else is a bug
        print(f"sfsod: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

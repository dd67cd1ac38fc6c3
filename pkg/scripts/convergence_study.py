"""Convergence of DBL^n against LR^n on the bundled datasets.

Writes one trace CSV per (dataset, algo, C) and prints iterations to
reach within 1% of each run's final objective. ``--scipy`` repeats the
measurement with scipy's L-BFGS-B as an independent optimiser.
"""
from __future__ import annotations

import argparse
import json
import warnings
from pathlib import Path

from dbl.cli import iterations_to_within
from dbl.combinatorics import enumerate_subsets
from dbl.dataset import apply_discretization, fit_encoder
from dbl.datasets import available, load_bundled
from dbl.lbfgs import SolverConfig, write_trace_csv
from dbl.statistics import accumulate, map_estimates
from dbl.training import AlgoSpec, ObjectiveSpec, fit_model, init_dbl, init_lr


def scipy_iterations(d, n, C):
    from scipy.optimize import minimize

    tables = map_estimates(accumulate(d, enumerate_subsets(d.a, n)))
    out = {}
    for algo, x0 in (("dbl", init_dbl(tables.layout)), ("lr", init_lr(tables.layout))):
        spec = ObjectiveSpec(d, tables.layout, algo, tables, C=C)
        hist = [spec(x0)[0]]
        minimize(spec, x0, jac=True, method="L-BFGS-B", callback=lambda xk: hist.append(spec(xk)[0]),
                 options={"maxiter": 5000, "gtol": 1e-10, "ftol": 1e-16, "maxcor": 10})
        best = min(hist)
        out[algo] = next(i for i, v in enumerate(hist) if v - best <= 0.01 * abs(best))
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--datasets", nargs="*", default=["tic-tac-toe", "zoo", "heart-disease", "breast-cancer"])
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--C", type=float, nargs="*", default=[1e-2, 0.0])
    ap.add_argument("--out", default="convergence")
    ap.add_argument("--scipy", action="store_true")
    args = ap.parse_args()
    warnings.simplefilter("ignore")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    solver = SolverConfig(grad_tol=1e-9, rel_obj_tol=0.0, max_iter=5000)
    rows = []
    print(f"{'dataset':15s} {'C':>6s} {'dbl@1%':>7s} {'lr@1%':>7s} {'dbl it':>7s} {'lr it':>7s}")
    for name in args.datasets:
        if name not in available():
            raise SystemExit(f"unknown dataset {name}; bundled: {available()}")
        raw = load_bundled(name)
        d = apply_discretization(raw, fit_encoder(raw))
        for C in args.C:
            row = {"dataset": name, "C": C, "n": args.n}
            for algo in ("dbl", "lr"):
                res = fit_model(AlgoSpec(algo, n=args.n, C=C, solver=solver), d).result
                write_trace_csv(res.trace, out / f"{name}.{algo}{args.n}.C{C:g}.csv")
                row[algo] = {"to_1pct": iterations_to_within(res.trace, res.fun),
                             "iterations": res.iterations, "objective": res.fun}
            if args.scipy:
                row["scipy"] = scipy_iterations(d, args.n, C)
            rows.append(row)
            print(f"{name:15s} {C:6g} {row['dbl']['to_1pct']:7d} {row['lr']['to_1pct']:7d} "
                  f"{row['dbl']['iterations']:7d} {row['lr']['iterations']:7d}"
                  + (f"   scipy: dbl={row['scipy']['dbl']} lr={row['scipy']['lr']}" if args.scipy else ""))
    (out / "summary.json").write_text(json.dumps(rows, indent=1) + "\n")


if __name__ == "__main__":
    main()

"""``dbl`` command line: discretize, train, predict, cv, biasvar, signtest, trace.

Exit codes: 0 success, 1 runtime failure, 2 invalid usage or configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import (
    DatasetError,
    Schema,
    apply_discretization,
    encode_features,
    fit_encoder,
    fit_mdl_cuts,
    load_csv,
    load_schema,
    save_cuts,
)
from .evaluation import (
    CvPlan,
    bias_variance_from_result,
    cross_validate,
    experiment_record,
    load_results,
    wdl,
)
from .lbfgs import SolverConfig, write_trace_csv, write_trace_json
from .modelfile import ModelFileError, load_model, save_model
from .models import predict as argmax_class
from .training import ALGOS, AlgoSpec, FittedModel, fit_model

METRICS = ("zero_one", "rmse", "bias", "variance")


class UsageError(Exception):
    """Invalid configuration; reported with exit code 2."""


# ----------------------------------------------------------------------------
# argument parsing

def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get("DBL_THREADS", "1")))
    except ValueError:
        return 1


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--meta", help="JSON sidecar declaring attribute kinds and missing tokens")
    p.add_argument("--infer-schema", action="store_true",
                   help="infer attribute kinds instead of reading --meta (class is the last column)")


def _model_args(p: argparse.ArgumentParser, algo_default: str = "dbl") -> None:
    p.add_argument("--algo", choices=ALGOS, default=algo_default)
    p.add_argument("--n", type=int, default=2, help="subset size (nb forces 1)")
    p.add_argument("--max-n", type=int, default=3, help="largest n accepted")
    p.add_argument("--C", type=float, default=1e-2, dest="C", help="L2 regularisation strength")
    p.add_argument("--reg-center", type=float, default=None,
                   help="regularisation centre (default 1 for dbl, 0 for lr)")
    p.add_argument("--m", type=float, default=1.0, help="Dirichlet smoothing")
    p.add_argument("--max-iters", type=int, default=10000)
    p.add_argument("--grad-tol", type=float, default=1e-5)
    p.add_argument("--obj-tol", type=float, default=1e-9, help="relative objective-decrease tolerance")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default $DBL_THREADS or 1)")


def _cv_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--folds", type=int, default=2)
    p.add_argument("--global-discretization", action="store_true",
                   help="fit cut points once on all rows instead of per training fold")
    p.add_argument("--dataset-name", help="name recorded in the results (default: data file stem)")
    p.add_argument("--timing", action="store_true", help="include wall-clock timings in the output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dbl", description=__doc__.splitlines()[0])
    parser.add_argument("--json-errors", action="store_true", help="report errors as JSON lines on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discretize", help="fit MDL cut points and write them as JSON")
    _data_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit a model and write the model file")
    _data_args(p)
    _model_args(p)
    p.add_argument("--out", required=True, help="model file path")
    p.add_argument("--trace-out", help="convergence trace path (default: <out>.trace.csv)")
    p.add_argument("--no-trace", action="store_true")
    p.add_argument("--format", choices=("json", "csv"), default="csv", help="trace format")

    p = sub.add_parser("predict", help="score a CSV file with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="csv")

    for name, helptext in (("cv", "repeated k-fold cross-validation"),
                           ("biasvar", "bias-variance decomposition from repeated 2-fold CV")):
        p = sub.add_parser(name, help=helptext)
        _data_args(p)
        _model_args(p)
        _cv_args(p)
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("signtest", help="win-draw-loss and sign tests between two results files")
    p.add_argument("first", help="results JSON of the first learner")
    p.add_argument("second", help="results JSON of the second learner")
    p.add_argument("--out", help="output path (default stdout)")

    p = sub.add_parser("trace", help="train DBL^n and LR^n on the same data and compare convergence")
    _data_args(p)
    _model_args(p)
    p.add_argument("--out", required=True, help="output prefix; writes <out>.dbl.csv, <out>.lr.csv, <out>.json")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    return parser


# ----------------------------------------------------------------------------
# helpers

def _schema(args) -> Schema | None:
    if args.meta:
        if not Path(args.meta).exists():
            raise UsageError(f"sidecar file {args.meta} does not exist")
        return load_schema(args.meta)
    if args.infer_schema:
        return None
    raise UsageError("a JSON sidecar is required (--meta), or pass --infer-schema")


def _algo_spec(args) -> AlgoSpec:
    threads = args.threads if args.threads is not None else _threads_default()
    try:
        solver = SolverConfig(max_iter=args.max_iters, grad_tol=args.grad_tol, rel_obj_tol=args.obj_tol)
        return AlgoSpec(algo=args.algo, n=args.n, C=args.C, center=args.reg_center, m=args.m,
                        solver=solver, threads=threads, max_n=args.max_n)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _nll(fitted: FittedModel, data) -> float:
    logp = fitted.log_posterior(data.X)
    return float(-logp[np.arange(len(data)), data.y].sum())


# ----------------------------------------------------------------------------
# commands

def cmd_discretize(args) -> int:
    raw = load_csv(args.data, _schema(args))
    save_cuts(fit_mdl_cuts(raw), args.out)
    return 0


def cmd_train(args) -> int:
    spec = _algo_spec(args)
    raw = load_csv(args.data, _schema(args))
    enc = fit_encoder(raw)
    data = apply_discretization(raw, enc)
    fitted = fit_model(spec, data)
    save_model(args.out, fitted, enc, raw.meta, raw.class_meta.name)
    summary = {"algo": spec.algo, "n": fitted.model.layout.catalog.n if hasattr(fitted.model, "layout") else spec.n,
               "train_nll": _nll(fitted, data), "model": str(args.out), "warnings": fitted.warnings}
    if fitted.result is not None:
        res = fitted.result
        summary.update(objective=res.fun, iterations=res.iterations, reason=res.reason)
        if not args.no_trace:
            path = args.trace_out or f"{args.out}.trace.{args.format}"
            (write_trace_json if args.format == "json" else write_trace_csv)(res.trace, path)
            summary["trace"] = path
    print(json.dumps(summary))
    for w in fitted.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    fitted, enc, meta = load_model(args.model)
    schema = Schema(attributes=tuple(meta), class_name=_class_name(args.model))
    raw = load_csv(args.data, schema, allow_empty=True, require_class=False)
    labels = enc.class_labels
    if len(raw):
        X, _ = encode_features(raw, enc)
        logp = fitted.log_posterior(X)
        pred = argmax_class(logp)
    else:
        logp, pred = np.zeros((0, len(labels))), np.zeros(0, dtype=np.int64)
    probs = np.exp(logp)
    if args.format == "json":
        rows = [{"predicted": labels[int(k)], "actual": raw.labels[i] or None,
                 "posterior": {lab: float(p) for lab, p in zip(labels, probs[i])}}
                for i, k in enumerate(pred)]
        _emit(json.dumps(rows, indent=1) + "\n", args.out)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["predicted", "actual"] + [f"P({lab})" for lab in labels])
        for i, k in enumerate(pred):
            w.writerow([labels[int(k)], raw.labels[i]] + [format(p, ".17g") for p in probs[i]])
        _emit(buf.getvalue(), args.out)
    return 0


def _class_name(model_path) -> str:
    return json.loads(Path(model_path).read_text()).get("class_name", "class")


def _run_cv(args):
    spec = _algo_spec(args)
    raw = load_csv(args.data, _schema(args))
    try:
        plan = CvPlan(rounds=args.rounds, folds=args.folds, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = cross_validate(raw, spec, plan, global_discretization=args.global_discretization)
    record = experiment_record(args.dataset_name or Path(args.data).stem, spec, plan, result)
    if not args.timing:
        record.pop("timing")
    return record


def _write_record(record: dict, fields, args) -> None:
    if args.format == "json":
        _emit(json.dumps(record, indent=1) + "\n", args.out)
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "algo", "n", "C", "seed"] + list(fields))
    w.writerow([record["dataset"], record["algo"], record["n"], record["C"], record["seed"]]
               + [repr(record["metrics"][f]) for f in fields])
    _emit(buf.getvalue(), args.out)


def cmd_cv(args) -> int:
    _write_record(_run_cv(args), METRICS, args)
    return 0


def cmd_biasvar(args) -> int:
    if args.rounds < 2:
        raise UsageError("bias-variance needs --rounds >= 2")
    args.folds = 2
    record = _run_cv(args)
    _write_record(record, ("bias", "variance", "zero_one"), args)
    return 0


def cmd_signtest(args) -> int:
    a, b = load_results(args.first), load_results(args.second)
    if set(a) != set(b):
        raise UsageError(f"results files cover different datasets: {sorted(set(a) ^ set(b))}")
    report = {"first": args.first, "second": args.second, "datasets": sorted(a), "draw_tolerance": 1e-10,
              "metrics": {}, "warnings": []}
    for metric in METRICS:
        va = {k: r["metrics"].get(metric) for k, r in a.items()}
        vb = {k: r["metrics"].get(metric) for k, r in b.items()}
        if any(v is None or v != v for v in list(va.values()) + list(vb.values())):
            continue
        summary = wdl(va, vb)
        report["metrics"][metric] = summary.to_json()
        report["warnings"] += [f"{metric}: {w}" for w in summary.warnings]
    _emit(json.dumps(report, indent=1) + "\n", args.out)
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def iterations_to_within(trace, target: float, rel: float = 0.01) -> int | None:
    """First iteration whose objective is within ``rel`` (relative) of ``target``."""
    for r in trace:
        if r.objective - target <= rel * abs(target):
            return r.iteration
    return None


def cmd_trace(args) -> int:
    base = _algo_spec(args)
    raw = load_csv(args.data, _schema(args))
    enc = fit_encoder(raw)
    data = apply_discretization(raw, enc)
    out = {}
    for algo in ("dbl", "lr"):
        spec = AlgoSpec(algo=algo, n=base.n, C=base.C, center=args.reg_center, m=base.m,
                        solver=base.solver, threads=base.threads, max_n=base.max_n)
        fitted = fit_model(spec, data)
        res = fitted.result
        path = f"{args.out}.{algo}.{args.format}"
        (write_trace_json if args.format == "json" else write_trace_csv)(res.trace, path)
        out[algo] = {"trace": path, "iterations": res.iterations, "objective": res.fun, "reason": res.reason,
                     "train_nll": _nll(fitted, data), "_trace": res.trace}
    for algo in out:
        out[algo]["iterations_to_1pct"] = iterations_to_within(out[algo]["_trace"], out[algo]["objective"])
        del out[algo]["_trace"]
    summary = {"n": base.n, "C": base.C, **out}
    Path(f"{args.out}.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(json.dumps(summary))
    return 0


COMMANDS = {
    "discretize": cmd_discretize,
    "train": cmd_train,
    "predict": cmd_predict,
    "cv": cmd_cv,
    "biasvar": cmd_biasvar,
    "signtest": cmd_signtest,
    "trace": cmd_trace,
}


def _report(args_json: bool, kind: str, exc: BaseException) -> None:
    if args_json:
        print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    else:
        print(f"dbl: error: {exc}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DatasetError, ModelFileError) as exc:
        _report(args.json_errors, "usage", exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        _report(args.json_errors, "runtime", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Repeated k-fold cross-validation, loss metrics, bias-variance and sign tests."""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import DiscretizedDataset, RawDataset, apply_discretization, fit_encoder
from .models import predict
from .training import AlgoSpec, fit_model

RMSE_CONVENTION = "sqrt(mean over test predictions of mean over classes of (P(c|x) - 1[c=y])^2)"
BIAS_VARIANCE_ESTIMATOR = (
    "Kohavi-Wolpert 0-1 decomposition over the per-round test predictions of the CV plan "
    "(bias = 1/2 sum_c (1[c=y] - p_c)^2, variance = 1/2 (1 - sum_c p_c^2))"
)
DRAW_TOLERANCE = 1e-10
GEOMEAN_FLOOR = 1e-10

Learner = Callable[[DiscretizedDataset], object]


@dataclass(frozen=True)
class CvPlan:
    rounds: int = 5
    folds: int = 2
    seed: int = 1

    def __post_init__(self):
        if self.rounds < 1 or self.folds < 2:
            raise ValueError("need rounds >= 1 and folds >= 2")

    def assignments(self, keys: Sequence) -> list[np.ndarray]:
        """Fold id of every instance, one array per round.

        Instances are first put in a canonical order (sorted by ``keys``) so
        the assignment does not depend on the order rows arrive in.
        """
        N = len(keys)
        canonical = sorted(range(N), key=lambda i: keys[i])
        rng = np.random.default_rng(self.seed)
        out = []
        for _ in range(self.rounds):
            perm = np.asarray(canonical, dtype=np.int64)[rng.permutation(N)]
            fold = np.empty(N, dtype=np.int64)
            for f, part in enumerate(np.array_split(perm, self.folds)):
                fold[part] = f
            out.append(fold)
        return out


@dataclass
class RunRecord:
    round: int
    fold: int
    test_index: np.ndarray
    y_true: np.ndarray
    log_posteriors: np.ndarray
    train_seconds: float
    classify_seconds: float
    iterations: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def predictions(self) -> np.ndarray:
        return predict(self.log_posteriors) if len(self.y_true) else np.zeros(0, dtype=np.int64)


@dataclass
class EvalResult:
    runs: list[RunRecord]
    n_instances: int
    class_count: int
    warnings: list[str] = field(default_factory=list)

    @property
    def train_seconds(self) -> float:
        return sum(r.train_seconds for r in self.runs)

    @property
    def classify_seconds(self) -> float:
        return sum(r.classify_seconds for r in self.runs)

    def metrics(self) -> dict[str, float]:
        bias, variance = bias_variance_from_result(self)
        return {"zero_one": zero_one_loss(self), "rmse": rmse(self), "bias": bias, "variance": variance}


def _keys(data) -> list:
    if isinstance(data, RawDataset):
        return [(tuple("" if c is None else repr(c) for c in row), lab) for row, lab in zip(data.rows, data.labels)]
    return [tuple(int(v) for v in x) + (int(c),) for x, c in zip(data.X, data.y)]


def _as_learner(algo: AlgoSpec | Learner) -> Learner:
    if isinstance(algo, AlgoSpec):
        return lambda train: fit_model(algo, train)
    return algo


def cross_validate(
    data: RawDataset | DiscretizedDataset,
    algo: AlgoSpec | Learner,
    plan: CvPlan = CvPlan(),
    *,
    global_discretization: bool = False,
) -> EvalResult:
    """Each round shuffles with the plan's seed, splits into folds, and tests every fold once.

    With a :class:`RawDataset` the encoder (MDL cuts and category maps) is
    refit on each training fold unless ``global_discretization`` is set.
    ``algo`` is either an :class:`AlgoSpec` or a callable that fits a model
    exposing ``log_posterior``.
    """
    N = len(data)
    if N == 0:
        raise ValueError("cannot cross-validate an empty dataset")
    learner = _as_learner(algo)
    raw = data if isinstance(data, RawDataset) else None
    global_enc = fit_encoder(raw) if raw is not None and global_discretization else None
    class_count = len(raw.class_meta.categories) if raw is not None else data.class_count
    runs: list[RunRecord] = []
    notes: list[str] = []
    for r, fold in enumerate(plan.assignments(_keys(data))):
        for f in range(plan.folds):
            test = np.flatnonzero(fold == f)
            train = np.flatnonzero(fold != f)
            if raw is not None:
                enc = global_enc or fit_encoder(raw, train)
                tr = apply_discretization(raw, enc, train)
                te = apply_discretization(raw, enc, test)
            else:
                tr, te = data.take(train), data.take(test)
            run_notes = []
            absent = sorted(set(range(class_count)) - set(tr.y.tolist()))
            if absent:
                run_notes.append(f"round {r} fold {f}: classes {absent} absent from training fold")
            t0 = time.perf_counter()
            model = learner(tr)
            t1 = time.perf_counter()
            logp = model.log_posterior(te.X) if len(te) else np.zeros((0, class_count))
            t2 = time.perf_counter()
            run_notes += [f"round {r} fold {f}: {w}" for w in getattr(model, "warnings", [])
                          if "absent" not in w]
            result = getattr(model, "result", None)
            runs.append(RunRecord(
                round=r, fold=f, test_index=test, y_true=te.y, log_posteriors=np.asarray(logp),
                train_seconds=t1 - t0, classify_seconds=t2 - t1,
                iterations=result.iterations if result is not None else 0, warnings=run_notes,
            ))
            notes += run_notes
    for w in notes:
        warnings.warn(w, RuntimeWarning, stacklevel=2)
    return EvalResult(runs=runs, n_instances=N, class_count=class_count, warnings=notes)


# ----------------------------------------------------------------------------
# metrics

def _pairs(results) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(results, EvalResult):
        y = np.concatenate([r.y_true for r in results.runs])
        lp = np.concatenate([r.log_posteriors for r in results.runs])
        return y, lp
    y, lp = results
    return np.asarray(y), np.asarray(lp)


def zero_one_loss(results) -> float:
    """Fraction of test predictions that miss the true class.

    ``results`` is an :class:`EvalResult` or a ``(y_true, predictions)`` pair.
    """
    if isinstance(results, EvalResult):
        y = np.concatenate([r.y_true for r in results.runs])
        pred = np.concatenate([r.predictions for r in results.runs])
    else:
        y, pred = (np.asarray(v) for v in results)
    if len(y) == 0:
        raise ValueError("no predictions to score")
    return float(np.mean(pred != y))


def rmse(results) -> float:
    """Root of the class-averaged squared error between posteriors and one-hot truth.

    ``results`` is an :class:`EvalResult` or a ``(y_true, log_posteriors)`` pair.
    """
    y, lp = _pairs(results)
    if len(y) == 0:
        raise ValueError("no posteriors to score")
    P = np.exp(lp)
    onehot = np.zeros_like(P)
    onehot[np.arange(len(y)), y] = 1.0
    return float(np.sqrt(np.mean((P - onehot) ** 2)))


def kohavi_wolpert(y_true: np.ndarray, predictions: np.ndarray, class_count: int) -> tuple[float, float]:
    """Bias and variance from repeated predictions.

    ``predictions`` has shape ``(rounds, N)``. Bias plus variance equals the
    mean 0-1 loss over all ``rounds × N`` predictions.
    """
    predictions = np.asarray(predictions)
    R, N = predictions.shape
    freq = np.zeros((N, class_count))
    for r in range(R):
        freq[np.arange(N), predictions[r]] += 1.0
    freq /= R
    onehot = np.zeros_like(freq)
    onehot[np.arange(N), y_true] = 1.0
    bias = 0.5 * ((onehot - freq) ** 2).sum(axis=1)
    variance = 0.5 * (1.0 - (freq ** 2).sum(axis=1))
    return float(bias.mean()), float(variance.mean())


def bias_variance_from_result(result: EvalResult) -> tuple[float, float]:
    rounds = sorted({r.round for r in result.runs})
    if len(rounds) < 2:
        return math.nan, math.nan
    N = result.n_instances
    preds = np.full((len(rounds), N), -1, dtype=np.int64)
    y = np.full(N, -1, dtype=np.int64)
    for run in result.runs:
        preds[rounds.index(run.round), run.test_index] = run.predictions
        y[run.test_index] = run.y_true
    if (preds < 0).any():
        raise ValueError("some instance was never tested in some round")
    return kohavi_wolpert(y, preds, result.class_count)


def bias_variance(data, algo: AlgoSpec | Learner, rounds: int = 5, seed: int = 1) -> tuple[float, float]:
    if rounds < 2:
        raise ValueError("bias-variance estimation needs at least 2 rounds")
    return bias_variance_from_result(cross_validate(data, algo, CvPlan(rounds=rounds, folds=2, seed=seed)))


# ----------------------------------------------------------------------------
# comparing learners across datasets

@dataclass(frozen=True)
class WdlSummary:
    wins: int
    draws: int
    losses: int
    p_value: float
    warnings: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"wins": self.wins, "draws": self.draws, "losses": self.losses,
                "p": self.p_value, "warnings": list(self.warnings)}


def sign_test(wins: int, losses: int) -> float:
    """Two-tailed exact binomial sign test with draws already discarded, clipped to 1."""
    n = wins + losses
    if n <= 0:
        raise ValueError("sign test needs at least one win or loss")
    k = max(wins, losses)
    tail = sum(math.comb(n, i) for i in range(k, n + 1)) / 2**n
    return min(1.0, 2.0 * tail)


def wdl(a: Mapping[str, float], b: Mapping[str, float], *, lower_is_better: bool = True) -> WdlSummary:
    """Win-draw-loss of ``a`` against ``b`` over the datasets both are keyed by."""
    if set(a) != set(b):
        raise ValueError(f"dataset sets differ: only in first {sorted(set(a) - set(b))}, "
                         f"only in second {sorted(set(b) - set(a))}")
    w = d = l = 0
    for key in sorted(a):
        diff = a[key] - b[key]
        if abs(diff) < DRAW_TOLERANCE:
            d += 1
        elif (diff < 0) == lower_is_better:
            w += 1
        else:
            l += 1
    if w + l == 0:
        return WdlSummary(w, d, l, 1.0, ("all comparisons are draws; p reported as 1.0",))
    return WdlSummary(w, d, l, sign_test(w, l))


def normalized_summary(
    table: Mapping[str, Mapping[str, Mapping[str, float]]], reference: str
) -> dict[str, dict[str, float]]:
    """Geometric mean across datasets of each metric divided by the reference learner's.

    ``table[dataset][algo][metric]``. Zero values are floored at 1e-10.
    """
    algos = None
    for ds, row in table.items():
        if algos is None:
            algos = set(row)
        if set(row) != algos:
            raise ValueError(f"dataset {ds!r} does not have results for every algorithm")
        if reference not in row:
            raise ValueError(f"reference {reference!r} missing for dataset {ds!r}")
    if not table:
        return {}
    out: dict[str, dict[str, float]] = {}
    for algo in sorted(algos):
        metrics = set.intersection(*(set(table[ds][algo]) for ds in table))
        out[algo] = {}
        for metric in sorted(metrics):
            logs = []
            for ds in table:
                num, den = table[ds][algo][metric], table[ds][reference][metric]
                if num <= 0 or den <= 0:
                    warnings.warn(f"{ds}/{algo}/{metric}: zero value floored at {GEOMEAN_FLOOR}", RuntimeWarning,
                                  stacklevel=2)
                logs.append(math.log(max(num, GEOMEAN_FLOOR)) - math.log(max(den, GEOMEAN_FLOOR)))
            out[algo][metric] = math.exp(sum(logs) / len(logs))
    return out


# ----------------------------------------------------------------------------
# result files

def experiment_record(dataset: str, spec: AlgoSpec, plan: CvPlan, result: EvalResult) -> dict:
    return {
        "dataset": dataset,
        "algo": spec.algo,
        "label": spec.label,
        "n": spec.n,
        "C": spec.C if spec.algo in ("dbl", "lr") else None,
        "reg_center": spec.reg_center if spec.algo in ("dbl", "lr") else None,
        "m": spec.m,
        "seed": plan.seed,
        "rounds": plan.rounds,
        "folds": plan.folds,
        "metrics": result.metrics(),
        "timing": {"train_seconds": result.train_seconds, "classify_seconds": result.classify_seconds},
        "iterations": [r.iterations for r in result.runs],
        "warnings": list(result.warnings),
        "metadata": {"rmse": RMSE_CONVENTION, "bias_variance": BIAS_VARIANCE_ESTIMATOR},
    }


def load_results(path: str | Path) -> dict[str, dict]:
    """Experiment records keyed by dataset; a file holds one record or a list of them."""
    data = json.loads(Path(path).read_text())
    records = data if isinstance(data, list) else [data]
    out = {}
    for rec in records:
        if rec["dataset"] in out:
            raise ValueError(f"{path}: dataset {rec['dataset']!r} appears more than once")
        out[rec["dataset"]] = rec
    return out

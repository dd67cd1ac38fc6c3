"""Regularised negative conditional log-likelihood for DBL^n and LR^n, and model fitting.

Both objectives are plain sums over instances plus ``(C/2)·||θ - center||²``.
The DBL^n objective is the LR^n objective evaluated at ``β = w ⊙ L`` (``L``
the MAP log-probabilities), so its data gradient is the LR^n data gradient
rescaled element-wise by ``L``.
"""
from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .combinatorics import ParameterLayout, anje_exponent, build_layout, enumerate_subsets
from .dataset import DiscretizedDataset
from .lbfgs import OptimizeResult, SolverConfig, TraceRecord, minimize
from .models import AndeModel, AnjeModel, DblModel, Design, LrModel, design, linear_scores
from .statistics import ProbabilityTables, accumulate, map_estimates

ALGOS = ("anje", "ande", "dbl", "lr", "nb")
DEFAULT_C = 1e-2
DEFAULT_CENTER = {"dbl": 1.0, "lr": 0.0}


@dataclass
class ObjectiveSpec:
    data: DiscretizedDataset
    layout: ParameterLayout
    parameterization: str  # "dbl" | "lr"
    tables: ProbabilityTables | None = None
    C: float = DEFAULT_C
    center: float | np.ndarray | None = None
    threads: int = 1
    shards: int | None = None

    def __post_init__(self):
        if self.parameterization not in ("dbl", "lr"):
            raise ValueError(f"unknown parameterization {self.parameterization!r}")
        if self.C < 0:
            raise ValueError("regularisation strength C must be >= 0")
        if self.parameterization == "dbl" and self.tables is None:
            raise ValueError("the DBL objective needs probability tables")
        if self.tables is not None and self.tables.layout.total_len != self.layout.total_len:
            raise ValueError("tables do not match the layout")
        if self.data.a != self.layout.catalog.a:
            raise ValueError("data and layout disagree on the attribute count")
        if self.center is None:
            self.center = DEFAULT_CENTER[self.parameterization]

    @cached_property
    def design(self) -> Design:
        return design(self.layout, self.data.X)

    def __call__(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        if self.parameterization == "dbl":
            return nll_grad_dbl(self, params)
        return nll_grad_lr(self, params)


def _data_term(layout: ParameterLayout, beta: np.ndarray, d: Design, y: np.ndarray) -> tuple[float, np.ndarray]:
    """NLL and its gradient with respect to ``β`` for one shard of instances."""
    C, stride = layout.class_count, layout.stride
    grad = np.zeros(layout.total_len)
    if len(y) == 0:
        return 0.0, grad
    scores = linear_scores(layout, beta, d)
    lse = logsumexp(scores, axis=1)
    nll = float(np.sum(lse - scores[np.arange(len(y)), y]))
    resid = np.exp(scores - lse[:, None])  # P(c|x) - 1{c=y}
    resid[np.arange(len(y)), y] -= 1.0
    grad[:C] = resid.sum(axis=0)
    idx = d.base[d.valid] if not d.all_valid else d.base.ravel()
    J = d.base.shape[1]
    for c in range(C):
        w = np.repeat(resid[:, c], J).reshape(-1, J)
        w = w[d.valid] if not d.all_valid else w.ravel()
        grad[C + c * stride: C + (c + 1) * stride] = np.bincount(idx, weights=w, minlength=stride)
    return nll, grad


def _pairwise_sum(parts: list[tuple[float, np.ndarray]]) -> tuple[float, np.ndarray]:
    while len(parts) > 1:
        nxt = [(parts[i][0] + parts[i + 1][0], parts[i][1] + parts[i + 1][1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _lr_data_term(spec: ObjectiveSpec, beta: np.ndarray) -> tuple[float, np.ndarray]:
    shards = spec.shards or spec.threads
    if shards <= 1:
        return _data_term(spec.layout, beta, spec.design, spec.data.y)
    bounds = np.array_split(np.arange(len(spec.data)), shards)
    d = spec.design

    def run(b):
        sub = Design(base=d.base[b], valid=d.valid[b])
        return _data_term(spec.layout, beta, sub, spec.data.y[b])

    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    return _pairwise_sum(parts)


def _check_finite(value: float, grad: np.ndarray, params: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(params))
    where = "parameter" if bad.size else "gradient"
    if not bad.size:
        bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise FloatingPointError(f"non-finite {where} at parameter index {int(bad[0])}")
    if not math.isfinite(value):
        raise FloatingPointError("objective is not finite")


def nll_grad_lr(spec: ObjectiveSpec, beta: np.ndarray) -> tuple[float, np.ndarray]:
    beta = np.asarray(beta, dtype=float)
    nll, grad = _lr_data_term(spec, beta)
    if spec.C:
        diff = beta - spec.center
        nll += 0.5 * spec.C * float(diff.dot(diff))
        grad = grad + spec.C * diff
    _check_finite(nll, grad, beta)
    return nll, grad


def nll_grad_dbl(spec: ObjectiveSpec, w: np.ndarray) -> tuple[float, np.ndarray]:
    w = np.asarray(w, dtype=float)
    L = spec.tables.log_probs
    nll, grad_beta = _lr_data_term(spec, w * L)
    grad = grad_beta * L
    if spec.C:
        diff = w - spec.center
        nll += 0.5 * spec.C * float(diff.dot(diff))
        grad = grad + spec.C * diff
    _check_finite(nll, grad, w)
    return nll, grad


def init_dbl(layout: ParameterLayout, a: int | None = None, n: int | None = None) -> np.ndarray:
    """Weights that reproduce AnJE exactly: 1 on class slots, the AnJE exponent elsewhere."""
    a = layout.catalog.a if a is None else a
    n = layout.catalog.n if n is None else n
    w = np.full(layout.total_len, anje_exponent(a, n))
    w[: layout.class_count] = 1.0
    return w


def init_lr(layout: ParameterLayout) -> np.ndarray:
    return np.zeros(layout.total_len)


def optimize(spec: ObjectiveSpec, init: np.ndarray, cfg: SolverConfig = SolverConfig()) -> OptimizeResult:
    return minimize(spec, init, cfg)


# ----------------------------------------------------------------------------
# fitting any of the supported learners

@dataclass(frozen=True)
class AlgoSpec:
    algo: str = "dbl"
    n: int = 2
    C: float = DEFAULT_C
    center: float | None = None
    m: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    threads: int = 1
    max_n: int = 3

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algorithm {self.algo!r}; choose from {ALGOS}")
        if self.algo == "nb" and self.n != 1:
            object.__setattr__(self, "n", 1)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.n > self.max_n:
            raise ValueError(f"n={self.n} exceeds the limit of {self.max_n}; raise max_n to allow it")
        if self.algo == "ande" and self.n < 2:
            raise ValueError("ande needs n >= 2 (it is the A(n-1)DE built on n-ary statistics)")
        if self.C < 0 or self.m <= 0:
            raise ValueError("need C >= 0 and m > 0")

    @property
    def label(self) -> str:
        return {"anje": f"A{self.n}JE", "nb": "NB", "ande": f"A{self.n - 1}DE",
                "dbl": f"DBL{self.n}", "lr": f"LR{self.n}"}[self.algo]

    @property
    def reg_center(self) -> float:
        return DEFAULT_CENTER.get(self.algo, 0.0) if self.center is None else self.center


@dataclass
class FittedModel:
    spec: AlgoSpec
    model: AnjeModel | AndeModel | DblModel | LrModel
    result: OptimizeResult | None = None
    train_seconds: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def log_posterior(self, X) -> np.ndarray:
        return self.model.log_posterior(X)

    @property
    def trace(self) -> list[TraceRecord]:
        return self.result.trace if self.result is not None else []


def fit_model(spec: AlgoSpec, data: DiscretizedDataset) -> FittedModel:
    """Count, estimate and (for dbl/lr) optimise on ``data``."""
    start = time.perf_counter()
    notes: list[str] = []
    if len(data) == 0:
        raise ValueError("cannot fit a model on an empty training set")
    absent = [c for c in range(data.class_count) if not (data.y == c).any()]
    if absent:
        notes.append(f"classes {absent} absent from the training data; smoothing supplies their estimates")
    n = min(spec.n, data.a) if spec.algo != "ande" else spec.n

    if spec.algo == "ande":
        if data.a >= n:
            counts = accumulate(data, enumerate_subsets(data.a, n), threads=spec.threads)
            model = AndeModel.from_counts(counts, spec.m)
        else:
            parent = accumulate(data, enumerate_subsets(data.a, data.a))
            model = AndeModel.from_parent_counts(parent, spec.m)
        return FittedModel(spec, model, train_seconds=time.perf_counter() - start, warnings=notes)

    if n != spec.n:
        notes.append(f"n={spec.n} exceeds the attribute count; using n={n}")
    counts = accumulate(data, enumerate_subsets(data.a, n))
    tables = map_estimates(counts, spec.m)
    result = None
    if spec.algo in ("anje", "nb"):
        model = AnjeModel(tables)
    else:
        obj = ObjectiveSpec(
            data=data, layout=tables.layout, parameterization=spec.algo, tables=tables,
            C=spec.C, center=spec.reg_center, threads=spec.threads,
        )
        init = init_dbl(tables.layout) if spec.algo == "dbl" else init_lr(tables.layout)
        result = optimize(obj, init, spec.solver)
        if result.reason == "line_search_failed":
            msg = f"optimizer stopped early ({result.message}); keeping the best parameters found"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        model = DblModel(tables, result.x) if spec.algo == "dbl" else LrModel(tables.layout, result.x)
    return FittedModel(spec, model, result=result, train_seconds=time.perf_counter() - start, warnings=notes)


def layout_for(data: DiscretizedDataset, n: int) -> ParameterLayout:
    return build_layout(enumerate_subsets(data.a, n), data.cardinalities, data.class_count)

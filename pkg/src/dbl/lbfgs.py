"""Limited-memory BFGS with a strong-Wolfe line search and a per-iteration trace."""
from __future__ import annotations

import csv
import json
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

ValueGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class SolverConfig:
    history: int = 10
    max_iter: int = 10000
    grad_tol: float = 1e-5  # stop when ||g||_inf <= grad_tol * max(1, |f|)
    rel_obj_tol: float = 1e-9
    c1: float = 1e-4
    c2: float = 0.9
    max_line_evals: int = 40

    def __post_init__(self):
        if self.history < 1 or self.max_iter < 0:
            raise ValueError("history must be >= 1 and max_iter >= 0")
        if min(self.grad_tol, self.rel_obj_tol) < 0 or not 0 < self.c1 < self.c2 < 1:
            raise ValueError("tolerances must be non-negative and 0 < c1 < c2 < 1")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    grad_inf_norm: float
    seconds: float


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    trace: list[TraceRecord]
    reason: str
    evaluations: int
    message: str = ""
    warnings: list[str] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.trace[-1].iteration if self.trace else 0

    @property
    def converged(self) -> bool:
        return self.reason in ("gradient_tolerance", "objective_tolerance")


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolating (a, fa, ga) and (b, fb, gb), or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = math.copysign(math.sqrt(rad), b - a)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def strong_wolfe(phi, f0: float, g0: float, alpha0: float, c1: float, c2: float, max_evals: int):
    """Step length satisfying the strong Wolfe conditions along a descent direction.

    ``phi(alpha)`` returns ``(f, slope, payload)``. Bracketing followed by
    cubic-interpolation zoom.
    """
    if g0 >= 0:
        raise LineSearchError("not a descent direction")
    a_prev, f_prev, g_prev = 0.0, f0, g0
    alpha = alpha0

    def zoom(lo, flo, glo, plo, hi, fhi, ghi):
        for _ in range(max_evals):
            lo_, hi_ = min(lo, hi), max(lo, hi)
            a = _cubic_min(lo, flo, glo, hi, fhi, ghi)
            width = hi_ - lo_
            if a is None or not (lo_ + 0.1 * width <= a <= hi_ - 0.1 * width):
                a = 0.5 * (lo + hi)
            f, g, p = phi(a)
            if not math.isfinite(f) or f > f0 + c1 * a * g0 or f >= flo:
                hi, fhi, ghi = a, f, g
            else:
                if abs(g) <= -c2 * g0:
                    return a, f, p
                if g * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo, plo = a, f, g, p
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        if plo is not None and flo < f0:
            return lo, flo, plo
        raise LineSearchError("zoom failed to satisfy the Wolfe conditions")

    p_prev = None
    for i in range(max_evals):
        f, g, p = phi(alpha)
        if not math.isfinite(f):
            # step overshot into overflow; shrink and retry
            alpha = 0.5 * (a_prev + alpha)
            continue
        if f > f0 + c1 * alpha * g0 or (i > 0 and f >= f_prev):
            return zoom(a_prev, f_prev, g_prev, p_prev, alpha, f, g)
        if abs(g) <= -c2 * g0:
            return alpha, f, p
        if g >= 0:
            return zoom(alpha, f, g, p, a_prev, f_prev, g_prev)
        a_prev, f_prev, g_prev, p_prev = alpha, f, g, p
        alpha = 2.0 * alpha
    raise LineSearchError("bracketing phase exceeded its evaluation budget")


def _two_loop(g: np.ndarray, pairs: deque) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= s.dot(y) / y.dot(y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def minimize(fun: ValueGrad, x0: np.ndarray, cfg: SolverConfig = SolverConfig()) -> OptimizeResult:
    """Minimise ``fun`` (returning value and gradient) from ``x0``.

    Terminates on the gradient tolerance, on a relative objective decrease
    below ``rel_obj_tol``, after ``max_iter`` iterations, or when the line
    search fails (returning the best point found).
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("initial point is not finite")
    f, g = fun(x)
    evals = 1
    if not math.isfinite(f):
        raise FloatingPointError("objective is not finite at the initial point")
    trace = [TraceRecord(0, float(f), float(np.abs(g).max(initial=0.0)), time.perf_counter() - start)]
    pairs: deque = deque(maxlen=cfg.history)
    reason, message = "max_iterations", ""

    k = 0
    while True:
        if np.abs(g).max(initial=0.0) <= cfg.grad_tol * max(1.0, abs(f)):
            reason = "gradient_tolerance"
            break
        if k >= cfg.max_iter:
            break
        d = _two_loop(g, pairs)
        slope = float(g.dot(d))
        if not slope < 0:
            pairs.clear()
            d = -g
            slope = float(g.dot(d))
        alpha0 = 1.0 if pairs else min(1.0, 1.0 / max(np.abs(g).sum(), 1e-300))

        def phi(alpha, x=x, d=d):
            xn = x + alpha * d
            fn, gn = fun(xn)
            return fn, float(gn.dot(d)) if math.isfinite(fn) else math.nan, (xn, gn)

        counter = _Counter(phi)
        try:
            alpha, f_new, (x_new, g_new) = strong_wolfe(
                counter, f, slope, alpha0, cfg.c1, cfg.c2, cfg.max_line_evals
            )
        except LineSearchError as exc:
            evals += counter.calls
            if pairs:
                # retry once along steepest descent with fresh memory
                pairs.clear()
                continue
            reason, message = "line_search_failed", str(exc)
            break
        evals += counter.calls
        s = x_new - x
        yv = g_new - g
        sy = float(s.dot(yv))
        if sy > 1e-12 * float(yv.dot(yv)):
            pairs.append((s, yv, 1.0 / sy))
        f_old = f
        x, f, g = x_new, float(f_new), g_new
        k += 1
        trace.append(TraceRecord(k, f, float(np.abs(g).max(initial=0.0)), time.perf_counter() - start))
        if f_old - f <= cfg.rel_obj_tol * max(abs(f_old), abs(f), 1.0):
            reason = "objective_tolerance"
            break

    return OptimizeResult(x=x, fun=f, grad=g, trace=trace, reason=reason, evaluations=evals, message=message)


class _Counter:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, *args):
        self.calls += 1
        return self.fn(*args)


# ----------------------------------------------------------------------------
# trace export

TRACE_COLUMNS = ("iteration", "objective", "grad_inf_norm", "seconds")


def write_trace_csv(trace: list[TraceRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in trace:
            w.writerow([r.iteration, repr(r.objective), repr(r.grad_inf_norm), repr(r.seconds)])


def write_trace_json(trace: list[TraceRecord], path: str | Path) -> None:
    Path(path).write_text(json.dumps([asdict(r) for r in trace], indent=1) + "\n")


def read_trace_csv(path: str | Path) -> list[TraceRecord]:
    with open(path, newline="") as fh:
        return [
            TraceRecord(int(r["iteration"]), float(r["objective"]), float(r["grad_inf_norm"]), float(r["seconds"]))
            for r in csv.DictReader(fh)
        ]

"""Limited-memory BFGS with Armijo backtracking.

Deterministic, single-threaded, and counting every objective call: the
evaluation count is the machine-independent cost proxy used by the
multilevel benchmarks.  The line search is Armijo-only (no curvature
condition); curvature pairs that would break positive definiteness are
skipped instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ObjectiveEval", "OptimOptions", "OptimResult", "lbfgs_minimize"]


@dataclass
class ObjectiveEval:
    """Value and gradient of one objective evaluation."""

    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class OptimOptions:
    memory: int = 5
    max_iters: int = 50
    grad_tol: float = 1e-4  # on ||g||_inf, relative to the first iterate
    step_tol: float = 1e-7
    f_tol: float = 1e-5  # on the accepted decrease, relative to 1 + |f|
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 20

    def __post_init__(self):
        if self.memory < 1 or self.max_iters < 1 or self.max_backtracks < 1:
            raise ValueError("memory, max_iters, max_backtracks must be >= 1")
        if self.grad_tol <= 0 or self.step_tol <= 0 or self.f_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("armijo_c1 must be in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must be in (0, 1)")


@dataclass
class OptimResult:
    x_final: np.ndarray
    f_final: float
    f_initial: float
    iterations: int
    objective_evaluations: int
    converged_reason: str  # grad_tol | step_tol | f_tol | max_iters | line_search_failure


def _two_loop(gradient, s_list, y_list, rho_list):
    q = gradient.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if s_list:
        s, y = s_list[-1], y_list[-1]
        gamma = (s @ y) / (y @ y)
        q *= gamma
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs_minimize(objective, x0, opts: OptimOptions | None = None, trace=None) -> OptimResult:
    """Minimize a callable ``x -> ObjectiveEval`` from ``x0``.

    Stops when the gradient sup-norm falls below ``grad_tol`` times its
    initial value, the accepted step drops below ``step_tol``, the
    accepted decrease falls below ``f_tol`` relative to the objective
    scale, the iteration budget runs out, or the backtracking line search
    fails (the best iterate found so far is returned in every case).  ``trace``, if
    given, is called with (iteration, f, grad_inf, step, evaluations)
    after each accepted step.
    """
    if opts is None:
        opts = OptimOptions()
    x = np.array(x0, dtype=np.float64).ravel()
    evals = 0

    def evaluate(point):
        nonlocal evals
        evals += 1
        e = objective(point)
        return float(e.value), np.asarray(e.gradient, dtype=np.float64).ravel()

    f, g = evaluate(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at the starting point")
    f_initial = f
    g_inf0 = np.abs(g).max() if g.size else 0.0
    grad_target = opts.grad_tol * g_inf0

    if g_inf0 <= grad_target:
        return OptimResult(x, f, f_initial, 0, evals, "grad_tol")

    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    rho_list: list[float] = []
    reason = "max_iters"
    iteration = 0

    for iteration in range(1, opts.max_iters + 1):
        p = _two_loop(g, s_list, y_list, rho_list)
        gp = g @ p
        if gp >= 0.0:  # not a descent direction; fall back to steepest descent
            p = -g
            gp = g @ p

        step = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            x_new = x + step * p
            f_new, g_new = evaluate(x_new)
            if np.isfinite(f_new) and f_new <= f + opts.armijo_c1 * step * gp:
                accepted = True
                break
            step *= opts.backtrack_factor
        if not accepted:
            reason = "line_search_failure"
            iteration -= 1
            break

        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > opts.memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        else:
            # rejected curvature pair: the stored model no longer reflects the
            # local landscape, so restart from a fresh steepest-descent scale
            s_list.clear()
            y_list.clear()
            rho_list.clear()

        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        g_inf = np.abs(g).max()
        if trace is not None:
            trace(iteration, f, g_inf, step, evals)
        if g_inf <= grad_target:
            reason = "grad_tol"
            break
        if np.linalg.norm(s) <= opts.step_tol:
            reason = "step_tol"
            break
        if decrease <= opts.f_tol * (1.0 + abs(f)):
            reason = "f_tol"
            break

    return OptimResult(x, f, f_initial, iteration, evals, reason)

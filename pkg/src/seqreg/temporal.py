"""Temporal multilevel machinery and the two registration drivers.

The spatial-only driver (:func:`spml_run`) registers all frames at every
pyramid level, coarse to fine.  The spatio-temporal driver
(:func:`stml_run`) nests a binary-tree hierarchy of frame subsets inside
each spatial level and alternates prediction (interpolating transforms
for newly activated frames) with correction (registration over the
enlarged subset).  At the coarsest spatial level the predictor is plain
linear interpolation in time; at finer levels it solves, per affine
parameter component, a small smoothing least-squares problem that pulls
the estimate toward the corrected subset values while preserving the
frame-to-frame changes of a reference trajectory:

    min_zeta  sum_{k in K} (zeta_k - eta_k)^2
              + beta * sum_k [ (zeta_{k+1} - zeta_k) - (ref_{k+1} - ref_k) ]^2

Its normal equations are tridiagonal and solved by the Thomas algorithm
in O(n).  Because the predictor extends the estimate to *all* frames, a
stopping rule can cut remaining temporal levels short once consecutive
levels stop improving.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .grid import ImageSequence
from .optimizer import ObjectiveEval, OptimResult, lbfgs_minimize
from .penalty import penalty_gradient, penalty_value
from .pyramid import SpatialPyramid
from .similarity import (
    correlation_state,
    default_time_interval,
    dissimilarity,
    dissimilarity_gradient,
    quad_weights,
)
from .transform import Affine, AffineStack, stack_diff_norm, stack_norm

__all__ = [
    "TemporalSchedule",
    "build_temporal_levels",
    "linear_predict",
    "TridiagSystem",
    "SingularSystemError",
    "thomas_solve",
    "ls_predict",
    "StoppingPolicy",
    "check_stop",
    "LevelRun",
    "dissim_all_frames",
    "resolve_lambda",
    "stml_run",
    "spml_run",
]


@dataclass(frozen=True)
class TemporalSchedule:
    """Nested frame-index sets ordered coarse to fine; the finest holds all frames."""

    levels: tuple[tuple[int, ...], ...]
    n: int

    def __post_init__(self):
        if not self.levels:
            raise ValueError("schedule needs at least one level")
        if self.levels[-1] != tuple(range(1, self.n + 1)):
            raise ValueError("finest level must contain all frames 1..n")
        for q, level in enumerate(self.levels):
            if any(k1 <= k0 for k0, k1 in zip(level, level[1:])):
                raise ValueError(f"level {q} is not strictly increasing")
            if level[0] != 1 or level[-1] != self.n:
                raise ValueError(f"level {q} must keep the endpoints 1 and {self.n}")
            if q + 1 < len(self.levels) and not set(level) <= set(self.levels[q + 1]):
                raise ValueError(f"level {q} is not nested in level {q + 1}")

    @property
    def depth(self) -> int:
        return len(self.levels)


def build_temporal_levels(n: int, coarsest_size: int) -> TemporalSchedule:
    """Binary-tree temporal levels: each coarser set keeps every second
    frame of the finer one (starting at frame 1) plus the last frame.

    Refinement stops once the strided pick reaches ``coarsest_size``
    frames; if n <= coarsest_size the schedule is the single full set.
    """
    if n < 3:
        raise ValueError("need at least 3 frames")
    if coarsest_size < 3:
        raise ValueError("coarsest_size must be >= 3")
    levels = [tuple(range(1, n + 1))]
    while len(levels[0]) > coarsest_size:
        finer = levels[0]
        strided = finer[::2]
        coarser = strided if strided[-1] == finer[-1] else strided + (finer[-1],)
        levels.insert(0, coarser)
        if len(strided) <= coarsest_size:
            break
    return TemporalSchedule(tuple(levels), n)


def _interp_linear(stack: AffineStack, sources, targets, times) -> AffineStack:
    """Piecewise-linear interpolation of transform parameters over time.

    Source frames are injected unchanged; a target between two sources
    gets the time-proportional blend of their parameter vectors.
    """
    sources = list(sources)
    d = stack.dim
    items = {}
    for k in targets:
        if k in stack.items and k in sources:
            items[k] = stack.items[k]
            continue
        left = max(z for z in sources if z < k)
        right = min(z for z in sources if z > k)
        theta = (times[k - 1] - times[left - 1]) / (times[right - 1] - times[left - 1])
        p = (1.0 - theta) * stack.items[left].params + theta * stack.items[right].params
        items[k] = Affine.from_params(p, d)
    return AffineStack(items, stack.frame_count)


def linear_predict(stack: AffineStack, schedule: TemporalSchedule, q: int, times) -> AffineStack:
    """Predict transforms on level q+1 from the corrected level-q stack."""
    if not 0 <= q < schedule.depth - 1:
        raise ValueError(f"q must be in [0, {schedule.depth - 2}]")
    source = schedule.levels[q]
    missing = [k for k in source if k not in stack.items]
    if missing:
        raise ValueError(f"stack lacks transforms for level-{q} frames {missing}")
    return _interp_linear(stack, source, schedule.levels[q + 1], times)


class SingularSystemError(ValueError):
    """Raised when elimination hits a vanishing pivot."""


@dataclass
class TridiagSystem:
    """Tridiagonal system: sub/super diagonals (n-1), diagonal and rhs (n)."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        self.sub = np.asarray(self.sub, dtype=np.float64)
        self.diag = np.asarray(self.diag, dtype=np.float64)
        self.sup = np.asarray(self.sup, dtype=np.float64)
        self.rhs = np.asarray(self.rhs, dtype=np.float64)
        n = self.diag.size
        if n < 1:
            raise ValueError("system must have at least one equation")
        if self.sub.size != n - 1 or self.sup.size != n - 1 or self.rhs.size != n:
            raise ValueError("inconsistent band/rhs lengths")


def thomas_solve(sys: TridiagSystem) -> np.ndarray:
    """Forward elimination and back substitution in O(n), no pivoting."""
    n = sys.diag.size
    tol = 1e-14 * np.abs(sys.diag).max()
    cp = np.empty(n - 1) if n > 1 else np.empty(0)
    dp = np.empty(n)

    piv = sys.diag[0]
    if abs(piv) <= tol:
        raise SingularSystemError("zero pivot at row 0")
    if n > 1:
        cp[0] = sys.sup[0] / piv
    dp[0] = sys.rhs[0] / piv
    for i in range(1, n):
        piv = sys.diag[i] - sys.sub[i - 1] * cp[i - 1]
        if abs(piv) <= tol:
            raise SingularSystemError(f"zero pivot at row {i}")
        if i < n - 1:
            cp[i] = sys.sup[i] / piv
        dp[i] = (sys.rhs[i] - sys.sub[i - 1] * dp[i - 1]) / piv

    x = np.empty(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def ls_predict(eta: AffineStack, ref: AffineStack, beta: float, times) -> AffineStack:
    """Smoothing least-squares prediction extended to all frames.

    ``eta`` holds corrected transforms on the active subset, ``ref`` a
    full-frame reference trajectory whose local time differences the
    estimate should reproduce.  Each of the d^2 + d parameter components
    is solved independently: the normal equations (M + beta * L) zeta =
    M eta + beta * L ref, with M the 0/1 subset indicator and L the
    path-graph Laplacian, are tridiagonal, symmetric positive definite,
    and handled by :func:`thomas_solve`.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    n = ref.frame_count
    if ref.indices != tuple(range(1, n + 1)):
        raise ValueError("ref must cover all frames")
    active = eta.indices
    times = np.asarray(times, dtype=np.float64)
    if times.size != n:
        raise ValueError(f"expected {n} times, got {times.size}")

    d = eta.dim
    mask = np.zeros(n)
    mask[[k - 1 for k in active]] = 1.0

    lap_diag = np.full(n, 2.0)
    lap_diag[[0, -1]] = 1.0
    diag = mask + beta * lap_diag
    off = np.full(n - 1, -beta)

    eta_full = np.zeros((n, d * d + d))
    eta_full[[k - 1 for k in active]] = eta.params_matrix()
    ref_params = ref.params_matrix()

    def laplacian(v):
        out = np.empty_like(v)
        out[0] = v[0] - v[1]
        out[1:-1] = 2.0 * v[1:-1] - v[:-2] - v[2:]
        out[-1] = v[-1] - v[-2]
        return out

    zeta = np.empty_like(ref_params)
    for c in range(d * d + d):
        rhs = mask * eta_full[:, c] + beta * laplacian(ref_params[:, c])
        zeta[:, c] = thomas_solve(TridiagSystem(off, diag, off, rhs))
    return AffineStack.from_params(zeta, range(1, n + 1), n, d)


@dataclass(frozen=True)
class StoppingPolicy:
    """Early-exit rule between temporal levels.

    ``dissim`` compares the all-frames dissimilarity of consecutive
    levels against eps times the first level's value; ``param`` compares
    the parameter change on the common frame subset against eps times a
    reference stack norm.
    """

    mode: str = "dissim"
    eps: float = 1e-3

    def __post_init__(self):
        if self.mode not in ("dissim", "param"):
            raise ValueError("mode must be 'dissim' or 'param'")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")


@dataclass
class LevelRun:
    """Log record of one registration solve at (spatial, temporal) level."""

    spatial_level: int
    temporal_level: int | None  # None for spatial-only runs
    active: tuple[int, ...]
    result: OptimResult
    dissim_all: float  # dissimilarity over all frames after prediction/solution
    wall_ms: float


def check_stop(
    policy: StoppingPolicy,
    history: list[LevelRun],
    y_prev: AffineStack | None = None,
    y_curr: AffineStack | None = None,
    reference_norm: float | None = None,
) -> bool:
    """Decide whether to skip the remaining temporal levels.

    ``history`` holds the runs completed at the current spatial level (at
    least two).  In ``param`` mode the corrected stacks of the last two
    levels and a reference norm are required.
    """
    if len(history) < 2:
        raise ValueError("need at least two completed temporal levels")
    if policy.mode == "dissim":
        d0 = history[0].dissim_all
        return abs(history[-1].dissim_all - history[-2].dissim_all) <= policy.eps * abs(d0)
    if y_prev is None or y_curr is None or reference_norm is None:
        raise ValueError("param mode needs y_prev, y_curr, and reference_norm")
    return stack_diff_norm(y_curr, y_prev) <= policy.eps * reference_norm


def dissim_all_frames(seq: ImageSequence, stack: AffineStack, interval, threads: int) -> float:
    all_frames = tuple(range(1, seq.frame_count + 1))
    w = quad_weights(seq.times, *interval)
    state = correlation_state(seq, stack, all_frames, w, seq.grid.cell_volume, threads)
    return dissimilarity(state)


def _gir_solve(
    seq: ImageSequence,
    subset: tuple[int, ...],
    init: AffineStack,
    lam: float,
    interval,
    config: RunConfig,
) -> tuple[AffineStack, OptimResult]:
    """Groupwise registration of one frame subset from a starting stack."""
    times_sub = [seq.times[k - 1] for k in subset]
    w = quad_weights(times_sub, *interval)
    hd = seq.grid.cell_volume
    d = init.dim
    n_params = d * d + d
    threads = config.threads

    # optimize in preconditioned coordinates: matrix entries act on
    # positions of magnitude ~half the domain extent, so scaling them by
    # that length makes the curvature roughly isotropic across parameters
    extent = max(n_cells * s for n_cells, s in zip(seq.grid.dims, seq.grid.spacing))
    scale = np.concatenate([np.full(d * d, 0.5 * extent), np.ones(d)])
    scale_full = np.tile(scale, len(subset))

    def unpack(u):
        rows = (u / scale_full).reshape(len(subset), n_params)
        return AffineStack.from_params(rows, subset, init.frame_count, d)

    def objective(u):
        stack = unpack(u)
        state = correlation_state(seq, stack, subset, w, hd, threads)
        value = dissimilarity(state) + penalty_value(stack, lam)
        grad = dissimilarity_gradient(state, seq, stack, subset, threads)
        grad += penalty_gradient(stack, lam)
        return ObjectiveEval(value, grad.ravel() / scale_full)

    u0 = init.restrict(subset).params_matrix().ravel() * scale_full
    result = lbfgs_minimize(objective, u0, config.optim)
    return unpack(result.x_final), result


def resolve_lambda(pyramid: SpatialPyramid, config: RunConfig) -> float:
    """Fixed penalty weight: 0.01 times the unregistered dissimilarity of
    the coarsest level (a unit mean drift then costs about 1% of D)."""
    if config.lam is not None:
        return config.lam
    coarse = pyramid.levels[0]
    interval = default_time_interval(coarse.times)
    identity = AffineStack.identity(coarse.frame_count, coarse.grid.ndim)
    return max(0.0, 0.01 * dissim_all_frames(coarse, identity, interval, config.threads))


def spml_run(pyramid: SpatialPyramid, config: RunConfig) -> tuple[AffineStack, list[LevelRun]]:
    """Spatial-only multilevel registration: all frames at every level."""
    lam = resolve_lambda(pyramid, config)
    times = pyramid.levels[0].times
    interval = default_time_interval(times)
    n = pyramid.levels[0].frame_count
    all_frames = tuple(range(1, n + 1))
    d = pyramid.levels[0].grid.ndim

    runs: list[LevelRun] = []
    solution = AffineStack.identity(n, d)
    for level, seq in enumerate(pyramid.levels):
        t0 = time.perf_counter()
        solution, result = _gir_solve(seq, all_frames, solution, lam, interval, config)
        d_all = dissim_all_frames(seq, solution, interval, config.threads)
        runs.append(
            LevelRun(level, None, all_frames, result, d_all, 1e3 * (time.perf_counter() - t0))
        )
    return solution, runs


def stml_run(
    pyramid: SpatialPyramid, schedule: TemporalSchedule, config: RunConfig
) -> tuple[AffineStack, list[LevelRun]]:
    """Spatio-temporal multilevel registration.

    Per spatial level, temporal levels run coarse to fine: solve on the
    active subset, extend to all frames (linear interpolation at the
    coarsest spatial level, smoothing least squares after), and use the
    extension both as the next level's starting guess and for the
    stopping rule.  When the rule fires, the remaining temporal levels
    are skipped, except that the finest spatial level always ends with a
    correction over all frames.
    """
    lam = resolve_lambda(pyramid, config)
    times = pyramid.levels[0].times
    interval = default_time_interval(times)
    n = schedule.n
    if n != pyramid.levels[0].frame_count:
        raise ValueError("schedule and pyramid disagree on the frame count")
    all_frames = tuple(range(1, n + 1))
    d = pyramid.levels[0].grid.ndim
    policy = StoppingPolicy(config.stop_mode, config.eps)
    t_final = schedule.depth - 1

    runs: list[LevelRun] = []
    prev_full: AffineStack | None = None  # all-frames solution of the previous spatial level

    for level, seq in enumerate(pyramid.levels):
        coarsest = level == 0
        finest = level == pyramid.level_count - 1
        ref_norm = stack_norm(prev_full) if prev_full is not None else None
        level_history: list[LevelRun] = []
        prediction: AffineStack | None = None  # extension that seeded the current level
        y_prev: AffineStack | None = None
        current_full: AffineStack | None = None

        q = 0
        while q <= t_final:
            active = schedule.levels[q]
            if q == 0:
                base = AffineStack.identity(n, d) if prev_full is None else prev_full
                init = base.restrict(active)
            else:
                init = prediction.restrict(active)

            t0 = time.perf_counter()
            y_q, result = _gir_solve(seq, active, init, lam, interval, config)

            if q == t_final:
                extension = y_q
            elif coarsest:
                extension = _interp_linear(y_q, active, all_frames, times)
            else:
                ref = prev_full if q == 0 else prediction
                extension = ls_predict(y_q, ref, config.beta, times)
            d_all = dissim_all_frames(seq, extension, interval, config.threads)
            run = LevelRun(level, q, active, result, d_all, 1e3 * (time.perf_counter() - t0))
            runs.append(run)
            level_history.append(run)

            if ref_norm is None:
                ref_norm = stack_norm(extension)

            stop = False
            if 1 <= q < t_final:
                stop = check_stop(policy, level_history, y_prev, y_q, ref_norm)

            y_prev = y_q
            current_full = extension
            if q < t_final:
                prediction = extension

            if stop:
                if finest:
                    q = t_final  # all frames still get one correction here
                    continue
                break
            q += 1

        prev_full = current_full

    return prev_full, runs

"""End-to-end benchmark harness: run both multilevel strategies on
synthetic data and report cost, agreement, and ground-truth accuracy.

The primary cost metric is the objective evaluation count (machine
independent); wall times are recorded but noisy at desk scale.  All
report fields except wall times are deterministic per (config, spec).
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .grid import ImageSequence, write_sequence
from .pyramid import build_pyramid
from .similarity import default_time_interval, min_consecutive_rho
from .synth import SynthSpec, synth_generate
from .temporal import (
    LevelRun,
    dissim_all_frames,
    build_temporal_levels,
    resolve_lambda,
    spml_run,
    stml_run,
)
from .transform import (
    AffineStack,
    affine_inverse,
    gauge_fix,
    nonpositive_det_frames,
    stack_diff_norm,
    write_stack,
)
from .penalty import identity_params

__all__ = [
    "reduction_in_d",
    "rel_diff_y",
    "recovery_error",
    "LevelReport",
    "MethodRecovery",
    "RunReport",
    "run_benchmark",
    "write_report_csv",
    "write_levels_jsonl",
    "write_line_profile",
    "aggregate_reports",
    "CSV_HEADER",
]

CSV_HEADER = (
    "level,grid,min_rho,lambda,d_unreg,reduction_spml_pct,reduction_stml_pct,"
    "rel_diff_y_pct,evals_spml,evals_stml,time_spml_s,time_stml_s,speedup"
)


def reduction_in_d(d_unreg: float, d_reg: float) -> float | None:
    """Percent reduction from the unregistered dissimilarity; None if undefined."""
    if d_unreg <= 0:
        return None
    return 100.0 * (d_unreg - d_reg) / d_unreg


def rel_diff_y(ya: AffineStack, yb: AffineStack) -> float | None:
    """Percent parameter difference between two stacks, measured relative
    to the first stack's deviation from the identity."""
    if ya.dim != yb.dim or ya.indices != yb.indices:
        raise ValueError("stacks must cover the same frames with the same dimension")
    p_id = identity_params(ya.dim)
    denom = float(np.linalg.norm(ya.params_matrix() - p_id))
    if denom == 0.0:
        return None
    return 100.0 * stack_diff_norm(ya, yb) / denom


def recovery_error(
    estimated: AffineStack, truth: AffineStack, spacing
) -> tuple[float, float]:
    """Max translation error (cells) and max matrix-entry error vs ground truth.

    Both stacks are gauge-fixed to the identity at frame 1 first; the
    estimate is compared against the inverse of the generating motion.
    """
    est = gauge_fix(estimated)
    target = gauge_fix(
        AffineStack({k: affine_inverse(t) for k, t in truth.items.items()}, truth.frame_count)
    )
    spacing = np.asarray(spacing, dtype=np.float64)
    max_trans = 0.0
    max_mat = 0.0
    for k in est.indices:
        a, b = est.items[k], target.items[k]
        max_trans = max(max_trans, float(np.abs((a.translation - b.translation) / spacing).max()))
        max_mat = max(max_mat, float(np.abs(a.matrix - b.matrix).max()))
    return max_trans, max_mat


@dataclass
class LevelReport:
    spatial_level: int
    grid_dims: tuple[int, ...]
    d_unreg: float
    d_spml: float | None = None
    d_stml: float | None = None
    reduction_spml_pct: float | None = None
    reduction_stml_pct: float | None = None
    evals_spml: int | None = None
    evals_stml: int | None = None
    time_spml_s: float | None = None
    time_stml_s: float | None = None


@dataclass
class MethodRecovery:
    max_translation_err_cells: float
    max_matrix_err: float
    nonpositive_det_frames: list[int]


@dataclass
class RunReport:
    seed: int
    method: str
    lam: float
    min_rho_input: float
    levels: list[LevelReport] = field(default_factory=list)
    rel_diff_y_pct: float | None = None
    speedup: float | None = None
    total_evals_spml: int | None = None
    total_evals_stml: int | None = None
    total_time_spml_s: float | None = None
    total_time_stml_s: float | None = None
    finest_evals_spml: int | None = None
    finest_evals_stml: int | None = None
    # frame-weighted evaluation cost (sum of evals x active frames): the
    # machine-independent proxy for wall time, since one evaluation touches
    # only the active frames
    finest_cost_spml: int | None = None
    finest_cost_stml: int | None = None
    recovery_spml: MethodRecovery | None = None
    recovery_stml: MethodRecovery | None = None


def _level_evals(runs: list[LevelRun], level: int) -> int:
    return sum(r.result.objective_evaluations for r in runs if r.spatial_level == level)


def _level_cost(runs: list[LevelRun], level: int) -> int:
    return sum(
        r.result.objective_evaluations * len(r.active)
        for r in runs
        if r.spatial_level == level
    )


def _level_time_s(runs: list[LevelRun], level: int) -> float:
    return sum(r.wall_ms for r in runs if r.spatial_level == level) / 1e3


def _level_final_d(runs: list[LevelRun], level: int) -> float:
    return [r for r in runs if r.spatial_level == level][-1].dissim_all


def run_benchmark(
    config: RunConfig, spec: SynthSpec | None = None, out_dir=None
) -> RunReport:
    """Generate data, run the configured strategies, and assemble a report.

    When ``out_dir`` is given, writes report.csv, levels.jsonl, the final
    transform stacks, and the input sequence there.
    """
    if spec is None:
        spec = SynthSpec(seed=config.seed)
    seq, truth = synth_generate(spec)
    pyramid = build_pyramid(seq, config.spatial_levels)
    lam = resolve_lambda(pyramid, config)
    run_config = dataclasses.replace(config, lam=lam)
    interval = default_time_interval(seq.times)
    n = seq.frame_count
    identity = AffineStack.identity(n, seq.grid.ndim)

    report = RunReport(
        seed=config.seed,
        method=config.method,
        lam=lam,
        min_rho_input=min_consecutive_rho(seq, identity),
    )

    results: dict[str, tuple[AffineStack, list[LevelRun], float]] = {}
    if config.method in ("spml", "both"):
        t0 = time.perf_counter()
        y, runs = spml_run(pyramid, run_config)
        results["spml"] = (y, runs, time.perf_counter() - t0)
    if config.method in ("stml", "both"):
        schedule = build_temporal_levels(n, config.temporal_coarsest_size)
        t0 = time.perf_counter()
        y, runs = stml_run(pyramid, schedule, run_config)
        results["stml"] = (y, runs, time.perf_counter() - t0)

    for level, level_seq in enumerate(pyramid.levels):
        lr = LevelReport(
            spatial_level=level,
            grid_dims=level_seq.grid.dims,
            d_unreg=dissim_all_frames(level_seq, identity, interval, config.threads),
        )
        for name in results:
            _, runs, _ = results[name]
            d_reg = _level_final_d(runs, level)
            setattr(lr, f"d_{name}", d_reg)
            setattr(lr, f"reduction_{name}_pct", reduction_in_d(lr.d_unreg, d_reg))
            setattr(lr, f"evals_{name}", _level_evals(runs, level))
            setattr(lr, f"time_{name}_s", _level_time_s(runs, level))
        report.levels.append(lr)

    finest = pyramid.level_count - 1
    for name, (y, runs, elapsed) in results.items():
        setattr(report, f"total_evals_{name}", sum(r.result.objective_evaluations for r in runs))
        setattr(report, f"total_time_{name}_s", elapsed)
        setattr(report, f"finest_evals_{name}", _level_evals(runs, finest))
        setattr(report, f"finest_cost_{name}", _level_cost(runs, finest))
        err_t, err_m = recovery_error(y, truth, seq.grid.spacing)
        setattr(
            report,
            f"recovery_{name}",
            MethodRecovery(err_t, err_m, nonpositive_det_frames(y)),
        )

    if config.method == "both":
        report.rel_diff_y_pct = rel_diff_y(results["spml"][0], results["stml"][0])
        report.speedup = report.total_time_spml_s / report.total_time_stml_s

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sequence(seq, out / "input.stsq")
        write_stack(truth, out / "truth.txt")
        write_report_csv(report, out / "report.csv")
        write_levels_jsonl({m: results[m][1] for m in results}, out / "levels.jsonl")
        for name, (y, _, _) in results.items():
            write_stack(y, out / f"transforms_{name}.txt")
    return report


def _cell(value, fmt="{:.6g}") -> str:
    if value is None:
        return ""
    return fmt.format(value)


def write_report_csv(report: RunReport, path) -> None:
    """Fixed-header CSV: one row per spatial level plus a total row."""
    rows = [CSV_HEADER]
    for lr in report.levels:
        rows.append(
            ",".join(
                [
                    str(lr.spatial_level),
                    "x".join(str(d) for d in lr.grid_dims),
                    _cell(report.min_rho_input),
                    _cell(report.lam),
                    _cell(lr.d_unreg),
                    _cell(lr.reduction_spml_pct),
                    _cell(lr.reduction_stml_pct),
                    "",  # cross-method fields appear on the total row
                    _cell(lr.evals_spml, "{}"),
                    _cell(lr.evals_stml, "{}"),
                    _cell(lr.time_spml_s),
                    _cell(lr.time_stml_s),
                    "",
                ]
            )
        )
    rows.append(
        ",".join(
            [
                "total",
                "",
                _cell(report.min_rho_input),
                _cell(report.lam),
                "",
                "",
                "",
                _cell(report.rel_diff_y_pct),
                _cell(report.total_evals_spml, "{}"),
                _cell(report.total_evals_stml, "{}"),
                _cell(report.total_time_spml_s),
                _cell(report.total_time_stml_s),
                _cell(report.speedup),
            ]
        )
    )
    Path(path).write_text("\n".join(rows) + "\n", encoding="ascii")


def write_levels_jsonl(runs_by_method: dict[str, list[LevelRun]], path) -> None:
    """One JSON record per registration solve, in execution order."""
    lines = []
    for method, runs in runs_by_method.items():
        for r in runs:
            lines.append(
                json.dumps(
                    {
                        "method": method,
                        "spatial_level": r.spatial_level,
                        "temporal_level": r.temporal_level,
                        "active_count": len(r.active),
                        "iterations": r.result.iterations,
                        "objective_evaluations": r.result.objective_evaluations,
                        "objective_initial": r.result.f_initial,
                        "objective_final": r.result.f_final,
                        "dissim_all": r.dissim_all,
                        "wall_ms": r.wall_ms,
                    }
                )
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_line_profile(seq: ImageSequence, stack: AffineStack, path) -> None:
    """Intensity along the central grid line of every transformed frame.

    Long-form CSV (frame, time, index, value) for time-vs-space profile
    plots; rendering is left to downstream tools.
    """
    from .transform import transform_image

    grid = seq.grid
    lines = ["frame,time,index,value"]
    mid = tuple(d // 2 for d in grid.dims[1:])
    for k in range(1, seq.frame_count + 1):
        warped = transform_image(seq.frames[k - 1], stack.items[k]).as_array()
        profile = warped[(slice(None),) + mid]
        for i, v in enumerate(profile):
            lines.append(f"{k},{seq.times[k - 1]!r},{i},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def aggregate_reports(runs_dir) -> str:
    """Concatenate the report.csv files under a directory, tagged by run name."""
    runs_dir = Path(runs_dir)
    out_lines = ["run," + CSV_HEADER]
    for report_path in sorted(runs_dir.glob("**/report.csv")):
        name = report_path.parent.relative_to(runs_dir).as_posix() or "."
        body = report_path.read_text(encoding="ascii").splitlines()
        if not body or body[0] != CSV_HEADER:
            raise ValueError(f"{report_path}: unexpected CSV header")
        out_lines.extend(f"{name},{line}" for line in body[1:])
    return "\n".join(out_lines) + "\n"

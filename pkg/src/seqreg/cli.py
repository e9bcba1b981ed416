"""Command-line interface: synth, register, bench, and report subcommands."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .bench import (
    aggregate_reports,
    run_benchmark,
    write_levels_jsonl,
    write_line_profile,
    write_report_csv,
)
from .config import RunConfig
from .grid import SequenceFormatError, read_sequence, write_sequence
from .pyramid import build_pyramid
from .synth import SynthSpec, synth_generate
from .temporal import build_temporal_levels, spml_run, stml_run
from .transform import write_stack

__all__ = ["main"]

_CONFIG_KEYS = {
    "spatial_levels": int,
    "temporal_coarsest_size": int,
    "beta": float,
    "lambda": float,
    "eps": float,
    "stop_mode": str,
    "seed": int,
    "method": str,
    "threads": int,
}
_SYNTH_KEYS = {
    "dims": str,
    "frames": int,
    "trans_amp": float,
    "rot_amp": float,
    "noise": float,
    "motion": str,
}


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--stop-mode", choices=["dissim", "param"], default=None)
    p.add_argument("--spatial-levels", type=int, default=None)
    p.add_argument("--temporal-coarsest", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)


def parse_config_file(path) -> dict:
    """Flat ``key = value`` config lines; '#' starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key in _CONFIG_KEYS:
            values[key] = _CONFIG_KEYS[key](value)
        elif key in _SYNTH_KEYS:
            values[key] = _SYNTH_KEYS[key](value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    return values


def _build_run_config(file_values: dict, args) -> RunConfig:
    cfg = RunConfig()
    merged = {
        "spatial_levels": file_values.get("spatial_levels", cfg.spatial_levels),
        "temporal_coarsest_size": file_values.get(
            "temporal_coarsest_size", cfg.temporal_coarsest_size
        ),
        "beta": file_values.get("beta", cfg.beta),
        "lam": file_values.get("lambda", cfg.lam),
        "eps": file_values.get("eps", cfg.eps),
        "stop_mode": file_values.get("stop_mode", cfg.stop_mode),
        "seed": file_values.get("seed", cfg.seed),
        "method": file_values.get("method", cfg.method),
        "threads": file_values.get("threads", cfg.threads),
    }
    overrides = {
        "spatial_levels": args.spatial_levels,
        "temporal_coarsest_size": args.temporal_coarsest,
        "beta": args.beta,
        "lam": args.lam,
        "eps": args.eps,
        "stop_mode": args.stop_mode,
        "seed": args.seed,
        "threads": args.threads,
        "method": getattr(args, "method", None),
    }
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return RunConfig(**merged)


def _build_synth_spec(file_values: dict, seed: int) -> SynthSpec:
    spec = SynthSpec(seed=seed)
    kwargs = {"seed": seed}
    if "dims" in file_values:
        parts = file_values["dims"].replace("x", " ").split()
        kwargs["dims"] = tuple(int(v) for v in parts)
    if "frames" in file_values:
        kwargs["frames"] = file_values["frames"]
    if "trans_amp" in file_values:
        kwargs["trans_amp_cells"] = file_values["trans_amp"]
    if "rot_amp" in file_values:
        kwargs["rot_amp_deg"] = file_values["rot_amp"]
    if "noise" in file_values:
        kwargs["noise_frac"] = file_values["noise"]
    if "motion" in file_values:
        kwargs["motion"] = file_values["motion"]
    return dataclasses.replace(spec, **kwargs)


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        dims=tuple(args.dims),
        frames=args.frames,
        seed=args.seed if args.seed is not None else 42,
        trans_amp_cells=args.trans_amp,
        rot_amp_deg=args.rot_amp,
        noise_frac=args.noise,
        motion=args.motion,
    )
    seq, truth = synth_generate(spec)
    write_sequence(seq, args.out)
    print(f"wrote {args.out} ({spec.frames} frames, {'x'.join(map(str, spec.dims))})")
    if args.truth:
        write_stack(truth, args.truth)
        print(f"wrote {args.truth}")
    return 0


def _cmd_register(args) -> int:
    config = _build_run_config({}, args)
    seq = read_sequence(args.input)
    pyramid = build_pyramid(seq, config.spatial_levels)
    if args.method == "spml":
        stack, runs = spml_run(pyramid, config)
    else:
        schedule = build_temporal_levels(seq.frame_count, config.temporal_coarsest_size)
        stack, runs = stml_run(pyramid, schedule, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_stack(stack, out / "transforms.txt")
    write_levels_jsonl({args.method: runs}, out / "levels.jsonl")
    if args.lineprofile:
        write_line_profile(seq, stack, out / "lineprofile.csv")
    evals = sum(r.result.objective_evaluations for r in runs)
    print(f"{args.method}: {len(runs)} level solves, {evals} objective evaluations")
    print(f"wrote {out / 'transforms.txt'}")
    return 0


def _cmd_bench(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    config = _build_run_config(file_values, args)
    spec = _build_synth_spec(file_values, config.seed)
    report = run_benchmark(config, spec, out_dir=args.out)
    out = Path(args.out)
    if args.lineprofile:
        seq, _ = synth_generate(spec)
        from .transform import read_stack

        for name in ("stml", "spml"):
            stack_path = out / f"transforms_{name}.txt"
            if stack_path.exists():
                write_line_profile(seq, read_stack(stack_path), out / f"lineprofile_{name}.csv")
    print(f"wrote {out / 'report.csv'}")
    if report.speedup is not None:
        print(
            f"speedup (time) {report.speedup:.2f}, finest-level evaluations "
            f"stml/spml = {report.finest_evals_stml}/{report.finest_evals_spml}"
        )
    return 0


def _cmd_report(args) -> int:
    csv_text = aggregate_reports(args.runs)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="ascii")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="seqreg",
        description="Groupwise image-sequence registration benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic sequence")
    p_synth.add_argument("--out", required=True, help="output sequence file (STSQ1)")
    p_synth.add_argument("--truth", default=None, help="ground-truth transforms file")
    p_synth.add_argument("--dims", type=int, nargs=2, default=[64, 64])
    p_synth.add_argument("--frames", type=int, default=17)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--trans-amp", type=float, default=1.5, help="cells")
    p_synth.add_argument("--rot-amp", type=float, default=2.0, help="degrees")
    p_synth.add_argument("--noise", type=float, default=0.005)
    p_synth.add_argument("--motion", choices=["sinusoid", "linear"], default="sinusoid")

    p_reg = sub.add_parser("register", help="register a sequence file")
    p_reg.add_argument("--method", choices=["stml", "spml"], required=True)
    p_reg.add_argument("--in", dest="input", required=True)
    p_reg.add_argument("--out", required=True, help="output directory")
    p_reg.add_argument("--lineprofile", action="store_true")
    _add_common_flags(p_reg)

    p_bench = sub.add_parser("bench", help="run the synthetic benchmark")
    p_bench.add_argument("--config", default=None, help="key = value config file")
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.add_argument("--method", choices=["stml", "spml", "both"], default=None)
    p_bench.add_argument("--lineprofile", action="store_true")
    _add_common_flags(p_bench)

    p_rep = sub.add_parser("report", help="aggregate report.csv files")
    p_rep.add_argument("--runs", required=True, help="directory of benchmark runs")
    p_rep.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    handlers = {
        "synth": _cmd_synth,
        "register": _cmd_register,
        "bench": _cmd_bench,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (SequenceFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

"""Groupwise image-sequence registration with multilevel acceleration.

The package registers every frame of an image sequence jointly by
minimizing a correlation-based dissimilarity plus a mean-drift penalty
over per-frame affine transforms.  Two drivers are provided: a spatial
coarse-to-fine baseline (``spml_run``) and a spatio-temporal variant
(``stml_run``) that nests binary-tree frame subsets inside each spatial
level and warm-starts each enlargement from interpolated transforms.
A synthetic benchmark harness measures cost and accuracy of both.
"""

from .bench import (
    LevelReport,
    MethodRecovery,
    RunReport,
    recovery_error,
    reduction_in_d,
    rel_diff_y,
    run_benchmark,
    write_levels_jsonl,
    write_line_profile,
    write_report_csv,
)
from .config import RunConfig
from .grid import (
    DimensionMismatchError,
    Grid,
    Image,
    ImageSequence,
    MalformedHeaderError,
    SequenceFormatError,
    TruncatedPayloadError,
    cell_centers,
    read_sequence,
    sample,
    sample_with_grad,
    write_sequence,
)
from .optimizer import ObjectiveEval, OptimOptions, OptimResult, lbfgs_minimize
from .penalty import identity_params, penalty_gradient, penalty_value
from .pyramid import SpatialPyramid, build_pyramid, restrict, smooth
from .similarity import (
    CorrelationState,
    correlation_state,
    decompose,
    default_time_interval,
    dissimilarity,
    dissimilarity_gradient,
    feature,
    min_consecutive_rho,
    quad_weights,
)
from .synth import SynthSpec, synth_generate
from .temporal import (
    LevelRun,
    SingularSystemError,
    StoppingPolicy,
    TemporalSchedule,
    TridiagSystem,
    build_temporal_levels,
    check_stop,
    dissim_all_frames,
    linear_predict,
    ls_predict,
    resolve_lambda,
    spml_run,
    stml_run,
    thomas_solve,
)
from .transform import (
    Affine,
    AffineStack,
    affine_compose,
    affine_inverse,
    apply_affine,
    gauge_fix,
    identity_affine,
    nonpositive_det_frames,
    read_stack,
    stack_diff_norm,
    stack_norm,
    transform_image,
    write_stack,
)

__version__ = "0.1.0"

__all__ = [
    "Affine",
    "AffineStack",
    "CorrelationState",
    "DimensionMismatchError",
    "Grid",
    "Image",
    "ImageSequence",
    "LevelReport",
    "LevelRun",
    "MalformedHeaderError",
    "MethodRecovery",
    "ObjectiveEval",
    "OptimOptions",
    "OptimResult",
    "RunConfig",
    "RunReport",
    "SequenceFormatError",
    "SingularSystemError",
    "SpatialPyramid",
    "StoppingPolicy",
    "SynthSpec",
    "TemporalSchedule",
    "TridiagSystem",
    "TruncatedPayloadError",
    "affine_compose",
    "affine_inverse",
    "apply_affine",
    "build_pyramid",
    "build_temporal_levels",
    "cell_centers",
    "check_stop",
    "correlation_state",
    "decompose",
    "default_time_interval",
    "dissim_all_frames",
    "dissimilarity",
    "dissimilarity_gradient",
    "feature",
    "gauge_fix",
    "identity_affine",
    "identity_params",
    "lbfgs_minimize",
    "linear_predict",
    "ls_predict",
    "min_consecutive_rho",
    "nonpositive_det_frames",
    "penalty_gradient",
    "penalty_value",
    "quad_weights",
    "read_sequence",
    "read_stack",
    "recovery_error",
    "reduction_in_d",
    "rel_diff_y",
    "resolve_lambda",
    "restrict",
    "run_benchmark",
    "sample",
    "sample_with_grad",
    "smooth",
    "spml_run",
    "stack_diff_norm",
    "stack_norm",
    "stml_run",
    "synth_generate",
    "thomas_solve",
    "transform_image",
    "write_levels_jsonl",
    "write_line_profile",
    "write_report_csv",
    "write_sequence",
    "write_stack",
]

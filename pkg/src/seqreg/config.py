"""Run configuration shared by the registration drivers and the benchmark."""

from __future__ import annotations

from dataclasses import dataclass, field

from .optimizer import OptimOptions

__all__ = ["RunConfig"]

_METHODS = ("stml", "spml", "both")
_STOP_MODES = ("dissim", "param")


@dataclass
class RunConfig:
    spatial_levels: int = 3
    temporal_coarsest_size: int = 3
    beta: float = 1e-5
    lam: float | None = None  # None: auto from the unregistered coarse dissimilarity
    eps: float = 1e-3
    stop_mode: str = "dissim"
    optim: OptimOptions = field(default_factory=OptimOptions)
    seed: int = 42
    method: str = "both"
    threads: int = 1

    def __post_init__(self):
        if self.spatial_levels < 1:
            raise ValueError("spatial_levels must be >= 1")
        if self.temporal_coarsest_size < 3:
            raise ValueError("temporal_coarsest_size must be >= 3")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.stop_mode not in _STOP_MODES:
            raise ValueError(f"stop_mode must be one of {_STOP_MODES}")
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

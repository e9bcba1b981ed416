"""Synthetic image sequences with known per-frame affine motion.

Stands in for real dynamic acquisitions at desk scale: a smooth random
blob pattern is warped by small, temporally smooth affine motions and
lightly corrupted with noise.  The generator is fully deterministic per
seed and returns the ground-truth transforms alongside the frames, so
registration accuracy can be measured directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Grid, Image, ImageSequence
from .similarity import min_consecutive_rho
from .transform import Affine, AffineStack, transform_image

__all__ = ["SynthSpec", "synth_generate"]

# fixed trajectory shape constants (cycles over the sequence / phase offsets)
_TRANS_FREQ = 0.5
_ROT_FREQ = 0.375
_PHASE_X = 0.0
_PHASE_Y = 2.0
_PHASE_ROT = 0.9


@dataclass
class SynthSpec:
    dims: tuple[int, int] = (64, 64)
    frames: int = 17
    seed: int = 42
    trans_amp_cells: float = 1.5
    rot_amp_deg: float = 2.0
    noise_frac: float = 0.005  # of the pattern's dynamic range
    motion: str = "sinusoid"  # sinusoid | linear (linear keeps the matrix at identity)
    pattern_scale_cells: float = 5.0
    min_rho: float = 0.9

    def __post_init__(self):
        if len(self.dims) != 2:
            raise ValueError("synthetic patterns are 2-d")
        if self.frames < 2:
            raise ValueError("need at least 2 frames")
        if self.motion not in ("sinusoid", "linear"):
            raise ValueError("motion must be 'sinusoid' or 'linear'")
        if self.noise_frac < 0 or self.trans_amp_cells < 0 or self.rot_amp_deg < 0:
            raise ValueError("amplitudes must be >= 0")


def _base_pattern(spec: SynthSpec, rng: np.random.Generator, grid: Grid) -> Image:
    field = rng.standard_normal(grid.dims)
    field = ndimage.gaussian_filter(field, sigma=spec.pattern_scale_cells, mode="reflect")
    field /= np.abs(field).max()

    # radial raised-cosine window so warped content never crosses the border
    axes = [
        grid.origin[a] + (np.arange(grid.dims[a]) + 0.5) * grid.spacing[a]
        for a in range(2)
    ]
    xx, yy = np.meshgrid(*axes, indexing="ij")
    radius = 0.45 * min(d * s for d, s in zip(grid.dims, grid.spacing))
    r = np.sqrt(xx**2 + yy**2)
    window = np.where(r < radius, 0.5 * (1.0 + np.cos(np.pi * r / radius)), 0.0)

    values = window * (0.5 + 0.5 * field)
    return Image(grid, values.ravel(order="F"))


def _motion_transform(spec: SynthSpec, phase: float, spacing: tuple[float, float]) -> Affine:
    amp_x = spec.trans_amp_cells * spacing[0]
    amp_y = spec.trans_amp_cells * spacing[1]
    if spec.motion == "linear":
        # parameters exactly linear in time; frame 1 is the identity
        return Affine(np.eye(2), [amp_x * phase, -0.5 * amp_y * phase])
    tx = amp_x * (math.sin(2 * math.pi * _TRANS_FREQ * phase + _PHASE_X) - math.sin(_PHASE_X))
    ty = amp_y * (math.sin(2 * math.pi * _TRANS_FREQ * phase + _PHASE_Y) - math.sin(_PHASE_Y))
    theta = math.radians(spec.rot_amp_deg) * (
        math.sin(2 * math.pi * _ROT_FREQ * phase + _PHASE_ROT) - math.sin(_PHASE_ROT)
    )
    c, s = math.cos(theta), math.sin(theta)
    return Affine([[c, -s], [s, c]], [tx, ty])


def synth_generate(spec: SynthSpec) -> tuple[ImageSequence, AffineStack]:
    """Generate a sequence and the ground-truth motion that produced it.

    Frame k is the base pattern resampled under g_k (g_1 = identity) plus
    seeded noise; intensities are quantized to float32 so the sequence
    survives file round trips exactly.  Raises if the motion is too large
    for consecutive frames to stay correlated above ``spec.min_rho``.
    """
    rng = np.random.default_rng(spec.seed)
    nx, ny = spec.dims
    grid = Grid((nx, ny), (1.0, 1.0), (-nx / 2.0, -ny / 2.0))
    base = _base_pattern(spec, rng, grid)
    dyn_range = float(base.values.max() - base.values.min())

    truth = {}
    frames = []
    for k in range(1, spec.frames + 1):
        phase = (k - 1) / (spec.frames - 1)
        g_k = _motion_transform(spec, phase, grid.spacing)
        truth[k] = g_k
        values = transform_image(base, g_k).values.copy()
        if spec.noise_frac > 0:
            values += rng.normal(0.0, spec.noise_frac * dyn_range, size=values.size)
        values = values.astype("<f4").astype(np.float64)
        frames.append(Image(grid, values))

    seq = ImageSequence(frames, [float(k) for k in range(spec.frames)])
    stack = AffineStack(truth, spec.frames)

    rho = min_consecutive_rho(seq, AffineStack.identity(spec.frames, 2))
    if rho <= spec.min_rho:
        raise ValueError(
            f"motion amplitude too large: min consecutive correlation {rho:.4f} "
            f"<= {spec.min_rho}"
        )
    return seq, stack

"""Spatial coarse-to-fine hierarchies of image sequences.

Smoothing and restriction act on the spatial axes only; a sequence is
processed frame by frame and the time axis is never filtered, so every
pyramid level keeps the full frame count and the original times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Grid, Image, ImageSequence

__all__ = ["SpatialPyramid", "smooth", "restrict", "build_pyramid"]

_KERNEL = np.array([0.25, 0.5, 0.25])


def smooth(image: Image) -> Image:
    """Separable [1, 2, 1]/4 low-pass filter with reflective boundaries."""
    arr = image.as_array()
    for axis in range(image.grid.ndim):
        arr = ndimage.convolve1d(arr, _KERNEL, axis=axis, mode="reflect")
    return Image(image.grid, arr.ravel(order="F"))


def _block_mean(arr: np.ndarray, axis: int) -> np.ndarray:
    starts = np.arange(0, arr.shape[axis], 2)
    sums = np.add.reduceat(arr, starts, axis=axis)
    sizes = np.diff(np.append(starts, arr.shape[axis]))
    shape = [1] * arr.ndim
    shape[axis] = sizes.size
    return sums / sizes.reshape(shape)


def restrict(image: Image) -> Image:
    """Halve the resolution by averaging 2^d cell blocks.

    Odd axes end in a smaller trailing block averaged over the remaining
    cells.  The coarse grid has dims ceil(dims/2), doubled spacing, and
    the same origin.
    """
    arr = image.as_array()
    for axis in range(image.grid.ndim):
        arr = _block_mean(arr, axis)
    g = image.grid
    coarse = Grid(
        tuple(-(-d // 2) for d in g.dims),
        tuple(2.0 * s for s in g.spacing),
        g.origin,
    )
    return Image(coarse, arr.ravel(order="F"))


@dataclass
class SpatialPyramid:
    """Image-sequence hierarchy ordered coarse to fine."""

    levels: list[ImageSequence]

    @property
    def level_count(self) -> int:
        return len(self.levels)


def build_pyramid(seq: ImageSequence, level_count: int) -> SpatialPyramid:
    """Build ``level_count`` levels; the finest level is the input itself.

    Each coarser level is restrict(smooth(frame)) per frame.  Raises if
    the coarsest level would drop below 4 cells on any axis.
    """
    if level_count < 1:
        raise ValueError("level_count must be >= 1")
    dims = seq.grid.dims
    for _ in range(level_count - 1):
        dims = tuple(-(-d // 2) for d in dims)
    if any(d < 4 for d in dims):
        raise ValueError(
            f"level_count={level_count} too large for dims {seq.grid.dims}: "
            f"coarsest level would be {dims}"
        )

    levels = [seq]
    for _ in range(level_count - 1):
        finer = levels[0]
        frames = [restrict(smooth(f)) for f in finer.frames]
        levels.insert(0, ImageSequence(frames, finer.times))
    return SpatialPyramid(levels)

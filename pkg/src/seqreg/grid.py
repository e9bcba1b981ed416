"""Spatial grids, cell-centered scalar images, and timed image sequences.

Conventions used throughout the package:

* Grids are rectilinear and cell centered: the center of cell
  ``(i0, i1[, i2])`` sits at ``origin + (index + 0.5) * spacing`` per axis.
* Image values are stored flat with the first axis varying fastest, so the
  flat index of a cell is ``i0 + dims[0] * (i1 + dims[1] * i2)``.
* Sampling is multilinear between cell centers; points outside the convex
  hull of the cell centers evaluate to zero.

The on-disk sequence format ("STSQ1") is a short ASCII header followed by
raw little-endian float32 payload, one frame after the other in the flat
cell order above.  Intensities are float64 in memory, so a write/read
round trip is exact whenever the values are representable in float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "Image",
    "ImageSequence",
    "cell_centers",
    "sample",
    "sample_with_grad",
    "read_sequence",
    "write_sequence",
    "SequenceFormatError",
    "MalformedHeaderError",
    "TruncatedPayloadError",
    "DimensionMismatchError",
]

_MAGIC = "STSQ1"


class SequenceFormatError(ValueError):
    """Base class for malformed sequence files."""


class MalformedHeaderError(SequenceFormatError):
    """Header is missing, mislabeled, or not parseable."""


class TruncatedPayloadError(SequenceFormatError):
    """Payload size does not match the header's frame count and dims."""


class DimensionMismatchError(SequenceFormatError):
    """Header fields disagree about dimensionality or frame count."""


@dataclass(frozen=True)
class Grid:
    """Rectilinear cell-centered grid in world coordinates.

    dims are cells per axis (each >= 2), spacing is world units per cell
    (each > 0).  Instances are immutable and hashable.
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if not 1 <= len(dims) <= 3:
            raise ValueError(f"grid must be 1-, 2-, or 3-dimensional, got {len(dims)} axes")
        if len(spacing) != len(dims) or len(origin) != len(dims):
            raise ValueError("dims, spacing, and origin must have the same length")
        if any(d < 2 for d in dims):
            raise ValueError(f"all dims must be >= 2, got {dims}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"all spacings must be > 0, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))


class Image:
    """Scalar image: a Grid plus one finite float64 value per cell."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        values = np.ascontiguousarray(values, dtype=np.float64).ravel()
        if values.size != grid.cell_count:
            raise ValueError(
                f"expected {grid.cell_count} values for dims {grid.dims}, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("image values must be finite")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def as_array(self) -> np.ndarray:
        """Values reshaped to ``dims`` with the first axis varying fastest."""
        return self.values.reshape(self.grid.dims, order="F")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"Image(dims={self.grid.dims})"


class ImageSequence:
    """Ordered frames on a shared grid with strictly increasing times."""

    __slots__ = ("grid", "frames", "times")

    def __init__(self, frames, times):
        frames = list(frames)
        times = tuple(float(t) for t in times)
        if len(frames) < 2:
            raise ValueError("a sequence needs at least 2 frames")
        if len(times) != len(frames):
            raise ValueError(f"{len(frames)} frames but {len(times)} times")
        grid = frames[0].grid
        if any(f.grid != grid for f in frames):
            raise ValueError("all frames must share one grid")
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        self.grid = grid
        self.frames = frames
        self.times = times

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageSequence):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.times == other.times
            and all(a == b for a, b in zip(self.frames, other.frames))
        )

    def __repr__(self) -> str:
        return f"ImageSequence(frames={self.frame_count}, dims={self.grid.dims})"


@lru_cache(maxsize=128)
def _centers_cached(grid: Grid) -> np.ndarray:
    axes = [
        grid.origin[a] + (np.arange(grid.dims[a]) + 0.5) * grid.spacing[a]
        for a in range(grid.ndim)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.column_stack([m.ravel(order="F") for m in mesh])
    centers.setflags(write=False)
    return centers


def cell_centers(grid: Grid) -> np.ndarray:
    """World coordinates of all cell centers, shape (cell_count, ndim).

    Row order matches the flat value order (first axis fastest).
    """
    return _centers_cached(grid)


def _as_points(grid: Grid, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None] if grid.ndim == 1 else pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != grid.ndim:
        raise ValueError(f"points must have shape (n, {grid.ndim})")
    return pts


def _interpolate(image: Image, pts: np.ndarray, want_grad: bool):
    grid = image.grid
    dims = np.asarray(grid.dims)
    spacing = np.asarray(grid.spacing)
    # continuous cell-center coordinate: 0 at the first center, dims-1 at the last
    t = (pts - np.asarray(grid.origin)) / spacing - 0.5
    inside = np.all((t >= 0.0) & (t <= dims - 1.0), axis=1)
    tc = np.clip(t, 0.0, dims - 1.0)
    i0 = np.minimum(tc.astype(np.int64), dims - 2)
    frac = tc - i0

    strides = np.cumprod(np.concatenate(([1], dims[:-1])))
    base = i0 @ strides
    n = pts.shape[0]
    vals = np.zeros(n)
    grads = np.zeros((n, grid.ndim)) if want_grad else None

    for corner in product((0, 1), repeat=grid.ndim):
        v = image.values[base + int(np.dot(corner, strides))]
        w = np.ones(n)
        for a, ca in enumerate(corner):
            w *= frac[:, a] if ca else 1.0 - frac[:, a]
        vals += w * v
        if want_grad:
            for a, ca in enumerate(corner):
                dw = np.ones(n)
                for b, cb in enumerate(corner):
                    if b != a:
                        dw *= frac[:, b] if cb else 1.0 - frac[:, b]
                grads[:, a] += (dw if ca else -dw) * v

    vals = np.where(inside, vals, 0.0)
    if want_grad:
        grads = np.where(inside[:, None], grads / spacing, 0.0)
    return vals, grads


def sample(image: Image, points) -> np.ndarray:
    """Multilinear interpolation of an image at world-coordinate points.

    Points outside the convex hull of the cell centers return 0.
    """
    pts = _as_points(image.grid, points)
    vals, _ = _interpolate(image, pts, want_grad=False)
    return vals


def sample_with_grad(image: Image, points) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`sample` but also returns the spatial gradient.

    The gradient is that of the multilinear interpolant in world units,
    shape (n, ndim); zero outside the hull of cell centers.
    """
    pts = _as_points(image.grid, points)
    return _interpolate(image, pts, want_grad=True)


def write_sequence(seq: ImageSequence, path) -> None:
    """Write a sequence in the STSQ1 format (ASCII header + f32 payload)."""
    g = seq.grid
    header = "\n".join(
        [
            _MAGIC,
            "dims: " + " ".join(str(d) for d in g.dims),
            "spacing: " + " ".join(repr(s) for s in g.spacing),
            "origin: " + " ".join(repr(o) for o in g.origin),
            f"frames: {seq.frame_count}",
            "times: " + " ".join(repr(t) for t in seq.times),
        ]
    )
    payload = b"".join(f.values.astype("<f4").tobytes() for f in seq.frames)
    Path(path).write_bytes(header.encode("ascii") + b"\n\n" + payload)


def _header_field(lines: list[str], index: int, key: str) -> list[str]:
    if index >= len(lines):
        raise MalformedHeaderError(f"missing header line '{key}'")
    line = lines[index]
    if not line.startswith(key + ":"):
        raise MalformedHeaderError(f"expected header line '{key}: ...', got {line!r}")
    return line[len(key) + 1 :].split()


def read_sequence(path) -> ImageSequence:
    """Read a sequence written by :func:`write_sequence`."""
    data = Path(path).read_bytes()
    head, sep, payload = data.partition(b"\n\n")
    if not sep:
        raise MalformedHeaderError("no blank line terminating the header")
    try:
        lines = head.decode("ascii").split("\n")
    except UnicodeDecodeError as exc:
        raise MalformedHeaderError("header is not ASCII") from exc
    if not lines or lines[0] != _MAGIC:
        raise MalformedHeaderError(f"bad magic, expected {_MAGIC!r}")

    try:
        dims = [int(v) for v in _header_field(lines, 1, "dims")]
        spacing = [float(v) for v in _header_field(lines, 2, "spacing")]
        origin = [float(v) for v in _header_field(lines, 3, "origin")]
        (frames_str,) = _header_field(lines, 4, "frames")
        n = int(frames_str)
        times = [float(v) for v in _header_field(lines, 5, "times")]
    except (ValueError, TypeError) as exc:
        if isinstance(exc, SequenceFormatError):
            raise
        raise MalformedHeaderError(f"unparseable header: {exc}") from exc

    if not (len(dims) == len(spacing) == len(origin)):
        raise DimensionMismatchError(
            f"dims/spacing/origin lengths disagree: {len(dims)}/{len(spacing)}/{len(origin)}"
        )
    if len(times) != n:
        raise DimensionMismatchError(f"{n} frames declared but {len(times)} times given")

    try:
        grid = Grid(tuple(dims), tuple(spacing), tuple(origin))
    except ValueError as exc:
        raise MalformedHeaderError(f"invalid grid: {exc}") from exc

    expected = 4 * n * grid.cell_count
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise TruncatedPayloadError(
            f"payload has {len(payload) - expected} trailing bytes"
        )

    raw = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    m = grid.cell_count
    frames = [Image(grid, raw[k * m : (k + 1) * m]) for k in range(n)]
    return ImageSequence(frames, times)

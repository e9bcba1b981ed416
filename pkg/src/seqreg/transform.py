"""Affine transforms in world coordinates and per-frame transform stacks.

A transform maps x to A x + b.  Its parameter vector is the row-major
flattening of A followed by b (length d^2 + d), and d is 2 or 3.  Because
parameters live in world coordinates, the same transform is valid at
every spatial pyramid level; no parameter transfer between levels is
needed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import Image, cell_centers, sample

__all__ = [
    "Affine",
    "AffineStack",
    "identity_affine",
    "apply_affine",
    "transform_image",
    "affine_inverse",
    "affine_compose",
    "stack_norm",
    "stack_diff_norm",
    "gauge_fix",
    "nonpositive_det_frames",
    "write_stack",
    "read_stack",
]


class Affine:
    """Immutable affine transform: matrix A (d x d) and translation b (d)."""

    __slots__ = ("matrix", "translation")

    def __init__(self, matrix, translation):
        a = np.array(matrix, dtype=np.float64)
        b = np.array(translation, dtype=np.float64).ravel()
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        if b.size != a.shape[0]:
            raise ValueError("translation length must match matrix dimension")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("affine entries must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        self.matrix = a
        self.translation = b

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def params(self) -> np.ndarray:
        """Row-major vec(A) followed by b."""
        return np.concatenate([self.matrix.ravel(), self.translation])

    @classmethod
    def from_params(cls, params, dim: int) -> "Affine":
        p = np.asarray(params, dtype=np.float64).ravel()
        if p.size != dim * dim + dim:
            raise ValueError(f"expected {dim * dim + dim} parameters, got {p.size}")
        return cls(p[: dim * dim].reshape(dim, dim), p[dim * dim :])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Affine):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix) and np.array_equal(
            self.translation, other.translation
        )

    def __repr__(self) -> str:
        return f"Affine(d={self.dim})"


def identity_affine(d: int) -> Affine:
    if d not in (2, 3):
        raise ValueError(f"unsupported dimension {d}, expected 2 or 3")
    return Affine(np.eye(d), np.zeros(d))


def apply_affine(t: Affine, points):
    """Apply x -> A x + b to one point or an (n, d) array of points."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.shape[1] != t.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, transform has {t.dim}")
    out = pts @ t.matrix.T + t.translation
    return out[0] if single else out


def transform_image(img: Image, t: Affine) -> Image:
    """Resample an image under a transform: output(x) = img(A x + b)."""
    if img.grid.ndim != t.dim:
        raise ValueError("image and transform dimensions differ")
    warped = apply_affine(t, cell_centers(img.grid))
    return Image(img.grid, sample(img, warped))


def affine_inverse(t: Affine) -> Affine:
    a_inv = np.linalg.inv(t.matrix)
    return Affine(a_inv, -a_inv @ t.translation)


def affine_compose(outer: Affine, inner: Affine) -> Affine:
    """Composition ``outer o inner``: x -> outer(inner(x))."""
    return Affine(outer.matrix @ inner.matrix, outer.matrix @ inner.translation + outer.translation)


class AffineStack:
    """Per-frame transforms, keyed by 1-based frame index.

    A stack knows the total frame count ``n`` but may hold transforms for
    only a subset of {1..n} (the active frames of a temporal level).
    """

    __slots__ = ("items", "frame_count")

    def __init__(self, items: dict, frame_count: int):
        items = dict(items)
        if frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if not items:
            raise ValueError("stack must hold at least one transform")
        dims = {t.dim for t in items.values()}
        if len(dims) != 1:
            raise ValueError("all transforms must share one dimension")
        for k in items:
            if not 1 <= k <= frame_count:
                raise ValueError(f"frame index {k} outside 1..{frame_count}")
        self.items = items
        self.frame_count = frame_count

    @property
    def dim(self) -> int:
        return next(iter(self.items.values())).dim

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(sorted(self.items))

    def params_matrix(self) -> np.ndarray:
        """Parameter rows in ascending frame order, shape (k, d^2 + d)."""
        return np.array([self.items[k].params for k in self.indices])

    def restrict(self, subset) -> "AffineStack":
        return AffineStack({k: self.items[k] for k in subset}, self.frame_count)

    @classmethod
    def identity(cls, frame_count: int, d: int, indices=None) -> "AffineStack":
        if indices is None:
            indices = range(1, frame_count + 1)
        return cls({k: identity_affine(d) for k in indices}, frame_count)

    @classmethod
    def from_params(cls, rows, indices, frame_count: int, dim: int) -> "AffineStack":
        rows = np.asarray(rows, dtype=np.float64)
        items = {k: Affine.from_params(rows[i], dim) for i, k in enumerate(indices)}
        return cls(items, frame_count)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AffineStack):
            return NotImplemented
        return (
            self.frame_count == other.frame_count
            and self.indices == other.indices
            and all(self.items[k] == other.items[k] for k in self.indices)
        )

    def __repr__(self) -> str:
        return f"AffineStack({len(self.items)}/{self.frame_count} frames, d={self.dim})"


def stack_norm(stack: AffineStack) -> float:
    """Euclidean norm of the concatenated parameter vectors."""
    return float(np.linalg.norm(stack.params_matrix()))


def stack_diff_norm(a: AffineStack, b: AffineStack) -> float:
    """Euclidean norm of the parameter difference over common frame indices."""
    if a.dim != b.dim:
        raise ValueError("stacks have different transform dimensions")
    common = sorted(set(a.items) & set(b.items))
    if not common:
        return 0.0
    diff = np.array([a.items[k].params - b.items[k].params for k in common])
    return float(np.linalg.norm(diff))


def gauge_fix(stack: AffineStack) -> AffineStack:
    """Right-compose every frame with the inverse of frame 1's transform.

    Removes the common-transform ambiguity: the result has the identity at
    frame 1 and is otherwise equivalent up to the shared factor.
    """
    if 1 not in stack.items:
        raise ValueError("gauge fixing needs a transform for frame 1")
    inv1 = affine_inverse(stack.items[1])
    return AffineStack(
        {k: affine_compose(t, inv1) for k, t in stack.items.items()}, stack.frame_count
    )


def nonpositive_det_frames(stack: AffineStack) -> list[int]:
    """Frame indices whose matrix determinant is <= 0 (flagged in reports)."""
    return [k for k in stack.indices if np.linalg.det(stack.items[k].matrix) <= 0.0]


def write_stack(stack: AffineStack, path) -> None:
    """One line per frame: ``k: a11 a12 ... b1 b2 [b3]``, full precision."""
    lines = [
        f"{k}: " + " ".join(repr(float(v)) for v in stack.items[k].params)
        for k in stack.indices
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_stack(path) -> AffineStack:
    items = {}
    for line in Path(path).read_text(encoding="ascii").splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, rest = line.partition(":")
        params = np.array([float(v) for v in rest.split()])
        if params.size == 6:
            d = 2
        elif params.size == 12:
            d = 3
        else:
            raise ValueError(f"line for frame {key}: {params.size} parameters")
        items[int(key)] = Affine.from_params(params, d)
    if not items:
        raise ValueError("empty transform file")
    return AffineStack(items, max(items))

"""Correlation-based groupwise dissimilarity over frame subsets.

Each transformed frame is reduced to a feature vector: its intensities at
all cell centers, mean-centered and normalized to unit length.  The inner
product of two features is the correlation coefficient rho_ij, and the
dissimilarity accumulates the decorrelation over all ordered frame pairs
with trapezoidal time weights:

    D = cell_volume * sum_{i != j} w_i w_j (1 - rho_ij^2)

D is nonnegative, zero exactly when every frame pair is perfectly
(anti)correlated, and invariant under positive affine rescaling of any
frame's intensities.  Constant (zero-variance) frames get a zero feature
vector and are flagged degenerate rather than raising.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .grid import ImageSequence, cell_centers, sample, sample_with_grad
from .transform import AffineStack, apply_affine

__all__ = [
    "CorrelationState",
    "default_time_interval",
    "quad_weights",
    "feature",
    "correlation_state",
    "dissimilarity",
    "dissimilarity_gradient",
    "decompose",
    "min_consecutive_rho",
]

_DEGENERATE_RTOL = 1e-12


def default_time_interval(times) -> tuple[float, float]:
    """Integration interval [a, b] extending half a mean time step beyond
    the first and last sample, so uniform sampling gives equal weights."""
    t = np.asarray(times, dtype=np.float64)
    half = 0.5 * (t[-1] - t[0]) / (len(t) - 1)
    return float(t[0] - half), float(t[-1] + half)


def quad_weights(times, a: float, b: float) -> np.ndarray:
    """Trapezoidal quadrature weights for samples at ``times`` on [a, b].

    w_1 = (t_1 - a) + (t_2 - t_1)/2, interior w_i = (t_{i+1} - t_{i-1})/2,
    w_n = (t_n - t_{n-1})/2 + (b - t_n); the weights sum to b - a.  A
    single sample gets the full mass b - a.
    """
    t = np.asarray(times, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("times must be a nonempty 1-d array")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if a > t[0] or b < t[-1]:
        raise ValueError(f"interval [{a}, {b}] must contain all times")
    if t.size == 1:
        return np.array([b - a])
    w = np.empty(t.size)
    w[0] = (t[0] - a) + 0.5 * (t[1] - t[0])
    w[1:-1] = 0.5 * (t[2:] - t[:-2])
    w[-1] = 0.5 * (t[-1] - t[-2]) + (b - t[-1])
    return w


def feature(intensities) -> tuple[np.ndarray, bool]:
    """Mean-centered, unit-normalized feature vector and a degeneracy flag.

    Nearly constant input (centered norm below a scale-relative threshold)
    yields the zero vector with the flag set.
    """
    v = np.asarray(intensities, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("feature needs at least 2 values")
    centered = v - v.mean()
    norm = np.linalg.norm(centered)
    vmax = np.abs(v).max() if v.size else 0.0
    if norm < _DEGENERATE_RTOL * np.sqrt(v.size) * (1.0 + vmax):
        return np.zeros_like(v), True
    return centered / norm, False


def _validate_subset(stack: AffineStack, subset) -> tuple[int, ...]:
    subset = tuple(int(k) for k in subset)
    if not subset:
        raise ValueError("subset must be nonempty")
    if any(k1 <= k0 for k0, k1 in zip(subset, subset[1:])):
        raise ValueError("subset indices must be strictly increasing")
    missing = [k for k in subset if k not in stack.items]
    if missing:
        raise ValueError(f"stack has no transform for frames {missing}")
    return subset


def _map_frames(fn, keys, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, keys))
    return [fn(k) for k in keys]


@dataclass
class CorrelationState:
    """Features, correlations, and weights of one transformed frame subset.

    features holds one column per subset frame (m cells by k frames), corr
    is the symmetric k x k matrix of pairwise feature inner products, and
    center_norms keeps the pre-normalization centered norms needed by the
    gradient chain rule.
    """

    subset: tuple[int, ...]
    features: np.ndarray
    corr: np.ndarray
    weights: np.ndarray
    cell_volume: float
    degenerate: np.ndarray
    center_norms: np.ndarray


def correlation_state(
    seq: ImageSequence,
    stack: AffineStack,
    subset,
    weights,
    cell_volume: float,
    threads: int = 1,
) -> CorrelationState:
    """Warp the subset frames, extract features, and correlate them."""
    subset = _validate_subset(stack, subset)
    w = np.asarray(weights, dtype=np.float64)
    if w.size != len(subset):
        raise ValueError("one weight per subset frame required")
    centers = cell_centers(seq.grid)

    def warp_and_feature(k):
        vals = sample(seq.frames[k - 1], apply_affine(stack.items[k], centers))
        f, degenerate = feature(vals)
        # the gradient chain rule needs the pre-normalization centered norm
        return f, degenerate, np.linalg.norm(vals - vals.mean())

    results = _map_frames(warp_and_feature, subset, threads)
    features = np.column_stack([f for f, _, _ in results])
    degenerate = np.array([d for _, d, _ in results])
    center_norms = np.array([nrm for _, _, nrm in results])

    corr = features.T @ features
    corr = 0.5 * (corr + corr.T)
    return CorrelationState(
        subset=subset,
        features=features,
        corr=corr,
        weights=w,
        cell_volume=float(cell_volume),
        degenerate=degenerate,
        center_norms=center_norms,
    )


def dissimilarity(state: CorrelationState) -> float:
    """D = cell_volume * sum over ordered pairs i != j of w_i w_j (1 - rho_ij^2).

    Nonnegative by construction; clamped at zero against round-off when all
    pairs are perfectly correlated.
    """
    w = state.weights
    pair_mass = w.sum() ** 2 - (w * w).sum()
    m = np.outer(w, w) * state.corr**2
    coupling = m.sum() - np.trace(m)
    return max(0.0, state.cell_volume * (pair_mass - coupling))


def dissimilarity_gradient(
    state: CorrelationState,
    seq: ImageSequence,
    stack: AffineStack,
    subset,
    threads: int = 1,
) -> np.ndarray:
    """Analytic gradient of :func:`dissimilarity` w.r.t. affine parameters.

    Returns one row per subset frame (ascending index order), each of
    length d^2 + d in the row-major vec(A) ++ b layout.  The chain rule
    runs through feature normalization, multilinear sampling, and the
    affine map; degenerate frames contribute zero rows.
    """
    subset = _validate_subset(stack, subset)
    if subset != state.subset:
        raise ValueError("subset does not match the correlation state")
    d = stack.dim
    n_params = d * d + d
    centers = cell_centers(seq.grid)
    w = state.weights
    scale = state.cell_volume

    def one_frame(j):
        if state.degenerate[j]:
            return np.zeros(n_params)
        k = subset[j]
        f = state.features[:, j]
        # back-propagated feature direction: sum_i w_i rho_ij f_i
        g = state.features @ (w * state.corr[:, j])
        q = g - g.mean() - (f @ g) * f
        q /= state.center_norms[j]
        warped = apply_affine(stack.items[k], centers)
        _, grads = sample_with_grad(seq.frames[k - 1], warped)
        qg = q[:, None] * grads
        grad_a = qg.T @ centers
        grad_b = qg.sum(axis=0)
        return -4.0 * scale * w[j] * np.concatenate([grad_a.ravel(), grad_b])

    rows = _map_frames(one_frame, range(len(subset)), threads)
    return np.array(rows)


def decompose(
    seq: ImageSequence,
    stack: AffineStack,
    weights,
    cell_volume: float,
    inner_subset,
) -> tuple[float, float, float]:
    """Split D over the stack's frames into within/within/cross parts.

    Pairs fully inside ``inner_subset``, pairs fully in the complement,
    and mixed pairs partition the pair set, so the three parts sum to the
    total dissimilarity exactly.
    """
    all_frames = stack.indices
    inner = tuple(sorted(int(k) for k in inner_subset))
    if not inner or set(inner) - set(all_frames):
        raise ValueError("inner subset must be a nonempty subset of the stack's frames")
    if len(inner) == len(all_frames):
        raise ValueError("inner subset must be a proper subset")

    state = correlation_state(seq, stack, all_frames, weights, cell_volume)
    w = state.weights
    terms = np.outer(w, w) * (1.0 - state.corr**2)
    np.fill_diagonal(terms, 0.0)
    mask = np.isin(all_frames, inner)
    d_inner = cell_volume * terms[np.ix_(mask, mask)].sum()
    d_outer = cell_volume * terms[np.ix_(~mask, ~mask)].sum()
    d_mixed = cell_volume * (
        terms[np.ix_(mask, ~mask)].sum() + terms[np.ix_(~mask, mask)].sum()
    )
    return float(d_inner), float(d_outer), float(d_mixed)


def min_consecutive_rho(seq: ImageSequence, stack: AffineStack) -> float:
    """Minimum correlation between consecutive transformed frames."""
    if seq.frame_count < 2:
        raise ValueError("need at least 2 frames")
    centers = cell_centers(seq.grid)
    feats = []
    for k in range(1, seq.frame_count + 1):
        vals = sample(seq.frames[k - 1], apply_affine(stack.items[k], centers))
        feats.append(feature(vals)[0])
    rhos = [float(feats[i] @ feats[i + 1]) for i in range(len(feats) - 1)]
    return min(rhos)

"""Rotary position encodings driven by graph spectral coordinates.

Pairs of embedding entries ``(0, 1), (2, 3), ...`` are rotated by angles
``theta_n = omega_n . r`` where ``r`` is a node's spectral coordinate and
``omega_n`` is row ``n`` of the frequency matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .graph import Graph, connected_components, laplacian
from .rng import Rng, as_rng
from .spectral import Variant, eig_dense, effective_resistance, spectral_features

__all__ = [
    "WireFrequencies",
    "InitScheme",
    "angles",
    "apply_rope_block",
    "apply_rope_fast",
    "rotation_matrix",
    "swap_pairs",
    "relative_angle_property",
    "init_frequencies",
    "theorem2_mc_check",
    "Theorem2Result",
]


@dataclass(frozen=True)
class WireFrequencies:
    """Frequency matrix of shape ``(d/2, m)``; row ``n`` is ``omega_n``."""

    omega: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=np.float64)
        if om.ndim != 2:
            raise ValueError("omega must be a (d/2, m) matrix")
        if not np.all(np.isfinite(om)):
            raise ValueError("omega has non-finite entries")
        object.__setattr__(self, "omega", om)

    @property
    def d(self) -> int:
        return 2 * self.omega.shape[0]

    @property
    def m(self) -> int:
        return self.omega.shape[1]


class InitScheme(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"
    ZERO = "zero"


def angles(freqs: WireFrequencies, r: np.ndarray) -> np.ndarray:
    """Rotation angles ``omega @ r``; ``r`` may carry leading batch axes."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != freqs.m:
        raise ValueError(f"coordinate dimension {r.shape[-1]} != frequency dimension {freqs.m}")
    return r @ freqs.omega.T


def _check_pair(z: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if z.shape[-1] % 2:
        raise ValueError("embedding width must be even")
    if z.shape[-1] != 2 * theta.shape[-1]:
        raise ValueError(f"width {z.shape[-1]} needs {z.shape[-1] // 2} angles, got {theta.shape[-1]}")
    return z, theta


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def apply_rope_block(z: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Reference form: rotate each consecutive pair by its own 2x2 matrix.

    Works on a single vector; the fast form handles batches.
    """
    z, theta = _check_pair(z, theta)
    if z.ndim != 1:
        raise ValueError("block form takes one vector at a time")
    out = np.empty_like(z)
    for n, t in enumerate(theta):
        out[2 * n:2 * n + 2] = rotation_matrix(t) @ z[2 * n:2 * n + 2]
    return out


def swap_pairs(z: np.ndarray) -> np.ndarray:
    """``P z``: swap entries within each consecutive pair."""
    out = np.empty_like(z)
    out[..., 0::2] = z[..., 1::2]
    out[..., 1::2] = z[..., 0::2]
    return out


def apply_rope_fast(z: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """O(d) form: ``cos(theta) * z + [-sin, +sin](theta) * Pz`` (batched)."""
    z, theta = _check_pair(z, theta)
    c = np.repeat(np.cos(theta), 2, axis=-1)
    s = np.repeat(np.sin(theta), 2, axis=-1)
    s[..., 0::2] *= -1.0
    return c * z + s * swap_pairs(z)


def relative_angle_property(freqs: WireFrequencies, r_i, r_j, q, k) -> tuple[float, float]:
    """Both sides of ``(R(r_i) q)^T (R(r_j) k) = q^T R(r_j - r_i) k``."""
    r_i = np.asarray(r_i, dtype=np.float64)
    r_j = np.asarray(r_j, dtype=np.float64)
    lhs = float(apply_rope_fast(q, angles(freqs, r_i)) @ apply_rope_fast(k, angles(freqs, r_j)))
    rhs = float(np.asarray(q, dtype=np.float64) @ apply_rope_fast(k, angles(freqs, r_j - r_i)))
    return lhs, rhs


def init_frequencies(d: int, m: int, scheme: InitScheme | str = InitScheme.GAUSSIAN,
                     rng: Rng | int | None = None, *, scale: float | None = None,
                     base: float = 10000.0, axis: int = 0) -> WireFrequencies:
    """Initial frequency matrix.

    ``gaussian`` draws every entry from ``N(0, scale^2)`` (default
    ``scale = 1/sqrt(m)``); ``exponential`` puts ``base^(-2n/d)`` (``n`` counted
    from zero) in column ``axis`` of row ``n``; ``zero`` disables the rotation.
    """
    if d % 2 or d <= 0:
        raise ValueError("d must be a positive even integer")
    if m < 0:
        raise ValueError("m must be nonnegative")
    scheme = InitScheme(scheme)
    half = d // 2
    if scheme is InitScheme.ZERO or m == 0:
        return WireFrequencies(np.zeros((half, m)))
    if scheme is InitScheme.GAUSSIAN:
        scale = 1.0 / np.sqrt(m) if scale is None else float(scale)
        if scale < 0 or not np.isfinite(scale):
            raise ValueError("Gaussian frequency scale must be finite and nonnegative")
        return WireFrequencies(as_rng(rng).normal(0.0, 1.0, size=(half, m)) * scale)
    if not 0 <= axis < m:
        raise ValueError(f"axis {axis} outside [0, {m})")
    if base <= 0:
        raise ValueError("exponential base must be positive")
    omega = np.zeros((half, m))
    omega[:, axis] = base ** (-2.0 * np.arange(half) / d)
    return WireFrequencies(omega)


@dataclass(frozen=True)
class Theorem2Result:
    mc_mean: float
    predicted: float
    mc_stderr: float
    resistance: float
    exact_expectation: float


def theorem2_mc_check(g: Graph, q, k, i: int, j: int, omega: float, n_samples: int,
                      rng: Rng | int | None = None, chunk: int = 20000) -> Theorem2Result:
    """Monte-Carlo mean of the rotated logit under Gaussian random frequencies.

    Coordinates are the resistance-scaled full nontrivial spectrum, so
    ``||r_i - r_j||^2`` is the effective resistance.  Each sample draws a full
    ``(d/2, N-1)`` frequency matrix with entries ``N(0, omega^2)``, rotates
    ``q`` at node ``i`` and ``k`` at node ``j`` and records their dot product.

    Besides the mean, standard error and the second-order prediction
    ``q.k (1 - omega^2 R / 2)``, the result carries the closed-form
    expectation ``q.k exp(-omega^2 R / 2)`` that Gaussian frequencies admit,
    useful as an independent reference.
    """
    if np.any(connected_components(g) != 0):
        raise ValueError("theorem 2 check needs a connected graph")
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 1 or len(q) % 2:
        raise ValueError("q and k must be equal-length even vectors")
    rng = as_rng(rng)
    L = laplacian(g)
    coords = spectral_features(eig_dense(L, g.n), Variant.RESISTANCE).coords
    r_i, r_j = coords[i], coords[j]
    R = effective_resistance(L, i, j)
    qk = float(q @ k)
    predicted = qk * (1.0 - omega ** 2 * R / 2.0)
    exact = qk * float(np.exp(-omega ** 2 * R / 2.0))
    if omega == 0.0 or i == j:
        return Theorem2Result(qk, predicted, 0.0, R, exact)

    half, m = len(q) // 2, coords.shape[1]
    total = 0.0
    total_sq = 0.0
    done = 0
    for c, sub in enumerate(range(0, n_samples, chunk)):
        b = min(chunk, n_samples - sub)
        W = rng.child(c).normal(0.0, omega, size=(b, half, m))
        th_i = W @ r_i
        th_j = W @ r_j
        vals = np.einsum("bd,bd->b", apply_rope_fast(q, th_i), apply_rope_fast(k, th_j))
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += b
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0) * done / max(done - 1, 1)
    return Theorem2Result(mean, predicted, float(np.sqrt(var / done)), R, exact)

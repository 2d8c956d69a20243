"""Random-feature low-rank factorization of kernel-graph Laplacians.

For a graph whose edge weights are a Gaussian kernel of node positions,
``a_ij = exp(-||v_i - v_j||^2 / (2 sigma^2))``, random Fourier features give
``a_ij ~ feat_i . feat_j``.  Stacking ``sqrt(d_ii)`` one-hots next to the
features gives ``L ~ X Y^T`` with ``X(i) = sqrt(d_ii) e_i (+) feat_i`` and
``Y(i) = sqrt(d_ii) e_i (+) (-feat_i)``.  A shared Gaussian projection then
shrinks both factors to ``p`` columns, and eigenpairs of the ``N x N``
estimate are read off the ``p x p`` matrix ``Yc^T Xc``.

The complex exponential features are realified as ``[cos, sin]`` pairs,
which have the same inner products in expectation.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .rng import Rng, as_rng
from .spectral import Spectrum

__all__ = [
    "Kernel",
    "KernelGraphSpec",
    "FourierFeatures",
    "LaplacianFactors",
    "LowRankSpectrum",
    "DegreeMode",
    "kernel_matrix",
    "exact_laplacian",
    "sample_fourier_features",
    "build_factors",
    "jlt_compress",
    "lowrank_eig",
]

log = logging.getLogger(__name__)


class Kernel(str, enum.Enum):
    GAUSSIAN = "gaussian"


class DegreeMode(str, enum.Enum):
    EXACT = "exact"
    ESTIMATED = "estimated"


@dataclass(frozen=True)
class KernelGraphSpec:
    points: np.ndarray
    sigma: float
    kernel: Kernel = Kernel.GAUSSIAN

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("points must be an (N, dim) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if not self.sigma > 0:
            raise ValueError("kernel bandwidth must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "kernel", Kernel(self.kernel))

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FourierFeatures:
    frequencies: np.ndarray   # (r, dim)
    features: np.ndarray      # (N, 2r)
    C: float = 1.0

    @property
    def r(self) -> int:
        return self.frequencies.shape[0]


@dataclass(frozen=True)
class LaplacianFactors:
    X: np.ndarray
    Y: np.ndarray
    degrees: np.ndarray
    clamped: int = 0
    compressed: bool = False

    def estimate(self) -> np.ndarray:
        return self.X @ self.Y.T

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.X @ (self.Y.T @ v)


@dataclass(frozen=True)
class LowRankSpectrum:
    """Eigenpairs of the factored estimate, sorted by ascending real part.

    Eigenvalues may be complex because ``Yc^T Xc`` is not symmetric.
    ``residuals[k]`` is ``||L_hat v_k - lambda_k v_k||`` against the factored
    operator.  ``used_schur`` flags the fallback for a defective small matrix.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    used_schur: bool = False
    notes: list[str] = field(default_factory=list)

    def to_spectrum(self) -> Spectrum:
        """Real parts, packaged for :func:`spectral_features`."""
        from .spectral import canonicalize_signs

        vals = self.eigenvalues.real.copy()
        U = canonicalize_signs(self.eigenvectors.real)
        norms = np.linalg.norm(U, axis=0)
        U = U / np.where(norms > 0, norms, 1.0)
        radius = float(np.max(np.abs(vals))) if len(vals) else 1.0
        return Spectrum(vals, U, True, radius, self.residuals.copy())


def kernel_matrix(spec: KernelGraphSpec) -> np.ndarray:
    diff = spec.points[:, None, :] - spec.points[None, :, :]
    return np.exp(-np.einsum("ijk,ijk->ij", diff, diff) / (2.0 * spec.sigma ** 2))


def exact_laplacian(spec: KernelGraphSpec) -> np.ndarray:
    """Dense ``D - A`` with ``d_ii = sum_j a_ij`` (the diagonal cancels)."""
    A = kernel_matrix(spec)
    return np.diag(A.sum(axis=1)) - A


def sample_fourier_features(spec: KernelGraphSpec, r: int, rng: Rng | int | None = None) -> FourierFeatures:
    """Draw ``r`` frequencies from the kernel's spectral density.

    For the Gaussian kernel written as ``int exp(-2 pi i w.z) tau(w) dw`` the
    density is ``N(0, (2 pi sigma)^-2 I)`` and ``C = 1``.
    """
    if spec.kernel is not Kernel.GAUSSIAN:
        raise ValueError(f"unsupported kernel {spec.kernel}")
    if r < 1:
        raise ValueError("need at least one random feature")
    rng = as_rng(rng)
    dim = spec.points.shape[1]
    freqs = rng.normal(0.0, 1.0 / (2.0 * np.pi * spec.sigma), size=(r, dim))
    C = 1.0
    phase = 2.0 * np.pi * spec.points @ freqs.T
    feats = np.sqrt(C / r) * np.concatenate([np.cos(phase), np.sin(phase)], axis=1)
    return FourierFeatures(freqs, feats, C)


def build_factors(spec: KernelGraphSpec, feats: FourierFeatures,
                  degrees: DegreeMode | str = DegreeMode.EXACT) -> LaplacianFactors:
    """Assemble ``X`` and ``Y`` (each ``N x (N + 2r)``).

    ``exact`` degrees sum the kernel over all pairs (O(N^2)); ``estimated``
    uses ``feat_i . sum_j feat_j`` (O(N r)).  Negative estimates are clamped
    to zero and counted in ``clamped``.
    """
    degrees = DegreeMode(degrees)
    F = feats.features
    if F.shape[0] != spec.n:
        raise ValueError("features do not match the point set")
    if degrees is DegreeMode.EXACT:
        d = kernel_matrix(spec).sum(axis=1)
        clamped = 0
    else:
        d = F @ F.sum(axis=0)
        clamped = int(np.sum(d < 0))
        if clamped:
            log.warning("clamped %d negative degree estimates to zero", clamped)
        d = np.maximum(d, 0.0)
    diag = np.diag(np.sqrt(d))
    X = np.concatenate([diag, F], axis=1)
    Y = np.concatenate([diag, -F], axis=1)
    return LaplacianFactors(X, Y, d, clamped)


def jlt_compress(factors: LaplacianFactors, p: int, rng: Rng | int | None = None,
                 G: np.ndarray | None = None) -> LaplacianFactors:
    """Project both factors with one shared Gaussian matrix, scaled by ``1/sqrt(p)``.

    Passing ``G`` overrides the random draw (used to pin the projection in tests).
    """
    if p < 1:
        raise ValueError("projection dimension must be positive")
    width = factors.X.shape[1]
    if G is None:
        G = as_rng(rng).normal(size=(width, p))
    elif G.shape != (width, p):
        raise ValueError(f"projection must be {(width, p)}, got {G.shape}")
    s = 1.0 / np.sqrt(p)
    return LaplacianFactors(factors.X @ G * s, factors.Y @ G * s, factors.degrees,
                            factors.clamped, compressed=True)


def lowrank_eig(factors: LaplacianFactors, k: int | None = None) -> LowRankSpectrum:
    """Eigenpairs of ``Xc Yc^T`` from the small matrix ``Yc^T Xc``.

    If ``Yc^T Xc w = lambda w`` then ``Xc Yc^T (Xc w) = lambda (Xc w)``, so
    lifted vectors ``Xc w`` are eigenvectors of the estimate for every
    nonzero ``lambda``.  When the eigenvector matrix is numerically singular
    (defective input) the complex Schur form is used instead and its
    triangular diagonal supplies the eigenvalues.
    """
    Xc, Yc = factors.X, factors.Y
    p = Xc.shape[1]
    k = p if k is None else k
    if not 1 <= k <= p:
        raise ValueError(f"need 1 <= k <= {p}")
    small = Yc.T @ Xc
    notes = []
    used_schur = False
    vals, W = np.linalg.eig(small)
    if not np.all(np.isfinite(W)) or np.linalg.cond(W) > 1e12:
        used_schur = True
        T, Z = scipy.linalg.schur(small.astype(complex), output="complex")
        vals = np.diag(T)
        W = np.empty_like(Z)
        # back-substitute the triangular eigenvectors, then rotate back
        for idx in range(p):
            y = np.zeros(p, dtype=complex)
            y[idx] = 1.0
            for row in range(idx - 1, -1, -1):
                denom = T[row, row] - T[idx, idx]
                rhs = -T[row, row + 1:idx + 1] @ y[row + 1:idx + 1]
                y[row] = rhs / denom if abs(denom) > 1e-14 else 0.0
            W[:, idx] = Z @ y
        notes.append("defective small matrix: eigenvectors from Schur form")
        log.info(notes[-1])
    # a lift Xc w that vanishes (w in the null space of Xc, always present
    # when p exceeds the rank) is not an eigenvector of the estimate
    V = Xc @ W
    norms = np.linalg.norm(V, axis=0)
    scale = np.linalg.norm(Xc, 2) * np.linalg.norm(W, axis=0)
    live = norms > 1e-10 * np.where(scale > 0, scale, 1.0)
    if not np.all(live):
        notes.append(f"dropped {int((~live).sum())} small-matrix eigenpairs whose lifts vanish")
    idx = np.flatnonzero(live)
    order = idx[np.lexsort((vals[idx].imag, vals[idx].real))][:k]
    if len(order) < k:
        notes.append(f"only {len(order)} of {k} requested eigenpairs are available")
    vals = vals[order]
    V = V[:, order] / norms[order]
    if np.all(np.isreal(vals)) and np.allclose(V.imag, 0.0):
        vals, V = vals.real, V.real
    res = np.linalg.norm(Xc @ (Yc.T @ V) - V * vals, axis=0)
    return LowRankSpectrum(vals, V, res, used_schur, notes)

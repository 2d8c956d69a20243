"""Laplacian eigensolvers, spectral node coordinates and effective resistance."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import Rng, as_rng

__all__ = [
    "Spectrum",
    "SpectralCoords",
    "Variant",
    "LanczosConvergenceError",
    "canonicalize_signs",
    "eig_dense",
    "eig_lanczos",
    "spectral_features",
    "effective_resistance",
    "resistance_matrix",
    "eigen_clusters",
    "projector_distance",
]

SYMMETRY_TOL = 1e-12


class Variant(str, enum.Enum):
    RAW = "raw"
    RESISTANCE = "resistance"


class LanczosConvergenceError(RuntimeError):
    def __init__(self, msg: str, residuals: np.ndarray):
        super().__init__(msg)
        self.residuals = residuals


@dataclass(frozen=True)
class Spectrum:
    """The ``m`` lowest eigenpairs of a symmetric PSD operator.

    ``eigenvectors[:, k]`` belongs to ``eigenvalues[k]``.  ``spectral_radius``
    is the solver's estimate of the largest eigenvalue of the whole operator,
    used to scale the zero threshold in :func:`spectral_features`.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sign_canonical: bool = True
    spectral_radius: float = 1.0
    residuals: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]


@dataclass(frozen=True)
class SpectralCoords:
    """Per-node spectral coordinates: row ``i`` is the coordinate of node ``i``."""

    coords: np.ndarray
    variant: Variant
    skip_trivial: bool
    eigenvalues: np.ndarray

    @property
    def m(self) -> int:
        return self.coords.shape[1]

    def permuted(self, perm) -> SpectralCoords:
        """Coordinates after relabelling node ``i`` to ``perm[i]``."""
        perm = np.asarray(perm)
        out = np.empty_like(self.coords)
        out[perm] = self.coords
        return SpectralCoords(out, self.variant, self.skip_trivial, self.eigenvalues)

    def padded(self, m: int) -> np.ndarray:
        """First ``m`` columns, zero-padded when fewer exist."""
        out = np.zeros((self.coords.shape[0], m))
        k = min(m, self.m)
        out[:, :k] = self.coords[:, :k]
        return out

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "variant": self.variant.value,
            "skip_trivial": self.skip_trivial,
            "coords": self.coords.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SpectralCoords:
        coords = np.asarray(d["coords"], dtype=np.float64).reshape(-1, d["m"])
        return cls(coords, Variant(d["variant"]), bool(d.get("skip_trivial", False)),
                   np.asarray(d["eigenvalues"], dtype=np.float64))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def canonicalize_signs(U: np.ndarray, tie_tol: float = 1e-10) -> np.ndarray:
    """Flip columns so the largest-magnitude entry is nonnegative.

    Entries within ``tie_tol`` of the column maximum count as tied; the
    lowest index among them decides.
    """
    U = np.array(U, dtype=np.float64, copy=True)
    if U.size == 0:
        return U
    mags = np.abs(U)
    top = mags.max(axis=0)
    for k in range(U.shape[1]):
        pivot = int(np.flatnonzero(mags[:, k] >= top[k] - tie_tol)[0])
        if U[pivot, k] < 0:
            U[:, k] = -U[:, k]
    return U


def _check_symmetric(L: np.ndarray) -> np.ndarray:
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError("expected a square matrix")
    if L.size and np.max(np.abs(L - L.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(L))):
        raise ValueError("matrix is not symmetric")
    return L


def eig_dense(L: np.ndarray, m: int | None = None) -> Spectrum:
    """Exact lowest ``m`` eigenpairs via LAPACK's symmetric solver."""
    L = _check_symmetric(L)
    n = L.shape[0]
    m = n if m is None else m
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got {m}")
    w, U = np.linalg.eigh(0.5 * (L + L.T))
    U = canonicalize_signs(U[:, :m])
    radius = float(max(abs(w[0]), abs(w[-1])))
    res = np.linalg.norm(L @ U - U * w[:m], axis=0)
    return Spectrum(w[:m].copy(), U, True, radius, res)


def eig_lanczos(
    matvec: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    n: int | None = None,
    m: int = 1,
    tol: float = 1e-10,
    max_iter: int | None = None,
    rng: Rng | int | None = None,
    check_every: int = 4,
) -> Spectrum:
    """Lowest ``m`` eigenpairs of a symmetric operator by Lanczos iteration.

    Every new Krylov vector is orthogonalized against the whole basis (two
    Gram-Schmidt passes), which keeps the basis orthonormal to machine
    precision.  Ritz pairs come from the projected matrix ``Q^T A Q``, so a
    restart after breakdown needs no special handling.  Residuals are exact:
    ``||A y - theta y||`` computed from the stored products ``A Q``.

    A single Krylov sequence sees only one vector per distinct eigenvalue, so
    after the lowest ``m`` Ritz pairs converge a fresh random direction is
    injected and the iteration continues until the wanted Ritz values are
    stable across two consecutive convergence events.  This recovers
    repeated eigenvalues (for example the zero eigenvalue of a disconnected
    graph).

    Raises
    ------
    LanczosConvergenceError
        If ``max_iter`` basis vectors do not suffice; ``.residuals`` holds the
        best residuals reached.
    """
    if isinstance(matvec, np.ndarray):
        mat = _check_symmetric(matvec)
        n = mat.shape[0]
        matvec = mat.__matmul__
    if n is None:
        raise ValueError("operator size n is required for a callable operator")
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got {m}")
    rng = as_rng(rng)
    max_iter = n if max_iter is None else min(max_iter, n)

    Q = np.zeros((n, max_iter))
    AQ = np.zeros((n, max_iter))
    k = 0
    scale = 0.0
    previous: np.ndarray | None = None
    best_res = np.full(m, np.inf)
    extra_needed = 0
    v = rng.normal(size=n)

    def orthonormalize(x):
        for _ in range(2):
            x = x - Q[:, :k] @ (Q[:, :k].T @ x)
        return x

    while k < max_iter:
        v = orthonormalize(v)
        nv = np.linalg.norm(v)
        if nv <= 1e-10 * max(scale, 1.0):
            # invariant subspace reached: restart in the orthogonal complement
            v = orthonormalize(rng.normal(size=n))
            nv = np.linalg.norm(v)
            if nv <= 1e-8:
                break
        q = v / nv
        Q[:, k] = q
        w = np.asarray(matvec(q), dtype=np.float64)
        AQ[:, k] = w
        k += 1
        scale = max(scale, float(np.linalg.norm(w)))
        v = w
        if k < m or (k % check_every and k < max_iter):
            continue

        H = Q[:, :k].T @ AQ[:, :k]
        theta, S = np.linalg.eigh(0.5 * (H + H.T))
        Y = Q[:, :k] @ S[:, :m]
        R = AQ[:, :k] @ S[:, :m] - Y * theta[:m]
        res = np.linalg.norm(R, axis=0)
        best_res = np.minimum(best_res, res)
        thresh = tol * max(1.0, scale)
        if k == n or np.all(res <= thresh):
            stable = previous is not None and np.all(np.abs(theta[:m] - previous) <= thresh)
            if k == n or (stable and extra_needed <= 0):
                U = canonicalize_signs(Y)
                return Spectrum(theta[:m].copy(), U, True, float(max(abs(theta[0]), abs(theta[-1]))), res)
            if previous is None or not stable:
                previous = theta[:m].copy()
                extra_needed = m + 8
                v = rng.normal(size=n)
                continue
        if previous is not None:
            extra_needed -= check_every

    raise LanczosConvergenceError(
        f"Lanczos did not converge within {max_iter} basis vectors", best_res
    )


def spectral_features(
    spec: Spectrum,
    variant: Variant | str = Variant.RAW,
    skip_trivial: bool = True,
    zero_tol: float | None = None,
) -> SpectralCoords:
    """Turn eigenpairs into per-node coordinates.

    ``raw`` keeps eigenvector entries ``u_k[i]``; ``skip_trivial`` drops the
    first (lowest) column.  ``resistance`` keeps ``u_k[i] / sqrt(lambda_k)`` over
    the eigenvalues above ``zero_tol`` only.  The default ``zero_tol`` is
    ``1e-8`` times the operator's spectral radius.
    """
    variant = Variant(variant)
    lam = np.asarray(spec.eigenvalues, dtype=np.float64)
    U = np.asarray(spec.eigenvectors, dtype=np.float64)
    if zero_tol is None:
        zero_tol = 1e-8 * max(spec.spectral_radius, 1e-300)
    if variant is Variant.RAW:
        start = 1 if skip_trivial else 0
        return SpectralCoords(U[:, start:].copy(), variant, skip_trivial, lam[start:].copy())
    keep = lam >= zero_tol
    if not np.any(keep):
        raise ValueError("resistance-scaled features need at least one nonzero eigenvalue")
    coords = U[:, keep] / np.sqrt(lam[keep])
    return SpectralCoords(coords, variant, True, lam[keep].copy())


def _components_from_laplacian(L: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    labels = -np.ones(n, dtype=np.int64)
    comp = 0
    for s in range(n):
        if labels[s] >= 0:
            continue
        stack = [s]
        labels[s] = comp
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(L[u] != 0):
                if labels[v] < 0:
                    labels[v] = comp
                    stack.append(v)
        comp += 1
    return labels


def resistance_matrix(L: np.ndarray, zero_tol: float | None = None) -> np.ndarray:
    """All-pairs ``L+_ii + L+_jj - 2 L+_ij``; pairs in different components are ``inf``."""
    L = _check_symmetric(L)
    w, U = np.linalg.eigh(L)
    if zero_tol is None:
        zero_tol = 1e-8 * max(1.0, abs(w[-1]))
    keep = w > zero_tol
    pinv = (U[:, keep] / w[keep]) @ U[:, keep].T
    diag = np.diag(pinv)
    R = diag[:, None] + diag[None, :] - 2.0 * pinv
    R = np.maximum(R, 0.0)
    np.fill_diagonal(R, 0.0)
    labels = _components_from_laplacian(L)
    R[labels[:, None] != labels[None, :]] = np.inf
    return R


def effective_resistance(L: np.ndarray, i: int, j: int) -> float:
    """Effective resistance between nodes ``i`` and ``j`` of the Laplacian ``L``."""
    L = _check_symmetric(L)
    n = L.shape[0]
    for x in (i, j):
        if not 0 <= x < n:
            raise IndexError(f"node {x} out of range")
    if i == j:
        return 0.0
    labels = _components_from_laplacian(L)
    if labels[i] != labels[j]:
        raise ValueError(f"nodes {i} and {j} lie in different components; resistance is infinite")
    w, U = np.linalg.eigh(L)
    keep = w > 1e-8 * max(1.0, abs(w[-1]))
    diff = U[i, keep] - U[j, keep]
    return float(np.sum(diff * diff / w[keep]))


def eigen_clusters(eigenvalues: np.ndarray, gap: float = 1e-6) -> list[np.ndarray]:
    """Group sorted eigenvalue indices whose neighbours are closer than ``gap``."""
    lam = np.asarray(eigenvalues)
    groups, current = [], [0]
    for k in range(1, len(lam)):
        if lam[k] - lam[k - 1] <= gap * max(1.0, abs(lam[k])):
            current.append(k)
        else:
            groups.append(np.array(current))
            current = [k]
    groups.append(np.array(current))
    return groups


def projector_distance(U1: np.ndarray, U2: np.ndarray, eigenvalues: np.ndarray,
                       gap: float = 1e-6, complete_only: bool = True) -> float:
    """Largest spectral-norm gap between per-cluster projectors ``U_c U_c^T``.

    With ``complete_only`` the last cluster is skipped when it may have been
    cut by truncation (its size cannot be certified from ``m`` pairs alone).
    """
    clusters = eigen_clusters(eigenvalues, gap)
    if complete_only and len(clusters) > 1:
        clusters = clusters[:-1]
    worst = 0.0
    for c in clusters:
        P1 = U1[:, c] @ U1[:, c].T
        P2 = U2[:, c] @ U2[:, c].T
        worst = max(worst, float(np.linalg.norm(P1 - P2, 2)))
    return worst

"""Single-head softmax and linear attention, with and without WIRE rotations."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .rope import WireFrequencies, angles, apply_rope_fast
from .spectral import SpectralCoords

__all__ = [
    "AttentionBatch",
    "FeatureMap",
    "PerformerMode",
    "ZeroDenominatorError",
    "DenominatorSignError",
    "AuxMemory",
    "softmax_attention",
    "linear_attention",
    "wire_performer",
    "wire_softmax",
    "attention_scores_dump",
    "feature_map",
    "DENOMINATOR_EPS",
]

DENOMINATOR_EPS = 1e-6


class FeatureMap(str, enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"


class PerformerMode(str, enum.Enum):
    ROTATE_QK = "rotate_qk"
    ROTATE_FEATURES = "rotate_features"


class ZeroDenominatorError(ZeroDivisionError):
    def __init__(self, row: int):
        super().__init__(f"linear attention denominator is zero at row {row}")
        self.row = row


class DenominatorSignError(ArithmeticError):
    """Rotated features produced a negative normalizer."""

    def __init__(self, rows):
        rows = [int(r) for r in rows]
        super().__init__(f"rotated-feature attention normalizer is negative at rows {rows[:10]}")
        self.rows = rows


@dataclass(frozen=True)
class AttentionBatch:
    """Queries, keys and values for ``N`` tokens of width ``d``.

    ``angles``, when given, holds one row of ``d/2`` rotation angles per token.
    """

    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    angles: np.ndarray | None = None

    def __post_init__(self):
        Q, K, V = (np.asarray(x, dtype=np.float64) for x in (self.Q, self.K, self.V))
        if Q.ndim != 2 or Q.shape != K.shape or V.ndim != 2 or V.shape[0] != Q.shape[0]:
            raise ValueError("Q and K must be N x d and V must have N rows")
        if Q.shape[0] == 0:
            raise ValueError("attention over zero tokens")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "V", V)
        if self.angles is not None:
            a = np.asarray(self.angles, dtype=np.float64)
            if Q.shape[1] % 2 or a.shape != (Q.shape[0], Q.shape[1] // 2):
                raise ValueError("angles must be N x d/2 with d even")
            object.__setattr__(self, "angles", a)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def permuted(self, perm) -> AttentionBatch:
        """Token ``i`` moves to position ``perm[i]``."""
        inv = np.argsort(perm)
        return AttentionBatch(self.Q[inv], self.K[inv], self.V[inv],
                              None if self.angles is None else self.angles[inv])


class AuxMemory:
    """Tracks the float count of scratch buffers held by a streaming routine."""

    def __init__(self):
        self.current = 0
        self.peak = 0

    def hold(self, *arrays):
        self.current += sum(int(a.size) for a in arrays)
        self.peak = max(self.peak, self.current)

    def release(self, *arrays):
        self.current -= sum(int(a.size) for a in arrays)


def feature_map(x: np.ndarray, fmap: FeatureMap | str) -> np.ndarray:
    fmap = FeatureMap(fmap)
    if fmap is FeatureMap.RELU:
        return np.maximum(x, 0.0)
    return x


def _guard(den: np.ndarray, fmap: FeatureMap) -> np.ndarray:
    return den + DENOMINATOR_EPS if fmap is FeatureMap.RELU else den


def softmax_attention(batch: AttentionBatch) -> np.ndarray:
    """``softmax(Q K^T) V`` row by row, stabilized by the row maximum."""
    return attention_scores_dump(batch) @ batch.V


def attention_scores_dump(batch: AttentionBatch, freqs: WireFrequencies | None = None,
                          coords: SpectralCoords | np.ndarray | None = None) -> np.ndarray:
    """Explicit ``N x N`` post-softmax scores, optionally after WIRE rotation."""
    Q, K = batch.Q, batch.K
    if freqs is not None:
        Q, K = _rotate_qk(batch, freqs, coords)
    logits = Q @ K.T
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def _stream(phi_q_rows, phi_k_rows, V: np.ndarray, fmap: FeatureMap, chunk: int,
            memory: AuxMemory | None, check_sign: bool) -> np.ndarray:
    """Shared streaming pass; the ``phi_*_rows`` callables map a row slice to features."""
    n, dv = V.shape
    memory = memory if memory is not None else AuxMemory()
    S = None
    s = None
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        fk = phi_k_rows(sl)
        memory.hold(fk)
        if S is None:
            S = np.zeros((fk.shape[1], dv))
            s = np.zeros(fk.shape[1])
            memory.hold(S, s)
        S += fk.T @ V[sl]
        s += fk.sum(axis=0)
        memory.release(fk)

    out = np.empty((n, dv))
    bad_sign = []
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        fq = phi_q_rows(sl)
        memory.hold(fq)
        raw = fq @ s
        if check_sign:
            bad_sign.extend(np.flatnonzero(raw < 0) + start)
        den = _guard(raw, fmap)
        zero = np.flatnonzero(den == 0)
        if len(zero):
            raise ZeroDenominatorError(int(zero[0]) + start)
        out[sl] = (fq @ S) / den[:, None]
        memory.release(fq)
    memory.release(S, s)
    if bad_sign:
        raise DenominatorSignError(bad_sign)
    return out


def linear_attention(batch: AttentionBatch, fmap: FeatureMap | str = FeatureMap.RELU,
                     chunk: int = 64, memory: AuxMemory | None = None) -> np.ndarray:
    """Linear attention in one streaming pass over keys, then one over queries.

    Row ``i`` is ``phi(q_i)^T S / (phi(q_i)^T s)`` with ``S = sum_j phi(k_j) v_j^T``
    and ``s = sum_j phi(k_j)``.  Scratch memory is ``S``, ``s`` and one chunk of
    features; nothing of size ``N x N`` is formed.  ReLU denominators get
    ``DENOMINATOR_EPS`` added.
    """
    fmap = FeatureMap(fmap)
    return _stream(lambda sl: feature_map(batch.Q[sl], fmap),
                   lambda sl: feature_map(batch.K[sl], fmap),
                   batch.V, fmap, chunk, memory, check_sign=False)


def _coord_array(coords: SpectralCoords | np.ndarray, n: int) -> np.ndarray:
    r = coords.coords if isinstance(coords, SpectralCoords) else np.asarray(coords, dtype=np.float64)
    if r.shape[0] != n:
        raise ValueError(f"coordinates have {r.shape[0]} rows for {n} tokens")
    return r


def _rotate_qk(batch: AttentionBatch, freqs: WireFrequencies, coords) -> tuple[np.ndarray, np.ndarray]:
    if batch.Q.shape[1] != freqs.d:
        raise ValueError(f"frequencies are for width {freqs.d}, tokens have width {batch.Q.shape[1]}")
    theta = angles(freqs, _coord_array(coords, batch.n))
    return apply_rope_fast(batch.Q, theta), apply_rope_fast(batch.K, theta)


def wire_performer(batch: AttentionBatch, fmap: FeatureMap | str, freqs: WireFrequencies,
                   coords: SpectralCoords | np.ndarray,
                   mode: PerformerMode | str = PerformerMode.ROTATE_QK,
                   chunk: int = 64, memory: AuxMemory | None = None) -> np.ndarray:
    """Linear attention with WIRE.

    ``rotate_qk`` rotates queries and keys before the feature map, so ReLU
    scores stay nonnegative.  ``rotate_features`` rotates the features
    themselves, keeping the relative form of the scores but allowing negative
    normalizers, which raise :class:`DenominatorSignError`.
    """
    fmap = FeatureMap(fmap)
    mode = PerformerMode(mode)
    if batch.Q.shape[1] % 2:
        raise ValueError("WIRE needs an even width")
    if mode is PerformerMode.ROTATE_QK:
        Q, K = _rotate_qk(batch, freqs, coords)
        return linear_attention(AttentionBatch(Q, K, batch.V), fmap, chunk, memory)
    if freqs.d != batch.Q.shape[1]:
        raise ValueError("feature width must match the frequency width")
    theta = angles(freqs, _coord_array(coords, batch.n))
    return _stream(lambda sl: apply_rope_fast(feature_map(batch.Q[sl], fmap), theta[sl]),
                   lambda sl: apply_rope_fast(feature_map(batch.K[sl], fmap), theta[sl]),
                   batch.V, fmap, chunk, memory, check_sign=True)


def wire_softmax(batch: AttentionBatch, freqs: WireFrequencies,
                 coords: SpectralCoords | np.ndarray) -> np.ndarray:
    """Rotate each token's query and key by its WIRE angles, then softmax attention."""
    Q, K = _rotate_qk(batch, freqs, coords)
    return softmax_attention(AttentionBatch(Q, K, batch.V))

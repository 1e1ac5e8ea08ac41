"""Complex multilinear algebra used by the characteristic-tensor model.

Conventions shared by every module:

* Factor matrices have shape ``(2K+1, F)``; frequency ``k`` in ``[-K, K]``
  lives at row ``k + K``, so the zero frequency is row ``K``.
* ``khatri_rao(A, B)`` puts row ``i*J + j`` at ``A[i] * B[j]``: the second
  operand's index varies fastest.
* ``mode1_unfold`` of a 3-way tensor ``T[i, j, l]`` has row ``l*J + j``, which
  lines up with ``khatri_rao(A_l, A_j)`` so that

      mode1_unfold(T) == khatri_rao(A_l, A_j) @ diag(lam) @ A_i.T
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionError


def frequency_offset(k: int, K: int) -> int:
    """Storage row of frequency ``k`` in a factor with cutoff ``K``."""
    if abs(k) > K:
        raise IndexError(f"frequency {k} outside [-{K}, {K}]")
    return k + K


def frequencies(K: int) -> np.ndarray:
    """Integer frequencies ``-K..K`` in storage order."""
    return np.arange(-K, K + 1)


def cutoff_of(factor: np.ndarray) -> int:
    rows = factor.shape[0]
    if rows % 2 != 1:
        raise DimensionError(f"factor has {rows} rows; expected an odd count 2K+1")
    return (rows - 1) // 2


def khatri_rao(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product of ``A`` (I x F) and ``B`` (J x F)."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2:
        raise DimensionError("khatri_rao expects two matrices")
    if A.shape[1] != B.shape[1]:
        raise DimensionError(
            f"column counts differ: {A.shape[1]} vs {B.shape[1]}"
        )
    return (A[:, None, :] * B[None, :, :]).reshape(-1, A.shape[1])


def khatri_rao_chain(mats: Sequence[np.ndarray], F: int | None = None) -> np.ndarray:
    """``mats[0] ⊙ mats[1] ⊙ ...``; an empty chain is a 1 x F row of ones."""
    if not mats:
        if F is None:
            raise DimensionError("empty Khatri-Rao chain needs an explicit column count")
        return np.ones((1, F))
    out = np.asarray(mats[0])
    for m in mats[1:]:
        out = khatri_rao(out, m)
    return out


def mode1_unfold(T: np.ndarray) -> np.ndarray:
    """Mode-1 unfolding of a 3-way tensor, shape ``(J*L, I)``."""
    T = np.asarray(T)
    if T.ndim != 3:
        raise DimensionError(f"expected a 3-way tensor, got {T.ndim} axes")
    I, J, L = T.shape
    return T.transpose(2, 1, 0).reshape(L * J, I)


def mode1_fold(M: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`mode1_unfold`."""
    I, J, L = shape
    M = np.asarray(M)
    if M.shape != (J * L, I):
        raise DimensionError(f"cannot fold {M.shape} into {shape}")
    return M.reshape(L, J, I).transpose(2, 1, 0)


def unfold(T: np.ndarray, mode: int) -> np.ndarray:
    """Unfold a tensor of order <= 3 with ``mode`` in the column role.

    The remaining modes keep ascending order with the earliest varying
    fastest, so the row space matches ``khatri_rao_chain`` of the other
    factors taken in *descending* mode order. For a 3-way tensor and
    ``mode=0`` this is exactly :func:`mode1_unfold`.
    """
    T = np.asarray(T)
    if T.ndim > 3:
        raise DimensionError("unfoldings are only defined up to order 3")
    others = [a for a in range(T.ndim) if a != mode]
    if T.ndim == 3 and mode == 0:
        return mode1_unfold(T)
    moved = T.transpose(others[::-1] + [mode])
    return moved.reshape(-1, T.shape[mode])


def synthesize(weights: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """Full tensor ``sum_h w[h] * A_1[:, h] o A_2[:, h] o ...``."""
    weights = np.asarray(weights)
    F = weights.shape[0]
    for A in factors:
        if A.shape[1] != F:
            raise DimensionError("factor column count does not match weights")
    out = weights.astype(complex)
    shape: tuple[int, ...] = ()
    for A in factors:
        out = out.reshape(-1, 1, F) * A[None, :, :]
        shape += (A.shape[0],)
        out = out.reshape(-1, F)
    return out.sum(axis=1).reshape(shape) if factors else out.sum()


def cpd_entry(weights: np.ndarray, factors: Sequence[np.ndarray], k: Sequence[int]) -> complex:
    """Single tensor entry at integer frequencies ``k`` without materializing."""
    weights = np.asarray(weights)
    if len(k) != len(factors):
        raise DimensionError(f"{len(k)} frequencies for {len(factors)} factors")
    if factors and weights.shape[0] != factors[0].shape[1]:
        raise DimensionError("weights length does not match factor columns")
    prod = weights.astype(complex)
    for A, kn in zip(factors, k):
        K = cutoff_of(A)
        prod = prod * A[frequency_offset(int(kn), K)]
    return complex(prod.sum())


def cpd_synthesize_triple(model, i: int, j: int, l: int) -> np.ndarray:
    """Characteristic tensor of variables ``(i, j, l)`` implied by ``model``."""
    N = len(model.factors)
    if not (0 <= i < j < l < N):
        raise ValueError(f"triple ({i}, {j}, {l}) must be strictly increasing within [0, {N})")
    return np.einsum(
        "h,ah,bh,ch->abc",
        model.weights,
        model.factors[i],
        model.factors[j],
        model.factors[l],
    )

"""Turning a fitted characteristic-tensor model back into densities.

Every routine works through per-variable inner sums

    S_n(x)[h] = sum_k A_n(k, h) exp(-j 2 pi k x),

i.e. the conditional density of variable ``n`` given latent class ``h``.
A variable that is not observed contributes a factor of one, which is
exactly marginalization because each conditional density integrates to its
zero-frequency coefficient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ecf import Dataset, ScalingRecord
from .errors import InsufficientDataError, LowEvidenceWarning
from .factorization import CpdModel
from .tensor_core import frequencies

LOG_FLOOR = 1e-12
EVIDENCE_FLOOR = 1e-12


def basis(x, K: int) -> np.ndarray:
    """``exp(-j 2 pi k x)`` for ``k = -K..K``; shape ``(len(x), 2K+1)``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return np.exp(-2j * np.pi * np.outer(x, frequencies(K)))


def conditional_terms(model: CpdModel, X: np.ndarray) -> np.ndarray:
    """Per-point, per-class product of conditional densities over observed cells.

    ``X`` is ``(P, N)`` in normalized coordinates with NaN for cells to be
    marginalized out. Returns a complex ``(P, F)`` array.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    prod = np.ones((X.shape[0], model.F), dtype=complex)
    for n, A in enumerate(model.factors):
        obs = np.isfinite(X[:, n])
        if obs.any():
            prod[obs] *= basis(X[obs, n], model.K) @ A
    return prod


def _to_normalized(model: CpdModel, X: np.ndarray, space: str):
    """Normalize (and clamp) raw points; returns ``(Z, log_jacobian, n_clamped)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.N:
        raise ValueError(f"points have {X.shape[1]} coordinates, model has N={model.N}")
    obs = np.isfinite(X)
    if space == "normalized":
        return X, np.zeros(X.shape[0]), 0
    if space != "raw":
        raise ValueError("space must be 'raw' or 'normalized'")
    scaling = model.scaling or ScalingRecord.identity(model.N)
    Z = scaling.forward(X)
    outside = obs & ((Z < 0.0) | (Z > 1.0))
    Z = np.where(obs, np.clip(Z, 0.0, 1.0), np.nan)
    log_jac = (obs * np.log(scaling.scale)).sum(axis=1)
    return Z, log_jac, int(outside.sum())


def signed_density(model: CpdModel, X, space: str = "normalized") -> np.ndarray:
    """Complex model density before taking the real part or clamping."""
    Z, log_jac, _ = _to_normalized(model, X, space)
    return (conditional_terms(model, Z) @ model.weights) * np.exp(log_jac)


def pdf_eval(model: CpdModel, x, space: str = "normalized"):
    """Density at one point (length-N vector) or many points (P x N).

    The real part is taken and negative values are clamped to zero. In raw
    space the normalization Jacobian is included. NaN coordinates are
    marginalized out.
    """
    x = np.asarray(x, dtype=float)
    values = np.maximum(signed_density(model, x, space).real, 0.0)
    return float(values[0]) if x.ndim == 1 else values


@dataclass
class LikelihoodReport:
    mean: float
    n_rows: int
    clamped_cells: int
    floored_rows: int
    negative_rows: int
    per_row: np.ndarray

    def summary(self) -> str:
        return (
            f"average log-likelihood: {self.mean:.10g}\n"
            f"rows: {self.n_rows}\n"
            f"clamped cells: {self.clamped_cells}\n"
            f"rows at log floor: {self.floored_rows}\n"
            f"rows with negative model density: {self.negative_rows}"
        )


def log_likelihood(model: CpdModel, data: Dataset, space: str = "raw",
                   floor: float = LOG_FLOOR) -> LikelihoodReport:
    """Average log density per row; rows with gaps use their observed marginal."""
    if data.n_obs == 0:
        raise InsufficientDataError("cannot score an empty dataset")
    keep = data.mask.any(axis=1)
    if not keep.any():
        raise InsufficientDataError("every row is fully missing")
    X = np.where(data.mask, data.values, np.nan)[keep]
    Z, log_jac, clamped = _to_normalized(model, X, space)
    dens = (conditional_terms(model, Z) @ model.weights).real
    negative = int((dens < 0).sum())
    floored = int((dens < floor).sum())
    per_row = np.log(np.maximum(dens, floor)) + log_jac
    return LikelihoodReport(float(per_row.mean()), int(keep.sum()), clamped, floored, negative, per_row)


def marginal_model(model: CpdModel, keep: Sequence[int]) -> CpdModel:
    """Model of the kept variables: drop the other factors, keep the weights."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep must name at least one variable")
    if len(set(keep)) != len(keep) or min(keep) < 0 or max(keep) >= model.N:
        raise ValueError(f"invalid variable selection {keep} for N={model.N}")
    scaling = model.scaling.subset(keep) if model.scaling is not None else None
    return CpdModel(model.weights.copy(), [model.factors[n].copy() for n in keep], scaling)


def mean_coefficients(K: int) -> np.ndarray:
    """``c_k = integral_0^1 x exp(-j 2 pi k x) dx`` for ``k = -K..K``.

    For integer ``k != 0`` this reduces to ``1 / (-j 2 pi k)``; ``c_0 = 1/2``.
    """
    k = frequencies(K).astype(float)
    out = np.empty(k.shape, dtype=complex)
    nz = k != 0
    a = -2j * np.pi * k[nz]
    out[nz] = np.exp(a) / a + (1.0 - np.exp(a)) / a**2
    out[~nz] = 0.5
    return out


def conditional_means(model: CpdModel, X, target: int, space: str = "raw") -> np.ndarray:
    """``E[X_target | observed cells of each row]`` for a batch of rows.

    Cells that are NaN (and the target column itself) are integrated out.
    """
    X = np.atleast_2d(np.array(X, dtype=float))
    if not 0 <= target < model.N:
        raise ValueError(f"target {target} out of range for N={model.N}")
    X[:, target] = np.nan
    Z, _, _ = _to_normalized(model, X, space)
    terms = conditional_terms(model, Z) * model.weights
    num = terms @ (mean_coefficients(model.K) @ model.factors[target])
    den = terms.sum(axis=1)
    low = den.real < EVIDENCE_FLOOR
    if low.any():
        warnings.warn(
            f"{int(low.sum())} row(s) have conditioning density below {EVIDENCE_FLOOR}; "
            "predictions there are unreliable",
            LowEvidenceWarning,
            stacklevel=2,
        )
        den = np.where(low, EVIDENCE_FLOOR, den)
    z = (num / den).real
    if space == "raw" and model.scaling is not None:
        s = model.scaling
        return (z - s.shift[target]) / s.scale[target]
    return z


def conditional_mean(model: CpdModel, x, target: int, space: str = "raw") -> float:
    """Conditional mean of one variable given the other coordinates of ``x``.

    ``x`` is a length-N vector; its target entry is ignored and NaN entries
    are marginalized out.
    """
    return float(conditional_means(model, np.asarray(x, dtype=float)[None, :], target, space)[0])


def impute(model: CpdModel, X, targets: Sequence[int], space: str = "raw") -> np.ndarray:
    """Predict each target as its conditional mean given the non-target cells.

    Other targets are marginalized out for every prediction. Returns shape
    ``(P, len(targets))`` (or ``(len(targets),)`` for a single row).
    """
    targets = list(targets)
    if not targets:
        raise ValueError("at least one target is required")
    X = np.array(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    X[:, targets] = np.nan
    out = np.column_stack([conditional_means(model, X, t, space) for t in targets])
    return out[0] if single else out

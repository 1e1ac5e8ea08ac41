"""Coupled constrained complex CPD of empirical characteristic tensors.

Block coordinate descent: each factor ``A_n`` is refit by an exact least
squares solve over every block that contains ``n`` (the zero-frequency row
is pinned to ones), then the mixture weights are refit by ADMM under a
probability-simplex constraint.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ecf import (
    DEFAULT_MIN_COUNT,
    DEFAULT_MIN_COVER,
    DEFAULT_PAD,
    Dataset,
    ScalingRecord,
    TripleCf,
    estimate_blocks,
    normalize,
    variable_blocks,
)
from .errors import (
    CoverageError,
    DimensionError,
    DivergenceError,
    FitWarning,
    IllConditionedError,
)
from .tensor_core import khatri_rao_chain, synthesize, unfold


@dataclass
class CpdModel:
    """Rank-F model ``[[weights; A_1, ..., A_N]]`` of the characteristic tensor.

    ``weights`` are the latent class probabilities and column ``h`` of
    ``factors[n]`` holds the conditional characteristic function of variable
    ``n`` given class ``h`` at frequencies ``-K..K``.
    """

    weights: np.ndarray
    factors: list[np.ndarray]
    scaling: ScalingRecord | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.factors = [np.asarray(A, dtype=complex) for A in self.factors]
        if not self.factors:
            raise DimensionError("a model needs at least one factor")
        shape = self.factors[0].shape
        for A in self.factors:
            if A.ndim != 2 or A.shape != shape:
                raise DimensionError("all factors must share one (2K+1) x F shape")
        if shape[0] % 2 != 1 or shape[1] != self.weights.shape[0]:
            raise DimensionError("factor shape inconsistent with weights")
        if self.scaling is not None and len(self.scaling) != len(self.factors):
            raise DimensionError("scaling record length differs from N")

    @property
    def N(self) -> int:
        return len(self.factors)

    @property
    def F(self) -> int:
        return self.weights.shape[0]

    @property
    def K(self) -> int:
        return (self.factors[0].shape[0] - 1) // 2

    @classmethod
    def uniform(cls, N: int, K: int, scaling=None) -> "CpdModel":
        """Rank-1 model of the uniform density on the unit hypercube."""
        A = np.zeros((2 * K + 1, 1), dtype=complex)
        A[K] = 1.0
        return cls(np.ones(1), [A.copy() for _ in range(N)], scaling)

    def copy(self) -> "CpdModel":
        return CpdModel(self.weights.copy(), [A.copy() for A in self.factors], self.scaling)

    def constraint_violations(self, tol: float = 1e-12) -> list[str]:
        problems = []
        if np.any(self.weights < 0):
            problems.append("negative mixture weight")
        if abs(self.weights.sum() - 1.0) > tol:
            problems.append(f"mixture weights sum to {self.weights.sum()!r}")
        K = self.K
        for n, A in enumerate(self.factors):
            if not np.all(A[K] == 1.0):
                problems.append(f"zero-frequency row of factor {n} is not all ones")
            if not np.all(np.isfinite(A)):
                problems.append(f"factor {n} has non-finite entries")
        return problems


@dataclass
class FitOptions:
    rank: int
    harmonics: int
    max_outer_iters: int = 200
    rel_tol: float = 1e-6
    admm_iters: int = 50
    admm_rho: float | None = None  # None: trace(G) / F
    ridge: float = 1e-10
    triple_budget: int | None = None
    min_count: int = DEFAULT_MIN_COUNT
    min_cover: int = DEFAULT_MIN_COVER
    seed: int = 0
    restarts: int = 3
    pad: float = DEFAULT_PAD
    bounds: object = None
    weight_by_count: bool = False
    track_steps: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.harmonics < 1:
            raise ValueError("harmonics must be >= 1")
        if not (self.rel_tol > 0 and self.ridge > 0):
            raise ValueError("tolerances must be positive")
        if self.max_outer_iters < 1 or self.admm_iters < 1 or self.restarts < 1:
            raise ValueError("iteration counts must be >= 1")


@dataclass
class FitReport:
    objective_trajectory: list[float]
    iterations: int
    wall_time: float
    converged: bool
    triple_residuals: dict[tuple[int, ...], float]
    identifiability: str
    dropped_triples: list[tuple[int, ...]] = field(default_factory=list)
    restart_objectives: list[float] = field(default_factory=list)
    # (label, objective) after each block step; filled when track_steps is set
    steps: list[tuple[str, float]] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.objective_trajectory[-1]

    def summary(self) -> str:
        lines = [
            f"iterations: {self.iterations}",
            f"converged: {'yes' if self.converged else 'no'}",
            f"wall time: {self.wall_time:.3f} s",
            f"initial objective: {self.objective_trajectory[0]:.10g}",
            f"final objective: {self.final_objective:.10g}",
            f"identifiability advisory: {self.identifiability}",
        ]
        if len(self.restart_objectives) > 1:
            lines.append("restart objectives: " + " ".join(f"{v:.6g}" for v in self.restart_objectives))
        for block in self.dropped_triples:
            lines.append(f"warning: dropped block {block} (insufficient joint observations)")
        lines.append("objective trajectory:")
        lines.extend(f"  {i:4d} {v:.10g}" for i, v in enumerate(self.objective_trajectory))
        return "\n".join(lines)


def _block_weights(triples: Sequence[TripleCf], by_count: bool) -> np.ndarray:
    if not by_count:
        return np.ones(len(triples))
    counts = np.array([t.count for t in triples], dtype=float)
    return counts / counts.mean()


def _check_K(triples: Sequence[TripleCf], model: CpdModel) -> None:
    for t in triples:
        if t.tensor.shape != (2 * model.K + 1,) * len(t.variables):
            raise DimensionError(
                f"block {t.variables} has shape {t.tensor.shape}, model has K={model.K}"
            )
        if t.variables[-1] >= model.N:
            raise DimensionError(f"block {t.variables} refers past N={model.N}")


def block_residual(t: TripleCf, model: CpdModel) -> float:
    fit = synthesize(model.weights, [model.factors[v] for v in t.variables])
    return float(np.sum(np.abs(t.tensor - fit) ** 2))


def objective(triples: Sequence[TripleCf], model: CpdModel, block_weights=None) -> float:
    """Sum of squared Frobenius residuals over the retained blocks."""
    _check_K(triples, model)
    w = np.ones(len(triples)) if block_weights is None else block_weights
    return float(sum(wt * block_residual(t, model) for wt, t in zip(w, triples)))


def factor_normal_equations(n: int, triples: Sequence[TripleCf], model: CpdModel,
                            block_weights=None):
    """Gram matrix ``G_n`` (F x F) and right-hand side ``V_n`` (F x (2K+1))."""
    F = model.F
    lam = model.weights
    w = np.ones(len(triples)) if block_weights is None else block_weights
    G = np.zeros((F, F), dtype=complex)
    V = np.zeros((F, 2 * model.K + 1), dtype=complex)
    used = 0
    for wt, t in zip(w, triples):
        if n not in t.variables:
            continue
        used += 1
        pos = t.variables.index(n)
        others = [v for v in t.variables if v != n]
        # rows of the unfolding follow the other variables in descending order
        Q = khatri_rao_chain([model.factors[v] for v in others[::-1]], F)
        G += wt * (Q.conj().T @ Q)
        V += wt * (Q.conj().T @ unfold(t.tensor, pos))
    if used == 0:
        raise CoverageError(f"variable {n} appears in no retained block")
    G = np.outer(lam, lam) * G
    V = lam[:, None] * V
    return G, V


def _solve_ridge(G: np.ndarray, V: np.ndarray, ridge: float) -> np.ndarray:
    F = G.shape[0]
    eps = ridge * max(np.trace(G).real, np.finfo(float).tiny) / F
    Gr = G + eps * np.eye(F)
    try:
        X = np.linalg.solve(Gr, V)
    except np.linalg.LinAlgError:
        raise IllConditionedError(
            "normal equations are singular even after ridge; try a smaller rank F"
        ) from None
    if not np.all(np.isfinite(X)):
        raise IllConditionedError("non-finite factor update; try a smaller rank F")
    return X


def factor_update(n: int, triples: Sequence[TripleCf], model: CpdModel,
                  ridge: float = 1e-10, block_weights=None) -> np.ndarray:
    """Exact constrained least-squares refit of factor ``n``.

    The objective separates over frequency rows of ``A_n``, so solving the
    unconstrained system and then resetting the zero-frequency row to ones
    is the constrained minimizer.
    """
    _check_K(triples, model)
    G, V = factor_normal_equations(n, triples, model, block_weights)
    A = _solve_ridge(G, V, ridge).T.copy()
    A[model.K] = 1.0
    return A


def project_simplex(y) -> np.ndarray:
    """Euclidean projection of ``Re(y)`` onto the probability simplex.

    Sort-based threshold method; the active set is renormalized at the end
    so the output sums to one up to rounding of a single division.
    """
    y = np.real(np.asarray(y)).astype(float).reshape(-1)
    if y.size == 0:
        return y
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, y.size + 1)
    rho = np.nonzero(u - (css - 1.0) / j > 0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1)
    x = np.maximum(y - theta, 0.0)
    return x / x.sum()


def weight_normal_equations(triples: Sequence[TripleCf], model: CpdModel, block_weights=None):
    """Real Gram matrix and right-hand side of the weight subproblem.

    ``Q^H Q`` is accumulated as a Hadamard product of factor Grams and
    ``Q^H vec(Phi)`` by successive contractions, so the Khatri-Rao product
    is never formed. Weights are real, so only real parts matter.
    """
    F = model.F
    w = np.ones(len(triples)) if block_weights is None else block_weights
    G = np.zeros((F, F), dtype=complex)
    V = np.zeros(F, dtype=complex)
    for wt, t in zip(w, triples):
        gram = np.ones((F, F), dtype=complex)
        contr = t.tensor.astype(complex)
        for v in t.variables:
            A = model.factors[v]
            gram *= A.conj().T @ A
        # contract axes one at a time, carrying the component index along
        contr = np.tensordot(model.factors[t.variables[0]].conj(), contr, axes=(0, 0))
        for v in t.variables[1:]:
            Ac = model.factors[v].conj()
            # contr has axes (h, remaining...); contract next axis diagonally in h
            contr = np.einsum("ah,ha...->h...", Ac, contr)
        G += wt * gram
        V += wt * contr
    return G.real, V.real


def lambda_update_admm(triples: Sequence[TripleCf], model: CpdModel, iters: int = 50,
                       rho: float | None = None, block_weights=None) -> np.ndarray:
    """Simplex-constrained least-squares refit of the mixture weights by ADMM.

    Starts from the current weights with a zero dual and returns the
    projected (feasible) iterate after ``iters`` rounds.
    """
    _check_K(triples, model)
    F = model.F
    if F == 1:
        return np.ones(1)
    G, V = weight_normal_equations(triples, model, block_weights)
    if rho is None:
        rho = max(np.trace(G) / F, np.finfo(float).tiny)
    system = np.linalg.cholesky(G + rho * np.eye(F))
    lam = model.weights.copy()
    u = np.zeros(F)
    for _ in range(iters):
        rhs = V + rho * (lam + u)
        lam_hat = np.linalg.solve(system.T, np.linalg.solve(system, rhs))
        lam = project_simplex(lam_hat - u)
        u = u + lam - lam_hat
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(u))):
            raise DivergenceError("ADMM weight update diverged; try a larger rho")
    return lam


def check_generic_identifiability(K: int, F: int) -> str:
    """'ok' when rank F is within the generic uniqueness bound for (2K+1)^3 blocks."""
    if F <= 1:
        return "ok"
    I = 2 * K + 1
    alpha = int(math.floor(math.log2(I)))
    return "ok" if F <= 2 ** (2 * alpha - 2) else "warn"


def init_model(N: int, F: int, K: int, rng: np.random.Generator) -> CpdModel:
    """Random conjugate-symmetric phases with 1/(1+|k|) decay, uniform weights."""
    factors = []
    decay = 1.0 / (1.0 + np.arange(1, K + 1))
    for _ in range(N):
        pos = np.exp(2j * np.pi * rng.random((K, F))) * decay[:, None]
        A = np.empty((2 * K + 1, F), dtype=complex)
        A[K] = 1.0
        A[K + 1:] = pos
        A[:K] = np.conj(pos[::-1])
        factors.append(A)
    return CpdModel(np.full(F, 1.0 / F), factors)


def fit_blocks(triples: Sequence[TripleCf], N: int, opts: FitOptions,
               init: CpdModel | None = None, rng=None):
    """Run block coordinate descent on already-estimated blocks.

    Returns ``(model, trajectory, converged, steps)`` for a single start.
    """
    if rng is None:
        rng = np.random.default_rng(opts.seed)
    model = init.copy() if init is not None else init_model(N, opts.rank, opts.harmonics, rng)
    _check_K(triples, model)
    bw = _block_weights(triples, opts.weight_by_count)
    current = objective(triples, model, bw)
    trajectory = [current]
    steps: list[tuple[str, float]] = []
    converged = False
    for _ in range(opts.max_outer_iters):
        for n in range(N):
            model.factors[n] = factor_update(n, triples, model, opts.ridge, bw)
            if opts.track_steps:
                steps.append((f"A{n}", objective(triples, model, bw)))
        model.weights = lambda_update_admm(triples, model, opts.admm_iters, opts.admm_rho, bw)
        value = objective(triples, model, bw)
        if opts.track_steps:
            steps.append(("lambda", value))
        if not np.isfinite(value):
            raise DivergenceError("objective became non-finite")
        trajectory.append(value)
        if abs(current - value) <= opts.rel_tol * max(current, np.finfo(float).tiny):
            converged = True
            break
        current = value
    return model, trajectory, converged, steps


def fit_coupled(triples: Sequence[TripleCf], N: int, opts: FitOptions):
    """Multi-start coupled factorization of estimated blocks; keeps the best start."""
    covered = {v for t in triples for v in t.variables}
    missing = sorted(set(range(N)) - covered)
    if missing:
        raise CoverageError(f"variables {missing} appear in no retained block")
    start = time.perf_counter()
    best = None
    finals = []
    seeds = np.random.SeedSequence(opts.seed).spawn(opts.restarts)
    for ss in seeds:
        model, traj, conv, steps = fit_blocks(triples, N, opts, rng=np.random.default_rng(ss))
        finals.append(traj[-1])
        if best is None or traj[-1] < best[1][-1]:
            best = (model, traj, conv, steps)
    model, traj, conv, steps = best
    if not conv:
        warnings.warn(
            f"no convergence within {opts.max_outer_iters} outer iterations", FitWarning, stacklevel=2
        )
    advisory = check_generic_identifiability(opts.harmonics, opts.rank)
    report = FitReport(
        objective_trajectory=traj,
        iterations=len(traj) - 1,
        wall_time=time.perf_counter() - start,
        converged=conv,
        triple_residuals={t.variables: block_residual(t, model) for t in triples},
        identifiability=advisory,
        restart_objectives=finals,
        steps=steps,
    )
    return model, report


def fit(data: Dataset, opts: FitOptions):
    """Learn a density model from raw data.

    Normalizes into the unit hypercube, estimates block characteristic
    tensors from jointly observed rows, and runs the coupled factorization.

    Returns
    -------
    (CpdModel, FitReport)
    """
    start = time.perf_counter()
    normed, scaling = normalize(data, opts.pad, opts.bounds)
    blocks = variable_blocks(data.n_vars, opts.triple_budget, opts.seed, opts.min_cover)
    triples, dropped = estimate_blocks(normed, blocks, opts.harmonics, opts.min_count, opts.workers)
    if not triples:
        raise CoverageError("no block has enough joint observations")
    model, report = fit_coupled(triples, data.n_vars, opts)
    model.scaling = scaling
    report.dropped_triples = dropped
    report.wall_time = time.perf_counter() - start
    if report.identifiability == "warn":
        warnings.warn(
            f"rank {opts.rank} exceeds the generic uniqueness bound for K={opts.harmonics}",
            FitWarning,
            stacklevel=2,
        )
    return model, report

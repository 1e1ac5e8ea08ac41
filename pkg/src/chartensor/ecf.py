"""Data ingestion, unit-hypercube scaling and empirical characteristic tensors."""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CoverageError,
    DegenerateColumnError,
    DimensionError,
    FitWarning,
    InsufficientDataError,
    InsufficientOverlapError,
    UnsupportedDimensionError,
)

DEFAULT_PAD = 0.025
DEFAULT_MIN_COUNT = 30
DEFAULT_MIN_COVER = 3
K_MAX = 30

# rows per block when accumulating outer products of phase vectors
_CHUNK = 4096


@dataclass
class Dataset:
    """M observations of N real variables with an explicit missingness mask.

    ``values`` holds NaN wherever ``mask`` is False; consumers must rely on
    the mask, never on the fill value.
    """

    values: np.ndarray
    mask: np.ndarray
    names: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise DimensionError("values and mask must be matching M x N arrays")
        if self.names is not None and len(self.names) != self.values.shape[1]:
            raise DimensionError("one name per column is required")
        self.values = np.where(self.mask, self.values, np.nan)

    @classmethod
    def from_array(cls, values, names=None) -> "Dataset":
        """Build a dataset treating non-finite cells as missing."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(values, np.isfinite(values), names)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def take(self, rows) -> "Dataset":
        return Dataset(self.values[rows], self.mask[rows], self.names)

    def select(self, columns: Sequence[int]) -> "Dataset":
        columns = list(columns)
        names = [self.names[c] for c in columns] if self.names else None
        return Dataset(self.values[:, columns], self.mask[:, columns], names)

    def column_index(self, name: str) -> int:
        if self.names is None or name not in self.names:
            raise KeyError(f"unknown column {name!r}")
        return self.names.index(name)


@dataclass
class ScalingRecord:
    """Per-dimension affine map ``x -> scale * x + shift`` into ``[0, 1]``."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.shift = np.asarray(self.shift, dtype=float).reshape(-1)
        self.scale = np.asarray(self.scale, dtype=float).reshape(-1)
        if self.shift.shape != self.scale.shape:
            raise DimensionError("shift and scale lengths differ")
        if np.any(~(self.scale > 0)):
            raise ValueError("scales must be positive")

    @classmethod
    def identity(cls, n_vars: int) -> "ScalingRecord":
        return cls(np.zeros(n_vars), np.ones(n_vars))

    def __len__(self):
        return self.shift.shape[0]

    def forward(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.scale + self.shift

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.shift) / self.scale

    def subset(self, keep: Sequence[int]) -> "ScalingRecord":
        keep = list(keep)
        return ScalingRecord(self.shift[keep], self.scale[keep])


@dataclass
class TripleCf:
    """Empirical characteristic tensor of a variable block.

    Blocks are triples except when the whole dataset has fewer than three
    variables; then a single block covers all of them.
    """

    variables: tuple[int, ...]
    tensor: np.ndarray
    count: int

    @property
    def K(self) -> int:
        return (self.tensor.shape[0] - 1) // 2


def normalize(data: Dataset, pad: float = DEFAULT_PAD, bounds=None):
    """Affinely map every column into ``[pad, 1 - pad]``.

    Parameters
    ----------
    data : Dataset
        Raw observations.
    pad : float
        Fraction of the unit interval left free at each end.
    bounds : None, (lo, hi) or sequence of (lo, hi)
        Known support per column. When omitted the observed min and max are
        used.

    Returns
    -------
    (Dataset, ScalingRecord)
    """
    if not 0 <= pad < 0.5:
        raise ValueError("pad must lie in [0, 0.5)")
    N = data.n_vars
    if bounds is None:
        lo = np.empty(N)
        hi = np.empty(N)
        for n in range(N):
            col = data.values[data.mask[:, n], n]
            if col.size == 0:
                raise InsufficientDataError(f"column {_name(data, n)!r} has no observed cells")
            lo[n], hi[n] = col.min(), col.max()
    else:
        b = np.asarray(bounds, dtype=float)
        if b.shape == (2,):
            b = np.tile(b, (N, 1))
        if b.shape != (N, 2):
            raise DimensionError("bounds must be (lo, hi) or one pair per column")
        lo, hi = b[:, 0], b[:, 1]
    for n in range(N):
        if not (np.isfinite(lo[n]) and np.isfinite(hi[n]) and hi[n] > lo[n]):
            raise DegenerateColumnError(_name(data, n))
    scale = (1.0 - 2.0 * pad) / (hi - lo)
    shift = pad - lo * scale
    record = ScalingRecord(shift, scale)
    return Dataset(record.forward(data.values), data.mask, data.names), record


def apply_scaling(data: Dataset, scaling: ScalingRecord, clamp: bool = True):
    """Map raw data with an existing record; returns ``(dataset, n_clamped)``.

    Values landing outside ``[0, 1]`` are clamped because the Fourier model
    is periodic on the unit interval.
    """
    if data.n_vars != len(scaling):
        raise DimensionError("dataset and scaling record disagree on N")
    z = scaling.forward(data.values)
    n_clamped = 0
    if clamp:
        outside = data.mask & ((z < 0.0) | (z > 1.0))
        n_clamped = int(outside.sum())
        z = np.clip(z, 0.0, 1.0)
    return Dataset(z, data.mask, data.names), n_clamped


def denormalize(data: Dataset, scaling: ScalingRecord) -> Dataset:
    return Dataset(scaling.inverse(data.values), data.mask, data.names)


def ecf_point(samples, k: int) -> complex:
    """Sample mean of ``exp(j 2 pi k x)``."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise InsufficientDataError("empirical characteristic function of an empty sample")
    if k == 0:
        return 1.0 + 0.0j
    return complex(np.exp(2j * np.pi * k * x).mean())


def phase_matrix(x: np.ndarray, K: int) -> np.ndarray:
    """Rows ``exp(j 2 pi k x_m)`` for ``k = -K..K``; conjugate-symmetric by construction."""
    x = np.asarray(x, dtype=float).reshape(-1)
    pos = np.exp(2j * np.pi * np.outer(x, np.arange(1, K + 1)))
    out = np.empty((x.size, 2 * K + 1), dtype=complex)
    out[:, K] = 1.0
    out[:, K + 1:] = pos
    out[:, :K] = np.conj(pos[:, ::-1])
    return out


def _accumulate(phases: list[np.ndarray]) -> np.ndarray:
    """Sum over rows of the outer product of per-variable phase vectors."""
    M = phases[0].shape[0]
    dims = tuple(p.shape[1] for p in phases)
    if len(phases) == 1:
        return phases[0].sum(axis=0)
    total = np.zeros((int(np.prod(dims[:-1])), dims[-1]), dtype=complex)
    for start in range(0, M, _CHUNK):
        sl = slice(start, start + _CHUNK)
        lead = phases[0][sl]
        for p in phases[1:-1]:
            lead = (lead[:, :, None] * p[sl][:, None, :]).reshape(lead.shape[0], -1)
        total += lead.T @ phases[-1][sl]
    return total.reshape(dims)


def estimate_block(
    data: Dataset,
    variables: Sequence[int],
    K: int,
    min_count: int = DEFAULT_MIN_COUNT,
    phases: dict[int, np.ndarray] | None = None,
) -> TripleCf:
    """Empirical characteristic tensor over the rows where all ``variables`` are observed."""
    variables = tuple(int(v) for v in variables)
    if any(b <= a for a, b in zip(variables, variables[1:])):
        raise ValueError(f"variables {variables} must be strictly increasing")
    if variables[0] < 0 or variables[-1] >= data.n_vars:
        raise ValueError(f"variables {variables} out of range for N={data.n_vars}")
    rows = np.all(data.mask[:, list(variables)], axis=1)
    count = int(rows.sum())
    if count < max(min_count, 1):
        raise InsufficientOverlapError(variables, count, min_count)
    if phases is None:
        per_var = [phase_matrix(data.values[rows, v], K) for v in variables]
    else:
        per_var = [phases[v][rows[data.mask[:, v]]] for v in variables]
    tensor = _accumulate(per_var) / count
    return TripleCf(variables, tensor, count)


def estimate_triple(data: Dataset, i: int, j: int, l: int, K: int,
                    min_count: int = DEFAULT_MIN_COUNT) -> TripleCf:
    return estimate_block(data, (i, j, l), K, min_count)


def estimate_blocks(
    data: Dataset,
    blocks: Iterable[Sequence[int]],
    K: int,
    min_count: int = DEFAULT_MIN_COUNT,
    workers: int = 1,
) -> tuple[list[TripleCf], list[tuple[int, ...]]]:
    """Estimate many blocks, dropping (with a warning) those lacking overlap.

    Returns the retained tensors in input order and the dropped blocks.
    """
    blocks = [tuple(b) for b in blocks]
    needed = sorted({v for b in blocks for v in b})
    # phases of each variable's observed cells, reused across blocks
    phases = {v: phase_matrix(data.values[data.mask[:, v], v], K) for v in needed}

    def one(block):
        try:
            return estimate_block(data, block, K, min_count, phases)
        except InsufficientOverlapError as exc:
            return exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, blocks))
    else:
        results = [one(b) for b in blocks]
    kept, dropped = [], []
    for block, res in zip(blocks, results):
        if isinstance(res, InsufficientOverlapError):
            warnings.warn(f"dropping block {block}: {res}", FitWarning, stacklevel=2)
            dropped.append(block)
        else:
            kept.append(res)
    return kept, dropped


def select_triples(N: int, budget: int | None = None, seed=0,
                   min_cover: int = DEFAULT_MIN_COVER) -> list[tuple[int, int, int]]:
    """Choose the variable triples that enter the coupled objective.

    With no budget (or one covering every triple) all ``C(N, 3)`` triples are
    returned in lexicographic order. Otherwise a seeded random subset is drawn
    in which every variable appears in at least ``min_cover`` triples (or in
    every triple containing it, when fewer exist).
    """
    if N < 3:
        raise UnsupportedDimensionError(f"triples need N >= 3, got N={N}")
    total = math.comb(N, 3)
    if budget is None or budget >= total:
        return list(itertools.combinations(range(N), 3))
    cover_target = min(min_cover, math.comb(N - 1, 2))
    needed = math.ceil(N * cover_target / 3)
    if budget < needed:
        raise CoverageError(
            f"budget {budget} cannot cover {N} variables {cover_target} times "
            f"(need at least {needed} triples)"
        )
    rng = np.random.default_rng(seed)
    chosen: set[tuple[int, int, int]] = set()
    cover = np.zeros(N, dtype=int)
    while cover.min() < cover_target:
        order = np.lexsort((rng.random(N), cover))
        v = int(order[0])
        rest = [int(u) for u in order[1:]]
        added = False
        for a, b in itertools.combinations(rest, 2):
            t = tuple(sorted((v, a, b)))
            if t not in chosen:
                chosen.add(t)
                cover[list(t)] += 1
                added = True
                break
        if not added:  # pragma: no cover - every pair containing v is used
            raise CoverageError(f"variable {v} cannot be covered further")
    if len(chosen) > budget:
        raise CoverageError(
            f"greedy coverage used {len(chosen)} triples, above the budget {budget}"
        )
    while len(chosen) < budget:
        t = tuple(sorted(int(u) for u in rng.choice(N, size=3, replace=False)))
        chosen.add(t)
    return sorted(chosen)


def variable_blocks(N: int, budget: int | None = None, seed=0,
                    min_cover: int = DEFAULT_MIN_COVER) -> list[tuple[int, ...]]:
    """Triples for N >= 3; a single all-variable block for N in {1, 2}."""
    if N < 1:
        raise UnsupportedDimensionError("need at least one variable")
    if N < 3:
        return [tuple(range(N))]
    return select_triples(N, budget, seed, min_cover)


def suggest_harmonics(data: Dataset, threshold: float = 0.05, k_max: int = K_MAX):
    """Recommend a harmonic cutoff from the decay of per-column ECF magnitudes.

    For each column the smallest ``K`` is chosen such that
    ``|ecf(k)| < threshold`` for every ``k`` in ``K+1..K+3``. Returns the
    per-column values and their maximum.
    """
    per_dim = []
    for n in range(data.n_vars):
        x = data.values[data.mask[:, n], n]
        if x.size == 0:
            raise InsufficientDataError(f"column {_name(data, n)!r} has no observed cells")
        mags = np.abs(phase_matrix(x, k_max + 3)[:, k_max + 3:].mean(axis=0))
        # mags[k] is |ecf(k)| for k = 0..k_max+3
        chosen = None
        for K in range(k_max + 1):
            if np.all(mags[K + 1:K + 4] < threshold):
                chosen = K
                break
        if chosen is None:
            warnings.warn(
                f"column {_name(data, n)!r}: coefficients stay above {threshold} "
                f"up to k={k_max + 3}; capping K at {k_max}",
                FitWarning,
                stacklevel=2,
            )
            chosen = k_max
        per_dim.append(chosen)
    return per_dim, max(per_dim)


def read_csv(path, delimiter: str = ",") -> Dataset:
    """Read a numeric CSV; empty fields and ``NaN`` mark missing cells.

    The first line is treated as a header when any of its fields fails to
    parse as a number.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    if not rows:
        raise InsufficientDataError(f"{path}: no rows")
    names = None
    if not all(_is_number(f) for f in rows[0]):
        names = [f.strip() for f in rows[0]]
        rows = rows[1:]
    width = len(names) if names else len(rows[0])
    values = np.full((len(rows), width), np.nan)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise InsufficientDataError(f"{path}: line {r + 1 + bool(names)} has {len(row)} fields, expected {width}")
        for c, f in enumerate(row):
            f = f.strip()
            if f == "" or f.lower() == "nan":
                continue
            try:
                values[r, c] = float(f)
            except ValueError:
                raise InsufficientDataError(f"{path}: non-numeric field {f!r}") from None
    return Dataset(values, np.isfinite(values), names)


def write_csv(path, data: Dataset, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if data.names:
            w.writerow(data.names)
        for row, m in zip(data.values, data.mask):
            w.writerow([repr(float(v)) if ok else "" for v, ok in zip(row, m)])


def _is_number(field: str) -> bool:
    field = field.strip()
    if field == "":
        return True
    try:
        float(field)
    except ValueError:
        return False
    return True


def _name(data: Dataset, n: int):
    return data.names[n] if data.names else n

"""Hold-out selection of rank and harmonic cutoff by validation log-likelihood."""

from __future__ import annotations

import dataclasses
import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .density import log_likelihood
from .ecf import Dataset
from .errors import ChartensorError, DataError
from .factorization import CpdModel, FitOptions, FitReport, fit


def parse_grid(spec: str) -> list[tuple[int, int]]:
    """Parse ``"F=2,4,8;K=3,5,7"`` into the Cartesian product of (F, K) pairs."""
    values: dict[str, list[int]] = {}
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        key, _, rhs = part.partition("=")
        key = key.strip().upper()
        if key not in ("F", "K") or not rhs:
            raise ValueError(f"bad grid component {part!r}; expected F=... or K=...")
        values[key] = [int(v) for v in rhs.split(",") if v.strip()]
    if set(values) != {"F", "K"} or not values["F"] or not values["K"]:
        raise ValueError("grid must list values for both F and K")
    return list(itertools.product(values["F"], values["K"]))


@dataclass
class CvPlan:
    grid: list[tuple[int, int]]
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not self.grid:
            raise ValueError("the (F, K) grid is empty")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation fraction must lie in (0, 1)")


@dataclass
class CvCell:
    rank: int
    harmonics: int
    score: float | None
    error: str | None = None


@dataclass
class CvResult:
    cells: list[CvCell]
    best: tuple[int, int]
    model: CpdModel
    report: FitReport

    def table(self) -> str:
        lines = ["F\tK\tvalidation_loglik"]
        for c in self.cells:
            val = f"{c.score:.10g}" if c.score is not None else f"failed ({c.error})"
            lines.append(f"{c.rank}\t{c.harmonics}\t{val}")
        lines.append(f"selected: F={self.best[0]} K={self.best[1]}")
        return "\n".join(lines)


def split_rows(n_rows: int, fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_rows)
    n_val = max(1, int(round(fraction * n_rows)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def cross_validate(data: Dataset, plan: CvPlan, base: FitOptions) -> CvResult:
    """Score every grid cell on a held-out split, then refit the winner on all rows.

    Ties go to the smaller F, then the smaller K.
    """
    train_rows, val_rows = split_rows(data.n_obs, plan.validation_fraction, plan.seed)
    train, val = data.take(train_rows), data.take(val_rows)
    cells = []
    for F, K in plan.grid:
        opts = dataclasses.replace(base, rank=F, harmonics=K)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                model, _ = fit(train, opts)
            score = log_likelihood(model, val, space="raw").mean
            cells.append(CvCell(F, K, score))
        except (ChartensorError, np.linalg.LinAlgError) as exc:
            cells.append(CvCell(F, K, None, str(exc)))
    scored = [c for c in cells if c.score is not None and np.isfinite(c.score)]
    if not scored:
        raise DataError("every grid cell failed: " + "; ".join(f"F={c.rank},K={c.harmonics}: {c.error}" for c in cells))
    best = max(scored, key=lambda c: (c.score, -c.rank, -c.harmonics))
    opts = dataclasses.replace(base, rank=best.rank, harmonics=best.harmonics)
    model, report = fit(data, opts)
    return CvResult(cells, (best.rank, best.harmonics), model, report)

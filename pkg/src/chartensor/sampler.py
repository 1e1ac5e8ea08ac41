"""Drawing samples through the latent-class structure of the model.

A draw picks a class ``h`` and then samples every variable independently
from its class-conditional density, inverted numerically on a grid.

Fitted class-conditional densities are only guaranteed nonnegative in the
ideal low-rank case. When they have negative lobes, clamping each class
separately does not reproduce the (clamped) joint density, because the
lobes cancel across classes. The default ``method="exact"`` therefore
proposes from the mixture of *absolute* class densities (classes weighted
by ``w_h * prod_n integral |f_nh|``) and accepts with probability
``max(f, 0) / sum_h w_h prod_n |f_nh|``. For nonnegative classes every
proposal is accepted and this is plain latent-class sampling.
"""

from __future__ import annotations

import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .density import basis
from .ecf import Dataset, ScalingRecord
from .errors import DegenerateComponentError
from .factorization import CpdModel

DEFAULT_GRID = 1024
_CHUNK = 65536
# below this acceptance rate the exact sampler gives up and falls back to per-class clamping
MIN_ACCEPTANCE = 1e-3


class SamplingWarning(UserWarning):
    pass


@dataclass
class GridCdf:
    grid: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    mass: float

    @classmethod
    def from_values(cls, grid: np.ndarray, values: np.ndarray) -> "GridCdf":
        """Clamp negatives, integrate by trapezoids and normalize to end at 1."""
        dens = np.maximum(np.asarray(values, dtype=float), 0.0)
        steps = 0.5 * (dens[1:] + dens[:-1]) * np.diff(grid)
        total = steps.sum()
        if not total > 0:
            raise DegenerateComponentError("conditional density is non-positive on the whole grid")
        cdf = np.concatenate([[0.0], np.cumsum(steps)]) / total
        cdf[-1] = 1.0
        return cls(grid, dens / total, cdf, float(total))

    def invert(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.cdf, self.grid)


def sample_component(weights, rng: np.random.Generator, size=None):
    """Categorical draw(s) of the latent class."""
    weights = np.asarray(weights, dtype=float)
    p = weights / weights.sum()
    return rng.choice(p.shape[0], size=size, p=p)


class Sampler:
    """Caches one grid CDF per (variable, class) pair.

    Grid construction is guarded by a lock so one sampler can be shared by
    threads.
    """

    def __init__(self, model: CpdModel, grid_size: int = DEFAULT_GRID):
        self.model = model
        self.grid = np.linspace(0.0, 1.0, grid_size)
        self._clamped: dict[tuple[int, int], GridCdf] = {}
        self._absolute: dict[tuple[int, int], GridCdf] = {}
        self._values: list[np.ndarray] | None = None
        self._lock = threading.Lock()

    def grid_values(self) -> list[np.ndarray]:
        """Real part of every class-conditional density on the grid, one (G, F) array per variable."""
        if self._values is None:
            with self._lock:
                if self._values is None:
                    B = basis(self.grid, self.model.K)
                    self._values = [(B @ A).real for A in self.model.factors]
        return self._values

    def _build(self, cache, key, transform) -> GridCdf:
        found = cache.get(key)
        if found is not None:
            return found
        values = transform(self.grid_values()[key[0]][:, key[1]])
        with self._lock:
            if key not in cache:
                try:
                    cache[key] = GridCdf.from_values(self.grid, values)
                except DegenerateComponentError as exc:
                    raise DegenerateComponentError(f"variable {key[0]}, class {key[1]}: {exc}") from None
            return cache[key]

    def cdf(self, n: int, h: int) -> GridCdf:
        """Grid CDF of the clamped class-conditional density."""
        return self._build(self._clamped, (n, h), lambda v: v)

    def abs_cdf(self, n: int, h: int) -> GridCdf:
        return self._build(self._absolute, (n, h), np.abs)

    def prepare(self) -> None:
        for n in range(self.model.N):
            for h in range(self.model.F):
                self.cdf(n, h)
                self.abs_cdf(n, h)

    def conditional(self, n: int, h: int, rng: np.random.Generator, size=None):
        """Normalized-space draw(s) of variable ``n`` given class ``h``."""
        return self.cdf(n, h).invert(rng.random(size))

    def _draw_classes(self, count, rng, weights, lookup) -> np.ndarray:
        classes = sample_component(weights, rng, size=count)
        out = np.empty((count, self.model.N))
        for n in range(self.model.N):
            u = rng.random(count)
            for h in np.unique(classes):
                sel = classes == h
                out[sel, n] = lookup(n, int(h)).invert(u[sel])
        return out

    def draw_latent(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Class draw, then independent clamped conditional draws."""
        return self._draw_classes(count, rng, self.model.weights, self.cdf)

    def _interpolated(self, X: np.ndarray):
        """Signed and absolute products of grid-interpolated class densities, each (P, F)."""
        G = self.grid.size
        signed = np.ones((X.shape[0], self.model.F))
        absolute = np.ones((X.shape[0], self.model.F))
        for n, V in enumerate(self.grid_values()):
            pos = X[:, n] * (G - 1)
            i0 = np.clip(np.floor(pos).astype(int), 0, G - 2)
            t = (pos - i0)[:, None]
            signed *= V[i0] * (1 - t) + V[i0 + 1] * t
            absolute *= np.abs(V[i0]) * (1 - t) + np.abs(V[i0 + 1]) * t
        return signed, absolute

    def draw_exact(self, count: int, rng: np.random.Generator) -> np.ndarray | None:
        """Rejection-corrected latent sampling; ``None`` if acceptance is hopeless."""
        model = self.model
        masses = np.array([[self.abs_cdf(n, h).mass for h in range(model.F)] for n in range(model.N)])
        proposal = model.weights * masses.prod(axis=0)
        if not proposal.sum() > 0:
            raise DegenerateComponentError("every class has zero absolute mass")
        parts = []
        filled = proposed = accepted = 0
        rate = 1.0
        while filled < count:
            batch = int(min(max((count - filled) / rate * 1.2, 64), 4 * _CHUNK))
            X = self._draw_classes(batch, rng, proposal, self.abs_cdf)
            signed, absolute = self._interpolated(X)
            target = signed @ model.weights
            bound = absolute @ model.weights
            keep = rng.random(batch) * bound < target
            parts.append(X[keep])
            filled += int(keep.sum())
            proposed += batch
            accepted += int(keep.sum())
            rate = max(accepted / proposed, 1e-6)
            if proposed >= 10000 and rate < MIN_ACCEPTANCE:
                return None
        return np.vstack(parts)[:count]


def sample_conditional(model: CpdModel, n: int, h: int, rng: np.random.Generator,
                       size=None, sampler: Sampler | None = None):
    """Draw from the clamped class-``h`` conditional density of variable ``n`` on [0, 1]."""
    if not (0 <= n < model.N and 0 <= h < model.F):
        raise IndexError(f"no variable {n} / class {h} in this model")
    sampler = sampler or Sampler(model)
    return sampler.conditional(n, h, rng, size)


def sample(model: CpdModel, count: int, seed=None, grid_size: int = DEFAULT_GRID,
           workers: int = 1, space: str = "raw", method: str = "exact") -> Dataset:
    """Draw ``count`` i.i.d. samples.

    Parameters
    ----------
    method : {"exact", "latent"}
        ``"latent"`` clamps each class-conditional density separately;
        ``"exact"`` targets the clamped joint density (see module notes) and
        falls back to ``"latent"`` with a warning if acceptance collapses.

    The count is split into fixed-size chunks, each with its own child seed
    of ``seed``, so the output does not depend on ``workers``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if method not in ("exact", "latent"):
        raise ValueError("method must be 'exact' or 'latent'")
    sampler = Sampler(model, grid_size)
    sampler.prepare()
    sizes = [min(_CHUNK, count - s) for s in range(0, count, _CHUNK)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(args):
        size, ss = args
        rng = np.random.default_rng(ss)
        if method == "exact":
            out = sampler.draw_exact(size, rng)
            if out is not None:
                return out
            warnings.warn(
                "rejection acceptance below "
                f"{MIN_ACCEPTANCE}; falling back to per-class clamped sampling",
                SamplingWarning,
                stacklevel=3,
            )
        return sampler.draw_latent(size, rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, zip(sizes, children)))
    else:
        parts = [run(a) for a in zip(sizes, children)]
    Z = np.vstack(parts)
    if space == "raw":
        Z = (model.scaling or ScalingRecord.identity(model.N)).inverse(Z)
    return Dataset(Z, np.ones_like(Z, dtype=bool))

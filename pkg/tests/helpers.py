"""Independent oracles and synthetic data for the test-suite.

Nothing here calls into the fitting or density code paths it is used to
check; the oracles are deliberately naive (explicit loops, materialized
Khatri-Rao products, generic solvers).
"""

import itertools
from math import comb

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from chartensor import CpdModel

# ---------------------------------------------------------------------------
# planted band-limited mixture: components are (1 + cos(2 pi (x - mu)))^3 / 2.5,
# whose Fourier coefficients vanish beyond |k| = 3
# ---------------------------------------------------------------------------

PLANT_MEANS = np.array([[0.25, 0.7], [0.3, 0.8], [0.65, 0.2], [0.5, 0.1], [0.15, 0.55]])
PLANT_WEIGHTS = np.array([0.4, 0.6])


def bump_coefficients(mu, K=3):
    k = np.arange(-K, K + 1)
    c = np.array([comb(6, abs(int(kk)) + 3) / 20 if abs(kk) <= 3 else 0.0 for kk in k])
    return c * np.exp(2j * np.pi * k * mu)


def bump_density(x, mu):
    return (1 + np.cos(2 * np.pi * (x - mu))) ** 3 / 2.5


def bump_sample(mu, size, rng):
    out = np.empty(0)
    while out.size < size:
        x = rng.random(2 * size + 16)
        u = rng.random(2 * size + 16) * 3.2
        out = np.concatenate([out, x[u < bump_density(x, mu)]])
    return out[:size]


def planted_model(K=3, means=PLANT_MEANS, weights=PLANT_WEIGHTS):
    factors = [np.column_stack([bump_coefficients(m, K) for m in row]) for row in means]
    return CpdModel(weights, factors)


def planted_data(M, seed, means=PLANT_MEANS, weights=PLANT_WEIGHTS):
    rng = np.random.default_rng(seed)
    h = rng.choice(len(weights), size=M, p=weights)
    X = np.empty((M, means.shape[0]))
    for n in range(means.shape[0]):
        for c in range(len(weights)):
            sel = h == c
            X[sel, n] = bump_sample(means[n, c], int(sel.sum()), rng)
    return X


def factor_error(model, truth):
    """Relative Frobenius error of all factors after the best column permutation."""
    F = truth.F
    best = None
    for p in itertools.permutations(range(F)):
        p = list(p)
        num = sum(np.linalg.norm(model.factors[n][:, p] - truth.factors[n]) ** 2 for n in range(truth.N))
        if best is None or num < best[0]:
            best = (num, p)
    den = sum(np.linalg.norm(A) ** 2 for A in truth.factors)
    return float(np.sqrt(best[0] / den)), best[1]


def random_model(N, F, K, seed, symmetric=False):
    rng = np.random.default_rng(seed)
    lam = rng.random(F) + 0.2
    lam /= lam.sum()
    factors = []
    for _ in range(N):
        A = (rng.normal(size=(2 * K + 1, F)) + 1j * rng.normal(size=(2 * K + 1, F))) * 0.3
        if symmetric:
            A[:K] = np.conj(A[K + 1:][::-1])
        A[K] = 1.0
        factors.append(A)
    return CpdModel(lam, factors)


def smooth_random_model(N, F, K, seed):
    """Mixture of planted bumps at random locations: nonnegative and conjugate symmetric."""
    rng = np.random.default_rng(seed)
    means = rng.random((N, F))
    lam = rng.random(F) + 0.3
    return planted_model(K, means, lam / lam.sum())


# ---------------------------------------------------------------------------
# naive evaluations
# ---------------------------------------------------------------------------


def naive_block_ecf(X, variables, K):
    """Loop over every frequency tuple and every complete row."""
    rows = X[np.all(np.isfinite(X[:, list(variables)]), axis=1)][:, list(variables)]
    shape = (2 * K + 1,) * len(variables)
    T = np.zeros(shape, dtype=complex)
    for idx in itertools.product(range(2 * K + 1), repeat=len(variables)):
        k = np.array(idx) - K
        T[idx] = np.mean([np.exp(2j * np.pi * np.dot(k, x)) for x in rows])
    return T


def naive_entry(model, variables, idx):
    total = 0j
    for h in range(model.F):
        term = model.weights[h]
        for v, a in zip(variables, idx):
            term *= model.factors[v][a, h]
        total += term
    return total


def naive_objective(triples, model):
    total = 0.0
    for t in triples:
        for idx in itertools.product(range(t.tensor.shape[0]), repeat=t.tensor.ndim):
            total += abs(t.tensor[idx] - naive_entry(model, t.variables, idx)) ** 2
    return total


def naive_density(model, x):
    """Direct multivariate Fourier sum over every frequency tuple."""
    K = model.K
    total = 0j
    for idx in itertools.product(range(2 * K + 1), repeat=model.N):
        k = np.array(idx) - K
        total += naive_entry(model, range(model.N), idx) * np.exp(-2j * np.pi * np.dot(k, x))
    return total


def brute_force_simplex(y):
    """Projection onto the simplex by enumerating every face."""
    y = np.real(np.asarray(y, dtype=complex)).astype(float)
    F = y.size
    best = None
    for r in range(1, F + 1):
        for S in itertools.combinations(range(F), r):
            x = np.zeros(F)
            yS = y[list(S)]
            x[list(S)] = yS - (yS.sum() - 1.0) / r
            if np.all(x >= -1e-15):
                d = np.sum((x - y) ** 2)
                if best is None or d < best[0]:
                    best = (d, x)
    return best[1]


# ---------------------------------------------------------------------------
# standalone constrained ALS for a single 3-way tensor
# ---------------------------------------------------------------------------


def _kr(A, B):
    return np.column_stack([np.kron(A[:, h], B[:, h]) for h in range(A.shape[1])])


def als_single_tensor(T, F, seed=0, iters=2000, tol=1e-13):
    """Constrained CPD of one tensor with lstsq factor steps and SLSQP weight steps.

    Returns the final squared residual.
    """
    I = T.shape[0]
    K = (I - 1) // 2
    rng = np.random.default_rng(seed)
    A = []
    for _ in range(3):
        M = np.exp(2j * np.pi * rng.random((I, F))) / (1 + np.abs(np.arange(-K, K + 1)))[:, None]
        M[:K] = np.conj(M[K + 1:][::-1])
        M[K] = 1
        A.append(M)
    lam = np.full(F, 1.0 / F)
    vecT = T.reshape(-1)  # index (a, b, c) -> a*I*I + b*I + c

    def residual():
        Q = _kr(_kr(A[0], A[1]), A[2])
        return float(np.sum(np.abs(vecT - Q @ lam) ** 2))

    prev = residual()
    for _ in range(iters):
        for n in range(3):
            o1, o2 = [m for m in range(3) if m != n]
            Y = np.moveaxis(T, n, 0).reshape(I, -1).T  # rows (o1, o2) with o2 fastest
            B = _kr(A[o1], A[o2]) * lam
            X, *_ = np.linalg.lstsq(B, Y, rcond=None)
            A[n] = X.T
            A[n][K] = 1
        Q = _kr(_kr(A[0], A[1]), A[2])
        Qr = np.vstack([Q.real, Q.imag])
        yr = np.concatenate([vecT.real, vecT.imag])
        res = minimize(
            lambda l: np.sum((yr - Qr @ l) ** 2),
            lam,
            jac=lambda l: -2 * Qr.T @ (yr - Qr @ l),
            method="SLSQP",
            bounds=[(0, None)] * F,
            constraints=[{"type": "eq", "fun": lambda l: l.sum() - 1}],
            options={"ftol": 1e-15, "maxiter": 500},
        )
        lam = np.maximum(res.x, 0)
        lam /= lam.sum()
        cur = residual()
        if abs(prev - cur) <= tol * max(prev, 1e-300):
            break
        prev = cur
    return cur


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


def moons(M, rng, noise=0.1):
    n1 = M // 2
    t1 = rng.random(n1) * np.pi
    t2 = rng.random(M - n1) * np.pi
    X = np.vstack([
        np.column_stack([np.cos(t1), np.sin(t1)]),
        np.column_stack([1 - np.cos(t2), 0.5 - np.sin(t2)]),
    ])
    X += rng.normal(0, noise, X.shape)
    return X[rng.permutation(M)]


def energy_permutation_test(X, Y, n_perm, rng):
    """Two-sample energy-distance statistic and its permutation p-value."""
    Z = np.vstack([X, Y])
    D = cdist(Z, Z)
    n = len(X)

    def stat(idx):
        a, b = idx[:n], idx[n:]
        return 2 * D[np.ix_(a, b)].mean() - D[np.ix_(a, a)].mean() - D[np.ix_(b, b)].mean()

    observed = stat(np.arange(len(Z)))
    exceed = sum(stat(rng.permutation(len(Z))) >= observed for _ in range(n_perm))
    return observed, (exceed + 1) / (n_perm + 1)


def gaussian_mixture_sample(M, rng, means=(0.35, 0.7), sds=(0.1, 0.08), weights=(0.5, 0.5)):
    h = rng.choice(len(weights), size=M, p=weights)
    return rng.normal(np.asarray(means)[h], np.asarray(sds)[h])


def gaussian_mixture_pdf(x, means=(0.35, 0.7), sds=(0.1, 0.08), weights=(0.5, 0.5)):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for m, s, w in zip(means, sds, weights):
        out += w * np.exp(-0.5 * ((x - m) / s) ** 2) / (s * np.sqrt(2 * np.pi))
    return out

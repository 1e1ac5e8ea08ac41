"""Plain-text model files.

Layout::

    LRCF v1
    N F K
    shift scale            (N lines)
    w_1 ... w_F
    re,im ... re,im        (2K+1 lines per variable, frequency -K first)

Numbers are written with 17 significant digits, which round-trips IEEE
doubles exactly.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .ecf import ScalingRecord
from .errors import ModelFormatError
from .factorization import CpdModel

HEADER = "LRCF v1"


def _num(x: float) -> str:
    return format(float(x), ".17g")


def dumps(model: CpdModel) -> str:
    scaling = model.scaling or ScalingRecord.identity(model.N)
    out = io.StringIO()
    out.write(HEADER + "\n")
    out.write(f"{model.N} {model.F} {model.K}\n")
    for c, s in zip(scaling.shift, scaling.scale):
        out.write(f"{_num(c)} {_num(s)}\n")
    out.write(" ".join(_num(w) for w in model.weights) + "\n")
    for A in model.factors:
        for row in A:
            out.write(" ".join(f"{_num(z.real)},{_num(z.imag)}" for z in row) + "\n")
    return out.getvalue()


def loads(text: str, tol: float = 1e-12) -> CpdModel:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ModelFormatError(f"missing {HEADER!r} header")
    try:
        N, F, K = (int(v) for v in lines[1].split())
        pos = 2
        scal = np.array([[float(v) for v in lines[pos + n].split()] for n in range(N)])
        pos += N
        weights = np.array([float(v) for v in lines[pos].split()])
        pos += 1
        factors = []
        for _ in range(N):
            A = np.empty((2 * K + 1, F), dtype=complex)
            for r in range(2 * K + 1):
                fields = lines[pos].split()
                pos += 1
                if len(fields) != F:
                    raise ModelFormatError(f"line {pos}: expected {F} entries")
                for h, f in enumerate(fields):
                    re, im = f.split(",")
                    A[r, h] = complex(float(re), float(im))
            factors.append(A)
    except (ValueError, IndexError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model file: {exc}") from None
    if scal.shape != (N, 2) or weights.shape != (F,):
        raise ModelFormatError("scaling or weight line has the wrong length")
    if any(line.strip() for line in lines[pos:]):
        raise ModelFormatError("trailing content after the last factor")
    try:
        model = CpdModel(weights, factors, ScalingRecord(scal[:, 0], scal[:, 1]))
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None
    problems = model.constraint_violations(tol)
    if problems:
        raise ModelFormatError("; ".join(problems))
    return model


def save_model(model: CpdModel, path) -> None:
    Path(path).write_text(dumps(model))


def load_model(path) -> CpdModel:
    return loads(Path(path).read_text())

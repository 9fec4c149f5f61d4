"""Singular-value spectral measures of integer block matrices and their log-determinants.

A :class:`SpectralMeasure` for an ``(m d) x (n d)`` block matrix ``A`` has
one atom of weight ``1/d`` per singular value of ``|A|`` (``n d`` of them,
counting the kernel), so its total mass is ``n``. Zero atoms are never taken
from floating point: their number comes from an exact rank computation.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import PreconditionError, ResourceCeilingError
from .group_ring import as_matrix, moment_sequence
from .lattice import rank_info
from .sofic import IntegerBlockMatrix, SoficApprox, lift, normalized_trace_power

DENSE_CEILING = 20_000
# Overwritten singular values must lie below this multiple of max(1, sigma_max) * n d.
ZERO_TOLERANCE = 1e-8


@dataclass(frozen=True)
class SpectralMeasure:
    """Atoms ``values[k]`` (ascending) each of weight ``1/d``; the first ``zero_count`` are exactly 0."""

    values: np.ndarray
    d: int
    n: int
    zero_count: int
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.n * self.d,):
            raise PreconditionError(f"expected {self.n * self.d} atoms, got {vals.size}")
        if np.any(vals < 0) or np.any(np.diff(vals) < 0):
            raise PreconditionError("atoms must be nonnegative and sorted")
        if np.count_nonzero(vals == 0) != self.zero_count:
            raise PreconditionError("zero atoms disagree with the certified zero count")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, values: Iterable[float], d: int, provenance: dict | None = None) -> "SpectralMeasure":
        vals = np.sort(np.asarray(list(values), dtype=float))
        if vals.size % d:
            raise PreconditionError("number of atoms must be a multiple of d")
        return cls(vals, d, vals.size // d, int(np.count_nonzero(vals == 0)), provenance or {})

    @property
    def mass(self) -> Fraction:
        return Fraction(self.values.size, self.d)

    @property
    def weight(self) -> Fraction:
        return Fraction(1, self.d)

    def atoms(self) -> list[tuple[float, Fraction]]:
        """Distinct values with their total weights."""
        vals, counts = np.unique(self.values, return_counts=True)
        return [(float(v), Fraction(int(c), self.d)) for v, c in zip(vals, counts)]

    def mass_of(self, lo: float, hi: float, *, lo_closed: bool = False, hi_closed: bool = True) -> Fraction:
        v = self.values
        mask = (v >= lo if lo_closed else v > lo) & (v <= hi if hi_closed else v < hi)
        return Fraction(int(np.count_nonzero(mask)), self.d)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("value,weight_num,weight_den,certified_zero\n")
        for v, w in self.atoms():
            num = w.numerator * (self.d // w.denominator)
            out.write(f"{v!r},{num},{self.d},{int(v == 0.0)}\n")
        return out.getvalue()


def matrix_hash(A: IntegerBlockMatrix) -> str:
    csr = A.to_sparse()
    h = hashlib.sha256()
    h.update(np.array([A.m, A.n, A.d], dtype=np.int64).tobytes())
    for arr in (csr.indptr, csr.indices, csr.data):
        h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
    return h.hexdigest()


def singular_spectrum(
    A: IntegerBlockMatrix, exact_zero_count: int | None = None, *, ceiling: int = DENSE_CEILING
) -> SpectralMeasure:
    """Spectral measure of ``|A|`` from a dense SVD with exactly certified zero atoms."""
    size = (A.m + A.n) * A.d
    if size > ceiling:
        raise ResourceCeilingError("dense-spectrum", size, ceiling)
    nd = A.n * A.d
    prov = {"matrix_sha256": matrix_hash(A), "method": "dense-svd"}
    if exact_zero_count is None:
        info = rank_info(A)
        zeros = nd - info.rank
        prov["rank_method"] = info.method
    else:
        zeros = int(exact_zero_count)
        prov["rank_method"] = "supplied"
    if not 0 <= zeros <= nd:
        raise PreconditionError(f"zero count {zeros} outside [0, {nd}]")
    dense = A.to_dense().astype(float)
    sv = np.linalg.svd(dense, compute_uv=False) if dense.size else np.zeros(0)
    vals = np.zeros(nd)
    vals[: sv.size] = sv
    vals.sort()
    sigma_max = float(vals[-1]) if nd else 0.0
    tol = ZERO_TOLERANCE * max(1.0, sigma_max) * max(nd, 1)
    if zeros and float(vals[zeros - 1]) > tol:
        raise PreconditionError(
            f"inconsistent zero count: singular value {vals[zeros - 1]:.3e} would be pinned to 0 (tolerance {tol:.1e})"
        )
    vals[:zeros] = 0.0
    if zeros < nd and vals[zeros] == 0.0:
        # numerically zero but certified nonzero: keep it positive and tiny
        vals[zeros:][vals[zeros:] == 0.0] = np.nextafter(0.0, 1.0)
    return SpectralMeasure(vals, A.d, A.n, zeros, prov)


def log_det_plus_rate(M: SpectralMeasure) -> float:
    """``int_{(0,inf)} log t dmu``; zero atoms contribute nothing."""
    pos = M.values[M.zero_count :]
    return math.fsum(np.log(pos)) / M.d


det_plus = log_det_plus_rate


def det_truncated(M: SpectralMeasure, delta: float) -> float:
    """``sum_{0 < t <= delta} w log t``."""
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    pos = M.values[M.zero_count :]
    sel = pos[pos <= delta]
    return math.fsum(np.log(sel)) / M.d


def tail_log_integral(M: SpectralMeasure, a: float, closed: bool = False) -> float:
    """``sum_{t > a} w log t`` (``t >= a`` when ``closed``); zero atoms never count."""
    if a < 0:
        raise PreconditionError("a must be nonnegative")
    pos = M.values[M.zero_count :]
    sel = pos[pos >= a] if closed else pos[pos > a]
    return math.fsum(np.log(sel)) / M.d


def measure_moment(M: SpectralMeasure, p: int) -> float:
    """``sum w t^p`` for even ``p``."""
    if p < 0 or p % 2:
        raise PreconditionError("moment order must be a nonnegative even integer")
    return math.fsum(M.values**p) / M.d


@dataclass(frozen=True)
class WeakStarRow:
    degree: int
    sofic: str
    k: int
    empirical: float
    exact: int
    gap: float
    method: str


def weak_star_report(F, sofics: Sequence[SoficApprox], k_max: int, *, ceiling: int = DENSE_CEILING) -> list[WeakStarRow]:
    """Compare ``int t^{2k} dmu_{|sigma(F)|}`` with the exact ``Tr (x) tau((F*F)^k)`` for ``k = 1..k_max``.

    Lifts within the dense ceiling go through the spectral measure; larger
    ones use exact sparse traces.
    """
    F = as_matrix(F)
    exact = moment_sequence(F, k_max)
    rows = []
    for S in sofics:
        A = lift(S, F)
        if (A.m + A.n) * A.d <= ceiling:
            M = singular_spectrum(A)
            emp = [measure_moment(M, 2 * k) for k in range(1, k_max + 1)]
            method = "spectral"
        else:
            emp = [normalized_trace_power(A, k) for k in range(1, k_max + 1)]
            method = "sparse-trace"
        for k in range(1, k_max + 1):
            e = emp[k - 1]
            rows.append(WeakStarRow(S.degree, S.tag, k, e, exact[k], abs(e - exact[k]), method))
    return rows


__all__ = [
    "SpectralMeasure",
    "singular_spectrum",
    "log_det_plus_rate",
    "det_plus",
    "det_truncated",
    "tail_log_integral",
    "measure_moment",
    "weak_star_report",
    "WeakStarRow",
    "matrix_hash",
    "DENSE_CEILING",
]

"""Sofic approximations of Z^d and F_r and lifts of group-ring matrices.

Permutations are 0-based index arrays ``p`` with the convention that the
permutation matrix sends ``e_j`` to ``e_{p[j]}``. Composition follows matrix
multiplication: ``(p o q)[j] = p[q[j]]``, so ``evaluate(gh) = evaluate(g) o evaluate(h)``
and ``P_{gh} = P_g P_h``.
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import GroupMismatchError, ResourceCeilingError, ShapeError
from .group_ring import Free, Group, Zd, as_matrix, l1_norm

DEFAULT_LIFT_CEILING = 10_000_000


@dataclass(frozen=True, eq=False)
class SoficApprox:
    """A homomorphism ``Group -> S_degree`` given by generator images."""

    group: Group
    degree: int
    generators: tuple[np.ndarray, ...]
    provenance: dict = field(default_factory=dict)
    sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.generators) != self.group.rank:
            raise ShapeError(f"{len(self.generators)} generator images for {self.group}")
        for p in self.generators:
            p.setflags(write=False)
            if p.shape != (self.degree,):
                raise ShapeError("generator image has the wrong degree")

    @property
    def tag(self) -> str:
        if self.provenance.get("kind") == "cyclic":
            return "cyclic(" + ",".join(str(n) for n in self.sizes) + ")"
        return f"random-hom(seed={self.provenance.get('seed')})"

    def to_config(self) -> dict:
        return dict(self.provenance)


def cyclic_sofic(sizes: Sequence[int], group: Group | None = None) -> SoficApprox:
    """Translation action of ``Z^d`` on the torus grid ``prod Z/N_k``.

    Grid points are indexed in row-major order (last coordinate fastest).
    """
    sizes = tuple(int(n) for n in sizes)
    if not sizes or any(n < 1 for n in sizes):
        raise ShapeError("cyclic sizes must be positive integers")
    group = group or Zd(len(sizes))
    if group.kind != "Zd" or group.rank != len(sizes):
        raise GroupMismatchError(f"{len(sizes)} cyclic sizes for {group}")
    degree = int(np.prod(sizes))
    coords = np.unravel_index(np.arange(degree), sizes)
    gens = tuple(_translate(coords, sizes, tuple(int(i == k) for i in range(len(sizes)))) for k in range(len(sizes)))
    return SoficApprox(group, degree, gens, {"kind": "cyclic", "sizes": list(sizes)}, sizes)


def _translate(coords, sizes: tuple[int, ...], g: tuple) -> np.ndarray:
    shifted = tuple((c + a) % n for c, a, n in zip(coords, g, sizes))
    return np.ravel_multi_index(shifted, sizes).astype(np.int64)


def random_hom_sofic(rank: int, degree: int, seed: int) -> SoficApprox:
    """Independent uniform permutations for the generators of ``F_rank``.

    Draws come from a Philox counter-based generator keyed by ``seed``, so the
    output depends only on ``(rank, degree, seed)``.
    """
    if rank < 1 or degree < 1:
        raise ShapeError("rank and degree must be positive")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    gens = tuple(rng.permutation(degree).astype(np.int64) for _ in range(rank))
    return SoficApprox(Free(rank), degree, gens, {"kind": "random-hom", "rank": rank, "degree": degree, "seed": int(seed)})


def sofic_from_config(cfg: dict, group: Group | None = None) -> SoficApprox:
    kind = cfg.get("kind")
    if kind == "cyclic":
        return cyclic_sofic(cfg["sizes"], group)
    if kind == "random-hom":
        S = random_hom_sofic(cfg["rank"], cfg["degree"], cfg["seed"])
        if group is not None and group != S.group:
            raise GroupMismatchError(f"random-hom sofic for {S.group} used with {group}")
        return S
    raise ShapeError(f"unknown sofic kind {kind!r}")


def identity_perm(d: int) -> np.ndarray:
    return np.arange(d, dtype=np.int64)


def compose(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``p o q``."""
    return p[q]


def invert(p: np.ndarray) -> np.ndarray:
    inv = np.empty_like(p)
    inv[p] = np.arange(len(p), dtype=p.dtype)
    return inv


def perm_power(p: np.ndarray, e: int) -> np.ndarray:
    if e < 0:
        p, e = invert(p), -e
    result = identity_perm(len(p))
    base = p
    while e:
        if e & 1:
            result = base[result]
        e >>= 1
        if e:
            base = base[base]
    return result


def evaluate(S: SoficApprox, g) -> np.ndarray:
    """The permutation ``sigma(g)``."""
    g = S.group.validate(g)
    if S.group.kind == "Zd":
        if S.sizes is not None:
            return _torus_translate(S, g)
        pairs = list(enumerate(g, start=1))
    else:
        pairs = list(g)
    result = identity_perm(S.degree)
    for s, e in reversed(pairs):
        if e:
            result = perm_power(S.generators[s - 1], e)[result]
    return result


def _torus_translate(S: SoficApprox, g: tuple) -> np.ndarray:
    return _translate(np.unravel_index(np.arange(S.degree), S.sizes), S.sizes, g)


@dataclass(frozen=True)
class PairDefect:
    g: tuple
    h: tuple
    multiplicativity: float
    freeness: float | None


@dataclass(frozen=True)
class DefectReport:
    pairs: tuple[PairDefect, ...]

    @property
    def max_multiplicativity(self) -> float:
        return max((p.multiplicativity for p in self.pairs), default=0.0)

    @property
    def max_freeness(self) -> float:
        return max((p.freeness for p in self.pairs if p.freeness is not None), default=0.0)


def defect(S: SoficApprox, pairs: Iterable[tuple]) -> DefectReport:
    """Per pair ``(g, h)``: the fraction of points where ``sigma(g)sigma(h) != sigma(gh)``,
    and (for ``g != h``) the fraction where ``sigma(g) == sigma(h)``."""
    cache: dict = {}

    def ev(x):
        if x not in cache:
            cache[x] = evaluate(S, x)
        return cache[x]

    out = []
    for g, h in pairs:
        g, h = S.group.validate(g), S.group.validate(h)
        pg, ph = ev(g), ev(h)
        mult = float(np.count_nonzero(pg[ph] != ev(S.group.mul(g, h)))) / S.degree
        free = None if g == h else float(np.count_nonzero(pg == ph)) / S.degree
        out.append(PairDefect(g, h, mult, free))
    return DefectReport(tuple(out))


def reduced_words(group: Group, max_len: int) -> list[tuple]:
    """All group elements of word length at most ``max_len``, canonically ordered."""
    if group.kind == "Zd":
        rng = range(-max_len, max_len + 1)
        words = [v for v in itertools.product(rng, repeat=group.rank) if sum(map(abs, v)) <= max_len]
        return sorted(words, key=group.sort_key)
    words = [()]
    frontier = [()]
    letters = [(s, e) for s in range(1, group.rank + 1) for e in (1, -1)]
    for _ in range(max_len):
        nxt = []
        for w in frontier:
            for s, e in letters:
                if w and w[-1][0] == s and (w[-1][1] > 0) != (e > 0):
                    continue
                nxt.append(group.mul(w, ((s, e),)))
        words.extend(nxt)
        frontier = nxt
    return sorted(words, key=group.sort_key)


def freeness_defect_words(S: SoficApprox, max_len: int) -> float:
    """Largest freeness defect over distinct pairs of words of length <= max_len."""
    words = reduced_words(S.group, max_len)
    pairs = [(g, h) for i, g in enumerate(words) for h in words[i + 1 :]]
    return defect(S, pairs).max_freeness


class IntegerBlockMatrix:
    """Sparse ``(m*d) x (n*d)`` integer matrix with ``m x n`` blocks of size ``d``.

    The global index of block-row ``s``, row ``i`` is ``s*d + i``.
    """

    def __init__(self, m: int, n: int, d: int, data: sp.spmatrix, entry_bound: int | None = None):
        if data.shape != (m * d, n * d):
            raise ShapeError(f"data shape {data.shape} does not match blocks {m}x{n} of size {d}")
        self.m, self.n, self.d = m, n, d
        csr = sp.csr_matrix(data, dtype=np.int64)
        csr.eliminate_zeros()
        csr.sort_indices()
        self._csr = csr
        self.entry_bound = entry_bound

    @classmethod
    def from_dense(cls, arr, d: int = 1, m: int | None = None, n: int | None = None) -> "IntegerBlockMatrix":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ShapeError("expected a 2-D integer array")
        if arr.dtype == object:
            arr = np.array([[int(v) for v in row] for row in arr], dtype=np.int64)
        m = arr.shape[0] // d if m is None else m
        n = arr.shape[1] // d if n is None else n
        return cls(m, n, d, sp.csr_matrix(arr.astype(np.int64)))

    @property
    def shape(self) -> tuple[int, int]:
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    def to_sparse(self) -> sp.csr_matrix:
        return self._csr.copy()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def to_object(self) -> np.ndarray:
        """Dense array of Python integers (safe for exact arithmetic)."""
        return self.to_dense().astype(object)

    def to_rows(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.to_dense()]

    def entry(self, s: int, t: int, i: int, j: int) -> int:
        return int(self._csr[s * self.d + i, t * self.d + j])

    def block(self, s: int, t: int) -> sp.csr_matrix:
        d = self.d
        return self._csr[s * d : (s + 1) * d, t * d : (t + 1) * d]

    def transpose(self) -> "IntegerBlockMatrix":
        return IntegerBlockMatrix(self.n, self.m, self.d, self._csr.T.tocsr(), self.entry_bound)

    def __matmul__(self, other: "IntegerBlockMatrix") -> "IntegerBlockMatrix":
        if self.d != other.d or self.n != other.m:
            raise ShapeError("incompatible block matrices")
        return IntegerBlockMatrix(self.m, other.n, self.d, self._csr @ other._csr)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IntegerBlockMatrix):
            return NotImplemented
        if (self.m, self.n, self.d) != (other.m, other.n, other.d):
            return False
        return (self._csr != other._csr).nnz == 0

    def __repr__(self) -> str:
        return f"IntegerBlockMatrix(blocks={self.m}x{self.n}, d={self.d}, nnz={self.nnz})"

    def to_matrix_market(self) -> str:
        buf = io.BytesIO()
        scipy.io.mmwrite(buf, sp.coo_matrix(self._csr), field="integer")
        return buf.getvalue().decode()

    def write_matrix_market(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_matrix_market())


def read_matrix_market(source) -> np.ndarray:
    """Read a Matrix Market file (path or text) as a dense array of Python ints."""
    if isinstance(source, str) and source.lstrip().startswith("%%MatrixMarket"):
        source = io.StringIO(source)
    M = scipy.io.mmread(source)
    arr = M.toarray() if sp.issparse(M) else np.asarray(M)
    if np.issubdtype(arr.dtype, np.floating):
        if not np.all(arr == np.round(arr)):
            raise ShapeError("Matrix Market file has non-integer entries")
    return np.array([[int(v) for v in row] for row in arr], dtype=object).reshape(arr.shape)


def lift(S: SoficApprox, F, *, ceiling: int = DEFAULT_LIFT_CEILING) -> IntegerBlockMatrix:
    """``sigma(F)``: block ``(s, t)`` is ``sum_g F_st(g) P_{sigma(g)}``."""
    F = as_matrix(F)
    if F.group != S.group:
        raise GroupMismatchError(f"matrix over {F.group}, sofic approximation of {S.group}")
    d = S.degree
    if d * max(F.m, F.n) > ceiling:
        raise ResourceCeilingError("lift", d * max(F.m, F.n), ceiling)
    rows, cols, vals = [], [], []
    cols_base = np.arange(d, dtype=np.int64)
    bound = 0
    for s, t, f in F.entries():
        bound = max(bound, l1_norm(f))
        for g, c in f.items():
            p = evaluate(S, g)
            rows.append(s * d + p)
            cols.append(t * d + cols_base)
            vals.append(np.full(d, c, dtype=np.int64))
    if rows:
        data = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(F.m * d, F.n * d)
        )
    else:
        data = sp.coo_matrix((F.m * d, F.n * d), dtype=np.int64)
    return IntegerBlockMatrix(F.m, F.n, d, data.tocsr(), entry_bound=bound)


def normalized_trace_power(A: IntegerBlockMatrix, k: int) -> float:
    """``Tr (x) tr_d((A^T A)^k)`` with ``tr_d`` normalized, from exact sparse int64 products.

    Raises a resource error if an intermediate product could overflow int64.
    """
    if k == 0:
        return float(A.n)
    X = A._csr
    G = (X.T @ X).tocsr()
    # (A^T A)^k traced as ||A (A^T A)^j||_F^2 or ||(A^T A)^j||_F^2 with j = k // 2.
    P = X if k % 2 else sp.identity(A.n * A.d, dtype=np.int64, format="csr")
    for _ in range(k // 2):
        _check_product(P, G)
        P = (P @ G).tocsr()
    vals = [int(v) for v in P.data]
    return sum(v * v for v in vals) / A.d


def _check_product(P: sp.csr_matrix, G: sp.csr_matrix) -> None:
    if P.nnz == 0 or G.nnz == 0:
        return
    width = int(np.diff(G.indptr).max()) if G.shape[0] else 0
    bound = int(np.abs(P.data).max()) * int(np.abs(G.data).max()) * max(P.shape[1], 1)
    if bound >= 2**62 or width * int(np.abs(P.data).max()) * int(np.abs(G.data).max()) >= 2**62:
        raise ResourceCeilingError("int64-trace", bound, 2**62)


__all__ = [
    "SoficApprox",
    "IntegerBlockMatrix",
    "PairDefect",
    "DefectReport",
    "cyclic_sofic",
    "random_hom_sofic",
    "sofic_from_config",
    "evaluate",
    "defect",
    "lift",
    "reduced_words",
    "freeness_defect_words",
    "read_matrix_market",
    "normalized_trace_power",
    "compose",
    "invert",
    "perm_power",
    "identity_perm",
]

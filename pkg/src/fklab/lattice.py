"""Exact integer and rational linear algebra.

Matrices are accepted as nested lists, numpy arrays or
:class:`~fklab.sofic.IntegerBlockMatrix` and handled internally as object
arrays of Python integers, so no intermediate result can overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import PreconditionError, ResourceCeilingError, ShapeError
from .group_ring import as_matrix
from .sofic import IntegerBlockMatrix, SoficApprox, lift

EXACT_RANK_CEILING = 600
SNF_CEILING = 2000


def as_int_matrix(T) -> np.ndarray:
    """2-D object array of Python ints."""
    if isinstance(T, IntegerBlockMatrix):
        return T.to_object()
    arr = np.asarray(T, dtype=object)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ShapeError("expected a 2-D integer matrix")
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        iv = int(v)
        if iv != v:
            raise ShapeError(f"non-integer entry {v!r}")
        out[idx] = iv
    return out


# --- primes and modular elimination ----------------------------------------


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@lru_cache(maxsize=None)
def prime(k: int) -> int:
    """The ``k``-th largest prime below ``2**31`` (``k = 0, 1, ...``)."""
    start = prime(k - 1) - 1 if k else 2**31 - 1
    p = start
    while not _is_prime(p):
        p -= 1
    return p


def _reduce_mod(M: np.ndarray, p: int) -> np.ndarray:
    if M.dtype != object:
        return np.mod(M.astype(np.int64), p)
    return np.array([[int(v) % p for v in row] for row in M], dtype=np.int64).reshape(M.shape)


@dataclass(frozen=True)
class _ModElim:
    rank: int
    pivot_cols: tuple[int, ...]
    det: int  # determinant mod p for square input, else 0


def _eliminate_mod_p(M: np.ndarray, p: int) -> _ModElim:
    """Row echelon form mod ``p`` with smallest-index pivots."""
    A = _reduce_mod(M, p)
    m, n = A.shape
    r = 0
    pivots = []
    det = 1
    for c in range(n):
        if r == m:
            break
        col = A[r:, c]
        nz = np.flatnonzero(col)
        if nz.size == 0:
            det = 0
            continue
        k = r + int(nz[0])
        if k != r:
            A[[r, k]] = A[[k, r]]
            det = -det
        piv = int(A[r, c])
        det = det * piv % p
        inv = pow(piv, p - 2, p)
        A[r, c:] = A[r, c:] * inv % p
        below = r + 1 + np.flatnonzero(A[r + 1 :, c])
        if below.size:
            A[np.ix_(below, np.arange(c, n))] = (
                A[np.ix_(below, np.arange(c, n))] - np.outer(A[below, c], A[r, c:]) % p
            ) % p
        pivots.append(c)
        r += 1
    if m != n or r < n:
        det = 0
    return _ModElim(r, tuple(pivots), det % p)


def rank_mod_p(T, p: int | None = None) -> int:
    return _eliminate_mod_p(as_int_matrix(T), p or prime(0)).rank


# --- fraction-free elimination ----------------------------------------------


@dataclass(frozen=True)
class BareissResult:
    rank: int
    pivot_cols: tuple[int, ...]
    pivot_rows: tuple[int, ...]
    det: int | None
    echelon: np.ndarray = field(repr=False)


def bareiss(T) -> BareissResult:
    """Fraction-free Gaussian elimination with smallest-index pivoting.

    ``pivot_rows`` lists original row indices in pivot order; for square
    input ``det`` is the exact determinant.
    """
    M = as_int_matrix(T).copy()
    m, n = M.shape
    rows = list(range(m))
    prev = 1
    r = 0
    sign = 1
    pivots = []
    for c in range(n):
        if r == m:
            break
        nz = [i for i in range(r, m) if M[i, c] != 0]
        if not nz:
            continue
        k = nz[0]
        if k != r:
            M[[r, k]] = M[[k, r]]
            rows[r], rows[k] = rows[k], rows[r]
            sign = -sign
        piv = M[r, c]
        if r + 1 < m:
            sub = M[r + 1 :, c + 1 :]
            M[r + 1 :, c + 1 :] = (piv * sub - np.outer(M[r + 1 :, c], M[r, c + 1 :])) // prev
            M[r + 1 :, c] = 0
        prev = piv
        pivots.append(c)
        r += 1
    det = None
    if m == n:
        det = sign * int(M[n - 1, n - 1]) if r == n and n else (1 if n == 0 else 0)
    return BareissResult(r, tuple(pivots), tuple(rows[:r]), det, M)


# --- rank and determinant ---------------------------------------------------


@dataclass(frozen=True)
class RankResult:
    rank: int
    method: str  # "modular-full-rank", "fraction-free" or "probabilistic-exact"
    pivot_cols: tuple[int, ...]

    @property
    def certified(self) -> bool:
        return self.method != "probabilistic-exact"


def rank_info(T, *, exact_ceiling: int = EXACT_RANK_CEILING) -> RankResult:
    """Exact rank over Q with the method used.

    A full rank modulo a prime certifies full rank over Q. Otherwise
    fraction-free elimination decides exactly up to ``exact_ceiling``; beyond
    it the maximum over three primes is returned and tagged probabilistic.
    """
    M = as_int_matrix(T)
    m, n = M.shape
    if m == 0 or n == 0:
        return RankResult(0, "fraction-free", ())
    first = _eliminate_mod_p(M, prime(0))
    if first.rank == min(m, n):
        return RankResult(first.rank, "modular-full-rank", first.pivot_cols)
    if max(m, n) <= exact_ceiling:
        b = bareiss(M)
        return RankResult(b.rank, "fraction-free", b.pivot_cols)
    best = first
    for k in (1, 2):
        e = _eliminate_mod_p(M, prime(k))
        if e.rank > best.rank:
            best = e
    return RankResult(best.rank, "probabilistic-exact", best.pivot_cols)


def exact_rank(T, *, exact_ceiling: int = EXACT_RANK_CEILING) -> int:
    return rank_info(T, exact_ceiling=exact_ceiling).rank


def hadamard_bound(T) -> int:
    """An integer ``H >= |det T|`` (product of row norms, rounded up)."""
    M = as_int_matrix(T)
    bound = 1
    for row in M:
        s = sum(int(v) * int(v) for v in row)
        bound *= math.isqrt(s) + (0 if math.isqrt(s) ** 2 == s else 1)
    return bound


def det_exact(T) -> int:
    """Exact determinant by Chinese remaindering over enough primes to exceed twice the Hadamard bound."""
    M = as_int_matrix(T)
    m, n = M.shape
    if m != n:
        raise ShapeError(f"determinant of a non-square {m}x{n} matrix")
    if n == 0:
        return 1
    H = hadamard_bound(M)
    if H == 0:
        return 0
    modulus = 1
    residue = 0
    k = 0
    while modulus <= 2 * H:
        p = prime(k)
        d = _eliminate_mod_p(M, p).det
        # combine residue (mod modulus) with d (mod p)
        t = (d - residue) * pow(modulus, -1, p) % p
        residue += modulus * t
        modulus *= p
        k += 1
    if residue > modulus // 2:
        residue -= modulus
    return residue


# --- Smith normal form ------------------------------------------------------


@dataclass(frozen=True)
class SnfDecomposition:
    """``U @ T @ V == D`` with ``U``, ``V`` unimodular and ``D`` diagonal, ``D[i,i] | D[i+1,i+1]``."""

    U: np.ndarray
    D: np.ndarray
    V: np.ndarray

    @property
    def invariant_factors(self) -> list[int]:
        k = min(self.D.shape)
        return [int(self.D[i, i]) for i in range(k)]

    @property
    def rank(self) -> int:
        return sum(1 for a in self.invariant_factors if a != 0)


def _identity_obj(n: int) -> np.ndarray:
    I = np.zeros((n, n), dtype=object)
    for i in range(n):
        I[i, i] = 1
    return I


def smith_normal_form(T, *, ceiling: int = SNF_CEILING) -> SnfDecomposition:
    """Smith normal form with transforms, by Euclidean row and column reduction.

    Each step moves the nonzero entry of least absolute value in the
    remaining block to the pivot (ties: smallest column, then row), reduces
    its row and column by nearest-integer quotients, and repeats until the
    pivot divides everything below and to the right. Always taking the
    smallest entry keeps intermediate sizes under control; the tie rule keeps
    the output a deterministic function of the input.
    """
    A = as_int_matrix(T).copy()
    s, t = A.shape
    if max(s, t) > ceiling:
        raise ResourceCeilingError("snf", max(s, t), ceiling)
    U = _identity_obj(s)
    V = _identity_obj(t)
    for k in range(min(s, t)):
        if not _move_min_to_pivot(A, U, V, k):
            break
        while True:
            piv = A[k, k]
            q = _nearest_quotients(A[k + 1 :, k], piv)
            if q is not None:
                A[k + 1 :] -= np.outer(q, A[k])
                U[k + 1 :] -= np.outer(q, U[k])
            q = _nearest_quotients(A[k, k + 1 :], piv)
            if q is not None:
                A[:, k + 1 :] -= np.outer(A[:, k], q)
                V[:, k + 1 :] -= np.outer(V[:, k], q)
            if np.any(A[k + 1 :, k] != 0) or np.any(A[k, k + 1 :] != 0):
                _move_min_to_pivot(A, U, V, k)
                continue
            rest = A[k + 1 :, k + 1 :]
            bad = np.flatnonzero((rest % piv != 0).any(axis=1)) if rest.size else []
            if len(bad) == 0:
                break
            i = k + 1 + int(bad[0])
            A[k] += A[i]
            U[k] += U[i]
            _move_min_to_pivot(A, U, V, k)
    return SnfDecomposition(U, A, V)


def _nearest_quotients(vec: np.ndarray, piv: int):
    if vec.size == 0 or not np.any(vec != 0):
        return None
    return (2 * vec + piv) // (2 * piv)


def _move_min_to_pivot(A: np.ndarray, U: np.ndarray, V: np.ndarray, k: int) -> bool:
    sub = A[k:, k:]
    if sub.size == 0:
        return False
    mag = np.abs(sub).T.ravel()
    nz = np.flatnonzero(mag != 0)
    if nz.size == 0:
        return False
    pos = int(nz[np.argmin(mag[nz])])
    c, r = divmod(pos, sub.shape[0])
    i0, c0 = k + r, k + c
    if i0 != k:
        A[[k, i0]] = A[[i0, k]]
        U[[k, i0]] = U[[i0, k]]
    if c0 != k:
        A[:, [k, c0]] = A[:, [c0, k]]
        V[:, [k, c0]] = V[:, [c0, k]]
    if A[k, k] < 0:
        A[k] = -A[k]
        U[k] = -U[k]
    return True


# --- quotient orders --------------------------------------------------------


def quotient_order(T) -> int:
    """``|T^{-1}(Z^n) / Z^n| = |det T|``."""
    d = det_exact(T)
    if d == 0:
        raise PreconditionError("quotient order of a singular matrix is infinite")
    return abs(d)


def parallelepiped_points(T) -> list[tuple[int, ...]]:
    """Integer points ``z`` with ``T^{-1} z`` in ``[0, 1)^n``, by bounding-box enumeration."""
    M = as_int_matrix(T)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ShapeError("expected a square matrix")
    D = _det_small(M)
    if D == 0:
        raise PreconditionError("singular matrix")
    adj = _adjugate(M)
    lo = [sum(min(0, v) for v in row) for row in M]
    hi = [sum(max(0, v) for v in row) for row in M]
    grids = np.meshgrid(*[np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)], indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1)
    W = Z @ np.array(adj, dtype=np.int64).T  # rows: adj @ z
    if D > 0:
        inside = np.all((W >= 0) & (W < D), axis=1)
    else:
        inside = np.all((W <= 0) & (W > D), axis=1)
    return [tuple(int(v) for v in z) for z in Z[inside]]


def quotient_order_bruteforce(T, *, det_limit: int = 10_000, dim_limit: int = 4) -> int:
    """Count lattice points in the half-open parallelepiped ``T([0,1)^n)``."""
    M = as_int_matrix(T)
    n = M.shape[0]
    if n > dim_limit:
        raise ResourceCeilingError("bruteforce-dimension", n, dim_limit)
    D = _det_small(M)
    if D == 0:
        raise PreconditionError("singular matrix")
    if abs(D) > det_limit:
        raise ResourceCeilingError("bruteforce-determinant", abs(D), det_limit)
    return len(parallelepiped_points(M))


def _det_small(M) -> int:
    n = len(M)
    if n == 0:
        return 1
    if n == 1:
        return int(M[0][0])
    total = 0
    for j in range(n):
        if M[0][j]:
            minor = [[M[i][k] for k in range(n) if k != j] for i in range(1, n)]
            total += (-1) ** j * int(M[0][j]) * _det_small(minor)
    return total


def _adjugate(M) -> list[list[int]]:
    n = len(M)
    if n == 1:
        return [[1]]
    adj = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[M[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            adj[j][i] = (-1) ** (i + j) * _det_small(minor)
    return adj


# --- small vectors ----------------------------------------------------------


def _floor_nr(n: int, r) -> int:
    return math.floor(Fraction(n) * Fraction(r))


def small_vector_count(n: int, r, *, ceiling: int = 10**6) -> int:
    """``omega_n(r) = #{x in Z^n : (1/n) sum |x_j| <= r}``.

    Uses the closed form ``sum_k 2^k C(n,k) C(L,k)`` with ``L = floor(n r)``:
    choose the ``k`` nonzero coordinates, their signs, and a composition of
    their absolute values bounded by ``L``.
    """
    if n < 0 or Fraction(r) < 0:
        raise PreconditionError("n and r must be nonnegative")
    L = _floor_nr(n, r)
    if n * L > ceiling:
        raise ResourceCeilingError("small-vector-count", n * L, ceiling)
    return sum(2**k * math.comb(n, k) * math.comb(L, k) for k in range(min(n, L) + 1))


def small_vector_count_enumerate(n: int, r, *, ceiling: int = 30) -> int:
    """Independent count by enumerating absolute-value profiles (for cross-checks)."""
    L = _floor_nr(n, r)
    if L > ceiling:
        raise ResourceCeilingError("small-vector-enumeration", L, ceiling)

    @lru_cache(maxsize=None)
    def count(k: int, budget: int) -> int:
        if k == 0:
            return 1
        total = count(k - 1, budget)
        for a in range(1, budget + 1):
            total += 2 * count(k - 1, budget - a)
        return total

    return count(n, L)


def small_vector_bound(eps: float, n: int) -> float:
    """Explicit upper bound for ``(1/n) log omega_n(eps)``.

    Sum of: sign choices ``eps log 2``; the number of absolute-value profiles
    ``(1/n) log prod_j (floor(n eps / j) + 1)``; the zero-fraction entropy
    term ``-(1-eps) log(1-eps)`` (``1/e`` once ``1 - eps < 1/e``); and the
    entropy bound ``max(eps log 4 - eps log eps, eps + 2 eps log 2)`` for the
    nonzero profile.
    """
    if not eps > 0 or n < 1:
        raise PreconditionError("need eps > 0 and n >= 1")
    L = math.floor(n * eps)
    profiles = sum(math.log(math.floor(n * eps / j) + 1) for j in range(1, L + 1)) / n
    if 1 - eps >= 1 / math.e:
        zero_term = -(1 - eps) * math.log(1 - eps)
    else:
        zero_term = 1 / math.e
    tail = max(eps * math.log(4) - eps * math.log(eps), eps + 2 * math.log(2) * eps)
    return eps * math.log(2) + profiles + zero_term + tail


# --- characters -------------------------------------------------------------


def character_trivial(T, v: Sequence[int]) -> bool:
    """Whether ``v`` lies in ``T^t(Z^m)``, decided from the Smith form of ``T^t``."""
    M = as_int_matrix(T)
    v = [int(a) for a in v]
    if len(v) != M.shape[1]:
        raise ShapeError(f"vector of length {len(v)} for a matrix with {M.shape[1]} columns")
    snf = smith_normal_form(M.T)
    w = snf.U.dot(np.array(v, dtype=object)) if v else np.zeros(0, dtype=object)
    factors = snf.invariant_factors
    for i, wi in enumerate(w):
        a = factors[i] if i < len(factors) else 0
        if a == 0:
            if wi != 0:
                return False
        elif wi % a != 0:
            return False
    return True


def character_trivial_bruteforce(T, v: Sequence[int]) -> bool:
    """Evaluate ``xi -> <xi, v> mod 1`` on every coset of ``T^{-1}(Z^n)/Z^n`` (square, nonsingular)."""
    M = as_int_matrix(T)
    D = _det_small(M)
    if M.shape[0] != M.shape[1] or D == 0:
        raise PreconditionError("brute-force character check needs a square nonsingular matrix")
    adj = _adjugate(M)
    for z in parallelepiped_points(M):
        # xi = adj z / D
        num = sum(vi * sum(adj[i][k] * z[k] for k in range(len(z))) for i, vi in enumerate(v))
        if num % D != 0:
            return False
    return True


# --- exact rational solves --------------------------------------------------


def solve_rational(A, B) -> list[list[Fraction]] | None:
    """Solve ``A X = B`` exactly for square nonsingular ``A``; ``None`` if singular."""
    M = as_int_matrix(A)
    R = as_int_matrix(B)
    n = M.shape[0]
    if M.shape != (n, n) or R.shape[0] != n:
        raise ShapeError("incompatible shapes for a linear solve")
    aug = np.concatenate([M, R], axis=1)
    b = bareiss(aug)
    if b.pivot_cols[:n] != tuple(range(n)):
        return None
    E = b.echelon
    k = R.shape[1]
    X = [[Fraction(0)] * k for _ in range(n)]
    for col in range(k):
        for i in range(n - 1, -1, -1):
            s = Fraction(int(E[i, n + col]))
            for j in range(i + 1, n):
                if E[i, j]:
                    s -= int(E[i, j]) * X[j][col]
            X[i][col] = s / int(E[i, i])
    return X


# --- rank perturbation ------------------------------------------------------


@dataclass(frozen=True)
class RankPerturbation:
    """An invertible (or coordinate-image) modification of a lift.

    ``rows_kept`` and ``cols_kept`` are the selected index sets (global
    indices in ``0..m*d-1`` and ``0..n*d-1``); ``correction`` lists the
    partial permutation as (column, row) pairs.
    """

    x: IntegerBlockMatrix
    mode: str
    rows_kept: tuple[int, ...]
    cols_kept: tuple[int, ...]
    correction: tuple[tuple[int, int], ...]
    agreement: tuple[int, ...]
    rank: int
    rank_method: str
    det_certified_nonzero: bool | None

    @property
    def d(self) -> int:
        return self.x.d

    @property
    def rows_excluded(self) -> int:
        return self.x.m * self.d - len(self.rows_kept)

    @property
    def cols_excluded(self) -> int:
        return self.x.n * self.d - len(self.cols_kept)

    @property
    def agreement_fraction(self) -> float:
        return len(self.agreement) / self.d

    @property
    def disagreement_measure(self) -> Fraction:
        return Fraction(self.d - len(self.agreement), self.d)

    @property
    def perturbation_bound(self) -> float:
        """``sqrt(n * u_d(J^c))`` bounding ``||(x - A) xi||`` in the normalized quotient norm."""
        return math.sqrt(self.x.n * float(self.disagreement_measure))


def rank_perturbation(A: IntegerBlockMatrix, mode: str = "square-invertible") -> RankPerturbation:
    """Keep independent rows and columns of ``A`` and patch the rest.

    ``square-invertible``: ``x = chi_rows A chi_cols + V`` with ``V`` sending
    the k-th smallest excluded column to the k-th smallest excluded row.
    ``dense-image``: ``x = chi_rows A``, whose image is the coordinate
    subspace on the kept rows.
    """
    M = A.to_object()
    md, nd = M.shape
    if mode == "square-invertible":
        if A.m != A.n:
            raise PreconditionError("square-invertible mode needs a square block matrix")
    elif mode == "dense-image":
        if A.m > A.n:
            raise PreconditionError("dense-image mode needs m <= n")
    else:
        raise PreconditionError(f"unknown rank perturbation mode {mode!r}")
    cols_info = rank_info(M)
    rows_info = rank_info(M.T)
    if rows_info.rank != cols_info.rank:
        raise PreconditionError("row and column rank disagree; increase the exact rank ceiling")
    rank = cols_info.rank
    method = cols_info.method if cols_info.method == rows_info.method else "probabilistic-exact"
    if not (cols_info.certified and rows_info.certified):
        method = "probabilistic-exact"
    cols = tuple(sorted(cols_info.pivot_cols))
    rows = tuple(sorted(rows_info.pivot_cols))
    X = np.zeros_like(M)
    correction: tuple = ()
    if mode == "square-invertible":
        X[np.ix_(rows, cols)] = M[np.ix_(rows, cols)]
        ex_cols = [j for j in range(nd) if j not in set(cols)]
        ex_rows = [i for i in range(md) if i not in set(rows)]
        correction = tuple(zip(ex_cols, ex_rows))
        for j, i in correction:
            X[i, j] = 1
    else:
        X[list(rows), :] = M[list(rows), :]
        cols = tuple(range(nd))
    x = IntegerBlockMatrix.from_dense(X, d=A.d, m=A.m, n=A.n)
    d = A.d
    differs = np.any(X != M, axis=0)
    agreement = tuple(j for j in range(d) if not any(differs[l * d + j] for l in range(A.n)))
    certified = None
    if mode == "square-invertible":
        certified = _det_nonzero(X)
    return RankPerturbation(x, mode, rows, cols, correction, agreement, rank, method, certified)


def _det_nonzero(X: np.ndarray) -> bool:
    for k in range(3):
        if _eliminate_mod_p(X, prime(k)).det != 0:
            return True
    return det_exact(X) != 0


# --- submodule test ---------------------------------------------------------


@dataclass(frozen=True)
class SubmoduleResult:
    fraction: Fraction
    members: int
    non_members: int
    undecided: int
    d: int
    method: str

    def __float__(self) -> float:
        return float(self.fraction)


def submodule_test(F, alpha, S: SoficApprox, X: RankPerturbation, C: float) -> SubmoduleResult:
    """Fraction of ``j`` with ``sigma(alpha~)^* e_j`` in ``x^*(Z^{md} cap C Ball)``.

    The ball is the unnormalized Euclidean ball. For invertible ``x`` the
    preimage is unique and is tested for integrality and norm exactly. For a
    singular ``x`` the Smith form decides integral solvability; a rounded
    certificate of norm at most ``C`` proves membership and a real
    least-squares norm above ``C`` proves non-membership, anything else is
    counted as undecided (and not as a member).
    """
    F = as_matrix(F)
    alpha = as_matrix(alpha)
    if alpha.n != 1 or alpha.m != F.n:
        raise ShapeError(f"alpha must be {F.n}x1, got {alpha.m}x{alpha.n}")
    if X.x.shape != (F.m * S.degree, F.n * S.degree):
        raise ShapeError("rank perturbation does not match the lift of F")
    d = S.degree
    Bmat = lift(S, alpha.tilde()).to_object().T  # (n d) x d, column j = sigma(alpha~)^* e_j
    xstar = X.x.to_object().T  # (n d) x (m d)
    C2 = Fraction(C) ** 2
    members = non_members = undecided = 0
    if xstar.shape[0] == xstar.shape[1] and X.det_certified_nonzero:
        sol = solve_rational(xstar, Bmat)
        for j in range(d):
            col = [sol[i][j] for i in range(len(sol))]
            if all(v.denominator == 1 for v in col) and sum(v * v for v in col) <= C2:
                members += 1
            else:
                non_members += 1
        method = "exact-solve"
    else:
        snf = smith_normal_form(xstar)
        for j in range(d):
            verdict = _snf_membership(snf, Bmat[:, j], C2)
            if verdict is True:
                members += 1
            elif verdict is False:
                non_members += 1
            else:
                undecided += 1
        method = "smith-form"
    return SubmoduleResult(Fraction(members, d), members, non_members, undecided, d, method)


def _snf_membership(snf: SnfDecomposition, b: np.ndarray, C2: Fraction) -> bool | None:
    w = snf.U.dot(b)
    factors = snf.invariant_factors
    t = snf.V.shape[0]
    y0 = [0] * t
    for i, wi in enumerate(w):
        a = factors[i] if i < len(factors) else 0
        if a == 0:
            if wi != 0:
                return False
        elif wi % a != 0:
            return False
        else:
            y0[i] = wi // a
    r0 = snf.V.dot(np.array(y0, dtype=object))
    free = [i for i in range(t) if i >= len(factors) or factors[i] == 0]
    if not free:
        return sum(int(v) ** 2 for v in r0) <= C2
    K = snf.V[:, free].astype(float)
    r0f = r0.astype(float)
    coef, *_ = np.linalg.lstsq(K, -r0f, rcond=None)
    real_min = float(np.sum((r0f + K @ coef) ** 2))
    cand = r0 + snf.V[:, free].dot(np.array([int(round(c)) for c in coef], dtype=object))
    if sum(int(v) ** 2 for v in cand) <= C2:
        return True
    if real_min > float(C2) * (1 + 1e-9):
        return False
    return None


__all__ = [
    "as_int_matrix",
    "prime",
    "rank_mod_p",
    "bareiss",
    "BareissResult",
    "RankResult",
    "rank_info",
    "exact_rank",
    "hadamard_bound",
    "det_exact",
    "SnfDecomposition",
    "smith_normal_form",
    "quotient_order",
    "quotient_order_bruteforce",
    "parallelepiped_points",
    "small_vector_count",
    "small_vector_count_enumerate",
    "small_vector_bound",
    "character_trivial",
    "character_trivial_bruteforce",
    "solve_rational",
    "RankPerturbation",
    "rank_perturbation",
    "SubmoduleResult",
    "submodule_test",
]

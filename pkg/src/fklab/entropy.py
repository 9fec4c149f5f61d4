"""Entropy bounds for principal algebraic actions and the determinant-approximation experiment.

Norm conventions: vectors in ``R^D`` carry the normalized norm
``||xi||_2^2 = (1/D) sum xi_j^2`` and the quotient distance to ``Z^D`` is
taken coordinate-wise. The overlap estimate in :func:`ball_shift_overlap`
uses the plain Euclidean norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import OracleRefusal, PreconditionError, ResourceCeilingError, ShapeError
from .fk_reference import ReferenceValue, mahler_quadrature, series_log_det
from .group_ring import as_matrix
from .lattice import (
    as_int_matrix,
    det_exact,
    rank_info,
    rank_perturbation,
    small_vector_bound,
    small_vector_count,
)
from .sofic import SoficApprox, lift
from .spectral import (
    DENSE_CEILING,
    SpectralMeasure,
    log_det_plus_rate,
    singular_spectrum,
    tail_log_integral,
)

BRUTE_DIM_LIMIT = 8
BRUTE_GRID_CEILING = 2_000_000
EXACT_DET_CEILING = 400


# --- approximate kernels ----------------------------------------------------


def _quotient_norm(v: np.ndarray) -> np.ndarray:
    """Normalized distance to the integer lattice along the last axis."""
    frac = v - np.rint(v)
    return np.sqrt(np.mean(frac * frac, axis=-1))


def xi_membership(T, xi, delta: float) -> bool:
    """Whether ``||T xi||_{2, Z^m} < delta``."""
    M = np.asarray(as_int_matrix(T), dtype=float)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if M.ndim != 2 or xi.shape != (M.shape[1],):
        raise ShapeError(f"vector of shape {xi.shape} for a matrix of shape {M.shape}")
    if M.shape[0] == 0:
        return delta > 0
    return bool(_quotient_norm(M @ xi) < delta)


def _torus_dist(points: np.ndarray, p: np.ndarray) -> np.ndarray:
    diff = np.abs(points - p)
    diff = np.minimum(diff, 1.0 - diff)
    return np.sqrt(np.mean(diff * diff, axis=-1))


@dataclass(frozen=True)
class BruteCount:
    """Grid counts for ``Xi_delta(T)`` in the unit cell.

    ``packing`` is the size of a greedy set whose pairwise quotient distances
    exceed ``packing_separation``; every such set is a lower bound for
    ``N_eps``. ``covering`` is the size of a greedy cover of ``Xi_delta``
    by balls of radius ``covering_radius`` (grid resolution included).
    """

    packing: int
    covering: int
    packing_separation: float
    covering_radius: float
    grid: int
    admitted: int


def brute_count_microstates(T, delta: float, eps: float, g: int | None = None) -> BruteCount:
    M = as_int_matrix(T)
    m, D = M.shape
    if D == 0 or D > BRUTE_DIM_LIMIT:
        raise ResourceCeilingError("brute-dimension", D, BRUTE_DIM_LIMIT)
    if not (delta > 0 and eps > 0):
        raise PreconditionError("delta and eps must be positive")
    g_min = math.ceil(4 / eps - 1e-12)
    g = g_min if g is None else int(g)
    if g < g_min:
        raise PreconditionError(f"grid {g} is coarser than 4/eps = {g_min}")
    if g**D > BRUTE_GRID_CEILING:
        raise ResourceCeilingError("brute-grid", g**D, BRUTE_GRID_CEILING)
    Tf = M.astype(float)
    axes = np.arange(g) / g
    pts = np.stack(np.meshgrid(*([axes] * D), indexing="ij"), axis=-1).reshape(-1, D)  # lexicographic
    images = pts @ Tf.T
    dist = _quotient_norm(images) if m else np.zeros(len(pts))
    inside = pts[dist < delta]
    # covering: grid points within h of any point of Xi_delta lie in Xi_{delta + ||T|| h}
    h = 1.0 / (2 * g)
    op = float(np.linalg.norm(Tf, 2)) * math.sqrt(D / m) if m else 0.0
    enlarged = pts[dist < delta + op * h]
    return BruteCount(
        packing=_greedy_packing(inside, eps),
        covering=_greedy_cover(enlarged, eps),
        packing_separation=eps,
        covering_radius=eps + h,
        grid=g,
        admitted=len(inside),
    )


def _greedy_packing(points: np.ndarray, eps: float) -> int:
    chosen: list[np.ndarray] = []
    block = np.empty((0, points.shape[1]))
    for p in points:
        if block.shape[0] == 0 or np.all(_torus_dist(block, p) > eps):
            chosen.append(p)
            block = np.asarray(chosen)
    return len(chosen)


def _greedy_cover(points: np.ndarray, eps: float) -> int:
    uncovered = np.ones(len(points), dtype=bool)
    centers = 0
    while uncovered.any():
        idx = int(np.argmax(uncovered))
        uncovered &= _torus_dist(points, points[idx]) > eps
        centers += 1
    return centers


def packing_bound(T, delta: float, eps: float) -> float:
    """``|det T| / det_{4 delta/eps}(T)``, the bound on an ``eps``-separated subset of ``Xi_delta(T)``."""
    if not 4 * delta < eps:
        raise PreconditionError("packing bound needs 4 delta < eps")
    M = as_int_matrix(T)
    if M.shape[0] != M.shape[1]:
        raise ShapeError("packing bound needs a square matrix")
    det = abs(det_exact(M))
    if det == 0:
        raise PreconditionError("packing bound needs an invertible matrix")
    sv = np.linalg.svd(M.astype(float), compute_uv=False)
    small = sv[sv <= 4 * delta / eps]
    return det * math.exp(-math.fsum(np.log(small)))


# --- entropy bounds ---------------------------------------------------------


def _check_invertible(Mx: SpectralMeasure) -> None:
    if Mx.zero_count:
        raise PreconditionError("entropy bounds need an invertible x (spectral measure has an atom at 0)")


def entropy_upper_bound(Mx: SpectralMeasure, delta: float, eps: float) -> float:
    """``int_{(4 delta/eps, inf)} log t dmu_{|x|}``.

    The atoms at or below the cutoff are those dropped by the packing bound,
    so the interval is open.
    """
    if not (delta > 0 and eps > 0 and 4 * delta < eps):
        raise PreconditionError("upper bound needs 0 < 4 delta < eps")
    _check_invertible(Mx)
    return tail_log_integral(Mx, 4 * delta / eps, closed=False)


@dataclass(frozen=True)
class OmegaTerm:
    n: int
    r: float
    log_omega: float
    bound_mode: bool


def log_small_vector_count(n: int, r: float, *, ceiling: int = 10**6) -> OmegaTerm:
    """``log omega_n(r)``, exact when feasible and from the explicit analytic bound otherwise."""
    try:
        return OmegaTerm(n, r, math.log(small_vector_count(n, Fraction(r), ceiling=ceiling)), False)
    except ResourceCeilingError:
        return OmegaTerm(n, r, n * small_vector_bound(r, n), True)


@dataclass(frozen=True)
class EntropyBounds:
    level: int
    degree: int
    upper: float
    lower: float
    delta: float
    eps: float
    M: float
    tail_integral: float  # int over (delta/eps, inf)
    truncated_term: float  # log(delta/eps) * mu((0, delta/eps])
    omega_kernel: OmegaTerm  # omega_{d n}(eps M + 2 delta)
    omega_rows: OmegaTerm  # omega_{|A|}(2 eps M)
    log_abs_det: float | None = None
    bound_mode: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "bound_mode", self.omega_kernel.bound_mode or self.omega_rows.bound_mode)

    def as_row(self) -> dict:
        return {
            "level": self.level,
            "degree": self.degree,
            "delta": self.delta,
            "eps": self.eps,
            "M": self.M,
            "upper_log": self.upper,
            "lower_log": self.lower,
            "tail_integral_log": self.tail_integral,
            "truncated_term_log": self.truncated_term,
            "omega_kernel_log": self.omega_kernel.log_omega,
            "omega_rows_log": self.omega_rows.log_omega,
            "log_abs_det": self.log_abs_det,
            "bound_mode": int(self.bound_mode),
        }


def entropy_lower_bound(
    Mx: SpectralMeasure,
    delta: float,
    eps: float,
    d: int | None = None,
    n: int | None = None,
    M: float | None = None,
    *,
    rows_kept: int | None = None,
    level: int = 0,
) -> EntropyBounds:
    """Four-term lower bound for ``(1/d) log N_eps(Xi_delta(x))`` with the upper bound alongside.

    ``lower = int_{(c, inf)} log t + log(c) mu((0, c]) - (1/d) log omega_{dn}(eps M + 2 delta)
    - (1/d) log omega_{|A|}(2 eps M)`` with ``c = delta/eps``; ``M`` defaults to
    the largest atom (operator norm of ``x``) and ``|A|`` to ``d n``.
    """
    if not (delta > 0 and eps > 0):
        raise PreconditionError("delta and eps must be positive")
    _check_invertible(Mx)
    d = Mx.d if d is None else d
    n = Mx.n if n is None else n
    if (d, n) != (Mx.d, Mx.n):
        raise ShapeError("d and n must match the spectral measure")
    top = float(Mx.values[-1]) if Mx.values.size else 0.0
    M = top if M is None else float(M)
    if M < top * (1 - 1e-12):
        raise PreconditionError(f"M = {M} is below the largest atom {top}")
    c = delta / eps
    t1 = tail_log_integral(Mx, c, closed=False)
    t2 = math.log(c) * float(Mx.mass_of(0.0, c))
    w_kernel = log_small_vector_count(d * n, eps * M + 2 * delta)
    w_rows = log_small_vector_count(d * n if rows_kept is None else rows_kept, 2 * eps * M)
    lower = t1 + t2 - w_kernel.log_omega / d - w_rows.log_omega / d
    upper = entropy_upper_bound(Mx, delta, eps) if 4 * delta < eps else math.inf
    return EntropyBounds(level, d, upper, lower, delta, eps, M, t1, t2, w_kernel, w_rows, log_det_plus_rate(Mx))


def entropy_bounds_for_lift(F, S: SoficApprox, delta: float, eps: float, *, level: int = 0, M: float | None = None) -> EntropyBounds:
    """Both bounds for the square-invertible rank perturbation of ``lift(S, F)``."""
    A = lift(S, as_matrix(F))
    X = rank_perturbation(A, "square-invertible")
    if not X.det_certified_nonzero:
        raise PreconditionError("rank perturbation is not certified invertible")
    Mx = singular_spectrum(X.x, exact_zero_count=0)
    return entropy_lower_bound(Mx, delta, eps, M=M, rows_kept=len(X.rows_kept), level=level)


# --- determinant approximation ----------------------------------------------


def reference_for(F, tol: float = 1e-8) -> ReferenceValue | None:
    """Mahler quadrature over ``Z^d`` (``d <= 3``), else the moment series, else None."""
    F = as_matrix(F)
    if F.m != F.n:
        return None
    if F.group.kind == "Zd" and F.group.rank <= 3:
        return mahler_quadrature(F, tol)
    try:
        return series_log_det(F, tol=tol)
    except (OracleRefusal, ResourceCeilingError):
        return None


def det_approx_row(F, S: SoficApprox, *, perturb: bool = False, reference: ReferenceValue | None = None, level: int = 0) -> dict:
    F = as_matrix(F)
    A = lift(S, F)
    info = rank_info(A)
    nd = A.n * A.d
    kernel = Fraction(nd - info.rank, A.d)
    row: dict = {
        "level": level,
        "sofic": S.tag,
        "degree": A.d,
        "kernel_fraction": str(kernel),
        "rank_method": info.method,
    }
    dense_ok = (A.m + A.n) * A.d <= DENSE_CEILING
    rate = log_det_plus_rate(singular_spectrum(A, nd - info.rank)) if dense_ok else None
    row["rate_log"] = rate
    exact = None
    if A.m == A.n and kernel == 0 and nd <= EXACT_DET_CEILING:
        det = det_exact(A.to_object())
        exact = math.log(abs(det)) / A.d
    row["exact_rate_log"] = exact
    if perturb:
        if A.m == A.n:
            X = rank_perturbation(A, "square-invertible")
            zeros = 0 if X.det_certified_nonzero else None
            row["perturbed_rate_log"] = log_det_plus_rate(singular_spectrum(X.x, zeros)) if dense_ok else None
            row["agreement_fraction"] = X.agreement_fraction
        else:
            row["perturbed_rate_log"] = None
            row["agreement_fraction"] = None
    best = exact if exact is not None else rate
    row["reference_log"] = reference.value if reference is not None else None
    row["gap"] = abs(best - reference.value) if reference is not None and best is not None else None
    return row


def det_approx_experiment(
    F, sofics: Sequence[SoficApprox], perturb: bool = False, reference: ReferenceValue | None | str = "auto"
) -> list[dict]:
    """One row per sofic level: kernel fraction, ``log Det+`` rates and the gap to a reference value."""
    F = as_matrix(F)
    ref = reference_for(F) if reference == "auto" else reference
    return [det_approx_row(F, S, perturb=perturb, reference=ref, level=i) for i, S in enumerate(sofics)]


# --- ball shift overlap -----------------------------------------------------


@dataclass(frozen=True)
class OverlapEstimate:
    estimate: float
    stderr: float
    samples: int

    def __float__(self) -> float:
        return self.estimate


OVERLAP_CHUNK = 8192


def ball_shift_overlap(n: int, R: float, s: float, samples: int = 100_000, seed: int = 0) -> OverlapEstimate:
    """Monte-Carlo ``vol(R B \\ (R B + xi)) / vol(R B)`` for ``||xi|| = s`` in Euclidean ``R^n``.

    Points are uniform in ``R B``; only the first coordinate and the norm
    matter, so they are drawn as ``R U^{1/n} (g_1, chi_{n-1}) / norm``.
    """
    if samples < 10_000:
        raise PreconditionError("at least 10^4 samples are required")
    if n < 1 or not R > 0 or s < 0:
        raise PreconditionError("need n >= 1, R > 0 and s >= 0")
    if s == 0:
        return OverlapEstimate(0.0, 0.0, samples)
    rng = np.random.Generator(np.random.Philox(seed))
    outside = 0
    done = 0
    while done < samples:
        k = min(OVERLAP_CHUNK, samples - done)
        g1 = rng.standard_normal(k)
        rest = rng.chisquare(n - 1, k) if n > 1 else np.zeros(k)
        u = rng.random(k)
        radius = R * u ** (1.0 / n)
        norm = np.sqrt(g1 * g1 + rest)
        x1 = radius * g1 / norm
        # ||x - s e_1||^2 = |x|^2 - 2 s x_1 + s^2
        dist2 = radius * radius - 2 * s * x1 + s * s
        outside += int(np.count_nonzero(dist2 > R * R))
        done += k
    p = outside / samples
    return OverlapEstimate(p, math.sqrt(p * (1 - p) / samples), samples)


__all__ = [
    "xi_membership",
    "BruteCount",
    "brute_count_microstates",
    "packing_bound",
    "entropy_upper_bound",
    "entropy_lower_bound",
    "entropy_bounds_for_lift",
    "EntropyBounds",
    "OmegaTerm",
    "log_small_vector_count",
    "reference_for",
    "det_approx_row",
    "det_approx_experiment",
    "ball_shift_overlap",
    "OverlapEstimate",
]

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fklab.errors import PreconditionError, ResourceCeilingError, ShapeError
from fklab.group_ring import Free, Zd, parse_matrix
from fklab.lattice import det_exact
from fklab.sofic import IntegerBlockMatrix, cyclic_sofic, lift, random_hom_sofic
from fklab.spectral import SpectralMeasure, det_truncated, log_det_plus_rate, singular_spectrum
from fklab.entropy import (
    ball_shift_overlap,
    brute_count_microstates,
    det_approx_experiment,
    entropy_bounds_for_lift,
    entropy_lower_bound,
    entropy_upper_bound,
    log_small_vector_count,
    packing_bound,
    xi_membership,
)

Z1, Z2, F2 = Zd(1), Zd(2), Free(2)


def circulant_dense(N, text="x - 2"):
    return lift(cyclic_sofic([N]), parse_matrix(text, Z1)).to_dense()


def scalar_measure(c, d):
    return singular_spectrum(IntegerBlockMatrix.from_dense(c * np.eye(d, dtype=np.int64), d=d))


# --- approximate kernels ----------------------------------------------------


def test_xi_membership_examples():
    assert xi_membership([[2]], [0.5], 0.3)
    assert not xi_membership([[2]], [0.25], 0.3)
    assert xi_membership([[3, -1], [2, 5]], [4, -7], 1e-9)
    with pytest.raises(ShapeError):
        xi_membership([[1, 2]], [0.5], 0.1)


@pytest.mark.parametrize(
    "T, delta, eps, expected",
    [([[2]], 0.1, 0.2, 2), ([[1]], 0.1, 0.5, 1), ([[1]], 1.0, 0.9, 1), ([[3]], 0.05, 0.25, 3)],
)
def test_brute_count_examples(T, delta, eps, expected):
    assert brute_count_microstates(T, delta, eps, g=120).packing == expected


def test_brute_count_fine_grid():
    bc = brute_count_microstates([[2]], 0.1, 0.2, g=400)
    assert bc.packing == 2
    assert bc.covering >= bc.packing
    assert bc.covering_radius == pytest.approx(0.2 + 1 / 800)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_brute_count_cycle_lift_matches_determinant(N):
    T = circulant_dense(N)
    bc = brute_count_microstates(T, 0.1, 0.2)
    assert bc.packing == abs(det_exact(T)) == 2**N - 1


def test_brute_count_limits():
    with pytest.raises(ResourceCeilingError):
        brute_count_microstates(np.eye(9, dtype=np.int64), 0.1, 0.5)
    with pytest.raises(ResourceCeilingError):
        brute_count_microstates(np.eye(6, dtype=np.int64), 0.01, 0.05)
    with pytest.raises(PreconditionError):
        brute_count_microstates([[2]], 0.1, 0.2, g=10)


def brute_cases():
    rng = np.random.default_rng(17)
    cases = []
    while len(cases) < 12:
        side = 1 + len(cases) % 2
        T = rng.integers(-3, 4, size=(side, side))
        if det_exact(T) != 0:
            cases.append(T)
    return cases


@pytest.mark.parametrize("T", brute_cases(), ids=lambda T: str(T.tolist()))
@pytest.mark.parametrize("delta, eps", [(0.02, 0.1), (0.04, 0.2), (0.05, 0.3)])
def test_packing_bound_dominates_brute_count(T, delta, eps):
    bc = brute_count_microstates(T, delta, eps)
    assert bc.packing <= packing_bound(T, delta, eps) * (1 + 1e-9)


def test_packing_bound_contract():
    assert packing_bound([[2]], 0.01, 0.2) == pytest.approx(2)
    with pytest.raises(PreconditionError):
        packing_bound([[2]], 0.1, 0.2)
    with pytest.raises(PreconditionError):
        packing_bound([[1, 1], [1, 1]], 0.01, 0.2)


# --- entropy bounds ---------------------------------------------------------


def test_upper_bound_examples():
    assert entropy_upper_bound(scalar_measure(2, 6), 0.01, 0.1) == pytest.approx(math.log(2))
    M5 = singular_spectrum(lift(cyclic_sofic([5]), parse_matrix("x - 2", Z1)))
    assert entropy_upper_bound(M5, 0.05, 0.4) == pytest.approx(math.log(31) / 5)
    assert entropy_upper_bound(SpectralMeasure.from_values([0.3, 0.5], d=2), 0.2, 1.0) == 0


def test_upper_bound_rejects_bad_parameters_and_kernels():
    with pytest.raises(PreconditionError):
        entropy_upper_bound(scalar_measure(2, 3), 0.1, 0.2)
    zero = singular_spectrum(lift(cyclic_sofic([4]), parse_matrix("x + 1", Z1)))
    with pytest.raises(PreconditionError):
        entropy_upper_bound(zero, 0.01, 0.2)
    with pytest.raises(PreconditionError):
        entropy_lower_bound(zero, 0.01, 0.2)


def test_upper_bound_uses_open_cutoff():
    M = SpectralMeasure.from_values([0.5, 2.0], d=2)
    # an atom exactly at 4 delta / eps is excluded
    assert entropy_upper_bound(M, 0.025, 0.2) == pytest.approx(0.5 * math.log(2))


def test_lower_bound_scalar_breakdown():
    d, eps, delta = 64, 0.05, 0.0025
    b = entropy_lower_bound(scalar_measure(2, d), delta, eps)
    assert b.tail_integral == pytest.approx(math.log(2))
    assert b.truncated_term == 0
    assert b.M == pytest.approx(2)
    expected = math.log(2) - (b.omega_kernel.log_omega + b.omega_rows.log_omega) / d
    assert b.lower == pytest.approx(expected)
    assert b.lower < b.upper == pytest.approx(math.log(2))
    assert not b.bound_mode


def test_lower_bound_improves_as_eps_shrinks():
    M = scalar_measure(2, 1024)
    lows = [entropy_lower_bound(M, eps * eps, eps).lower for eps in (0.1, 0.01, 0.001)]
    assert lows == sorted(lows)
    assert math.log(2) - lows[-1] < 0.05


def test_lower_bound_rejects_small_M():
    with pytest.raises(PreconditionError):
        entropy_lower_bound(scalar_measure(2, 4), 0.01, 0.1, M=1.0)


def test_omega_switches_to_bound_mode():
    exact = log_small_vector_count(10, 0.5)
    assert not exact.bound_mode and exact.log_omega == pytest.approx(math.log(sum(2**k * math.comb(10, k) * math.comb(5, k) for k in range(6))))
    big = log_small_vector_count(5000, 0.5)
    assert big.bound_mode and big.log_omega > 0


@pytest.mark.parametrize("N", [4, 8, 16, 32])
def test_bounds_sandwich_circulant(N):
    S = cyclic_sofic([N])
    target = math.log(2**N - 1) / N
    for eps in (0.2, 0.1, 0.05):
        b = entropy_bounds_for_lift(parse_matrix("x - 2", Z1), S, eps * eps, eps)
        assert b.lower <= b.upper + 1e-9
        assert b.upper == pytest.approx(target, abs=1e-9)
        assert b.lower <= target


def test_bounds_gap_shrinks():
    gaps = []
    for eps in (0.2, 0.1, 0.05, 0.02):
        b = entropy_bounds_for_lift(parse_matrix("x - 2", Z1), cyclic_sofic([128]), eps * eps, eps)
        gaps.append(b.upper - b.lower)
    assert gaps == sorted(gaps, reverse=True)


def test_bounds_for_singular_lift_use_perturbation():
    b = entropy_bounds_for_lift(parse_matrix("x + 1", Z1), cyclic_sofic([8]), 0.01, 0.1)
    assert b.lower <= b.upper


@pytest.mark.parametrize("N", [1, 2, 3, 4, 5, 6])
def test_microstate_count_consistent_with_bounds(N):
    delta, eps = 0.1, 0.5
    bc = brute_count_microstates(circulant_dense(N), delta, eps)
    b = entropy_bounds_for_lift(parse_matrix("x - 2", Z1), cyclic_sofic([N]), delta, eps)
    rate = math.log(bc.packing) / N
    assert b.lower - 0.2 <= rate <= b.upper + 0.2


measures = st.lists(st.floats(0.05, 6.0), min_size=2, max_size=12).map(lambda v: SpectralMeasure.from_values(v, d=len(v)))


@settings(max_examples=60, deadline=None)
@given(measures, st.floats(0.001, 0.05), st.floats(0.21, 1.0))
def test_sandwich_on_arbitrary_measures(M, delta, eps):
    b = entropy_lower_bound(M, delta, eps)
    assert b.lower <= b.upper + 1e-9


# 4 delta < eps means the cutoff c = 4 delta / eps lies in (0, 1)
@settings(max_examples=60, deadline=None)
@given(measures, st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_upper_bound_decreases_to_rate_as_cutoff_shrinks(M, a, b):
    lo, hi = sorted((a, b))
    assert entropy_upper_bound(M, lo / 4, 1.0) <= entropy_upper_bound(M, hi / 4, 1.0) + 1e-12
    small = min(float(min(M.values)), 1.0) / 2
    assert entropy_upper_bound(M, small / 4, 1.0) == pytest.approx(log_det_plus_rate(M), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(measures, st.floats(0.01, 0.99))
def test_upper_bound_is_rate_minus_truncation(M, c):
    assert entropy_upper_bound(M, c / 4, 1.0) == pytest.approx(log_det_plus_rate(M) - det_truncated(M, c), abs=1e-12)


# --- determinant approximation ----------------------------------------------


def test_det_approx_x_minus_two():
    rows = det_approx_experiment(parse_matrix("x - 2", Z1), [cyclic_sofic([N]) for N in (16, 64)])
    assert [r["degree"] for r in rows] == [16, 64]
    assert rows[0]["exact_rate_log"] == pytest.approx(math.log(2**16 - 1) / 16, abs=1e-15)
    assert rows[0]["gap"] < 1e-4
    assert rows[1]["gap"] < rows[0]["gap"]
    assert all(r["kernel_fraction"] == "0" for r in rows)


def test_det_approx_x_plus_one():
    rows = det_approx_experiment(parse_matrix("x + 1", Z1), [cyclic_sofic([N]) for N in (17, 65, 16)], perturb=True)
    assert rows[0]["rate_log"] == pytest.approx(math.log(2) / 17)
    assert rows[1]["rate_log"] == pytest.approx(math.log(2) / 65)
    assert rows[2]["kernel_fraction"] == "1/16"
    assert rows[2]["exact_rate_log"] is None
    assert rows[2]["agreement_fraction"] < 1
    assert rows[0]["agreement_fraction"] == 1


def test_det_approx_free_group_without_reference():
    rows = det_approx_experiment(parse_matrix("a + b - 1", F2), [random_hom_sofic(2, 30, seed=2)], reference=None)
    assert rows[0]["reference_log"] is None and rows[0]["gap"] is None
    assert rows[0]["rate_log"] >= -1e-6


# --- ball shift overlap -----------------------------------------------------


def test_overlap_examples():
    assert ball_shift_overlap(5, 1.0, 0.0).estimate == 0
    one = ball_shift_overlap(1, 1.0, 1.0, samples=100_000, seed=3)
    assert abs(one.estimate - 0.5) <= 4 * one.stderr
    high = ball_shift_overlap(200, 1.0, 0.01 / math.sqrt(200), samples=100_000, seed=3)
    assert high.estimate < 0.02


def test_overlap_is_reproducible_and_validated():
    a = ball_shift_overlap(10, 2.0, 0.3, samples=20_000, seed=9)
    b = ball_shift_overlap(10, 2.0, 0.3, samples=20_000, seed=9)
    assert a == b
    with pytest.raises(PreconditionError):
        ball_shift_overlap(3, 1.0, 0.1, samples=100)


def test_overlap_matches_exact_interval_formula():
    # in one dimension the shifted-out fraction is min(1, s / (2R))
    for s in (0.2, 0.7, 1.5):
        est = ball_shift_overlap(1, 1.0, s, samples=50_000, seed=1)
        assert abs(est.estimate - min(1.0, s / 2)) <= 4 * est.stderr + 1e-12

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fklab.errors import GroupMismatchError, ParseError, ResourceCeilingError, ShapeError
from fklab.group_ring import (
    Free,
    GroupRingElement,
    GroupRingMatrix,
    Zd,
    adjoint,
    format_element,
    format_matrix,
    l1_norm,
    linf_coeff,
    mat_adjoint,
    mat_l1_bound,
    mat_multiply,
    mat_trace,
    moment,
    moment_sequence,
    multiply,
    parse_element,
    parse_group,
    parse_matrix,
    trace_tau,
)

Z1, Z2, F2 = Zd(1), Zd(2), Free(2)


def el(text, group=Z1):
    return parse_element(text, group)


# --- parsing and printing ---------------------------------------------------


def test_parse_literal():
    f = el("x - 2")
    assert dict(f.coeffs) == {(1,): 1, (0,): -2}


def test_parse_merges_coefficients():
    f = el("a*b^-1 + a*b^-1", F2)
    assert dict(f.coeffs) == {((1, 1), (2, -1)): 2}


def test_parse_cancels_exponents():
    assert dict(el("x*x^-1").coeffs) == {(0,): 1}


def test_parse_drops_zero_terms():
    assert not el("x - x")
    assert format_element(el("x - x")) == "0"


@pytest.mark.parametrize("text", ["x +", "2**x", "x^", "(x)", "x ^ a"])
def test_parse_syntax_errors_report_position(text):
    with pytest.raises(ParseError) as exc:
        el(text)
    assert exc.value.position is not None


def test_parse_rejects_generator_outside_group():
    with pytest.raises(ParseError):
        el("y", Z1)
    with pytest.raises(ParseError):
        el("c", F2)


def test_parse_group_descriptors():
    assert parse_group("Zd(3)") == Zd(3)
    assert parse_group(" Free( 2 ) ") == Free(2)
    with pytest.raises(ParseError):
        parse_group("Z3")


@pytest.mark.parametrize(
    "text, group",
    [("-2 + x", Z1), ("3 + x + y", Z2), ("1 + a + b^-1 + a*b*a^-1", F2), ("-x^-1*y^2 + 5", Z2)],
)
def test_round_trip(text, group):
    f = el(text, group)
    assert el(format_element(f), group) == f


def test_canonical_order_free_words_length_then_lex():
    f = el("a*b + b + a + 7", F2)
    assert format_element(f) == "7 + a + b + a*b"


def test_matrix_parsing_and_printing():
    F = parse_matrix("[x, 1; 0, x - 2]", Z1)
    assert F.shape == (2, 2)
    assert format_matrix(F) == "[x, 1; 0, -2 + x]"
    assert parse_matrix("x - 2", Z1).shape == (1, 1)


# --- products and adjoints --------------------------------------------------


def test_multiply_polynomial_identity():
    assert el("x + 1") * el("x - 1") == el("x^2 - 1")


def test_multiply_word_reduction():
    assert multiply(el("a + b", F2), el("a^-1", F2)) == el("1 + b*a^-1", F2)


def test_multiply_full_cancellation():
    assert el("a^-1*b", F2) * el("b^-1*a", F2) == el("1", F2)


def test_multiply_group_mismatch():
    with pytest.raises(GroupMismatchError):
        multiply(el("x"), el("a", F2))


def test_adjoint_examples():
    assert adjoint(el("2 + 3*x")) == el("2 + 3*x^-1")
    assert adjoint(el("a + b", F2)) == el("a^-1 + b^-1", F2)
    F = parse_matrix("[x, y]", Z2)
    assert mat_adjoint(F) == parse_matrix("[x^-1; y^-1]", Z2)


def test_trace_examples():
    assert trace_tau(el("x + 1")) == 1
    f = el("a + b", F2)
    assert trace_tau(adjoint(f) * f) == 2
    assert mat_trace(GroupRingMatrix.identity(F2, 3)) == 3
    with pytest.raises(ShapeError):
        mat_trace(parse_matrix("[x, y]", Z2))


@pytest.mark.parametrize("k, expected", [(1, 2), (2, 6), (3, 20)])
def test_moments_of_a_plus_b(k, expected):
    assert moment(parse_matrix("a + b", F2), k) == expected


def test_moment_sequence_starts_with_size():
    assert moment_sequence(parse_matrix("a + b", F2), 3) == [1, 2, 6, 20]


def test_norms():
    assert l1_norm(el("x - 2")) == 3
    assert linf_coeff(el("x - 2")) == 2
    assert mat_l1_bound(parse_matrix("x - 2", Z1)) == 3
    assert mat_l1_bound(parse_matrix("[1, 1; 1, 1]", Z1)) == 2


def test_support_ceiling_is_explicit():
    f = el("a + b + a^-1 + b^-1", F2)
    with pytest.raises(ResourceCeilingError):
        moment(GroupRingMatrix.scalar(f), 8, support_limit=1000)


def test_abelian_shortcut_matches_generic_product():
    f = el("3 + x - 2*y + x*y^-1", Z2)
    F = GroupRingMatrix.scalar(f)
    P = mat_multiply(mat_adjoint(F), F)
    Q = P
    generic = [1, mat_trace(P)]
    for _ in range(3):
        Q = mat_multiply(Q, P)
        generic.append(mat_trace(Q))
    assert moment_sequence(F, 4) == generic


# --- properties -------------------------------------------------------------

coef = st.integers(-3, 3)


@st.composite
def zd_elements(draw, d=2):
    n = draw(st.integers(0, 4))
    terms = {tuple(draw(st.integers(-2, 2)) for _ in range(d)): draw(coef) for _ in range(n)}
    return GroupRingElement(Zd(d), terms)


@st.composite
def free_elements(draw):
    n = draw(st.integers(0, 4))
    terms = {}
    for _ in range(n):
        letters = draw(st.lists(st.tuples(st.integers(1, 2), st.sampled_from([-1, 1])), max_size=3))
        g = ()
        for s, e in letters:
            g = F2.mul(g, ((s, e),))
        terms[g] = terms.get(g, 0) + draw(coef)
    return GroupRingElement(F2, terms)


@settings(max_examples=60, deadline=None)
@given(free_elements(), free_elements(), free_elements())
def test_free_ring_axioms(f, g, h):
    assert (f * g) * h == f * (g * h)
    assert f * (g + h) == f * g + f * h
    assert adjoint(f * g) == adjoint(g) * adjoint(f)
    assert adjoint(adjoint(f)) == f
    assert trace_tau(f * adjoint(f)) >= 0


@settings(max_examples=60, deadline=None)
@given(zd_elements(), zd_elements(), zd_elements())
def test_zd_ring_axioms(f, g, h):
    assert (f * g) * h == f * (g * h)
    assert f * g == g * f
    assert (f + g) * h == f * h + g * h


@settings(max_examples=40, deadline=None)
@given(st.lists(free_elements(), min_size=4, max_size=4), st.lists(free_elements(), min_size=4, max_size=4))
def test_matrix_trace_property(a, b):
    F = GroupRingMatrix(F2, [a[:2], a[2:]])
    G = GroupRingMatrix(F2, [b[:2], b[2:]])
    assert mat_trace(F @ G) == mat_trace(G @ F)


@settings(max_examples=40, deadline=None)
@given(st.lists(free_elements(), min_size=2, max_size=2), st.integers(1, 3))
def test_moment_positivity_and_spectral_bound(entries, k):
    F = GroupRingMatrix(F2, [entries])
    m = moment(F, k)
    assert 0 <= m <= mat_l1_bound(F) ** (2 * k) * F.n
    assert moment(F, 1) == sum(c * c for f in entries for _, c in f.items())

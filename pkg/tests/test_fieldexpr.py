from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brachia.errors import (
    EvaluationDomainError,
    ExprSyntaxError,
    UnknownIdentifier,
    VariableIndexError,
)
from brachia.fieldexpr import (
    Jet,
    ScalarExpr,
    central_difference_jacobian,
    eval_field,
    field_jet,
    iterated_brackets,
    jacobian,
    lie_bracket,
    linear_combination,
    nested_bracket,
    parse_field,
    parse_node,
    to_text,
    word_label,
)

from conftest import HEIS_F1, HEIS_F2


# --- parsing -----------------------------------------------------------------

def test_constant_field():
    f = parse_field(["1", "0", "0"], 3)
    assert np.array_equal(eval_field(f, [3.0, -2.0, 7.0]), [1.0, 0.0, 0.0])


def test_slab_drift_evaluates():
    f = parse_field(["0", "0", "1+x1"], 3)
    assert np.array_equal(eval_field(f, [0.5, 0.0, 0.0]), [0.0, 0.0, 1.5])
    assert np.array_equal(eval_field(f, [-1.0, 0.0, 0.0]), [0.0, 0.0, 0.0])


def test_product_with_function():
    f = parse_field(["x2*sin(x1)", "0"], 2)
    assert eval_field(f, [0.0, 7.0])[0] == 0.0


def test_heisenberg_field_substitution():
    f = parse_field(HEIS_F2, 3)
    assert np.array_equal(eval_field(f, [2.0, 0.0, 0.0]), [0.0, 1.0, 1.0])


@pytest.mark.parametrize(
    "text, x, expected",
    [
        ("2^3^1", [0.0], 8.0),  # exponent must be an integer token
        ("-x1^2", [3.0], -9.0),  # ^ binds tighter than unary minus
        ("1-2-3", [0.0], -4.0),  # left associative
        ("8/4/2", [0.0], 1.0),
        ("2*3+4*5", [0.0], 26.0),
        ("-(1+x1)*2", [1.0], -4.0),
        ("1.5e2 + 2.5E-1", [0.0], 150.25),
        ("exp(0) + cos(0)", [0.0], 2.0),
        ("  x1  *  x1 ", [4.0], 16.0),
        ("x1^0", [5.0], 1.0),
    ],
)
def test_precedence_and_literals(text, x, expected):
    if text == "2^3^1":
        with pytest.raises(ExprSyntaxError):
            ScalarExpr.parse(text, 1)
        return
    assert ScalarExpr.parse(text, 1)(x) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("text", ["1+", "(x1", "x1)", "*2", "2^x1", "2^1.5", "", "1 2", "sin x1", "x"])
def test_syntax_errors(text):
    with pytest.raises(ExprSyntaxError):
        ScalarExpr.parse(text, 2)


def test_syntax_error_reports_position():
    with pytest.raises(ExprSyntaxError) as info:
        ScalarExpr.parse("1 + * 2", 1)
    assert info.value.pos == 4


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        ScalarExpr.parse("tan(x1)", 1)
    with pytest.raises(UnknownIdentifier):
        ScalarExpr.parse("y1", 1)


def test_variable_out_of_range():
    with pytest.raises(VariableIndexError):
        ScalarExpr.parse("x4", 3)
    with pytest.raises(VariableIndexError):
        ScalarExpr.parse("x0", 3)


def test_division_by_zero_is_domain_error():
    f = parse_field(["1/x1"], 1)
    with pytest.raises(EvaluationDomainError):
        eval_field(f, [0.0])


def test_overflow_is_domain_error():
    f = parse_field(["exp(x1)"], 1)
    with pytest.raises(EvaluationDomainError):
        eval_field(f, [1e4])


def test_expressions_are_immutable():
    e = ScalarExpr.parse("x1+1", 1)
    with pytest.raises(Exception):
        e.n = 4  # type: ignore[misc]


# --- random expressions ------------------------------------------------------

def random_expr(rng: np.random.Generator, n: int, depth: int = 3) -> str:
    if depth == 0 or rng.uniform() < 0.25:
        if rng.uniform() < 0.5:
            return f"x{rng.integers(1, n + 1)}"
        return f"{rng.uniform(-2, 2):.3f}"
    kind = rng.integers(0, 7)
    a = random_expr(rng, n, depth - 1)
    b = random_expr(rng, n, depth - 1)
    if kind == 0:
        return f"({a})+({b})"
    if kind == 1:
        return f"({a})-({b})"
    if kind == 2:
        return f"({a})*({b})"
    if kind == 3:
        return f"({a})/(2+({b})^2)"
    if kind == 4:
        return f"({a})^{rng.integers(0, 4)}"
    if kind == 5:
        return f"{['sin', 'cos'][rng.integers(0, 2)]}({a})"
    return f"exp(({a})/4)"


def random_poly(rng: np.random.Generator, n: int) -> str:
    terms = []
    for _ in range(4):
        c = rng.uniform(-1, 1)
        mono = "*".join(f"x{i + 1}^{rng.integers(0, 3)}" for i in range(n))
        terms.append(f"({c:.4f})*{mono}")
    return "+".join(terms)


def test_round_trip_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(1, 4))
        text = random_expr(rng, n)
        e1 = ScalarExpr.parse(text, n)
        e2 = ScalarExpr.parse(e1.text(), n)
        assert e2.node == e1.node
        for _ in range(20):
            x = list(rng.uniform(-1.5, 1.5, n))
            assert e2(x) == e1(x)


def test_round_trip_negative_literals():
    node = parse_node("-2*x1 - (-3)", 1)
    again = parse_node(to_text(node), 1)
    assert ScalarExpr(again, 1)([1.0]) == -2 + 3


def test_ad_matches_central_differences():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        f = parse_field([random_expr(rng, n) for _ in range(n)], n)
        q = rng.uniform(-1, 1, n)
        J = jacobian(f, q)
        F = central_difference_jacobian(f, q, 1e-5)
        scale = np.maximum(1.0, np.abs(J))
        worst = max(worst, float(np.max(np.abs(J - F) / scale)))
    assert worst <= 1e-6


@pytest.mark.parametrize(
    "texts, q, expected",
    [
        (["x2", "0"], [3.0, -1.0], [[0, 1], [0, 0]]),
        (["0", "0", "1+x1"], [0.0, 0.0, 0.0], [[0, 0, 0], [0, 0, 0], [1, 0, 0]]),
        (["sin(x1)", "0"], [math.pi / 2, 0.0], [[0, 0], [0, 0]]),
    ],
)
def test_jacobian_examples(texts, q, expected):
    J = jacobian(parse_field(texts, len(texts)), q)
    assert np.allclose(J, expected, atol=1e-16)


# --- brackets ----------------------------------------------------------------

def test_heisenberg_bracket_exact():
    f1, f2 = parse_field(HEIS_F1, 3), parse_field(HEIS_F2, 3)
    assert np.array_equal(lie_bracket(f1, f2, np.zeros(3)), [0.0, 0.0, 1.0])
    rng = np.random.default_rng(2)
    for _ in range(10):
        q = rng.uniform(-3, 3, 3)
        assert np.array_equal(lie_bracket(f1, f2, q), [0.0, 0.0, 1.0])


def test_slab_drift_bracket():
    f0 = parse_field(["0", "0", "1+x1"], 3)
    f1 = parse_field(["1", "0", "0"], 3)
    assert np.array_equal(lie_bracket(f0, f1, np.zeros(3)), [0.0, 0.0, -1.0])


def test_bracket_antisymmetric_and_self_zero():
    rng = np.random.default_rng(7)
    for _ in range(20):
        f = parse_field([random_expr(rng, 3) for _ in range(3)], 3)
        g = parse_field([random_expr(rng, 3) for _ in range(3)], 3)
        q = rng.uniform(-1, 1, 3)
        assert np.allclose(lie_bracket(f, g, q), -lie_bracket(g, f, q), atol=1e-14)
        assert np.allclose(lie_bracket(f, f, q), 0.0, atol=1e-14)


def test_bracket_accepts_evaluated_pairs():
    f1, f2 = parse_field(HEIS_F1, 3), parse_field(HEIS_F2, 3)
    q = np.array([0.3, -0.2, 1.0])
    pair1 = (eval_field(f1, q), jacobian(f1, q))
    assert np.array_equal(lie_bracket(pair1, f2, q), lie_bracket(f1, f2, q))


def test_bracket_bilinear():
    rng = np.random.default_rng(8)
    f = parse_field([random_poly(rng, 3) for _ in range(3)], 3)
    g = parse_field([random_poly(rng, 3) for _ in range(3)], 3)
    h = parse_field([random_poly(rng, 3) for _ in range(3)], 3)
    q = rng.uniform(-1, 1, 3)
    combo = linear_combination([2.0, -3.0], [g, h])
    lhs = lie_bracket(f, combo, q)
    rhs = 2.0 * lie_bracket(f, g, q) - 3.0 * lie_bracket(f, h, q)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_jacobi_identity_random_polynomials():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(30):
        fs = [parse_field([random_poly(rng, 3) for _ in range(3)], 3) for _ in range(3)]
        q = rng.uniform(-1, 1, 3)
        a = nested_bracket(fs, (0, 1, 2), q)
        b = nested_bracket(fs, (1, 2, 0), q)
        c = nested_bracket(fs, (2, 0, 1), q)
        scale = max(1.0, *(float(np.linalg.norm(v)) for v in (a, b, c)))
        worst = max(worst, float(np.linalg.norm(a + b + c)) / scale)
    assert worst <= 1e-10


def test_nested_bracket_matches_explicit_second_bracket():
    # [f1, [f1, f0]] for f0 = (0, 0, x1^2), f1 = d/dx1: should be (0, 0, 2)
    f0 = parse_field(["0", "0", "x1^2"], 3)
    f1 = parse_field(["1", "0", "0"], 3)
    v = nested_bracket([f0, f1], (1, 1, 0), np.array([0.4, 0.0, 0.0]))
    assert np.allclose(v, [0.0, 0.0, 2.0], atol=1e-14)


def test_iterated_brackets_commuting():
    fs = [parse_field(["1", "0", "0"], 3), parse_field(["0", "1", "0"], 3)]
    out = iterated_brackets(fs, np.array([0.2, 0.3, 0.4]), depth=3)
    for word, vec in out:
        if len(word) > 1:
            assert np.allclose(vec, 0.0)


def test_iterated_brackets_heisenberg_depth2():
    fs = [parse_field(HEIS_F1, 3), parse_field(HEIS_F2, 3)]
    out = dict(iterated_brackets(fs, np.zeros(3), depth=2))
    assert [len(w) for w in out] == [1, 1, 2, 2]
    assert np.allclose(out[(0, 1)], [0, 0, 1])
    assert np.allclose(out[(1, 0)], [0, 0, -1])
    assert word_label((0, 1)) == "[f1,f2]"


def test_iterated_brackets_single_field():
    fs = [parse_field(["1", "x1", "0"], 3)]
    out = iterated_brackets(fs, np.zeros(3), depth=5)
    assert [w for w, _ in out] == [(0,)]


def test_iterated_brackets_default_depth():
    fs = [parse_field(HEIS_F1, 3), parse_field(HEIS_F2, 3)]
    out = iterated_brackets(fs, np.zeros(3))
    assert max(len(w) for w, _ in out) == 6


# --- jets --------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(
    st.floats(-1.5, 1.5),
    st.floats(-1.5, 1.5),
)
def test_jet_derivatives_match_closed_form(a, b):
    # f = sin(x1) * exp(x2): every mixed partial is explicit
    f = parse_field(["sin(x1)*exp(x2)", "0"], 2)
    J = field_jet(f, [a, b], 3)[0]
    assert J.value == pytest.approx(math.sin(a) * math.exp(b), abs=1e-14)
    assert J.coefficient((1, 0)) == pytest.approx(math.cos(a) * math.exp(b), abs=1e-14)
    assert J.coefficient((2, 1)) == pytest.approx(-math.sin(a) * math.exp(b) / 2, abs=1e-14)
    assert J.coefficient((0, 3)) == pytest.approx(math.sin(a) * math.exp(b) / 6, abs=1e-14)


def test_jet_reciprocal():
    x = Jet.variable([0.5], 0, 4)
    r = 1.0 / (1.0 + x)  # 1/(1.5 + h) = sum (-h)^k / 1.5^(k+1)
    for k in range(5):
        assert r.coefficient((k,)) == pytest.approx((-1) ** k / 1.5 ** (k + 1), rel=1e-14)

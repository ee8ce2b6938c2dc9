import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategies import ast_nodes, central_difference, smooth_expressions
from uniqcert.expr import (
    Call,
    Compare,
    Div,
    DomainError,
    Expr,
    ExprSyntaxError,
    Mul,
    Num,
    Piecewise,
    Pow,
    Sub,
    UnknownFunction,
    UnknownVariable,
    Var,
    kink_expressions,
    parse,
    to_text,
)

EXAMPLE = "piecewise(ln(1+t^2) < abs(x), t, t <= 0, 0, (exp(abs(x))-1)/t)"


def test_product_ast():
    assert parse("t*x").root == Mul(Var("t"), Var("x"))


def test_example_branch_ast():
    e = parse("(exp(abs(x))-1)/t")
    assert e.root == Div(Sub(Call("exp", (Call("abs", (Var("x"),)),)), Num(1.0)), Var("t"))


@pytest.mark.parametrize(
    "text, offset",
    [("t + ", 4), ("t * (x", 6), ("2 ** t", 3), ("sin()", 4), ("t $ x", 2), ("", 0)],
)
def test_syntax_error_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text)
    assert info.value.offset == offset


def test_offset_is_in_bytes():
    # a no-break space is whitespace but two bytes long in UTF-8
    with pytest.raises(ExprSyntaxError) as info:
        parse("t +\u00a0*")
    assert info.value.offset == 5
    with pytest.raises(ExprSyntaxError) as info:
        parse("t + é")
    assert info.value.offset == 4


def test_pointer_marks_failing_byte():
    with pytest.raises(ExprSyntaxError) as info:
        parse("t + ")
    line, caret = info.value.pointer().split("\n")
    assert line == "t + "
    assert caret.index("^") == 4


def test_unknown_function_and_variable():
    with pytest.raises(UnknownFunction) as info:
        parse("t + sinh(x)")
    assert info.value.offset == 4
    with pytest.raises(UnknownVariable):
        parse("t*y")
    with pytest.raises(UnknownVariable):
        parse("t*x", variables=("t",))


def test_exponent_must_be_constant():
    with pytest.raises(ExprSyntaxError):
        parse("x^t")
    assert parse("x^(1/2)").eval({"x": 4.0}) == pytest.approx(2.0)
    assert parse("pow(x, 3)").eval({"x": 2.0}) == 8.0


def test_precedence_and_associativity():
    assert parse("-x^2").eval({"x": 3.0}) == -9.0
    assert parse("2*x^-1").eval({"x": 4.0}) == 0.5
    assert parse("8/4/2").eval({}) == 1.0
    assert parse("8-4-2").eval({}) == 2.0
    assert parse("1+2*3").eval({}) == 7.0


@pytest.mark.parametrize(
    "text, env, value",
    [
        ("t*x", {"t": 2, "x": 3}, 6.0),
        ("exp(x)-1", {"x": 0}, 0.0),
        ("(exp(abs(x))-1)/t", {"t": 0.5, "x": math.log(1.25)}, 0.5),
        ("pi + e", {}, math.pi + math.e),
        ("1.5e-3*t", {"t": 2}, 3e-3),
        ("min(t, x) + max(t, x)", {"t": 1, "x": -2}, -1.0),
    ],
)
def test_eval_examples(text, env, value):
    assert parse(text).eval(env) == pytest.approx(value, rel=1e-15, abs=1e-15)


@pytest.mark.parametrize(
    "text, var, env, value",
    [
        ("t*x", "t", {"t": 2, "x": 3}, 3.0),
        ("exp(x)-1", "x", {"x": 0}, 1.0),
        ("abs(x)", "x", {"x": 0}, 0.0),
        ("min(x, 0)", "x", {"x": 0}, 1.0),
        ("max(0, x)", "x", {"x": 0}, 0.0),
        ("sqrt(x)", "x", {"x": 4}, 0.25),
        ("ln(x)", "x", {"x": 2}, 0.5),
        ("x^3", "x", {"x": 2}, 12.0),
    ],
)
def test_partial_examples(text, var, env, value):
    assert parse(text).partial(var, env) == pytest.approx(value, rel=1e-15)


def test_second_partial():
    assert parse("exp(x)-1").partial("x", {"x": 0.3}, order=2) == pytest.approx(math.exp(0.3), rel=1e-15)
    assert parse("t*x^2").partial("x", {"t": 2, "x": 5}, order=2) == pytest.approx(4.0)


def test_piecewise_first_match():
    e = parse(EXAMPLE)
    assert isinstance(e.root, Piecewise)
    assert e.eval({"t": 0.5, "x": 2.0}) == 0.5  # ln(1.25) < 2
    assert e.eval({"t": -1.0, "x": 0.0}) == 0.0
    assert e.eval({"t": 0.5, "x": 0.1}) == pytest.approx((math.exp(0.1) - 1) / 0.5)
    # both conditions hold at t=0, x=1: first branch wins
    assert e.eval({"t": 0.0, "x": 1.0}) == 0.0
    assert isinstance(e.root.branches[0][0], Compare)


def test_domain_errors_name_subexpression():
    with pytest.raises(DomainError) as info:
        parse("t + ln(x)").eval({"t": 1, "x": -1})
    assert "ln(x)" in str(info.value)
    with pytest.raises(DomainError):
        parse("1/x").eval({"x": 0})
    with pytest.raises(DomainError):
        parse("sqrt(x)").eval({"x": np.array([1.0, -1.0])})
    with pytest.raises(DomainError):
        parse("exp(x)").eval({"x": 1e4})


def test_missing_binding():
    with pytest.raises(UnknownVariable):
        parse("t*x").eval({"t": 1.0})


def test_vector_eval_matches_scalar():
    e = parse("sin(t)*exp(x) - abs(t - x)")
    ts = np.linspace(-1, 1, 11)
    xs = np.linspace(0, 2, 11)
    vec = e.eval({"t": ts, "x": xs})
    assert np.array_equal(vec, [e.eval({"t": a, "x": b}) for a, b in zip(ts, xs)])
    dvec = e.partial("t", {"t": ts, "x": xs})
    assert np.allclose(dvec, [e.partial("t", {"t": a, "x": b}) for a, b in zip(ts, xs)], rtol=0, atol=1e-15)


def test_expm1_rewrite_keeps_small_values_accurate():
    e = parse("exp(x)-1")
    assert e.eval({"x": 1e-12}) == math.expm1(1e-12)
    assert e.partial("x", {"x": 1e-12}) == pytest.approx(math.exp(1e-12), rel=1e-15)


def test_kink_expressions():
    kinks = {str(k) for k in kink_expressions(parse("abs(t - 1) + max(x, t)"))}
    assert kinks == {"t-1", "x-t"}


def test_constant_and_rename():
    assert Expr.constant(-2.5).eval({}) == -2.5
    e = parse("sqrt(r) + r*t").rename({"r": "x"})
    assert e.eval({"x": 4.0, "t": 1.0}) == 6.0
    assert "sqrt" in str(e)


def test_integral_literals_print_without_decimal_point():
    assert str(parse("t^2")) == "t^2"
    assert str(parse("1.5*t")) == "1.5*t"


@settings(max_examples=300, deadline=None)
@given(ast_nodes())
def test_print_parse_roundtrip(node):
    text = to_text(node)
    assert parse(text).root == node


@settings(max_examples=100, deadline=None)
@given(smooth_expressions(), st.floats(-1, 1), st.floats(-1, 1))
def test_partials_match_central_differences(text, t, x):
    e = parse(text)
    point = {"t": t, "x": x}
    for var in ("t", "x"):
        exact = e.partial(var, point)
        approx = central_difference(e.eval, point, var)
        assert abs(exact - approx) <= 1e-5 * (1 + abs(exact))


@settings(max_examples=50, deadline=None)
@given(smooth_expressions(), st.floats(-1, 1), st.floats(-1, 1))
def test_eval_is_deterministic(text, t, x):
    a = parse(text).eval({"t": t, "x": x})
    b = parse(text).eval({"t": t, "x": x})
    assert a == b or (math.isnan(a) and math.isnan(b))
    assert math.isfinite(a)


def test_pow_node_from_call():
    assert parse("pow(t, 2)").root == Pow(Var("t"), Num(2.0))

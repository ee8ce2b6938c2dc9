import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uniqcert.calculus import integrate1d
from uniqcert.cov import CovProblem, IdentityReport, cov_lhs, cov_rhs, leibniz_check, verify_cov
from uniqcert.expr import DomainError, parse


def problem(f, x, a, b):
    return CovProblem(parse(f), parse(x), a, b)


@pytest.mark.parametrize(
    "f, x, a, b, lhs",
    [
        ("t*x", "t", 0, 1, 1 / 3),
        ("x", "t^2", 0, 1, 0.5),
        ("t", "sin(t)", 0, math.pi, -2.0),
        ("exp(t+x)", "t", 0, 1, (math.e**2 - 1) / 2),
        ("t*x + exp(t)", "2", 0, 1, 0.0),
    ],
)
def test_both_sides_match_closed_form(f, x, a, b, lhs):
    p = problem(f, x, a, b)
    rep = verify_cov(p, 1e-8)
    assert rep.passed
    assert rep.lhs.value == pytest.approx(lhs, abs=1e-10)
    assert rep.rhs.value == pytest.approx(lhs, abs=1e-10)


def test_rhs_pieces_for_tx():
    # 1/2 from the boundary integral minus 1/6 from the nested term
    p = problem("t*x", "t", 0, 1)
    assert cov_rhs(p).value == pytest.approx(0.5 - 1 / 6, abs=1e-12)


def test_constant_path_is_exactly_zero():
    p = problem("t*x + exp(t)", "2", 0, 1)
    assert cov_lhs(p).value == 0.0
    assert cov_rhs(p).value == 0.0


@pytest.mark.parametrize("f, x, a, b", [("x^2*cos(x)", "sin(t) + t", 0, 2), ("exp(-x)", "t^3", -1, 1)])
def test_autonomous_reduction(f, x, a, b):
    p = problem(f, x, a, b)
    xa, xb = p.x(a), p.x(b)
    direct = integrate1d(parse(f), xa, xb, 1e-12, var="x").value
    assert abs(cov_rhs(p, 1e-12).value - direct) <= 1e-12


def test_lipschitz_path_with_corner():
    p = problem("t*x", "abs(t - 0.5)", 0, 1)
    rep = verify_cov(p, 1e-6)
    assert rep.passed
    assert rep.lhs.value == pytest.approx(1 / 12, abs=1e-6)


def test_decreasing_path_uses_signed_inner_limits():
    rep = verify_cov(problem("t + x^2", "cos(t)", 0, math.pi), 1e-8)
    assert rep.passed


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from([("t*x", "t"), ("sin(t)*cos(x)", "t^2"), ("exp(t+x)", "sin(t)"), ("x/(1+t^2)", "exp(-t)")]),
    st.floats(-1.5, 1.5),
    st.floats(-1.5, 1.5),
)
def test_direction_symmetry(pair, a, b):
    if abs(a - b) < 1e-3:
        return
    fwd = verify_cov(problem(*pair, a, b), 1e-10)
    back = verify_cov(problem(*pair, b, a), 1e-10)
    slack_l = fwd.lhs.err_estimate + back.lhs.err_estimate + 1e-14
    slack_r = fwd.rhs.err_estimate + back.rhs.err_estimate + 1e-14
    assert abs(fwd.lhs.value + back.lhs.value) <= slack_l
    assert abs(fwd.rhs.value + back.rhs.value) <= slack_r


def test_report_invariants():
    rep = verify_cov(problem("t*x", "t", 0, 1), 1e-8)
    assert rep.residual == abs(rep.lhs.value - rep.rhs.value)
    assert rep.passed == (rep.residual <= rep.tol + rep.lhs.err_estimate + rep.rhs.err_estimate)
    assert isinstance(rep, IdentityReport)


def test_invalid_problems():
    with pytest.raises(ValueError):
        problem("t*x", "t", 1, 1)
    with pytest.raises(ValueError):
        problem("t*x", "x", 0, 1)
    with pytest.raises(DomainError):
        problem("ln(x)", "t", 0, 1)
    with pytest.raises(ValueError):
        CovProblem(parse("t*x"), parse("t"), 0, 1, box=(0.2, 1))


@pytest.mark.parametrize(
    "f, x1, x2, t",
    [("r", "0", "t", 1.0), ("t*r", "0", "1", 0.5), ("exp(t*r)", "t^2", "t^2", 0.7), ("sin(t+r)", "t", "2*t", 0.3)],
)
def test_leibniz_rule(f, x1, x2, t):
    assert leibniz_check(parse(f), parse(x1), parse(x2), t, 1e-4) <= 1e-7


def test_leibniz_residual_is_second_order():
    args = (parse("exp(t*r)"), parse("sin(t)"), parse("1 + t^2"), 0.4)
    coarse = leibniz_check(*args, h=1e-2)
    fine = leibniz_check(*args, h=5e-3)
    assert 3.0 < coarse / fine < 5.0

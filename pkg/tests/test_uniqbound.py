import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uniqcert.expr import DomainError, parse
from uniqcert.uniqbound import (
    BoundSpec,
    InvalidRange,
    KamkeMode,
    Status,
    Verdict,
    certificate_bound,
    check_co1,
    check_co2,
    check_kamke,
    check_lasalle,
    check_montel_tonelli,
    check_osgood,
    check_theorem_th3,
    check_van_kampen,
    trial_function_trend,
    find_counterexample_witness,
    make_ivp,
    open_grid,
)

P = parse
EXAMPLE = "piecewise(ln(1+t^2) < abs(x), t, t <= 0, 0, (exp(abs(x))-1)/t)"


def test_open_grid_excludes_zero():
    g = open_grid(2.0, 4)
    assert g.tolist() == [0.5, 1.0, 1.5, 2.0]


def test_verdict_invariants():
    with pytest.raises(ValueError):
        Verdict(Status.CERTIFIED, criterion="osgood")
    with pytest.raises(ValueError):
        Verdict(Status.REFUTED)
    with pytest.raises(ValueError):
        Verdict(Status.INCONCLUSIVE)
    v = Verdict.inconclusive("psi(0) != 0")
    assert v.label == "Inconclusive(psi(0) != 0)"


@pytest.mark.parametrize(
    "psi, status, criterion",
    [("x", Status.CERTIFIED, "osgood"), ("sqrt(x)", Status.INCONCLUSIVE, None), ("x + 1", Status.INCONCLUSIVE, None),
     ("x*(1 + x)", Status.CERTIFIED, "osgood"), ("x^2", Status.CERTIFIED, "osgood")],
)
def test_osgood(psi, status, criterion):
    v = check_osgood(P(psi), 1)
    assert v.status is status
    assert v.criterion == criterion
    if v.is_certified:
        assert v.grid["points"] == 257 and v.on_grid


def test_osgood_reasons():
    assert "convergent" in check_osgood(P("sqrt(x)"), 1).reason
    assert "psi(0)" in check_osgood(P("x + 1"), 1).reason


@pytest.mark.parametrize(
    "p, status",
    [("1/sqrt(t)", Status.CERTIFIED), ("1/t", Status.INCONCLUSIVE), ("1", Status.CERTIFIED), ("2/t", Status.INCONCLUSIVE)],
)
def test_montel_tonelli(p, status):
    v = check_montel_tonelli(P(p), P("x"), 1, 1)
    assert v.status is status
    if v.is_certified:
        assert v.criterion == "montel_tonelli"


@pytest.mark.parametrize(
    "p, status, criterion",
    [("1/t", Status.CERTIFIED, "nagumo"), ("(1+t)/t", Status.CERTIFIED, "van_kampen"), ("2/t", Status.INCONCLUSIVE, None),
     ("1/t + 1/sqrt(t)", Status.CERTIFIED, "van_kampen")],
)
def test_van_kampen(p, status, criterion):
    v = check_van_kampen(P(p), P("x"), 1)
    assert v.status is status and v.criterion == criterion


def test_van_kampen_needs_identity_psi():
    assert check_van_kampen(P("1/t"), P("2*x"), 1).status is Status.INCONCLUSIVE


@pytest.mark.parametrize(
    "p, psi, status, criterion",
    [
        ("1", "x", Status.CERTIFIED, "lasalle_13"),
        ("1/t", "exp(x) - 1", Status.INCONCLUSIVE, None),
        ("1", "x/2", Status.CERTIFIED, "lasalle_13"),
        ("1/t", "x", Status.CERTIFIED, "lasalle_14"),
        ("2/t", "x", Status.INCONCLUSIVE, None),
    ],
)
def test_lasalle(p, psi, status, criterion):
    v = check_lasalle(P(p), P(psi), 1, 1)
    assert v.status is status and v.criterion == criterion


def test_lasalle_exponential_fails_both_conditions():
    reason = check_lasalle(P("1/t"), P("exp(x) - 1"), 1, 1).reason
    assert "lasalle_13 fails" in reason and "lasalle_14 fails" in reason


@pytest.mark.parametrize(
    "q1, q2, gamma, status",
    [("0", "1", 1, Status.CERTIFIED), ("t", "0", 1, Status.CERTIFIED), ("0", "1", 0, Status.INCONCLUSIVE),
     ("1", "0", 1, Status.INCONCLUSIVE), ("0", "-1", 1, Status.INCONCLUSIVE)],
)
def test_co1(q1, q2, gamma, status):
    v = check_co1(P(q1), P(q2), gamma, 1, 1)
    assert v.status is status
    if v.is_certified:
        assert v.criterion == "corollary_co1"
        assert "p" in v.evidence and "psi" in v.evidence


def test_co2():
    v = check_co2(P("exp(x) - 1"), 1)
    assert v.criterion == "corollary_co2"
    assert v.evidence["c"] == pytest.approx(math.e / 2, rel=1e-14)
    assert check_co2(P("x"), 1).evidence["c"] == 0.0
    steep = check_co2(P("2*x"), 1)
    assert steep.status is Status.INCONCLUSIVE and "phi'(0)" in steep.reason


@pytest.mark.parametrize("c, witness", [(2, "t^2"), (1.5, "t^1.5"), (1.25, "t^1.25"), (3, "t^3")])
def test_witness(c, witness):
    v = find_counterexample_witness(c, 1)
    assert v.is_refuted and v.witness == witness
    assert v.evidence["residual"] <= 1e-10
    assert P(witness).eval({"t": 0.0}) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0001, 3.0))
def test_witness_for_every_c_above_one(c):
    assert find_counterexample_witness(c, 1).evidence["residual"] <= 1e-10


@pytest.mark.parametrize("c", [1.0, 0.5, -1.0])
def test_no_witness_at_or_below_one(c):
    with pytest.raises(InvalidRange):
        find_counterexample_witness(c, 1)


def test_no_checker_certifies_2x_over_t():
    checks = [
        check_montel_tonelli(P("2/t"), P("x"), 1, 1),
        check_van_kampen(P("2/t"), P("x"), 1),
        check_lasalle(P("2/t"), P("x"), 1, 1),
        check_co1(P("1"), P("0"), 1, 1, 1),
        check_co2(P("2*x"), 1),
    ]
    assert not any(v.is_certified for v in checks)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(1.0, 1.6))
def test_osgood_subsumed_by_lasalle(c, k):
    psi = P(f"{c}*x^{k}")
    if check_osgood(psi, 1).is_certified:
        assert check_lasalle(P("1"), psi, 1, 1).is_certified


def test_nagumo_subsumed_by_co1():
    assert check_van_kampen(P("1/t"), P("x"), 1).criterion == "nagumo"
    assert check_co1(P("0"), P("0"), 1, 1, 1).is_certified


@pytest.mark.parametrize(
    "check",
    [
        lambda n: check_osgood(P("x"), 1, n),
        lambda n: check_osgood(P("sqrt(x)"), 1, n),
        lambda n: check_montel_tonelli(P("1/sqrt(t)"), P("x"), 1, 1, n),
        lambda n: check_van_kampen(P("(1+t)/t"), P("x"), 1, 1, n),
        lambda n: check_lasalle(P("1/t"), P("x"), 1, 1, n),
        lambda n: check_co1(P("t"), P("1"), 1, 1, 1, n),
        lambda n: check_co2(P("exp(x) - 1"), 1, n),
    ],
)
def test_grid_doubling_does_not_flip(check):
    coarse, fine = check(257), check(513)
    flipped = {coarse.status, fine.status} == {Status.CERTIFIED, Status.REFUTED}
    assert not flipped


def test_th3():
    assert check_theorem_th3(make_ivp("t*sin(x - 0.5)", 0, 0.5, 1, 1), P("x")).is_certified
    assert check_theorem_th3(make_ivp("2*sqrt(abs(x - 0.5))", 0, 0.5, 1, 1), P("2*sqrt(x)")).status is Status.INCONCLUSIVE
    v = check_theorem_th3(make_ivp("0", 0, 0, 1, 1), P("x"))
    assert v.criterion == "theorem_th3: unique constant solution"


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 2), st.floats(0.1, 2))
def test_th3_zero_field_always_certifies(t0, x0, a, b):
    assert check_theorem_th3(make_ivp("0", t0, x0, a, b), P("x")).is_certified


def test_th3_bound_violation():
    v = check_theorem_th3(make_ivp("2*(x - 0.5)", 0, 0.5, 1, 1), P("x"))
    assert v.status is Status.INCONCLUSIVE


def test_kamke_example_self_bound():
    ivp = make_ivp(EXAMPLE, 0, 0, 1, 1, forward=True)
    cert = check_co2(P("exp(x) - 1"), 1)
    v = check_kamke(ivp, certificate_bound("co2", 1, 1, phi=P("exp(x) - 1")), cert, KamkeMode.SELF_BOUND)
    assert v.criterion == "kamke"


def test_kamke_difference_bound():
    ivp = make_ivp("x*cos(t)", 0, 0, 1, 1)
    cert = check_van_kampen(P("1/t"), P("x"), 1)
    v = check_kamke(ivp, BoundSpec(P("1/t"), P("x"), 1, 1), cert, "difference_bound")
    assert v.is_certified
    assert v.grid["x_points_per_axis"] == 65


def test_kamke_vector_system():
    ivp = make_ivp(["x2", "-x1"], 0, [0, 0], 1, 1)
    v = check_kamke(ivp, BoundSpec(P("1"), P("x"), 1, 1), check_osgood(P("x"), 1), "difference_bound")
    assert v.is_certified and v.grid["x_points_per_axis"] == 33


def test_kamke_sqrt_violation_names_point():
    ivp = make_ivp("2*sqrt(abs(x))", 0, 0, 1, 1)
    v = check_kamke(ivp, BoundSpec(P("1"), P("x"), 1, 1), check_osgood(P("x"), 1), "self_bound")
    assert v.status is Status.INCONCLUSIVE
    assert "at" in v.evidence


def test_kamke_needs_certificate():
    ivp = make_ivp("x", 0, 0, 1, 1)
    v = check_kamke(ivp, BoundSpec(P("1"), P("x"), 1, 1), check_osgood(P("sqrt(x)"), 1), "self_bound")
    assert v.status is Status.INCONCLUSIVE and v.reason == "bound not certified"


def test_kamke_self_bound_needs_equilibrium():
    ivp = make_ivp("1 + x", 0, 0, 1, 1)
    v = check_kamke(ivp, BoundSpec(P("1"), P("x"), 1, 1), check_osgood(P("x"), 1), "self_bound")
    assert v.status is Status.INCONCLUSIVE


@pytest.mark.parametrize(
    "criterion, params, p, psi",
    [
        ("osgood", {"psi": "x"}, "1", "x"),
        ("montel_tonelli", {"p": "1/sqrt(t)", "psi": "x"}, "1/sqrt(t)", "x"),
        ("van_kampen", {"p": "(1+t)/t", "psi": "x"}, "(1+t)/t", "x"),
        ("co2", {"phi": "exp(x) - 1"}, "1/t", "exp(x) - 1"),
    ],
)
def test_certificate_bound(criterion, params, p, psi):
    b = certificate_bound(criterion, 1, 1, **{k: P(v) for k, v in params.items()})
    assert b.p.eval({"t": 0.3}) == pytest.approx(P(p).eval({"t": 0.3}))
    assert b.psi.eval({"t": 0.3, "x": 0.4}) == pytest.approx(P(psi).eval({"x": 0.4}))


def test_co1_certificate_bound():
    b = certificate_bound("co1", 1, 1, q1=P("t"), q2=P("1"), gamma=P("2"))
    assert b.g(0.5, 0.5) == pytest.approx((1 + 0.5) / 0.5 * (1 + 0.25) * 0.5)


def test_ivp_validation():
    with pytest.raises(DomainError):
        make_ivp("ln(x)", 0, 0, 1, 1)
    # a 1/t singularity exactly at t0 is allowed
    make_ivp("x/t", 0, 0, 1, 1, forward=True)
    ivp = make_ivp(["x1 + t", "x2"], 0, [1, 2], 1, 1)
    assert ivp.dim == 2
    assert np.allclose(ivp.evaluate(0.5, np.array([1.0, 2.0])), [1.5, 2.0])


def test_trial_function_trend():
    r = trial_function_trend(P("1/t"), P("x"), P("t^2"), 0, 1)
    # ln(1/t^2) - ln(1/t) = ln(1/t) grows by ln 10 per decade
    assert np.allclose(np.diff(r.values[:5]), math.log(10), rtol=1e-6)
    assert r.trend == "increasing"

"""Acceptance criteria, one test each.

Every test records a one-line PASS/FAIL summary that is printed at the end of
the module (also when run as ``python3 tests/test_acceptance.py``).
"""

import io
import json
import math
import random
import sys
import time

import numpy as np
import pytest

from strategies import central_difference, smooth_text
from uniqcert.calculus import GraphRegion, integrate1d
from uniqcert.cli import fixture_files, run, solve
from uniqcert.cov import CovProblem, verify_cov
from uniqcert.expr import parse
from uniqcert.green import FieldProblem, equivalence_check, split_defect, verify_green
from uniqcert.odeprobe import funnel_probe, gronwall_check, integrate_ivp
from uniqcert.report import validate_report
from uniqcert.uniqbound import (
    certificate_bound,
    check_co1,
    check_co2,
    check_kamke,
    check_lasalle,
    check_montel_tonelli,
    check_osgood,
    check_van_kampen,
    find_counterexample_witness,
    make_ivp,
)

P = parse
RESULTS: dict[int, str] = {}
FIXTURES = [json.loads(p.read_text(encoding="utf-8")) for p in fixture_files()]
EXAMPLE = "piecewise(ln(1+t^2) < abs(x), t, t <= 0, 0, (exp(abs(x))-1)/t)"


def _of_kind(kind):
    return [f for f in FIXTURES if f["kind"] == kind]


def record(number: int, title: str, ok: bool, detail: str) -> None:
    RESULTS[number] = f"[{'PASS' if ok else 'FAIL'}] AC{number:<2} {title}: {detail}"
    assert ok, RESULTS[number]


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    reporter = request.config.pluginmanager.getplugin("terminalreporter")
    lines = [RESULTS[k] for k in sorted(RESULTS)]
    if reporter is not None:
        reporter.write_line("")
        for line in lines:
            reporter.write_line(line)
    else:
        print("\n".join(lines))


def cov_problem(fx):
    return CovProblem(P(fx["f"]), P(fx["x"]), fx["a"], fx["b"])


def test_ac01_change_of_variables_suite():
    smooth = [f for f in _of_kind("cov") if "abs(" not in f["x"]]
    start = time.perf_counter()
    reports = [verify_cov(cov_problem(f), 1e-8) for f in smooth]
    elapsed = time.perf_counter() - start
    worst = max(r.residual for r in reports)
    regimes = {
        "autonomous": verify_cov(CovProblem(P("x"), P("t^2"), 0, 1), 1e-8),
        "by_parts": verify_cov(CovProblem(P("t"), P("sin(t)"), 0, math.pi), 1e-8),
        "constant": verify_cov(CovProblem(P("t*x + exp(t)"), P("2"), 0, 1), 1e-8),
    }
    regimes_ok = (
        all(r.passed for r in regimes.values())
        and abs(regimes["by_parts"].lhs.value + 2) <= 1e-8
        and regimes["constant"].lhs.value == regimes["constant"].rhs.value == 0.0
        and abs(regimes["autonomous"].rhs.value - 0.5) <= 1e-8
    )
    ok = len(reports) >= 12 and all(r.passed for r in reports) and worst <= 1e-8 and regimes_ok and elapsed < 1.0
    record(1, "change-of-variables suite", ok, f"{len(reports)} fixtures, max residual {worst:.2e}, {elapsed:.3f}s")


def test_ac02_green_suite():
    fixtures = _of_kind("green")
    worst = 0.0
    passed = 0
    defects = []
    for fx in fixtures:
        r = fx["region"]
        region = GraphRegion(r["a"], r["b"], P(r["phi"]), P(r["psi"]))
        prob = FieldProblem(P(fx["f1"]), P(fx["f2"]), region)
        rep = verify_green(prob, 1e-8)
        worst = max(worst, rep.residual)
        passed += rep.passed and rep.residual <= 1e-8
        if "split" in fx:
            defects.append(split_defect(prob, fx["split"], 1e-10))
    square = verify_green(FieldProblem(P("-x/2"), P("t/2"), GraphRegion(0, 1, P("0"), P("1"))), 1e-10)
    figure_region = GraphRegion(1, 4, P("0.5 + (t-1)^2/18"), P("3 + cos(pi*(t-1)/3)"))
    figure = verify_green(FieldProblem(P("-x/2"), P("t/2"), figure_region), 1e-10)
    area_ok = all(abs(r.lhs.value - v) <= 1e-8 and abs(r.rhs.value - v) <= 1e-8 for r, v in ((square, 1.0), (figure, 7.0)))
    ok = len(fixtures) >= 10 and passed == len(fixtures) and area_ok and defects and max(defects) <= 2e-10
    record(2, "Green suite", ok, f"{passed}/{len(fixtures)} fixtures, max residual {worst:.2e}, max split defect {max(defects):.2e}")


def test_ac03_equivalence():
    shared = [f for f in _of_kind("cov") + _of_kind("equivalence") if f["a"] < f["b"] and "abs(" not in f["x"]]
    gaps = []
    for fx in shared:
        p = cov_problem(fx)
        eq = equivalence_check(p, 1e-8)
        cov = verify_cov(p, 1e-8)
        gaps.append((abs(eq.residual - cov.residual), eq.passed))
    worst = max(g for g, _ in gaps)
    ok = all(passed for _, passed in gaps) and worst <= 2e-8
    record(3, "equivalence", ok, f"{len(gaps)} shared fixtures, max |residual gap| {worst:.2e}")


def test_ac04_criteria_ladder():
    cases = [
        (check_osgood(P("x"), 1).criterion, "osgood"),
        (check_osgood(P("sqrt(x)"), 1).status.value, "inconclusive"),
        (check_van_kampen(P("1/t"), P("x"), 1).criterion, "nagumo"),
        (check_van_kampen(P("(1+t)/t"), P("x"), 1).criterion, "van_kampen"),
        (check_lasalle(P("1/t"), P("exp(x) - 1"), 1, 1).status.value, "inconclusive"),
        (check_co2(P("exp(x) - 1"), 1).criterion, "corollary_co2"),
        (check_co1(P("0"), P("1"), 1, 1, 1).criterion, "corollary_co1"),
    ]
    bad = [(got, want) for got, want in cases if got != want]
    record(4, "criteria ladder", not bad, f"{len(cases) - len(bad)}/{len(cases)} rungs as expected")


def test_ac05_refutation():
    residuals = {c: find_counterexample_witness(c, 1).evidence["residual"] for c in (1.25, 1.5, 2, 3)}
    verdicts = [
        check_montel_tonelli(P("2/t"), P("x"), 1, 1),
        check_van_kampen(P("2/t"), P("x"), 1),
        check_lasalle(P("2/t"), P("x"), 1, 1),
        check_co1(P("1"), P("0"), 1, 1, 1),
        check_co2(P("2*x"), 1),
    ]
    certified = [v.label for v in verdicts if v.is_certified]
    ok = max(residuals.values()) <= 1e-10 and not certified
    record(5, "refutation", ok, f"max witness residual {max(residuals.values()):.1e}, checkers certifying 2x/t: {len(certified)}")


def test_ac06_example_end_to_end():
    start = time.perf_counter()
    fx = next(f for f in _of_kind("kamke") if f["ivp"]["f"] == EXAMPLE)
    ivp = make_ivp(EXAMPLE, 0, 0, 1, 1, forward=True)
    cert = check_co2(P(fx["certificate"]["phi"]), 1)
    bound = certificate_bound("co2", 1, 1, phi=P(fx["certificate"]["phi"]))
    verdict = check_kamke(ivp, bound, cert, fx["mode"])
    funnel = funnel_probe(ivp, 1.0)
    elapsed = time.perf_counter() - start
    ok = (
        cert.criterion == "corollary_co2"
        and fx["mode"] == "self_bound"
        and verdict.criterion == "kamke"
        and funnel.deltas[-1] == 1e-10
        and funnel.fitted_order > 0
        and funnel.spreads[-1] < funnel.spreads[0]
        and elapsed < 5.0
    )
    record(6, "example end to end", ok, f"{verdict.label} via {cert.criterion}, fitted order {funnel.fitted_order:.3f}, {elapsed:.2f}s")


def test_ac07_non_uniqueness():
    r = funnel_probe(make_ivp("2*sqrt(abs(x))", 0, 0, 1, 5), 1.0)
    spread = r.spreads[list(r.deltas).index(1e-10)]
    closed = (1 + math.sqrt(1e-10)) ** 2
    ok = spread >= 0.9 and r.fitted_order <= 0.05
    record(7, "non-uniqueness detection", ok, f"spread {spread:.6f} (closed form {closed:.6f}), fitted order {r.fitted_order:.2e}")


def test_ac08_gronwall():
    ivp = make_ivp("sin(t) + cos(t)*x", 0, 0.3, 2, 10)
    tr = integrate_ivp(ivp, 2.0, t_eval=np.linspace(0, 2, 257))
    rep = gronwall_check(P("sin(t)"), P("cos(t)"), tr, 0, 2, tol=1e-7)
    f = funnel_probe(make_ivp("x", 0, 0, 1, 5), 1.0)
    ratio = max(s / (d * math.e) for d, s in zip(f.deltas, f.spreads))
    ok = rep.passed and abs(rep.min_margin) <= 1e-7 and ratio <= 1.001
    record(8, "Gronwall", ok, f"equality min margin {rep.min_margin:.1e}, max spread/(delta e) {ratio:.8f}")


def test_ac09_ad_and_quadrature():
    rng = random.Random(20240101)
    worst = 0.0
    for _ in range(100):
        e = parse(smooth_text(rng))
        point = {"t": rng.uniform(-1, 1), "x": rng.uniform(-1, 1)}
        for var in ("t", "x"):
            exact = e.partial(var, point)
            approx = central_difference(e.eval, point, var)
            worst = max(worst, abs(exact - approx) / (1 + abs(exact)))
    suite = [
        ("4/(1+t^2)", 0, 1, math.pi),
        ("t", 0, 1, 0.5),
        ("t^8", 0, 1, 1 / 9),
        ("exp(t)", 0, 2, math.e**2 - 1),
        ("sin(t)", 0, math.pi, 2.0),
        ("cos(10*t)", 0, 1, math.sin(10) / 10),
    ]
    quad_err = max(abs(integrate1d(P(s), a, b, 1e-12).value - v) for s, a, b, v in suite)
    ok = worst <= 1e-5 and quad_err <= 1e-10
    record(9, "AD and quadrature", ok, f"100 expressions, max relative AD gap {worst:.1e}; max quadrature error {quad_err:.1e}")


def test_ac10_cli_fixtures():
    out, err = io.StringIO(), io.StringIO()
    start = time.perf_counter()
    code = run(["fixtures", "--format", "json"], stdout=out, stderr=err)
    elapsed = time.perf_counter() - start
    data = json.loads(out.getvalue())
    validate_report(data)
    for fx in FIXTURES:
        validate_report(json.loads(solve(fx).to_json()))
    ok = code == 0 and elapsed < 30
    record(10, "CLI fixtures", ok, f"exit {code}, {data['payload']['passed']}/{data['payload']['total']} fixtures, {elapsed:.2f}s, reports schema-valid")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))

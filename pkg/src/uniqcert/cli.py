"""Command-line front end: ``uniqcert <subcommand> [--input FILE | flags] [--format text|json]``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .calculus import GraphRegion
from .cov import CovProblem, verify_cov
from .expr import DEFAULT_VARIABLES, Expr, ExprError, parse
from .green import FieldProblem, equivalence_check, generic_circulation, split_defect, verify_green
from .odeprobe import (
    BoxExit,
    HypothesisViolated,
    StepUnderflow,
    funnel_probe,
    gronwall_check,
    integrate_ivp,
    lipschitz_constant,
    thread_limit,
)
from .report import KINDS, Report, SchemaError, validate_problem, validate_report, write_atomic
from .uniqbound import (
    InvalidRange,
    IvpSpec,
    KamkeMode,
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
    find_counterexample_witness,
    make_ivp,
)

EXIT_USAGE = 64
EXIT_INPUT = 65

SUBCOMMANDS = {
    "verify-cov": "cov",
    "verify-green": "green",
    "equivalence": "equivalence",
    "check-bound": "uniqueness",
    "check-kamke": "kamke",
    "check-th3": "th3",
    "gronwall": "gronwall",
    "funnel": "funnel",
    "witness": "witness",
}


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# problem -> report
# ---------------------------------------------------------------------------


def _parse_field(problem: dict, key: str, variables: Sequence[str] = DEFAULT_VARIABLES) -> Expr:
    text = problem[key]
    try:
        return parse(text, variables)
    except ExprError as exc:
        raise InputError(_dsl_message(key, exc)) from exc


def _dsl_message(key: str, exc: ExprError) -> str:
    msg = f"field {key!r}: {exc.message}"
    if exc.offset is not None:
        msg += f" at byte {exc.offset}\n{exc.pointer()}"
    return msg


def _ivp(spec: dict):
    f = spec["f"]
    x0 = spec["x0"]
    if isinstance(f, list) and len(f) == 1 and not isinstance(x0, list):
        f = f[0]
    if isinstance(f, str) and isinstance(x0, list):
        if len(x0) != 1:
            raise InputError("scalar f needs a single x0")
        x0 = x0[0]
    try:
        return make_ivp(f, spec["t0"], x0, spec["a"], spec["b"], spec.get("forward", False))
    except ExprError as exc:
        raise InputError(_dsl_message("ivp.f", exc)) from exc


def _identity_payload(rep) -> dict:
    return {
        "lhs": rep.lhs.value,
        "rhs": rep.rhs.value,
        "residual": rep.residual,
        "tol": rep.tol,
        "lhs_err": rep.lhs.err_estimate,
        "rhs_err": rep.rhs.err_estimate,
        "evals": rep.lhs.evals + rep.rhs.evals,
    }


def _solve_cov(pb: dict) -> Report:
    p = CovProblem(_parse_field(pb, "f"), _parse_field(pb, "x"), pb["a"], pb["b"])
    rep = verify_cov(p, pb.get("tol", 1e-10))
    status = "pass" if rep.passed else "fail"
    return Report("cov", status, f"residual {rep.residual:.3e}", _identity_payload(rep))


def _solve_green(pb: dict) -> Report:
    reg = pb["region"]
    region = GraphRegion(
        reg["a"], reg["b"], _parse_field(reg, "phi"), _parse_field(reg, "psi")
    )
    P = FieldProblem(_parse_field(pb, "f1"), _parse_field(pb, "f2"), region)
    tol = pb.get("tol", 1e-10)
    rep = verify_green(P, tol)
    payload = _identity_payload(rep)
    payload["generic_circulation"] = generic_circulation(P, tol).value
    ok = rep.passed
    if "split" in pb:
        defect = split_defect(P, pb["split"], tol)
        payload["split_defect"] = defect
        ok = ok and defect <= 2 * tol
    status = "pass" if ok else "fail"
    return Report("green", status, f"circulation {rep.lhs.value!r}, residual {rep.residual:.3e}", payload)


def _solve_equivalence(pb: dict) -> Report:
    p = CovProblem(_parse_field(pb, "f"), _parse_field(pb, "x"), pb["a"], pb["b"])
    tol = pb.get("tol", 1e-10)
    eq = equivalence_check(p, tol)
    cov = verify_cov(p, tol)
    payload = {
        "lhs": eq.lhs.value,
        "recovered_lhs": eq.rhs.value,
        "residual": eq.residual,
        "circulation": eq.circulation.value,
        "curl": eq.curl.value,
        "green_residual": eq.green_residual,
        "cov_residual": cov.residual,
        "tol": tol,
    }
    green_ok = eq.green_residual <= tol + eq.circulation.err_estimate + eq.curl.err_estimate
    status = "pass" if eq.passed and green_ok else "fail"
    return Report("equivalence", status, f"recovered lhs {eq.rhs.value!r}", payload)


def _run_certificate(spec: dict) -> tuple[Verdict, dict]:
    """Run the checker named by ``spec['criterion']``; returns the verdict and the parsed expressions."""
    crit = spec["criterion"]
    a, b = spec.get("a", 1.0), spec.get("b", 1.0)
    n = spec.get("grid_n", 257)
    ex = {k: _parse_field(spec, k) for k in ("p", "psi", "phi", "q1", "q2") if k in spec}
    needed = {
        "osgood": ("psi",),
        "montel_tonelli": ("p", "psi"),
        "van_kampen": ("p", "psi"),
        "lasalle": ("p", "psi"),
        "co1": ("q1", "q2"),
        "co2": ("phi",),
    }[crit]
    missing = [k for k in needed if k not in ex]
    if crit == "co1" and "gamma" not in spec:
        missing.append("gamma")
    if missing:
        raise InputError(f"criterion {crit!r} needs field(s): {', '.join(missing)}")
    if crit == "osgood":
        v = check_osgood(ex["psi"], b, n)
    elif crit == "montel_tonelli":
        v = check_montel_tonelli(ex["p"], ex["psi"], a, b, n)
    elif crit == "van_kampen":
        v = check_van_kampen(ex["p"], ex["psi"], a, b, n)
    elif crit == "lasalle":
        v = check_lasalle(ex["p"], ex["psi"], a, b, n)
    elif crit == "co1":
        v = check_co1(ex["q1"], ex["q2"], spec["gamma"], a, b, n)
        ex["gamma"] = Expr.constant(spec["gamma"])
    else:
        v = check_co2(ex["phi"], b, n)
    return v, ex


def _verdict_report(kind: str, v: Verdict, **payload) -> Report:
    d = v.to_dict()
    payload = {"label": d["label"], "criterion": d["criterion"], "reason": d["reason"], "witness": d["witness"], **payload}
    evidence = {"grid": d["grid"], "certified_on_grid": d["certified_on_grid"], **d["evidence"]}
    return Report(kind, d["status"], d["label"], payload, evidence)


def _solve_uniqueness(pb: dict) -> Report:
    v, _ = _run_certificate(pb)
    return _verdict_report("uniqueness", v)


def _solve_kamke(pb: dict) -> Report:
    ivp = _ivp(pb["ivp"])
    cert_spec = dict(pb["certificate"])
    cert_spec.setdefault("a", ivp.a)
    cert_spec.setdefault("b", ivp.b)
    cert, ex = _run_certificate(cert_spec)
    if "bound" in pb:
        bound_ex = {k: _parse_field(pb["bound"], k) for k in ("p", "psi")}
        bound = certificate_bound("montel_tonelli", ivp.a, ivp.b, **bound_ex)
    else:
        bound = certificate_bound(cert_spec["criterion"], ivp.a, ivp.b, **ex)
    v = check_kamke(ivp, bound, cert, KamkeMode(pb["mode"]), pb.get("grid_n"))
    return _verdict_report("kamke", v, bound=bound.to_dict(), certificate=cert.label)


def _solve_th3(pb: dict) -> Report:
    ivp = _ivp(pb["ivp"])
    v = check_theorem_th3(ivp, _parse_field(pb, "psi"), pb.get("grid_n", 257))
    return _verdict_report("th3", v)


def _solve_gronwall(pb: dict) -> Report:
    alpha, beta = _parse_field(pb, "alpha"), _parse_field(pb, "beta")
    t0, a = pb["t0"], pb["a"]
    tol = pb.get("tol", 1e-7)
    n = pb.get("grid_n", 257)
    if "phi" in pb:
        phi = _parse_field(pb, "phi")
        source = str(phi)
    elif "phi0" in pb:
        # equality case: phi solves phi' = alpha + beta*phi numerically
        phi0 = pb["phi0"]
        ode = parse(f"({alpha}) + ({beta})*x")
        ivp = IvpSpec(ode, t0, phi0, a, max(1e3, 100 * (abs(phi0) + 1)), forward=True)
        try:
            phi = integrate_ivp(ivp, t0 + a, t_eval=np.linspace(t0, t0 + a, n))
        except (BoxExit, StepUnderflow) as exc:
            return Report("gronwall", "inconclusive", f"equality solution failed: {exc}", {"reason": str(exc)})
        source = "solution of phi' = alpha + beta*phi"
    else:
        raise InputError("gronwall needs either 'phi' or 'phi0'")
    try:
        rep = gronwall_check(alpha, beta, phi, t0, a, tol, n)
    except HypothesisViolated as exc:
        payload = {"reason": "hypothesis violated", "t": exc.t, "phi_prime": exc.lhs, "alpha_plus_beta_phi": exc.rhs}
        return Report("gronwall", "inconclusive", f"hypothesis violated at t={exc.t!r}", payload)
    status = "pass" if rep.passed else "fail"
    payload = {"min_margin": rep.min_margin, "tol": tol, "points": len(rep.grid), "phi": source}
    series = {
        "t": rep.grid.tolist(),
        "phi": rep.phi.tolist(),
        "bound": rep.bound.tolist(),
        "margin": (rep.bound - rep.phi).tolist(),
    }
    return Report("gronwall", status, f"min margin {rep.min_margin:.3e}", payload, series=series)


def _solve_funnel(pb: dict) -> Report:
    ivp = _ivp(pb["ivp"])
    kwargs = {k: pb[k] for k in ("rtol", "atol") if k in pb}
    if "deltas" in pb:
        kwargs["deltas"] = pb["deltas"]
    try:
        rep = funnel_probe(ivp, pb["t_end"], **kwargs)
    except (BoxExit, StepUnderflow) as exc:
        return Report("funnel", "inconclusive", f"integration failed: {exc}", {"reason": str(exc)})
    order = rep.fitted_order
    if math.isfinite(order) and order > 0.05 and rep.spreads[-1] < rep.spreads[0]:
        status, summary = "pass", "spread vanishes with delta"
    elif math.isfinite(order) and order <= 0.05:
        status, summary = "fail", "non-vanishing funnel: spread does not shrink with delta"
    else:
        status, summary = "inconclusive", "spread trend undetermined"
    payload = {
        "deltas": list(rep.deltas),
        "spreads": list(rep.spreads),
        "fitted_order": order,
        "t_end": rep.t_end,
        "baseline_final": list(rep.baseline_final),
    }
    evidence = {}
    try:
        evidence["lipschitz_on_grid"] = lipschitz_constant(ivp)
    except ExprError:
        evidence["lipschitz_on_grid"] = float("inf")
    series = {"delta": list(rep.deltas), "spread": list(rep.spreads)}
    return Report("funnel", status, f"{summary} (fitted order {order:.3f})", payload, evidence, series)


def _solve_witness(pb: dict) -> Report:
    try:
        v = find_counterexample_witness(pb["c"], pb["a"])
    except InvalidRange as exc:
        return Report("witness", "inconclusive", str(exc), {"reason": str(exc), "c": pb["c"]})
    return _verdict_report("witness", v, c=pb["c"], a=pb["a"])


SOLVERS: dict[str, Callable[[dict], Report]] = {
    "cov": _solve_cov,
    "green": _solve_green,
    "equivalence": _solve_equivalence,
    "uniqueness": _solve_uniqueness,
    "kamke": _solve_kamke,
    "th3": _solve_th3,
    "gronwall": _solve_gronwall,
    "funnel": _solve_funnel,
    "witness": _solve_witness,
}


def solve(problem: dict) -> Report:
    """Validate a problem dict and run it; raises InputError/SchemaError on bad input."""
    validate_problem(problem)
    start = time.perf_counter()
    try:
        report = SOLVERS[problem["kind"]](problem)
    except ExprError as exc:
        # DomainError on the box, or a DSL error raised below the field level
        raise InputError(f"{exc}") from exc
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, (SchemaError,)):
            raise
        raise InputError(f"invalid problem: {exc}") from exc
    report.wall_time = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------


def fixture_files(directory: str | None = None) -> list[Path]:
    if directory is not None:
        return sorted(Path(directory).glob("*.json"))
    root = resources.files("uniqcert") / "fixtures"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def _lookup(d: dict, path: str):
    cur = d
    for part in path.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        else:
            cur = cur[part]
    return cur


def check_expectations(expect: dict, report: Report) -> list[str]:
    """Problems with ``report`` relative to a fixture's ``expect`` block (empty when it matches)."""
    d = report.to_dict()
    failures = []
    if d["status"] != expect["status"]:
        failures.append(f"status {d['status']} != {expect['status']}")
    if "criterion" in expect and d["payload"].get("criterion") != expect["criterion"]:
        failures.append(f"criterion {d['payload'].get('criterion')} != {expect['criterion']}")
    if "witness" in expect and d["payload"].get("witness") != expect["witness"]:
        failures.append(f"witness {d['payload'].get('witness')} != {expect['witness']}")
    for chk in expect.get("checks", []):
        try:
            got = _lookup(d, chk["field"])
        except (KeyError, IndexError, ValueError):
            failures.append(f"{chk['field']} missing")
            continue
        if "value" in chk:
            want = chk["value"]
            if isinstance(want, str):
                ok = got == want
            else:
                ok = isinstance(got, (int, float)) and abs(got - want) <= chk.get("tol", 0.0)
            if not ok:
                failures.append(f"{chk['field']}={got!r}, expected {want!r} +/- {chk.get('tol', 0.0)}")
        if "max" in chk and not (isinstance(got, (int, float)) and got <= chk["max"]):
            failures.append(f"{chk['field']}={got!r} > {chk['max']!r}")
        if "min" in chk and not (isinstance(got, (int, float)) and got >= chk["min"]):
            failures.append(f"{chk['field']}={got!r} < {chk['min']!r}")
    return failures


def run_fixtures(directory: str | None = None) -> Report:
    rows = []
    start = time.perf_counter()
    for path in fixture_files(directory):
        name = path.stem
        try:
            problem = json.loads(path.read_text(encoding="utf-8"))
            report = solve(problem)
            validate_report(report.to_dict())
            problems = check_expectations(problem.get("expect", {"status": report.status}), report)
            rows.append(
                {
                    "name": problem.get("name", name),
                    "kind": problem["kind"],
                    "status": report.status,
                    "expected": problem.get("expect", {}).get("status", report.status),
                    "ok": not problems,
                    "detail": "; ".join(problems) or report.summary,
                }
            )
        except (InputError, SchemaError, json.JSONDecodeError, OSError) as exc:
            rows.append({"name": name, "kind": "?", "status": "error", "expected": "?", "ok": False, "detail": str(exc)})
    passed = sum(r["ok"] for r in rows)
    status = "pass" if rows and passed == len(rows) else "fail"
    report = Report(
        "fixtures",
        status,
        f"{passed}/{len(rows)} fixtures reproduced",
        {"passed": passed, "total": len(rows), "results": rows},
    )
    report.wall_time = time.perf_counter() - start
    return report


def _fixtures_table(report: Report) -> str:
    rows = report.payload["results"]
    width = max([len(r["name"]) for r in rows] + [4])
    lines = [f"{'name':<{width}}  {'kind':<11}  {'expected':<12}  {'got':<12}  result"]
    for r in rows:
        mark = "ok" if r["ok"] else "FAIL"
        lines.append(f"{r['name']:<{width}}  {r['kind']:<11}  {r['expected']:<12}  {r['status']:<12}  {mark}")
        if not r["ok"]:
            lines.append(f"    {r['detail']}")
    lines.append(f"{report.summary} in {report.wall_time:.2f}s")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _ivp_flags(p: argparse.ArgumentParser):
    p.add_argument("--f", nargs="+", help="right-hand side; several expressions in x1..xn for a system")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--x0", type=float, nargs="+")
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--forward", action="store_true", help="time range [t0, t0 + a] only")


def _cert_flags(p: argparse.ArgumentParser, prefix=""):
    p.add_argument(f"--{prefix}criterion", choices=["osgood", "montel_tonelli", "van_kampen", "lasalle", "co1", "co2"])
    for name in ("p", "psi", "phi", "q1", "q2"):
        p.add_argument(f"--{prefix}{name}")
    p.add_argument(f"--{prefix}gamma", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", metavar="FILE", help="problem file (JSON)")
    common.add_argument("--format", choices=["text", "json"], default="text")

    parser = _Parser(prog="uniqcert", description="Numerical certification of calculus identities and ODE uniqueness.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__import__('uniqcert').__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify-cov", parents=[common], help="change of variables with a t-dependent integrand")
    p.add_argument("--f")
    p.add_argument("--x")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("equivalence", parents=[common], help="recover the path integral through Green's theorem")
    p.add_argument("--f")
    p.add_argument("--x")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("verify-green", parents=[common], help="circulation against curl integral")
    p.add_argument("--f1")
    p.add_argument("--f2")
    p.add_argument("--phi")
    p.add_argument("--psi")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--split", type=float)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("check-bound", parents=[common], help="uniqueness-bound criteria")
    _cert_flags(p)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--grid-n", type=int)

    p = sub.add_parser("check-kamke", parents=[common], help="certify an IVP from a certified bound")
    _ivp_flags(p)
    p.add_argument("--mode", choices=["self_bound", "difference_bound"], default="self_bound")
    _cert_flags(p)
    p.add_argument("--bound-p")
    p.add_argument("--bound-psi")
    p.add_argument("--grid-n", type=int)

    p = sub.add_parser("check-th3", parents=[common], help="unique constant solution under an Osgood bound")
    _ivp_flags(p)
    p.add_argument("--psi")
    p.add_argument("--grid-n", type=int)

    p = sub.add_parser("gronwall", parents=[common], help="Gronwall bound and check")
    p.add_argument("--alpha")
    p.add_argument("--beta")
    p.add_argument("--phi")
    p.add_argument("--phi0", type=float, help="solve phi' = alpha + beta*phi from phi0 instead of --phi")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--a", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--grid-n", type=int)
    p.add_argument("--csv", metavar="PATH")

    p = sub.add_parser("funnel", parents=[common], help="perturbed-start spread probe")
    _ivp_flags(p)
    p.add_argument("--t-end", type=float)
    p.add_argument("--deltas", type=float, nargs="+")
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("--csv", metavar="PATH")

    p = sub.add_parser("witness", parents=[common], help="counterexample for g = c x / t")
    p.add_argument("--c", type=float)
    p.add_argument("--a", type=float, default=1.0)

    p = sub.add_parser("fixtures", help="run the bundled fixture suite")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--dir", help="directory of fixture files instead of the bundled set")
    return parser


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def _inline_ivp(ns) -> dict | None:
    if ns.f is None:
        return None
    f = ns.f[0] if len(ns.f) == 1 else list(ns.f)
    x0 = None if ns.x0 is None else (ns.x0[0] if len(ns.x0) == 1 else list(ns.x0))
    return _drop_none({"f": f, "t0": ns.t0, "x0": x0, "a": ns.a, "b": ns.b, "forward": ns.forward or None})


def _inline_cert(ns, prefix="") -> dict:
    g = lambda k: getattr(ns, prefix + k, None)  # noqa: E731
    return _drop_none({k: g(k) for k in ("criterion", "p", "psi", "phi", "q1", "q2", "gamma")})


def inline_problem(kind: str, ns) -> dict:
    """Problem dict assembled from per-field flags."""
    pb: dict = {"version": 1, "kind": kind}
    if kind in ("cov", "equivalence"):
        pb.update(_drop_none({"f": ns.f, "x": ns.x, "a": ns.a, "b": ns.b, "tol": ns.tol}))
    elif kind == "green":
        pb.update(_drop_none({"f1": ns.f1, "f2": ns.f2, "split": ns.split, "tol": ns.tol}))
        region = _drop_none({"a": ns.a, "b": ns.b, "phi": ns.phi, "psi": ns.psi})
        if region:
            pb["region"] = region
    elif kind == "uniqueness":
        pb.update(_inline_cert(ns))
        pb.update(_drop_none({"a": ns.a, "b": ns.b, "grid_n": ns.grid_n}))
    elif kind == "kamke":
        pb.update(_drop_none({"ivp": _inline_ivp(ns), "mode": ns.mode, "grid_n": ns.grid_n}))
        cert = _inline_cert(ns)
        if cert:
            pb["certificate"] = cert
        bound = _drop_none({"p": ns.bound_p, "psi": ns.bound_psi})
        if bound:
            pb["bound"] = bound
    elif kind == "th3":
        pb.update(_drop_none({"ivp": _inline_ivp(ns), "psi": ns.psi, "grid_n": ns.grid_n}))
    elif kind == "gronwall":
        pb.update(
            _drop_none(
                {
                    "alpha": ns.alpha,
                    "beta": ns.beta,
                    "phi": ns.phi,
                    "phi0": ns.phi0,
                    "t0": ns.t0,
                    "a": ns.a,
                    "tol": ns.tol,
                    "grid_n": ns.grid_n,
                }
            )
        )
    elif kind == "funnel":
        pb.update(
            _drop_none(
                {
                    "ivp": _inline_ivp(ns),
                    "t_end": ns.t_end,
                    "deltas": ns.deltas,
                    "rtol": ns.rtol,
                    "atol": ns.atol,
                }
            )
        )
    elif kind == "witness":
        pb.update(_drop_none({"c": ns.c, "a": ns.a}))
    return pb


def _load_input(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read input file: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be an object")
    return data


_FLAG_DEFAULTS = {"format", "input", "csv", "command", "t0", "a", "b", "forward", "mode"}


def _has_inline(ns) -> bool:
    return any(v not in (None, False) for k, v in vars(ns).items() if k not in _FLAG_DEFAULTS)


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    """Entry point; returns the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        parser = build_parser()
        try:
            ns = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        try:
            thread_limit()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

        if ns.command == "fixtures":
            report = run_fixtures(ns.dir)
            text = report.to_json() if ns.format == "json" else _fixtures_table(report)
            stdout.write(text + "\n")
            return report.exit_code

        kind = SUBCOMMANDS[ns.command]
        if ns.input is not None:
            if _has_inline(ns):
                raise UsageError("--input cannot be combined with problem flags")
            problem = _load_input(ns.input)
            if problem.get("kind") in KINDS and problem["kind"] != kind:
                raise UsageError(f"input kind {problem['kind']!r} does not match subcommand {ns.command!r}")
            try:
                report = solve(problem)
            except SchemaError as exc:
                raise InputError(f"{ns.input}: {exc}") from exc
        else:
            problem = inline_problem(kind, ns)
            try:
                validate_problem(problem)
            except SchemaError as exc:
                raise UsageError(f"missing or invalid flags: {exc}") from exc
            report = solve(problem)

        body = report.to_json() if ns.format == "json" else report.to_text()
        if getattr(ns, "csv", None):
            write_atomic(ns.csv, report.to_csv())
        stdout.write(body + "\n")
        return report.exit_code
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (InputError, SchemaError) as exc:
        stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())

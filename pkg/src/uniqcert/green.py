"""Green's theorem on graph-bounded regions and its equivalence with the change of variables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calculus import (
    DEFAULT_TOL,
    GRID_N,
    GraphRegion,
    Path2,
    QuadResult,
    combine,
    find_kinks,
    integrate1d,
    integrate_region,
    line_integral,
    path_kinks,
)
from .cov import CovProblem, IdentityReport, cov_lhs
from .expr import Expr

_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class FieldProblem:
    """Plane field ``(f1, f2)`` in (t, x) and a region inside ``box = (a, b, c, d)``."""

    f1: Expr
    f2: Expr
    region: GraphRegion
    box: tuple | None = None

    def __post_init__(self):
        D = self.region
        if self.box is None:
            grid = np.linspace(D.a, D.b, GRID_N)
            lo = np.broadcast_to(D.lower(grid), grid.shape).min()
            hi = np.broadcast_to(D.upper(grid), grid.shape).max()
            object.__setattr__(self, "box", (D.a, D.b, float(lo), float(hi)))
        a, b, c, d = self.box
        T, X = np.meshgrid(np.linspace(a, b, 65), np.linspace(c, d, 65), indexing="ij")
        env = {"t": T, "x": X}
        self.f1.partial("x", env)
        self.f2.partial("t", env)


def _graph_term(P: FieldProblem, boundary: Expr, tol: float) -> QuadResult:
    """``int_a^b f1(t, y(t)) dt + int_a^b f2(t, y(t)) y'(t) dt`` for a boundary graph y."""
    D = P.region

    def integrand(ts):
        ys = np.broadcast_to(boundary.eval({"t": ts}), ts.shape)
        dy = boundary.partial("t", {"t": ts})
        env = {"t": ts, "x": ys}
        return P.f1.eval(env) + P.f2.eval(env) * dy

    cuts = path_kinks((P.f1, P.f2), boundary, D.a, D.b)
    return integrate1d(integrand, D.a, D.b, tol, points=cuts)


def _vertical_term(P: FieldProblem, t: float, tol: float) -> QuadResult:
    D = P.region
    lo, hi = D.lower(t), D.upper(t)
    cuts = find_kinks(P.f2, "x", lo, hi, fixed={"t": t})
    return integrate1d(
        lambda xs: np.broadcast_to(P.f2.eval({"t": t, "x": xs}), xs.shape), lo, hi, tol, points=cuts
    )


def circulation_terms(P: FieldProblem, tol: float = DEFAULT_TOL) -> dict[str, QuadResult]:
    """The four sides of the boundary: bottom, right, top (reversed), left (reversed)."""
    D = P.region
    per = tol / 4
    return {
        "bottom": _graph_term(P, D.phi, per),
        "right": _vertical_term(P, D.b, per),
        "top": -_graph_term(P, D.psi, per),
        "left": -_vertical_term(P, D.a, per),
    }


def circulation(P: FieldProblem, tol: float = DEFAULT_TOL, *, reverse: bool = False) -> QuadResult:
    """Positively oriented circulation of the field around the region boundary.

    ``reverse=True`` walks the boundary clockwise; every side flips sign, so
    the result is the exact negation.
    """
    terms = list(circulation_terms(P, tol).values())
    sign = -1.0 if reverse else 1.0
    return combine(terms, [sign] * len(terms))


def curl_integral(P: FieldProblem, tol: float = DEFAULT_TOL) -> QuadResult:
    """Double integral of ``df2/dt - df1/dx`` over the region (partials by AD)."""

    def curl(t, xs):
        env = {"t": t, "x": xs}
        return np.broadcast_to(P.f2.partial("t", env) - P.f1.partial("x", env), xs.shape)

    return integrate_region(curl, P.region, tol, kinks=(P.f1, P.f2))


def verify_green(P: FieldProblem, tol: float = DEFAULT_TOL) -> IdentityReport:
    return IdentityReport.compare(circulation(P, tol), curl_integral(P, tol), tol)


def split_defect(P: FieldProblem, c: float, tol: float = DEFAULT_TOL) -> float:
    """``|circ(D) - circ(D1) - circ(D2)|`` for D split at t = c; the shared edge cancels."""
    left, right = P.region.split(c)
    whole = circulation(P, tol).value
    parts = [circulation(FieldProblem(P.f1, P.f2, R, P.box), tol).value for R in (left, right)]
    return abs(whole - math.fsum(parts))


def generic_circulation(P: FieldProblem, tol: float = DEFAULT_TOL) -> QuadResult:
    """Same circulation through the generic closed-path line integral."""
    return line_integral((P.f1, P.f2), Path2.boundary(P.region), tol, closed=True)


def _golden_min(fn, lo: float, hi: float, tol: float = 1e-12) -> float:
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = fn(x2)
    return min(fn(lo), fn(hi), f1, f2)


def path_minimum(x: Expr, a: float, b: float) -> float:
    """Minimum of ``x(t)`` on [a, b]: grid argmin refined by golden section."""
    lo_t, hi_t = min(a, b), max(a, b)
    grid = np.linspace(lo_t, hi_t, GRID_N)
    vals = np.broadcast_to(x.eval({"t": grid}), grid.shape)
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, GRID_N - 1)]
    refined = _golden_min(lambda s: x.eval({"t": s}), lo, hi)
    return min(float(vals[i]), refined)


@dataclass(frozen=True)
class EquivalenceReport(IdentityReport):
    """Change-of-variables LHS recovered from Green's theorem.

    ``lhs`` is the direct path integral, ``rhs`` the value recovered from
    the circulation without its top side and the curl integral;
    ``circulation`` and ``curl`` are the two sides of Green's identity.
    """

    circulation: QuadResult | None = None
    curl: QuadResult | None = None
    green_residual: float = 0.0


def equivalence_check(p: CovProblem, tol: float = DEFAULT_TOL) -> EquivalenceReport:
    """Derive the change-of-variables identity from Green's theorem on one problem.

    Takes the region under the path above its minimum, with ``f1 = 0`` and
    ``f2 = f``.  The circulation equals the curl integral; the top side of
    the circulation is minus the path integral, so the path integral is
    recovered from the other three sides minus the curl integral.
    """
    if p.a > p.b:
        raise ValueError("equivalence_check needs a < b")
    f2 = p.f if p.var == "x" else p.f.rename({"r": "x"})
    floor = path_minimum(p.x_path, p.a, p.b)
    region = GraphRegion(p.a, p.b, Expr.constant(floor), p.x_path)
    P = FieldProblem(Expr.constant(0.0), f2, region)
    terms = circulation_terms(P, tol)
    around = combine(list(terms.values()))
    inside = curl_integral(P, tol)
    without_top = combine([terms["bottom"], terms["right"], terms["left"]])
    recovered = combine([without_top, inside], [1.0, -1.0])
    direct = cov_lhs(p, tol)
    base = IdentityReport.compare(direct, recovered, tol)
    return EquivalenceReport(
        base.lhs, base.rhs, base.residual, base.passed, tol,
        circulation=around, curl=inside, green_residual=abs(around.value - inside.value),
    )


"""Non-autonomous change of variables, checked by computing both sides independently.

For ``f(t, x)`` with a continuous t-partial and a path ``x(t)``::

    int_a^b f(t, x(t)) x'(t) dt
        = int_{x(a)}^{x(b)} f(b, r) dr - int_a^b int_{x(a)}^{x(t)} f_t(t, r) dr dt

The left side is a single quadrature along the path; the right side never
touches x'(t) and uses the t-partial from forward AD, so agreement is a
genuine cross-check of the two routes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import (
    DEFAULT_TOL,
    GRID_N,
    QuadResult,
    combine,
    find_kinks,
    integrate1d,
    integrate_nested,
    path_kinks,
    x_kinks,
)
from .expr import Expr


def space_variable(f: Expr) -> str:
    """Name of the integration variable of ``f``: ``x`` unless only ``r`` is used."""
    free = f.free_variables
    return "r" if "r" in free and "x" not in free else "x"


@dataclass(frozen=True)
class IdentityReport:
    lhs: QuadResult
    rhs: QuadResult
    residual: float
    passed: bool
    tol: float

    @classmethod
    def compare(cls, lhs: QuadResult, rhs: QuadResult, tol: float) -> "IdentityReport":
        residual = abs(lhs.value - rhs.value)
        return cls(lhs, rhs, residual, residual <= tol + lhs.err_estimate + rhs.err_estimate, tol)


@dataclass(frozen=True)
class CovProblem:
    """Integrand ``f(t, x)`` and a path ``x(t)`` on [a, b] with range inside ``box``.

    ``a > b`` is accepted; both sides of the identity then change sign.
    """

    f: Expr
    x_path: Expr
    a: float
    b: float
    box: tuple | None = None

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("CovProblem needs a != b")
        if not self.x_path.free_variables <= {"t"}:
            raise ValueError("x_path must be an expression in t")
        grid = np.linspace(self.a, self.b, GRID_N)
        xs = np.broadcast_to(self.x_path.eval({"t": grid}), grid.shape)
        if self.box is None:
            object.__setattr__(self, "box", (float(xs.min()), float(xs.max())))
        c, d = self.box
        if xs.min() < c - 1e-12 or xs.max() > d + 1e-12:
            raise ValueError(f"x_path leaves the box [{c}, {d}]")
        # f and its t-partial must be finite on the rectangle
        T, X = np.meshgrid(grid, np.linspace(c, d, 65), indexing="ij")
        env = {"t": T, self.var: X}
        self.f.eval(env)
        self.f.partial("t", env)

    @property
    def var(self) -> str:
        return space_variable(self.f)

    def x(self, t):
        return self.x_path.eval({"t": t})

    def breakpoints(self) -> list[float]:
        """Kinks of the path and switching points of ``f`` along it."""
        return path_kinks([self.f], self.x_path, self.a, self.b, x_var=self.var)


def cov_lhs(p: CovProblem, tol: float = DEFAULT_TOL) -> QuadResult:
    """``int_a^b f(t, x(t)) x'(t) dt`` with x' by forward AD."""
    var = p.var

    def integrand(ts):
        xs = np.broadcast_to(p.x(ts), ts.shape)
        dx = p.x_path.partial("t", {"t": ts})
        return p.f.eval({"t": ts, var: xs}) * dx

    return integrate1d(integrand, p.a, p.b, tol, points=p.breakpoints())


def cov_rhs(p: CovProblem, tol: float = DEFAULT_TOL) -> QuadResult:
    """Boundary integral at t=b minus the nested integral of the t-partial."""
    var = p.var
    xa, xb = p.x(p.a), p.x(p.b)
    cuts = find_kinks(p.f, var, xa, xb, fixed={"t": p.b})
    boundary = integrate1d(lambda rs: p.f.eval({"t": p.b, var: rs}), xa, xb, tol / 2, points=cuts)
    correction = integrate_nested(
        lambda t, rs: p.f.partial("t", {"t": t, var: rs}),
        p.a,
        p.b,
        lambda t: xa,
        p.x,
        tol / 2,
        points=p.breakpoints(),
        inner_points=x_kinks([p.f], x_var=var),
    )
    return combine([boundary, correction], [1.0, -1.0])


def verify_cov(p: CovProblem, tol: float = DEFAULT_TOL) -> IdentityReport:
    return IdentityReport.compare(cov_lhs(p, tol), cov_rhs(p, tol), tol)


def leibniz_check(f: Expr, x1: Expr, x2: Expr, t: float, h: float = 1e-4, tol: float = 1e-13) -> float:
    """Residual of differentiation under the integral with moving limits.

    Compares a centred difference of ``F(t) = int_{x1(t)}^{x2(t)} f(t, r) dr``
    with ``f(t, x2) x2' - f(t, x1) x1' + int_{x1}^{x2} f_t(t, r) dr``.
    The truncation part of the residual is O(h**2).
    """
    var = space_variable(f)

    def F(tau):
        lo, hi = x1.eval({"t": tau}), x2.eval({"t": tau})
        return integrate1d(lambda rs: f.eval({"t": tau, var: rs}), lo, hi, tol).value

    difference = (F(t + h) - F(t - h)) / (2 * h)
    lo, hi = x1.eval({"t": t}), x2.eval({"t": t})
    dlo, dhi = x1.partial("t", {"t": t}), x2.partial("t", {"t": t})
    moving = f.eval({"t": t, var: hi}) * dhi - f.eval({"t": t, var: lo}) * dlo
    under = integrate1d(lambda rs: f.partial("t", {"t": t, var: rs}), lo, hi, tol).value
    return abs(difference - (moving + under))


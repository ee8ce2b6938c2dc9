"""Uniqueness bounds: criteria checkers, counterexample witnesses and Kamke-type certification.

Every inequality hypothesis is sampled on a deterministic uniform grid, so a
``Certified`` verdict means "certified on the recorded grid", not a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .calculus import GRID_N, DivergenceClass, classify_improper_left, integrate1d
from .expr import DomainError, Expr, Var, parse

SLACK = 1e-12
KAMKE_GRID = 65
VECTOR_GRID = 33


class InvalidRange(ValueError):
    """Parameter outside the range where a claim is made."""


class Status(str, Enum):
    CERTIFIED = "certified"
    REFUTED = "refuted"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    """Outcome of a checker.

    ``criterion`` names the certifying result, ``reason`` the failing
    hypothesis of an inconclusive run and ``witness`` the counterexample of
    a refutation.  ``grid`` records where inequalities were sampled.
    """

    status: Status
    criterion: str | None = None
    reason: str | None = None
    witness: str | None = None
    grid: dict = field(default_factory=dict)
    evidence: dict = field(default_factory=dict)
    on_grid: bool = True

    def __post_init__(self):
        if self.status is Status.CERTIFIED and not (self.criterion and self.grid):
            raise ValueError("a certified verdict needs a criterion and a grid")
        if self.status is Status.REFUTED and not self.witness:
            raise ValueError("a refuted verdict needs a witness")
        if self.status is Status.INCONCLUSIVE and not self.reason:
            raise ValueError("an inconclusive verdict needs a reason")

    @classmethod
    def certified(cls, criterion: str, grid: dict, **evidence) -> "Verdict":
        return cls(Status.CERTIFIED, criterion=criterion, grid=grid, evidence=evidence)

    @classmethod
    def refuted(cls, witness: str, grid: dict, **evidence) -> "Verdict":
        return cls(Status.REFUTED, criterion="counterexample", witness=witness, grid=grid, evidence=evidence)

    @classmethod
    def inconclusive(cls, reason: str, grid: dict | None = None, **evidence) -> "Verdict":
        return cls(Status.INCONCLUSIVE, reason=reason, grid=grid or {}, evidence=evidence)

    @property
    def is_certified(self) -> bool:
        return self.status is Status.CERTIFIED

    @property
    def is_refuted(self) -> bool:
        return self.status is Status.REFUTED

    @property
    def label(self) -> str:
        if self.status is Status.CERTIFIED:
            return f"Certified({self.criterion})"
        if self.status is Status.REFUTED:
            return f"Refuted(witness={self.witness})"
        return f"Inconclusive({self.reason})"

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "label": self.label,
            "criterion": self.criterion,
            "reason": self.reason,
            "witness": self.witness,
            "certified_on_grid": self.on_grid,
            "grid": dict(self.grid),
            "evidence": _jsonable(self.evidence),
        }


def _jsonable(obj):
    if isinstance(obj, DivergenceClass):
        return obj.to_dict()
    if isinstance(obj, Verdict):
        return obj.to_dict()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Expr):
        return str(obj)
    return obj


# ---------------------------------------------------------------------------
# grid helpers
# ---------------------------------------------------------------------------


def open_grid(length: float, n: int = GRID_N) -> np.ndarray:
    """``n`` uniform points of (0, length]."""
    return np.linspace(0.0, length, n + 1)[1:]


def _grid_info(domain: str, n: int, **extra) -> dict:
    return {"domain": domain, "points": int(n), **extra}


def _values(e: Expr, var: str, xs, **fixed) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    return np.broadcast_to(e.eval({**fixed, var: xs}), xs.shape).astype(float)


def _slack(ref) -> np.ndarray:
    return SLACK * (1.0 + np.abs(ref))


def _first(mask: np.ndarray) -> int | None:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size else None


def _fn(e: Expr, var: str) -> Callable:
    return lambda s: _values(e, var, s)


def _only(e: Expr, allowed: set, role: str):
    extra = e.free_variables - allowed
    if extra:
        raise ValueError(f"{role} may only use {sorted(allowed)}, found {sorted(extra)}")


# ---------------------------------------------------------------------------
# bound and IVP specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundSpec:
    """Separable majorant ``g(tau, u) = p(tau) * psi(tau, u)`` on (0, a] x [0, b]."""

    p: Expr
    psi: Expr
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        _only(self.p, {"t"}, "p")
        _only(self.psi, {"t", "x"}, "psi")

    def g(self, tau, u):
        tau = np.asarray(tau, dtype=float)
        u = np.asarray(u, dtype=float)
        return self.p.eval({"t": tau}) * self.psi.eval({"t": tau, "x": u})

    def to_dict(self) -> dict:
        return {"p": str(self.p), "psi": str(self.psi), "a": self.a, "b": self.b}


def state_names(dim: int | None) -> tuple:
    return ("x",) if dim is None else tuple(f"x{i + 1}" for i in range(dim))


@dataclass(frozen=True)
class IvpSpec:
    """``x' = f(t, x), x(t0) = x0`` on ``[t0 - a, t0 + a] x B(x0, b)`` in the max norm.

    ``f`` is one Expr in (t, x) or a tuple of Exprs in (t, x1..xn).
    ``forward=True`` restricts the time range to [t0, t0 + a].  Finiteness
    is validated on a box grid that omits t = t0, where Nagumo-type right
    sides are singular.
    """

    f: Expr | tuple
    t0: float
    x0: float | tuple
    a: float
    b: float
    forward: bool = False

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        if isinstance(self.f, Expr):
            if not np.isscalar(self.x0):
                raise ValueError("scalar f needs scalar x0")
            object.__setattr__(self, "x0", float(self.x0))
        else:
            object.__setattr__(self, "f", tuple(self.f))
            x0 = tuple(float(v) for v in np.atleast_1d(self.x0))
            if len(x0) != len(self.f):
                raise ValueError(f"x0 has {len(x0)} components, f has {len(self.f)}")
            object.__setattr__(self, "x0", x0)
        allowed = {"t", *self.names}
        for comp in self.components:
            _only(comp, allowed, "f")
        self._validate()

    @property
    def dim(self) -> int | None:
        return None if isinstance(self.f, Expr) else len(self.f)

    @property
    def n(self) -> int:
        return 1 if self.dim is None else self.dim

    @property
    def names(self) -> tuple:
        return state_names(self.dim)

    @property
    def components(self) -> tuple:
        return (self.f,) if isinstance(self.f, Expr) else self.f

    @property
    def x0_vector(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.x0, dtype=float))

    @property
    def t_range(self) -> tuple:
        lo = self.t0 if self.forward else self.t0 - self.a
        return lo, self.t0 + self.a

    def t_grid(self, n: int = GRID_N, *, skip_t0: bool = True) -> np.ndarray:
        lo, hi = self.t_range
        ts = np.linspace(lo, hi, n)
        if skip_t0:
            ts = ts[np.abs(ts - self.t0) > 1e-15 * (1 + abs(self.t0))]
        return ts

    def x_axis(self, radius: float, n: int) -> np.ndarray:
        return np.linspace(-radius, radius, n)

    def evaluate(self, t, states: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Components of f at time(s) ``t`` and state coordinate arrays ``states``."""
        env = {"t": t, **dict(zip(self.names, states))}
        shape = np.broadcast(np.asarray(t), *[np.asarray(s) for s in states]).shape
        return [np.broadcast_to(c.eval(env), shape).astype(float) for c in self.components]

    def _validate(self):
        per_axis = max(3, int(1089 ** (1.0 / self.n)))
        axes = [self.x_axis(self.b, per_axis) + c for c in self.x0_vector]
        mesh = np.meshgrid(*axes, indexing="ij")
        for t in self.t_grid(VECTOR_GRID):
            for comp in self.evaluate(t, mesh):
                if not np.all(np.isfinite(comp)):
                    raise DomainError(f"f is not finite on the box at t={t!r}")

    def rhs_function(self) -> Callable[[float, np.ndarray], np.ndarray]:
        order = ("t", *self.names)
        fns = [c.compile(order) for c in self.components]

        def rhs(t, y):
            return np.array([fn(t, *y) for fn in fns])

        return rhs

    def to_dict(self) -> dict:
        f = str(self.f) if self.dim is None else [str(c) for c in self.f]
        x0 = self.x0 if self.dim is None else list(self.x0)
        return {"f": f, "t0": self.t0, "x0": x0, "a": self.a, "b": self.b, "forward": self.forward}


def make_ivp(f, t0: float, x0, a: float, b: float, forward: bool = False) -> IvpSpec:
    """IvpSpec from DSL text: one string for a scalar equation, a list for a system."""
    if isinstance(f, str):
        return IvpSpec(parse(f), t0, x0, a, b, forward)
    names = ("t", *state_names(len(f)))
    return IvpSpec(tuple(parse(s, names) for s in f), t0, x0, a, b, forward)


# ---------------------------------------------------------------------------
# criteria ladder
# ---------------------------------------------------------------------------


def check_osgood(psi: Expr, b: float, grid_n: int = GRID_N) -> Verdict:
    """psi(0) = 0, psi > 0 on (0, b] and a divergent integral of 1/psi at 0+."""
    _only(psi, {"x"}, "psi")
    grid = _grid_info("(0, b]", grid_n, b=b)
    psi0 = float(psi.eval({"x": 0.0}))
    if abs(psi0) > SLACK:
        return Verdict.inconclusive("psi(0) != 0", grid, psi0=psi0)
    xs = open_grid(b, grid_n)
    vals = _values(psi, "x", xs)
    bad = _first(vals <= 0)
    if bad is not None:
        return Verdict.inconclusive("psi not positive on (0, b]", grid, at_x=float(xs[bad]))
    div = classify_improper_left(lambda s: 1.0 / _values(psi, "x", s), 0.0, b)
    if div.divergent:
        return Verdict.certified("osgood", grid, divergence=div)
    if div.convergent:
        return Verdict.inconclusive("integral of 1/psi convergent", grid, divergence=div)
    return Verdict.inconclusive("divergence of 1/psi undetermined", grid, divergence=div)


def check_montel_tonelli(p: Expr, psi: Expr, a: float, b: float, grid_n: int = GRID_N) -> Verdict:
    _only(p, {"t"}, "p")
    grid = _grid_info("(0, a] x (0, b]", grid_n, a=a, b=b)
    ts = open_grid(a, grid_n)
    bad = _first(_values(p, "t", ts) <= 0)
    if bad is not None:
        return Verdict.inconclusive("p not positive on (0, a]", grid, at_t=float(ts[bad]))
    integrability = classify_improper_left(_fn(p, "t"), 0.0, a)
    if not integrability.convergent:
        return Verdict.inconclusive("p not integrable at 0+", grid, p_integral=integrability)
    osgood = check_osgood(psi, b, grid_n)
    if not osgood.is_certified:
        return Verdict.inconclusive(f"osgood: {osgood.reason}", grid, p_integral=integrability, osgood=osgood)
    return Verdict.certified("montel_tonelli", grid, p_integral=integrability, osgood=osgood)


def _is_identity(psi: Expr, xs: np.ndarray) -> bool:
    if psi.root == Var("x"):
        return True
    if not psi.free_variables <= {"t", "x"}:
        return False
    try:
        if "t" in psi.free_variables:
            T, X = np.meshgrid(xs, xs, indexing="ij")
            ratio = np.broadcast_to(psi.eval({"t": T, "x": X}), X.shape) / X
        else:
            ratio = _values(psi, "x", xs) / xs
    except DomainError:
        return False
    return bool(np.all(np.abs(ratio - 1.0) <= SLACK))


def check_van_kampen(p: Expr, psi: Expr, a: float, b: float = 1.0, grid_n: int = GRID_N) -> Verdict:
    """``p = (1 + q)/t`` with ``q >= 0``, ``q/t`` integrable and ``psi = x``.

    ``q == 0`` is reported as Nagumo.  ``b`` only sets the range on which
    psi/x = 1 is sampled when psi is not literally ``x``.
    """
    _only(p, {"t"}, "p")
    grid = _grid_info("(0, a]", grid_n, a=a)
    ts = open_grid(a, grid_n)
    if not _is_identity(psi, open_grid(b, grid_n)):
        return Verdict.inconclusive("psi is not x", grid)
    q = ts * _values(p, "t", ts) - 1.0
    bad = _first(q < -SLACK)
    if bad is not None:
        return Verdict.inconclusive("q = t*p - 1 negative", grid, at_t=float(ts[bad]), q=float(q[bad]))
    if np.all(np.abs(q) <= SLACK):
        return Verdict.certified("nagumo", grid, q_max=float(np.max(np.abs(q))))

    def q_over_s(s):
        return (s * _values(p, "t", s) - 1.0) / s

    div = classify_improper_left(q_over_s, 0.0, a)
    if div.convergent:
        return Verdict.certified("van_kampen", grid, q_integral=div)
    return Verdict.inconclusive("q(s)/s not integrable at 0+", grid, q_integral=div)


def check_lasalle(p: Expr, psi: Expr, a: float, b: float, grid_n: int = GRID_N) -> Verdict:
    """Separable-bound conditions on ``J(t) = int_t^m (1/psi(s) - p(s)) ds`` with m = min(a, b).

    ``lasalle_13``: J grows without bound as t -> 0+.
    ``lasalle_14``: J stays bounded below and psi(x) <= x.
    """
    _only(p, {"t"}, "p")
    _only(psi, {"x"}, "psi")
    grid = _grid_info("(0, a] x (0, b]", grid_n, a=a, b=b)
    ts, xs = open_grid(a, grid_n), open_grid(b, grid_n)
    bad = _first(_values(p, "t", ts) < -SLACK)
    if bad is not None:
        return Verdict.inconclusive("p negative on (0, a]", grid, at_t=float(ts[bad]))
    psi0 = float(psi.eval({"x": 0.0}))
    if abs(psi0) > SLACK:
        return Verdict.inconclusive("psi(0) != 0", grid, psi0=psi0)
    psi_vals = _values(psi, "x", xs)
    bad = _first(psi_vals <= 0)
    if bad is not None:
        return Verdict.inconclusive("psi not positive on (0, b]", grid, at_x=float(xs[bad]))

    m = min(a, b)

    def integrand(s):
        return 1.0 / _values(psi, "x", s) - _values(p, "t", s)

    J = classify_improper_left(integrand, 0.0, m)
    partials = np.asarray(J.evidence)
    if J.divergent and partials[-1] > partials[0] and partials[-1] > 0:
        return Verdict.certified("lasalle_13", grid, J=J)
    bounded_below = J.convergent or bool(np.all(np.diff(partials) >= -SLACK * (1 + np.abs(partials[1:]))))
    if not bounded_below:
        return Verdict.inconclusive("lasalle_13 and lasalle_14 fail: J not bounded below", grid, J=J)
    above = _first(psi_vals > xs + _slack(xs))
    if above is not None:
        return Verdict.inconclusive(
            "lasalle_13 fails: J bounded; lasalle_14 fails: psi(x) > x", grid, J=J, at_x=float(xs[above])
        )
    return Verdict.certified("lasalle_14", grid, J=J)


def check_co1(q1: Expr, q2: Expr, gamma: float, a: float, b: float, grid_n: int = GRID_N) -> Verdict:
    """``p = (1 + q1)/t`` and ``psi = (1 + q2 x^gamma) x``, the family that check_co1 certifies."""
    _only(q1, {"t"}, "q1")
    _only(q2, {"t"}, "q2")
    grid = _grid_info("(0, a]", grid_n, a=a, b=b)
    if not gamma > 0:
        return Verdict.inconclusive("gamma must be positive", grid, gamma=gamma)
    ts = open_grid(a, grid_n)
    q1_vals = _values(q1, "t", ts)
    bad = _first(q1_vals < -SLACK)
    if bad is not None:
        return Verdict.inconclusive("q1 negative on (0, a]", grid, at_t=float(ts[bad]))
    q1_int = classify_improper_left(lambda s: _values(q1, "t", s) / s, 0.0, a)
    if not q1_int.convergent:
        return Verdict.inconclusive("q1(s)/s not integrable at 0+", grid, q1_integral=q1_int)
    closed = np.linspace(0.0, a, grid_n)
    try:
        q2_vals = _values(q2, "t", closed)
    except DomainError as exc:
        return Verdict.inconclusive(f"q2 not continuous on [0, a]: {exc.reason}", grid)
    bad = _first(q2_vals < -SLACK)
    if bad is not None:
        return Verdict.inconclusive("q2 negative on [0, a]", grid, at_t=float(closed[bad]))
    q2_slope = classify_improper_left(lambda s: np.abs(q2.partial("t", {"t": s})), 0.0, a)
    if not q2_slope.convergent:
        return Verdict.inconclusive("q2' not integrable on (0, a)", grid, q2_derivative=q2_slope)
    g_num = _format_number(gamma)
    return Verdict.certified(
        "corollary_co1",
        grid,
        p=f"(1+({q1}))/t",
        psi=f"(1+({q2})*x^{g_num})*x",
        q1_integral=q1_int,
        q2_derivative=q2_slope,
    )


def check_co2(phi: Expr, b: float, grid_n: int = GRID_N) -> Verdict:
    """``g <= phi(x)/t`` with phi(0) = 0, phi > 0, phi'(0) <= 1 and phi'' bounded above.

    The grid includes b, so the Taylor constant ``c = max(0, sup phi'')/2``
    is the on-grid supremum over (0, b].
    """
    _only(phi, {"x"}, "phi")
    grid = _grid_info("(0, b]", grid_n, b=b)
    phi0 = float(phi.eval({"x": 0.0}))
    if abs(phi0) > SLACK:
        return Verdict.inconclusive("phi(0) != 0", grid, phi0=phi0)
    xs = open_grid(b, grid_n)
    vals = _values(phi, "x", xs)
    bad = _first(vals <= 0)
    if bad is not None:
        return Verdict.inconclusive("phi not positive on (0, b]", grid, at_x=float(xs[bad]))
    try:
        slope0 = float(phi.partial("x", {"x": 0.0}))
    except DomainError as exc:
        return Verdict.inconclusive(f"phi'(0) undefined: {exc.reason}", grid)
    if not slope0 <= 1.0 + SLACK:
        return Verdict.inconclusive(f"phi'(0) = {slope0:g} > 1", grid, phi_prime_0=slope0)
    curvature = np.broadcast_to(phi.partial("x", {"x": xs}, order=2), xs.shape)
    if not np.all(np.isfinite(curvature)):
        return Verdict.inconclusive("phi'' not finite on (0, b)", grid)
    sup = float(np.max(curvature))
    c = max(0.0, sup) / 2.0
    above = _first(vals > xs + c * xs**2 + _slack(vals))
    if above is not None:
        return Verdict.inconclusive("phi(x) <= x + c x^2 fails on grid", grid, c=c, at_x=float(xs[above]))
    c_num = _format_number(c)
    return Verdict.certified(
        "corollary_co2",
        grid,
        c=c,
        phi_prime_0=slope0,
        sup_phi_second=sup,
        reduction=f"phi(x) <= x + {c_num}*x^2",
        p="1/t",
        psi=f"(1+{c_num}*x)*x",
    )


def _format_number(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def find_counterexample_witness(c: float, a: float, grid_n: int = GRID_N) -> Verdict:
    """Refute ``g = c x / t`` for c > 1 with the non-trivial solution ``t^c``."""
    from .odeprobe import verify_witness_dynamics

    if not c > 1:
        raise InvalidRange(f"no witness is claimed for c = {c} <= 1")
    num = _format_number(c)
    g = parse(f"{num}*x/t")
    witness = parse(f"t^{num}")
    grid = _grid_info("(0, a]", grid_n, a=a)
    residual = verify_witness_dynamics(g, witness, a, grid_n=grid_n)
    w0 = float(witness.eval({"t": 0.0}))
    dw0 = float(witness.partial("t", {"t": 0.0}))
    if residual > 1e-10 or w0 != 0.0 or dw0 != 0.0:
        return Verdict.inconclusive("witness check failed", grid, residual=residual, w0=w0, dw0=dw0)
    return Verdict.refuted(str(witness), grid, g=str(g), residual=residual, w0=w0, dw0=dw0)


def check_theorem_th3(ivp: IvpSpec, psi: Expr, grid_n: int = GRID_N) -> Verdict:
    """``|f(t, x)| <= psi(|x - x0|)`` on the whole box plus Osgood for psi."""
    if ivp.dim is not None:
        raise ValueError("check_theorem_th3 needs a scalar IVP")
    _only(psi, {"x"}, "psi")
    grid = _grid_info("box", grid_n, t_range=list(ivp.t_range), x_range=[ivp.x0 - ivp.b, ivp.x0 + ivp.b])
    ts = ivp.t_grid(grid_n, skip_t0=False)
    xs = ivp.x0 + ivp.x_axis(ivp.b, grid_n)
    bound = _values(psi, "x", np.abs(xs - ivp.x0))
    for t in ts:
        (fx,) = ivp.evaluate(t, [xs])
        bad = _first(np.abs(fx) > bound + _slack(bound))
        if bad is not None:
            return Verdict.inconclusive(
                "|f| > psi(|x - x0|)", grid, at=[float(t), float(xs[bad])], f=float(fx[bad]), psi=float(bound[bad])
            )
    osgood = check_osgood(psi, ivp.b, grid_n)
    if not osgood.is_certified:
        return Verdict.inconclusive(f"osgood: {osgood.reason}", grid, osgood=osgood)
    return Verdict.certified("theorem_th3: unique constant solution", grid, osgood=osgood)


# ---------------------------------------------------------------------------
# Kamke-type certification of concrete IVPs
# ---------------------------------------------------------------------------


class KamkeMode(str, Enum):
    SELF_BOUND = "self_bound"
    DIFFERENCE_BOUND = "difference_bound"


def _norm(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.max(np.abs(np.stack(parts)), axis=0)


def check_kamke(
    ivp: IvpSpec,
    bound: BoundSpec,
    certificate: Verdict,
    mode: KamkeMode | str = KamkeMode.SELF_BOUND,
    grid_n: int | None = None,
) -> Verdict:
    """Certify uniqueness of an IVP from a certified uniqueness bound.

    SELF_BOUND samples ``||f(t, x)|| <= g(|t - t0|, ||x - x0||)`` on the box
    plus ``f(t, x0) = 0``; DIFFERENCE_BOUND samples
    ``||f(t, x) - f(t, y)|| <= g(|t - t0|, ||x - y||)`` on the half-radius
    box.  The first violated point in lexicographic grid order is reported.
    """
    mode = KamkeMode(mode)
    if not certificate.is_certified:
        return Verdict.inconclusive("bound not certified", evidence_certificate=certificate)
    if mode is KamkeMode.SELF_BOUND:
        return _kamke_self(ivp, bound, certificate, grid_n or GRID_N)
    default = KAMKE_GRID if ivp.dim is None else VECTOR_GRID
    return _kamke_difference(ivp, bound, certificate, grid_n or default)


def _tau_ok(ivp: IvpSpec, bound: BoundSpec, ts: np.ndarray) -> np.ndarray:
    return ts[np.abs(ts - ivp.t0) <= bound.a * (1 + 1e-15)]


def _kamke_self(ivp, bound, certificate, n) -> Verdict:
    per_axis = n if ivp.dim is None else VECTOR_GRID
    ts = _tau_ok(ivp, bound, ivp.t_grid(n))
    axes = [c + ivp.x_axis(ivp.b, per_axis) for c in ivp.x0_vector]
    mesh = np.meshgrid(*axes, indexing="ij")
    u = _norm([m - c for m, c in zip(mesh, ivp.x0_vector)])
    grid = _grid_info("V", len(ts) * u.size, t_points=len(ts), x_points_per_axis=per_axis, mode="self_bound")
    centre = [np.full(1, c) for c in ivp.x0_vector]
    worst = 0.0
    for t in ts:
        at_x0 = _norm(ivp.evaluate(t, centre))
        if at_x0.max() > SLACK:
            return Verdict.inconclusive("f(t, x0) != 0", grid, at_t=float(t), value=float(at_x0.max()))
        lhs = _norm(ivp.evaluate(t, mesh))
        g = np.broadcast_to(bound.g(abs(t - ivp.t0), u), u.shape)
        violated = lhs > g + _slack(g)
        if violated.any():
            idx = np.unravel_index(_first(violated.ravel()), u.shape)
            point = [float(t), *(float(m[idx]) for m in mesh)]
            return Verdict.inconclusive(
                "self bound violated", grid, at=point, norm_f=float(lhs[idx]), g=float(g[idx]), certificate=certificate
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(g > 0, lhs / g, 0.0)
        worst = max(worst, float(np.max(ratio)))
    return Verdict.certified("kamke", grid, inequality="self_bound", max_ratio=worst, bound=bound.to_dict(), certificate=certificate)


def _kamke_difference(ivp, bound, certificate, n) -> Verdict:
    ts = _tau_ok(ivp, bound, ivp.t_grid(n))
    radius = ivp.b / 2
    axes = [c + ivp.x_axis(radius, n) for c in ivp.x0_vector]
    mesh = [m.ravel() for m in np.meshgrid(*axes, indexing="ij")]
    k = mesh[0].size
    u = _norm([m[:, None] - m[None, :] for m in mesh])
    grid = _grid_info("W x W", len(ts) * k * k, t_points=len(ts), x_points_per_axis=n, mode="difference_bound")
    worst = 0.0
    for t in ts:
        fvals = ivp.evaluate(t, mesh)
        lhs = _norm([fv[:, None] - fv[None, :] for fv in fvals])
        g = np.broadcast_to(bound.g(abs(t - ivp.t0), u), u.shape)
        violated = lhs > g + _slack(g)
        if violated.any():
            i, j = np.unravel_index(_first(violated.ravel()), u.shape)
            x = [float(m[i]) for m in mesh]
            y = [float(m[j]) for m in mesh]
            return Verdict.inconclusive(
                "difference bound violated", grid, at_t=float(t), x=x, y=y, norm_diff=float(lhs[i, j]), g=float(g[i, j]),
                certificate=certificate,
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(g > 0, lhs / g, 0.0)
        worst = max(worst, float(np.max(ratio)))
    return Verdict.certified("kamke", grid, inequality="difference_bound", max_ratio=worst, bound=bound.to_dict(), certificate=certificate)


def certificate_bound(criterion: str, a: float, b: float, **params: Expr) -> BoundSpec:
    """The majorant ``p(t) psi(t, x)`` a criterion's hypotheses are about.

    ``params`` holds the same expressions the checker was given
    (p, psi, phi, q1, q2 and gamma as an Expr constant).
    """
    if criterion in ("osgood", "lipschitz"):
        return BoundSpec(Expr.constant(1.0), params["psi"], a, b)
    if criterion in ("montel_tonelli", "lasalle"):
        return BoundSpec(params["p"], params["psi"], a, b)
    if criterion in ("van_kampen", "nagumo"):
        return BoundSpec(params["p"], parse("x"), a, b)
    if criterion in ("co2", "corollary_co2"):
        return BoundSpec(parse("1/t"), params["phi"], a, b)
    if criterion in ("co1", "corollary_co1"):
        gamma = _format_number(float(params["gamma"].eval({})))
        p = parse(f"(1+({params['q1']}))/t")
        psi = parse(f"(1+({params['q2']})*x^{gamma})*x")
        return BoundSpec(p, psi, a, b)
    raise ValueError(f"no bound is associated with criterion {criterion!r}")


# ---------------------------------------------------------------------------
# per-witness diagnostic for the limsup condition
# ---------------------------------------------------------------------------


def _decade_points(lo: float, hi: float) -> list[float]:
    """Powers-of-ten breakpoints so integrands like 1/r are resolved across many decades."""
    lo, hi = min(lo, hi), max(lo, hi)
    if not lo > 0 or hi / lo <= 10:
        return []
    k = math.ceil(math.log10(lo))
    pts = []
    while 10.0**k < hi:
        if 10.0**k > lo:
            pts.append(10.0**k)
        k += 1
    return pts


@dataclass(frozen=True)
class TrialTrend:
    ts: tuple
    values: tuple
    trend: str
    last: float


def trial_function_trend(
    p: Expr, psi: Expr, u: Expr, t1: float, t2: float, decades: int = 12, tol: float = 1e-12
) -> TrialTrend:
    """Evaluate ``int_{u(t)}^{u(t2)} dr / psi(t2, r) - int_t^{t2} p(s) ds`` as t decreases to t1.

    Only this one test function ``u`` is examined; the trend of the values
    (``increasing``, ``decreasing``, ``mixed``) is what the condition is
    about, so nothing is certified here.
    """
    if not t2 > t1:
        raise ValueError("need t1 < t2")
    u_end = float(u.eval({"t": t2}))
    ts, values = [], []
    for k in range(1, decades + 1):
        t = t1 + (t2 - t1) * 10.0**-k
        ut = float(u.eval({"t": t}))
        radial = integrate1d(
            lambda r: 1.0 / _values(psi, "x", r, t=t2), ut, u_end, tol, points=_decade_points(ut, u_end)
        ).value
        drift = integrate1d(_fn(p, "t"), t, t2, tol, points=_decade_points(t, t2)).value
        ts.append(t)
        values.append(radial - drift)
    steps = np.diff(values)
    if np.all(steps > 0):
        trend = "increasing"
    elif np.all(steps < 0):
        trend = "decreasing"
    else:
        trend = "mixed"
    last = values[-1]
    return TrialTrend(tuple(ts), tuple(values), trend, last if math.isfinite(last) else float("nan"))

"""Adaptive quadrature: 1D, improper-left classification, graph regions, line integrals."""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .expr import DomainError, Expr, kink_expressions

GRID_N = 257
DEFAULT_TOL = 1e-10

# Gauss-Kronrod 7-15 on [-1, 1]: positive Kronrod abscissae, largest first.
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes (x_k[1], x_k[3], x_k[5], 0)
GAUSS_WEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])
RULE_SIZE = 15
_EPS = np.finfo(float).eps


class MaxDepthExceeded(RuntimeWarning):
    """Quadrature stopped before reaching the requested tolerance."""


class OpenPathError(ValueError):
    """A circulation was requested along a path that does not close."""


@dataclass(frozen=True)
class QuadResult:
    value: float
    err_estimate: float
    evals: int
    converged: bool = True

    def __post_init__(self):
        if self.err_estimate < 0:
            raise ValueError("error estimate must be non-negative")

    def __neg__(self):
        return QuadResult(-self.value, self.err_estimate, self.evals, self.converged)


def combine(results: Sequence[QuadResult], signs: Sequence[float] | None = None) -> QuadResult:
    """Signed sum of independent quadratures; errors add."""
    signs = [1.0] * len(results) if signs is None else list(signs)
    return QuadResult(
        math.fsum(s * r.value for s, r in zip(signs, results)),
        math.fsum(r.err_estimate for r in results),
        sum(r.evals for r in results),
        all(r.converged for r in results),
    )


Integrand = Union[Expr, Callable[[np.ndarray], np.ndarray]]


def as_function(f: Integrand, var: str | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised callable from an Expr in one variable (or a callable)."""
    if isinstance(f, Expr):
        if var is None:
            free = sorted(f.free_variables)
            if len(free) > 1:
                raise ValueError(f"integrand has several variables {free}; pass var=")
            var = free[0] if free else "t"
        expr = f
        name = var
        return lambda xs: np.broadcast_to(expr.eval({name: xs}), xs.shape)

    def wrapped(xs):
        out = np.broadcast_to(np.asarray(f(xs), dtype=float), xs.shape)
        if not np.all(np.isfinite(out)):
            bad = xs.ravel()[np.flatnonzero(~np.isfinite(out.ravel()))[0]]
            raise DomainError("non-finite integrand value", None, {"at": float(bad)})
        return out

    return wrapped


def _panel(fn, left: float, right: float):
    center = 0.5 * (left + right)
    half = 0.5 * (right - left)
    fx = fn(center + half * NODES)
    kronrod = half * float(np.dot(KRONROD_WEIGHTS, fx))
    gauss = half * float(np.dot(GAUSS_WEIGHTS, fx))
    floor = 50 * _EPS * abs(half) * float(np.dot(KRONROD_WEIGHTS, np.abs(fx)))
    diff = abs(kronrod - gauss)
    return kronrod, max(diff, floor), diff <= floor


def integrate1d(
    f: Integrand,
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    *,
    var: str | None = None,
    points: Sequence[float] = (),
    max_depth: int = 40,
    max_evals: int = 2_000_000,
) -> QuadResult:
    """Globally adaptive Gauss-Kronrod 7-15 quadrature of ``f`` over [a, b].

    The panel with the largest error estimate is bisected until the summed
    estimate drops below ``tol``.  ``points`` are interior breakpoints
    (kinks) at which the initial partition is split.  If a panel reaches
    ``max_depth`` bisections the best estimate is returned with
    ``converged=False`` and a :class:`MaxDepthExceeded` warning.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, b = float(a), float(b)
    if a == b:
        return QuadResult(0.0, 0.0, 0)
    if b < a:
        return -integrate1d(
            f, b, a, tol, var=var, points=points, max_depth=max_depth, max_evals=max_evals
        )
    fn = as_function(f, var)
    cuts = sorted({float(p) for p in points if a < p < b})
    edges = [a, *cuts, b]

    heap = []
    done = []
    evals = 0
    total_err = 0.0
    for seq, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        value, err, at_floor = _panel(fn, lo, hi)
        evals += RULE_SIZE
        total_err += err
        entry = (-err, seq, lo, hi, value, err, 0)
        (done if at_floor else heap).append(entry)
    heapq.heapify(heap)
    seq = len(edges)
    converged = True

    while heap and total_err > tol:
        if evals >= max_evals:
            converged = False
            break
        _, _, lo, hi, value, err, depth = heapq.heappop(heap)
        if depth >= max_depth:
            done.append((0, 0, lo, hi, value, err, depth))
            converged = False
            continue
        mid = 0.5 * (lo + hi)
        halves = [(l, r, *_panel(fn, l, r)) for l, r in ((lo, mid), (mid, hi))]
        evals += 2 * RULE_SIZE
        child_err = halves[0][3] + halves[1][3]
        total_err += child_err - err
        for l, r, v, e, at_floor in halves:
            entry = (-e, seq, l, r, v, e, depth + 1)
            seq += 1
            if at_floor:
                done.append(entry)
            else:
                heapq.heappush(heap, entry)

    panels = sorted(done + heap, key=lambda p: p[2])
    value = math.fsum(p[4] for p in panels)
    err = math.fsum(p[5] for p in panels)
    if not converged:
        warnings.warn(
            f"quadrature on [{a}, {b}] stopped at error {err:.3g} > tol {tol:.3g}",
            MaxDepthExceeded,
            stacklevel=2,
        )
    return QuadResult(value, err, evals, converged)


def find_kinks(
    e: Expr | Sequence[Expr],
    var: str,
    a: float,
    b: float,
    n: int = GRID_N,
    fixed: Mapping | None = None,
) -> list[float]:
    """Interior abscissae where ``e`` may fail to be differentiable.

    Sign changes of every abs/min/max/piecewise switching function are
    located on an ``n``-point grid and refined by bisection.  Other
    variables are taken from ``fixed``; switching functions needing a
    variable not bound there are ignored.
    """
    lo, hi = min(a, b), max(a, b)
    if lo == hi:
        return []
    fixed = dict(fixed or {})
    bound = {var, *fixed}
    exprs = [e] if isinstance(e, Expr) else list(e)
    grid = np.linspace(lo, hi, n)
    roots = set()
    for k in (k for ex in exprs for k in kink_expressions(ex)):
        if not k.free_variables <= bound:
            continue
        env = {name: fixed[name] for name in k.free_variables if name != var}

        def at(s, k=k, env=env):
            return k.eval({**env, var: s})

        try:
            vals = np.broadcast_to(at(grid), grid.shape)
        except DomainError:
            continue
        for i in np.flatnonzero(vals == 0):
            roots.add(float(grid[i]))
        for i in np.flatnonzero(vals[:-1] * vals[1:] < 0):
            roots.add(_bisect(at, grid[i], grid[i + 1], vals[i]))
    return sorted(r for r in roots if lo < r < hi)


def path_kinks(
    exprs: Sequence[Expr], path: Expr, a: float, b: float, x_var: str = "x", n: int = GRID_N
) -> list[float]:
    """Switching points in t of ``e(t, path(t))`` for each e, plus kinks of the path."""
    lo, hi = min(a, b), max(a, b)
    grid = np.linspace(lo, hi, n)
    roots = set(find_kinks(path, "t", lo, hi, n))
    for k in (k for ex in exprs for k in kink_expressions(ex)):
        if not k.free_variables <= {"t", x_var}:
            continue

        def at(s, k=k):
            return k.eval({"t": s, x_var: path.eval({"t": s})})

        try:
            vals = np.broadcast_to(at(grid), grid.shape)
        except DomainError:
            continue
        for i in np.flatnonzero(vals == 0):
            roots.add(float(grid[i]))
        for i in np.flatnonzero(vals[:-1] * vals[1:] < 0):
            roots.add(_bisect(at, grid[i], grid[i + 1], vals[i]))
    return sorted(r for r in roots if lo < r < hi)


def _bisect(fn, lo: float, hi: float, f_lo: float) -> float:
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid = fn(mid)
        if f_mid == 0:
            return float(mid)
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


# ---------------------------------------------------------------------------
# Improper integrals at the left endpoint
# ---------------------------------------------------------------------------


class Divergence(str, Enum):
    CONVERGENT = "convergent"
    DIVERGENT = "divergent"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class DivergenceClass:
    """Verdict on ``lim_{eps -> 0+} int_{a+eps}^b f`` with the raw partial integrals.

    ``evidence[k-1]`` is the integral from ``a + (b-a)*10**-k`` to ``b``.
    """

    tag: Divergence
    value: float | None
    evidence: tuple
    epsilons: tuple = ()
    test: str = ""

    @property
    def convergent(self) -> bool:
        return self.tag is Divergence.CONVERGENT

    @property
    def divergent(self) -> bool:
        return self.tag is Divergence.DIVERGENT

    def to_dict(self) -> dict:
        return {
            "tag": self.tag.value,
            "value": self.value,
            "test": self.test,
            "partial_integrals": list(self.evidence),
            "epsilons": list(self.epsilons),
        }


def classify_sequence(partials: Sequence[float]) -> tuple[Divergence, float | None, str]:
    """Classify a sequence of partial integrals taken one decade apart."""
    I = list(partials)
    d = [I[k + 1] - I[k] for k in range(len(I) - 1)]
    if d and abs(d[0]) > 0 and all(dk >= 0.1 * abs(d[0]) for dk in d):
        return Divergence.DIVERGENT, None, "persistent growth per decade"
    if abs(I[-1] - I[-2]) <= max(1e-8, 1e-6 * abs(I[-1])):
        return Divergence.CONVERGENT, I[-1], "cauchy tail"
    # geometric tail: increments shrink by a stable ratio, so the remainder is summable
    tail = d[-4:]
    if len(tail) == 4 and all(t != 0 and (t > 0) == (tail[0] > 0) for t in tail):
        ratios = [tail[i + 1] / tail[i] for i in range(3)]
        if all(0 < q <= 0.75 for q in ratios) and max(ratios) - min(ratios) <= 0.05:
            q = ratios[-1]
            return Divergence.CONVERGENT, I[-1] + d[-1] * q / (1 - q), "geometric tail"
    return Divergence.UNDETERMINED, None, "no test fired"


def classify_improper_left(
    f: Integrand,
    a: float,
    b: float,
    *,
    var: str | None = None,
    decades: int = 12,
    tol: float = 1e-13,
    max_evals: int = 60_000,
) -> DivergenceClass:
    """Decide convergence of an integral possibly singular at ``a``.

    Partial integrals over ``[a + (b-a)*10**-k, b]`` for k = 1..decades are
    built incrementally, one decade at a time, then classified:
    divergent when every decade adds at least a tenth of the first
    decade's (non-zero) contribution, convergent when the last decade adds
    less than ``max(1e-8, 1e-6*|I|)`` or when the per-decade increments
    decay with a stable ratio <= 0.75 (the limit is then extrapolated);
    undetermined otherwise.  Each decade gets ``max_evals`` integrand
    evaluations, which bounds the cost when rounding noise in ``f`` keeps
    the quadrature from reaching ``tol``.
    """
    if not b > a:
        raise ValueError("need a < b")
    fn = as_function(f, var)
    eps = [(b - a) * 10.0 ** -k for k in range(1, decades + 1)]
    partials = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MaxDepthExceeded)
        current = integrate1d(fn, a + eps[0], b, tol, max_evals=max_evals).value
        partials.append(current)
        for k in range(1, decades):
            current += integrate1d(fn, a + eps[k], a + eps[k - 1], tol, max_evals=max_evals).value
            partials.append(current)
    tag, value, test = classify_sequence(partials)
    return DivergenceClass(tag, value, tuple(partials), tuple(eps), test)


# ---------------------------------------------------------------------------
# Two-dimensional integrals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphRegion:
    """``{a <= t <= b, phi(t) <= x <= psi(t)}`` with C1 boundary graphs in t."""

    a: float
    b: float
    phi: Expr
    psi: Expr

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("GraphRegion needs a < b")
        grid = np.linspace(self.a, self.b, GRID_N)
        lower = np.broadcast_to(self.phi.eval({"t": grid}), grid.shape)
        upper = np.broadcast_to(self.psi.eval({"t": grid}), grid.shape)
        bad = np.flatnonzero(lower > upper + 1e-12 * (1 + np.abs(upper)))
        if bad.size:
            raise ValueError(f"phi > psi at t={grid[bad[0]]!r}")

    def lower(self, t):
        return self.phi.eval({"t": t})

    def upper(self, t):
        return self.psi.eval({"t": t})

    def split(self, c: float) -> tuple["GraphRegion", "GraphRegion"]:
        if not self.a < c < self.b:
            raise ValueError("split point must be interior")
        return GraphRegion(self.a, c, self.phi, self.psi), GraphRegion(c, self.b, self.phi, self.psi)

    def breakpoints(self) -> list[float]:
        pts = set(find_kinks(self.phi, "t", self.a, self.b))
        pts.update(find_kinks(self.psi, "t", self.a, self.b))
        return sorted(pts)


def integrate_nested(
    h: Callable[[float, np.ndarray], np.ndarray],
    a: float,
    b: float,
    lower: Callable[[float], float],
    upper: Callable[[float], float],
    tol: float = DEFAULT_TOL,
    *,
    points: Sequence[float] = (),
    inner_points: Callable[[float, float, float], Sequence[float]] | None = None,
) -> QuadResult:
    """``int_a^b int_{lower(t)}^{upper(t)} h(t, x) dx dt`` with signed inner limits.

    Inner integrals run at ``tol / (4 |b - a|)``; the reported error adds
    the outer estimate and the worst inner estimate times the outer length.
    ``inner_points(t, lo, hi)`` supplies breakpoints for the inner integral.
    """
    span = abs(b - a)
    if span == 0:
        return QuadResult(0.0, 0.0, 0)
    inner_tol = tol / (4 * span)
    inner_errs = [0.0]
    inner_evals = [0]
    inner_ok = [True]

    def outer(ts):
        out = np.empty_like(ts)
        for i, t in enumerate(ts.ravel()):
            t = float(t)
            lo, hi = float(lower(t)), float(upper(t))
            cuts = inner_points(t, lo, hi) if inner_points else ()
            r = integrate1d(lambda xs: h(t, xs), lo, hi, inner_tol, points=cuts)
            out.ravel()[i] = r.value
            inner_errs[0] = max(inner_errs[0], r.err_estimate)
            inner_evals[0] += r.evals
            inner_ok[0] &= r.converged
        return out

    res = integrate1d(outer, a, b, tol / 2, points=points)
    return QuadResult(
        res.value,
        res.err_estimate + span * inner_errs[0],
        res.evals + inner_evals[0],
        res.converged and inner_ok[0],
    )


def _field_function(h: Expr | Callable, t_var="t", x_var="x"):
    if isinstance(h, Expr):
        return lambda t, xs: np.broadcast_to(h.eval({t_var: t, x_var: xs}), xs.shape)
    return h


def x_kinks(exprs: Sequence[Expr], t_var: str = "t", x_var: str = "x"):
    """``inner_points`` callback locating switching points in ``x_var`` at fixed t."""
    exprs = [e for e in exprs if kink_expressions(e)]
    if not exprs:
        return None
    return lambda t, lo, hi: find_kinks(exprs, x_var, lo, hi, fixed={t_var: t})


def integrate_region(
    h: Expr | Callable,
    region: GraphRegion,
    tol: float = DEFAULT_TOL,
    *,
    kinks: Sequence[Expr] = (),
) -> QuadResult:
    """``int_a^b int_{phi(t)}^{psi(t)} h(t, x) dx dt`` over a graph-bounded region.

    Switching points of ``h`` (when it is an Expr) and of ``kinks`` split
    the inner integrals.
    """
    sources = list(kinks) + ([h] if isinstance(h, Expr) else [])
    return integrate_nested(
        _field_function(h),
        region.a,
        region.b,
        region.lower,
        region.upper,
        tol,
        points=region.breakpoints(),
        inner_points=x_kinks(sources),
    )


# ---------------------------------------------------------------------------
# Paths and line integrals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Graph:
    """The curve ``(t, x(t))`` traversed from ``t = a`` to ``t = b``."""

    x: Expr
    a: float
    b: float

    @property
    def start(self):
        return (self.a, self.x.eval({"t": self.a}))

    @property
    def end(self):
        return (self.b, self.x.eval({"t": self.b}))


@dataclass(frozen=True)
class VerticalSegment:
    """The segment ``t = const``, ``x`` from ``c`` to ``d``."""

    t: float
    c: float
    d: float

    @property
    def start(self):
        return (self.t, self.c)

    @property
    def end(self):
        return (self.t, self.d)


@dataclass(frozen=True)
class Reversed:
    segment: "Segment"

    @property
    def start(self):
        return self.segment.end

    @property
    def end(self):
        return self.segment.start


Segment = Union[Graph, VerticalSegment, Reversed]


def _close(p, q, tol=1e-12) -> bool:
    return all(abs(u - v) <= tol * max(1.0, abs(u), abs(v)) for u, v in zip(p, q))


@dataclass(frozen=True)
class Path2:
    segments: tuple

    def __post_init__(self):
        if not self.segments:
            raise ValueError("empty path")
        for prev, nxt in zip(self.segments[:-1], self.segments[1:]):
            if not _close(prev.end, nxt.start):
                raise ValueError(f"segments do not join: {prev.end} vs {nxt.start}")

    @property
    def closed(self) -> bool:
        return _close(self.segments[-1].end, self.segments[0].start)

    def reversed(self) -> "Path2":
        return Path2(tuple(Reversed(s) for s in reversed(self.segments)))

    @classmethod
    def boundary(cls, region: GraphRegion) -> "Path2":
        """Positively oriented boundary of a graph region."""
        a, b = region.a, region.b
        return cls((
            Graph(region.phi, a, b),
            VerticalSegment(b, region.phi.eval({"t": b}), region.psi.eval({"t": b})),
            Reversed(Graph(region.psi, a, b)),
            Reversed(VerticalSegment(a, region.phi.eval({"t": a}), region.psi.eval({"t": a}))),
        ))


def _segment_integral(F, seg, tol) -> QuadResult:
    f1, f2 = F
    if isinstance(seg, Reversed):
        return -_segment_integral(F, seg.segment, tol)
    if isinstance(seg, VerticalSegment):
        return integrate1d(lambda xs: np.broadcast_to(f2.eval({"t": seg.t, "x": xs}), xs.shape),
                           seg.c, seg.d, tol)
    x = seg.x

    def integrand(ts):
        xs = np.broadcast_to(x.eval({"t": ts}), ts.shape)
        dx = np.broadcast_to(x.partial("t", {"t": ts}), ts.shape)
        env = {"t": ts, "x": xs}
        return f1.eval(env) + f2.eval(env) * dx

    return integrate1d(integrand, seg.a, seg.b, tol, points=find_kinks(x, "t", seg.a, seg.b))


def line_integral(F: tuple, path: Path2, tol: float = DEFAULT_TOL, *, closed: bool = False) -> QuadResult:
    """Work of the plane field ``F = (f1, f2)`` in (t, x) along ``path``.

    Graph pieces integrate ``<F, (1, x'(t))>`` with x' by forward AD,
    vertical pieces only the second component.  With ``closed=True`` a
    non-closed path raises :class:`OpenPathError`.
    """
    if closed and not path.closed:
        raise OpenPathError("circulation requested along an open path")
    per = tol / len(path.segments)
    return combine([_segment_integral(F, s, per) for s in path.segments])

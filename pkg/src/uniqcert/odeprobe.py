"""Numerical probes of IVPs: Dormand-Prince integration, funnel probes, witnesses and Gronwall bounds."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .calculus import GRID_N
from .expr import DomainError, Expr
from .uniqbound import SLACK, IvpSpec, open_grid

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
ALPHA = 0.17
BETA = 0.04
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


class StepUnderflow(ArithmeticError):
    """Step size fell below 1e-14 of the span; the problem is stiff or blowing up."""


class BoxExit(RuntimeError):
    """The state left the closed ball B(x0, b); ``trajectory`` holds the samples so far."""

    def __init__(self, message: str, trajectory: "Trajectory"):
        super().__init__(message)
        self.trajectory = trajectory


class HypothesisViolated(ValueError):
    """The differential inequality behind the Gronwall bound fails at ``t``."""

    def __init__(self, t: float, lhs: float, rhs: float):
        super().__init__(f"phi'(t) <= alpha + beta*phi fails at t={t!r}: {lhs!r} > {rhs!r}")
        self.t = t
        self.lhs = lhs
        self.rhs = rhs


def thread_limit() -> int:
    """Worker cap from ``UNIQCERT_THREADS``; defaults to min(4, cpu count)."""
    raw = os.environ.get("UNIQCERT_THREADS")
    if raw is None or raw == "":
        return max(1, min(4, os.cpu_count() or 1))
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"UNIQCERT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"UNIQCERT_THREADS must be a positive integer, got {raw!r}")
    return n


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), n)
    derivatives: np.ndarray
    steps_accepted: int = 0
    steps_rejected: int = 0
    max_error_estimate: float = 0.0
    singular_start: bool = False

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.states))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def dopri5_step(rhs: Callable, t: float, y: np.ndarray, h: float, k1: np.ndarray | None = None):
    """One Dormand-Prince step: ``(y5, error_vector, k7)``; ``k7`` is f at the new point (FSAL)."""
    ks = [rhs(t, y) if k1 is None else k1]
    for i in range(1, 7):
        yi = y + h * sum(a * k for a, k in zip(_A[i], ks))
        ks.append(rhs(t + _C[i] * h, yi))
    K = np.stack(ks)
    y5 = y + h * (_B5 @ K)
    err = h * (_E @ K)
    return y5, err, ks[-1]


def _checked_rhs(ivp: IvpSpec) -> Callable:
    fn = ivp.rhs_function()

    def rhs(t, y):
        out = fn(t, y)
        if not np.all(np.isfinite(out)):
            raise DomainError(f"f is not finite at t={t!r}, x={y.tolist()!r}")
        return out

    return rhs


def _singular_at(rhs, t, y) -> bool:
    try:
        rhs(t, y)
    except (DomainError, ZeroDivisionError, OverflowError, ValueError):
        return True
    return False


def integrate_ivp(
    ivp: IvpSpec,
    t_end: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    t_eval: Sequence[float] | None = None,
    *,
    x_start=None,
    max_steps: int = 200_000,
) -> Trajectory:
    """Forward adaptive integration from ``(t0, x0)`` (or ``x_start``) to ``t_end``.

    Steps are accepted when every component of the embedded error estimate
    is at most ``atol + rtol * max(|y|, |y_new|)``; a PI controller picks the
    next step.  Samples are stored at every accepted step, or only at the
    ``t_eval`` points (landed on exactly) when given.
    """
    t0 = ivp.t0
    if not t_end > t0:
        raise ValueError("integration runs forward: need t_end > t0")
    if t_end > t0 + ivp.a * (1 + 1e-12):
        raise ValueError(f"t_end={t_end} lies outside the time box [t0, t0 + a]")
    rhs = _checked_rhs(ivp)
    span = t_end - t0
    centre = ivp.x0_vector
    y = centre.copy() if x_start is None else np.atleast_1d(np.asarray(x_start, dtype=float)).copy()

    targets = None
    if t_eval is not None:
        targets = [float(s) for s in t_eval]
        if any(b <= a for a, b in zip(targets, targets[1:])) or targets[0] < t0 or targets[-1] > t_end:
            raise ValueError("t_eval must increase strictly within [t0, t_end]")
    t = t0
    singular = _singular_at(rhs, t, y)
    if singular:
        # right side undefined at t0: carry x0 across a tiny gap
        t = t0 + 1e-10 * span
    k1 = rhs(t, y)
    times, states = [t0], [y.copy()]
    derivs = [np.full_like(y, np.nan) if singular else k1.copy()]
    if singular and targets is None:
        times.append(t)
        states.append(y.copy())
        derivs.append(k1.copy())

    def record(tt, yy, kk):
        times.append(tt)
        states.append(yy.copy())
        derivs.append(kk.copy())

    def snapshot():
        return Trajectory(
            np.array(times), np.array(states), np.array(derivs), accepted, rejected, max_err, singular
        )

    pending = [s for s in (targets or []) if s > t0]
    h = 1e-4 * span
    prev_err = 1.0
    accepted = rejected = 0
    max_err = 0.0
    while t < t_end:
        stop = pending[0] if pending else t_end
        h_try = min(h, stop - t)
        last = h_try == stop - t
        if h < 1e-14 * span:
            raise StepUnderflow(f"step {h:.3g} below 1e-14 * span at t={t!r}")
        y_new, err_vec, k_new = dopri5_step(rhs, t, y, h_try, k1)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if not math.isfinite(err):
            h *= MIN_FACTOR
            rejected += 1
            continue
        if err <= 1.0:
            accepted += 1
            max_err = max(max_err, float(np.max(np.abs(err_vec))))
            t = stop if last else t + h_try
            y, k1 = y_new, k_new
            if np.max(np.abs(y - centre)) > ivp.b * (1 + 1e-12):
                record(t, y, k1)
                raise BoxExit(f"state left the ball of radius {ivp.b} at t={t!r}", snapshot())
            if targets is None or (pending and t == pending[0]):
                record(t, y, k1)
                if pending and t == pending[0]:
                    pending.pop(0)
            factor = SAFETY * max(err, 1e-10) ** -ALPHA * prev_err**BETA
            h_next = h_try * min(MAX_FACTOR, max(MIN_FACTOR, factor))
            # a step shortened to hit a sample point should not shrink the next one
            h = max(h_next, h) if last else h_next
            prev_err = max(err, 1e-4)
        else:
            rejected += 1
            h = h_try * max(MIN_FACTOR, SAFETY * err**-ALPHA)
        if accepted + rejected > max_steps:
            raise StepUnderflow(f"step budget of {max_steps} exhausted at t={t!r}")
    if times[-1] != t_end and targets is None:
        record(t, y, k1)
    return snapshot()


# ---------------------------------------------------------------------------
# funnel probe
# ---------------------------------------------------------------------------


DEFAULT_DELTAS = tuple(10.0**-k for k in range(2, 11))


@dataclass(frozen=True)
class FunnelReport:
    deltas: tuple
    spreads: tuple
    fitted_order: float
    t_end: float
    baseline_final: tuple = ()
    runs: tuple = field(default=(), repr=False)


def fitted_order(deltas: Sequence[float], spreads: Sequence[float], tail: int = 4) -> float:
    """Least-squares slope of log(spread) against log(delta) over the smallest ``tail`` deltas."""
    d = np.asarray(deltas[-tail:], dtype=float)
    s = np.asarray(spreads[-tail:], dtype=float)
    if np.any(s <= 0):
        return float("nan")
    slope, _ = np.polyfit(np.log(d), np.log(s), 1)
    return float(slope)


def _paired_ivp(ivp: IvpSpec) -> Callable:
    rhs = _checked_rhs(ivp)
    n = ivp.n

    def joint(t, y):
        return np.concatenate([rhs(t, y[:n]), rhs(t, y[n:])])

    return joint


def _probe_one(ivp: IvpSpec, delta: float, t_end: float, rtol: float, atol: float):
    """Integrate the unperturbed and the +delta run as one system so both share every step."""
    n = ivp.n
    rhs = _paired_ivp(ivp)
    centre = ivp.x0_vector
    paired = _PairedIvp(ivp, rhs)
    traj = integrate_ivp(
        paired, t_end, rtol=rtol, atol=min(atol, 1e-6 * delta), x_start=np.concatenate([centre, centre + delta])
    )
    final = traj.final
    spread = float(np.max(np.abs(final[n:] - final[:n])))
    return spread, final[:n], traj


class _PairedIvp:
    """Duck-typed stand-in for IvpSpec driving the joint (baseline, perturbed) system."""

    def __init__(self, ivp: IvpSpec, rhs: Callable):
        self.t0 = ivp.t0
        self.a = ivp.a
        self.b = ivp.b
        self.x0_vector = np.concatenate([ivp.x0_vector, ivp.x0_vector])
        self._rhs = rhs

    def rhs_function(self):
        return self._rhs


def funnel_probe(
    ivp: IvpSpec,
    t_end: float,
    deltas: Sequence[float] = DEFAULT_DELTAS,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> FunnelReport:
    """Distance at ``t_end`` between the run from x0 and the run from x0 + delta.

    Every state component is shifted by +delta, so the initial max-norm
    distance is delta.  Probes for different deltas run concurrently; the
    report is assembled in delta order.
    """
    deltas = tuple(float(d) for d in deltas)
    if any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be positive and strictly decreasing")
    if max(deltas) > ivp.b:
        raise ValueError("x0 + delta must stay inside the box")
    workers = min(thread_limit(), len(deltas))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda d: _probe_one(ivp, d, t_end, rtol, atol), deltas))
    spreads = tuple(r[0] for r in results)
    return FunnelReport(
        deltas,
        spreads,
        fitted_order(deltas, spreads),
        t_end,
        tuple(results[-1][1].tolist()),
        tuple(r[2] for r in results),
    )


def lipschitz_constant(ivp: IvpSpec, grid_n: int = 65) -> float:
    """Sampled max-norm Lipschitz constant: largest absolute row sum of the Jacobian on the box."""
    per_axis = grid_n if ivp.dim is None else max(3, int(grid_n ** (2.0 / ivp.n)))
    axes = [c + ivp.x_axis(ivp.b, per_axis) for c in ivp.x0_vector]
    mesh = np.meshgrid(*axes, indexing="ij")
    best = 0.0
    for t in ivp.t_grid(grid_n):
        env = {"t": t, **dict(zip(ivp.names, mesh))}
        rows = [
            sum(np.abs(np.broadcast_to(comp.partial(name, env), mesh[0].shape)) for name in ivp.names)
            for comp in ivp.components
        ]
        best = max(best, float(np.max(rows)))
    return best


# ---------------------------------------------------------------------------
# refutation witnesses
# ---------------------------------------------------------------------------


def verify_witness_dynamics(g: Expr, witness: Expr, a: float, grid_n: int = GRID_N) -> float:
    """Largest ``|w'(t) - g(t, w(t))|`` over a grid of (0, a], with w' by AD.

    Also requires w(0) = 0 and w(t)/t decreasing towards 0 along
    t = a*10**-k; raises ValueError otherwise.
    """
    w0 = float(witness.eval({"t": 0.0}))
    if abs(w0) > SLACK:
        raise ValueError(f"witness(0) = {w0!r}, expected 0")
    probe = a * 10.0 ** -np.arange(1, 13)
    ratio = np.abs(np.broadcast_to(witness.eval({"t": probe}), probe.shape)) / probe
    if not (ratio[-1] <= 1e-10 or np.all(np.diff(ratio) < 0)):
        raise ValueError("witness(t)/t does not tend to 0 as t -> 0+")
    ts = open_grid(a, grid_n)
    w = np.broadcast_to(witness.eval({"t": ts}), ts.shape)
    dw = np.broadcast_to(witness.partial("t", {"t": ts}), ts.shape)
    rhs = np.broadcast_to(g.eval({"t": ts, "x": w}), ts.shape)
    return float(np.max(np.abs(dw - rhs)))


# ---------------------------------------------------------------------------
# Gronwall
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _as_callable(e: Expr | Callable) -> Callable:
    if isinstance(e, Expr):
        return lambda ts: np.broadcast_to(e.eval({"t": ts}), np.shape(ts)).astype(float)
    return e


def _gauss(fn, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fixed 20-point Gauss-Legendre integral of ``fn`` over each [lo_i, hi_i]."""
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid[..., None] + half[..., None] * _GL_NODES
    return half * (fn(nodes) @ _GL_WEIGHTS)


def gronwall_bound(
    alpha: Expr | Callable,
    beta: Expr | Callable,
    phi0: float,
    t0: float,
    a: float,
    grid_n: int = GRID_N,
    grid: Sequence[float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``phi0 exp(B(t)) + int_t0^t alpha(s) exp(B(t) - B(s)) ds`` with ``B(t) = int_t0^t beta``.

    B is tabulated once on the grid (20-point Gauss-Legendre per cell) and
    reused for every exponent; inside a cell B(s) is the table value plus
    a short Gauss-Legendre integral from the cell's left edge.
    """
    ts = np.linspace(t0, t0 + a, grid_n) if grid is None else np.asarray(grid, dtype=float)
    if ts[0] != t0 or np.any(np.diff(ts) <= 0):
        raise ValueError("grid must start at t0 and increase strictly")
    alpha_f, beta_f = _as_callable(alpha), _as_callable(beta)
    left, right = ts[:-1], ts[1:]
    B = np.concatenate([[0.0], np.cumsum(_gauss(beta_f, left, right))])

    def weighted(nodes):
        # nodes: (cells, 20) points in each cell; B at each node from the cell start
        cell_start = left[:, None]
        within = _gauss(beta_f, np.broadcast_to(cell_start, nodes.shape), nodes)
        return alpha_f(nodes) * np.exp(-(B[:-1, None] + within))

    C = np.concatenate([[0.0], np.cumsum(_gauss(weighted, left, right))])
    return ts, np.exp(B) * (phi0 + C)


@dataclass(frozen=True)
class GronwallReport:
    grid: np.ndarray
    phi: np.ndarray
    bound: np.ndarray
    min_margin: float
    passed: bool
    tol: float

    def to_dict(self) -> dict:
        return {"min_margin": self.min_margin, "passed": self.passed, "tol": self.tol, "points": len(self.grid)}


def gronwall_check(
    alpha: Expr,
    beta: Expr,
    phi: Expr | Trajectory,
    t0: float,
    a: float,
    tol: float = 1e-10,
    grid_n: int = GRID_N,
) -> GronwallReport:
    """Check ``phi'(t) <= alpha + beta*phi`` on the grid, then ``phi <= bound + tol``.

    ``phi`` is an expression in t (derivative by AD) or a Trajectory whose
    samples and stored derivatives are used directly.
    """
    if isinstance(phi, Trajectory):
        ts = phi.times
        if ts[0] != t0:
            raise ValueError("trajectory must start at t0")
        values = phi.states[:, 0]
        slopes = phi.derivatives[:, 0]
    else:
        ts = np.linspace(t0, t0 + a, grid_n)
        values = np.broadcast_to(phi.eval({"t": ts}), ts.shape).astype(float)
        slopes = np.broadcast_to(phi.partial("t", {"t": ts}), ts.shape).astype(float)
    al = _as_callable(alpha)(ts)
    be = _as_callable(beta)(ts)
    rhs = al + be * values
    violated = np.flatnonzero(slopes > rhs + SLACK * (1 + np.abs(rhs)))
    if violated.size:
        i = int(violated[0])
        raise HypothesisViolated(float(ts[i]), float(slopes[i]), float(rhs[i]))
    grid, bound = gronwall_bound(alpha, beta, float(values[0]), t0, a, grid=ts)
    margin = float(np.min(bound - values))
    return GronwallReport(grid, values, bound, margin, margin >= -tol, tol)

"""Adaptive explicit Runge-Kutta integration with dense output and events.

Every ODE in the package goes through :func:`integrate`.  The stepper is the
Dormand-Prince 8(5,3) pair with its 7th-order continuous extension.  When the
right-hand side is a numba-compiled function (and acceleration is enabled)
the stage evaluations run inside compiled kernels; plain Python callables use
the same kernels uncompiled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _dop853 as dop
from ._accel import is_compiled
from .errors import (
    NonFiniteRhs,
    OutOfDomain,
    StepLimitReached,
    StepSizeTooSmall,
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
EVENT_TIME_TOL = 1e-12


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_step: float = 0.1
    blow_up_norm: float = 1e8
    max_steps: int = 10_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "blow_up_norm", "max_steps"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    def with_tol(self, rel_tol: float, abs_tol: float | None = None) -> "IntegratorConfig":
        return IntegratorConfig(
            rel_tol=rel_tol,
            abs_tol=rel_tol if abs_tol is None else abs_tol,
            max_step=self.max_step,
            blow_up_norm=self.blow_up_norm,
            max_steps=self.max_steps,
        )


DEFAULT_CONFIG = IntegratorConfig()


@dataclass(frozen=True)
class OdeProblem:
    """``y' = rhs(t, y)`` with ``y(initial_time) = initial_state``.

    If ``args`` is given the right-hand side is called as ``rhs(t, y, args)``;
    that is the calling convention of the compiled kernels.
    """

    rhs: Callable
    initial_time: float
    initial_state: Sequence[float]
    args: tuple | None = None

    @property
    def dimension(self) -> int:
        return len(self.initial_state)


class Direction(enum.Enum):
    RISING = 1
    FALLING = -1
    ANY = 0


@dataclass(frozen=True)
class Event:
    """Terminal event: integration stops where ``guard(t, y)`` crosses zero."""

    id: str
    guard: Callable[[float, np.ndarray], float]
    direction: Direction = Direction.ANY


class TerminationKind(enum.Enum):
    REACHED_END = "ReachedEnd"
    EVENT_FIRED = "EventFired"
    BLOW_UP = "BlowUp"
    STEP_LIMIT = "StepLimitReached"


@dataclass(frozen=True)
class Termination:
    kind: TerminationKind
    time: float
    event_id: str | None = None
    state: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "time", float(self.time))


class DenseSolution:
    """Piecewise interpolated trajectory.

    Evaluation returns shape ``(n,)`` for scalar ``t`` and ``(n, k)`` for an
    array of ``k`` times.  The object is read-only after construction.
    """

    def __init__(self, t_old, hs, y_old, F, t_span, termination, ts, ys):
        self.t_old = t_old
        self.hs = hs
        self.y_old = y_old
        self.F = F
        self.t_span = t_span
        self.termination = termination
        self.ts = ts
        self.ys = ys
        for arr in (t_old, hs, y_old, F, ts, ys):
            arr.setflags(write=False)
        lo, hi = sorted(t_span)
        self._lo = lo
        self._hi = hi
        self._slack = 8 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi))
        self._increasing = t_span[1] >= t_span[0]

    @property
    def n_steps(self) -> int:
        return len(self.hs)

    @property
    def dimension(self) -> int:
        return self.y_old.shape[1]

    @property
    def t_end(self) -> float:
        return self.t_span[1]

    def contains(self, t) -> bool:
        t = np.asarray(t, dtype=float)
        return bool(np.all((t >= self._lo - self._slack) & (t <= self._hi + self._slack)))

    def _segment(self, t):
        if self._increasing:
            k = np.searchsorted(self.t_old, t, side="right") - 1
        else:
            k = np.searchsorted(-self.t_old, -t, side="right") - 1
        return np.clip(k, 0, len(self.hs) - 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if not self.contains(t):
            raise OutOfDomain(
                f"evaluation time outside solved span [{self._lo}, {self._hi}]"
            )
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        k = self._segment(tt)
        x = ((tt - self.t_old[k]) / self.hs[k])[:, None]
        F = self.F[k]
        out = np.zeros((len(tt), self.dimension))
        for i in range(dop.INTERP_POWER):
            out += F[:, dop.INTERP_POWER - 1 - i, :]
            if i % 2 == 0:
                out *= x
            else:
                out *= 1.0 - x
        out += self.y_old[k]
        if scalar:
            return out[0]
        return out.T

    def arrays(self):
        """Raw segment tables ``(t_old, hs, F, y_old)`` for compiled lookups."""
        return self.t_old, self.hs, self.F, self.y_old


def _python_rhs(problem: OdeProblem):
    if problem.args is None:
        user = problem.rhs

        def fun(t, y, _args):
            return np.asarray(user(t, y), dtype=float)

        return fun, ()

    user = problem.rhs

    def fun(t, y, args):
        return np.asarray(user(t, y, args), dtype=float)

    return fun, problem.args


def _kernels(problem: OdeProblem):
    """Pick compiled or uncompiled kernels according to the rhs."""
    if problem.args is not None and is_compiled(problem.rhs) and is_compiled(dop.dop853_step):
        return problem.rhs, problem.args, dop.dop853_step, dop.dop853_dense
    fun, args = _python_rhs(problem)
    step = getattr(dop.dop853_step, "py_func", dop.dop853_step)
    dense = getattr(dop.dop853_dense, "py_func", dop.dop853_dense)
    return fun, args, step, dense


def _rms(v):
    return float(np.sqrt(np.mean(v * v)))


def _initial_step(fun, args, t0, y0, f0, direction, rtol, atol, max_step):
    scale = atol + rtol * np.abs(y0)
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = y0 + direction * h0 * f0
    f1 = np.asarray(fun(t0 + direction * h0, y1, args), dtype=float)
    if not np.all(np.isfinite(f1)):
        return min(h0 * 1e-3, max_step)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100 * h0, h1, max_step)


def _locate(seg_t, h, F, y_old, guard, g_left, t_left, t_right):
    """Bisection for the guard root inside one accepted step."""
    a, b = t_left, t_right
    ga = g_left
    while abs(b - a) > EVENT_TIME_TOL:
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        gm = guard(mid, dop.dense_point(F, y_old, (mid - seg_t) / h))
        if gm == 0.0:
            return mid
        if (gm > 0) == (ga > 0):
            a, ga = mid, gm
        else:
            b = mid
    return b


def _crossed(g_prev, g_new, direction: Direction) -> bool:
    if g_prev == 0.0:
        return False
    if direction is Direction.RISING:
        return g_prev < 0.0 <= g_new
    if direction is Direction.FALLING:
        return g_prev > 0.0 >= g_new
    return (g_prev < 0.0 <= g_new) or (g_prev > 0.0 >= g_new)


def integrate(
    problem: OdeProblem,
    span: tuple[float, float],
    config: IntegratorConfig = DEFAULT_CONFIG,
    events: Sequence[Event] = (),
) -> DenseSolution:
    """Integrate ``problem`` over ``span`` (either direction).

    Stops at the end of the span, the first terminal event, or when the state
    norm exceeds ``config.blow_up_norm``; the cause is recorded in
    ``solution.termination``.

    Raises
    ------
    NonFiniteRhs
        The right-hand side is non-finite at the start, or the step size had
        to collapse because trial stages kept returning NaN/inf.
    StepLimitReached
        More than ``config.max_steps`` steps were needed; the partial
        solution is attached to the exception.
    """
    t0, t1 = float(span[0]), float(span[1])
    if t0 != float(problem.initial_time):
        raise ValueError("span must start at problem.initial_time")
    if t1 == t0:
        raise ValueError("empty integration span")
    direction = 1.0 if t1 > t0 else -1.0
    rtol, atol = config.rel_tol, config.abs_tol

    fun, args, step, dense = _kernels(problem)
    y = np.array(problem.initial_state, dtype=float)
    f = np.asarray(fun(t0, y, args), dtype=float)
    if f.shape != y.shape:
        raise ValueError(f"rhs returned shape {f.shape}, expected {y.shape}")
    if not np.all(np.isfinite(f)):
        raise NonFiniteRhs(f"rhs is not finite at t={t0}")

    guards = [(ev, float(ev.guard(t0, y))) for ev in events]

    h_abs = _initial_step(fun, args, t0, y, f, direction, rtol, atol, config.max_step)
    t = t0
    seg_t, seg_h, seg_y, seg_F = [], [], [], []
    ts, ys = [t0], [y.copy()]
    termination = None

    while termination is None:
        if len(seg_h) >= config.max_steps:
            termination = Termination(TerminationKind.STEP_LIMIT, t)
            sol = _build(seg_t, seg_h, seg_y, seg_F, (t0, t), termination, ts, ys, y)
            raise StepLimitReached(f"step limit {config.max_steps} reached at t={t}", sol)

        min_step = 10 * abs(np.nextafter(t, direction * np.inf) - t)
        h_abs = min(max(h_abs, min_step), config.max_step)
        rejected = False
        while True:
            remaining = abs(t1 - t)
            last = h_abs >= remaining
            h = direction * (remaining if last else h_abs)
            y_new, f_new, err, K = step(fun, t, y, f, h, args, rtol, atol)
            if err <= 1.0:
                break
            if not np.isfinite(err):
                factor = MIN_FACTOR
            else:
                factor = max(MIN_FACTOR, SAFETY * err ** (-1.0 / 8.0))
            h_abs = abs(h) * factor
            rejected = True
            if h_abs < min_step:
                if not np.isfinite(err):
                    raise NonFiniteRhs(f"right-hand side not finite near t={t}")
                raise StepSizeTooSmall(f"step size underflow at t={t}")

        t_new = t1 if last else t + h
        F = dense(fun, t, y, y_new, f_new, h, K, args)
        seg_t.append(t)
        seg_h.append(h)
        seg_y.append(y)
        seg_F.append(F)

        hit = None
        for i, (ev, g_prev) in enumerate(guards):
            g_new = float(ev.guard(t_new, y_new))
            if _crossed(g_prev, g_new, ev.direction):
                t_ev = _locate(t, h, F, y, ev.guard, g_prev, t, t_new)
                if hit is None or direction * (t_ev - hit[0]) < 0:
                    hit = (t_ev, ev.id)
            guards[i] = (ev, g_new)

        if hit is not None:
            t_ev, ev_id = hit
            y_ev = dop.dense_point(F, y, (t_ev - t) / h)
            termination = Termination(TerminationKind.EVENT_FIRED, t_ev, ev_id, y_ev)
            ts.append(t_ev)
            ys.append(y_ev)
            return _build(seg_t, seg_h, seg_y, seg_F, (t0, t_ev), termination, ts, ys, y_ev)

        t, y, f = t_new, y_new, f_new
        ts.append(t)
        ys.append(y)

        if np.max(np.abs(y)) > config.blow_up_norm:
            termination = Termination(TerminationKind.BLOW_UP, t, state=y)
        elif last:
            termination = Termination(TerminationKind.REACHED_END, t, state=y)

        if err == 0.0:
            factor = MAX_FACTOR
        else:
            factor = min(MAX_FACTOR, SAFETY * err ** (-1.0 / 8.0))
        if rejected:
            factor = min(1.0, factor)
        h_abs = abs(h) * factor

    return _build(seg_t, seg_h, seg_y, seg_F, (t0, t), termination, ts, ys, y)


def _build(seg_t, seg_h, seg_y, seg_F, t_span, termination, ts, ys, y_last):
    n = len(y_last)
    if not seg_h:
        raise StepLimitReached("no step was accepted")
    return DenseSolution(
        np.array(seg_t, dtype=float),
        np.array(seg_h, dtype=float),
        np.array(seg_y, dtype=float).reshape(-1, n),
        np.array(seg_F, dtype=float).reshape(-1, dop.INTERP_POWER, n),
        (float(t_span[0]), float(t_span[1])),
        termination,
        np.array(ts, dtype=float),
        np.array(ys, dtype=float).reshape(-1, n),
    )

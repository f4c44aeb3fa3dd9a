"""Phase plane of the autonomous equation.

With ``q = x'/x`` and ``p = dq/dt`` the third-order equation becomes the
planar system ``q' = p, p' = (1 + 2q^2 - 3q^4 + p - 7q^2 p - 2p^2) / q``.
Multiplying the field by ``q`` gives the polynomial system used for the
portrait and for deciding orbit fates::

    q' = q p,    p' = 1 + 2q^2 - 3q^4 + p - 7q^2 p - 2p^2
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import brentq

from ._accel import njit
from .errors import IntegrationError, OutOfDomain
from .family import XSolution, Tau, x_rhs_kernel
from .ivp import (
    DEFAULT_CONFIG,
    Direction,
    Event,
    IntegratorConfig,
    OdeProblem,
    TerminationKind,
    integrate,
)

TRAP_RADIUS = 0.05
Q_ESCAPE = 0.05
P_SEPARATRIX_MARGIN = -0.55
T_BUDGET = 200.0
Q_HANDOFF = 3.0
T_MIN = 1e-3


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float


class EquilibriumKind(enum.Enum):
    SADDLE = "Saddle"
    STABLE_NODE = "StableNode"
    UNSTABLE_NODE = "UnstableNode"


@dataclass(frozen=True)
class Equilibrium:
    point: PhasePoint
    jacobian: tuple[tuple[float, float], tuple[float, float]]
    eigenvalues: tuple[float, float]
    kind: EquilibriumKind


class Verdict(enum.Enum):
    CONVERGES = "ConvergesToNode"
    ESCAPES = "EscapesToSaddleSide"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class OrbitClassification:
    verdict: Verdict
    final_point: PhasePoint
    time_used: float
    trigger: str


# ---------------------------------------------------------------- vector field


def sms_field(q, p):
    """Polynomial field; exact for ``Fraction`` or integer arguments."""
    return q * p, 1 + 2 * q**2 - 3 * q**4 + p - 7 * q**2 * p - 2 * p**2


@njit
def sms_rhs_kernel(t, z, args):
    q = z[0]
    p = z[1]
    out = np.empty(2)
    out[0] = q * p
    out[1] = 1.0 + 2.0 * q * q - 3.0 * q**4 + p - 7.0 * q * q * p - 2.0 * p * p
    return out


def rhs_sms(point: PhasePoint) -> tuple[float, float]:
    return sms_field(point.q, point.p)


def sms_jacobian(q, p):
    return (
        (p, q),
        (4 * q - 12 * q**3 - 14 * q * p, 1 - 7 * q**2 - 4 * p),
    )


def _exact_sqrt(value: Fraction):
    if value < 0:
        return None
    num, den = math.isqrt(value.numerator), math.isqrt(value.denominator)
    if num * num == value.numerator and den * den == value.denominator:
        return Fraction(num, den)
    return None


def _eigenvalues(jac):
    (a, b), (c, d) = jac
    half_trace = Fraction(a + d) / 2
    det = Fraction(a * d - b * c)
    disc = half_trace**2 - det
    root = _exact_sqrt(disc)
    if root is not None:
        lo, hi = half_trace - root, half_trace + root
        return float(lo), float(hi)
    if disc < 0:
        raise ValueError("complex eigenvalues are not expected for this field")
    r = math.sqrt(disc)
    return float(half_trace) - r, float(half_trace) + r


def _classify(eigs) -> EquilibriumKind:
    lo, hi = eigs
    if lo < 0 < hi:
        return EquilibriumKind.SADDLE
    if hi < 0:
        return EquilibriumKind.STABLE_NODE
    return EquilibriumKind.UNSTABLE_NODE


EQUILIBRIUM_POINTS = (
    (Fraction(0), Fraction(1)),
    (Fraction(0), Fraction(-1, 2)),
    (Fraction(1), Fraction(0)),
    (Fraction(-1), Fraction(0)),
)


def equilibria() -> list[Equilibrium]:
    """The four rest points, verified and linearised in rational arithmetic."""
    out = []
    for q, p in EQUILIBRIUM_POINTS:
        if sms_field(q, p) != (0, 0):
            raise AssertionError(f"({q}, {p}) is not a rest point")
        jac = sms_jacobian(q, p)
        eigs = _eigenvalues(jac)
        out.append(Equilibrium(
            PhasePoint(float(q), float(p)),
            tuple(tuple(float(v) for v in row) for row in jac),
            eigs,
            _classify(eigs),
        ))
    return out


def trap_certificate(radius: float = TRAP_RADIUS, n_angles: int = 720, n_levels: int = 60) -> bool:
    """Check that the trap ball around the node (1, 0) lies in its basin.

    Builds the quadratic Lyapunov function of the linearisation, takes the
    smallest sublevel set containing the ball and verifies that the full
    nonlinear field decreases it on a dense set of level curves.
    """
    A = np.array(sms_jacobian(1.0, 0.0), dtype=float)
    P = solve_continuous_lyapunov(A.T, -np.eye(2))
    w, V = np.linalg.eigh(P)
    level = w.max() * radius**2
    p_inv_sqrt = V @ np.diag(w**-0.5) @ V.T
    angles = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    unit = np.vstack([np.cos(angles), np.sin(angles)])
    for k in np.linspace(1.0 / n_levels, 1.0, n_levels):
        z = math.sqrt(level) * k * (p_inv_sqrt @ unit)
        dq, dp = sms_field(1.0 + z[0], z[1])
        vdot = 2.0 * np.einsum("ij,ik,kj->j", z, P, np.vstack([dq, dp]))
        if np.any(vdot >= 0):
            return False
    return True


# ---------------------------------------------------------------- orbits


def phase_coordinates(x, x1, x2):
    q = x1 / x
    return q, x2 / x - q * q


def orbit_from_x(sol: XSolution, t_grid) -> list[PhasePoint]:
    """Map an x-trajectory to phase points ``(x'/x, x''/x - (x'/x)^2)``."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t <= 0) or np.any(t > sol.t_max):
        raise OutOfDomain(f"orbit times must lie in (0, {sol.t_max}]")
    q, p = phase_coordinates(*sol.state(t))
    return [PhasePoint(float(a), float(b)) for a, b in zip(q, p)]


def _q_of_t(sol: XSolution, t):
    x, x1, _ = sol.state(t)
    return x1 / x


def time_at_q(sol: XSolution, q_target: float) -> float:
    """Time on the initial branch where ``x'/x`` first drops to ``q_target``.

    Near ``t = 0`` one has ``q ~ 1/t``, which seeds the bracket.
    """
    if q_target <= 1.0:
        raise ValueError("only the branch q > 1 is monotone for converging orbits")
    lo = 0.1 / q_target
    hi = 2.0 / q_target
    while _q_of_t(sol, hi) > q_target:
        lo, hi = hi, 2.0 * hi
        if hi > sol.t_max:
            raise OutOfDomain(f"q={q_target} not reached within t_max")
    return brentq(lambda t: _q_of_t(sol, t) - q_target, lo, hi, xtol=1e-15, rtol=1e-15)


def p_of_q(sol: XSolution, q_target: float) -> float:
    """Orbit height ``p_tau(q)`` on the branch coming from ``q = +inf``."""
    t = time_at_q(sol, q_target)
    _, p = phase_coordinates(*sol.state(t))
    return float(p)


def slope_ratio(sol: XSolution, q_target: float) -> float:
    """``(p + q^2) / q`` at ``q``; tends to tau as ``q`` grows."""
    return (p_of_q(sol, q_target) + q_target**2) / q_target


# ---------------------------------------------------------------- shooting


def classify_orbit(
    tau,
    config: IntegratorConfig = DEFAULT_CONFIG,
    *,
    t_budget: float = T_BUDGET,
    trap_radius: float = TRAP_RADIUS,
    q_escape: float = Q_ESCAPE,
    p_margin: float = P_SEPARATRIX_MARGIN,
    q_handoff: float = Q_HANDOFF,
) -> OrbitClassification:
    """Decide whether the orbit of ``tau`` reaches the node (1, 0).

    The x-equation is integrated from ``t = 0`` until ``q`` falls to
    ``q_handoff``; from there the polynomial field takes over, which stays
    regular where x' vanishes.  Any real ``tau`` is accepted.
    """
    tau_value = float(tau.value if isinstance(tau, Tau) else tau)

    handoff = Event("handoff", lambda t, z: z[1] - q_handoff * z[0], Direction.FALLING)
    try:
        xs = integrate(OdeProblem(x_rhs_kernel, 0.0, (0.0, 1.0, tau_value), args=()),
                       (0.0, 50.0), config, [handoff])
    except IntegrationError as exc:
        return OrbitClassification(Verdict.UNDETERMINED, PhasePoint(math.nan, math.nan), 0.0,
                                   f"x-phase failed: {type(exc).__name__}")
    if xs.termination.kind is not TerminationKind.EVENT_FIRED:
        z = xs.ys[-1]
        return OrbitClassification(Verdict.UNDETERMINED, PhasePoint(*phase_coordinates(*z)),
                                   0.0, f"x-phase ended: {xs.termination.kind.value}")
    q0, p0 = phase_coordinates(*xs.termination.state)

    trap = Event("trap", lambda t, z: (z[0] - 1.0) ** 2 + z[1] ** 2 - trap_radius**2,
                 Direction.FALLING)
    escape = Event("escape", lambda t, z: max(z[0] - q_escape, z[1] - p_margin),
                   Direction.FALLING)
    try:
        orbit = integrate(OdeProblem(sms_rhs_kernel, 0.0, (q0, p0), args=()),
                          (0.0, t_budget), config, [trap, escape])
    except IntegrationError as exc:
        return OrbitClassification(Verdict.UNDETERMINED, PhasePoint(q0, p0), 0.0,
                                   f"phase integration failed: {type(exc).__name__}")
    term = orbit.termination
    final = PhasePoint(*(float(v) for v in orbit.ys[-1]))
    if term.kind is TerminationKind.EVENT_FIRED:
        verdict = Verdict.CONVERGES if term.event_id == "trap" else Verdict.ESCAPES
        return OrbitClassification(verdict, final, term.time, term.event_id)
    return OrbitClassification(Verdict.UNDETERMINED, final, term.time, term.kind.value)


def portrait_grid(q_range=(-2.0, 2.0), p_range=(-2.0, 2.0), n: int = 21):
    """Rows ``(q, p, q', p')`` of the polynomial field on a regular grid."""
    qs = np.linspace(*q_range, n)
    ps = np.linspace(*p_range, n)
    Q, Pm = np.meshgrid(qs, ps, indexing="ij")
    dq, dp = sms_field(Q, Pm)
    return np.column_stack([Q.ravel(), Pm.ravel(), dq.ravel(), dp.ravel()])

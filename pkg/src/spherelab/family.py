"""The profile ODE in its three equivalent forms.

* radial form, unknown ``u(r)`` on ``r > 0`` with data at ``r = 1``;
* autonomous form, ``x(t) = u(exp t)``::

      x' x''' = x x'' - 2 x''^2 + x'^2 + x^2,   x(0)=0, x'(0)=1, x''(0)=tau

* pole-regular form, ``g(s) = exp(-t) x(t)`` with ``s = exp(-2t)``::

      g''' = g'' (3 g' + 4 s g'') / (g - 2 g' s),
      g(1)=0, g'(1)=-1/2, g''(1)=tau/4

The initial value ``g''(1) = tau/4`` and the factor 4 in front of ``s g''^2``
are what the change of variables actually produces; with them the identities
``x' = e^t (g - 2 g' s)`` and ``x'' - x = 4 e^{-3t} g''`` hold for the same
member of the family.

Negative times are served through the symmetry
``x_tau(t) = -x_{-tau}(-t)``, so every :class:`XSolution` carries the
companion trajectory for ``-tau``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .errors import (
    BlowUp,
    DenominatorVanished,
    DerivativeSingular,
    NonFiniteRhs,
    OutOfDomain,
    ParameterOutOfWindow,
)
from .ivp import (
    DEFAULT_CONFIG,
    DenseSolution,
    IntegratorConfig,
    OdeProblem,
    TerminationKind,
    integrate,
)

T_PUBLISHED = 0.57735
WINDOW_MARGIN = 1e-3
X1_FLOOR = 1e-14
DENOM_FLOOR = 1e-13

DEFAULT_T_MAX = 12.0
S_MIN = 1e-6
RICHARDSON_S0 = 2.0**-3
RICHARDSON_LEVELS = 8

_known_threshold = T_PUBLISHED


def known_threshold() -> float:
    return _known_threshold


def set_known_threshold(value: float) -> None:
    """Replace the stored window half-width (e.g. with a fresh ``find_T``)."""
    global _known_threshold
    if not 0 < value < 10:
        raise ValueError(f"implausible threshold {value}")
    _known_threshold = float(value)


@dataclass(frozen=True)
class Tau:
    """Family parameter, validated against the existence window.

    ``Tau.trusted(v)`` skips the check; it exists to explore super-critical
    values, where solves may legitimately fail.
    """

    value: float
    is_trusted: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ParameterOutOfWindow(f"tau must be finite, got {self.value}")
        limit = _known_threshold - WINDOW_MARGIN
        if not self.is_trusted and abs(self.value) >= limit:
            raise ParameterOutOfWindow(
                f"tau={self.value} lies outside the existence window "
                f"(-{limit:.5f}, {limit:.5f}); solutions need |tau| < T ~ {_known_threshold}"
            )

    @classmethod
    def trusted(cls, value: float) -> "Tau":
        return cls(value, is_trusted=True)

    def __neg__(self) -> "Tau":
        return Tau(-self.value, is_trusted=self.is_trusted)

    def __float__(self) -> float:
        return self.value


def as_tau(tau) -> Tau:
    return tau if isinstance(tau, Tau) else Tau(tau)


# ---------------------------------------------------------------- kernels


@njit
def x_rhs_kernel(t, z, args):
    x = z[0]
    x1 = z[1]
    x2 = z[2]
    out = np.empty(3)
    out[0] = x1
    out[1] = x2
    if abs(x1) < X1_FLOOR:
        out[2] = np.nan
    else:
        out[2] = (x * x2 - 2.0 * x2 * x2 + x1 * x1 + x * x) / x1
    return out


@njit
def g_rhs_kernel(s, z, args):
    g = z[0]
    g1 = z[1]
    g2 = z[2]
    out = np.empty(3)
    out[0] = g1
    out[1] = g2
    den = g - 2.0 * g1 * s
    if abs(den) < DENOM_FLOOR:
        out[2] = np.nan
    else:
        out[2] = g2 * (3.0 * g1 + 4.0 * s * g2) / den
    return out


def third_derivative(x, x1, x2):
    """Closure of the autonomous equation: x''' from (x, x', x'')."""
    return (x * x2 - 2.0 * x2 * x2 + x1 * x1 + x * x) / x1


def rhs_x(state) -> np.ndarray:
    """Derivative of the first-order system ``(x, x', x'')``."""
    x, x1, x2 = (float(v) for v in state)
    if abs(x1) < X1_FLOOR:
        raise DerivativeSingular(f"x'={x1} vanishes; x''' is undefined")
    return np.array([x1, x2, third_derivative(x, x1, x2)])


def rhs_g(s, state) -> np.ndarray:
    g, g1, g2 = (float(v) for v in state)
    den = g - 2.0 * g1 * s
    if abs(den) < DENOM_FLOOR:
        raise DenominatorVanished(f"g - 2g's = {den} at s={s}")
    return np.array([g1, g2, g2 * (3.0 * g1 + 4.0 * s * g2) / den])


# ---------------------------------------------------------------- (x) form


class XSolution:
    """Solution of the autonomous problem on ``[-t_max, t_max]``.

    ``state(t)`` gives ``(x, x', x'')``; ``jet(t)`` appends ``x'''``.
    """

    def __init__(self, tau: Tau, forward: DenseSolution, companion: DenseSolution, t_max: float):
        self.tau = tau
        self.forward = forward
        self.companion = companion
        self.t_max = t_max

    def state(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        if np.any(np.abs(tt) > self.t_max * (1 + 1e-14)):
            raise OutOfDomain(f"|t| exceeds solved range {self.t_max}")
        out = np.empty((3, len(tt)))
        pos = tt >= 0
        if np.any(pos):
            out[:, pos] = self.forward(np.minimum(tt[pos], self.t_max))
        neg = ~pos
        if np.any(neg):
            c = self.companion(np.minimum(-tt[neg], self.t_max))
            out[0, neg] = -c[0]
            out[1, neg] = c[1]
            out[2, neg] = -c[2]
        return out[:, 0] if scalar else out

    def jet(self, t):
        s = self.state(t)
        d3 = third_derivative(s[0], s[1], s[2])
        if np.ndim(s) == 1:
            return np.array([s[0], s[1], s[2], d3])
        return np.vstack([s, d3])

    def __call__(self, t):
        return self.state(t)[0]

    def table_args(self):
        """Segment tables of both branches, in the layout compiled lookups expect."""
        return self.forward.arrays() + self.companion.arrays()


def _integrate_x(tau_value: float, t_max: float, config: IntegratorConfig) -> DenseSolution:
    problem = OdeProblem(x_rhs_kernel, 0.0, (0.0, 1.0, tau_value), args=())
    try:
        sol = integrate(problem, (0.0, t_max), config)
    except NonFiniteRhs as exc:
        raise DerivativeSingular(
            f"x' vanished while solving tau={tau_value}: the orbit escapes ({exc})"
        ) from exc
    if sol.termination.kind is TerminationKind.BLOW_UP:
        raise BlowUp(
            f"solution for tau={tau_value} exceeded {config.blow_up_norm} at "
            f"t={sol.termination.time:.6g} < t_max={t_max}",
            time=sol.termination.time,
        )
    if np.any(sol.ys[:, 1] <= 0):
        raise DerivativeSingular(f"x' changed sign while solving tau={tau_value}")
    return sol


@functools.lru_cache(maxsize=128)
def _solve_x_cached(tau: Tau, t_max: float, config: IntegratorConfig) -> XSolution:
    forward = _integrate_x(tau.value, t_max, config)
    companion = forward if tau.value == 0.0 else _integrate_x(-tau.value, t_max, config)
    return XSolution(tau, forward, companion, t_max)


def solve_x(tau, t_max: float = DEFAULT_T_MAX, config: IntegratorConfig = DEFAULT_CONFIG) -> XSolution:
    """Solve the autonomous problem for ``tau`` on ``|t| <= t_max``.

    Raises
    ------
    DerivativeSingular, BlowUp
        Only for trusted super-critical ``tau`` whose orbit escapes.
    """
    tau = as_tau(tau)
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    return _solve_x_cached(tau, float(t_max), config)


# ---------------------------------------------------------------- (u) form


@dataclass(frozen=True)
class UView:
    """``u(r) = x(log r)`` on ``exp(-t_max) <= r <= exp(t_max)``."""

    source: XSolution

    @property
    def r_range(self) -> tuple[float, float]:
        return math.exp(-self.source.t_max), math.exp(self.source.t_max)


def u_eval(view: UView, r):
    """Return ``(u, u', u'', u''')`` at ``r`` (scalar or array)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise OutOfDomain("u is defined for r > 0 only")
    t = np.log(r)
    if np.any(np.abs(t) > view.source.t_max * (1 + 1e-14)):
        raise OutOfDomain(f"r outside solved range {view.r_range}")
    x, x1, x2, x3 = view.source.jet(t)
    return np.array([x, x1 / r, (x2 - x1) / r**2, (x3 - 3.0 * x2 + 2.0 * x1) / r**3])


def u_residual(jet, r):
    """Relative residual of the radial equation for a jet ``(u, u', u'', u''')``."""
    u, u1, u2, u3 = jet
    terms = np.array([
        u3 * u1 * r**4,
        7.0 * u2 * u1 * r**3,
        2.0 * u2 * u2 * r**4,
        -u2 * u * r**2,
        2.0 * u1 * u1 * r**2,
        -u1 * u * r,
        -u * u,
    ])
    scale = np.sum(np.abs(terms), axis=0)
    return np.abs(np.sum(terms, axis=0)) / scale


# ---------------------------------------------------------------- (g) form


@dataclass(frozen=True)
class GLimits:
    g0: float
    g1: float
    g2: float
    err0: float
    err1: float
    err2: float


def richardson_limit(values, ratio: float = 0.5):
    """Extrapolate samples ``f(s0 * ratio**k)`` to ``s = 0``.

    Polynomial (Neville) extrapolation in ``s``; returns ``(limit, error)``
    where the error is the gap between the last two diagonal entries.
    """
    values = np.asarray(values, dtype=float)
    m = len(values)
    table = np.zeros((m, m))
    table[:, 0] = values
    for j in range(1, m):
        factor = ratio**-j  # s_{i-j} / s_i
        for i in range(j, m):
            table[i, j] = table[i, j - 1] + (table[i, j - 1] - table[i - 1, j - 1]) / (factor - 1.0)
    return table[m - 1, m - 1], abs(table[m - 1, m - 1] - table[m - 1, m - 2])


class GSolution:
    """Solution of the pole-regular problem on ``(0, 1]``.

    Below ``s_min`` values come from the quadratic Taylor polynomial built on
    the extrapolated limits.
    """

    def __init__(self, tau: Tau, trajectory: DenseSolution, limits: GLimits, s_min: float):
        self.tau = tau
        self.trajectory = trajectory
        self.limits = limits
        self.s_min = s_min

    def state(self, s):
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        ss = np.atleast_1d(s)
        if np.any(ss < 0) or np.any(ss > 1.0 + 1e-14):
            raise OutOfDomain("g is solved on 0 <= s <= 1")
        out = np.empty((3, len(ss)))
        inside = ss >= self.s_min
        if np.any(inside):
            out[:, inside] = self.trajectory(np.minimum(ss[inside], 1.0))
        low = ~inside
        if np.any(low):
            L = self.limits
            sl = ss[low]
            out[0, low] = L.g0 + L.g1 * sl + 0.5 * L.g2 * sl**2
            out[1, low] = L.g1 + L.g2 * sl
            out[2, low] = L.g2
        return out[:, 0] if scalar else out

    def __call__(self, s):
        return self.state(s)[0]

    def zeta(self, s):
        g, g1, _ = self.state(s)
        return g - 2.0 * g1 * s

    def nu(self, s):
        g, g1, g2 = self.state(s)
        return 4.0 * (g - 2.0 * g1 * s) ** 2 * g2


def _integrate_g(tau_value: float, s_end: float, config: IntegratorConfig) -> DenseSolution:
    problem = OdeProblem(g_rhs_kernel, 1.0, (0.0, -0.5, 0.25 * tau_value), args=())
    try:
        sol = integrate(problem, (1.0, s_end), config)
    except NonFiniteRhs as exc:
        raise DenominatorVanished(f"g - 2g's vanished for tau={tau_value} ({exc})") from exc
    if sol.termination.kind is not TerminationKind.REACHED_END:
        raise BlowUp(f"g-solution for tau={tau_value} stopped early: {sol.termination.kind.value}")
    return sol


@functools.lru_cache(maxsize=128)
def _solve_g_cached(tau: Tau, config: IntegratorConfig, s_min: float) -> GSolution:
    traj = _integrate_g(tau.value, s_min, config)
    s_grid = RICHARDSON_S0 * 0.5 ** np.arange(RICHARDSON_LEVELS)
    if s_grid[-1] < s_min:
        raise ValueError("Richardson grid reaches below s_min")
    vals = traj(s_grid)
    (g0, e0), (g1, e1), (g2, e2) = (richardson_limit(vals[i]) for i in range(3))
    limits = GLimits(g0, g1, g2, e0, e1, e2)
    return GSolution(tau, traj, limits, s_min)


def solve_g(tau, config: IntegratorConfig = DEFAULT_CONFIG, s_min: float = S_MIN) -> GSolution:
    """Integrate the pole-regular problem from ``s = 1`` down to ``s_min``.

    Limits at ``s = 0`` are obtained by Richardson extrapolation on the
    geometric grid ``s0 * 2**-k``.
    """
    return _solve_g_cached(as_tau(tau), config, float(s_min))


# ---------------------------------------------------------------- cross-checks


@dataclass(frozen=True)
class ConsistencyReport:
    times: tuple[float, ...]
    d_residuals: tuple[float, ...]
    dd_residuals: tuple[float, ...]

    @property
    def max_d(self) -> float:
        return max(self.d_residuals)

    @property
    def max_dd(self) -> float:
        return max(self.dd_residuals)

    @property
    def max_residual(self) -> float:
        return max(self.max_d, self.max_dd)


def consistency_residuals(xsol: XSolution, gsol: GSolution, times):
    """Relative residuals of ``x' = e^t (g - 2g's)`` and ``x'' - x = 4 e^{-3t} g''``."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(t < 0):
        raise OutOfDomain("identities are checked for t >= 0 (s <= 1)")
    s = np.exp(-2.0 * t)
    x, x1, x2 = xsol.state(t)
    g, g1, g2 = gsol.state(s)
    et = np.exp(t)
    lhs_d, rhs_d = x1, et * (g - 2.0 * g1 * s)
    res_d = np.abs(lhs_d - rhs_d) / (np.abs(lhs_d) + np.abs(rhs_d))
    lhs_dd, rhs_dd = x2 - x, 4.0 * np.exp(-3.0 * t) * g2
    res_dd = np.abs(lhs_dd - rhs_dd) / (np.abs(x2) + np.abs(x) + np.abs(rhs_dd))
    return res_d, res_dd


def consistency_check(tau, times, config: IntegratorConfig = DEFAULT_CONFIG,
                      xsol: XSolution | None = None, gsol: GSolution | None = None) -> ConsistencyReport:
    tau = as_tau(tau)
    xsol = xsol if xsol is not None else solve_x(tau, config=config)
    gsol = gsol if gsol is not None else solve_g(tau, config=config)
    res_d, res_dd = consistency_residuals(xsol, gsol, times)
    return ConsistencyReport(
        tuple(float(t) for t in np.atleast_1d(times)),
        tuple(float(v) for v in res_d),
        tuple(float(v) for v in res_dd),
    )


class AsymptoticCoeffs:
    """Smooth coefficient functions describing the profile at both poles.

    For ``r >= 1``: ``Psi'(r) = zeta(1/r^2)`` and the potential factor equals
    ``nu(1/r^2) / r``.  For ``r <= 1``: ``Psi'(r) = xi(r^2) / r^2`` and the
    factor equals ``mu(r^2) * r``, where ``xi = zeta_{-tau}`` and
    ``mu = -nu_{-tau}``.
    """

    def __init__(self, plus: GSolution, minus: GSolution):
        self.plus = plus
        self.minus = minus

    def zeta(self, sigma):
        return self.plus.zeta(sigma)

    def nu(self, sigma):
        return self.plus.nu(sigma)

    def xi(self, sigma):
        return self.minus.zeta(sigma)

    def mu(self, sigma):
        return -self.minus.nu(sigma)

    def psi_prime(self, r):
        r = np.asarray(r, dtype=float)
        big = r >= 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(big, self.zeta(np.where(big, 1.0 / r**2, 0.0)),
                           self.xi(np.where(big, 0.0, r**2)) / r**2)
        return out

    def potential_factor(self, r):
        """``(Psi'' r^2 + Psi' r - Psi) Psi'^2 r^2`` via the pole coefficients."""
        r = np.asarray(r, dtype=float)
        big = r >= 1.0
        return np.where(big, self.nu(np.where(big, 1.0 / r**2, 0.0)) / r,
                        self.mu(np.where(big, 0.0, r**2)) * r)


def asymptotic_coeffs(tau, config: IntegratorConfig = DEFAULT_CONFIG) -> AsymptoticCoeffs:
    tau = as_tau(tau)
    return AsymptoticCoeffs(solve_g(tau, config), solve_g(-tau, config))

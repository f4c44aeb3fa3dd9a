"""Natural mechanical system on the sphere built from the profile Theta.

In coordinates ``(phi, y = log r)`` with momenta ``(p_phi, p_y)``::

    H = Theta'^2 (p_phi^2 + p_y^2) - Theta'^2 (Theta'' - Theta) cos(phi)
    F = p_phi^3 + 3/2 (Theta cos(phi) p_phi - Theta' sin(phi) p_y)

Write ``H = Hhat + V`` (kinetic plus potential) and ``F = p_phi^3 + E``.
Then ``{V, p_phi^3} + {Hhat, E}`` vanishes identically and ``{V, E}`` equals
``3/2 Theta'^2 sin cos`` times the residual of the profile equation, so
``{F, H} = 0`` exactly when Theta solves it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .errors import DomainExceeded, OutOfDomain
from .family import XSolution, as_tau
from .ivp import DEFAULT_CONFIG, Direction, Event, IntegratorConfig, OdeProblem, TerminationKind, integrate
from .profile import Y_LIMIT, Profile, ThetaJet, build_profile, profile_jet_kernel


@dataclass(frozen=True)
class PhaseState:
    phi: float
    y: float
    p_phi: float
    p_y: float

    def __post_init__(self):
        for name in ("phi", "y", "p_phi", "p_y"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.y, self.p_phi, self.p_y])


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float

    @property
    def total(self) -> float:
        return self.kinetic + self.potential


@dataclass(frozen=True)
class ConservationReport:
    samples: tuple = field(repr=False)  # (time, H, F) per accepted step
    max_drift_H: float
    max_drift_F: float
    final_state: PhaseState | None = None


@dataclass(frozen=True)
class PartialBrackets:
    """The two pieces of ``{F, H}`` with the scales they are judged against."""

    vp3_plus_he: float
    vp3_plus_he_scale: float
    ve: float
    ve_scale: float

    @property
    def relative(self) -> tuple[float, float]:
        return (_rel(self.vp3_plus_he, self.vp3_plus_he_scale), _rel(self.ve, self.ve_scale))


def _rel(value, scale):
    return abs(value) / scale if scale > 0 else abs(value)


# ---------------------------------------------------------------- jets


def theta_jet(source, y: float) -> ThetaJet:
    """Jet of Theta at ``y`` from an :class:`XSolution` or a :class:`Profile`.

    ``Theta'''`` comes from the closure of the profile equation.
    """
    if isinstance(source, Profile):
        return source.theta_jet(y)
    x, x1, x2, x3 = source.jet(float(y))
    return ThetaJet(x, x1, x2, x3)


def _jet_rows(source, y):
    """Rows ``(Theta, Theta', Theta'', Theta''', W, W')`` for an array of ``y``."""
    y = np.asarray(y, dtype=float)
    if isinstance(source, Profile):
        return source.jets(y)
    if isinstance(source, XSolution):
        th, d1, d2, d3 = source.jet(y)
        return np.array([th, d1, d2, d3, d2 - th, d3 - d1])
    if isinstance(source, ThetaJet):
        return np.array([source.theta, source.d1, source.d2, source.d3, source.gap, source.gap1])
    if isinstance(source, np.ndarray) and source.shape[0] == 6:
        return source  # precomputed rows, already at the right y
    raise TypeError(f"cannot take jets from {type(source).__name__}")


def _as_rows(jet):
    return _jet_rows(jet, None) if isinstance(jet, ThetaJet) else np.asarray(jet, dtype=float)


def closure_residual(jet: ThetaJet) -> float:
    return jet.d1 * jet.d3 - (jet.theta * jet.d2 - 2 * jet.d2**2 + jet.d1**2 + jet.theta**2)


def identity_residual(jet, relative: bool = False):
    """``Theta' Theta''' - Theta^2 - Theta'' Theta - Theta'^2 + 2 Theta''^2``.

    With ``relative=True`` the value is divided by the sum of the absolute
    values of the five terms.
    """
    th, d1, d2, d3 = _as_rows(jet)[:4]
    terms = np.array([d1 * d3, -th * th, -d2 * th, -d1 * d1, 2.0 * d2 * d2])
    value = terms.sum(axis=0)
    if not relative:
        return value
    scale = np.abs(terms).sum(axis=0)
    return np.abs(value) / np.where(scale > 0, scale, 1.0)


# ---------------------------------------------------------------- energies


def _state_rows(state):
    if isinstance(state, PhaseState):
        return state.as_array()
    return np.asarray(state, dtype=float)


def _energy(z, j):
    phi, _, pp, py = z
    d1sq = j[1] ** 2
    return d1sq * (pp * pp + py * py), -d1sq * j[4] * np.cos(phi)


def hamiltonian(state, jet) -> EnergyBreakdown:
    kinetic, potential = _energy(_state_rows(state), _as_rows(jet))
    return EnergyBreakdown(float(kinetic), float(potential))


def linear_part(state, jet) -> float:
    """``E = 3/2 (Theta cos(phi) p_phi - Theta' sin(phi) p_y)``."""
    phi, _, pp, py = _state_rows(state)
    j = _as_rows(jet)
    return 1.5 * (j[0] * np.cos(phi) * pp - j[1] * np.sin(phi) * py)


def cubic_integral(state, jet) -> float:
    z = _state_rows(state)
    return z[2] ** 3 + linear_part(z, jet)


def energy_polar(r, phi, p_r, p_phi, profile: Profile):
    """Energy in polar coordinates ``(r, phi)`` with the matching momenta.

    Equals the log-coordinate energy at ``y = log r`` when ``p_y = r p_r``.
    """
    psi, d1, d2, _ = profile.psi_jet(r)
    r = np.asarray(r, dtype=float)
    kinetic = r**4 * d1**2 * (p_r**2 + p_phi**2 / r**2)
    potential = -(d2 * r**2 + d1 * r - psi) * d1**2 * r**2 * np.cos(phi)
    return kinetic + potential


# ---------------------------------------------------------------- brackets
# gradients are ordered (d/dphi, d/dy, d/dp_phi, d/dp_y)


def _grad_p3(z, j):
    zero = np.zeros_like(z[0])
    return np.array([zero, zero, 3.0 * z[2] ** 2, zero])


def _grad_E(z, j):
    phi, _, pp, py = z
    c, s = np.cos(phi), np.sin(phi)
    return 1.5 * np.array([
        -j[0] * s * pp - j[1] * c * py,
        j[1] * c * pp - j[2] * s * py,
        j[0] * c,
        -j[1] * s,
    ])


def _grad_V(z, j):
    phi = z[0]
    zero = np.zeros_like(phi)
    d1, d2, w, w1 = j[1], j[2], j[4], j[5]
    return np.array([
        d1 * d1 * w * np.sin(phi),
        -(2.0 * d1 * d2 * w + d1 * d1 * w1) * np.cos(phi),
        zero,
        zero,
    ])


def _grad_Hhat(z, j):
    _, _, pp, py = z
    d1, d2 = j[1], j[2]
    zero = np.zeros_like(pp)
    return np.array([zero, 2.0 * d1 * d2 * (pp * pp + py * py), 2.0 * d1 * d1 * pp, 2.0 * d1 * d1 * py])


def grad_H(z, j):
    return _grad_Hhat(z, j) + _grad_V(z, j)


def grad_F(z, j):
    return _grad_p3(z, j) + _grad_E(z, j)


def bracket_terms(ga, gb):
    """The four products of the canonical bracket ``{A, B}``."""
    return np.array([ga[0] * gb[2], -ga[2] * gb[0], ga[1] * gb[3], -ga[3] * gb[1]])


def _resolve(state, source):
    z = _state_rows(state)
    j = _as_rows(source) if isinstance(source, ThetaJet) else _jet_rows(source, z[1])
    return z, j


def bracket_FH_terms(state, source) -> np.ndarray:
    z, j = _resolve(state, source)
    return bracket_terms(grad_F(z, j), grad_H(z, j))


def poisson_bracket_FH(state, source) -> float:
    """``{F, H}`` at ``state`` from analytic partial derivatives."""
    return float(bracket_FH_terms(state, source).sum(axis=0))


def relative_bracket_FH(state, source):
    """``|{F, H}|`` divided by the sum of the absolute bracket terms."""
    t = bracket_FH_terms(state, source)
    scale = np.abs(t).sum(axis=0)
    return np.abs(t.sum(axis=0)) / np.where(scale > 0, scale, 1.0)


def poisson_bracket_HH(state, source) -> float:
    z, j = _resolve(state, source)
    g = grad_H(z, j)
    return float(bracket_terms(g, g).sum(axis=0))


def partial_brackets(state, source) -> PartialBrackets:
    z, j = _resolve(state, source)
    a = np.concatenate([bracket_terms(_grad_V(z, j), _grad_p3(z, j)),
                        bracket_terms(_grad_Hhat(z, j), _grad_E(z, j))])
    b = bracket_terms(_grad_V(z, j), _grad_E(z, j))
    return PartialBrackets(float(a.sum()), float(np.abs(a).sum()),
                           float(b.sum()), float(np.abs(b).sum()))


def finite_difference_bracket(state, source, step: float = 1e-5) -> float:
    """``{F, H}`` by central differences of F and H; an independent check."""
    z0 = _state_rows(state)

    def value(fn, z):
        j = _jet_rows(source, z[1])
        if fn == "H":
            k, p = _energy(z, j)
            return k + p
        return z[2] ** 3 + linear_part(z, j)

    grads = {}
    for name in ("F", "H"):
        g = np.empty(4)
        for i in range(4):
            dz = np.zeros(4)
            dz[i] = step
            g[i] = (value(name, z0 + dz) - value(name, z0 - dz)) / (2 * step)
        grads[name] = g
    return float(bracket_terms(grads["F"], grads["H"]).sum())


# ---------------------------------------------------------------- flow


@njit
def flow_rhs_kernel(t, z, tables):
    j = profile_jet_kernel(tables, z[1])
    d1 = j[1]
    d2 = j[2]
    w = j[4]
    w1 = j[5]
    d1sq = d1 * d1
    pp = z[2]
    py = z[3]
    c = math.cos(z[0])
    out = np.empty(4)
    out[0] = 2.0 * d1sq * pp
    out[1] = 2.0 * d1sq * py
    out[2] = -d1sq * w * math.sin(z[0])
    out[3] = -(2.0 * d1 * d2 * (pp * pp + py * py) - (2.0 * d1 * d2 * w + d1sq * w1) * c)
    return out


def invariants_along(profile: Profile, states):
    """``(H, F)`` arrays for states given as rows ``(phi, y, p_phi, p_y)``."""
    z = np.asarray(states, dtype=float).T
    j = profile.jets(z[1])
    k, p = _energy(z, j)
    return k + p, z[2] ** 3 + linear_part(z, j)


def _drift(values):
    ref = abs(values[0])
    return float(np.max(np.abs(values - values[0])) / (ref if ref > 0 else 1.0))


def hamiltonian_flow(
    initial: PhaseState,
    tau,
    t_span=(0.0, 100.0),
    config: IntegratorConfig = DEFAULT_CONFIG,
    profile: Profile | None = None,
) -> ConservationReport:
    """Integrate Hamilton's equations and monitor ``H`` and ``F``.

    The profile covers ``|y| <= Y_LIMIT`` through the pole-regular
    representation, so no re-solve is needed when the orbit nears a pole.

    Raises
    ------
    DomainExceeded
        The orbit reached ``|y| = Y_LIMIT``.
    """
    if profile is None:
        profile = build_profile(as_tau(tau), config)
    if abs(initial.y) >= Y_LIMIT:
        raise DomainExceeded(f"initial y={initial.y} outside |y| < {Y_LIMIT}")
    edge = Event("edge", lambda t, z: abs(z[1]) - Y_LIMIT, Direction.RISING)
    problem = OdeProblem(flow_rhs_kernel, float(t_span[0]), initial.as_array(), args=profile.tables)
    sol = integrate(problem, t_span, config, [edge])
    if sol.termination.kind is TerminationKind.EVENT_FIRED:
        raise DomainExceeded(f"orbit reached |y|={Y_LIMIT} at t={sol.termination.time}")
    if sol.termination.kind is not TerminationKind.REACHED_END:
        raise DomainExceeded(f"flow stopped early: {sol.termination.kind.value}")
    H, F = invariants_along(profile, sol.ys)
    samples = tuple(zip(sol.ts.tolist(), H.tolist(), F.tolist()))
    return ConservationReport(samples, _drift(H), _drift(F), PhaseState(*sol.ys[-1]))


# ---------------------------------------------------------------- curvature


def curvature_from_psi(r, psi_jet):
    """``K = r^4 (Psi''' Psi' - Psi''^2 + Psi'' Psi' / r)``.

    This is ``-(1 / 2 lambda) (f'' + f'/r)`` with ``f = log lambda`` and
    ``lambda = 1 / (r^4 Psi'^2)``, expanded by hand.
    """
    _, d1, d2, d3 = psi_jet
    return r**4 * (d3 * d1 - d2 * d2 + d2 * d1 / r)


def gaussian_curvature(tau, r, config: IntegratorConfig = DEFAULT_CONFIG, profile: Profile | None = None):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise OutOfDomain("r must be positive and finite")
    profile = profile or build_profile(as_tau(tau), config)
    K = curvature_from_psi(r, profile.psi_jet(r))
    return float(K) if K.ndim == 0 else K


def curvature_finite_difference(profile: Profile, r: float, step: float = 0.02) -> float:
    """Curvature from values of ``Theta'`` alone.

    In ``y = log r`` the metric is ``(dy^2 + dphi^2) / Theta'^2``, so
    ``K = Theta'^2 (log Theta')''``.  The second derivative is a central
    difference in ``y`` with one Richardson step; ``step`` balances the
    truncation error against interpolation noise.
    """
    y = math.log(r)

    def second(h):
        d1 = profile.jets(np.array([y - h, y, y + h]))[1]
        f = np.log(d1)
        return (f[2] - 2.0 * f[1] + f[0]) / h**2, d1[1]

    coarse, d1 = second(step)
    fine, _ = second(step / 2)
    return float(d1**2 * (4.0 * fine - coarse) / 3.0)


def pole_curvatures(profile: Profile) -> tuple[float, float]:
    """Curvature at the two poles, ``-4 g(0) g'(0)`` of each pole-regular branch.

    Near ``r = oo`` the metric is ``(d rho^2 + rho^2 dphi^2) / zeta(rho^2)^2``
    with ``rho = 1/r``, whose curvature at ``rho = 0`` is ``4 zeta(0) zeta'(0)``.
    """
    lp, lm = profile.plus.limits, profile.minus.limits
    return -4.0 * lp.g0 * lp.g1, -4.0 * lm.g0 * lm.g1


# ---------------------------------------------------------------- poles

FAR_RADII = (1e1, 1e2, 1e3)
NEAR_RADII = (1e-1, 1e-2, 1e-3)
CURVATURE_GRID = tuple(10.0 ** np.arange(-3.0, 3.25, 0.25))


@dataclass(frozen=True)
class PoleReport:
    tau: float
    zeta0: float
    xi0: float
    zeta0_check: float
    xi0_check: float
    far_radii: tuple
    far_potential: tuple  # |V(r, phi=0)|
    nu_limit: float
    near_radii: tuple
    near_potential: tuple
    mu_limit: float
    curvature_radii: tuple = field(repr=False)
    curvature: tuple = field(repr=False)
    pole_curvature: tuple[float, float] = (math.nan, math.nan)

    @property
    def extrapolation_gap(self) -> float:
        return max(abs(self.zeta0 - self.zeta0_check), abs(self.xi0 - self.xi0_check))

    @property
    def max_abs_curvature(self) -> float:
        return max(abs(k) for k in self.curvature)

    def decays(self, factor: float = 2.0) -> bool:
        """Potential below ``factor`` times its ``1/r`` (resp. ``r``) envelope,
        strictly decreasing towards both poles."""
        far_ok = all(v <= factor * abs(self.nu_limit) / r + 1e-300
                     for r, v in zip(self.far_radii, self.far_potential))
        near_ok = all(v <= factor * abs(self.mu_limit) * r + 1e-300
                      for r, v in zip(self.near_radii, self.near_potential))
        mono = all(a >= b for a, b in zip(self.far_potential, self.far_potential[1:])) and all(
            a >= b for a, b in zip(self.near_potential, self.near_potential[1:]))
        return far_ok and near_ok and mono

    def as_dict(self) -> dict:
        return {
            "tau": self.tau,
            "zeta0": self.zeta0,
            "xi0": self.xi0,
            "extrapolation_gap": self.extrapolation_gap,
            "far_radii": list(self.far_radii),
            "far_potential": list(self.far_potential),
            "nu_limit": self.nu_limit,
            "near_radii": list(self.near_radii),
            "near_potential": list(self.near_potential),
            "mu_limit": self.mu_limit,
            "max_abs_curvature": self.max_abs_curvature,
            "pole_curvature": list(self.pole_curvature),
        }


def potential_at(profile: Profile, r, phi=0.0):
    """``V(r, phi) = -Theta'^2 (Theta'' - Theta) cos(phi)`` at ``y = log r``."""
    j = profile.jets(np.log(np.asarray(r, dtype=float)))
    return -j[1] ** 2 * j[4] * np.cos(phi)


def pole_report(tau, config: IntegratorConfig = DEFAULT_CONFIG, check_config: IntegratorConfig | None = None,
                s_probe: float = 1e-6) -> PoleReport:
    """Regularity data at ``r = 0`` and ``r = oo``.

    ``zeta0``/``xi0`` are recomputed with ``check_config`` (default: 100 times
    tighter tolerances) to expose the extrapolation error.
    """
    tau = as_tau(tau)
    profile = build_profile(tau, config)
    check_config = check_config or config.with_tol(config.rel_tol * 1e-2, config.abs_tol * 1e-2)
    check = build_profile(tau, check_config)
    far = np.array(FAR_RADII)
    near = np.array(NEAR_RADII)
    radii = np.array(CURVATURE_GRID)
    return PoleReport(
        tau=tau.value,
        zeta0=profile.plus.limits.g0,
        xi0=profile.minus.limits.g0,
        zeta0_check=check.plus.limits.g0,
        xi0_check=check.minus.limits.g0,
        far_radii=tuple(far.tolist()),
        far_potential=tuple(np.abs(potential_at(profile, far)).tolist()),
        nu_limit=float(profile.plus.nu(s_probe)),
        near_radii=tuple(near.tolist()),
        near_potential=tuple(np.abs(potential_at(profile, near)).tolist()),
        mu_limit=float(-profile.minus.nu(s_probe)),
        curvature_radii=tuple(radii.tolist()),
        curvature=tuple(gaussian_curvature(tau, radii, profile=profile).tolist()),
        pole_curvature=pole_curvatures(profile),
    )

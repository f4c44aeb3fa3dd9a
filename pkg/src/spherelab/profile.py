"""Profile function Theta(y) over the whole line, accurate up to both poles.

Near the equator the jet comes from the x-solution.  Far out, the gap
``W = Theta'' - Theta`` decays like ``exp(-3|y|)`` while ``Theta`` grows like
``exp(|y|)``; subtracting interpolated values would lose every digit of the
potential, so for ``|y| > y_switch`` the jet is rebuilt from the pole-regular
solutions::

    Theta  = e^y g(s),  Theta' = e^y (g - 2 s g'),  W = 4 e^{-3y} g''(s),
    W'     = -4 e^{-3y} (3 g'' + 2 s g'''),          s = e^{-2y}

and for ``y < 0`` from the ``-tau`` companion through
``Theta_tau(y) = -Theta_{-tau}(-y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit
from ._dop853 import dense_lookup
from .errors import OutOfDomain
from .family import GSolution, XSolution, as_tau, solve_g, solve_x
from .ivp import DEFAULT_CONFIG, IntegratorConfig

Y_SWITCH = 1.0
Y_LIMIT = 300.0

# jet component layout
THETA, D1, D2, D3, GAP, GAP1 = range(6)


@dataclass(frozen=True)
class ThetaJet:
    """``Theta`` and three derivatives at one ``y``.

    ``gap = Theta'' - Theta`` and ``gap1 = Theta''' - Theta'`` are stored on
    their own because far from the equator they are known much better than
    the difference of the large terms.
    """

    theta: float
    d1: float
    d2: float
    d3: float
    gap: float | None = None
    gap1: float | None = None

    def __post_init__(self):
        for name in ("theta", "d1", "d2", "d3"):
            object.__setattr__(self, name, float(getattr(self, name)))
        gap = self.d2 - self.theta if self.gap is None else self.gap
        gap1 = self.d3 - self.d1 if self.gap1 is None else self.gap1
        object.__setattr__(self, "gap", float(gap))
        object.__setattr__(self, "gap1", float(gap1))


@njit
def _g_state(t_old, hs, F, y_old, lim, s):
    # lim = (g0, g1, g2, s_min)
    if s >= lim[3]:
        return dense_lookup(t_old, hs, F, y_old, s)
    out = np.empty(3)
    out[0] = lim[0] + lim[1] * s + 0.5 * lim[2] * s * s
    out[1] = lim[1] + lim[2] * s
    out[2] = lim[2]
    return out


@njit
def _far_jet(t_old, hs, F, y_old, lim, y):
    """Jet at ``y > 0`` from the pole-regular solution."""
    s = math.exp(-2.0 * y)
    st = _g_state(t_old, hs, F, y_old, lim, s)
    g = st[0]
    g1 = st[1]
    g2 = st[2]
    den = g - 2.0 * g1 * s
    g3 = g2 * (3.0 * g1 + 4.0 * s * g2) / den
    ey = math.exp(y)
    e3 = math.exp(-3.0 * y)
    out = np.empty(6)
    out[0] = ey * g
    out[1] = ey * den
    out[4] = 4.0 * e3 * g2
    out[2] = out[0] + out[4]
    out[5] = -4.0 * e3 * (3.0 * g2 + 2.0 * s * g3)
    out[3] = out[1] + out[5]
    return out


@njit
def _near_jet(t_old, hs, F, y_old, y):
    st = dense_lookup(t_old, hs, F, y_old, y)
    x = st[0]
    x1 = st[1]
    x2 = st[2]
    out = np.empty(6)
    out[0] = x
    out[1] = x1
    out[2] = x2
    out[3] = (x * x2 - 2.0 * x2 * x2 + x1 * x1 + x * x) / x1
    out[4] = x2 - x
    out[5] = out[3] - x1
    return out


@njit
def profile_jet_kernel(tables, y):
    """Six-component jet ``(Theta, Theta', Theta'', Theta''', W, W')`` at ``y``.

    ``tables`` packs the x branches, the two g branches and a parameter
    vector ``(g0+, g1+, g2+, s_min, g0-, g1-, g2-, s_min, y_switch)``.
    """
    (xf_t, xf_h, xf_F, xf_y, xc_t, xc_h, xc_F, xc_y,
     gp_t, gp_h, gp_F, gp_y, gm_t, gm_h, gm_F, gm_y, par) = tables
    y_switch = par[8]
    if y >= 0.0:
        if y <= y_switch:
            return _near_jet(xf_t, xf_h, xf_F, xf_y, y)
        return _far_jet(gp_t, gp_h, gp_F, gp_y, par[0:4], y)
    if -y <= y_switch:
        c = _near_jet(xc_t, xc_h, xc_F, xc_y, -y)
    else:
        c = _far_jet(gm_t, gm_h, gm_F, gm_y, par[4:8], -y)
    # odd symmetry: even derivatives flip sign, odd derivatives keep it
    c[0] = -c[0]
    c[2] = -c[2]
    c[4] = -c[4]
    return c


@njit
def profile_jets_kernel(tables, ys):
    out = np.empty((6, ys.shape[0]))
    for i in range(ys.shape[0]):
        out[:, i] = profile_jet_kernel(tables, ys[i])
    return out


class Profile:
    """Theta for one member of the family, valid on ``|y| <= Y_LIMIT``."""

    def __init__(self, xsol: XSolution, plus: GSolution, minus: GSolution,
                 y_switch: float = Y_SWITCH):
        if xsol.t_max < y_switch:
            raise ValueError("x-solution must cover the near-equator band")
        if min(plus.s_min, minus.s_min) > math.exp(-2.0 * y_switch):
            raise ValueError("g-solutions must reach the switch point")
        self.tau = xsol.tau
        self.xsol = xsol
        self.plus = plus
        self.minus = minus
        self.y_switch = y_switch
        lp, lm = plus.limits, minus.limits
        par = np.array([lp.g0, lp.g1, lp.g2, plus.s_min,
                        lm.g0, lm.g1, lm.g2, minus.s_min, y_switch])
        self.tables = (xsol.forward.arrays() + xsol.companion.arrays()
                       + plus.trajectory.arrays() + minus.trajectory.arrays() + (par,))

    def jets(self, y):
        """Array ``(6,)`` or ``(6, k)``; rows follow ``THETA .. GAP1``."""
        y = np.asarray(y, dtype=float)
        if np.any(np.abs(y) > Y_LIMIT):
            raise OutOfDomain(f"|y| beyond {Y_LIMIT}")
        if y.ndim == 0:
            return profile_jet_kernel(self.tables, float(y))
        return profile_jets_kernel(self.tables, np.ascontiguousarray(y.ravel()))

    def theta_jet(self, y) -> ThetaJet:
        j = self.jets(float(y))
        return ThetaJet(j[0], j[1], j[2], j[3], gap=j[4], gap1=j[5])

    def psi_jet(self, r):
        """``(Psi, Psi', Psi'', Psi''')`` at radius ``r`` (scalar or array)."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise OutOfDomain("r must be positive")
        th, d1, d2, d3, gap, gap1 = self.jets(np.log(r))
        # written through W and W' so the large parts cancel before rounding
        d2_minus_d1 = (th - d1) + gap
        d3_combo = gap1 - 3.0 * gap + 3.0 * (d1 - th)
        return np.array([th, d1 / r, d2_minus_d1 / r**2, d3_combo / r**3])


def build_profile(tau, config: IntegratorConfig = DEFAULT_CONFIG,
                  y_switch: float = Y_SWITCH) -> Profile:
    tau = as_tau(tau)
    xsol = solve_x(tau, t_max=max(2.0 * y_switch, 2.0), config=config)
    return Profile(xsol, solve_g(tau, config), solve_g(-tau, config), y_switch)


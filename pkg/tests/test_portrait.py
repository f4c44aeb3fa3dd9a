from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from oracles import scipy_p_of_q
from spherelab.errors import OutOfDomain
from spherelab.family import solve_x
from spherelab.portrait import (
    EquilibriumKind,
    PhasePoint,
    Verdict,
    classify_orbit,
    equilibria,
    orbit_from_x,
    p_of_q,
    portrait_grid,
    rhs_sms,
    slope_ratio,
    sms_field,
    trap_certificate,
)


def test_four_equilibria_exact():
    eq = {(e.point.q, e.point.p): e for e in equilibria()}
    assert set(eq) == {(0.0, 1.0), (0.0, -0.5), (1.0, 0.0), (-1.0, 0.0)}
    assert eq[(0.0, 1.0)].kind is EquilibriumKind.SADDLE
    assert eq[(0.0, -0.5)].kind is EquilibriumKind.SADDLE
    assert eq[(1.0, 0.0)].kind is EquilibriumKind.STABLE_NODE
    assert eq[(-1.0, 0.0)].kind is EquilibriumKind.STABLE_NODE


def test_node_eigenvalues():
    node = next(e for e in equilibria() if e.point == PhasePoint(1.0, 0.0))
    lo, hi = node.eigenvalues
    assert abs(lo + 4.0) <= 1e-12 and abs(hi + 2.0) <= 1e-12


def test_saddle_eigenvalues():
    eigs = {(e.point.q, e.point.p): e.eigenvalues for e in equilibria()}
    assert eigs[(0.0, 1.0)] == (-3.0, 1.0)
    assert eigs[(0.0, -0.5)] == (-0.5, 3.0)


def test_field_exact_on_rationals():
    assert sms_field(Fraction(0), Fraction(-1, 2)) == (0, 0)
    assert rhs_sms(PhasePoint(2.0, 1.0)) == (2.0, 1 + 8 - 48 + 1 - 28 - 2)


def test_trap_certificate():
    assert trap_certificate()


def test_round_sphere_orbit_on_parabola():
    sol = solve_x(0.0, t_max=6.0)
    pts = orbit_from_x(sol, np.linspace(0.05, 6.0, 120))
    assert max(abs(pt.p - (1 - pt.q**2)) for pt in pts) <= 1e-9


def test_orbit_domain():
    with pytest.raises(OutOfDomain):
        orbit_from_x(solve_x(0.3), [0.0])


@pytest.mark.parametrize("q", [2.0, 3.0, 5.0])
@pytest.mark.parametrize("tau", [-0.5, 0.0, 0.3])
def test_p_of_q_against_scipy(tau, q):
    assert p_of_q(solve_x(tau), q) == pytest.approx(scipy_p_of_q(tau, q), rel=1e-9)


window = st.floats(-0.57, 0.57, allow_nan=False)


@given(window, window)
def test_monotone_in_tau(a, b):
    assume(abs(a - b) >= 1e-3)
    hi, lo = max(a, b), min(a, b)
    s_hi, s_lo = solve_x(hi), solve_x(lo)
    for q in (2.0, 3.0, 5.0):
        assert p_of_q(s_hi, q) > p_of_q(s_lo, q)


@pytest.mark.parametrize("tau", [-0.5, -0.2, 0.3, 0.5])
def test_slope_ratio_tends_to_tau(tau):
    assert slope_ratio(solve_x(tau), 1e3) == pytest.approx(tau, abs=1e-3)


def test_slope_ratio_round_sphere():
    # p = 1 - q^2 exactly, so the ratio is 1/q
    assert slope_ratio(solve_x(0.0), 1e3) == pytest.approx(1e-3, rel=1e-6)


@pytest.mark.parametrize("tau, verdict", [
    (0.3, Verdict.CONVERGES),
    (0.0, Verdict.CONVERGES),
    (-0.5, Verdict.CONVERGES),
    (-0.577, Verdict.CONVERGES),
    (-0.578, Verdict.ESCAPES),
    (-0.8, Verdict.ESCAPES),
    (3.0, Verdict.CONVERGES),
])
def test_classification(tau, verdict):
    assert classify_orbit(tau).verdict is verdict


def test_short_budget_is_undetermined():
    c = classify_orbit(-0.57735, t_budget=0.5)
    assert c.verdict is Verdict.UNDETERMINED


def test_portrait_grid():
    rows = portrait_grid((-1.0, 1.0), (-1.0, 1.0), 3)
    assert rows.shape == (9, 4)
    row = rows[(rows[:, 0] == 1.0) & (rows[:, 1] == 0.0)][0]
    assert tuple(row[2:]) == (0.0, 0.0)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spherelab.errors import DomainExceeded, OutOfDomain
from spherelab.family import solve_g, solve_x
from spherelab.profile import Profile, ThetaJet, build_profile
from spherelab.sphere import (
    PhaseState,
    bracket_FH_terms,
    closure_residual,
    cubic_integral,
    curvature_finite_difference,
    energy_polar,
    finite_difference_bracket,
    gaussian_curvature,
    hamiltonian,
    hamiltonian_flow,
    identity_residual,
    linear_part,
    partial_brackets,
    poisson_bracket_FH,
    poisson_bracket_HH,
    pole_report,
    potential_at,
    relative_bracket_FH,
    theta_jet,
)

S1, C1 = math.sinh(1.0), math.cosh(1.0)
REF_STATE = PhaseState(0.7, 0.3, 0.2, -0.5)


def random_states(seed, n):
    rng = np.random.default_rng(seed)
    return np.vstack([rng.uniform(0, 2 * np.pi, n), rng.uniform(-1, 1, (3, n))])


# independent transcriptions of the two functions
def H_ref(phi, y, pp, py, jet_at):
    th, d1, d2 = jet_at(y)[:3]
    return d1**2 * (pp**2 + py**2) - d1**2 * (d2 - th) * math.cos(phi)


def F_ref(phi, y, pp, py, jet_at):
    th, d1 = jet_at(y)[:2]
    return pp**3 + 1.5 * (th * math.cos(phi) * pp - d1 * math.sin(phi) * py)


# ---------------------------------------------------------------- jets


def test_theta_jet_examples():
    sol0 = solve_x(0.0)
    j = theta_jet(sol0, 0.0)
    assert (j.theta, j.d1, j.d2, j.d3) == (0.0, 1.0, 0.0, 1.0)
    j = theta_jet(sol0, 1.0)
    np.testing.assert_allclose([j.theta, j.d1, j.d2, j.d3], [S1, C1, S1, C1], rtol=1e-10)
    j = theta_jet(solve_x(0.3), 0.0)
    assert (j.theta, j.d1, j.d2) == (0.0, 1.0, 0.3)
    assert j.d3 == pytest.approx(0.82, abs=1e-15)


@pytest.mark.parametrize("tau", [-0.3, 0.3, 0.5])
def test_closure_residual_small(tau):
    sol = solve_x(tau)
    for y in np.linspace(-3, 3, 13):
        j = theta_jet(sol, y)
        scale = abs(j.d1 * j.d3) + abs(j.theta * j.d2) + 2 * j.d2**2 + j.d1**2 + j.theta**2
        assert abs(closure_residual(j)) <= 1e-9 * scale
        assert j.d1 > 0


@pytest.mark.parametrize("tau", [0.0, 0.3, -0.5])
def test_profile_branches_agree(tau):
    # the same y served by the x branch and by the pole-regular branch
    tau_obj = solve_x(tau).tau
    near = Profile(solve_x(tau_obj, t_max=4.0), solve_g(tau_obj), solve_g(-tau_obj), y_switch=3.5)
    far = Profile(solve_x(tau_obj, t_max=4.0), solve_g(tau_obj), solve_g(-tau_obj), y_switch=0.25)
    y = np.concatenate([np.linspace(-3.0, -0.5, 6), np.linspace(0.5, 3.0, 6)])
    a, b = near.jets(y), far.jets(y)
    np.testing.assert_allclose(a[:4], b[:4], rtol=1e-9)
    # on the x branch W is a difference of numbers of size |Theta|
    assert np.all(np.abs(a[4] - b[4]) <= 1e-9 * (np.abs(a[4]) + np.abs(a[0])) + 1e-14)


def test_profile_domain():
    with pytest.raises(OutOfDomain):
        build_profile(0.3).jets(400.0)


# ---------------------------------------------------------------- energies


def test_hamiltonian_examples():
    sol0, sol3 = solve_x(0.0), solve_x(0.3)
    for state in (PhaseState(0.3, 0.5, 0.1, 0.2), PhaseState(2.0, -1.0, -1.0, 0.5)):
        e = hamiltonian(state, theta_jet(sol0, state.y))
        assert abs(e.potential) <= 1e-9
    e = hamiltonian(PhaseState(0, 0, 1, 0), theta_jet(sol0, 0.0))
    assert e.total == 1.0
    e = hamiltonian(PhaseState(0, 0, 0, 0), theta_jet(sol3, 0.0))
    assert e.potential == pytest.approx(-0.3)
    assert e.kinetic == 0.0


def test_cubic_integral_examples():
    j0 = theta_jet(solve_x(0.0), 0.0)
    assert cubic_integral(PhaseState(1.0, 0.0, 0.0, 0.0), j0) == 0.0
    assert cubic_integral(PhaseState(math.pi / 2, 0.0, 1.0, 2.0), j0) == pytest.approx(-2.0, abs=1e-15)


def test_cubic_integral_double_entry():
    pr = build_profile(0.3)
    z = random_states(11, 50)
    for phi, y, pp, py in z.T:
        ours = cubic_integral((phi, y, pp, py), pr.theta_jet(y))
        assert ours == pytest.approx(F_ref(phi, y, pp, py, pr.jets), rel=1e-14, abs=1e-14)
        e = hamiltonian((phi, y, pp, py), pr.theta_jet(y))
        assert e.total == pytest.approx(H_ref(phi, y, pp, py, pr.jets), rel=1e-14, abs=1e-14)


def test_round_sphere_integral_form():
    pr = build_profile(0.0)
    z = random_states(5, 20)
    for phi, y, pp, py in z.T:
        expected = pp**3 + 1.5 * (math.sinh(y) * math.cos(phi) * pp - math.cosh(y) * math.sin(phi) * py)
        assert cubic_integral((phi, y, pp, py), pr.theta_jet(y)) == pytest.approx(expected, abs=1e-9)
        assert linear_part((phi, y, pp, py), pr.theta_jet(y)) == pytest.approx(expected - pp**3, abs=1e-9)


@pytest.mark.parametrize("tau", [0.0, 0.3, -0.5])
def test_polar_round_trip(tau):
    pr = build_profile(tau)
    rng = np.random.default_rng(3)
    for _ in range(25):
        r = float(np.exp(rng.uniform(-3, 3)))
        phi, p_r, p_phi = rng.uniform(0, 2 * np.pi), rng.uniform(-1, 1), rng.uniform(-1, 1)
        polar = energy_polar(r, phi, p_r, p_phi, pr)
        log = hamiltonian((phi, math.log(r), p_phi, r * p_r), pr.theta_jet(math.log(r))).total
        assert polar == pytest.approx(log, rel=1e-10, abs=1e-10)


# ---------------------------------------------------------------- brackets


def test_reference_state_bracket():
    sol = solve_x(0.3)
    terms = bracket_FH_terms(REF_STATE, sol)
    assert abs(terms.sum()) <= 1e-9 * np.abs(terms).sum()
    assert relative_bracket_FH(REF_STATE, sol) <= 1e-9


@given(st.sampled_from([0.0, 0.3, -0.4]), st.floats(0, 2 * math.pi), st.floats(-2, 2),
       st.floats(-2, 2), st.floats(-2, 2))
def test_bracket_with_itself_vanishes(tau, phi, y, pp, py):
    assert poisson_bracket_HH((phi, y, pp, py), build_profile(tau)) == 0.0


@pytest.mark.parametrize("tau", [0.1, 0.3, 0.5])
def test_bracket_identity_random_states(tau):
    z = random_states(2024, 1000)
    rel = relative_bracket_FH(z, build_profile(tau))
    assert np.max(rel) <= 1e-9


@pytest.mark.parametrize("tau", [0.1, 0.3, 0.5])
def test_partial_identities_vanish_separately(tau):
    pr = build_profile(tau)
    z = random_states(9, 200)
    worst = np.max([partial_brackets(z[:, k], pr).relative for k in range(z.shape[1])], axis=0)
    assert worst[0] <= 1e-9
    assert worst[1] <= 1e-9


def test_partial_identity_needs_no_closure():
    # with an arbitrary jet the first piece still vanishes, the second does not
    jet = ThetaJet(0.4, 1.3, -0.7, 2.0)
    parts = partial_brackets(REF_STATE, jet)
    assert parts.relative[0] <= 1e-14
    assert parts.relative[1] > 1e-3


def test_bracket_V_E_is_residual_times_factor():
    jet = ThetaJet(0.4, 1.3, -0.7, 2.0)
    parts = partial_brackets(REF_STATE, jet)
    phi = REF_STATE.phi
    expected = 1.5 * jet.d1**2 * math.sin(phi) * math.cos(phi) * identity_residual(jet)
    assert parts.ve == pytest.approx(expected, rel=1e-12)


def test_finite_difference_bracket_oracle():
    pr = build_profile(0.5)
    z = random_states(77, 100)
    h = 1e-5
    for col in z.T:
        grads = []
        for fn in (F_ref, H_ref):
            g = np.empty(4)
            for i in range(4):
                dz = np.zeros(4)
                dz[i] = h
                g[i] = (fn(*(col + dz), pr.jets) - fn(*(col - dz), pr.jets)) / (2 * h)
            grads.append(g)
        gF, gH = grads
        fd = gF[0] * gH[2] - gF[2] * gH[0] + gF[1] * gH[3] - gF[3] * gH[1]
        assert abs(poisson_bracket_FH(col, pr) - fd) <= 1e-6
    assert abs(finite_difference_bracket(z[:, 0], pr)) <= 1e-6


def test_identity_residual_examples():
    assert identity_residual(ThetaJet(S1, C1, S1, C1)) == pytest.approx(0.0, abs=1e-14)
    pr = build_profile(0.3)
    rel = identity_residual(pr.jets(np.linspace(-8, 8, 161)), relative=True)
    assert np.max(rel) <= 1e-9
    j = theta_jet(solve_x(0.3), 0.2)
    bad = ThetaJet(j.theta, j.d1, j.d2 + 0.1, j.d3)
    assert abs(identity_residual(bad)) >= 1e-3


# ---------------------------------------------------------------- flow


def test_round_sphere_geodesic_flow():
    rep = hamiltonian_flow(PhaseState(0, 0, 1, 0), 0.0, (0.0, 50.0))
    assert rep.max_drift_H <= 1e-8


def test_cubic_integral_conserved():
    rep = hamiltonian_flow(REF_STATE, 0.3, (0.0, 100.0))
    assert rep.max_drift_F <= 1e-6
    assert rep.max_drift_H <= 1e-6
    assert rep.samples[0][0] == 0.0 and rep.samples[-1][0] == 100.0


def test_zero_momenta_round_sphere_is_stationary():
    start = PhaseState(0.4, 0.2, 0.0, 0.0)
    rep = hamiltonian_flow(start, 0.0, (0.0, 10.0))
    np.testing.assert_allclose(rep.final_state.as_array(), start.as_array(), atol=1e-9)


@pytest.mark.parametrize("tau", [0.1, -0.4])
def test_drift_scales_with_tolerance(tau):
    from spherelab.ivp import DEFAULT_CONFIG

    rep = hamiltonian_flow(PhaseState(1.0, -0.5, 0.3, 0.6), tau, (0.0, 50.0), DEFAULT_CONFIG)
    assert max(rep.max_drift_H, rep.max_drift_F) <= 100 * DEFAULT_CONFIG.rel_tol


def test_flow_outside_domain():
    with pytest.raises(DomainExceeded):
        hamiltonian_flow(PhaseState(0, 301.0, 0, 0), 0.3, (0.0, 1.0))


# ---------------------------------------------------------------- curvature and poles


def test_round_sphere_curvature():
    r = np.geomspace(1e-2, 1e2, 81)
    assert np.max(np.abs(gaussian_curvature(0.0, r) - 1.0)) <= 1e-6
    assert gaussian_curvature(0.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_curvature_nonconstant_and_oracle():
    pr = build_profile(0.3)
    k05, k2 = gaussian_curvature(0.3, 0.5, profile=pr), gaussian_curvature(0.3, 2.0, profile=pr)
    assert abs(k05 - k2) >= 1e-3
    assert k05 == pytest.approx(curvature_finite_difference(pr, 0.5), abs=1e-5)
    assert k2 == pytest.approx(curvature_finite_difference(pr, 2.0), abs=1e-5)


def test_curvature_at_equator_from_jet():
    # at y=0: K = Theta' Theta''' - Theta''^2 = 0.82 - 0.09
    assert gaussian_curvature(0.3, 1.0) == pytest.approx(0.73, abs=1e-12)


def test_curvature_symmetry():
    # r -> 1/r with tau -> -tau is an isometry
    r = np.array([0.1, 0.7, 3.0])
    np.testing.assert_allclose(gaussian_curvature(0.3, r), gaussian_curvature(-0.3, 1 / r), rtol=1e-8)


def test_curvature_domain():
    with pytest.raises(OutOfDomain):
        gaussian_curvature(0.3, 0.0)


def test_pole_report_round_sphere():
    rep = pole_report(0.0)
    assert rep.zeta0 == pytest.approx(0.5, abs=1e-12)
    assert rep.xi0 == pytest.approx(0.5, abs=1e-12)
    assert max(rep.far_potential + rep.near_potential) <= 1e-12
    assert rep.pole_curvature == pytest.approx((1.0, 1.0), abs=1e-12)


def test_pole_report_tau_03():
    rep = pole_report(0.3)
    assert rep.zeta0 != 0 and rep.xi0 != 0
    assert rep.far_potential[-1] <= 2 * abs(rep.nu_limit) * 1e-3
    assert rep.decays()
    assert rep.extrapolation_gap <= 1e-6
    assert rep.max_abs_curvature < 10


def test_potential_direct_against_x_branch():
    # moderate radii, where the x branch is still accurate
    sol = solve_x(0.3)
    pr = build_profile(0.3)
    for r in (2.0, 10.0):
        th, d1, d2, _ = sol.jet(math.log(r))
        assert potential_at(pr, r) == pytest.approx(-(d1**2) * (d2 - th), rel=1e-7)

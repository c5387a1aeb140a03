import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from spiralmga import spirals
from spiralmga.spirals import (OutOfPlanePoly, SpiralArc, SpiralFamily,
                               SpiralSingularityError, SpiralState,
                               arc_delta_v, close_polynomial,
                               closed_form_radius, in_plane_thrust_accel,
                               out_of_plane_accel, propagate_planar,
                               propellant_fraction, sample_arc,
                               spiral_constants, state_from_cartesian)


def mk_state(r=1.0, theta=0.0, v=1.0, psi=math.pi / 2, rz=0.0, vz=0.0):
    return SpiralState(r_par=r, theta=theta, v_par=v, psi=psi, r_z=rz, v_z=vz)


# ---------------------------------------------------------------------------
# constants of motion and classification
# ---------------------------------------------------------------------------
def test_constants_canonical_circular():
    p = spiral_constants(mk_state(), xi=0.0)
    assert p.k_energy == pytest.approx(-1.0, abs=1e-14)
    assert p.k_angmom == pytest.approx(1.0, abs=1e-14)
    assert p.family is SpiralFamily.ELLIPTIC


def test_constants_escape_speed_parabolic():
    p = spiral_constants(mk_state(v=math.sqrt(2.0)), xi=0.0)
    assert abs(p.k_energy) < 1e-10
    assert p.family is SpiralFamily.PARABOLIC


def test_constants_hyperbolic_ii():
    p = spiral_constants(mk_state(v=2.0, psi=math.pi / 4), xi=0.5)
    assert p.k_energy == pytest.approx(3.0, abs=1e-12)
    assert p.k_angmom == pytest.approx(4.0 * math.sin(math.pi / 4), abs=1e-12)
    assert p.family is SpiralFamily.HYPERBOLIC_II


def test_constants_hyperbolic_i():
    # K1 > 0 with K2 < 2(1-xi)
    st = mk_state(v=1.3, psi=0.6)
    p = spiral_constants(st, xi=0.3)
    assert p.k_energy > 0.0
    assert p.k_angmom < 2.0 * (1.0 - 0.3)
    assert p.family is SpiralFamily.HYPERBOLIC_I


# ---------------------------------------------------------------------------
# planar propagation
# ---------------------------------------------------------------------------
def test_propagate_zero_span_identity():
    st = mk_state(r=1.3, v=0.9, psi=1.1)
    out = propagate_planar(st, xi=0.2, dtheta=0.0)
    assert out.r_par == st.r_par and out.v_par == st.v_par
    assert out.psi == st.psi and out.t == st.t


def test_parabolic_matches_log_spiral_exactly():
    xi = 0.3
    psi = 1.0
    r0 = 1.2
    v0 = math.sqrt(2.0 * (1.0 - xi) / r0)   # K1 = 0
    st = mk_state(r=r0, v=v0, psi=psi)
    for dth in (0.4, 1.5, 2.5):
        out = propagate_planar(st, xi=xi, dtheta=dth)
        assert out.psi == pytest.approx(psi, abs=1e-10)
        assert out.r_par == pytest.approx(r0 * math.exp(dth / math.tan(psi)),
                                          rel=1e-10)


def _eq13_rhs(t, y, xi):
    """Time-domain base-spiral equations, independent formulation."""
    v, r, th, psi = y
    return [ (xi - 1.0) / r**2 * math.cos(psi),
             v * math.cos(psi),
             v / r * math.sin(psi),
             math.sin(psi) / (v * r**2) * (2.0 * (1.0 - xi) - r * v * v) ]


def test_elliptic_against_time_domain_oracle():
    xi = 0.1
    st = mk_state(r=1.0, v=0.9, psi=1.2)
    dth = 2.0
    out = propagate_planar(st, xi=xi, dtheta=dth)

    def hit_theta(t, y, *_):
        return y[2] - dth
    hit_theta.terminal = True
    hit_theta.direction = 1.0
    sol = solve_ivp(_eq13_rhs, (0.0, 50.0), [st.v_par, st.r_par, 0.0, st.psi],
                    args=(xi,), method="DOP853", rtol=1e-12, atol=1e-14,
                    events=hit_theta, dense_output=True)
    assert sol.t_events[0].size == 1
    v_e, r_e, th_e, psi_e = sol.y_events[0][0]
    t_e = sol.t_events[0][0]
    assert out.r_par == pytest.approx(r_e, rel=1e-9)
    assert out.v_par == pytest.approx(v_e, rel=1e-9)
    assert out.psi == pytest.approx(psi_e, rel=1e-9)
    assert out.t == pytest.approx(t_e, rel=1e-9)


def test_constants_conserved_and_speed_consistent_along_arc():
    rng = np.random.default_rng(3)
    for _ in range(40):
        xi = rng.uniform(0.0, 1.0)
        r0 = rng.uniform(0.6, 2.5)
        psi0 = rng.uniform(0.6, math.pi - 0.6)
        v0 = rng.uniform(0.6, 1.2) * math.sqrt(2.0 * (1.0 - xi) / r0 + 0.1)
        st = mk_state(r=r0, v=v0, psi=psi0)
        p0 = spiral_constants(st, xi)
        try:
            out = propagate_planar(st, xi=xi, dtheta=1.5)
        except SpiralSingularityError:
            continue
        p1 = spiral_constants(out, xi)
        assert p1.k_energy == pytest.approx(p0.k_energy,
                                            abs=1e-9 * max(1.0, abs(p0.k_energy)))
        assert p1.k_angmom == pytest.approx(p0.k_angmom, rel=1e-9)
        v_pred = spirals.speed_from_radius(p0, out.r_par)
        assert out.v_par == pytest.approx(v_pred, rel=1e-9)


def test_singularity_raises():
    st = mk_state(psi=1e-12)
    with pytest.raises(SpiralSingularityError):
        propagate_planar(st, xi=0.5, dtheta=1.0)


# ---------------------------------------------------------------------------
# closed-form radii (verification route)
# ---------------------------------------------------------------------------
def test_closed_form_parabolic_zero_is_identity():
    st = mk_state(r=1.7, v=math.sqrt(2.0 * 0.7 / 1.7), psi=1.1)
    p = spiral_constants(st, xi=0.3)
    assert p.family is SpiralFamily.PARABOLIC
    assert closed_form_radius(p, 0.0, r_ref=1.7, psi_ref=1.1) == pytest.approx(1.7)


def test_closed_form_elliptic_extremum_at_zero():
    st = mk_state(r=1.0, v=0.9, psi=1.2)
    p = spiral_constants(st, xi=0.1)
    assert p.family is SpiralFamily.ELLIPTIC
    r0 = closed_form_radius(p, 0.0)
    eps = 1e-5
    assert closed_form_radius(p, eps) < r0
    assert closed_form_radius(p, -eps) < r0
    assert (closed_form_radius(p, eps)
            == pytest.approx(closed_form_radius(p, -eps), rel=1e-12))
    # apse radius where the flight path angle is exactly pi/2
    one = 2.0 * (1.0 - p.xi)
    assert r0 == pytest.approx((p.k_angmom - one) / p.k_energy, rel=1e-12)


def test_closed_form_elliptic_matches_propagation():
    xi = 0.1
    st = mk_state(r=1.0, v=0.9, psi=1.2)
    p = spiral_constants(st, xi)
    out = propagate_planar(st, xi=xi, dtheta=2.0)
    beta = brentq(lambda b: closed_form_radius(p, b) - out.r_par, 1e-9, 30.0,
                  xtol=1e-14)
    assert closed_form_radius(p, beta) == pytest.approx(out.r_par, rel=1e-11)
    # the implied flight-path angle at that anomaly matches the propagated one
    w = p.k_energy * out.r_par + 2.0 * (1.0 - xi)
    assert math.sin(out.psi) == pytest.approx(p.k_angmom / w, rel=1e-9)


def test_closed_form_hyperbolic_ii_periapsis():
    st = mk_state(v=2.0, psi=math.pi / 4)
    p = spiral_constants(st, xi=0.5)
    one = 2.0 * (1.0 - p.xi)
    r_min = (p.k_angmom - one) / p.k_energy
    assert closed_form_radius(p, 0.0) == pytest.approx(r_min, rel=1e-12)
    assert closed_form_radius(p, 0.3) > r_min


def test_closed_form_hyperbolic_i_asymptote():
    st = mk_state(v=1.3, psi=0.6)
    p = spiral_constants(st, xi=0.3)
    assert p.family is SpiralFamily.HYPERBOLIC_I
    assert closed_form_radius(p, 1e-8) > 1e6
    assert closed_form_radius(p, 2.0) < closed_form_radius(p, 1.0)


# ---------------------------------------------------------------------------
# thrust accelerations
# ---------------------------------------------------------------------------
def test_in_plane_accel_planar_reduction():
    st = mk_state(r=1.4, v=0.8, psi=1.0)
    xi = 0.3
    a_t, a_n = in_plane_thrust_accel(st, xi)
    assert a_t == pytest.approx(xi * math.cos(st.psi) / st.r_par**2, rel=1e-13)
    assert a_n == pytest.approx((1.0 - 2.0 * xi) * math.sin(st.psi) / st.r_par**2,
                                rel=1e-13)


def test_in_plane_accel_tangential_vanishes_at_right_angle():
    a_t, _ = in_plane_thrust_accel(mk_state(psi=math.pi / 2), xi=0.7)
    assert abs(a_t) < 1e-15


def test_in_plane_accel_3d_direct_reevaluation():
    st = mk_state(r=1.2, v=0.9, psi=1.3, rz=0.25)
    xi = 0.42
    a_t, a_n = in_plane_thrust_accel(st, xi)
    r3 = st.r_par**3
    r3d = (st.r_par**2 + st.r_z**2) ** 1.5
    assert a_t == pytest.approx(
        st.r_par * math.cos(st.psi) * ((xi - 1.0) / r3 + 1.0 / r3d), rel=1e-13)
    assert a_n == pytest.approx(
        st.r_par * math.sin(st.psi) * (2.0 * (1.0 - xi) / r3 - 1.0 / r3d),
        rel=1e-13)


def test_close_polynomial_trivial_zero():
    poly = close_polynomial(0.0, 0.0, 0.0, mk_state())
    assert poly.c == (0.0, 0.0, 0.0, 0.0, 0.0)


def test_close_polynomial_offset_start():
    st = mk_state(rz=0.1, vz=0.0)
    poly = close_polynomial(0.0, 0.0, 0.0, st)
    assert poly.c[0] == pytest.approx(0.1)
    assert poly.c[1] == pytest.approx(0.0)


def test_close_polynomial_generic_boundary_reproduction():
    st = SpiralState(r_par=1.3, theta=1.5, v_par=0.85, psi=1.05,
                     r_z=0.07, v_z=-0.012)
    poly = close_polynomial(0.3, -0.05, 0.004, st)
    assert poly.position(st.theta) == pytest.approx(st.r_z, abs=1e-12)
    assert poly.velocity(st) == pytest.approx(st.v_z, abs=1e-12)


def test_out_of_plane_accel_zero_cases():
    st = mk_state(r=1.2, v=0.9, psi=1.3)
    p = spiral_constants(st, xi=0.4)
    assert out_of_plane_accel(st, OutOfPlanePoly.zero(), p) == 0.0
    # constant offset: only the gravity-compensation term survives
    st2 = mk_state(r=1.2, v=0.9, psi=1.3, rz=0.2)
    poly = OutOfPlanePoly((0.2, 0.0, 0.0, 0.0, 0.0))
    expected = 0.2 / (1.2**2 + 0.2**2) ** 1.5
    assert out_of_plane_accel(st2, poly, p) == pytest.approx(expected, rel=1e-13)


def test_out_of_plane_accel_matches_finite_difference():
    """a_pz == d v_z/dt + mu r_z / r^3 along the trajectory."""
    xi = 0.25
    st0 = mk_state(r=1.0, v=0.95, psi=1.25, rz=0.02, vz=0.01)
    poly = close_polynomial(0.05, -0.01, 0.002, st0)
    p = spiral_constants(st0, xi)
    theta_probe = 0.8
    st = propagate_planar(st0, xi, theta_probe, poly=poly)
    apz = out_of_plane_accel(st, poly, p)

    h = 1e-6  # polar-angle step for the centered difference in time
    stm = propagate_planar(st0, xi, theta_probe - h, poly=poly)
    stp = propagate_planar(st0, xi, theta_probe + h, poly=poly)
    dvz_dt = (stp.v_z - stm.v_z) / (stp.t - stm.t)
    r3 = (st.r_par**2 + st.r_z**2) ** 1.5
    assert apz == pytest.approx(dvz_dt + st.r_z / r3, rel=1e-5)


# ---------------------------------------------------------------------------
# impulse integral
# ---------------------------------------------------------------------------
def mk_arc(dtheta=2.0, xi=0.1, poly=None, state=None):
    st = state or mk_state(r=1.0, v=0.9, psi=1.2)
    p = spiral_constants(st, xi)
    return SpiralArc(params=p, poly=poly or OutOfPlanePoly.zero(),
                     theta_start=st.theta, theta_end=st.theta + dtheta,
                     state0=st)


def test_arc_delta_v_zero_length():
    assert arc_delta_v(mk_arc(dtheta=0.0)) == 0.0


def test_arc_delta_v_against_trapezoid_oracle():
    arc = mk_arc(dtheta=2.0, xi=0.1)
    dv = arc_delta_v(arc)
    # brute-force trapezoid quadrature of |a| dt on a dense uniform grid
    rows = sample_arc(arc, n=20001)
    a_mag = np.hypot(rows[:, 7], rows[:, 8])
    dv_ref = np.trapezoid(a_mag, rows[:, 1])
    assert dv == pytest.approx(dv_ref, rel=1e-6)


def test_arc_delta_v_additive_over_subdivision():
    xi = 0.15
    st = mk_state(r=1.0, v=0.92, psi=1.3)
    poly = close_polynomial(0.02, -0.005, 0.0008, st)
    full = mk_arc(dtheta=2.4, xi=xi, poly=poly, state=st)
    dv_full = arc_delta_v(full)
    mid_state = propagate_planar(st, xi, 1.1, poly=poly)
    a1 = mk_arc(dtheta=1.1, xi=xi, poly=poly, state=st)
    a2 = SpiralArc(params=full.params, poly=poly, theta_start=1.1,
                   theta_end=2.4, state0=mid_state)
    assert dv_full == pytest.approx(arc_delta_v(a1) + arc_delta_v(a2),
                                    rel=1e-8, abs=1e-12)


def test_planar_arc_reduces_to_in_plane_integral():
    arc = mk_arc(dtheta=1.8, xi=0.2)
    rows = sample_arc(arc, n=1501)
    assert np.all(rows[:, 8] == 0.0)          # a_pz identically zero
    dv_inplane = np.trapezoid(np.abs(rows[:, 7]), rows[:, 1])
    assert arc_delta_v(arc) == pytest.approx(dv_inplane, rel=1e-6)


# ---------------------------------------------------------------------------
# rocket equation
# ---------------------------------------------------------------------------
def test_propellant_fraction_basics():
    assert propellant_fraction(0.0, 3000.0) == 0.0
    dv_half = 3000.0 * 9.81 * math.log(2.0) / 1000.0
    assert propellant_fraction(dv_half, 3000.0) == pytest.approx(0.5, rel=1e-12)


def test_propellant_fraction_reference_mission_value():
    frac = propellant_fraction(8.62, 3000.0)
    assert frac == pytest.approx(0.254, abs=5e-4)
    assert abs(frac - 0.253) < 2e-3


def test_csv_export(tmp_path):
    arc = mk_arc(dtheta=1.0)
    path = tmp_path / "arc.csv"
    spirals.arc_to_csv(arc, path, n=50)
    text = path.read_text().splitlines()
    assert text[0].split(",") == list(spirals.SAMPLE_COLUMNS)
    assert len(text) == 51

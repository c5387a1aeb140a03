import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from spiralmga import bodies
from spiralmga.bodies import (BodySpec, EpochError, KeplerianElements,
                              StateVector, body_state, elements_from_state,
                              get_body, load_catalog, propagate_kepler,
                              save_catalog)


def circular_test_body():
    return BodySpec(name="circ", mu=1.0, radius=1.0, h_min=0.0,
                    elements=KeplerianElements(
                        a=1.0, e=0.0, i=0.0, raan=0.0, argp=0.0, m0=0.0,
                        m0_dot=bodies._mean_motion_per_century(1.0)))


def test_circular_body_at_epoch_zero():
    st = body_state(circular_test_body(), 0.0)
    assert np.allclose(st.r, [1.0, 0.0, 0.0], atol=1e-12)
    assert abs(st.v @ st.r) < 1e-12          # tangential
    assert abs(np.linalg.norm(st.v) - 1.0) < 1e-12


def test_circular_body_quarter_period():
    from spiralmga.units import TU_DAYS
    quarter = 0.5 * math.pi * TU_DAYS
    st = body_state(circular_test_body(), quarter)
    assert np.allclose(st.r, [0.0, 1.0, 0.0], atol=1e-9)


def test_earth_radius_range_at_j2000():
    st = body_state(get_body("earth"), 0.0)
    assert 0.983 - 1e-3 <= np.linalg.norm(st.r) <= 1.017 + 1e-3


def test_epoch_outside_window():
    with pytest.raises(EpochError):
        body_state(get_body("earth"), 1e6)


def test_propagate_half_period_circular():
    st = StateVector(r=np.array([1.0, 0.0, 0.0]), v=np.array([0.0, 1.0, 0.0]),
                     epoch=0.0)
    out = propagate_kepler(st, math.pi)
    assert np.allclose(out.r, [-1.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(out.v, [0.0, -1.0, 0.0], atol=1e-12)


def test_propagate_zero_dt_identity():
    st = StateVector(r=np.array([0.8, 0.3, 0.1]), v=np.array([-0.2, 1.0, 0.05]),
                     epoch=5.0)
    out = propagate_kepler(st, 0.0)
    assert np.array_equal(out.r, st.r)
    assert np.array_equal(out.v, st.v)


def _two_body_rhs(t, y):
    r = y[:3]
    rn = np.linalg.norm(r)
    return np.concatenate([y[3:], -r / rn**3])


def test_propagate_full_period_matches_integration_oracle():
    r0 = np.array([1.1, -0.2, 0.05])
    v0 = np.array([0.15, 0.95, -0.03])
    st = StateVector(r=r0, v=v0, epoch=0.0)
    energy = v0 @ v0 / 2.0 - 1.0 / np.linalg.norm(r0)
    a = -1.0 / (2.0 * energy)
    period = 2.0 * math.pi * a**1.5
    out = propagate_kepler(st, period)
    assert np.linalg.norm(out.r - r0) < 1e-9
    assert np.linalg.norm(out.v - v0) < 1e-9
    # independent high-order oracle over a partial arc
    sol = solve_ivp(_two_body_rhs, (0.0, 0.37 * period),
                    np.concatenate([r0, v0]), method="DOP853",
                    rtol=1e-12, atol=1e-14)
    mid = propagate_kepler(st, 0.37 * period)
    assert np.linalg.norm(mid.r - sol.y[:3, -1]) < 1e-8
    assert np.linalg.norm(mid.v - sol.y[3:, -1]) < 1e-8


def test_propagate_hyperbolic():
    r0 = np.array([1.0, 0.0, 0.0])
    v0 = np.array([0.3, 1.5, 0.2])      # v^2 > 2/r: hyperbolic
    st = StateVector(r=r0, v=v0, epoch=0.0)
    out = propagate_kepler(st, 4.0)
    e0 = v0 @ v0 / 2.0 - 1.0
    e1 = out.v @ out.v / 2.0 - 1.0 / np.linalg.norm(out.r)
    assert abs(e1 - e0) < 1e-12 * abs(e0)
    back = propagate_kepler(out, -4.0)
    assert np.linalg.norm(back.r - r0) < 1e-10


def test_propagate_conserves_energy_and_momentum():
    rng = np.random.default_rng(7)
    for _ in range(25):
        r0 = rng.uniform(0.5, 3.0, 3)
        v0 = rng.uniform(-0.8, 0.8, 3)
        rn = np.linalg.norm(r0)
        if v0 @ v0 / 2.0 - 1.0 / rn > -0.02:   # keep it clearly bound
            v0 *= 0.5
        st = StateVector(r=r0, v=v0, epoch=0.0)
        out = propagate_kepler(st, 2.5)
        e0 = v0 @ v0 / 2.0 - 1.0 / rn
        e1 = out.v @ out.v / 2.0 - 1.0 / np.linalg.norm(out.r)
        h0 = np.cross(r0, v0)
        h1 = np.cross(out.r, out.v)
        assert abs(e1 - e0) <= 1e-10 * max(1.0, abs(e0))
        assert np.linalg.norm(h1 - h0) <= 1e-10 * np.linalg.norm(h0)
        back = propagate_kepler(out, -2.5)
        assert np.linalg.norm(back.r - r0) < 1e-9
        assert np.linalg.norm(back.v - v0) < 1e-9


def test_body_state_roundtrip_through_elements():
    for name in ("earth", "mars", "ceres", "venus"):
        body = get_body(name)
        st = body_state(body, 1234.5)
        el = elements_from_state(st.r, st.v)
        # rebuild the state from the extracted osculating elements
        probe = BodySpec(name="probe", mu=1.0, radius=1.0, h_min=0.0,
                         elements=el)
        st2 = bodies.body_state(probe, 0.0)
        assert np.linalg.norm(st2.r - st.r) < 1e-10
        assert np.linalg.norm(st2.v - st.v) < 1e-10


def test_catalog_file_roundtrip(tmp_path):
    path = tmp_path / "catalog.txt"
    save_catalog(bodies.DEFAULT_CATALOG, path)
    cat = load_catalog(path, include_defaults=False)
    assert set(cat) == set(bodies.DEFAULT_CATALOG)
    for key, body in bodies.DEFAULT_CATALOG.items():
        st0 = body_state(body, 777.0)
        st1 = body_state(cat[key], 777.0)
        assert np.linalg.norm(st0.r - st1.r) < 1e-12
        assert body.mu == cat[key].mu


def test_mars_state_sanity():
    st = body_state(get_body("mars"), 1500.0)
    assert 1.38 - 0.01 <= np.linalg.norm(st.r) <= 1.67 + 0.01
    # prograde, low-inclination
    h = np.cross(st.r, st.v)
    assert h[2] > 0.9 * np.linalg.norm(h)

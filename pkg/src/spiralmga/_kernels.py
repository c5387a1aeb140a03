"""Jit-compiled numerical kernels.

Everything in this module works in sun-canonical units (mu = 1, lengths in
au, time in TU) on plain float64 scalars/arrays so numba can compile it.
The public modules wrap these kernels with friendlier types; tests verify
them against independent scipy-based oracles.

Layout conventions used by the leg-evaluation kernel are documented next
to ``leg_spec_size`` below.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# status codes shared by the propagation kernels
# ---------------------------------------------------------------------------
OK = 0
SINGULAR = 1          # flight-path angle collapsed toward 0 or pi
BLOWUP = 2            # radius/speed left the trusted domain
MAXSTEPS = 3
RETROGRADE = 4
NO_CONVERGENCE = 5

CENTURY_DAYS = 36525.0


# ---------------------------------------------------------------------------
# Kepler machinery
# ---------------------------------------------------------------------------
@njit(cache=True, error_model="numpy")
def kepler_E(mean_anom: float, ecc: float) -> float:
    """Solve E - e sin E = M by Newton iteration (rad)."""
    m = mean_anom % (2.0 * math.pi)
    if m > math.pi:
        m -= 2.0 * math.pi
    # Danby-style starter
    s = 1.0 if math.sin(m) >= 0.0 else -1.0
    e_anom = m + 0.85 * ecc * s
    for _ in range(50):
        f = e_anom - ecc * math.sin(e_anom) - m
        if abs(f) < 1e-13:
            break
        fp = 1.0 - ecc * math.cos(e_anom)
        e_anom -= f / fp
    return e_anom


@njit(cache=True, error_model="numpy")
def elements_state(pack, t_tu, out):
    """Heliocentric state from a 12-number mean-element pack.

    pack = [a, e, i, raan, argp, M0, da, de, di, draan, dargp, dM]
    with angles in rad, rates per Julian century, epoch J2000.
    ``out`` receives [x, y, z, vx, vy, vz] in canonical units.
    """
    cy = t_tu * _TU_DAYS[0] / CENTURY_DAYS
    a = pack[0] + pack[6] * cy
    e = pack[1] + pack[7] * cy
    inc = pack[2] + pack[8] * cy
    raan = pack[3] + pack[9] * cy
    argp = pack[4] + pack[10] * cy
    m_anom = pack[5] + pack[11] * cy

    e_anom = kepler_E(m_anom, e)
    ce = math.cos(e_anom)
    se = math.sin(e_anom)
    r = a * (1.0 - e * ce)
    sq1e2 = math.sqrt(1.0 - e * e)
    xp = a * (ce - e)
    yp = a * sq1e2 * se
    # mu = 1
    vxp = -math.sqrt(a) * se / r
    vyp = math.sqrt(a) * sq1e2 * ce / r

    co, so = math.cos(raan), math.sin(raan)
    cw, sw = math.cos(argp), math.sin(argp)
    ci, si = math.cos(inc), math.sin(inc)

    r11 = co * cw - so * sw * ci
    r12 = -co * sw - so * cw * ci
    r21 = so * cw + co * sw * ci
    r22 = -so * sw + co * cw * ci
    r31 = sw * si
    r32 = cw * si

    out[0] = r11 * xp + r12 * yp
    out[1] = r21 * xp + r22 * yp
    out[2] = r31 * xp + r32 * yp
    out[3] = r11 * vxp + r12 * vyp
    out[4] = r21 * vxp + r22 * vyp
    out[5] = r31 * vxp + r32 * vyp


# TU expressed in days, stored in an array so the jitted code can read a
# module-level value without recompilation tricks.
_TU_DAYS = np.array([58.13244087172358])


def set_tu_days(value: float) -> None:
    _TU_DAYS[0] = value


@njit(cache=True, error_model="numpy")
def stumpff(z: float):
    if z > 1e-8:
        sz = math.sqrt(z)
        c2 = (1.0 - math.cos(sz)) / z
        c3 = (sz - math.sin(sz)) / (sz * z)
    elif z < -1e-8:
        sz = math.sqrt(-z)
        c2 = (1.0 - math.cosh(sz)) / z
        c3 = (math.sinh(sz) - sz) / (-z * sz)
    else:
        c2 = 0.5 - z / 24.0 + z * z / 720.0
        c3 = 1.0 / 6.0 - z / 120.0 + z * z / 5040.0
    return c2, c3


@njit(cache=True, error_model="numpy")
def kepler_propagate(state, dt: float, mu: float, out) -> int:
    """Universal-variable two-body propagation by ``dt`` (canonical).

    ``state``/``out``: [x, y, z, vx, vy, vz].  Returns a status code.
    """
    x, y, z = state[0], state[1], state[2]
    vx, vy, vz = state[3], state[4], state[5]
    if dt == 0.0:
        for i in range(6):
            out[i] = state[i]
        return OK
    r0 = math.sqrt(x * x + y * y + z * z)
    v02 = vx * vx + vy * vy + vz * vz
    if r0 < 1e-12:
        return BLOWUP
    rdotv = x * vx + y * vy + z * vz
    sqmu = math.sqrt(mu)
    alpha = 2.0 / r0 - v02 / mu

    if alpha > 1e-8:
        chi = sqmu * dt * alpha
    elif alpha < -1e-8:
        a = 1.0 / alpha
        sgn = 1.0 if dt > 0.0 else -1.0
        num = -2.0 * mu * alpha * dt
        den = rdotv + sgn * math.sqrt(-mu * a) * (1.0 - r0 * alpha)
        if abs(den) < 1e-300:
            chi = sgn * sqmu * abs(dt) / r0
        else:
            arg = num / den
            if arg <= 0.0:
                chi = sgn * sqmu * abs(dt) / r0
            else:
                chi = sgn * math.sqrt(-a) * math.log(arg)
    else:
        chi = sqmu * dt / r0

    r_uv = r0
    ok = False
    for _ in range(80):
        zz = chi * chi * alpha
        c2, c3 = stumpff(zz)
        r_uv = (chi * chi * c2 + rdotv / sqmu * chi * (1.0 - zz * c3)
                + r0 * (1.0 - zz * c2))
        if r_uv < 1e-14:
            r_uv = 1e-14
        f_res = (sqmu * dt - chi * chi * chi * c3
                 - rdotv / sqmu * chi * chi * c2
                 - r0 * chi * (1.0 - zz * c3))
        dchi = f_res / r_uv
        chi += dchi
        if abs(dchi) < 1e-13 * (1.0 + abs(chi)):
            ok = True
            break
    if not ok:
        return NO_CONVERGENCE

    zz = chi * chi * alpha
    c2, c3 = stumpff(zz)
    f = 1.0 - chi * chi * c2 / r0
    g = dt - chi * chi * chi * c3 / sqmu
    r_uv = (chi * chi * c2 + rdotv / sqmu * chi * (1.0 - zz * c3)
            + r0 * (1.0 - zz * c2))
    fdot = sqmu / (r_uv * r0) * chi * (zz * c3 - 1.0)
    gdot = 1.0 - chi * chi * c2 / r_uv

    out[0] = f * x + g * vx
    out[1] = f * y + g * vy
    out[2] = f * z + g * vz
    out[3] = fdot * x + gdot * vx
    out[4] = fdot * y + gdot * vy
    out[5] = fdot * z + gdot * vz
    return OK


@njit(cache=True, error_model="numpy")
def coast_to_sweep(state, dphi: float, mu: float, out):
    """Propagate a ballistic arc until its ecliptic-projected polar angle
    has swept ``dphi`` (rad, >= 0).  Returns (status, elapsed_time).

    The projected angular rate is h_z / r_par^2 with constant h_z, so the
    sweep is a monotone function of time for prograde motion and a damped
    Newton iteration on time converges quickly.
    """
    hz = state[0] * state[4] - state[1] * state[3]
    if hz <= 1e-12:
        return RETROGRADE, 0.0
    cur = np.empty(6)
    nxt = np.empty(6)
    for i in range(6):
        cur[i] = state[i]
    t = 0.0
    swept = 0.0
    if dphi == 0.0:
        for i in range(6):
            out[i] = cur[i]
        return OK, 0.0
    for _ in range(400):
        remaining = dphi - swept
        if abs(remaining) < 5e-14 * (1.0 + dphi):
            break
        rpar2 = cur[0] * cur[0] + cur[1] * cur[1]
        rate = hz / rpar2
        step = remaining / rate
        # keep each sub-step's sweep below ~0.7 rad so the atan2 increment
        # below cannot wrap
        max_sweep = 0.7
        est = abs(remaining)
        if est > max_sweep:
            step = step * (max_sweep / est)
        st = kepler_propagate(cur, step, mu, nxt)
        if st != OK:
            return st, t
        d = math.atan2(cur[0] * nxt[1] - cur[1] * nxt[0],
                       cur[0] * nxt[0] + cur[1] * nxt[1])
        swept += d
        t += step
        for i in range(6):
            cur[i] = nxt[i]
    else:
        return NO_CONVERGENCE, t
    for i in range(6):
        out[i] = cur[i]
    return OK, t


@njit(cache=True, error_model="numpy")
def coast_time_tracksweep(state, dt: float, mu: float, out):
    """Ballistic propagation by ``dt`` that accumulates the swept polar
    angle (sub-steps keep each increment below the atan2 wrap)."""
    cur = np.empty(6)
    nxt = np.empty(6)
    for i in range(6):
        cur[i] = state[i]
    if dt == 0.0:
        for i in range(6):
            out[i] = cur[i]
        return OK, 0.0
    hz = state[0] * state[4] - state[1] * state[3]
    if hz <= 1e-12:
        return RETROGRADE, 0.0
    remaining = dt
    swept = 0.0
    for _ in range(500):
        if remaining == 0.0:
            break
        rpar2 = cur[0] * cur[0] + cur[1] * cur[1]
        rate = hz / rpar2
        step = remaining
        max_dt = 0.5 / rate
        if abs(step) > max_dt:
            step = max_dt if step > 0.0 else -max_dt
        st = kepler_propagate(cur, step, mu, nxt)
        if st != OK:
            return st, swept
        swept += math.atan2(cur[0] * nxt[1] - cur[1] * nxt[0],
                            cur[0] * nxt[0] + cur[1] * nxt[1])
        remaining -= step
        for i in range(6):
            cur[i] = nxt[i]
    else:
        return NO_CONVERGENCE, swept
    for i in range(6):
        out[i] = cur[i]
    return OK, swept


# ---------------------------------------------------------------------------
# Generalized-spiral planar propagation (polar angle as the independent
# variable) with the out-of-plane polynomial riding along for the total
# thrust-impulse integral.
# ---------------------------------------------------------------------------
@njit(cache=True, inline="always", error_model="numpy")
def _poly_eval(c, th):
    rz = c[0] + th * (c[1] + th * (c[2] + th * (c[3] + th * c[4])))
    s1 = c[1] + th * (2.0 * c[2] + th * (3.0 * c[3] + th * 4.0 * c[4]))
    s2 = 2.0 * c[2] + th * (6.0 * c[3] + th * 12.0 * c[4])
    return rz, s1, s2


@njit(cache=True, inline="always", error_model="numpy")
def accel_components(r, v, psi, th, xi, mu, c, k1):
    """Thrust acceleration components (tangential, normal, out-of-plane)
    for a spiral state with the polynomial out-of-plane law ``c``."""
    sp = math.sin(psi)
    cp = math.cos(psi)
    rz, s1, s2 = _poly_eval(c, th)
    r2 = r * r
    r3 = r2 * r
    r3d2 = r2 + rz * rz
    r3d3 = r3d2 * math.sqrt(r3d2)
    a_t = mu * r * cp * ((xi - 1.0) / r3 + 1.0 / r3d3)
    a_n = mu * r * sp * (2.0 * (1.0 - xi) / r3 - 1.0 / r3d3)
    tana = sp / r * s1
    dtana = v * sp * sp / r2 * s2 - sp * cp * (k1 + v * v) / (v * r2) * s1
    apz = mu * (xi - 1.0) / r2 * tana * cp + v * dtana + mu * rz / r3d3
    return a_t, a_n, apz


@njit(cache=True, inline="always", error_model="numpy")
def _spiral_f(th, y, xi, mu, c, k1, f):
    r = y[0]
    v = y[1]
    psi = y[2]
    sp = math.sin(psi)
    cp = math.cos(psi)
    rv2 = r * v * v
    f[0] = r * cp / sp
    f[1] = mu * (xi - 1.0) * cp / (r * v * sp)
    f[2] = (2.0 * mu * (1.0 - xi) - rv2) / (rv2)
    dt = r / (v * sp)
    f[3] = dt
    a_t, a_n, apz = accel_components(r, v, psi, th, xi, mu, c, k1)
    f[4] = math.sqrt(a_t * a_t + a_n * a_n + apz * apz) * dt


@njit(cache=True, error_model="numpy")
def spiral_propagate(y0, th0: float, th1: float, xi: float, mu: float,
                     c, rtol: float, y_out) -> int:
    """Adaptive Dormand-Prince 5(4) integration of the planar-spiral states
    (r, v, psi, t, dv) from polar angle th0 to th1.

    y0/y_out: length-5 arrays.  ``c`` is the out-of-plane polynomial used
    only for the thrust-impulse state dv.  Returns a status code.
    """
    span = th1 - th0
    y = np.empty(5)
    for i in range(5):
        y[i] = y0[i]
    if span == 0.0:
        for i in range(5):
            y_out[i] = y[i]
        return OK

    k1c = y[1] * y[1] - 2.0 * mu * (1.0 - xi) / y[0]

    atol = 1e-13
    sgn = 1.0 if span > 0.0 else -1.0
    h = sgn * min(0.05, 0.2 * abs(span))
    th = th0

    k1 = np.empty(5)
    k2 = np.empty(5)
    k3 = np.empty(5)
    k4 = np.empty(5)
    k5 = np.empty(5)
    k6 = np.empty(5)
    k7 = np.empty(5)
    yt = np.empty(5)
    y5 = np.empty(5)

    if y[2] < 1e-9 or y[2] > math.pi - 1e-9:
        return SINGULAR
    _spiral_f(th, y, xi, mu, c, k1c, k1)
    have_k1 = True

    for _ in range(100000):
        if (th - th1) * sgn >= -1e-15 * (1.0 + abs(th1)):
            break
        if (th + h - th1) * sgn > 0.0:
            h = th1 - th
        if not have_k1:
            _spiral_f(th, y, xi, mu, c, k1c, k1)
            have_k1 = True

        # Dormand-Prince 5(4) tableau
        for i in range(5):
            yt[i] = y[i] + h * 0.2 * k1[i]
        if yt[2] < 1e-9 or yt[2] > math.pi - 1e-9 or yt[0] < 1e-9 or yt[1] < 1e-9:
            h *= 0.5
            if abs(h) < 1e-14:
                return SINGULAR
            continue
        _spiral_f(th + 0.2 * h, yt, xi, mu, c, k1c, k2)

        for i in range(5):
            yt[i] = y[i] + h * (3.0 / 40.0 * k1[i] + 9.0 / 40.0 * k2[i])
        if yt[2] < 1e-9 or yt[2] > math.pi - 1e-9 or yt[0] < 1e-9 or yt[1] < 1e-9:
            h *= 0.5
            if abs(h) < 1e-14:
                return SINGULAR
            continue
        _spiral_f(th + 0.3 * h, yt, xi, mu, c, k1c, k3)

        for i in range(5):
            yt[i] = y[i] + h * (44.0 / 45.0 * k1[i] - 56.0 / 15.0 * k2[i]
                                + 32.0 / 9.0 * k3[i])
        if yt[2] < 1e-9 or yt[2] > math.pi - 1e-9 or yt[0] < 1e-9 or yt[1] < 1e-9:
            h *= 0.5
            if abs(h) < 1e-14:
                return SINGULAR
            continue
        _spiral_f(th + 0.8 * h, yt, xi, mu, c, k1c, k4)

        for i in range(5):
            yt[i] = y[i] + h * (19372.0 / 6561.0 * k1[i]
                                - 25360.0 / 2187.0 * k2[i]
                                + 64448.0 / 6561.0 * k3[i]
                                - 212.0 / 729.0 * k4[i])
        if yt[2] < 1e-9 or yt[2] > math.pi - 1e-9 or yt[0] < 1e-9 or yt[1] < 1e-9:
            h *= 0.5
            if abs(h) < 1e-14:
                return SINGULAR
            continue
        _spiral_f(th + 8.0 / 9.0 * h, yt, xi, mu, c, k1c, k5)

        for i in range(5):
            yt[i] = y[i] + h * (9017.0 / 3168.0 * k1[i] - 355.0 / 33.0 * k2[i]
                                + 46732.0 / 5247.0 * k3[i] + 49.0 / 176.0 * k4[i]
                                - 5103.0 / 18656.0 * k5[i])
        if yt[2] < 1e-9 or yt[2] > math.pi - 1e-9 or yt[0] < 1e-9 or yt[1] < 1e-9:
            h *= 0.5
            if abs(h) < 1e-14:
                return SINGULAR
            continue
        _spiral_f(th + h, yt, xi, mu, c, k1c, k6)

        for i in range(5):
            y5[i] = y[i] + h * (35.0 / 384.0 * k1[i] + 500.0 / 1113.0 * k3[i]
                                + 125.0 / 192.0 * k4[i]
                                - 2187.0 / 6784.0 * k5[i] + 11.0 / 84.0 * k6[i])
        if y5[2] < 1e-9 or y5[2] > math.pi - 1e-9 or y5[0] < 1e-9 or y5[1] < 1e-9:
            h *= 0.5
            if abs(h) < 1e-14:
                return SINGULAR
            continue
        _spiral_f(th + h, y5, xi, mu, c, k1c, k7)

        # embedded 4th-order error estimate
        err = 0.0
        for i in range(5):
            e4 = (5179.0 / 57600.0 * k1[i] + 7571.0 / 16695.0 * k3[i]
                  + 393.0 / 640.0 * k4[i] - 92097.0 / 339200.0 * k5[i]
                  + 187.0 / 2100.0 * k6[i] + 1.0 / 40.0 * k7[i])
            diff = h * (35.0 / 384.0 * k1[i] + 500.0 / 1113.0 * k3[i]
                        + 125.0 / 192.0 * k4[i] - 2187.0 / 6784.0 * k5[i]
                        + 11.0 / 84.0 * k6[i] - e4)
            sc = atol + rtol * max(abs(y[i]), abs(y5[i]))
            w = diff / sc
            err += w * w
        err = math.sqrt(err / 5.0)

        if err <= 1.0:
            th += h
            for i in range(5):
                y[i] = y5[i]
                k1[i] = k7[i]
            have_k1 = True
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= fac
        else:
            have_k1 = True  # k1 still valid at unchanged (th, y)
            h *= max(0.2, 0.9 * err ** -0.2)
            if abs(h) < 1e-14:
                return SINGULAR
    else:
        return MAXSTEPS

    for i in range(5):
        y_out[i] = y[i]
    return OK


# ---------------------------------------------------------------------------
# leg evaluation
# ---------------------------------------------------------------------------
# Spec pack layout (see search.py for construction):
#   [0]  event-1 kind: 1.0 launch, 0.0 flyby
#   [1]  event-2 kind: 1.0 rendezvous, 0.0 flyby
#   [2]  fixed departure time t0 (TU past J2000; flyby-start legs)
#   [3:6]   incoming heliocentric velocity (flyby-start legs)
#   [6]  reference total sweep angle (rad) for revolution-branch selection
#   [7]  time-residual scale (TU)
#   [8]  flyby-body gravitational parameter (canonical; flyby-start legs)
#   [9]  minimum flyby pericenter radius (au; flyby-start legs)
#   [10:22] departure-body element pack (12)
#   [22:34] arrival-body element pack (12)
LEG_SPEC_SIZE = 34

# Decision-vector layouts (solver sees the same ordering):
#   launch legs:      [t0, vinf, psi_l, eta, T, ...]
#   flyby-start legs: [T, delta, zeta, ...]
#   full tail:        xi1, (xi2), fA, (fB), c2a, c3a, c4a, (c2b, c3b, c4b)
#   reduced tail:     xi1, (xi2), fA, (fB), (c4b)
# In the reduced mode the first-spiral coefficients come from the
# three-point zero out-of-plane-acceleration conditions (an almost-linear
# 3x3 system solved by fixed-point iteration on the gravity term) and
# (c2b, c3b) from the exactly-linear terminal out-of-plane match.
N_EQ_FLYBY = 6
N_EQ_RENDEZVOUS = 9
N_EQ_FLYBY_RED = 3
N_EQ_RENDEZVOUS_RED = 4

_FAIL_RES = 1.0e3


@njit(cache=True, error_model="numpy")
def _state_to_spiral(x, y, z, vx, vy, vz):
    rpar = math.sqrt(x * x + y * y)
    phi = math.atan2(y, x)
    vpar = math.sqrt(vx * vx + vy * vy)
    hz = x * vy - y * vx
    rdv = x * vx + y * vy
    psi = math.atan2(hz, rdv)
    return rpar, phi, vpar, psi


@njit(cache=True, error_model="numpy")
def spiral_propagate_until_time(y0, th0: float, t_target: float, xi: float,
                                mu: float, c, rtol: float, y_out):
    """Propagate the spiral until the elapsed-time state reaches
    ``t_target`` (forward or backward in polar angle as needed).

    Returns (status, theta_end).  Elapsed time is strictly monotone in the
    polar angle, so the crossing is located by bisecting the final step.
    """
    y = np.empty(5)
    for i in range(5):
        y[i] = y0[i]
    if t_target == y[3]:
        for i in range(5):
            y_out[i] = y[i]
        return OK, th0
    sgn = 1.0 if t_target > y[3] else -1.0
    th = th0
    yt = np.empty(5)
    # angle step that roughly covers the remaining time
    for _ in range(10000):
        rate = y[0] / (y[1] * math.sin(y[2]))      # dt/dtheta > 0
        remaining = t_target - y[3]
        if abs(remaining) < 1e-12 * (1.0 + abs(t_target)):
            break
        dth = remaining / rate
        if abs(dth) > 0.5:
            dth = 0.5 * sgn
        st = spiral_propagate(y, th, th + dth, xi, mu, c, rtol, yt)
        if st != OK:
            return st, th
        overshoot = (yt[3] - t_target) * sgn > 0.0
        if overshoot:
            # bisect this step on the angle
            lo_th = 0.0
            hi_th = dth
            for _ in range(60):
                mid = 0.5 * (lo_th + hi_th)
                st = spiral_propagate(y, th, th + mid, xi, mu, c, rtol, yt)
                if st != OK:
                    return st, th
                if (yt[3] - t_target) * sgn > 0.0:
                    hi_th = mid
                else:
                    lo_th = mid
                if abs(yt[3] - t_target) < 1e-13 * (1.0 + abs(t_target)):
                    break
            th = th + 0.5 * (lo_th + hi_th)
            for i in range(5):
                y[i] = yt[i]
            break
        th = th + dth
        for i in range(5):
            y[i] = yt[i]
    else:
        return MAXSTEPS, th
    for i in range(5):
        y_out[i] = y[i]
    return OK, th


@njit(cache=True, error_model="numpy", inline="always")
def _apz_affine(r, v, psi, th, xi, mu, k1, c):
    """a_pz as an affine map of (c2, c3, c4): returns (m2, m3, m4, b) with
    the gravity denominator frozen at the current coefficients."""
    sp = math.sin(psi)
    cp = math.cos(psi)
    r2 = r * r
    coef_s1 = sp / r2 * (mu * (xi - 1.0) * cp / r - cp * (k1 + v * v))
    coef_s2 = v * v * sp * sp / r2
    rz, _s1, _s2 = _poly_eval(c, th)
    r3d2 = r2 + rz * rz
    cg = mu / (r3d2 * math.sqrt(r3d2))
    th2 = th * th
    m2 = coef_s1 * 2.0 * th + coef_s2 * 2.0 + cg * th2
    m3 = coef_s1 * 3.0 * th2 + coef_s2 * 6.0 * th + cg * th2 * th
    m4 = coef_s1 * 4.0 * th2 * th + coef_s2 * 12.0 * th2 + cg * th2 * th2
    b = coef_s1 * c[1] + cg * (c[0] + c[1] * th)
    return m2, m3, m4, b


@njit(cache=True, error_model="numpy")
def _solve_first_coeffs(pts, th_a, xi, mu, k1, c) -> int:
    """Fix (c2, c3, c4) so the out-of-plane thrust acceleration vanishes at
    the start, middle and end of the first spiral.  ``pts`` is (3, 3) of
    (r, v, psi) at angles (0, th_a/2, th_a); c[0], c[1] must be set.

    The system is linear except for the gravity term's 1/r^3, handled by a
    few frozen-denominator iterations.  A vanishing arc leaves c2..c4 = 0.
    """
    if th_a < 1e-8:
        c[2] = 0.0
        c[3] = 0.0
        c[4] = 0.0
        return OK
    ths = (0.0, 0.5 * th_a, th_a)
    for _ in range(8):
        a00, a01, a02, b0 = _apz_affine(pts[0, 0], pts[0, 1], pts[0, 2],
                                        ths[0], xi, mu, k1, c)
        a10, a11, a12, b1 = _apz_affine(pts[1, 0], pts[1, 1], pts[1, 2],
                                        ths[1], xi, mu, k1, c)
        a20, a21, a22, b2 = _apz_affine(pts[2, 0], pts[2, 1], pts[2, 2],
                                        ths[2], xi, mu, k1, c)
        det = (a00 * (a11 * a22 - a12 * a21)
               - a01 * (a10 * a22 - a12 * a20)
               + a02 * (a10 * a21 - a11 * a20))
        if abs(det) < 1e-200 or not math.isfinite(det):
            return SINGULAR
        r0, r1, r2 = -b0, -b1, -b2
        c2 = (r0 * (a11 * a22 - a12 * a21)
              - a01 * (r1 * a22 - a12 * r2)
              + a02 * (r1 * a21 - a11 * r2)) / det
        c3 = (a00 * (r1 * a22 - a12 * r2)
              - r0 * (a10 * a22 - a12 * a20)
              + a02 * (a10 * r2 - r1 * a20)) / det
        c4 = (a00 * (a11 * r2 - r1 * a21)
              - a01 * (a10 * r2 - r1 * a20)
              + r0 * (a10 * a21 - a11 * a20)) / det
        dmax = max(abs(c2 - c[2]), abs(c3 - c[3]), abs(c4 - c[4]))
        c[2] = c2
        c[3] = c3
        c[4] = c4
        if dmax < 1e-13 * (1.0 + abs(c2) + abs(c3) + abs(c4)):
            break
    return OK


@njit(cache=True, error_model="numpy")
def eval_leg(zvec, spec, eq_out, in_out, extras, reduced) -> float:
    """Evaluate one interplanetary leg.

    Fills equality residuals ``eq_out``, inequality residuals ``in_out``
    (<= 0 means satisfied) and ``extras``:

      extras[0]  status (0 ok)
      extras[1]  thrust impulse dv (canonical)
      extras[2]  achieved departure epoch t0 (TU)
      extras[3]  achieved leg duration T (TU)
      extras[4:10] heliocentric terminal state (position, velocity)
      extras[10] first-arc dv
      extras[11] second-arc dv
      extras[12] achieved total sweep angle (rad)
      extras[13] hyperbolic excess speed at departure (flyby-start legs)
      extras[14:20] shaping coefficients c2a, c3a, c4a, c2b, c3b, c4b

    In the reduced mode (reduced != 0) the shaping coefficients are
    determined internally: the first spiral's from the three-point zero
    out-of-plane-acceleration conditions, the second spiral's (c2b, c3b)
    from the terminal out-of-plane position/velocity match, leaving only
    c4b as a decision variable.  The trailing arc always runs until the
    leg transfer time is consumed, so the time constraint closes by
    construction and the position match is a Cartesian difference:
      flyby end,  full:    [dx, dy, dz, apz0, apz_mid, apz_end]
      flyby end,  reduced: [dx, dy, dz]
      rendezvous, full:    [dx, dy, dz, apz0, apz_mid, apz_end, dvx, dvy, dvz]
      rendezvous, reduced: [dx, dy, dvx, dvy]

    Returns the objective (dv).
    """
    launch = spec[0] > 0.5
    rendezvous = spec[1] > 0.5
    mu = 1.0

    for i in range(9):
        eq_out[i] = _FAIL_RES
    for i in range(3):
        in_out[i] = 0.0
    for i in range(20):
        extras[i] = 0.0
    extras[0] = float(NO_CONVERGENCE)

    # unpack decision vector
    if launch:
        t0 = zvec[0]
        vinf = zvec[1]
        psi_l = zvec[2]
        eta = zvec[3]
        tof = zvec[4]
        base = 5
    else:
        t0 = spec[2]
        tof = zvec[0]
        delta = zvec[1]
        zeta = zvec[2]
        base = 3
    xi1 = zvec[base]
    c2a = 0.0
    c3a = 0.0
    c4a = 0.0
    c2b = 0.0
    c3b = 0.0
    c4b = 0.0
    if rendezvous:
        xi2 = zvec[base + 1]
        f_a = zvec[base + 2]
        f_b = zvec[base + 3]
        if reduced:
            c4b = zvec[base + 4]
        else:
            c2a = zvec[base + 4]
            c3a = zvec[base + 5]
            c4a = zvec[base + 6]
            c2b = zvec[base + 7]
            c3b = zvec[base + 8]
            c4b = zvec[base + 9]
    else:
        xi2 = 0.0
        f_a = zvec[base + 1]
        f_b = 1.0
        if not reduced:
            c2a = zvec[base + 2]
            c3a = zvec[base + 3]
            c4a = zvec[base + 4]

    if tof <= 1e-6:
        return _FAIL_RES

    dep_state = np.empty(6)
    arr_state = np.empty(6)
    elements_state(spec[10:22], t0, dep_state)
    tf = t0 + tof
    elements_state(spec[22:34], tf, arr_state)

    # initial heliocentric velocity
    vbx, vby, vbz = dep_state[3], dep_state[4], dep_state[5]
    if launch:
        vb = math.sqrt(vbx * vbx + vby * vby + vbz * vbz)
        tx, ty, tz = vbx / vb, vby / vb, vbz / vb
        hx = dep_state[1] * vbz - dep_state[2] * vby
        hy = dep_state[2] * vbx - dep_state[0] * vbz
        hzv = dep_state[0] * vby - dep_state[1] * vbx
        hn = math.sqrt(hx * hx + hy * hy + hzv * hzv)
        hx, hy, hzv = hx / hn, hy / hn, hzv / hn
        bx = hy * tz - hzv * ty
        by = hzv * tx - hx * tz
        bz = hx * ty - hy * tx
        ce, se = math.cos(eta), math.sin(eta)
        cp, sp = math.cos(psi_l), math.sin(psi_l)
        v0x = vbx + vinf * (ce * cp * tx + ce * sp * bx + se * hx)
        v0y = vby + vinf * (ce * cp * ty + ce * sp * by + se * hy)
        v0z = vbz + vinf * (ce * cp * tz + ce * sp * bz + se * hzv)
    else:
        wx = spec[3] - vbx
        wy = spec[4] - vby
        wz = spec[5] - vbz
        w = math.sqrt(wx * wx + wy * wy + wz * wz)
        if w < 1e-12:
            return _FAIL_RES
        extras[13] = w
        ix, iy, iz = wx / w, wy / w, wz / w
        jx = iy * vbz - iz * vby
        jy = iz * vbx - ix * vbz
        jz = ix * vby - iy * vbx
        jn = math.sqrt(jx * jx + jy * jy + jz * jz)
        if jn < 1e-12:
            return _FAIL_RES
        jx, jy, jz = jx / jn, jy / jn, jz / jn
        kx = iy * jz - iz * jy
        ky = iz * jx - ix * jz
        kz = ix * jy - iy * jx
        # zeta measured from the in-reference-plane B-plane axis (k of the
        # triad); zeta = 0 keeps a planar encounter planar
        cd, sd = math.cos(delta), math.sin(delta)
        cz_, sz_ = math.cos(zeta), math.sin(zeta)
        v0x = vbx + w * (cd * ix + cz_ * sd * kx + sz_ * sd * jx)
        v0y = vby + w * (cd * iy + cz_ * sd * ky + sz_ * sd * jy)
        v0z = vbz + w * (cd * iz + cz_ * sd * kz + sz_ * sd * jz)
        dmax = 2.0 * math.asin(1.0 / (1.0 + spec[9] * w * w / spec[8]))
        in_out[0] = delta - dmax
        in_out[1] = -delta - dmax

    if rendezvous:
        in_out[2] = f_a - f_b

    x0, y0, z0 = dep_state[0], dep_state[1], dep_state[2]
    rpar0, phi0, vpar0, psi0 = _state_to_spiral(x0, y0, z0, v0x, v0y, v0z)
    if psi0 < 1e-6 or psi0 > math.pi - 1e-6 or vpar0 < 1e-9:
        return _FAIL_RES

    # total sweep angle: wrapped geometric difference plus whole turns,
    # selected on the branch closest to the reference sweep
    phi_t = math.atan2(arr_state[1], arr_state[0])
    dphi = (phi_t - phi0) % (2.0 * math.pi)
    k = math.floor((spec[6] - dphi) / (2.0 * math.pi) + 0.5)
    theta_tot = dphi + 2.0 * math.pi * k
    if theta_tot < 0.02:
        return _FAIL_RES
    extras[12] = theta_tot

    th_a = f_a * theta_tot
    th_b = f_b * theta_tot

    # first spiral: c0, c1 closed on the initial out-of-plane state
    c1 = np.empty(5)
    sp0 = math.sin(psi0)
    c1[0] = z0
    c1[1] = rpar0 * v0z / (vpar0 * sp0)
    c1[2] = c2a
    c1[3] = c3a
    c1[4] = c4a
    k1_1 = vpar0 * vpar0 - 2.0 * mu * (1.0 - xi1) / rpar0

    rtol = 1e-11
    y = np.empty(5)
    ymid = np.empty(5)
    yend = np.empty(5)
    y[0] = rpar0
    y[1] = vpar0
    y[2] = psi0
    y[3] = 0.0
    y[4] = 0.0
    st = spiral_propagate(y, 0.0, 0.5 * th_a, xi1, mu, c1, rtol, ymid)
    if st != OK:
        extras[0] = float(st)
        return _FAIL_RES
    st = spiral_propagate(ymid, 0.5 * th_a, th_a, xi1, mu, c1, rtol, yend)
    if st != OK:
        extras[0] = float(st)
        return _FAIL_RES

    if reduced:
        pts = np.empty((3, 3))
        pts[0, 0] = rpar0
        pts[0, 1] = vpar0
        pts[0, 2] = psi0
        for i in range(3):
            pts[1, i] = ymid[i]
            pts[2, i] = yend[i]
        st = _solve_first_coeffs(pts, th_a, xi1, mu, k1_1, c1)
        if st != OK:
            extras[0] = float(st)
            return _FAIL_RES
        # second pass accumulates the thrust impulse with the final law
        st = spiral_propagate(y, 0.0, th_a, xi1, mu, c1, rtol, yend)
        if st != OK:
            extras[0] = float(st)
            return _FAIL_RES
        apz0 = 0.0
        apz_m = 0.0
        apz_a = 0.0
    else:
        a_t, a_n, apz0 = accel_components(rpar0, vpar0, psi0, 0.0, xi1, mu,
                                          c1, k1_1)
        a_t, a_n, apz_m = accel_components(ymid[0], ymid[1], ymid[2],
                                           0.5 * th_a, xi1, mu, c1, k1_1)
        a_t, a_n, apz_a = accel_components(yend[0], yend[1], yend[2], th_a,
                                           xi1, mu, c1, k1_1)
    dv1 = yend[4]

    # convert spiral end to a 3-d state for the ballistic arc
    phi_a = phi0 + th_a
    rz_a, s1_a, _s2 = _poly_eval(c1, th_a)
    vz_a = yend[1] * math.sin(yend[2]) / yend[0] * s1_a
    cph, sph = math.cos(phi_a), math.sin(phi_a)
    cps, sps = math.cos(yend[2]), math.sin(yend[2])
    coast0 = np.empty(6)
    coast0[0] = yend[0] * cph
    coast0[1] = yend[0] * sph
    coast0[2] = rz_a
    coast0[3] = yend[1] * (cps * cph - sps * sph)
    coast0[4] = yend[1] * (cps * sph + sps * cph)
    coast0[5] = vz_a

    coast1 = np.empty(6)
    dv2 = 0.0
    xf = np.empty(6)
    if rendezvous:
        # ballistic arc to the coast-to-thrust switch angle, tolerating a
        # slightly inverted pair (the fA <= fB inequality can be active and
        # derivative stencils must not hit a cliff there)
        sweep = th_b - th_a
        if sweep < -0.05:
            return _FAIL_RES
        if sweep < 0.0:
            sweep = 0.0
        st, t_coast = coast_to_sweep(coast0, sweep, mu, coast1)
        if st != OK:
            extras[0] = float(st)
            return _FAIL_RES
        t_b = yend[3] + t_coast

        rpb, phib, vpb, psib = _state_to_spiral(coast1[0], coast1[1], coast1[2],
                                                coast1[3], coast1[4], coast1[5])
        if psib < 1e-6 or psib > math.pi - 1e-6 or vpb < 1e-9 or rpb < 1e-9:
            return _FAIL_RES
        spb = math.sin(psib)
        alpha = rpb * coast1[5] / (vpb * spb)
        c2 = np.empty(5)
        c2[0] = coast1[2]
        c2[1] = alpha
        c2[2] = c2b
        c2[3] = c3b
        c2[4] = c4b
        if reduced:
            c2[2] = 0.0
            c2[3] = 0.0
        y[0] = rpb
        y[1] = vpb
        y[2] = psib
        y[3] = t_b
        y[4] = 0.0
        # the second thrust arc runs until the leg's transfer time is
        # consumed; its final angle is emergent
        st, th_f = spiral_propagate_until_time(y, th_b, tof, xi2, mu, c2,
                                               rtol, yend)
        if st != OK:
            extras[0] = float(st)
            return _FAIL_RES
        if reduced:
            # out-of-plane targeting: the terminal position/velocity match
            # is exactly linear in (c2b, c3b) for a given c4b.  The span is
            # floored (sign kept) so a vanishing arc degrades into a smooth
            # cost barrier rather than a cliff.
            sp_f = math.sin(yend[2])
            s_t = arr_state[5] * yend[0] / (yend[1] * sp_f)
            u = th_b
            span = th_f - th_b
            if abs(span) < 1e-4:
                span = 1e-4 if span >= 0.0 else -1e-4
            w_ = u + span
            r1t = (arr_state[2] - coast1[2] - alpha * span) / (span * span)
            r2t = (s_t - alpha) / span
            rhs1 = r1t - c4b * (w_ * w_ + 2.0 * u * w_ + 3.0 * u * u)
            rhs2 = r2t - 4.0 * c4b * (w_ * w_ + u * w_ + u * u)
            c3b = (rhs2 - 2.0 * rhs1) / span
            c2b = rhs1 - (w_ + 2.0 * u) * c3b
        # closure at the coast end, then the impulse pass over the
        # now-known angle span with the final shaping law
        c2[2] = c2b
        c2[3] = c3b
        c2[4] = c4b
        c2[1] = alpha - (2.0 * c2b * th_b + 3.0 * c3b * th_b * th_b
                         + 4.0 * c4b * th_b ** 3)
        c2[0] = coast1[2] - (c2[1] * th_b + c2b * th_b * th_b
                             + c3b * th_b ** 3 + c4b * th_b ** 4)
        y[0] = rpb
        y[1] = vpb
        y[2] = psib
        y[3] = t_b
        y[4] = 0.0
        st = spiral_propagate(y, th_b, th_f, xi2, mu, c2, rtol, yend)
        if st != OK:
            extras[0] = float(st)
            return _FAIL_RES
        dv2 = yend[4]
        t_end = yend[3]
        theta_f = th_f
        rz_f, s1_f, _s2 = _poly_eval(c2, theta_f)
        vz_f = yend[1] * math.sin(yend[2]) / yend[0] * s1_f
        r_end = yend[0]
        v_end = yend[1]
        psi_end = yend[2]
        phi_f = phi0 + theta_f
        xf[0] = r_end * math.cos(phi_f)
        xf[1] = r_end * math.sin(phi_f)
        xf[2] = rz_f
        cps, sps = math.cos(psi_end), math.sin(psi_end)
        xf[3] = v_end * (cps * math.cos(phi_f) - sps * math.sin(phi_f))
        xf[4] = v_end * (cps * math.sin(phi_f) + sps * math.cos(phi_f))
        xf[5] = vz_f
    else:
        # ballistic arc consumes the remaining transfer time
        dt_coast = tof - yend[3]
        if dt_coast < -0.1 * tof:
            return _FAIL_RES
        st, coast_sweep = coast_time_tracksweep(coast0, dt_coast, mu, coast1)
        if st != OK:
            extras[0] = float(st)
            return _FAIL_RES
        t_end = yend[3] + dt_coast
        theta_f = th_a + coast_sweep
        rz_f = coast1[2]
        vz_f = coast1[5]
        r_end, phif, v_end, psi_end = _state_to_spiral(
            coast1[0], coast1[1], coast1[2], coast1[3], coast1[4], coast1[5])
        for i in range(6):
            xf[i] = coast1[i]

    finite = True
    for i in range(6):
        if not math.isfinite(xf[i]):
            finite = False
    if not finite or not math.isfinite(t_end):
        return _FAIL_RES

    # residuals against the arrival body (the in-plane position match is a
    # Cartesian vector difference: the transfer time is consumed exactly by
    # construction, which closes the time constraint)
    if reduced:
        if rendezvous:
            eq_out[0] = xf[0] - arr_state[0]
            eq_out[1] = xf[1] - arr_state[1]
            eq_out[2] = xf[3] - arr_state[3]
            eq_out[3] = xf[4] - arr_state[4]
        else:
            eq_out[0] = xf[0] - arr_state[0]
            eq_out[1] = xf[1] - arr_state[1]
            eq_out[2] = xf[2] - arr_state[2]
    else:
        eq_out[0] = xf[0] - arr_state[0]
        eq_out[1] = xf[1] - arr_state[1]
        eq_out[2] = xf[2] - arr_state[2]
        eq_out[3] = apz0
        eq_out[4] = apz_m
        eq_out[5] = apz_a
        if rendezvous:
            eq_out[6] = xf[3] - arr_state[3]
            eq_out[7] = xf[4] - arr_state[4]
            eq_out[8] = xf[5] - arr_state[5]

    extras[0] = 0.0
    extras[1] = dv1 + dv2
    extras[2] = t0
    extras[3] = tof
    for i in range(6):
        extras[4 + i] = xf[i]
    extras[10] = dv1
    extras[11] = dv2
    extras[12] = theta_f
    extras[14] = c1[2]
    extras[15] = c1[3]
    extras[16] = c1[4]
    if rendezvous:
        extras[17] = c2b
        extras[18] = c3b
        extras[19] = c4b
    return dv1 + dv2


@njit(cache=True, error_model="numpy")
def eval_leg_batch(Z, spec, n_eq, n_in, F, EQ, IN, STATUS, reduced):
    """Row-wise ``eval_leg`` over a matrix of decision vectors."""
    eq = np.empty(9)
    iq = np.empty(3)
    ex = np.empty(20)
    for b in range(Z.shape[0]):
        F[b] = eval_leg(Z[b], spec, eq, iq, ex, reduced)
        for i in range(n_eq):
            EQ[b, i] = eq[i]
        for i in range(n_in):
            IN[b, i] = iq[i]
        STATUS[b] = ex[0]

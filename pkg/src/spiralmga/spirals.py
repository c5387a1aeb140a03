"""3D generalized logarithmic spirals.

The planar base spiral follows the continuous-thrust family with control
parameter ``xi`` and two conserved quantities: an energy-like constant
(k_energy) and an angular-momentum-like constant (k_angmom).  The
out-of-plane motion is shaped by a quartic polynomial in the polar angle.
All quantities are in sun-canonical units (mu = 1 unless stated).

The primary propagation path integrates the state equations numerically
with an adaptive embedded Runge-Kutta scheme (the closed-form radius
expressions are kept for cross-checks, parameterized by the spiral
anomaly directly since the anomaly-vs-angle map is not modeled here).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .units import G0_MS2

PARABOLIC_TOL = 1e-10


class SpiralSingularityError(ArithmeticError):
    """Raised when the flight-path angle collapses onto a radial arc."""


class SpiralFamily(enum.Enum):
    ELLIPTIC = "elliptic"
    PARABOLIC = "parabolic"
    HYPERBOLIC_I = "hyperbolic_i"
    HYPERBOLIC_II = "hyperbolic_ii"


@dataclass(frozen=True)
class SpiralState:
    """In-plane spiral state plus out-of-plane position/velocity.

    r_par > 0, v_par > 0 and psi in (0, pi) are required for propagation.
    ``t`` is the elapsed time along the arc (TU).
    """
    r_par: float
    theta: float
    v_par: float
    psi: float
    t: float = 0.0
    r_z: float = 0.0
    v_z: float = 0.0

    def as_cartesian(self) -> tuple[np.ndarray, np.ndarray]:
        """3D heliocentric position/velocity of this state."""
        cph, sph = math.cos(self.theta), math.sin(self.theta)
        cps, sps = math.cos(self.psi), math.sin(self.psi)
        r = np.array([self.r_par * cph, self.r_par * sph, self.r_z])
        v = np.array([self.v_par * (cps * cph - sps * sph),
                      self.v_par * (cps * sph + sps * cph),
                      self.v_z])
        return r, v


def state_from_cartesian(r: np.ndarray, v: np.ndarray, t: float = 0.0) -> SpiralState:
    """Build a spiral state from a prograde 3D heliocentric state."""
    x, y, z = float(r[0]), float(r[1]), float(r[2])
    vx, vy, vz = float(v[0]), float(v[1]), float(v[2])
    r_par = math.hypot(x, y)
    v_par = math.hypot(vx, vy)
    hz = x * vy - y * vx
    psi = math.atan2(hz, x * vx + y * vy)
    if psi <= 0.0:
        raise ValueError("retrograde or radial in-plane motion")
    return SpiralState(r_par=r_par, theta=math.atan2(y, x), v_par=v_par,
                       psi=psi, t=t, r_z=z, v_z=vz)


@dataclass(frozen=True)
class SpiralParams:
    """Constants of motion of a base spiral."""
    xi: float
    k_energy: float        # v^2 - 2 mu (1-xi)/r
    k_angmom: float        # r v^2 sin(psi)
    family: SpiralFamily


@dataclass(frozen=True)
class OutOfPlanePoly:
    """Quartic out-of-plane shaping law r_z(theta) = sum c_i theta^i."""
    c: tuple[float, float, float, float, float]

    @classmethod
    def zero(cls) -> "OutOfPlanePoly":
        return cls((0.0, 0.0, 0.0, 0.0, 0.0))

    def coeffs(self) -> np.ndarray:
        return np.asarray(self.c, dtype=float)

    def position(self, theta: float) -> float:
        c = self.c
        return c[0] + theta * (c[1] + theta * (c[2] + theta * (c[3] + theta * c[4])))

    def slope(self, theta: float) -> float:
        """d r_z / d theta."""
        c = self.c
        return c[1] + theta * (2 * c[2] + theta * (3 * c[3] + theta * 4 * c[4]))

    def curvature(self, theta: float) -> float:
        """d^2 r_z / d theta^2."""
        c = self.c
        return 2 * c[2] + theta * (6 * c[3] + theta * 12 * c[4])

    def velocity(self, state: SpiralState) -> float:
        """Out-of-plane velocity implied by the shaping law at ``state``."""
        return state.v_par * math.sin(state.psi) / state.r_par * self.slope(state.theta)


@dataclass
class SpiralArc:
    """One propelled spiral arc between two polar angles."""
    params: SpiralParams
    poly: OutOfPlanePoly
    theta_start: float
    theta_end: float
    state0: SpiralState
    mu: float = 1.0
    _samples: np.ndarray | None = field(default=None, repr=False)


def spiral_constants(state: SpiralState, xi: float, mu: float = 1.0) -> SpiralParams:
    """Constants of motion and family classification for a spiral state."""
    k1 = state.v_par**2 - 2.0 * mu * (1.0 - xi) / state.r_par
    k2 = state.r_par * state.v_par**2 * math.sin(state.psi)
    if abs(k1) < PARABOLIC_TOL:
        family = SpiralFamily.PARABOLIC
    elif k1 < 0.0:
        family = SpiralFamily.ELLIPTIC
    elif k2 < 2.0 * mu * (1.0 - xi):
        family = SpiralFamily.HYPERBOLIC_I
    else:
        family = SpiralFamily.HYPERBOLIC_II
    return SpiralParams(xi=xi, k_energy=k1, k_angmom=k2, family=family)


def propagate_planar(state: SpiralState, xi: float, dtheta: float,
                     mu: float = 1.0, rtol: float = 1e-11,
                     poly: OutOfPlanePoly | None = None) -> SpiralState:
    """Propagate the planar spiral by ``dtheta`` rad.

    The elapsed time rides along as an extra state.  If ``poly`` is given
    the returned out-of-plane position/velocity follow the shaping law;
    otherwise they are zeroed.
    """
    if not (0.0 < state.psi < math.pi):
        raise SpiralSingularityError(f"psi={state.psi} outside (0, pi)")
    c = poly.coeffs() if poly is not None else np.zeros(5)
    y0 = np.array([state.r_par, state.v_par, state.psi, state.t, 0.0])
    out = np.empty(5)
    status = _kernels.spiral_propagate(y0, state.theta, state.theta + dtheta,
                                       xi, mu, c, rtol, out)
    if status != _kernels.OK:
        raise SpiralSingularityError(
            f"spiral propagation failed (status {status}) from {state}")
    theta1 = state.theta + dtheta
    new = SpiralState(r_par=out[0], theta=theta1, v_par=out[1], psi=out[2],
                      t=out[3])
    if poly is not None:
        new = replace(new, r_z=poly.position(theta1), v_z=poly.velocity(new))
    return new


def speed_from_radius(params: SpiralParams, r_par: float, mu: float = 1.0) -> float:
    """In-plane speed implied by the energy constant at radius ``r_par``."""
    v2 = params.k_energy + 2.0 * mu * (1.0 - params.xi) / r_par
    if v2 <= 0.0:
        raise ValueError("radius outside the reachable set of this spiral")
    return math.sqrt(v2)


def closed_form_radius(params: SpiralParams, beta: float,
                       r_ref: float = 1.0, psi_ref: float | None = None) -> float:
    """Radius of the base spiral at spiral anomaly ``beta`` (mu = 1).

    The anomaly is measured from the apse (elliptic/hyperbolic-II) or the
    asymptote (hyperbolic-I).  The parabolic family is parameterized by the
    swept angle directly and needs the reference radius ``r_ref`` (and
    optionally the constant flight-path angle ``psi_ref``).
    """
    xi = params.xi
    k1 = params.k_energy
    k2 = params.k_angmom
    one = 2.0 * (1.0 - xi)
    if params.family is SpiralFamily.PARABOLIC:
        if psi_ref is None:
            s = k2 / one
            if not 0.0 < s <= 1.0:
                raise ValueError("inconsistent parabolic constants")
            psi_ref = math.asin(s)
        return r_ref * math.exp(beta / math.tan(psi_ref))
    if params.family is SpiralFamily.ELLIPTIC:
        return (k2 * k2 - one * one) / (k1 * (one + k2 * math.cosh(beta)))
    if params.family is SpiralFamily.HYPERBOLIC_II:
        denom = k1 * (one + k2 * math.cos(beta))
        if denom <= 0.0:
            raise ValueError("anomaly beyond the escape asymptote")
        return (k2 * k2 - one * one) / denom
    # hyperbolic type I
    disc = 4.0 * (1.0 - xi * xi) - k2 * k2
    if disc < 0.0:
        raise ValueError("negative discriminant for hyperbolic-I constants")
    ell = math.sqrt(disc)
    rho = one + ell
    ka = rho * ell * ell / k1
    kb = 4.0 * rho * (1.0 - xi)
    kc = rho * rho - k2 * k2
    sh = math.sinh(0.5 * beta)
    ch = math.cosh(0.5 * beta)
    denom = sh * (kb * sh + kc * ch)
    if denom <= 0.0:
        raise ValueError("anomaly outside the hyperbolic-I branch")
    return ka / denom


def in_plane_thrust_accel(state: SpiralState, xi: float,
                          mu: float = 1.0) -> tuple[float, float]:
    """Thrust acceleration (tangential, normal) sustaining the base spiral.

    The 1/r^3 terms use the full 3D radius, so a nonzero out-of-plane
    offset feeds back into the in-plane thrust demand.
    """
    rp = state.r_par
    r3 = rp**3
    r3d = (rp * rp + state.r_z * state.r_z) ** 1.5
    a_t = mu * rp * math.cos(state.psi) * ((xi - 1.0) / r3 + 1.0 / r3d)
    a_n = mu * rp * math.sin(state.psi) * (2.0 * (1.0 - xi) / r3 - 1.0 / r3d)
    return a_t, a_n


def close_polynomial(c2: float, c3: float, c4: float,
                     state0: SpiralState) -> OutOfPlanePoly:
    """Fix c0, c1 so the shaping law matches the initial out-of-plane
    position and velocity of ``state0`` at its polar angle."""
    th0 = state0.theta
    sp = math.sin(state0.psi)
    if abs(sp) < 1e-12 or state0.v_par == 0.0:
        raise SpiralSingularityError("singular initial state for polynomial closure")
    c1 = (state0.r_par * state0.v_z / (state0.v_par * sp)
          - (2.0 * c2 * th0 + 3.0 * c3 * th0**2 + 4.0 * c4 * th0**3))
    c0 = state0.r_z - (c1 * th0 + c2 * th0**2 + c3 * th0**3 + c4 * th0**4)
    return OutOfPlanePoly((c0, c1, c2, c3, c4))


def out_of_plane_accel(state: SpiralState, poly: OutOfPlanePoly,
                       params: SpiralParams, mu: float = 1.0) -> float:
    """Out-of-plane thrust acceleration at ``state`` under the shaping law."""
    a_t, a_n, apz = _kernels.accel_components(
        state.r_par, state.v_par, state.psi, state.theta, params.xi, mu,
        poly.coeffs(), params.k_energy)
    return apz


def thrust_accel_magnitude(state: SpiralState, poly: OutOfPlanePoly,
                           params: SpiralParams, mu: float = 1.0) -> float:
    a_t, a_n, apz = _kernels.accel_components(
        state.r_par, state.v_par, state.psi, state.theta, params.xi, mu,
        poly.coeffs(), params.k_energy)
    return math.sqrt(a_t * a_t + a_n * a_n + apz * apz)


def arc_delta_v(arc: SpiralArc, mu: float = 1.0, rtol: float = 1e-11) -> float:
    """Total thrust impulse along the arc (integral of |a_p| dt)."""
    y0 = np.array([arc.state0.r_par, arc.state0.v_par, arc.state0.psi,
                   arc.state0.t, 0.0])
    out = np.empty(5)
    status = _kernels.spiral_propagate(y0, arc.theta_start, arc.theta_end,
                                       arc.params.xi, mu, arc.poly.coeffs(),
                                       rtol, out)
    if status != _kernels.OK:
        raise SpiralSingularityError(f"propagation failed (status {status})")
    return float(out[4])


def propellant_fraction(dv_kms: float, isp_s: float) -> float:
    """Propellant mass fraction from the rocket equation (dv in km/s)."""
    if dv_kms < 0.0 or isp_s <= 0.0:
        raise ValueError("dv must be >= 0 and Isp > 0")
    return 1.0 - math.exp(-dv_kms * 1e3 / (isp_s * G0_MS2))


SAMPLE_COLUMNS = ("theta", "t", "r_par", "v_par", "psi", "r_z", "v_z",
                  "a_par", "a_pz")


def sample_arc(arc: SpiralArc, n: int = 200, rtol: float = 1e-11) -> np.ndarray:
    """Sample the arc at ``n`` uniform polar angles.

    Returns an (n, 9) array with columns SAMPLE_COLUMNS; the cache on the
    arc is reused when the requested resolution matches.
    """
    if arc._samples is not None and arc._samples.shape[0] == n:
        return arc._samples
    thetas = np.linspace(arc.theta_start, arc.theta_end, n)
    rows = np.empty((n, 9))
    y = np.array([arc.state0.r_par, arc.state0.v_par, arc.state0.psi,
                  arc.state0.t, 0.0])
    out = np.empty(5)
    c = arc.poly.coeffs()
    xi = arc.params.xi
    k1 = arc.params.k_energy
    for i, th in enumerate(thetas):
        if i > 0:
            status = _kernels.spiral_propagate(y, thetas[i - 1], th, xi,
                                               arc.mu, c, rtol, out)
            if status != _kernels.OK:
                raise SpiralSingularityError(f"sampling failed (status {status})")
            y[:] = out
        a_t, a_n, apz = _kernels.accel_components(y[0], y[1], y[2], th, xi,
                                                  arc.mu, c, k1)
        state = SpiralState(r_par=y[0], theta=th, v_par=y[1], psi=y[2], t=y[3])
        rows[i] = (th, y[3], y[0], y[1], y[2], arc.poly.position(th),
                   arc.poly.velocity(state), math.hypot(a_t, a_n), apz)
    arc._samples = rows
    return rows


def arc_to_csv(arc: SpiralArc, path, n: int = 200) -> None:
    rows = sample_arc(arc, n)
    header = ",".join(SAMPLE_COLUMNS)
    np.savetxt(path, rows, delimiter=",", header=header, comments="")

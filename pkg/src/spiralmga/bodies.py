"""Body catalog and two-body propagation.

Heliocentric states come from embedded J2000 mean Keplerian elements with
linear secular rates (per Julian century), valid 1800-2100.  Elements are
referred to the ecliptic/equinox of J2000; Earth entries are the
Earth-Moon barycenter, which is accurate to ~3e-5 au.

A catalog can also be loaded from a plain text file, one body per line::

    name  mu_km3s2  radius_km  hmin_km  a_au e i_deg raan_deg argp_deg M0_deg \
    da de di draan dargp dM     (six rates per century, dM including mean motion)

Lines starting with '#' are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .units import MU_SUN_KM3S2, AU_KM, TU_DAYS, days_to_tu

_kernels.set_tu_days(TU_DAYS)

VALID_EPOCH_RANGE = (-73050.0, 36525.0)   # days past J2000, ~1800..2100

DEG = math.pi / 180.0


class EpochError(ValueError):
    """Epoch outside the secular model's validity window."""


@dataclass(frozen=True)
class KeplerianElements:
    """Mean elements at J2000 plus linear secular rates (per century).

    a in au, angles in rad; ``m0_dot`` is the full mean-anomaly rate
    including the mean motion.
    """
    a: float
    e: float
    i: float
    raan: float
    argp: float
    m0: float
    a_dot: float = 0.0
    e_dot: float = 0.0
    i_dot: float = 0.0
    raan_dot: float = 0.0
    argp_dot: float = 0.0
    m0_dot: float = 0.0

    def pack(self) -> np.ndarray:
        return np.array([self.a, self.e, self.i, self.raan, self.argp, self.m0,
                         self.a_dot, self.e_dot, self.i_dot, self.raan_dot,
                         self.argp_dot, self.m0_dot])


@dataclass(frozen=True)
class StateVector:
    """Heliocentric position (au) and velocity (canonical DU/TU)."""
    r: np.ndarray
    v: np.ndarray
    epoch: float            # days past J2000

    @property
    def speed_kms(self) -> float:
        from .units import VU_KMS
        return float(np.linalg.norm(self.v)) * VU_KMS


@dataclass(frozen=True)
class BodySpec:
    name: str
    mu: float               # km^3/s^2
    radius: float           # km
    h_min: float            # km, minimum flyby altitude
    elements: KeplerianElements

    @property
    def mu_canonical(self) -> float:
        return self.mu / MU_SUN_KM3S2

    @property
    def rp_min_au(self) -> float:
        return (self.radius + self.h_min) / AU_KM


def _from_standish(a, e, i_deg, L_deg, peri_deg, raan_deg,
                   da, de, di, dL, dperi, draan) -> KeplerianElements:
    """Convert the (a, e, i, mean longitude, longitude of perihelion, node)
    table form into (argp, mean anomaly) form."""
    return KeplerianElements(
        a=a, e=e, i=i_deg * DEG,
        raan=raan_deg * DEG,
        argp=(peri_deg - raan_deg) * DEG,
        m0=(L_deg - peri_deg) * DEG,
        a_dot=da, e_dot=de, i_dot=di * DEG,
        raan_dot=draan * DEG,
        argp_dot=(dperi - draan) * DEG,
        m0_dot=(dL - dperi) * DEG,
    )


def _mean_motion_per_century(a_au: float) -> float:
    """rad per Julian century for mu_sun = 1 canonical units."""
    n_tu = a_au ** -1.5
    return n_tu * (36525.0 / TU_DAYS)


_PLANET_TABLE = {
    # a, e, i, L, long.peri, raan  +  rates per century (same order)
    "mercury": (0.38709927, 0.20563593, 7.00497902, 252.25032350,
                77.45779628, 48.33076593,
                0.00000037, 0.00001906, -0.00594749, 149472.67411175,
                0.16047689, -0.12534081),
    "venus": (0.72333566, 0.00677672, 3.39467605, 181.97909950,
              131.60246718, 76.67984255,
              0.00000390, -0.00004107, -0.00078890, 58517.81538729,
              0.00268329, -0.27769418),
    "earth": (1.00000261, 0.01671123, -0.00001531, 100.46457166,
              102.93768193, 0.0,
              0.00000562, -0.00004392, -0.01294668, 35999.37244981,
              0.32327364, 0.0),
    "mars": (1.52371034, 0.09339410, 1.84969142, -4.55343205,
             -23.94362959, 49.55953891,
             0.00001847, 0.00007882, -0.00813131, 19140.30268499,
             0.44441088, -0.29257343),
    "jupiter": (5.20288700, 0.04838624, 1.30439695, 34.39644051,
                14.72847983, 100.47390909,
                -0.00011607, -0.00013253, -0.00183714, 3034.74612775,
                0.21252668, 0.20469106),
    "saturn": (9.53667594, 0.05386179, 2.48599187, 49.95424423,
               92.59887831, 113.66242448,
               -0.00125060, -0.00050991, 0.00193609, 1222.49362201,
               -0.41897216, -0.28867794),
    "uranus": (19.18916464, 0.04725744, 0.77263783, 313.23810451,
               170.95427630, 74.01692503,
               -0.00196176, -0.00004397, -0.00242939, 428.48202785,
               0.40805281, 0.04240589),
    "neptune": (30.06992276, 0.00859048, 1.77004347, -55.12002969,
                44.96476227, 131.78422574,
                0.00026291, 0.00005105, 0.00035372, 218.45945325,
                -0.32241464, -0.00508664),
}

_PHYSICAL = {
    # mu km^3/s^2, radius km, default minimum flyby altitude km
    "mercury": (22031.86855, 2439.7, 200.0),
    "venus": (324858.592, 6051.8, 200.0),
    "earth": (398600.435436, 6378.137, 200.0),
    "mars": (42828.375214, 3389.5, 200.0),
    "jupiter": (126686531.9, 71492.0, 70000.0),
    "saturn": (37931206.234, 60268.0, 60000.0),
    "uranus": (5793951.256, 25559.0, 25000.0),
    "neptune": (6835099.97, 24764.0, 25000.0),
    "ceres": (62.6284, 469.7, 50.0),
}

# Ceres: heliocentric ecliptic-J2000 osculating elements near J2000,
# frozen (no secular rates beyond the mean motion).
_CERES_ELEMENTS = KeplerianElements(
    a=2.76596, e=0.07850, i=10.58336 * DEG,
    raan=80.49436 * DEG, argp=73.92179 * DEG, m0=6.14496 * DEG,
    m0_dot=_mean_motion_per_century(2.76596),
)


def _build_default_catalog() -> dict[str, BodySpec]:
    catalog = {}
    for name, row in _PLANET_TABLE.items():
        mu, radius, hmin = _PHYSICAL[name]
        catalog[name] = BodySpec(name=name.capitalize(), mu=mu, radius=radius,
                                 h_min=hmin, elements=_from_standish(*row))
    mu, radius, hmin = _PHYSICAL["ceres"]
    catalog["ceres"] = BodySpec(name="Ceres", mu=mu, radius=radius,
                                h_min=hmin, elements=_CERES_ELEMENTS)
    return catalog


DEFAULT_CATALOG = _build_default_catalog()


def get_body(name: str, catalog: dict[str, BodySpec] | None = None) -> BodySpec:
    cat = catalog if catalog is not None else DEFAULT_CATALOG
    key = name.strip().lower()
    if key not in cat:
        raise KeyError(f"unknown body {name!r}; have {sorted(cat)}")
    return cat[key]


def load_catalog(path, include_defaults: bool = True) -> dict[str, BodySpec]:
    """Read a body-catalog text file (see module docstring for the format)."""
    catalog = dict(DEFAULT_CATALOG) if include_defaults else {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 16:
                raise ValueError(f"{path}:{lineno}: expected 16 fields, "
                                 f"got {len(parts)}")
            name = parts[0]
            nums = [float(p) for p in parts[1:]]
            elems = KeplerianElements(
                a=nums[3], e=nums[4], i=nums[5] * DEG,
                raan=nums[6] * DEG, argp=nums[7] * DEG, m0=nums[8] * DEG,
                a_dot=nums[9], e_dot=nums[10], i_dot=nums[11] * DEG,
                raan_dot=nums[12] * DEG, argp_dot=nums[13] * DEG,
                m0_dot=nums[14] * DEG,
            )
            catalog[name.lower()] = BodySpec(name=name, mu=nums[0],
                                             radius=nums[1], h_min=nums[2],
                                             elements=elems)
    return catalog


def save_catalog(catalog: dict[str, BodySpec], path) -> None:
    with open(path, "w") as fh:
        fh.write("# name mu_km3s2 radius_km hmin_km a e i raan argp M0 "
                 "da de di draan dargp dM (angles deg, rates per century)\n")
        for body in catalog.values():
            el = body.elements
            fh.write(" ".join([
                body.name,
                repr(body.mu), repr(body.radius), repr(body.h_min),
                repr(el.a), repr(el.e), repr(el.i / DEG),
                repr(el.raan / DEG), repr(el.argp / DEG), repr(el.m0 / DEG),
                repr(el.a_dot), repr(el.e_dot), repr(el.i_dot / DEG),
                repr(el.raan_dot / DEG), repr(el.argp_dot / DEG),
                repr(el.m0_dot / DEG),
            ]) + "\n")


def body_state(body: BodySpec, epoch: float) -> StateVector:
    """Heliocentric state of ``body`` at ``epoch`` (days past J2000)."""
    if not (VALID_EPOCH_RANGE[0] <= epoch <= VALID_EPOCH_RANGE[1]):
        raise EpochError(f"epoch {epoch} outside validity window "
                         f"{VALID_EPOCH_RANGE} (days past J2000)")
    out = np.empty(6)
    _kernels.elements_state(body.elements.pack(), days_to_tu(epoch), out)
    return StateVector(r=out[:3].copy(), v=out[3:].copy(), epoch=epoch)


def propagate_kepler(state: StateVector, dt: float, mu: float = 1.0) -> StateVector:
    """Ballistic propagation by ``dt`` TU (universal-variable formulation).

    Works for elliptic and hyperbolic orbits; energy and angular momentum
    are conserved to ~1e-12 relative.
    """
    y0 = np.concatenate([state.r, state.v])
    out = np.empty(6)
    status = _kernels.kepler_propagate(y0, float(dt), mu, out)
    if status != _kernels.OK:
        raise ArithmeticError(f"kepler propagation failed (status {status})")
    return StateVector(r=out[:3].copy(), v=out[3:].copy(),
                       epoch=state.epoch + dt * TU_DAYS)


def _stumpff_cs(z: float) -> tuple[float, float]:
    if z > 1e-8:
        sz = math.sqrt(z)
        return ((1.0 - math.cos(sz)) / z,
                (sz - math.sin(sz)) / (sz * z))
    if z < -1e-8:
        sz = math.sqrt(-z)
        return ((1.0 - math.cosh(sz)) / z,
                (math.sinh(sz) - sz) / (-z * sz))
    return 0.5 - z / 24.0, 1.0 / 6.0 - z / 120.0


def lambert_transfer(r1: np.ndarray, r2: np.ndarray, dt: float,
                     mu: float = 1.0, revs: int = 0,
                     prograde: bool = True):
    """Ballistic arc connecting two positions in a given time.

    Universal-variable formulation with bisection on the universal
    parameter; ``revs`` full revolutions are added to the transfer angle
    (the shorter-period branch is returned for multi-rev cases).  Returns
    (v1, v2) or None when no solution exists.
    """
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    n1, n2 = np.linalg.norm(r1), np.linalg.norm(r2)
    if dt <= 0.0 or n1 == 0.0 or n2 == 0.0:
        return None
    cosd = float(r1 @ r2) / (n1 * n2)
    cosd = max(-1.0, min(1.0, cosd))
    cross_z = r1[0] * r2[1] - r1[1] * r2[0]
    dth = math.acos(cosd)
    if (cross_z < 0.0) == prograde:
        dth = 2.0 * math.pi - dth
    dth += 2.0 * math.pi * revs
    sind = math.sin(dth)
    if abs(sind) < 1e-12 and revs == 0:
        return None
    A = sind * math.sqrt(n1 * n2 / (1.0 - cosd)) if abs(1.0 - cosd) > 1e-14 else 0.0
    if A == 0.0:
        return None

    def tof(z):
        c2, c3 = _stumpff_cs(z)
        if c2 <= 1e-300:
            return None, 0.0
        y = n1 + n2 + A * (z * c3 - 1.0) / math.sqrt(c2)
        if y < 0.0:
            return None, y
        chi = math.sqrt(y / c2)
        return (chi ** 3 * c3 + A * math.sqrt(y)) / math.sqrt(mu), y

    if revs == 0:
        z_lo, z_hi = -4.0 * math.pi ** 2, 4.0 * math.pi ** 2 * (1.0 - 1e-9)
        # grow the lower bracket until tof(z_lo) < dt
        t_lo, _ = tof(z_lo)
        while t_lo is not None and t_lo > dt and z_lo > -1e4:
            z_lo *= 2.0
            t_lo, _ = tof(z_lo)
        # ensure tof is defined at z_lo (y >= 0)
        while True:
            t_lo, y_lo = tof(z_lo)
            if t_lo is not None:
                break
            z_lo = 0.5 * (z_lo + z_hi)
            if z_hi - z_lo < 1e-12:
                return None
        t_hi, _ = tof(z_hi)
        if t_lo is None or t_hi is None or not (t_lo <= dt <= t_hi):
            if t_lo is not None and t_lo > dt:
                return None
    else:
        # multi-rev: tof is U-shaped on ((2 pi revs)^2, (2 pi (revs+1))^2);
        # take the right (slow, high-energy... long-period) branch's left
        # side: locate the minimum by ternary search, then bisect on the
        # left branch (shorter period, lower energy)
        z_min = (2.0 * math.pi * revs) ** 2 + 1e-10
        z_max = (2.0 * math.pi * (revs + 1)) ** 2 - 1e-10
        lo, hi = z_min, z_max
        for _ in range(200):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            t1, _ = tof(m1)
            t2, _ = tof(m2)
            if t1 is None:
                lo = m1
                continue
            if t2 is None:
                hi = m2
                continue
            if t1 < t2:
                hi = m2
            else:
                lo = m1
            if hi - lo < 1e-10 * (1.0 + abs(hi)):
                break
        z_star = 0.5 * (lo + hi)
        t_star, _ = tof(z_star)
        if t_star is None or t_star > dt:
            return None
        # left branch: z in (z_star, z_max), tof increasing
        z_lo, z_hi = z_star, z_max
        t_hi, _ = tof(z_hi)
        guard = 0
        while t_hi is None and guard < 200:
            z_hi = 0.5 * (z_hi + z_lo)
            t_hi, _ = tof(z_hi)
            guard += 1
        if t_hi is not None and t_hi < dt:
            return None

    for _ in range(200):
        z_mid = 0.5 * (z_lo + z_hi)
        t_mid, _ = tof(z_mid)
        if t_mid is None:
            z_lo = z_mid
            continue
        if t_mid < dt:
            z_lo = z_mid
        else:
            z_hi = z_mid
        if abs(t_mid - dt) < 1e-12 * dt or z_hi - z_lo < 1e-14 * (1.0 + abs(z_hi)):
            break
    z = 0.5 * (z_lo + z_hi)
    t_fin, y = tof(z)
    if t_fin is None or abs(t_fin - dt) > 1e-6 * dt:
        return None
    f = 1.0 - y / n1
    g = A * math.sqrt(y / mu)
    gdot = 1.0 - y / n2
    v1 = (r2 - f * r1) / g
    v2 = (gdot * r2 - r1) / g
    return v1, v2


def elements_from_state(r: np.ndarray, v: np.ndarray,
                        mu: float = 1.0) -> KeplerianElements:
    """Osculating elements from a Cartesian state (elliptic orbits)."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    rn = float(np.linalg.norm(r))
    h = np.cross(r, v)
    hn = float(np.linalg.norm(h))
    n_vec = np.cross([0.0, 0.0, 1.0], h)
    nn = float(np.linalg.norm(n_vec))
    e_vec = (np.cross(v, h) / mu) - r / rn
    e = float(np.linalg.norm(e_vec))
    energy = float(v @ v) / 2.0 - mu / rn
    if energy >= 0.0:
        raise ValueError("elements_from_state expects a bound orbit")
    a = -mu / (2.0 * energy)
    inc = math.acos(max(-1.0, min(1.0, h[2] / hn)))
    if nn > 1e-12:
        raan = math.atan2(n_vec[1], n_vec[0])
    else:
        raan = 0.0
        n_vec = np.array([1.0, 0.0, 0.0])
        nn = 1.0
    if e > 1e-12:
        argp = math.acos(max(-1.0, min(1.0, float(n_vec @ e_vec) / (nn * e))))
        if e_vec[2] < 0.0:
            argp = 2.0 * math.pi - argp
        nu = math.acos(max(-1.0, min(1.0, float(e_vec @ r) / (e * rn))))
        if float(r @ v) < 0.0:
            nu = 2.0 * math.pi - nu
    else:
        argp = 0.0
        nu = math.acos(max(-1.0, min(1.0, float(n_vec @ r) / (nn * rn))))
        if r[2] < 0.0:
            nu = 2.0 * math.pi - nu
    e_anom = 2.0 * math.atan2(math.sqrt(1.0 - e) * math.sin(nu / 2.0),
                              math.sqrt(1.0 + e) * math.cos(nu / 2.0))
    m0 = e_anom - e * math.sin(e_anom)
    return KeplerianElements(a=a, e=e, i=inc,
                             raan=raan % (2.0 * math.pi),
                             argp=argp % (2.0 * math.pi),
                             m0=m0 % (2.0 * math.pi))

"""Unpowered gravity-assist model (zero-radius sphere of influence).

The flyby is instantaneous at the planet's position: the planetocentric
excess velocity keeps its magnitude and rotates by the deflection angle
``delta`` inside the plane located by the angle ``zeta`` measured in the
plane orthogonal to the inbound excess velocity.

All functions accept any consistent unit set; the dimensionless group
r_p * v_inf^2 / mu_b drives the geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bodies import BodySpec


class DegenerateFrameError(ValueError):
    """Inbound excess velocity parallel to the planet velocity."""


@dataclass(frozen=True)
class FlybyGeometry:
    v_inf_in: np.ndarray
    v_inf_out: np.ndarray
    delta: float
    zeta: float
    r_p: float

    @property
    def v_inf(self) -> float:
        return float(np.linalg.norm(self.v_inf_in))


def bplane_frame(v_inf_in: np.ndarray, v_body: np.ndarray):
    """Right-handed orthonormal triad (i, j, k) of the encounter.

    i is along the inbound excess velocity, j along i x v_body.
    """
    v_inf_in = np.asarray(v_inf_in, dtype=float)
    v_body = np.asarray(v_body, dtype=float)
    n_in = np.linalg.norm(v_inf_in)
    if n_in == 0.0 or np.linalg.norm(v_body) == 0.0:
        raise DegenerateFrameError("zero velocity vector")
    i_hat = v_inf_in / n_in
    j_vec = np.cross(i_hat, v_body)
    n_j = np.linalg.norm(j_vec)
    if n_j < 1e-12 * np.linalg.norm(v_body):
        raise DegenerateFrameError("excess velocity parallel to body velocity")
    j_hat = j_vec / n_j
    k_hat = np.cross(i_hat, j_hat)
    return i_hat, j_hat, k_hat


def deflection_angle(r_p: float, v_inf: float, mu_b: float) -> float:
    """Hyperbolic deflection angle for pericenter radius r_p."""
    if r_p <= 0.0 or v_inf <= 0.0 or mu_b <= 0.0:
        raise ValueError("r_p, v_inf and mu_b must be positive")
    return 2.0 * math.asin(1.0 / (1.0 + r_p * v_inf * v_inf / mu_b))


def max_deflection(v_inf: float, body: BodySpec) -> float:
    """Largest feasible deflection given the body's minimum flyby altitude.

    Uses km / km/s / km^3/s^2 units from the body spec.
    """
    return deflection_angle(body.radius + body.h_min, v_inf, body.mu)


def pericenter_from_deflection(delta: float, v_inf: float, mu_b: float) -> float:
    """Pericenter radius producing deflection ``delta`` (inverse map)."""
    if not 0.0 < delta < math.pi:
        raise ValueError("delta must lie in (0, pi)")
    return mu_b / (v_inf * v_inf) * (1.0 / math.sin(0.5 * delta) - 1.0)


def apply_flyby(v_minus: np.ndarray, v_body: np.ndarray,
                delta: float, zeta: float) -> np.ndarray:
    """Heliocentric velocity after an unpowered flyby.

    The excess speed is preserved exactly by construction; delta = 0 is
    the identity.  zeta locates the flyby plane inside the B-plane,
    measured from the axis that lies parallel to the reference plane
    (k of the triad, which always has a non-positive projection on the
    body velocity), so zeta = 0 keeps an in-plane encounter planar.
    """
    v_minus = np.asarray(v_minus, dtype=float)
    v_body = np.asarray(v_body, dtype=float)
    v_inf_in = v_minus - v_body
    i_hat, j_hat, k_hat = bplane_frame(v_inf_in, v_body)
    v_inf = np.linalg.norm(v_inf_in)
    v_inf_out = v_inf * (math.cos(delta) * i_hat
                         + math.cos(zeta) * math.sin(delta) * k_hat
                         + math.sin(zeta) * math.sin(delta) * j_hat)
    return v_body + v_inf_out


def flyby_geometry(v_minus: np.ndarray, v_body: np.ndarray,
                   delta: float, zeta: float, body: BodySpec,
                   v_unit_kms: float = 1.0) -> FlybyGeometry:
    """Assemble the full geometry record, including the pericenter radius
    implied by |delta| (km).  ``v_unit_kms`` converts the velocity inputs
    to km/s for the pericenter computation."""
    v_minus = np.asarray(v_minus, dtype=float)
    v_body = np.asarray(v_body, dtype=float)
    v_inf_in = v_minus - v_body
    v_plus = apply_flyby(v_minus, v_body, delta, zeta)
    v_inf_kms = float(np.linalg.norm(v_inf_in)) * v_unit_kms
    d = abs(delta)
    r_p = math.inf if d < 1e-12 else pericenter_from_deflection(d, v_inf_kms, body.mu)
    return FlybyGeometry(v_inf_in=v_inf_in, v_inf_out=v_plus - v_body,
                         delta=delta, zeta=zeta, r_p=r_p)

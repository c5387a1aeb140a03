"""Canonical heliocentric unit system and conversions.

Internally the whole package works in sun-canonical units:

    1 DU = 1 astronomical unit
    1 TU = time unit such that the Sun's gravitational parameter is 1,
           i.e. TU = sqrt(au^3 / mu_sun) ~ 58.13 days
    mass = fraction of launch mass where a mass scale is needed

Epochs are exchanged as days past J2000 (JD 2451545.0, 2000-01-01 12:00)
and converted to TU only inside numerical kernels.  Speeds cross the API
boundary in km/s.
"""

from __future__ import annotations

import datetime as _dt
import math

# Defining constants (IAU 2012 / DE astronomical constants).
AU_KM = 1.495978707e8              # km
MU_SUN_KM3S2 = 1.32712440018e11    # km^3/s^2
DAY_S = 86400.0
G0_MS2 = 9.81                      # rocket-equation reference gravity, m/s^2

# Derived canonical scales.
TU_S = math.sqrt(AU_KM**3 / MU_SUN_KM3S2)   # seconds per TU
TU_DAYS = TU_S / DAY_S                      # days per TU  (~58.132)
VU_KMS = AU_KM / TU_S                       # km/s per DU/TU (~29.785)
ACCEL_UNIT_MS2 = AU_KM * 1e3 / TU_S**2      # m/s^2 per DU/TU^2

YEAR_DAYS = 365.25
J2000_JD = 2451545.0

_J2000_DATETIME = _dt.datetime(2000, 1, 1, 12, 0, 0)


def days_to_tu(days: float) -> float:
    return days / TU_DAYS


def tu_to_days(tu: float) -> float:
    return tu * TU_DAYS


def kms_to_vu(v_kms: float) -> float:
    return v_kms / VU_KMS


def vu_to_kms(v_vu: float) -> float:
    return v_vu * VU_KMS


def km_to_au(x_km: float) -> float:
    return x_km / AU_KM


def au_to_km(x_au: float) -> float:
    return x_au * AU_KM


def parse_epoch(text: str) -> float:
    """Parse a calendar date into days past J2000.

    Accepts ISO dates (``2003-05-12``), optionally with a time part, or a
    plain float already expressed in days past J2000.
    """
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    for fmt in ("%Y-%m-%d", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%d/%m/%Y"):
        try:
            dt = _dt.datetime.strptime(text, fmt)
        except ValueError:
            continue
        return (dt - _J2000_DATETIME).total_seconds() / DAY_S
    raise ValueError(f"unrecognized epoch: {text!r}")


def format_epoch(days_past_j2000: float) -> str:
    """Days past J2000 -> ISO calendar date (nearest day)."""
    dt = _J2000_DATETIME + _dt.timedelta(days=float(days_past_j2000))
    return dt.strftime("%Y-%m-%d")

"""Unit conversions and small statistical helpers shared by the other modules."""

import math

from scipy.constants import c as SPEED_OF_LIGHT, h as PLANCK

WAVELENGTH_RANGE_NM = (1200.0, 1700.0)


def db_to_linear(x):
    """Transmission ratio for a loss of ``x`` dB."""
    return 10.0 ** (-x / 10.0)


def linear_to_db(t):
    """Loss in dB for a transmission ratio ``t`` (inverse of :func:`db_to_linear`)."""
    if t <= 0:
        return math.inf
    return -10.0 * math.log10(t)


def dbm_to_watts(p):
    return 1e-3 * 10.0 ** (p / 10.0)


def watts_to_dbm(w):
    # zero power is represented as -inf dBm
    if w <= 0:
        return -math.inf
    return 10.0 * math.log10(w / 1e-3)


def db_per_km_to_nepers(alpha_db):
    """Power attenuation coefficient in 1/km from a value in dB/km."""
    return alpha_db * math.log(10.0) / 10.0


def binary_entropy(p):
    """Shannon binary entropy in bits, with h(0) = h(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def hoeffding_delta(n, epsilon):
    """Hoeffding deviation sqrt(n/2 * ln(1/epsilon)) for a count of ``n`` events."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n < 0:
        raise ValueError(f"count must be non-negative, got {n}")
    return math.sqrt(n / 2.0 * math.log(1.0 / epsilon))


def check_wavelength(lambda_nm):
    lo, hi = WAVELENGTH_RANGE_NM
    if not (lo <= lambda_nm <= hi):
        raise ValueError(f"wavelength {lambda_nm} nm outside {lo}-{hi} nm")
    return float(lambda_nm)


def photon_energy(lambda_nm):
    """Photon energy in joules at a vacuum wavelength given in nm."""
    return PLANCK * SPEED_OF_LIGHT / (lambda_nm * 1e-9)

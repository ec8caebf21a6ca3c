"""Spontaneous Raman and leakage noise reaching the quantum receiver.

Attenuation coefficients inside this module are linear (1/km).  The Raman
coefficient ``rho`` is the fraction of pump power scattered into the quantum
band per km of fiber and per GHz of detection bandwidth.
"""

import math
from dataclasses import dataclass

from .linkmodel import classical_path_loss_db, transmittance
from .mathcore import db_per_km_to_nepers, db_to_linear, photon_energy

# below this difference the forward closed form switches to its analytic limit
_ALPHA_DEGENERATE = 1e-9


def raman_forward_segment(p_in, rho, bandwidth_ghz, alpha_c, alpha_q, length_km):
    """Co-propagating Raman power (W) at the end of a uniform segment."""
    if length_km == 0.0 or p_in == 0.0:
        return 0.0
    d = alpha_c - alpha_q
    scale = p_in * rho * bandwidth_ghz
    if abs(d) < _ALPHA_DEGENERATE:
        a = 0.5 * (alpha_c + alpha_q)
        return scale * length_km * math.exp(-a * length_km)
    # exp(-aq L) - exp(-ac L) written to stay accurate for small d
    return scale * math.exp(-alpha_q * length_km) * (-math.expm1(-d * length_km)) / d


def raman_backward_segment(p_in, rho, bandwidth_ghz, alpha_c, alpha_q, length_km):
    """Counter-propagating Raman power (W) returned to the pump input end."""
    if length_km == 0.0 or p_in == 0.0:
        return 0.0
    s = alpha_c + alpha_q
    return p_in * rho * bandwidth_ghz * (-math.expm1(-s * length_km)) / s


@dataclass(frozen=True)
class NoiseBudget:
    raman_forward: float = 0.0
    raman_backward: float = 0.0
    leakage: float = 0.0

    def __post_init__(self):
        if min(self.raman_forward, self.raman_backward, self.leakage) < 0:
            raise ValueError("noise powers must be non-negative")

    @property
    def total_in_band(self):
        return self.raman_forward + self.raman_backward + self.leakage

    def scaled(self, k):
        return NoiseBudget(self.raman_forward * k, self.raman_backward * k, self.leakage * k)


def _channel_rho(ch, rho):
    return rho if ch.raman_coefficient is None else ch.raman_coefficient


def _tx_mux_classical_t(link):
    return db_to_linear(classical_path_loss_db(link.tx_filters()))


def _rx_mux_classical_t(link):
    return db_to_linear(classical_path_loss_db(link.rx_filters()))


def raman_over_link(link, plan, rho, bandwidth_ghz, lambda_q=1310.0):
    """In-band Raman power (W) at the receiver end of the line.

    Co-propagating plans enter with the quantum signal through the transmitter
    mux; counter-propagating plans enter at the receiver end.  Noise generated
    upstream is attenuated by downstream fiber and lumped elements at their
    quantum-band values.
    """
    if not plan.channels:
        return 0.0
    segs = link.segments()
    total = 0.0
    for ch in plan.channels:
        r = _channel_rho(ch, rho)
        if plan.direction == "co":
            pump = ch.power_w * _tx_mux_classical_t(link)
            noise = 0.0
            for kind, obj, length in segs:
                if kind == "lumped":
                    pump *= db_to_linear(obj.classical_db)
                    noise *= db_to_linear(obj.loss_q_db)
                    continue
                aq = db_per_km_to_nepers(obj.alpha_q_db_per_km)
                ac = db_per_km_to_nepers(obj.alpha_c_db_per_km)
                noise = noise * math.exp(-aq * length) + raman_forward_segment(
                    pump, r, bandwidth_ghz, ac, aq, length)
                pump *= math.exp(-ac * length)
            total += noise
        else:
            # pump travels from the receiver end towards the transmitter; the
            # backscattered light travels with the quantum signal
            pump = ch.power_w * _rx_mux_classical_t(link)
            to_receiver = 1.0  # quantum-band transmission from current point to receiver
            for kind, obj, length in reversed(segs):
                if kind == "lumped":
                    pump *= db_to_linear(obj.classical_db)
                    to_receiver *= db_to_linear(obj.loss_q_db)
                    continue
                aq = db_per_km_to_nepers(obj.alpha_q_db_per_km)
                ac = db_per_km_to_nepers(obj.alpha_c_db_per_km)
                total += to_receiver * raman_backward_segment(
                    pump, r, bandwidth_ghz, ac, aq, length)
                pump *= math.exp(-ac * length)
                to_receiver *= math.exp(-aq * length)
    return total


def leakage_power(received_classical_w, isolations_db):
    """Classical power left after the isolation of every element in the chain."""
    total_db = 0.0
    for iso in isolations_db:
        if iso < 0:
            raise ValueError("isolation must be >= 0 dB")
        total_db += iso
    return received_classical_w * db_to_linear(total_db)


def classical_power_at_demux(link, plan):
    """Classical power (W) present at the receiver-side demux input."""
    if not plan.channels:
        return 0.0
    if plan.direction == "counter":
        return plan.total_power_w
    t_tx = _tx_mux_classical_t(link)
    return sum(ch.power_w * t_tx * transmittance(link, ch.wavelength_nm)
               for ch in plan.channels)


def noise_budget(link, plan, rho, bandwidth_ghz, lambda_q=1310.0):
    raman = raman_over_link(link, plan, rho, bandwidth_ghz, lambda_q)
    iso = [f.isolation_db for f in link.rx_filters() if f.isolation_db is not None]
    leak = leakage_power(classical_power_at_demux(link, plan), iso)
    if plan.direction == "co":
        return NoiseBudget(raman_forward=raman, leakage=leak)
    return NoiseBudget(raman_backward=raman, leakage=leak)


def noise_click_rate(noise, insertion_loss_db, eta_det, lambda_q=1310.0, p_z_bob=None):
    """Untimed noise click rate (Hz) from in-band noise power.

    Returns the total rate, or a ``(z, x)`` pair split by Bob's passive basis
    choice when ``p_z_bob`` is given.
    """
    if not 0.0 <= eta_det <= 1.0:
        raise ValueError(f"detector efficiency {eta_det} outside [0, 1]")
    power = noise.total_in_band if isinstance(noise, NoiseBudget) else float(noise)
    rate = power * db_to_linear(insertion_loss_db) * eta_det / photon_energy(lambda_q)
    if p_z_bob is None:
        return rate
    return rate * p_z_bob, rate * (1.0 - p_z_bob)

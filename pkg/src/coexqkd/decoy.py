"""Detection statistics and finite-key length for one-decoy time-bin BB84.

Key bits come from Z-basis events.  The single X-basis state only feeds the
phase-error estimate.  Counts are indexed by intensity in the order
``(mu1, mu2)``.
"""

import math
from dataclasses import dataclass, field

from .mathcore import binary_entropy, hoeffding_delta

# number of failure events in the security accounting of the one-decoy analysis
N_EPS_TERMS = 19


class NoKeyError(Exception):
    """Raised when no key can be produced (no Z-basis detections)."""


@dataclass(frozen=True)
class ProtocolParams:
    rep_rate_hz: float = 2.5e9
    mu1: float = 0.5
    mu2: float = 0.2
    p_mu1: float = 0.7
    p_z_alice: float = 0.9
    p_z_bob: float = 0.9
    e_opt_z: float = 0.01
    e_opt_x: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.mu2 < self.mu1 <= 1.0):
            raise ValueError(f"need 0 < mu2 < mu1 <= 1, got mu1={self.mu1}, mu2={self.mu2}")
        for name in ("p_mu1", "p_z_alice", "p_z_bob"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        for name in ("e_opt_z", "e_opt_x"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5], got {v}")
        if self.rep_rate_hz <= 0:
            raise ValueError("repetition rate must be positive")

    @property
    def intensities(self):
        return (self.mu1, self.mu2)

    @property
    def probabilities(self):
        return (self.p_mu1, 1.0 - self.p_mu1)

    def tau(self, n):
        """Probability that a pulse carries exactly ``n`` photons."""
        return sum(p * math.exp(-k) * k ** n / math.factorial(n)
                   for k, p in zip(self.intensities, self.probabilities))


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.25
    dark_count_rate_z_hz: float = 91.0
    dark_count_rate_x_hz: float = 108.0
    dead_time_z_s: float = 32e-6
    dead_time_x_s: float = 40e-6

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("detector efficiency must lie in [0, 1]")
        for name in ("dark_count_rate_z_hz", "dark_count_rate_x_hz",
                     "dead_time_z_s", "dead_time_x_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class SecurityParams:
    eps_sec: float = 1e-9
    eps_cor: float = 1e-9
    block_size_bits: float = 8e6
    f_ec: float = 1.05

    def __post_init__(self):
        for name in ("eps_sec", "eps_cor"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.f_ec < 1.0:
            raise ValueError("reconciliation efficiency must be >= 1")
        if self.block_size_bits <= 0:
            raise ValueError("block size must be positive")

    @property
    def eps_hoeffding(self):
        return self.eps_sec / N_EPS_TERMS


def dead_time_corrected(rate, dead_time):
    """Non-paralyzable dead-time model."""
    return rate / (1.0 + rate * dead_time)


def expected_error_rates(signal_rate, noise_rate, dark_rate, e_opt):
    """Error rate when background clicks are split evenly over the two outcomes."""
    if min(signal_rate, noise_rate, dark_rate) < 0:
        raise ValueError("rates must be non-negative")
    total = signal_rate + noise_rate + dark_rate
    if total == 0:
        return 0.5
    return (e_opt * signal_rate + 0.5 * (noise_rate + dark_rate)) / total


@dataclass(frozen=True)
class DetectionRates:
    """Sifted detection and error rates (Hz) per intensity after dead time."""

    n_z: tuple
    m_z: tuple
    n_x: tuple
    m_x: tuple
    raw_z: float  # every click of the Z detector, gated or not
    raw_x: float
    live_z: float
    live_x: float

    @property
    def rate_z(self):
        return sum(self.n_z)

    @property
    def rate_x(self):
        return sum(self.n_x)

    @property
    def qber_z(self):
        return sum(self.m_z) / self.rate_z if self.rate_z > 0 else 0.5

    @property
    def qber_x(self):
        return sum(self.m_x) / self.rate_x if self.rate_x > 0 else 0.5


def _click_and_error(x, lam, e_opt):
    # x: mean signal photons detected in the accepted window; lam: background mean
    p_bg = -math.expm1(-lam)
    no_sig = math.exp(-x)
    click = -math.expm1(-x) + p_bg * no_sig
    err = e_opt * -math.expm1(-x) + 0.5 * p_bg * no_sig
    return click, err


def expected_rates(transmission, protocol, detector, acceptance=1.0,
                   noise_rate_z=0.0, noise_rate_x=0.0, duty_cycle=0.5):
    """Weak-coherent detection model for both detectors.

    ``transmission`` covers everything from Alice's output to the detector
    except the detection efficiency and the gating acceptance.  Noise rates are
    untimed click rates at each detector; only ``duty_cycle`` of them fall into
    accepted windows, but all of them cost dead time.
    """
    if not 0.0 <= transmission <= 1.0:
        raise ValueError(f"transmission {transmission} outside [0, 1]")
    if not 0.0 <= acceptance <= 1.0:
        raise ValueError(f"acceptance {acceptance} outside [0, 1]")
    pr, det = protocol, detector
    rep = pr.rep_rate_hz
    eta = transmission * det.efficiency
    bg_z = noise_rate_z + det.dark_count_rate_z_hz
    bg_x = noise_rate_x + det.dark_count_rate_x_hz

    raw_z = bg_z + rep * sum(p * -math.expm1(-k * eta * pr.p_z_bob)
                             for k, p in zip(pr.intensities, pr.probabilities))
    raw_x = bg_x + rep * sum(p * -math.expm1(-k * eta * (1 - pr.p_z_bob))
                             for k, p in zip(pr.intensities, pr.probabilities))
    live_z = 1.0 / (1.0 + raw_z * det.dead_time_z_s)
    live_x = 1.0 / (1.0 + raw_x * det.dead_time_x_s)

    lam_z = bg_z * duty_cycle / rep
    lam_x = bg_x * duty_cycle / rep
    n_z, m_z, n_x, m_x = [], [], [], []
    for k, p in zip(pr.intensities, pr.probabilities):
        c, e = _click_and_error(k * eta * acceptance * pr.p_z_bob, lam_z, pr.e_opt_z)
        w = rep * p * pr.p_z_alice * live_z
        n_z.append(w * c)
        m_z.append(w * e)
        c, e = _click_and_error(k * eta * acceptance * (1 - pr.p_z_bob), lam_x, pr.e_opt_x)
        w = rep * p * (1 - pr.p_z_alice) * live_x
        n_x.append(w * c)
        m_x.append(w * e)
    return DetectionRates(tuple(n_z), tuple(m_z), tuple(n_x), tuple(m_x),
                          raw_z, raw_x, live_z, live_x)


@dataclass(frozen=True)
class TallySet:
    n_z: tuple
    m_z: tuple
    n_x: tuple
    m_x: tuple
    acquisition_time_s: float

    def __post_init__(self):
        for n, m in zip(self.n_z + self.n_x, self.m_z + self.m_x):
            if not 0 <= m <= n:
                raise ValueError(f"error count {m} outside [0, {n}]")

    @property
    def total_z(self):
        return sum(self.n_z)

    @property
    def errors_z(self):
        return sum(self.m_z)

    @property
    def total_x(self):
        return sum(self.n_x)

    @property
    def errors_x(self):
        return sum(self.m_x)

    @property
    def qber_z(self):
        return self.errors_z / self.total_z if self.total_z > 0 else 0.5


def synthesize_tallies(rates, security, mode="expected", rng=None):
    """Counts accumulated while the Z basis fills one privacy-amplification block.

    ``mode="poisson"`` draws every count from a Poisson law around its expected
    value; it needs an explicit ``numpy.random.Generator``.
    """
    if rates.rate_z <= 0:
        raise NoKeyError("no Z-basis detections: acquisition time is unbounded")
    t = security.block_size_bits / rates.rate_z
    groups = [tuple(r * t for r in g) for g in (rates.n_z, rates.m_z, rates.n_x, rates.m_x)]
    if mode == "expected":
        return TallySet(*groups, t)
    if mode != "poisson":
        raise ValueError(f"unknown tally mode {mode!r}")
    if rng is None:
        raise ValueError("poisson mode needs a seeded random generator")
    out = []
    for n, m in zip((groups[0], groups[2]), (groups[1], groups[3])):
        # errors and correct clicks are independent Poisson streams
        e = tuple(int(rng.poisson(v)) for v in m)
        ok = tuple(int(rng.poisson(nv - mv)) for nv, mv in zip(n, m))
        out.append((tuple(a + b for a, b in zip(e, ok)), e))
    return TallySet(out[0][0], out[0][1], out[1][0], out[1][1], t)


@dataclass(frozen=True)
class FiniteKeyBounds:
    s_z0: float
    s_z1: float
    s_z0_upper: float
    s_x1: float
    v_x1: float
    phi_x: float
    flags: tuple = field(default=())


def _gamma(a, b, c, d):
    """Finite-sampling correction between the X-basis and Z-basis phase error rates."""
    if not (0.0 < b < 1.0) or c <= 0 or d <= 0:
        return math.inf
    inner = (c + d) / (c * d * (1 - b) * b) * (N_EPS_TERMS ** 2 / a ** 2)
    if inner <= 1.0:
        return 0.0
    return math.sqrt((c + d) * (1 - b) * b / (c * d * math.log(2)) * math.log2(inner))


def _scaled(counts, total, protocol, eps, sign):
    d = hoeffding_delta(total, eps)
    return tuple(math.exp(k) / p * (n + sign * d)
                 for n, k, p in zip(counts, protocol.intensities, protocol.probabilities))


def _single_photon_lower(n_minus, n_plus, s0_upper, protocol):
    mu1, mu2 = protocol.intensities
    tau0, tau1 = protocol.tau(0), protocol.tau(1)
    return (tau1 * mu1 / (mu2 * (mu1 - mu2))
            * (n_minus[1] - (mu2 / mu1) ** 2 * n_plus[0]
               - (mu1 ** 2 - mu2 ** 2) / mu1 ** 2 * s0_upper / tau0))


def _vacuum_upper(m, m_total, protocol, eps):
    # vacuum events are wrong half of the time; the decoy intensity bounds them
    mu2, p2 = protocol.mu2, protocol.probabilities[1]
    tau0 = protocol.tau(0)
    return 2.0 * tau0 * math.exp(mu2) / p2 * (m[1] + hoeffding_delta(m_total, eps))


def vacuum_and_single_bounds(tallies, protocol, security):
    """Decoy bounds on vacuum and single-photon Z counts and the phase error rate."""
    eps = security.eps_hoeffding
    pr = protocol
    mu1, mu2 = pr.intensities
    tau0, tau1 = pr.tau(0), pr.tau(1)
    flags = []

    nz_minus = _scaled(tallies.n_z, tallies.total_z, pr, eps, -1)
    nz_plus = _scaled(tallies.n_z, tallies.total_z, pr, eps, +1)
    s_z0 = tau0 / (mu1 - mu2) * (mu1 * nz_minus[1] - mu2 * nz_plus[0])
    if s_z0 < 0:
        flags.append("s_z0_clamped")
        s_z0 = 0.0
    s_z0_up = _vacuum_upper(tallies.m_z, tallies.errors_z, pr, eps)
    s_z1 = _single_photon_lower(nz_minus, nz_plus, s_z0_up, pr)
    if s_z1 < 0:
        flags.append("s_z1_clamped")
        s_z1 = 0.0
    # the clamps above can leave s_z0 + s_z1 above the sifted count when the
    # block is tiny; never claim more than was detected
    if s_z0 + s_z1 > tallies.total_z:
        flags.append("sum_clamped")
        s_z1 = max(0.0, tallies.total_z - s_z0)

    nx_minus = _scaled(tallies.n_x, tallies.total_x, pr, eps, -1)
    nx_plus = _scaled(tallies.n_x, tallies.total_x, pr, eps, +1)
    s_x0_up = _vacuum_upper(tallies.m_x, tallies.errors_x, pr, eps)
    s_x1 = _single_photon_lower(nx_minus, nx_plus, s_x0_up, pr)
    if s_x1 < 0:
        flags.append("s_x1_clamped")
        s_x1 = 0.0
    mx_minus = _scaled(tallies.m_x, tallies.errors_x, pr, eps, -1)
    mx_plus = _scaled(tallies.m_x, tallies.errors_x, pr, eps, +1)
    v_x1 = tau1 / (mu1 - mu2) * (mx_plus[0] - mx_minus[1])
    if v_x1 < 0:
        flags.append("v_x1_clamped")
        v_x1 = 0.0

    if s_x1 <= 0 or s_z1 <= 0:
        phi = 0.5
        flags.append("phi_undetermined")
    else:
        ratio = min(v_x1 / s_x1, 0.5)
        phi = ratio + _gamma(security.eps_sec, ratio, s_x1, s_z1) if ratio > 0 else ratio
        if phi > 0.5:
            phi = 0.5
    return FiniteKeyBounds(s_z0, s_z1, s_z0_up, s_x1, v_x1, phi, tuple(flags))


def key_length_real(tallies, bounds, security):
    """Unrounded key length; may be negative when no key can be extracted."""
    leak = security.f_ec * tallies.total_z * binary_entropy(min(tallies.qber_z, 0.5))
    return (bounds.s_z0 + bounds.s_z1 * (1.0 - binary_entropy(bounds.phi_x)) - leak
            - 6.0 * math.log2(N_EPS_TERMS / security.eps_sec)
            - math.log2(2.0 / security.eps_cor))


def secret_key_length(tallies, bounds, security):
    """Extractable key length in bits (0 when the bound is not positive)."""
    return max(0, math.floor(key_length_real(tallies, bounds, security)))


def secret_key_rate(tallies, bounds, security):
    return secret_key_length(tallies, bounds, security) / tallies.acquisition_time_s

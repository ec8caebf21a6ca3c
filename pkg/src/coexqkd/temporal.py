"""Pulse shape, detector jitter, gating and spectral filtering of the quantum signal.

Times are in ps and frequencies in GHz.  Arrival-time densities are sampled
on a uniform grid with at most 0.1 ps spacing and normalized to unit area.
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import optimize, signal, special

SECH2_FWHM = 2.0 * math.acosh(math.sqrt(2.0))  # 1.7627..., FWHM of sech^2(x)
GAUSS_FWHM = 2.0 * math.sqrt(2.0 * math.log(2.0))  # 2.3548...
# transform-limited time-bandwidth products (intensity FWHM x spectral FWHM)
TBP = {"sech2": 0.3148, "gaussian": 0.4413}

FILTER_SHAPES = ("gaussian", "sech2", "rect")


@dataclass(frozen=True)
class PulseModel:
    family: str = "sech2"
    fwhm_ps: float = 26.0
    chirped: bool = False
    broadened_fwhm_ps: float = None  # None: no broadening
    spectral_fwhm_ghz: float = None  # None: transform limited

    def __post_init__(self):
        if self.family not in TBP:
            raise ValueError(f"unknown pulse family {self.family!r}")
        if self.fwhm_ps < 0:
            raise ValueError("pulse FWHM must be >= 0")
        if self.broadened_fwhm_ps is not None and self.broadened_fwhm_ps < self.fwhm_ps:
            raise ValueError("broadened width must not be shorter than the pulse")

    @property
    def arrival_fwhm_ps(self):
        return self.fwhm_ps if self.broadened_fwhm_ps is None else self.broadened_fwhm_ps

    @property
    def transform_limited_ghz(self):
        return TBP[self.family] / self.fwhm_ps * 1e3

    @property
    def effective_spectral_fwhm_ghz(self):
        if self.spectral_fwhm_ghz is not None:
            return self.spectral_fwhm_ghz
        return self.transform_limited_ghz


@dataclass(frozen=True)
class JitterModel:
    """Detector timing response: Gaussian core, optionally with an exponential tail."""

    fwhm_ps: float = 50.0
    tail_ps: float = 0.0

    def __post_init__(self):
        if self.fwhm_ps < 0 or self.tail_ps < 0:
            raise ValueError("jitter parameters must be >= 0")

    @property
    def sigma(self):
        return self.fwhm_ps / GAUSS_FWHM


@dataclass(frozen=True)
class GateModel:
    window_ps: float = 100.0
    bins_per_qubit: int = 2
    period_ps: float = 400.0
    offset_ps: float = 0.0
    centering: str = "optimal"  # or "peak"

    def __post_init__(self):
        if self.window_ps <= 0 or self.period_ps <= 0:
            raise ValueError("window and period must be positive")
        if self.window_ps > self.period_ps / self.bins_per_qubit + 1e-9:
            raise ValueError(
                f"window {self.window_ps} ps exceeds period/bins = "
                f"{self.period_ps / self.bins_per_qubit} ps")
        if self.centering not in ("optimal", "peak"):
            raise ValueError(f"unknown centering {self.centering!r}")


@dataclass(frozen=True)
class SpectralFilter:
    fwhm_ghz: float = 47.0
    shape: str = "gaussian"
    peak_loss_db: float = 1.8
    bandwidth_correction: float = 1.0

    def __post_init__(self):
        if self.shape not in FILTER_SHAPES:
            raise ValueError(f"unknown filter shape {self.shape!r}")
        if self.fwhm_ghz <= 0:
            raise ValueError("filter bandwidth must be positive")

    def transmission(self, f_ghz):
        """Power transmission normalized to 1 at the passband center."""
        x = np.asarray(f_ghz, dtype=float) / self.fwhm_ghz
        return _shape(self.shape, x)

    @property
    def noise_bandwidth_ghz(self):
        """Equivalent rectangular bandwidth seen by spectrally flat noise."""
        return self.fwhm_ghz * _ENBW[self.shape] * self.bandwidth_correction


def _shape(name, x):
    # unit-FWHM profiles with peak 1
    if name == "gaussian":
        return np.exp(-4.0 * math.log(2.0) * x ** 2)
    if name == "sech2":
        return 1.0 / np.cosh(np.clip(SECH2_FWHM * x, -350, 350)) ** 2
    return (np.abs(x) <= 0.5).astype(float)


_ENBW = {
    "gaussian": math.sqrt(math.pi / (4.0 * math.log(2.0))),
    "sech2": 2.0 / SECH2_FWHM,
    "rect": 1.0,
}


def intensity_profile(family, fwhm_ps, t):
    """Normalized intensity (unit area) of a pulse centered at t = 0."""
    t = np.asarray(t, dtype=float)
    if family == "gaussian":
        s = fwhm_ps / GAUSS_FWHM
        return np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
    T = fwhm_ps / SECH2_FWHM
    return 1.0 / np.cosh(np.clip(t / T, -350, 350)) ** 2 / (2.0 * T)


def jitter_kernel(jitter, t):
    t = np.asarray(t, dtype=float)
    s, tau = jitter.sigma, jitter.tail_ps
    if tau == 0.0:
        return np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
    if s == 0.0:
        return np.where(t >= 0, np.exp(-np.clip(t, 0, None) / tau) / tau, 0.0)
    # exponentially modified Gaussian; erfcx branch where erfc would underflow
    z = (s / tau - t / s) / math.sqrt(2.0)
    zp = np.maximum(z, 0.0)
    head = np.exp(-0.5 * (t / s) ** 2) / (2.0 * tau) * special.erfcx(zp)
    expo = np.minimum(0.5 * (s / tau) ** 2 - t / tau, 700.0)
    tail = np.exp(expo) / (2.0 * tau) * special.erfc(np.minimum(z, 0.0))
    return np.where(z >= 0, head, tail)


class ArrivalDistribution:
    """Sampled arrival-time density with helpers for windowed integrals."""

    def __init__(self, t, density):
        self.t = t
        self.dt = float(t[1] - t[0])
        area = np.trapezoid(density, dx=self.dt)
        self.density = density / area
        cdf = np.concatenate(([0.0], np.cumsum(0.5 * (self.density[1:] + self.density[:-1]))))
        self.cdf = cdf * self.dt

    @property
    def peak_time(self):
        return float(self.t[np.argmax(self.density)])

    def mass(self, a, b):
        return float(np.interp(b, self.t, self.cdf) - np.interp(a, self.t, self.cdf))

    def mean(self):
        return float(np.trapezoid(self.t * self.density, dx=self.dt))

    def std(self):
        m = self.mean()
        return float(math.sqrt(np.trapezoid((self.t - m) ** 2 * self.density, dx=self.dt)))

    def integral(self):
        return float(np.trapezoid(self.density, dx=self.dt))


def _half_span(width_scale, tail):
    return 12.0 * width_scale + 40.0 * tail + 300.0


@lru_cache(maxsize=256)
def arrival_distribution(pulse, jitter, resolution_ps=0.1):
    """Arrival-time density of detection events: pulse intensity convolved with jitter."""
    if resolution_ps > 0.1:
        raise ValueError("grid resolution must be <= 0.1 ps")
    w = pulse.arrival_fwhm_ps
    half = _half_span(w + jitter.fwhm_ps, jitter.tail_ps)
    n = int(round(half / resolution_ps))
    t = np.arange(-n, n + 1) * resolution_ps
    has_pulse = w > 2 * resolution_ps
    has_jitter = jitter.fwhm_ps > 2 * resolution_ps or jitter.tail_ps > 0
    if has_pulse:
        p = intensity_profile(pulse.family, w, t)
    if has_jitter:
        if jitter.fwhm_ps <= 2 * resolution_ps:
            jitter = replace(jitter, fwhm_ps=0.0)
        k = jitter_kernel(jitter, t)
    if has_pulse and has_jitter:
        d = signal.fftconvolve(p, k, mode="same") * resolution_ps
    elif has_pulse:
        d = p
    elif has_jitter:
        d = k
    else:
        # both widths below the grid: a narrow Gaussian stands in for a delta
        d = intensity_profile("gaussian", 4 * resolution_ps, t)
    return ArrivalDistribution(t, np.clip(d, 0.0, None))


def best_window_start(dist, window_ps):
    """Window start that captures the largest share of the density."""
    t, cdf = dist.t, dist.cdf
    end = np.interp(t + window_ps, t, cdf)
    i = int(np.argmax(end - cdf))
    # refine on a sub-grid around the discrete optimum
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, len(t) - 1)]
    res = optimize.minimize_scalar(lambda a: -dist.mass(a, a + window_ps),
                                   bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-6})
    return float(res.x)


def window_acceptance(dist, gate):
    """Fraction of detection events that fall inside the acceptance window."""
    w = gate.window_ps
    if gate.centering == "peak":
        start = dist.peak_time - w / 2.0
    else:
        start = best_window_start(dist, w)
    start += gate.offset_ps
    return min(1.0, max(0.0, dist.mass(start, start + w)))


def temporal_loss_db(pulse, jitter, gate):
    acc = window_acceptance(arrival_distribution(pulse, jitter), gate)
    return -10.0 * math.log10(acc)


def noise_duty_cycle(gate):
    """Probability that a uniformly timed noise click lands in an accepted window."""
    return gate.bins_per_qubit * gate.window_ps / gate.period_ps


def _pulse_spectrum(family, fwhm_ghz, f):
    # power spectra: sech^2 intensity pulses have sech^2 spectra, Gaussians Gaussian
    return _shape(family, np.asarray(f) / fwhm_ghz)


@lru_cache(maxsize=1024)
def spectral_overlap(pulse, filt):
    """Fraction of the pulse energy transmitted by the filter shape (peak loss excluded)."""
    ws = pulse.effective_spectral_fwhm_ghz
    half = 40.0 * max(ws, filt.fwhm_ghz)
    f = np.linspace(-half, half, 400001)
    s = _pulse_spectrum(pulse.family, ws, f)
    return float(np.trapezoid(s * filt.transmission(f), f) / np.trapezoid(s, f))


def spectral_mismatch_db(pulse, filt):
    return -10.0 * math.log10(spectral_overlap(pulse, filt))


def spectral_mismatch_loss(pulse, filt):
    """Total filter loss in dB for this pulse: peak loss plus spectral mismatch."""
    return filt.peak_loss_db + spectral_mismatch_db(pulse, filt)


def _field(family, fwhm_ps, t):
    if family == "gaussian":
        return np.exp(-2.0 * math.log(2.0) * (t / fwhm_ps) ** 2)
    T = fwhm_ps / SECH2_FWHM
    return 1.0 / np.cosh(np.clip(t / T, -700, 700))


@lru_cache(maxsize=4096)
def filtered_signal_fraction(pulse, filt, jitter, gate, resolution_ps=0.1):
    """Spectral transmission and gate acceptance of a transform-limited pulse.

    The filter acts on the optical field (zero phase), so narrowing it stretches
    the pulse in time; jitter and gating are applied to the filtered intensity.
    The filter peak loss is excluded.
    """
    if pulse.chirped:
        raise ValueError("field-level filtering needs a transform-limited pulse")
    half = _half_span(pulse.fwhm_ps + jitter.fwhm_ps + 1e3 / filt.fwhm_ghz, jitter.tail_ps)
    n = int(2 ** math.ceil(math.log2(2 * half / resolution_ps)))
    t = (np.arange(n) - n // 2) * resolution_ps
    e = _field(pulse.family, pulse.fwhm_ps, t)
    energy = np.sum(e ** 2)
    f_ghz = np.fft.fftfreq(n, resolution_ps) * 1e3
    ef = np.fft.fft(np.fft.ifftshift(e)) * np.sqrt(filt.transmission(f_ghz))
    inten = np.abs(np.fft.fftshift(np.fft.ifft(ef))) ** 2
    kept = np.sum(inten) / energy  # spectral transmission
    if jitter.fwhm_ps > 2 * resolution_ps or jitter.tail_ps > 0:
        j = jitter if jitter.fwhm_ps > 2 * resolution_ps else replace(jitter, fwhm_ps=0.0)
        inten = signal.fftconvolve(inten, jitter_kernel(j, t), mode="same")
    dist = ArrivalDistribution(t, np.clip(inten, 0.0, None))
    return float(kept), window_acceptance(dist, gate)


def signal_fraction(pulse, filt, jitter, gate):
    """(spectral transmission, gate acceptance) of the signal, filter peak loss excluded.

    Chirped pulses use the calibrated broadened width and effective spectral
    width, with spectral and temporal effects taken as separable.
    Transform-limited pulses are filtered at field level.
    """
    if pulse.chirped:
        acc = window_acceptance(arrival_distribution(pulse, jitter), gate)
        return spectral_overlap(pulse, filt), acc
    return filtered_signal_fraction(pulse, filt, jitter, gate)


@lru_cache(maxsize=64)
def optimize_filter(pulse, jitter, gate, shapes=FILTER_SHAPES, peak_loss_db=0.0,
                    bounds_ghz=(1.0, 200.0)):
    """Filter shape and bandwidth maximizing detected signal per unit noise bandwidth.

    With detector noise negligible, the tolerable noise power scales with this
    ratio, so it is the figure of merit for the noise-limited regime.
    """
    best = None
    for shape in shapes:
        def neg_fom(log_b, shape=shape):
            filt = SpectralFilter(math.exp(log_b), shape, peak_loss_db)
            kept, acc = signal_fraction(pulse, filt, jitter, gate)
            return -kept * acc / filt.noise_bandwidth_ghz

        lo, hi = math.log(bounds_ghz[0]), math.log(bounds_ghz[1])
        grid = np.linspace(lo, hi, 25)
        vals = [neg_fom(x) for x in grid]
        i = int(np.argmin(vals))
        res = optimize.minimize_scalar(neg_fom, bounds=(grid[max(i - 1, 0)],
                                                        grid[min(i + 1, len(grid) - 1)]),
                                       method="bounded", options={"xatol": 1e-4})
        if best is None or res.fun < best[0]:
            best = (res.fun, SpectralFilter(math.exp(res.x), shape, peak_loss_db))
    return best[1]


def calibrate_broadened_width(pulse, jitter, gate, target_loss_db=1.9, upper_ps=2000.0):
    """Broadened pulse FWHM giving ``target_loss_db`` of gating loss."""
    def f(w):
        return temporal_loss_db(replace(pulse, broadened_fwhm_ps=w), jitter, gate) - target_loss_db

    lo = pulse.fwhm_ps
    if f(lo) > 0:
        raise ValueError(
            f"jitter alone already exceeds {target_loss_db} dB of gating loss")
    if f(upper_ps) < 0:
        raise ValueError(f"no broadening up to {upper_ps} ps reaches {target_loss_db} dB")
    return optimize.brentq(f, lo, upper_ps, xtol=1e-10, rtol=1e-13)


def calibrate_spectral_width(pulse, filt, target_mismatch_db=2.2):
    """Effective spectral FWHM of a chirped pulse giving the target mismatch loss."""
    def f(ws):
        return spectral_mismatch_db(replace(pulse, spectral_fwhm_ghz=ws), filt) - target_mismatch_db

    lo = pulse.transform_limited_ghz
    if f(lo) > 0:
        raise ValueError("transform-limited pulse already exceeds the target mismatch")
    hi = lo
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e5:
            raise ValueError("spectral width search diverged")
    return optimize.brentq(f, lo, hi, xtol=1e-10, rtol=1e-13)

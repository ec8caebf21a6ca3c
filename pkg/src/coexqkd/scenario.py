"""End-to-end scenarios: transmission, noise, gating and finite-key length combined."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize

from . import temporal
from .decoy import (DetectorParams, NoKeyError, ProtocolParams, SecurityParams,
                    expected_rates, key_length_real, secret_key_length, synthesize_tallies,
                    vacuum_and_single_bounds)
from .linkmodel import ClassicalPlan, LinkTopology, received_classical_power_dbm, transmittance
from .mathcore import db_to_linear, linear_to_db
from .raman import noise_budget, noise_click_rate
from .temporal import GateModel, JitterModel, PulseModel, SpectralFilter

log = logging.getLogger(__name__)

DEFAULT_BRACKET_DBM = (-30.0, 35.0)


class ModelError(Exception):
    """A sub-model failed; the message carries the scenario context."""


@dataclass(frozen=True)
class Receiver:
    quantum_wavelength_nm: float = 1310.0
    detector: DetectorParams = field(default_factory=DetectorParams)
    gate: GateModel = field(default_factory=GateModel)
    pulse: PulseModel = field(default_factory=lambda: PulseModel(
        "sech2", 26.0, chirped=True, broadened_fwhm_ps=60.60176707551964,
        spectral_fwhm_ghz=55.77574154542669))
    jitter: JitterModel = field(default_factory=lambda: JitterModel(50.0, 50.0))
    fbg_fwhm_ghz: float = 47.0
    fbg_shape: str = "gaussian"
    noise_bandwidth_correction: float = 1.0


@dataclass(frozen=True)
class Scenario:
    link: LinkTopology
    plan: ClassicalPlan
    receiver: Receiver = field(default_factory=Receiver)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    security: SecurityParams = field(default_factory=SecurityParams)
    raman_coefficient: float = 1e-9  # 1/(km GHz)

    def spectral_element(self):
        for f in self.link.filters:
            if f.kind == "spectral":
                return f
        return None

    def spectral_filter(self):
        el = self.spectral_element()
        peak = 0.0 if el is None or el.peak_loss_db is None else el.peak_loss_db
        r = self.receiver
        return SpectralFilter(r.fbg_fwhm_ghz, r.fbg_shape, peak, r.noise_bandwidth_correction)

    def with_launch_power(self, total_dbm):
        """Copy with the classical plan carrying ``total_dbm`` (None: no classical light)."""
        if total_dbm is None:
            return replace(self, plan=replace(self.plan, channels=()))
        if self.plan.channels:
            return replace(self, plan=self.plan.with_total_power(total_dbm))
        return replace(self, plan=ClassicalPlan.dwdm_grid(total_dbm,
                                                          direction=self.plan.direction))

    def with_fiber_length(self, length_km):
        return replace(self, link=self.link.scaled_to_length(length_km))


@dataclass(frozen=True)
class ScenarioResult:
    launch_power_dbm: float
    received_power_dbm: float
    fiber_length_km: float
    line_loss_db: float
    signal_transmission: float  # Alice output to detector, without efficiency and gate
    spectral_transmission: float
    acceptance: float
    noise_power_w: float  # in-band noise at the receiver input
    noise_rate_z_hz: float
    noise_rate_x_hz: float
    rate_z_hz: float
    rate_x_hz: float
    qber_z: float
    qber_x: float
    phi_x: float
    s_z0: float
    s_z1: float
    acquisition_time_s: float
    key_length_real: float
    key_length_bits: int
    skr_bps: float
    flags: tuple = ()

    def as_row(self):
        return {
            "launch_power_dbm": self.launch_power_dbm,
            "received_power_dbm": self.received_power_dbm,
            "fiber_length_km": self.fiber_length_km,
            "noise_rate_hz": self.noise_rate_z_hz + self.noise_rate_x_hz,
            "qber_z": self.qber_z,
            "phi_x": self.phi_x,
            "skr_bps": self.skr_bps,
        }


def _static_losses(sc):
    """(signal dB, noise dB) of fixed elements along the quantum path."""
    sig = noise = 0.0
    for f in sc.link.filters:
        if f.kind == "temporal":
            continue
        if f.kind == "spectral" and f.peak_loss_db is not None:
            sig += f.peak_loss_db
        else:
            sig += f.insertion_loss_db
        if f.location == "rx":
            noise += f.noise_db
    return sig, noise


def evaluate(sc, mode="expected", rng=None):
    """Evaluate one operating point of a scenario."""
    rx = sc.receiver
    lam = rx.quantum_wavelength_nm
    try:
        filt = sc.spectral_filter()
        kept, acc = temporal.signal_fraction(rx.pulse, filt, rx.jitter, rx.gate)
        sig_db, noise_db = _static_losses(sc)
        t_line = transmittance(sc.link, lam)
        t_signal = t_line * db_to_linear(sig_db) * kept
        noise = noise_budget(sc.link, sc.plan, sc.raman_coefficient, filt.noise_bandwidth_ghz, lam)
        nz, nx = noise_click_rate(noise, noise_db, rx.detector.efficiency, lam,
                                  sc.protocol.p_z_bob)
        rates = expected_rates(t_signal, sc.protocol, rx.detector, acc, nz, nx,
                               temporal.noise_duty_cycle(rx.gate))
    except ValueError as exc:
        raise ModelError(f"{_describe(sc)}: {exc}") from exc

    flags = []
    try:
        tallies = synthesize_tallies(rates, sc.security, mode, rng)
    except NoKeyError:
        tallies = None
        flags.append("no_detections")
    if tallies is not None:
        bounds = vacuum_and_single_bounds(tallies, sc.protocol, sc.security)
        flags.extend(bounds.flags)
        l_real = key_length_real(tallies, bounds, sc.security)
        bits = secret_key_length(tallies, bounds, sc.security)
        t_acq = tallies.acquisition_time_s
        skr = bits / t_acq
        phi, s0, s1 = bounds.phi_x, bounds.s_z0, bounds.s_z1
        qber_z = tallies.qber_z
        qber_x = tallies.errors_x / tallies.total_x if tallies.total_x > 0 else 0.5
    else:
        l_real, bits, t_acq, skr = -math.inf, 0, math.inf, 0.0
        phi, s0, s1, qber_z, qber_x = 0.5, 0.0, 0.0, 0.5, 0.5

    return ScenarioResult(
        launch_power_dbm=_tidy(sc.plan.total_launch_dbm),
        received_power_dbm=_tidy(received_classical_power_dbm(sc.link, sc.plan)),
        fiber_length_km=sc.link.length_km,
        line_loss_db=linear_to_db(t_line),
        signal_transmission=t_signal,
        spectral_transmission=kept,
        acceptance=acc,
        noise_power_w=noise.total_in_band,
        noise_rate_z_hz=nz,
        noise_rate_x_hz=nx,
        rate_z_hz=rates.rate_z,
        rate_x_hz=rates.rate_x,
        qber_z=qber_z,
        qber_x=qber_x,
        phi_x=phi,
        s_z0=s0,
        s_z1=s1,
        acquisition_time_s=t_acq,
        key_length_real=l_real,
        key_length_bits=bits,
        skr_bps=skr,
        flags=tuple(flags),
    )


def _tidy(dbm):
    # per-channel splitting leaves ~1e-15 dB of float noise on plan totals
    return round(dbm, 9) if math.isfinite(dbm) else dbm


def _describe(sc):
    return (f"scenario ({sc.link.length_km:g} km, "
            f"{sc.plan.total_launch_dbm:.2f} dBm, {len(sc.plan.channels)} channels)")


def grid(start, stop, step):
    """Inclusive, reproducible grid from ``start`` to ``stop``."""
    if step <= 0:
        raise ValueError("step must be positive")
    if stop < start:
        raise ValueError("empty range")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def variant(sc, parameter, value):
    if parameter == "launch_power":
        return sc.with_launch_power(value)
    if parameter == "fiber_length":
        return sc.with_fiber_length(value)
    if parameter == "e_opt_z":
        return replace(sc, protocol=replace(sc.protocol, e_opt_z=value))
    if parameter == "jitter_fwhm":
        return replace(sc, receiver=replace(sc.receiver,
                                            jitter=replace(sc.receiver.jitter, fwhm_ps=value)))
    raise ValueError(f"unknown sweep parameter {parameter!r}")


def _eval_variant(args):
    sc, parameter, value = args
    return evaluate(variant(sc, parameter, value))


def sweep(sc, parameter, values, workers=1):
    """Evaluate the scenario at each value of ``parameter``, in grid order."""
    values = list(values)
    if not values:
        raise ValueError("sweep range is empty")
    jobs = [(sc, parameter, v) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_eval_variant, jobs))
    return [_eval_variant(j) for j in jobs]


@dataclass(frozen=True)
class Boundary:
    power_dbm: Optional[float]
    status: str  # "bounded", "unbounded" (key at bracket top) or "no_key"
    bracket: tuple

    @property
    def is_finite(self):
        return self.status == "bounded"


def _has_key(sc, power):
    return evaluate(sc.with_launch_power(power)).key_length_real >= 1.0


def max_tolerable_launch_power(sc, bracket=DEFAULT_BRACKET_DBM, tol_db=0.05):
    """Largest total launch power that still yields a key, by bisection."""
    lo, hi = bracket
    if _has_key(sc, hi):
        return Boundary(hi, "unbounded", bracket)
    if not _has_key(sc, lo):
        return Boundary(None, "no_key", bracket)
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if _has_key(sc, mid):
            lo = mid
        else:
            hi = mid
    return Boundary(lo, "bounded", bracket)


def boundary_vs_length(sc, lengths, bracket=DEFAULT_BRACKET_DBM, tol_db=0.05):
    """(length, boundary) pairs outlining the positive-key region."""
    return [(L, max_tolerable_launch_power(sc.with_fiber_length(L), bracket, tol_db))
            for L in lengths]


# -- ideal receiver study ---------------------------------------------------

def ideal_front_end(sc, window_ps=None):
    """Zero jitter, no dark counts, transform-limited sech^2 pulses and an optimized filter.

    The detection window is kept unless ``window_ps`` is given.
    """
    rx = sc.receiver
    gate = rx.gate if window_ps is None else replace(rx.gate, window_ps=window_ps)
    pulse = PulseModel("sech2", rx.pulse.fwhm_ps, chirped=False)
    jitter = JitterModel(0.0, 0.0)
    best = temporal.optimize_filter(pulse, jitter, gate)
    det = replace(rx.detector, dark_count_rate_z_hz=0.0, dark_count_rate_x_hz=0.0)
    new_rx = replace(rx, pulse=pulse, jitter=jitter, detector=det, gate=gate,
                     fbg_fwhm_ghz=best.fwhm_ghz, fbg_shape=best.shape,
                     noise_bandwidth_correction=1.0)
    return replace(sc, receiver=new_rx)


def lossless_filter_block(sc, noise_referenced_at_detector=True):
    """Remove the insertion loss of the receiver filter block from the signal path.

    With ``noise_referenced_at_detector`` the noise reaching the detector is
    held at its previous level, i.e. only the signal benefits.  Otherwise the
    noise is relieved of the same loss.
    """
    filters = []
    for f in sc.link.filters:
        if f.in_filter_block:
            noise_keep = f.noise_db if noise_referenced_at_detector else 0.0
            f = replace(f, insertion_loss_db=0.0,
                        peak_loss_db=0.0 if f.peak_loss_db is not None else None,
                        noise_loss_db=noise_keep)
        filters.append(f)
    return replace(sc, link=sc.link.with_filters(filters))


def with_jitter(sc, jitter):
    return replace(sc, receiver=replace(sc.receiver, jitter=jitter))


@dataclass(frozen=True)
class IdealReport:
    baseline: Boundary
    ideal_front_end: Boundary
    ideal: Boundary
    ideal_physical: Boundary
    snspd: Boundary
    ideal_filter: SpectralFilter

    @staticmethod
    def _gain(a, b):
        if a.power_dbm is None or b.power_dbm is None:
            return None
        return b.power_dbm - a.power_dbm

    @property
    def gain_front_end_db(self):
        return self._gain(self.baseline, self.ideal_front_end)

    @property
    def gain_filter_block_db(self):
        return self._gain(self.ideal_front_end, self.ideal)

    @property
    def gain_total_db(self):
        return self._gain(self.baseline, self.ideal)

    @property
    def gain_snspd_db(self):
        return self._gain(self.baseline, self.snspd)

    @property
    def gain_filter_block_physical_db(self):
        return self._gain(self.ideal_front_end, self.ideal_physical)

    def as_dict(self):
        def b(x):
            return {"power_dbm": x.power_dbm, "status": x.status}
        return {
            "boundary_baseline": b(self.baseline),
            "boundary_ideal_front_end": b(self.ideal_front_end),
            "boundary_ideal": b(self.ideal),
            "boundary_ideal_physical_noise": b(self.ideal_physical),
            "boundary_snspd": b(self.snspd),
            "ideal_filter": {"fwhm_ghz": self.ideal_filter.fwhm_ghz,
                             "shape": self.ideal_filter.shape},
            "gain_front_end_db": self.gain_front_end_db,
            "gain_filter_block_db": self.gain_filter_block_db,
            "gain_total_db": self.gain_total_db,
            "gain_snspd_db": self.gain_snspd_db,
            "gain_filter_block_physical_noise_db": self.gain_filter_block_physical_db,
        }


def ideal_comparison(sc, bracket=DEFAULT_BRACKET_DBM, tol_db=0.05, snspd_jitter_ps=30.0,
                     ideal_window_ps=None):
    """Maximum tolerable launch power for the baseline and the idealized variants."""
    front = ideal_front_end(sc, ideal_window_ps)
    ideal = lossless_filter_block(front, noise_referenced_at_detector=True)
    ideal_phys = lossless_filter_block(front, noise_referenced_at_detector=False)
    snspd = with_jitter(sc, JitterModel(snspd_jitter_ps, 0.0))

    def mtp(s):
        return max_tolerable_launch_power(s, bracket, tol_db)

    return IdealReport(mtp(sc), mtp(front), mtp(ideal), mtp(ideal_phys), mtp(snspd),
                       front.spectral_filter())


def results_table(results):
    rows = [r.as_row() for r in results]
    return rows


def skr_array(results):
    return np.array([r.skr_bps for r in results])


# -- calibration ------------------------------------------------------------

class CalibrationError(Exception):
    """Root search failed; ``state`` holds the last bracket and residuals."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state or {}


@dataclass(frozen=True)
class CalibrationTarget:
    """A measured operating point.

    ``role`` is ``baseline`` (fits the intrinsic error floor), ``noise`` (fits
    the Raman coefficient) or ``check`` (reported only).  A launch power of
    None means no classical channels.
    """

    name: str
    launch_power_dbm: Optional[float]
    skr_bps: float
    role: str = "baseline"

    def __post_init__(self):
        if self.role not in ("baseline", "noise", "check"):
            raise ValueError(f"target {self.name}: unknown role {self.role!r}")
        if not self.skr_bps > 0:
            raise ValueError(f"target {self.name}: SKR must be positive")


@dataclass(frozen=True)
class CalibrationTargets:
    targets: tuple = ()
    temporal_loss_db: float = 1.9
    spectral_mismatch_db: float = 2.2
    e_opt_x_ratio: float = 1.0  # e_opt_x / e_opt_z

    def by_role(self, role):
        return [t for t in self.targets if t.role == role]


# Modelling conventions that the fitted values depend on; echoed in every report.
CALIBRATION_ASSUMPTIONS = (
    "launch power is referenced before the transmitter mux; its classical-band loss "
    "is absorbed together with alpha_c",
    "key rates are per second of acquisition, without post-processing dead time",
    "mu1, mu2, p_mu1, basis probabilities and epsilons are configured, not fitted",
    "e_opt_x is tied to e_opt_z by e_opt_x_ratio",
)


@dataclass(frozen=True)
class CalibrationReport:
    broadened_fwhm_ps: float
    spectral_fwhm_ghz: float
    e_opt_z: float
    e_opt_x: float
    rho: float
    rho_fitted: bool
    residuals: tuple  # (name, role, target bps, model bps, log10 ratio)
    flags: tuple = ()

    def as_dict(self):
        return {
            "broadened_fwhm_ps": self.broadened_fwhm_ps,
            "spectral_fwhm_ghz": self.spectral_fwhm_ghz,
            "e_opt_z": self.e_opt_z,
            "e_opt_x": self.e_opt_x,
            "raman_coefficient_per_km_ghz": self.rho,
            "raman_fitted": self.rho_fitted,
            "residuals": [
                {"target": n, "role": r, "target_bps": t, "model_bps": m, "log10_ratio": d}
                for n, r, t, m, d in self.residuals],
            "flags": list(self.flags),
            "assumptions": list(CALIBRATION_ASSUMPTIONS),
        }


def apply_calibration(sc, report):
    """Scenario with the fitted parameters of ``report`` substituted."""
    rx = sc.receiver
    pulse = replace(rx.pulse, broadened_fwhm_ps=report.broadened_fwhm_ps,
                    spectral_fwhm_ghz=report.spectral_fwhm_ghz)
    proto = replace(sc.protocol, e_opt_z=report.e_opt_z, e_opt_x=report.e_opt_x)
    return replace(sc, receiver=replace(rx, pulse=pulse), protocol=proto,
                   raman_coefficient=report.rho)


def _real_skr(sc):
    r = evaluate(sc)
    if not math.isfinite(r.key_length_real):
        return -math.inf
    return r.key_length_real / r.acquisition_time_s


def _with_error_floor(sc, e_z, ratio):
    return replace(sc, protocol=replace(sc.protocol, e_opt_z=e_z, e_opt_x=min(0.5, e_z * ratio)))


_E_OPT_BRACKET = (0.0, 0.25)
_LOG_RHO_BRACKET = (-18.0, -6.0)
_XTOL = 1e-13


def _fit_error_floor(sc, target, ratio):
    point = sc.with_launch_power(target.launch_power_dbm)

    def f(e):
        return _real_skr(_with_error_floor(point, e, ratio)) / target.skr_bps - 1.0

    lo, hi = _E_OPT_BRACKET
    flo, fhi = f(lo), f(hi)
    if flo < 0:
        raise CalibrationError(
            f"target {target.name}: even a zero error floor gives too little key",
            {"parameter": "e_opt_z", "bracket": (lo, hi), "residuals": (flo, fhi)})
    if fhi > 0:
        raise CalibrationError(
            f"target {target.name}: error floor above {hi} still gives too much key",
            {"parameter": "e_opt_z", "bracket": (lo, hi), "residuals": (flo, fhi)})
    return optimize.brentq(f, lo, hi, xtol=_XTOL, rtol=1e-14, maxiter=200)


def calibrate(template, targets):
    """Fit the unstated model parameters to measured operating points.

    Stage 1 fixes the broadened pulse width and effective spectral width from
    the temporal and spectral losses, then the intrinsic error floor from the
    first baseline target.  Stage 2 finds the Raman coefficient (log-space
    root search) that reproduces the first noise target; the error floor is
    re-fitted at every trial coefficient, since a baseline point taken with
    weak classical light also depends on it.
    """
    baselines, noises = targets.by_role("baseline"), targets.by_role("noise")
    if not baselines:
        raise CalibrationError("at least one baseline target is required")
    flags = []

    rx = template.receiver
    pulse = temporal.PulseModel(rx.pulse.family, rx.pulse.fwhm_ps, chirped=True)
    try:
        width = temporal.calibrate_broadened_width(pulse, rx.jitter, rx.gate,
                                                   targets.temporal_loss_db)
        spectral = temporal.calibrate_spectral_width(pulse, template.spectral_filter(),
                                                 targets.spectral_mismatch_db)
    except ValueError as exc:
        raise CalibrationError(f"temporal/spectral stage: {exc}") from exc
    sc = replace(template, receiver=replace(
        rx, pulse=replace(pulse, broadened_fwhm_ps=width, spectral_fwhm_ghz=spectral)))

    ratio = targets.e_opt_x_ratio
    base = baselines[0]

    def at_rho(log_rho):
        return replace(sc, raman_coefficient=10.0 ** log_rho)

    if noises:
        noise = noises[0]

        def g(log_rho):
            s = at_rho(log_rho)
            try:
                e = _fit_error_floor(s, base, ratio)
            except CalibrationError:
                # too much noise for the baseline point to be reachable
                return -1.0
            s = _with_error_floor(s, e, ratio).with_launch_power(noise.launch_power_dbm)
            return _real_skr(s) / noise.skr_bps - 1.0

        lo, hi = _LOG_RHO_BRACKET
        glo, ghi = g(lo), g(hi)
        if not (glo > 0 > ghi):
            raise CalibrationError("Raman coefficient not bracketed",
                                   {"parameter": "log10_rho", "bracket": (lo, hi),
                                    "residuals": (glo, ghi)})
        log_rho = optimize.brentq(g, lo, hi, xtol=_XTOL, rtol=1e-14, maxiter=200)
        sc = at_rho(log_rho)
        rho_fitted = True
    else:
        flags.append("raman_unfitted")
        rho_fitted = False

    e_z = _fit_error_floor(sc, base, ratio)
    sc = _with_error_floor(sc, e_z, ratio)
    if len(baselines) > 1 or len(noises) > 1:
        flags.append("extra_targets_reported_only")

    residuals = []
    for t in targets.targets:
        model = evaluate(sc.with_launch_power(t.launch_power_dbm)).skr_bps
        d = math.log10(model / t.skr_bps) if model > 0 else -math.inf
        residuals.append((t.name, t.role, t.skr_bps, model, d))
    report = CalibrationReport(width, spectral, e_z, sc.protocol.e_opt_x, sc.raman_coefficient,
                               rho_fitted, tuple(residuals), tuple(flags))
    return report, sc

"""Scenario configuration files.

The format is INI with units in every key name.  Top-level sections are
``link``, ``plan``, ``receiver``, ``protocol``, ``security`` and
``calibration``; fiber spans, lumped losses, receiver filter elements and
calibration targets are numbered subsections such as ``[link.span.1]``,
``[link.lumped.att1]``, ``[receiver.filter.cwdm2]`` and
``[calibration.target.noise]``.  Keys left out take the value from the bundled
``defaults.cfg``, and every such substitution is recorded in the provenance log.
"""

import configparser
import logging
from dataclasses import dataclass, field
from importlib import resources

from .decoy import DetectorParams, ProtocolParams, SecurityParams
from .linkmodel import (ClassicalChannel, ClassicalPlan, FiberSpan, FilterElement,
                        LinkTopology, LumpedLoss)
from .scenario import CalibrationTarget, CalibrationTargets, Receiver, Scenario
from .temporal import GateModel, JitterModel, PulseModel

log = logging.getLogger(__name__)

REQUIRED_SECTIONS = ("link", "plan", "receiver", "protocol", "security", "calibration")


class ConfigError(Exception):
    """Invalid configuration; the message names the offending section and key."""


@dataclass
class ParsedConfig:
    scenario: Scenario
    targets: CalibrationTargets
    provenance: list = field(default_factory=list)


def _new_parser():
    return configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                     empty_lines_in_values=False)


def _read(text, origin):
    cp = _new_parser()
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    return cp


def defaults_text():
    return resources.files("coexqkd.data").joinpath("defaults.cfg").read_text()


def bundled_config(name):
    """Text of a configuration file shipped with the package."""
    try:
        return resources.files("coexqkd.data").joinpath(name).read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"no bundled configuration named {name!r}") from exc


_DEFAULTS = None


def _defaults():
    global _DEFAULTS
    if _DEFAULTS is None:
        _DEFAULTS = _read(defaults_text(), "defaults.cfg")
    return _DEFAULTS


class _Section:
    """Typed access to one section, falling back to the defaults file."""

    def __init__(self, cp, name, default_name, provenance):
        self.cp, self.name, self.provenance = cp, name, provenance
        self.defaults = _defaults()[default_name]
        self.used = set()

    def _raw(self, key):
        self.used.add(key)
        sect = self.cp[self.name]
        if key in sect:
            return sect[key]
        if key not in self.defaults:
            raise ConfigError(f"[{self.name}] missing required key '{key}'")
        value = self.defaults[key]
        self.provenance.append(f"[{self.name}] {key} = {value} (default)")
        return value

    def float(self, key):
        raw = self._raw(key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected a number, got {raw!r}") from None

    def optional_float(self, key):
        raw = self._raw(key)
        if raw.strip().lower() in ("", "none"):
            return None
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected a number or none, got {raw!r}") from None

    def int(self, key):
        raw = self._raw(key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected an integer, got {raw!r}") from None

    def bool(self, key):
        raw = self._raw(key).strip().lower()
        states = configparser.ConfigParser.BOOLEAN_STATES
        if raw not in states:
            raise ConfigError(f"[{self.name}] {key}: expected true/false, got {raw!r}")
        return states[raw]

    def str(self, key, choices=None):
        raw = self._raw(key).strip()
        if choices is not None and raw not in choices:
            raise ConfigError(f"[{self.name}] {key}: must be one of {', '.join(choices)}, got {raw!r}")
        return raw

    def float_list(self, key):
        raw = self._raw(key).strip()
        if not raw:
            return []
        try:
            return [float(x) for x in raw.split(",")]
        except ValueError:
            raise ConfigError(f"[{self.name}] {key}: expected comma-separated numbers") from None

    def check_unknown(self):
        allowed = set(self.defaults.keys())
        for key in self.cp[self.name]:
            if key not in allowed:
                raise ConfigError(f"[{self.name}] unknown key '{key}'")


def _subsections(cp, prefix):
    return [s for s in cp.sections() if s.startswith(prefix + ".")]


def _parse_link(cp, prov):
    spans = []
    for name in _subsections(cp, "link.span"):
        s = _Section(cp, name, "span", prov)
        s.check_unknown()
        spans.append(FiberSpan(s.float("length_km"), s.float("alpha_q_db_per_km"),
                               s.float("alpha_c_db_per_km")))
    if not spans:
        raise ConfigError("[link] needs at least one [link.span.<name>] section")
    lumped = []
    for name in _subsections(cp, "link.lumped"):
        s = _Section(cp, name, "lumped", prov)
        s.check_unknown()
        lumped.append(LumpedLoss(s.float("position_km"), s.float("loss_q_db"),
                                 s.optional_float("loss_c_db"), name.split(".", 2)[2]))
    link = _Section(cp, "link", "link", prov)
    link.check_unknown()
    return spans, lumped


def _parse_filters(cp, prov):
    names = _subsections(cp, "receiver.filter")
    source = cp
    if not names:
        prov.append("[receiver.filter.*] experimental filter chain (default)")
        source = _defaults()
        names = _subsections(source, "receiver.filter")
    out = []
    for name in names:
        s = _Section(source, name, "filter", prov)
        s.check_unknown()
        out.append(FilterElement(
            name=s.str("name"),
            insertion_loss_db=s.float("insertion_loss_db"),
            isolation_db=s.optional_float("isolation_db"),
            isolation_is_bound=s.bool("isolation_is_lower_bound"),
            location=s.str("location", ("tx", "rx")),
            kind=s.str("kind", ("static", "spectral", "temporal")),
            in_filter_block=s.bool("in_filter_block"),
            peak_loss_db=s.optional_float("peak_loss_db"),
            classical_loss_db=s.optional_float("classical_loss_db"),
            noise_loss_db=s.optional_float("noise_loss_db"),
        ))
    return out


def _parse_plan(cp, prov):
    s = _Section(cp, "plan", "plan", prov)
    s.check_unknown()
    direction = s.str("direction", ("co", "counter"))
    wl = s.float_list("channel_wavelengths_nm")
    pw = s.float_list("channel_powers_dbm")
    if wl or pw:
        if len(wl) != len(pw):
            raise ConfigError("[plan] channel_wavelengths_nm and channel_powers_dbm differ in length")
        return ClassicalPlan(tuple(ClassicalChannel(w, p) for w, p in zip(wl, pw)), direction)
    count = s.int("channel_count")
    if count < 0:
        raise ConfigError("[plan] channel_count must be >= 0")
    return ClassicalPlan.dwdm_grid(s.float("total_launch_power_dbm"), count,
                                   s.float("center_wavelength_nm"),
                                   s.float("channel_spacing_ghz"), direction)


def _parse_receiver(cp, prov):
    s = _Section(cp, "receiver", "receiver", prov)
    s.check_unknown()
    det = DetectorParams(
        efficiency=s.float("detection_efficiency"),
        dark_count_rate_z_hz=s.float("dark_count_rate_z_hz"),
        dark_count_rate_x_hz=s.float("dark_count_rate_x_hz"),
        dead_time_z_s=s.float("dead_time_z_us") / 1e6,
        dead_time_x_s=s.float("dead_time_x_us") / 1e6,
    )
    gate = GateModel(s.float("window_ps"), s.int("bins_per_qubit"), s.float("bin_period_ps"),
                     s.float("window_offset_ps"), s.str("window_centering", ("optimal", "peak")))
    pulse = PulseModel(s.str("pulse_shape"), s.float("pulse_fwhm_ps"), s.bool("pulse_chirped"),
                       s.optional_float("broadened_fwhm_ps"),
                       s.optional_float("spectral_fwhm_ghz"))
    jitter = JitterModel(s.float("jitter_fwhm_ps"), s.float("jitter_tail_ps"))
    return Receiver(
        quantum_wavelength_nm=s.float("quantum_wavelength_nm"),
        detector=det, gate=gate, pulse=pulse, jitter=jitter,
        fbg_fwhm_ghz=s.float("fbg_fwhm_ghz"),
        fbg_shape=s.str("fbg_shape", ("gaussian", "sech2", "rect")),
        noise_bandwidth_correction=s.float("noise_bandwidth_correction"),
    )


def _parse_protocol(cp, prov):
    s = _Section(cp, "protocol", "protocol", prov)
    s.check_unknown()
    return ProtocolParams(
        rep_rate_hz=s.float("rep_rate_ghz") * 1e9,
        mu1=s.float("mu1"), mu2=s.float("mu2"), p_mu1=s.float("p_mu1"),
        p_z_alice=s.float("p_z_alice"), p_z_bob=s.float("p_z_bob"),
        e_opt_z=s.float("e_opt_z"), e_opt_x=s.float("e_opt_x"),
    )


def _parse_security(cp, prov):
    s = _Section(cp, "security", "security", prov)
    s.check_unknown()
    return SecurityParams(s.float("eps_sec"), s.float("eps_cor"), s.float("block_size_bits"),
                          s.float("f_ec"))


def _parse_calibration(cp, prov):
    s = _Section(cp, "calibration", "calibration", prov)
    s.check_unknown()
    rho = s.float("raman_coefficient_per_km_ghz")
    targets = []
    for name in _subsections(cp, "calibration.target"):
        t = _Section(cp, name, "target", prov)
        t.check_unknown()
        targets.append(CalibrationTarget(name.split(".", 2)[2],
                                         t.optional_float("launch_power_dbm"),
                                         t.float("skr_bps"),
                                         t.str("role", ("baseline", "noise", "check"))))
    tg = CalibrationTargets(tuple(targets), s.float("temporal_loss_db"),
                            s.float("spectral_mismatch_db"), s.float("e_opt_x_ratio"))
    return rho, tg


def _check_sections(cp):
    missing = [s for s in REQUIRED_SECTIONS if not cp.has_section(s)]
    if missing:
        raise ConfigError("missing required sections: " + ", ".join(f"[{s}]" for s in missing))
    prefixes = ("link.span.", "link.lumped.", "receiver.filter.", "calibration.target.")
    for s in cp.sections():
        if s not in REQUIRED_SECTIONS and not s.startswith(prefixes):
            raise ConfigError(f"unknown section [{s}]")


def parse_config(text, origin="<config>"):
    """Parse configuration text into a validated scenario plus calibration targets."""
    cp = _read(text, origin)
    _check_sections(cp)
    prov = []
    try:
        spans, lumped = _parse_link(cp, prov)
        filters = _parse_filters(cp, prov)
        link = LinkTopology(tuple(spans), tuple(lumped), tuple(filters))
        plan = _parse_plan(cp, prov)
        receiver = _parse_receiver(cp, prov)
        protocol = _parse_protocol(cp, prov)
        security = _parse_security(cp, prov)
        rho, targets = _parse_calibration(cp, prov)
        scenario = Scenario(link, plan, receiver, protocol, security, rho)
    except ValueError as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    for line in prov:
        log.info("%s: %s", origin, line)
    return ParsedConfig(scenario, targets, prov)


def load_config(path):
    """Parse a file path, or ``bundled:<name>`` for a shipped configuration."""
    path = str(path)
    if path.startswith("bundled:"):
        return parse_config(bundled_config(path[len("bundled:"):]), path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, path)


# -- serialization ----------------------------------------------------------

def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize(scenario, targets=None):
    """Configuration text that parses back to an equal scenario."""
    sc = scenario
    cp = _new_parser()
    cp["link"] = {}
    for i, span in enumerate(sc.link.spans, 1):
        cp[f"link.span.{i}"] = {"length_km": _fmt(span.length_km),
                                "alpha_q_db_per_km": _fmt(span.alpha_q_db_per_km),
                                "alpha_c_db_per_km": _fmt(span.alpha_c_db_per_km)}
    for i, el in enumerate(sc.link.lumped, 1):
        cp[f"link.lumped.{el.name or i}"] = {"position_km": _fmt(el.position_km),
                                             "loss_q_db": _fmt(el.loss_q_db),
                                             "loss_c_db": _fmt(el.loss_c_db)}
    cp["plan"] = {
        "direction": sc.plan.direction,
        "channel_wavelengths_nm": ", ".join(_fmt(c.wavelength_nm) for c in sc.plan.channels),
        "channel_powers_dbm": ", ".join(_fmt(c.launch_power_dbm) for c in sc.plan.channels),
    }
    rx = sc.receiver
    det, gate, pulse, jit = rx.detector, rx.gate, rx.pulse, rx.jitter
    cp["receiver"] = {
        "quantum_wavelength_nm": _fmt(rx.quantum_wavelength_nm),
        "detection_efficiency": _fmt(det.efficiency),
        "dark_count_rate_z_hz": _fmt(det.dark_count_rate_z_hz),
        "dark_count_rate_x_hz": _fmt(det.dark_count_rate_x_hz),
        "dead_time_z_us": _fmt(det.dead_time_z_s * 1e6),
        "dead_time_x_us": _fmt(det.dead_time_x_s * 1e6),
        "window_ps": _fmt(gate.window_ps),
        "bins_per_qubit": _fmt(gate.bins_per_qubit),
        "bin_period_ps": _fmt(gate.period_ps),
        "window_offset_ps": _fmt(gate.offset_ps),
        "window_centering": gate.centering,
        "pulse_shape": pulse.family,
        "pulse_fwhm_ps": _fmt(pulse.fwhm_ps),
        "pulse_chirped": _fmt(pulse.chirped),
        "broadened_fwhm_ps": _fmt(pulse.broadened_fwhm_ps),
        "spectral_fwhm_ghz": _fmt(pulse.spectral_fwhm_ghz),
        "jitter_fwhm_ps": _fmt(jit.fwhm_ps),
        "jitter_tail_ps": _fmt(jit.tail_ps),
        "fbg_fwhm_ghz": _fmt(rx.fbg_fwhm_ghz),
        "fbg_shape": rx.fbg_shape,
        "noise_bandwidth_correction": _fmt(rx.noise_bandwidth_correction),
    }
    for i, f in enumerate(sc.link.filters, 1):
        cp[f"receiver.filter.{i}"] = {
            "name": f.name,
            "insertion_loss_db": _fmt(f.insertion_loss_db),
            "isolation_db": _fmt(f.isolation_db),
            "isolation_is_lower_bound": _fmt(f.isolation_is_bound),
            "location": f.location,
            "kind": f.kind,
            "in_filter_block": _fmt(f.in_filter_block),
            "peak_loss_db": _fmt(f.peak_loss_db),
            "classical_loss_db": _fmt(f.classical_loss_db),
            "noise_loss_db": _fmt(f.noise_loss_db),
        }
    pr = sc.protocol
    cp["protocol"] = {
        "rep_rate_ghz": _fmt(pr.rep_rate_hz / 1e9),
        "mu1": _fmt(pr.mu1), "mu2": _fmt(pr.mu2), "p_mu1": _fmt(pr.p_mu1),
        "p_z_alice": _fmt(pr.p_z_alice), "p_z_bob": _fmt(pr.p_z_bob),
        "e_opt_z": _fmt(pr.e_opt_z), "e_opt_x": _fmt(pr.e_opt_x),
    }
    se = sc.security
    cp["security"] = {"eps_sec": _fmt(se.eps_sec), "eps_cor": _fmt(se.eps_cor),
                      "block_size_bits": _fmt(se.block_size_bits), "f_ec": _fmt(se.f_ec)}
    tg = targets or CalibrationTargets()
    cp["calibration"] = {
        "raman_coefficient_per_km_ghz": _fmt(sc.raman_coefficient),
        "temporal_loss_db": _fmt(tg.temporal_loss_db),
        "spectral_mismatch_db": _fmt(tg.spectral_mismatch_db),
        "e_opt_x_ratio": _fmt(tg.e_opt_x_ratio),
    }
    for t in tg.targets:
        cp[f"calibration.target.{t.name}"] = {"launch_power_dbm": _fmt(t.launch_power_dbm),
                                              "skr_bps": _fmt(t.skr_bps), "role": t.role}
    lines = []
    for name in cp.sections():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in cp[name].items())
        lines.append("")
    return "\n".join(lines)

"""Physical link description: fiber spans, lumped attenuators, mux/filter elements.

Positions are measured in km from the transmitter.  Losses are stored in dB
as entered by the user; every computation returns linear ratios.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .mathcore import db_to_linear, dbm_to_watts, watts_to_dbm

# wavelengths below this are treated as the quantum (O-band) channel
BAND_SPLIT_NM = 1450.0

C_BAND_NM = (1530.0, 1565.0)


@dataclass(frozen=True)
class FiberSpan:
    length_km: float
    alpha_q_db_per_km: float = 0.3644
    alpha_c_db_per_km: float = 0.21

    def __post_init__(self):
        if self.length_km < 0:
            raise ValueError(f"span length must be >= 0, got {self.length_km}")
        for a in (self.alpha_q_db_per_km, self.alpha_c_db_per_km):
            if not 0.0 < a < 2.0:
                raise ValueError(f"attenuation {a} dB/km outside (0, 2)")

    def alpha_db(self, band):
        return self.alpha_q_db_per_km if band == "q" else self.alpha_c_db_per_km


@dataclass(frozen=True)
class LumpedLoss:
    position_km: float
    loss_q_db: float
    loss_c_db: Optional[float] = None  # None: wavelength-flat
    name: str = ""

    def __post_init__(self):
        if self.position_km < 0:
            raise ValueError(f"lumped loss position must be >= 0, got {self.position_km}")
        if self.loss_q_db < 0 or self.classical_db < 0:
            raise ValueError("lumped losses must be >= 0 dB")

    @property
    def classical_db(self):
        return self.loss_q_db if self.loss_c_db is None else self.loss_c_db

    def loss_db(self, band):
        return self.loss_q_db if band == "q" else self.classical_db


@dataclass(frozen=True)
class FilterElement:
    """One row of the receiver loss table.

    ``kind`` selects how the element acts on the quantum signal:

    * ``static``   -- broadband insertion loss, same for signal and noise
    * ``spectral`` -- band-pass filter; the signal sees ``peak_loss_db`` plus the
      spectral-mismatch loss, noise sees ``peak_loss_db`` over the filter's
      effective bandwidth
    * ``temporal`` -- gating loss from jitter and pulse broadening, computed by
      :mod:`coexqkd.temporal`; excluded from the static budget

    ``noise_loss_db`` overrides the loss applied to in-band noise photons.
    """

    name: str
    insertion_loss_db: float
    isolation_db: Optional[float] = None
    isolation_is_bound: bool = False  # table entry reads "> x"
    location: str = "rx"  # "tx" (transmitter mux) or "rx"
    kind: str = "static"
    in_filter_block: bool = False
    peak_loss_db: Optional[float] = None
    classical_loss_db: Optional[float] = None  # through-loss of the classical port
    noise_loss_db: Optional[float] = None

    def __post_init__(self):
        if self.insertion_loss_db < 0:
            raise ValueError(f"{self.name}: insertion loss must be >= 0")
        if self.isolation_db is not None and self.isolation_db < 0:
            raise ValueError(f"{self.name}: isolation must be >= 0")
        if self.location not in ("tx", "rx"):
            raise ValueError(f"{self.name}: location must be 'tx' or 'rx'")
        if self.kind not in ("static", "spectral", "temporal"):
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")

    @property
    def noise_db(self):
        if self.noise_loss_db is not None:
            return self.noise_loss_db
        if self.kind == "spectral" and self.peak_loss_db is not None:
            return self.peak_loss_db
        return self.insertion_loss_db

    def isolation_label(self):
        if self.isolation_db is None:
            return "-"
        text = f"{self.isolation_db:g}"
        return f"> {text}" if self.isolation_is_bound else text


def receiver_filter_chain(mux_classical_loss_db=0.47):
    """The receiver filter chain of the experiment, in loss-budget order."""
    return (
        FilterElement("CWDM 1", 0.8, 45.0, True, location="tx",
                      classical_loss_db=mux_classical_loss_db),
        FilterElement("CWDM 2", 0.6, 45.0, True, classical_loss_db=mux_classical_loss_db),
        FilterElement("CWDM 3", 0.8, 45.0, True, in_filter_block=True),
        FilterElement("Filter Spool", 1.0, 32.9, False, in_filter_block=True),
        FilterElement("FBG and circulator", 4.0, 30.0, True, kind="spectral",
                      in_filter_block=True, peak_loss_db=1.8),
        FilterElement("Detector jitter and FBG broadening", 1.9, None, kind="temporal"),
    )


@dataclass(frozen=True)
class LinkTopology:
    spans: tuple
    lumped: tuple = ()
    filters: tuple = field(default_factory=receiver_filter_chain)

    def __post_init__(self):
        if len(self.spans) == 0:
            raise ValueError("link needs at least one fiber span")
        total = self.length_km
        for el in self.lumped:
            if el.position_km > total + 1e-12:
                raise ValueError(
                    f"lumped loss {el.name or ''} at {el.position_km} km beyond link end {total} km")
        positions = [el.position_km for el in self.lumped]
        if positions != sorted(positions):
            raise ValueError("lumped losses must be listed in propagation order")

    @property
    def length_km(self):
        return sum(s.length_km for s in self.spans)

    def span_bounds(self):
        """(start_km, end_km, span) for each span in propagation order."""
        out = []
        z = 0.0
        for s in self.spans:
            out.append((z, z + s.length_km, s))
            z += s.length_km
        return out

    def segments(self):
        """Split the line into uniform pieces separated by lumped elements.

        Yields ``("fiber", span, length)`` and ``("lumped", element, 0)`` in
        propagation order.
        """
        items = []
        lumped = list(self.lumped)
        i = 0
        for start, end, span in self.span_bounds():
            z = start
            while i < len(lumped) and lumped[i].position_km <= end:
                p = lumped[i].position_km
                if p > z:
                    items.append(("fiber", span, p - z))
                    z = p
                items.append(("lumped", lumped[i], 0.0))
                i += 1
            if end > z:
                items.append(("fiber", span, end - z))
        return items

    def rx_filters(self):
        return tuple(f for f in self.filters if f.location == "rx")

    def tx_filters(self):
        return tuple(f for f in self.filters if f.location == "tx")

    def with_filters(self, filters):
        return replace(self, filters=tuple(filters))

    def scaled_to_length(self, length_km):
        """Same topology with every span and lumped position scaled to a new total length."""
        k = length_km / self.length_km
        spans = tuple(replace(s, length_km=s.length_km * k) for s in self.spans)
        lumped = tuple(replace(el, position_km=el.position_km * k) for el in self.lumped)
        return replace(self, spans=spans, lumped=lumped)


def band_of(lambda_nm):
    return "q" if lambda_nm < BAND_SPLIT_NM else "c"


def _span_at(link, z):
    for start, end, span in link.span_bounds():
        if z <= end:
            return start, end, span
    return link.span_bounds()[-1]


def transmittance(link, lambda_nm, from_km=0.0, to_km=None):
    """Line transmission between two positions at the band containing ``lambda_nm``.

    Covers fiber attenuation and lumped elements in the half-open interval
    (from_km, to_km]; an element at the transmitter (0 km) counts when the
    interval starts there.  Mux and receiver filters are not included.
    """
    total = link.length_km
    if to_km is None:
        to_km = total
    eps = 1e-12
    if from_km < -eps or to_km > total + eps or from_km > to_km + eps:
        raise ValueError(f"interval [{from_km}, {to_km}] not within link [0, {total}]")
    band = band_of(lambda_nm)
    loss_db = 0.0
    for start, end, span in link.span_bounds():
        lo, hi = max(start, from_km), min(end, to_km)
        if hi > lo:
            loss_db += (hi - lo) * span.alpha_db(band)
    for el in link.lumped:
        p = el.position_km
        if from_km < p <= to_km or (p == 0.0 and from_km == 0.0):
            loss_db += el.loss_db(band)
    return db_to_linear(loss_db)


@dataclass(frozen=True)
class ClassicalChannel:
    wavelength_nm: float
    launch_power_dbm: float
    raman_coefficient: Optional[float] = None  # per-channel override, 1/(km GHz)

    @property
    def power_w(self):
        return dbm_to_watts(self.launch_power_dbm)


@dataclass(frozen=True)
class ClassicalPlan:
    channels: tuple = ()
    direction: str = "co"
    allow_out_of_band: bool = False

    def __post_init__(self):
        if self.direction not in ("co", "counter"):
            raise ValueError(f"direction must be 'co' or 'counter', got {self.direction!r}")
        if not self.allow_out_of_band:
            lo, hi = C_BAND_NM
            for ch in self.channels:
                if not lo <= ch.wavelength_nm <= hi:
                    raise ValueError(
                        f"classical channel at {ch.wavelength_nm} nm outside the C-band")

    @classmethod
    def dwdm_grid(cls, total_launch_dbm, count=13, center_nm=1550.1, spacing_ghz=100.0,
                  direction="co"):
        """Equal-power channels on a frequency grid centered at ``center_nm``."""
        if count == 0:
            return cls((), direction)
        c_nm_ghz = 299792458.0  # nm * GHz
        f0 = c_nm_ghz / center_nm
        per_channel = total_launch_dbm - 10.0 * math.log10(count)
        chans = []
        for i in range(count):
            f = f0 + (i - (count - 1) / 2.0) * spacing_ghz
            chans.append(ClassicalChannel(c_nm_ghz / f, per_channel))
        return cls(tuple(chans), direction)

    @property
    def total_power_w(self):
        return sum(ch.power_w for ch in self.channels)

    @property
    def total_launch_dbm(self):
        return watts_to_dbm(self.total_power_w)

    def with_total_power(self, total_dbm):
        """Rescale every channel so the plan carries ``total_dbm`` in total."""
        if not self.channels:
            raise ValueError("cannot rescale an empty plan")
        shift = total_dbm - self.total_launch_dbm
        chans = tuple(replace(ch, launch_power_dbm=ch.launch_power_dbm + shift)
                      for ch in self.channels)
        return replace(self, channels=chans)


def budget_rows(filters):
    return [(f.name, f.insertion_loss_db, f.isolation_db, f.isolation_is_bound)
            for f in filters]


@dataclass(frozen=True)
class LossBudget:
    rows: tuple  # (name, insertion_db, isolation_db or None, isolation_is_bound)
    total_insertion_db: float
    total_rx_isolation_db: float

    def format(self):
        lines = [f"{'element':<38}{'IL@1310 (dB)':>14}{'iso@1550 (dB)':>16}"]
        for name, il, iso, bound in self.rows:
            iso_txt = "-" if iso is None else (f"> {iso:g}" if bound else f"{iso:g}")
            lines.append(f"{name:<38}{il:>14.1f}{iso_txt:>16}")
        lines.append(f"{'total':<38}{self.total_insertion_db:>14.1f}"
                     f"{self.total_rx_isolation_db:>16.1f}")
        return "\n".join(lines)


def loss_budget(filters):
    """Itemized insertion loss at 1310 nm and isolation from 1550 nm.

    The isolation total covers receiver-side elements only, since those sit
    between the classical light and the detector.
    """
    filters = tuple(filters)
    rows = tuple(budget_rows(filters))
    total_il = sum(r[1] for r in rows)
    total_iso = sum(f.isolation_db for f in filters
                    if f.location == "rx" and f.isolation_db is not None)
    return LossBudget(rows, total_il, total_iso)


def classical_path_loss_db(filters):
    return sum(f.classical_loss_db or 0.0 for f in filters)


def received_classical_power(link, plan):
    """Classical power in W arriving at the far-end demux classical port."""
    if not plan.channels:
        return 0.0
    mux_t = db_to_linear(classical_path_loss_db(link.filters))
    total = 0.0
    for ch in plan.channels:
        total += ch.power_w * transmittance(link, ch.wavelength_nm) * mux_t
    return total


def received_classical_power_dbm(link, plan):
    return watts_to_dbm(received_classical_power(link, plan))

"""Power delay profile processing.

A PDP is a uniformly binned record of linear multipath power.  Its area
gives narrowband received power against a calibration run, and its
power-weighted delay moments give the RMS delay spread.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, PdpMismatchError

DELTA_TAU_NS = 2.5
DYNAMIC_RANGE_DB = 30.0
RX_POWER_MAX_DBM = -20.0
RX_POWER_MIN_DBM = -85.0


class ReceivedPowerWarning(UserWarning):
    """Received power outside the sounder's usable window."""


@dataclass(frozen=True)
class PowerDelayProfile:
    delta_tau_ns: float
    gains: np.ndarray
    location: str = ""
    band_ghz: float | None = None
    position: int | None = None

    def __post_init__(self):
        gains = np.array(self.gains, dtype=float).ravel()
        if gains.size == 0:
            raise ValueError("a PDP needs at least one bin")
        if not self.delta_tau_ns > 0:
            raise ValueError(f"bin width must be positive, got {self.delta_tau_ns}")
        if not np.all(np.isfinite(gains)) or np.any(gains < 0):
            raise ValueError("PDP gains must be finite and nonnegative")
        gains.flags.writeable = False
        object.__setattr__(self, "gains", gains)

    @property
    def delays_ns(self) -> np.ndarray:
        return np.arange(self.gains.size) * self.delta_tau_ns

    def __eq__(self, other):
        if not isinstance(other, PowerDelayProfile):
            return NotImplemented
        return (self.delta_tau_ns == other.delta_tau_ns
                and np.array_equal(self.gains, other.gains)
                and (self.location, self.band_ghz, self.position)
                == (other.location, other.band_ghz, other.position))

    __hash__ = None


@dataclass(frozen=True)
class CalibrationReference:
    p_cal_dbm: float
    cal_integral: float

    def __post_init__(self):
        if not self.cal_integral > 0:
            raise ValueError(f"calibration integral must be positive, got {self.cal_integral}")

    @classmethod
    def from_pdp(cls, pdp: PowerDelayProfile, p_cal_dbm: float) -> CalibrationReference:
        return cls(p_cal_dbm, integrate_pdp(pdp))


@dataclass(frozen=True)
class LinkConstants:
    """Transmit power and antenna gains used to turn received power into path loss."""

    tx_power_dbm: float
    tx_gain_dbi: float
    rx_gain_dbi: float


RIG_2P5GHZ = LinkConstants(0.0, 6.0, 6.0)
RIG_60GHZ = LinkConstants(-10.0, 25.0, 25.0)


def rig_for_band(frequency_ghz: float) -> LinkConstants:
    return RIG_60GHZ if frequency_ghz > 30 else RIG_2P5GHZ


def integrate_pdp(pdp: PowerDelayProfile) -> float:
    return float(pdp.gains.sum() * pdp.delta_tau_ns)


def narrowband_power(pdp: PowerDelayProfile, cal: CalibrationReference) -> float:
    """Received power (dBm) from the PDP area relative to the calibration area."""
    area = integrate_pdp(pdp)
    if not area > 0:
        raise DataError("PDP carries no energy")
    return cal.p_cal_dbm + 10.0 * math.log10(area / cal.cal_integral)


def path_loss_from_link(p_t_dbm: float, g_t_dbi: float, g_r_dbi: float,
                        p_rec_dbm: float) -> float:
    return p_t_dbm + g_t_dbi + g_r_dbi - p_rec_dbm


def check_received_power(p_rec_dbm: float) -> bool:
    """Warn (never raise) when a level falls outside the sounder's window."""
    ok = RX_POWER_MIN_DBM <= p_rec_dbm <= RX_POWER_MAX_DBM
    if not ok:
        warnings.warn(
            f"received power {p_rec_dbm:.1f} dBm outside "
            f"[{RX_POWER_MIN_DBM:g}, {RX_POWER_MAX_DBM:g}] dBm",
            ReceivedPowerWarning, stacklevel=2)
    return ok


def clip_dynamic_range(pdp: PowerDelayProfile, range_db: float = DYNAMIC_RANGE_DB) -> PowerDelayProfile:
    """Zero every bin more than ``range_db`` below the strongest bin."""
    if not range_db > 0:
        raise ValueError(f"dynamic range must be positive, got {range_db}")
    peak = pdp.gains.max()
    if peak <= 0:
        return pdp
    floor = peak * 10.0 ** (-range_db / 10.0)
    return replace(pdp, gains=np.where(pdp.gains < floor, 0.0, pdp.gains))


def rms_delay_spread(pdp: PowerDelayProfile, range_db: float | None = DYNAMIC_RANGE_DB) -> float:
    """Power-weighted RMS delay spread in ns.

    The profile is first clipped to ``range_db`` below its peak; pass
    ``None`` to use every bin.
    """
    if range_db is not None:
        pdp = clip_dynamic_range(pdp, range_db)
    g = pdp.gains
    total = g.sum()
    if not total > 0:
        raise DataError("PDP carries no energy")
    tau = pdp.delays_ns
    mean = (g * tau).sum() / total
    # central moment taken directly; the raw-moment difference cancels badly
    return math.sqrt((g * (tau - mean) ** 2).sum() / total)


def average_local_area(pdps) -> PowerDelayProfile:
    """Bin-wise linear mean of PDPs taken over one local area.

    Shorter profiles are zero-padded to the longest.  Metadata is kept
    from the first profile, with the position index dropped.
    """
    pdps = list(pdps)
    if not pdps:
        raise DataError("no PDPs to average")
    dt = pdps[0].delta_tau_ns
    for p in pdps[1:]:
        if p.delta_tau_ns != dt:
            raise PdpMismatchError(
                f"bin widths differ: {dt:g} ns vs {p.delta_tau_ns:g} ns")
    width = max(p.gains.size for p in pdps)
    stack = np.zeros((len(pdps), width))
    for i, p in enumerate(pdps):
        stack[i, :p.gains.size] = p.gains
    first = pdps[0]
    return PowerDelayProfile(dt, stack.mean(axis=0), first.location, first.band_ghz, None)


def tap_bin(delay_ns: float, delta_tau_ns: float) -> int:
    # the small offset keeps exact multiples (e.g. 7.5/2.5) on the upper bin
    return int(math.floor(delay_ns / delta_tau_ns + 1e-9))


def synthesize_pdp(taps, delta_tau_ns: float = DELTA_TAU_NS, noise_floor_mw: float = 0.0,
                   n_bins: int | None = None, **meta) -> PowerDelayProfile:
    """Build a PDP from discrete (delay_ns, power_mw) taps.

    Each tap lands in bin ``floor(delay / delta_tau)``; no pulse shaping.
    """
    taps = [(float(d), float(p)) for d, p in taps]
    for d, p in taps:
        if d < 0 or p < 0:
            raise ValueError(f"taps need nonnegative delay and power, got ({d}, {p})")
    bins = [tap_bin(d, delta_tau_ns) for d, _ in taps]
    needed = max(bins) + 1 if bins else 1
    if n_bins is None:
        n_bins = needed
    elif n_bins < needed:
        raise ValueError(f"{n_bins} bins cannot hold a tap in bin {needed - 1}")
    gains = np.full(n_bins, float(noise_floor_mw))
    for k, (_, p) in zip(bins, taps):
        gains[k] += p
    return PowerDelayProfile(delta_tau_ns, gains, **meta)


@dataclass
class PdpFile:
    pdp: PowerDelayProfile
    p_cal_dbm: float | None = None
    cal_integral: float | None = None
    extra: dict = field(default_factory=dict)

    def calibration(self) -> CalibrationReference | None:
        if self.p_cal_dbm is None or self.cal_integral is None:
            return None
        return CalibrationReference(self.p_cal_dbm, self.cal_integral)


def parse_pdp(text: str, source: str = "<pdp>") -> PdpFile:
    """Read the PDP text format.

    Header lines ``# key=value`` (``delta_tau_ns``, ``p_cal_dbm``,
    ``cal_integral``, ``location``, ``band_ghz``, ``position``) precede rows
    of ``bin_index,linear_gain``.  Missing bins are zero.
    """
    header: dict[str, str] = {}
    rows: dict[int, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                header[key.strip()] = value.strip()
            continue
        parts = [s.strip() for s in line.split(",")]
        if parts == ["bin_index", "linear_gain"]:
            continue
        try:
            k, g = int(parts[0]), float(parts[1])
            if len(parts) != 2:
                raise ValueError
        except (ValueError, IndexError):
            raise DataError(f"{source}:{lineno}: expected 'bin_index,linear_gain', got {raw!r}") from None
        if k < 0 or k in rows:
            raise DataError(f"{source}:{lineno}: bad or repeated bin index {k}")
        rows[k] = g
    if not rows:
        raise DataError(f"{source}: no PDP bins")

    def num(key, default=None):
        if key not in header:
            return default
        try:
            return float(header[key])
        except ValueError:
            raise DataError(f"{source}: header {key} is not a number: {header[key]!r}") from None

    gains = np.zeros(max(rows) + 1)
    for k, g in rows.items():
        gains[k] = g
    position = header.get("position")
    try:
        pdp = PowerDelayProfile(
            num("delta_tau_ns", DELTA_TAU_NS), gains,
            location=header.get("location", ""),
            band_ghz=num("band_ghz"),
            position=int(position) if position is not None else None,
        )
    except ValueError as exc:
        raise DataError(f"{source}: {exc}") from None
    known = {"delta_tau_ns", "p_cal_dbm", "cal_integral", "location", "band_ghz", "position"}
    return PdpFile(pdp, num("p_cal_dbm"), num("cal_integral"),
                   {k: v for k, v in header.items() if k not in known})


def format_pdp(pdp: PowerDelayProfile, p_cal_dbm: float | None = None,
               cal_integral: float | None = None) -> str:
    lines = [f"# delta_tau_ns={pdp.delta_tau_ns!r}"]
    if p_cal_dbm is not None:
        lines.append(f"# p_cal_dbm={p_cal_dbm!r}")
    if cal_integral is not None:
        lines.append(f"# cal_integral={cal_integral!r}")
    if pdp.location:
        lines.append(f"# location={pdp.location}")
    if pdp.band_ghz is not None:
        lines.append(f"# band_ghz={pdp.band_ghz!r}")
    if pdp.position is not None:
        lines.append(f"# position={pdp.position}")
    lines.append("bin_index,linear_gain")
    lines.extend(f"{k},{float(g)!r}" for k, g in enumerate(pdp.gains))
    return "\n".join(lines) + "\n"

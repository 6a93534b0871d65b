"""Forward path loss: free space, log-distance with shadowing, and the
partition-dependent model (free space plus a per-traversal loss for every
partition the direct ray crosses).

Antenna gains never enter a path loss value; :func:`received_power` applies
them when a received level in dBm is wanted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .geometry import TOL, Point, clutter_hits, clutter_mask, crossing_counts, crossing_mask
from .sitemodel import SiteModel


@dataclass(frozen=True)
class FrequencyBand:
    frequency_ghz: float
    wavelength_m: float

    def __post_init__(self):
        if not (self.frequency_ghz > 0 and self.wavelength_m > 0):
            raise ValueError("frequency and wavelength must be positive")

    @classmethod
    def from_ghz(cls, frequency_ghz: float) -> FrequencyBand:
        """Band for a carrier frequency.

        The two measured bands use the rounded wavelengths the published
        tables were computed with (12 cm and 5 mm); any other frequency gets
        c/f.
        """
        for band in CANONICAL_BANDS:
            if abs(band.frequency_ghz - frequency_ghz) <= 1e-9:
                return band
        return cls(float(frequency_ghz), SPEED_OF_LIGHT / (frequency_ghz * 1e9))


BAND_2P5 = FrequencyBand(2.5, 0.12)
BAND_60 = FrequencyBand(60.0, 0.005)
CANONICAL_BANDS = (BAND_2P5, BAND_60)


@dataclass(frozen=True)
class PathLossFit:
    d0: float
    pl_d0: float
    n: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.d0 > 0:
            raise ValueError(f"reference distance must be positive, got {self.d0}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")


@dataclass(frozen=True)
class LossTerm:
    material: str
    kind: str  # "wall" or "clutter"
    count: int
    unit_loss_db: float
    subtotal_db: float


@dataclass(frozen=True)
class PredictionBreakdown:
    distance_m: float
    free_space_pl_db: float
    terms: tuple[LossTerm, ...] = field(default_factory=tuple)
    total_pl_db: float = 0.0

    @property
    def walls(self) -> tuple[LossTerm, ...]:
        return tuple(t for t in self.terms if t.kind == "wall")

    @property
    def clutter(self) -> tuple[LossTerm, ...]:
        return tuple(t for t in self.terms if t.kind == "clutter")


def free_space_path_loss(band: FrequencyBand, d: float) -> float:
    """20·log10(4πd/λ) in dB for a separation of ``d`` metres."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return 20.0 * math.log10(4.0 * math.pi * d / band.wavelength_m)


def log_distance_path_loss(fit: PathLossFit, d: float, shadowing_db: float = 0.0) -> float:
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return fit.pl_d0 + 10.0 * fit.n * math.log10(d / fit.d0) + shadowing_db


def sample_shadowing(sigma: float, seed: int, index: int) -> float:
    """Zero-mean Gaussian shadowing draw (dB), a pure function of (seed, index)."""
    if not sigma >= 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return 0.0
    rng = np.random.default_rng((int(seed), int(index)))
    return float(sigma * rng.standard_normal())


def received_power(tx_power_dbm: float, tx_gain_dbi: float, rx_gain_dbi: float,
                   path_loss_db: float) -> float:
    return tx_power_dbm + tx_gain_dbi + rx_gain_dbi - path_loss_db


def _resolve(site: SiteModel, where) -> Point:
    if isinstance(where, Point):
        return where
    return site.node(where).position


def _sum_terms(free_space: float, terms) -> float:
    total = free_space
    for term in terms:
        total += term.subtotal_db
    return total


def partition_path_loss(site: SiteModel, tx, rx, band: FrequencyBand) -> PredictionBreakdown:
    """Free-space loss plus the loss of every partition on the direct ray.

    ``tx`` and ``rx`` are node ids or :class:`Point` objects.  Walls add their
    per-traversal loss once per crossing.  Clutter disks that encroach on the
    first Fresnel zone without touching the ray add their loss once each;
    disks that sit on the ray itself are ignored (model those as walls).
    """
    p, q = _resolve(site, tx), _resolve(site, rx)
    d = p.distance_to(q)
    if d <= TOL:
        raise ValueError("transmitter and receiver coincide")
    fs = free_space_path_loss(band, d)
    terms = []
    for kind, counts in (("wall", crossing_counts(site, p, q)),
                         ("clutter", clutter_hits(site, p, q, band.wavelength_m))):
        for material, count in counts.items():
            unit = site.materials[material].loss_at(band.frequency_ghz)
            terms.append(LossTerm(material, kind, count, unit, count * unit))
    return PredictionBreakdown(d, fs, tuple(terms), _sum_terms(fs, terms))


@dataclass(frozen=True)
class CoverageGrid:
    """Path loss over cell centres, row-major with rows running along y."""

    tx: str
    band: FrequencyBand
    bounds: tuple[float, float, float, float]
    resolution: float
    xs: np.ndarray
    ys: np.ndarray
    path_loss_db: np.ndarray  # shape (len(ys), len(xs))


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    count = max(1, math.ceil((hi - lo) / step - 1e-9))
    return lo + (np.arange(count) + 0.5) * step


def coverage_grid(site: SiteModel, tx: str, band: FrequencyBand,
                  bounds: tuple[float, float, float, float],
                  resolution: float) -> CoverageGrid:
    """Evaluate :func:`partition_path_loss` at every cell centre.

    Cells closer than ``resolution/2`` to the transmitter report the
    free-space value at ``resolution/2`` (plus any partition crossed on the
    way) so the grid stays finite.
    """
    xmin, ymin, xmax, ymax = bounds
    if not resolution > 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"degenerate bounds {bounds}")
    origin = site.node(tx).position
    xs, ys = _axis(xmin, xmax, resolution), _axis(ymin, ymax, resolution)
    gx, gy = np.meshgrid(xs, ys)
    d = np.hypot(gx - origin.x, gy - origin.y)
    fs = 20.0 * np.log10(4.0 * math.pi * np.maximum(d, 0.5 * resolution) / band.wavelength_m)

    wall_counts: dict[str, np.ndarray] = {}
    coords = site.wall_coords
    for i, material in enumerate(site.wall_material_ids):
        ax, ay, bx, by = coords[i]
        hit = crossing_mask(origin.x, origin.y, gx, gy, ax, ay, bx, by)
        if hit.any():
            acc = wall_counts.setdefault(material, np.zeros(gx.shape, dtype=np.int64))
            acc += hit

    clutter_counts: dict[str, np.ndarray] = {}
    ccoords = site.clutter_coords
    for i, material in enumerate(site.clutter_material_ids):
        cx, cy, r = ccoords[i]
        hit = clutter_mask(origin.x, origin.y, gx, gy, cx, cy, r, band.wavelength_m)
        if hit.any():
            acc = clutter_counts.setdefault(material, np.zeros(gx.shape, dtype=np.int64))
            acc += hit

    # same accumulation order as partition_path_loss: walls then clutter,
    # each sorted by material id
    total = fs.copy()
    for counts in (wall_counts, clutter_counts):
        for material in sorted(counts):
            unit = site.materials[material].loss_at(band.frequency_ghz)
            total += counts[material] * unit
    total.flags.writeable = False
    return CoverageGrid(tx, band, (xmin, ymin, xmax, ymax), resolution, xs, ys, total)


def coverage_csv(grid: CoverageGrid) -> str:
    xmin, ymin, xmax, ymax = grid.bounds
    lines = [
        f"# tx={grid.tx} band_ghz={grid.band.frequency_ghz:g} "
        f"bounds={xmin:g},{ymin:g},{xmax:g},{ymax:g} resolution={grid.resolution:g}",
        "x,y,path_loss_db",
    ]
    for j, y in enumerate(grid.ys):
        row = grid.path_loss_db[j]
        for i, x in enumerate(grid.xs):
            lines.append(f"{x:.6f},{y:.6f},{row[i]:.6f}")
    return "\n".join(lines) + "\n"


def coverage_pgm(grid: CoverageGrid) -> bytes:
    """Binary 8-bit PGM, lowest loss white, highest loss black.

    gray = round(255 * (max - v) / (max - min)); a flat grid is all white.
    The top image row is the largest y.
    """
    values = grid.path_loss_db
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span > 0:
        gray = np.rint(255.0 * (hi - values) / span)
    else:
        gray = np.full(values.shape, 255.0)
    pixels = gray[::-1].astype(np.uint8)
    ny, nx = pixels.shape
    header = (f"P5\n# path_loss_db min={lo:.6f} max={hi:.6f} "
              f"gray=round(255*(max-v)/(max-min))\n{nx} {ny}\n255\n")
    return header.encode("ascii") + pixels.tobytes()

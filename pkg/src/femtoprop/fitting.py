"""Inverse problems: path loss exponent, shadowing spread and per-partition
attenuation from measured links.

Conventions
-----------
* The exponent fit holds the intercept fixed at ``(d0, pl_d0)``; by
  default ``d0 = 1 m`` and ``pl_d0`` is the free-space loss at 1 m.
* ``sigma`` is the population RMS of residuals about zero.  The sample
  standard deviation about the residual mean is available from
  :func:`residual_std` for comparison.
* Excess loss of a link is its measured loss minus free-space loss.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import nnls

from .errors import DataError, DegenerateFitError, NoDataError
from .propagation import FrequencyBand, free_space_path_loss


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinkObservation:
    link_id: str
    distance_m: float
    band: FrequencyBand
    measured_pl_db: float
    counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError(f"link {self.link_id}: distance must be positive")
        for material, n in self.counts.items():
            if n < 0:
                raise ValueError(f"link {self.link_id}: negative count for {material}")

    @property
    def excess_db(self) -> float:
        return self.measured_pl_db - free_space_path_loss(self.band, self.distance_m)


@dataclass(frozen=True)
class MaterialLoss:
    material: str
    band_ghz: float
    mean_loss_db: float
    std_db: float
    sample_count: int
    normalized_db_per_cm: float | None = None


@dataclass(frozen=True)
class PartitionLossEstimate:
    """Per-(band, material) attenuation estimates.

    ``residual_norm_db`` is the 2-norm of ``A·X - excess`` per band for the
    estimator that produced the values.
    """

    method: str
    entries: tuple[MaterialLoss, ...] = ()
    residual_norm_db: Mapping[float, float] = field(default_factory=dict)

    def get(self, material: str, band_ghz: float) -> MaterialLoss:
        for e in self.entries:
            if e.material == material and abs(e.band_ghz - band_ghz) < 1e-9:
                return e
        raise KeyError((material, band_ghz))

    def bands(self) -> list[float]:
        return sorted({e.band_ghz for e in self.entries})

    def materials(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.material not in seen:
                seen.append(e.material)
        return seen

    def __bool__(self):
        return bool(self.entries)


# exponent and sigma ----------------------------------------------------------

def _xy(points, d0, pl_d0):
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise NoDataError("no observations")
    if np.any(pts[:, 0] <= 0):
        raise ValueError("distances must be positive")
    x = 10.0 * np.log10(pts[:, 0] / d0)
    y = pts[:, 1] - pl_d0
    return x, y


def fit_exponent(points: Iterable[tuple[float, float]], d0: float, pl_d0: float) -> float:
    """Least-squares path loss exponent through the fixed point (d0, pl_d0).

    ``n = Σxy / Σx²`` with ``x = 10·log10(d/d0)`` and ``y = PL - pl_d0``.
    """
    x, y = _xy(points, d0, pl_d0)
    sxx = float(np.dot(x, x))
    if sxx <= 1e-24:
        raise DegenerateFitError("every observation sits at the reference distance")
    return float(np.dot(x, y)) / sxx


def _residuals(points, d0, pl_d0, n):
    x, y = _xy(points, d0, pl_d0)
    return y - n * x


def estimate_sigma(points, d0: float, pl_d0: float, n: float) -> float:
    r = _residuals(points, d0, pl_d0, n)
    return math.sqrt(float(np.dot(r, r)) / r.size)


def residual_std(points, d0: float, pl_d0: float, n: float) -> float:
    """Sample standard deviation of the residuals about their own mean."""
    r = _residuals(points, d0, pl_d0, n)
    return float(np.std(r, ddof=1)) if r.size > 1 else 0.0


def sse(points, d0: float, pl_d0: float, n: float) -> float:
    r = _residuals(points, d0, pl_d0, n)
    return float(np.dot(r, r))


def fit_free_intercept(points, d0: float = 1.0) -> tuple[float, float]:
    """Diagnostic only: ordinary least squares for (pl_d0, n)."""
    x, y = _xy(points, d0, 0.0)
    if x.size < 2 or np.ptp(x) <= 1e-12:
        raise DegenerateFitError("need at least two distinct distances")
    n, intercept = np.polyfit(x, y, 1)
    return float(intercept), float(n)


def default_pl_d0(band: FrequencyBand, d0: float = 1.0) -> float:
    return free_space_path_loss(band, d0)


# partitions ------------------------------------------------------------------

def _material_order(links) -> list[str]:
    names = []
    for link in links:
        for m in link.counts:
            if m not in names:
                names.append(m)
    missing = [m for m in names if not any(l.counts.get(m, 0) > 0 for l in links)]
    if missing:
        raise NoDataError(f"no link crosses {', '.join(missing)}")
    return sorted(names)


def _by_band(links):
    groups: dict[float, list[LinkObservation]] = {}
    for link in links:
        groups.setdefault(link.band.frequency_ghz, []).append(link)
    return dict(sorted(groups.items()))


def _design(links, materials):
    A = np.array([[link.counts.get(m, 0) for m in materials] for link in links], dtype=float)
    b = np.array([link.excess_db for link in links])
    return A, b


def _attributions(A, b, estimate, j):
    """Per-link loss attributed to material ``j`` given the other estimates."""
    rows = np.flatnonzero(A[:, j] > 0)
    others = A[rows] @ estimate - A[rows, j] * estimate[j]
    return (b[rows] - others) / A[rows, j]


def _entries(materials, band, A, means, attributions):
    out = []
    for j, m in enumerate(materials):
        vals = attributions[j]
        if vals.size == 0:
            continue
        out.append(MaterialLoss(m, band, float(means[j]), float(np.std(vals)), int(vals.size)))
    return out


def fit_partitions_composite(links: Iterable[LinkObservation]) -> PartitionLossEstimate:
    """Composite-average partition losses, per band.

    Starting from all-zero estimates, materials are visited once, most
    observed first (ties by id).  Each link containing material m is
    attributed ``(excess - Σ_other count·estimate) / count_m`` using the
    estimates current at that moment; the mean of those attributions
    becomes m's estimate.  The reported std is the population std of the
    attributions.  Negative attributions are kept.
    """
    links = list(links)
    if not links:
        raise NoDataError("no observations")
    materials = _material_order(links)
    entries, residuals = [], {}
    for band, group in _by_band(links).items():
        A, b = _design(group, materials)
        order = sorted(range(len(materials)), key=lambda j: (-int((A[:, j] > 0).sum()), materials[j]))
        est = np.zeros(len(materials))
        attributions = [np.empty(0)] * len(materials)
        for j in order:
            vals = _attributions(A, b, est, j)
            attributions[j] = vals
            if vals.size:
                est[j] = vals.mean()
        entries += _entries(materials, band, A, est, attributions)
        residuals[band] = float(np.linalg.norm(A @ est - b))
    return PartitionLossEstimate("composite", tuple(entries), residuals)


def _proportional_columns(A, materials):
    pairs = []
    present = [j for j in range(A.shape[1]) if np.any(A[:, j] > 0)]
    for i, a in enumerate(present):
        for c in present[i + 1:]:
            if np.linalg.matrix_rank(A[:, [a, c]]) < 2:
                pairs.append((materials[a], materials[c]))
    return pairs


def fit_partitions_nnls(links: Iterable[LinkObservation]) -> PartitionLossEstimate:
    """Joint nonnegative least squares for the per-traversal losses, per band.

    Solves ``min ||A·X - excess||²`` subject to ``X >= 0`` where ``A`` holds
    crossing counts.  Std per material comes from the same residual
    attribution the composite method uses.  Proportional count columns
    trigger a :class:`RankDeficiencyWarning`; a minimiser is still returned.
    """
    links = list(links)
    if not links:
        raise NoDataError("no observations")
    materials = _material_order(links)
    entries, residuals = [], {}
    for band, group in _by_band(links).items():
        A, b = _design(group, materials)
        cols = [j for j in range(len(materials)) if np.any(A[:, j] > 0)]
        for a, c in _proportional_columns(A, materials):
            warnings.warn(f"{band:g} GHz: crossing counts of {a} and {c} are proportional; "
                          "their losses are not separately identifiable", RankDeficiencyWarning,
                          stacklevel=2)
        est = np.zeros(len(materials))
        if cols:
            sol, _ = nnls(A[:, cols], b)
            est[cols] = sol
        attributions = [_attributions(A, b, est, j) if j in cols else np.empty(0)
                        for j in range(len(materials))]
        entries += _entries(materials, band, A, est, attributions)
        residuals[band] = float(np.linalg.norm(A @ est - b))
    return PartitionLossEstimate("nnls", tuple(entries), residuals)


def objective(estimate: PartitionLossEstimate, links: Iterable[LinkObservation]) -> float:
    """Sum of squared excess-loss residuals of an estimate over ``links``."""
    total = 0.0
    for link in links:
        pred = sum(n * estimate.get(m, link.band.frequency_ghz).mean_loss_db
                   for m, n in link.counts.items() if n > 0)
        total += (pred - link.excess_db) ** 2
    return total


def normalize_loss(estimate: PartitionLossEstimate, materials: Mapping) -> PartitionLossEstimate:
    """Fill in dB/cm for every material with a thickness.

    ``materials`` maps id to either a :class:`~femtoprop.sitemodel.Material`
    or a thickness in cm (``None`` for thickness-free entries such as
    clutter).
    """
    def thickness(m):
        spec = materials.get(m)
        return getattr(spec, "thickness_cm", spec)

    entries = []
    for e in estimate.entries:
        t = thickness(e.material)
        norm = e.mean_loss_db / t if t is not None and t > 0 else None
        entries.append(replace(e, normalized_db_per_cm=norm))
    return replace(estimate, entries=tuple(entries))


def synthetic_links(band: FrequencyBand, truth: Mapping[str, float], n_links: int = 50,
                    noise_db: float = 2.0, seed: int = 0,
                    mixed_fraction: float = 0.0) -> list[LinkObservation]:
    """Seeded links whose excess loss follows ``truth`` plus Gaussian noise.

    Link ``i`` crosses material ``i mod len(truth)`` (sorted ids) one to
    three times at a distance drawn from 3-28 m.  With probability
    ``mixed_fraction`` it also crosses one or two instances of a second
    material.
    """
    rng = np.random.default_rng(seed)
    names = sorted(truth)
    links = []
    for i in range(n_links):
        primary = i % len(names)
        counts = {names[primary]: int(rng.integers(1, 4))}
        if rng.random() < mixed_fraction:
            other = names[(primary + 1 + int(rng.integers(0, len(names) - 1))) % len(names)]
            counts[other] = counts.get(other, 0) + int(rng.integers(1, 3))
        d = float(rng.uniform(3.0, 28.0))
        excess = sum(n * truth[m] for m, n in counts.items())
        pl = free_space_path_loss(band, d) + excess + noise_db * float(rng.standard_normal())
        links.append(LinkObservation(f"L{i:03d}", d, band, pl, counts))
    return links


LINK_COLUMNS = ("link_id", "distance_m", "freq_ghz", "measured_pl_db")


def parse_links(text: str) -> list[LinkObservation]:
    """Read the link CSV: fixed columns then one count column per material."""
    reader = csv.reader(line for line in text.splitlines() if line.strip() and not line.startswith("#"))
    header = [h.strip() for h in next(reader, [])]
    if tuple(header[:4]) != LINK_COLUMNS:
        raise DataError(f"expected header starting {','.join(LINK_COLUMNS)}")
    materials = header[4:]
    links = []
    for i, rec in enumerate(reader, start=2):
        if len(rec) != len(header):
            raise DataError(f"line {i}: expected {len(header)} fields, got {len(rec)}")
        try:
            counts = {m: int(v) for m, v in zip(materials, rec[4:])}
            links.append(LinkObservation(rec[0].strip(), float(rec[1]),
                                         FrequencyBand.from_ghz(float(rec[2])),
                                         float(rec[3]), counts))
        except ValueError as exc:
            raise DataError(f"line {i}: {exc}") from None
    return links


def format_links(links: Iterable[LinkObservation]) -> str:
    links = list(links)
    materials = sorted({m for link in links for m in link.counts})
    lines = [",".join(LINK_COLUMNS + tuple(materials))]
    for link in links:
        lines.append(",".join([link.link_id, repr(link.distance_m), repr(link.band.frequency_ghz),
                               repr(link.measured_pl_db)]
                              + [str(link.counts.get(m, 0)) for m in materials]))
    return "\n".join(lines) + "\n"

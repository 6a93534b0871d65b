"""Site description: materials, walls, clutter objects and radio nodes.

Site files are UTF-8, line oriented, ``#`` starts a comment::

    material <id> <thickness_cm | -> <band_GHz>:<loss_dB> [...]
    wall     <material_id> <x1> <y1> <x2> <y2>
    clutter  <material_id> <x> <y> <radius_m>
    node     <id> <x> <y> <tx_power_dBm> <gain_dBi>

Coordinates are metres, thickness centimetres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (
    DuplicateIdError,
    MissingBandError,
    SiteReferenceError,
    SiteSyntaxError,
)
from .geometry import Point, Segment

BAND_MATCH_GHZ = 0.1


@dataclass(frozen=True)
class Material:
    id: str
    thickness_cm: float | None
    losses: Mapping[float, float]

    def __post_init__(self):
        object.__setattr__(self, "losses", MappingProxyType(dict(self.losses)))

    def loss_at(self, frequency_ghz: float) -> float:
        """Per-traversal loss (dB) for the band within 0.1 GHz of the request.

        No interpolation is attempted between declared bands.
        """
        best = None
        for band, loss in self.losses.items():
            gap = abs(band - frequency_ghz)
            if gap <= BAND_MATCH_GHZ + 1e-12 and (best is None or gap < best[0]):
                best = (gap, loss)
        if best is None:
            raise MissingBandError(self.id, frequency_ghz)
        return best[1]

    def __eq__(self, other):
        if not isinstance(other, Material):
            return NotImplemented
        return (self.id, self.thickness_cm, dict(self.losses)) == (
            other.id, other.thickness_cm, dict(other.losses))

    def __hash__(self):
        return hash((self.id, self.thickness_cm, tuple(sorted(self.losses.items()))))


@dataclass(frozen=True)
class Wall:
    material: str
    geometry: Segment


@dataclass(frozen=True)
class ClutterObject:
    material: str
    center: Point
    radius: float


@dataclass(frozen=True)
class RadioNode:
    id: str
    position: Point
    tx_power_dbm: float
    antenna_gain_dbi: float


@dataclass(frozen=True)
class SiteModel:
    materials: Mapping[str, Material]
    walls: tuple[Wall, ...] = ()
    clutter: tuple[ClutterObject, ...] = ()
    nodes: Mapping[str, RadioNode] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "materials", MappingProxyType(dict(self.materials)))
        object.__setattr__(self, "nodes", MappingProxyType(dict(self.nodes)))
        object.__setattr__(self, "walls", tuple(self.walls))
        object.__setattr__(self, "clutter", tuple(self.clutter))

    def __eq__(self, other):
        if not isinstance(other, SiteModel):
            return NotImplemented
        return (dict(self.materials) == dict(other.materials)
                and self.walls == other.walls
                and self.clutter == other.clutter
                and dict(self.nodes) == dict(other.nodes))

    def node(self, node_id: str) -> RadioNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise SiteReferenceError(f"unknown node {node_id!r}") from None

    def bands(self) -> set[float]:
        """Bands declared by every material in the site."""
        sets = [set(m.losses) for m in self.materials.values()]
        return set.intersection(*sets) if sets else set()

    @cached_property
    def wall_coords(self) -> np.ndarray:
        arr = np.array([[w.geometry.a.x, w.geometry.a.y, w.geometry.b.x, w.geometry.b.y]
                        for w in self.walls], dtype=float).reshape(-1, 4)
        arr.flags.writeable = False
        return arr

    @cached_property
    def wall_material_ids(self) -> tuple[str, ...]:
        return tuple(w.material for w in self.walls)

    @cached_property
    def clutter_coords(self) -> np.ndarray:
        arr = np.array([[c.center.x, c.center.y, c.radius] for c in self.clutter],
                       dtype=float).reshape(-1, 3)
        arr.flags.writeable = False
        return arr

    @cached_property
    def clutter_material_ids(self) -> tuple[str, ...]:
        return tuple(c.material for c in self.clutter)


def _number(token: str, line: int, col: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise SiteSyntaxError(f"expected {what}, got {token!r}", line, col) from None
    if not math.isfinite(value):
        raise SiteSyntaxError(f"{what} must be finite, got {token!r}", line, col)
    return value


def _tokens(raw: str):
    """Split a line into (token, 1-based column) pairs, dropping comments."""
    text = raw.split("#", 1)[0]
    out = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < len(text) and not text[j].isspace():
            j += 1
        out.append((text[i:j], i + 1))
        i = j
    return out


_ARITY = {"material": None, "wall": 6, "clutter": 5, "node": 6}


def parse_site(text: str) -> SiteModel:
    """Parse site-file text into a :class:`SiteModel`.

    Raises :class:`SiteSyntaxError`, :class:`SiteReferenceError` or
    :class:`DuplicateIdError`, each carrying the 1-based line number.
    Materials may be referenced before they are declared.
    """
    materials: dict[str, Material] = {}
    nodes: dict[str, RadioNode] = {}
    walls: list[tuple[Wall, int, int]] = []
    clutter: list[tuple[ClutterObject, int, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = _tokens(raw)
        if not toks:
            continue
        kind, kcol = toks[0]
        if kind not in _ARITY:
            raise SiteSyntaxError(f"unknown record type {kind!r}", lineno, kcol)
        arity = _ARITY[kind]
        if arity is not None and len(toks) != arity:
            raise SiteSyntaxError(
                f"{kind} expects {arity - 1} fields, got {len(toks) - 1}", lineno, kcol)

        if kind == "material":
            if len(toks) < 4:
                raise SiteSyntaxError(
                    "material expects an id, a thickness and at least one band:loss pair",
                    lineno, kcol)
            mid, mcol = toks[1]
            if mid in materials:
                raise DuplicateIdError(f"duplicate material id {mid!r}", lineno, mcol)
            thick_tok, tcol = toks[2]
            thickness = None if thick_tok == "-" else _number(thick_tok, lineno, tcol, "thickness")
            losses = {}
            for tok, col in toks[3:]:
                band_s, sep, loss_s = tok.partition(":")
                if not sep:
                    raise SiteSyntaxError(f"expected band:loss, got {tok!r}", lineno, col)
                band = _number(band_s, lineno, col, "band (GHz)")
                if band in losses:
                    raise DuplicateIdError(f"band {band:g} GHz declared twice", lineno, col)
                losses[band] = _number(loss_s, lineno, col + len(band_s) + 1, "loss (dB)")
            materials[mid] = Material(mid, thickness, losses)

        elif kind == "wall":
            mat, mcol = toks[1]
            x1, y1, x2, y2 = (_number(t, lineno, c, "coordinate") for t, c in toks[2:])
            walls.append((Wall(mat, Segment(Point(x1, y1), Point(x2, y2))), lineno, mcol))

        elif kind == "clutter":
            mat, mcol = toks[1]
            x, y, r = (_number(t, lineno, c, "number") for t, c in toks[2:])
            clutter.append((ClutterObject(mat, Point(x, y), r), lineno, mcol))

        else:
            nid, ncol = toks[1]
            if nid in nodes:
                raise DuplicateIdError(f"duplicate node id {nid!r}", lineno, ncol)
            x, y, p, g = (_number(t, lineno, c, "number") for t, c in toks[2:])
            nodes[nid] = RadioNode(nid, Point(x, y), p, g)

    for obj, lineno, col in walls + clutter:
        if obj.material not in materials:
            raise SiteReferenceError(f"unknown material {obj.material!r}", lineno, col)

    return SiteModel(
        materials=materials,
        walls=tuple(w for w, _, _ in walls),
        clutter=tuple(c for c, _, _ in clutter),
        nodes=nodes,
    )


def format_site(site: SiteModel) -> str:
    """Serialise a site so that :func:`parse_site` reproduces it exactly."""
    lines = []
    for m in site.materials.values():
        thick = "-" if m.thickness_cm is None else repr(m.thickness_cm)
        pairs = " ".join(f"{band!r}:{loss!r}" for band, loss in m.losses.items())
        lines.append(f"material {m.id} {thick} {pairs}")
    for w in site.walls:
        a, b = w.geometry.a, w.geometry.b
        lines.append(f"wall {w.material} {a.x!r} {a.y!r} {b.x!r} {b.y!r}")
    for c in site.clutter:
        lines.append(f"clutter {c.material} {c.center.x!r} {c.center.y!r} {c.radius!r}")
    for n in site.nodes.values():
        lines.append(f"node {n.id} {n.position.x!r} {n.position.y!r} "
                     f"{n.tx_power_dbm!r} {n.antenna_gain_dbi!r}")
    return "\n".join(lines) + "\n"


def validate_site(site: SiteModel) -> list[str]:
    """Return human-readable invariant violations; empty when the site is sound."""
    problems = []
    for m in site.materials.values():
        if m.thickness_cm is not None and not m.thickness_cm > 0:
            problems.append(f"material {m.id}: nonpositive thickness")
        if not m.losses:
            problems.append(f"material {m.id}: no band losses declared")
        for band, loss in m.losses.items():
            if not math.isfinite(loss):
                problems.append(f"material {m.id}: non-finite loss at {band:g} GHz")
    for i, w in enumerate(site.walls):
        tag = f"wall #{i} ({w.material})"
        mat = site.materials.get(w.material)
        if mat is None:
            problems.append(f"{tag}: unknown material")
        elif mat.thickness_cm is None:
            problems.append(f"{tag}: material has no thickness")
        if w.geometry.is_degenerate:
            problems.append(f"{tag}: degenerate wall geometry")
    for i, c in enumerate(site.clutter):
        tag = f"clutter #{i} ({c.material})"
        if c.material not in site.materials:
            problems.append(f"{tag}: unknown material")
        if not c.radius > 0:
            problems.append(f"{tag}: nonpositive radius")
    for n in site.nodes.values():
        if not (math.isfinite(n.tx_power_dbm) and math.isfinite(n.antenna_gain_dbi)):
            problems.append(f"node {n.id}: non-finite power or gain")
    return problems


def load_site(path) -> SiteModel:
    with open(path, encoding="utf-8") as fh:
        return parse_site(fh.read())


def demo_site_text() -> str:
    """Text of the bundled illustrative office floor."""
    return resources.files("femtoprop").joinpath("data/demo.site").read_text(encoding="utf-8")


def demo_site() -> SiteModel:
    return parse_site(demo_site_text())

"""Parameterized nanopillar geometry and voxelization.

A device is a stack of conical frustum segments standing on a laterally
infinite substrate slab, described top-down: the facet radius is fixed and
each segment opens outward (or stays cylindrical) as it descends toward the
substrate. Sidewall angles are measured from the substrate plane, so 90 deg
is a vertical wall and smaller angles taper outward faster.

All lengths in this module are nanometers unless a name says otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ValidationError
from .rawio import save_raw

Array = np.ndarray

DIAMOND_INDEX = 2.4
DEFAULT_EMITTER_DEPTH_NM = 5.0
DEFAULT_SUBSTRATE_UM = 2.0

_SQRT2 = math.sqrt(2.0)


def cot_deg(angle_deg: float) -> float:
    """Cotangent of an angle given in degrees (0 for a 90 deg wall)."""
    if angle_deg == 90.0:
        return 0.0
    return 1.0 / math.tan(math.radians(angle_deg))


def rmid_from_angle(top_radius_nm: float, taper_height_um: float, angle_deg: float) -> float:
    """Radius at the bottom of a taper section that starts at `top_radius_nm`
    and descends `taper_height_um` with the given sidewall angle."""
    if top_radius_nm <= 0:
        raise ValidationError(f"top radius must be positive, got {top_radius_nm}")
    if taper_height_um < 0:
        raise ValidationError(f"taper height must be non-negative, got {taper_height_um}")
    if not 0.0 < angle_deg <= 90.0:
        raise ValidationError(f"sidewall angle must be in (0, 90] deg, got {angle_deg}")
    return top_radius_nm + taper_height_um * 1e3 * cot_deg(angle_deg)


def critical_angle_deg(n_inside: float, n_outside: float = 1.0) -> float:
    """Total-internal-reflection angle at a planar interface, in degrees."""
    if n_inside <= 0 or n_outside <= 0:
        raise ValidationError("refractive indices must be positive")
    if n_outside >= n_inside:
        raise ValidationError(
            f"no critical angle for n_inside={n_inside} <= n_outside={n_outside}"
        )
    return math.degrees(math.asin(n_outside / n_inside))


@dataclass(frozen=True)
class ConeSegment:
    """One frustum section: a vertical extent plus a sidewall angle."""

    height_um: float
    angle_deg: float

    def validate(self) -> None:
        if not self.height_um > 0:
            raise ValidationError(f"segment height must be positive, got {self.height_um}")
        if not 0.0 < self.angle_deg <= 90.0:
            raise ValidationError(
                f"sidewall angle must be in (0, 90] deg, got {self.angle_deg}"
            )

    @property
    def height_nm(self) -> float:
        return self.height_um * 1e3

    def to_dict(self) -> dict:
        return {"h_um": self.height_um, "angle_deg": self.angle_deg}

    @classmethod
    def from_dict(cls, d: dict) -> "ConeSegment":
        try:
            return cls(height_um=float(d["h_um"]), angle_deg=float(d["angle_deg"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad segment entry {d!r}: {exc}") from exc


@dataclass(frozen=True)
class PillarGeometry:
    """Complete device description.

    `segments` runs from the facet downward; the emitter sits on (or offset
    from) the pillar axis, `emitter_depth_nm` below the top facet.
    """

    top_radius_nm: float
    segments: tuple[ConeSegment, ...]
    substrate_um: float = DEFAULT_SUBSTRATE_UM
    index: float = DIAMOND_INDEX
    emitter_depth_nm: float = DEFAULT_EMITTER_DEPTH_NM
    emitter_offset_nm: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        self.validate()

    def validate(self) -> None:
        if not self.top_radius_nm > 0:
            raise ValidationError(f"top radius must be positive, got {self.top_radius_nm}")
        if not self.segments:
            raise ValidationError("geometry needs at least one segment")
        for seg in self.segments:
            seg.validate()
        if self.substrate_um < 0:
            raise ValidationError(f"substrate thickness must be >= 0, got {self.substrate_um}")
        if not self.index > 1.0:
            raise ValidationError(f"material index must exceed 1, got {self.index}")
        if self.emitter_depth_nm < 0:
            raise ValidationError(f"emitter depth must be >= 0, got {self.emitter_depth_nm}")
        if self.emitter_depth_nm >= self.height_nm:
            raise ValidationError(
                f"emitter depth {self.emitter_depth_nm} nm reaches below the pillar base"
            )
        local_r = self.radius_at_depth(self.emitter_depth_nm)
        if abs(self.emitter_offset_nm) >= local_r:
            raise ValidationError(
                f"emitter offset {self.emitter_offset_nm} nm leaves the pillar "
                f"(radius {local_r:.1f} nm at that depth)"
            )

    # -- derived dimensions ------------------------------------------------

    @property
    def height_nm(self) -> float:
        """Total pillar height, facet to base."""
        return sum(s.height_nm for s in self.segments)

    @property
    def height_um(self) -> float:
        return self.height_nm / 1e3

    def radius_at_depth(self, depth_nm) -> Array | float:
        """Pillar radius at a depth below the facet (piecewise linear).

        Accepts scalars or arrays; values outside [0, height] clamp to the
        end radii, which keeps voxelization loops simple.
        """
        depth = np.asarray(depth_nm, dtype=float)
        r = np.full(depth.shape, float(self.top_radius_nm))
        z0 = 0.0
        r0 = self.top_radius_nm
        for seg in self.segments:
            c = cot_deg(seg.angle_deg)
            covered = np.clip(depth - z0, 0.0, seg.height_nm)
            r = np.where(depth > z0, r0 + covered * c, r)
            r0 += seg.height_nm * c
            z0 += seg.height_nm
        if np.ndim(depth_nm) == 0:
            return float(r)
        return r

    @property
    def base_radius_nm(self) -> float:
        r = self.top_radius_nm
        for seg in self.segments:
            r += seg.height_nm * cot_deg(seg.angle_deg)
        return r

    def segment_radii_nm(self) -> list[float]:
        """Radii at each segment boundary, facet first, base last."""
        radii = [self.top_radius_nm]
        for seg in self.segments:
            radii.append(radii[-1] + seg.height_nm * cot_deg(seg.angle_deg))
        return radii

    def diamond_volume_nm3(self) -> float:
        """Analytic pillar volume (sum of frustum volumes, substrate excluded)."""
        vol = 0.0
        radii = self.segment_radii_nm()
        for seg, r1, r2 in zip(self.segments, radii[:-1], radii[1:]):
            vol += math.pi * seg.height_nm * (r1 * r1 + r1 * r2 + r2 * r2) / 3.0
        return vol

    def emitter_position_nm(self) -> tuple[float, float, float]:
        """Emitter coordinates relative to the pillar axis at the facet,
        z increasing downward."""
        return (self.emitter_offset_nm, 0.0, self.emitter_depth_nm)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "r_top_nm": self.top_radius_nm,
            "segments": [s.to_dict() for s in self.segments],
            "substrate_um": self.substrate_um,
            "n_d": self.index,
            "d_nm": self.emitter_depth_nm,
            "delta_nm": self.emitter_offset_nm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PillarGeometry":
        if not isinstance(d, dict):
            raise ValidationError(f"geometry must be a JSON object, got {type(d).__name__}")
        unknown = set(d) - {"r_top_nm", "segments", "substrate_um", "n_d", "d_nm", "delta_nm"}
        if unknown:
            raise ValidationError(f"unknown geometry keys: {sorted(unknown)}")
        try:
            segments = tuple(ConeSegment.from_dict(s) for s in d["segments"])
            return cls(
                top_radius_nm=float(d["r_top_nm"]),
                segments=segments,
                substrate_um=float(d.get("substrate_um", DEFAULT_SUBSTRATE_UM)),
                index=float(d.get("n_d", DIAMOND_INDEX)),
                emitter_depth_nm=float(d.get("d_nm", DEFAULT_EMITTER_DEPTH_NM)),
                emitter_offset_nm=float(d.get("delta_nm", 0.0)),
            )
        except KeyError as exc:
            raise ValidationError(f"geometry is missing required key {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad geometry value: {exc}") from exc

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source: str | Path) -> "PillarGeometry":
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and source.endswith(".json")):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise ValidationError(f"cannot read geometry file {source}: {exc}") from exc
        else:
            text = str(source)
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid geometry JSON (line {exc.lineno}): {exc.msg}") from exc
        return cls.from_dict(data)


def single_cone(top_radius_nm: float, height_um: float, angle_deg: float = 90.0, **kw) -> PillarGeometry:
    """Convenience constructor for one-segment devices."""
    return PillarGeometry(top_radius_nm, (ConeSegment(height_um, angle_deg),), **kw)


def expansion_factor(geom: PillarGeometry) -> float:
    """Mode-expansion figure: base radius over facet radius (>= 1)."""
    return geom.base_radius_nm / geom.top_radius_nm


# ---------------------------------------------------------------------------
# voxelization


@dataclass(frozen=True)
class RasterSpec:
    """Padding and boundary bookkeeping for the simulation domain.

    Distances are gaps between the structure and the absorber, not totals;
    the absorber thickness (`pml_cells * cell`) is added on top of them.
    """

    air_lateral_nm: float = 500.0
    air_above_nm: float = 300.0
    exit_air_nm: float = 500.0
    pml_cells: int = 10
    subsamples: int = 4

    def validate(self) -> None:
        if min(self.air_lateral_nm, self.air_above_nm, self.exit_air_nm) < 0:
            raise ValidationError("padding distances must be non-negative")
        if self.pml_cells < 4:
            raise ValidationError(f"need at least 4 absorber cells, got {self.pml_cells}")
        if self.subsamples < 1:
            raise ValidationError("subsamples must be >= 1")


@dataclass(frozen=True)
class PermittivityGrid:
    """Cell-centered relative permittivity on a uniform cubic grid.

    The grid covers the full simulation domain including the absorber
    frame. z increases downward: facet near the top, substrate and exit
    air at the bottom. Landmark coordinates are kept in nm from the grid
    origin (the upper corner of cell [0,0,0]).
    """

    eps: Array
    cell_nm: float
    pml_cells: int
    z_facet_nm: float
    z_base_nm: float
    z_substrate_bottom_nm: float
    emitter_nm: tuple[float, float, float]
    index: float

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.eps.shape

    @property
    def axis_nm(self) -> tuple[float, float]:
        nx, ny, _ = self.eps.shape
        return (0.5 * nx * self.cell_nm, 0.5 * ny * self.cell_nm)

    def diamond_volume_nm3(self) -> float:
        """Voxel estimate of the pillar volume.

        The substrate slab fills the whole cross-section with an exactly known
        thickness, so its contribution is subtracted analytically rather than
        by slicing at a cell boundary (the pillar base rarely lands on one).
        """
        frac = (self.eps - 1.0) / (self.index**2 - 1.0)
        nx, ny = self.eps.shape[:2]
        slab = nx * ny * self.cell_nm**2 * (self.z_substrate_bottom_nm - self.z_base_nm)
        return float(frac.sum()) * self.cell_nm**3 - slab

    def save(self, path: str | Path) -> Path:
        # stored z-major so that x is the fastest-varying index in the raw file
        meta = {
            "kind": "permittivity",
            "axes": ["z", "y", "x"],
            "cell_nm": self.cell_nm,
            "pml_cells": self.pml_cells,
            "z_facet_nm": self.z_facet_nm,
            "z_base_nm": self.z_base_nm,
            "z_substrate_bottom_nm": self.z_substrate_bottom_nm,
            "emitter_nm": list(self.emitter_nm),
            "index": self.index,
        }
        return save_raw(path, self.eps.transpose(2, 1, 0), meta)


def _lateral_fractions(rho2: Array, xs: Array, ys: Array, radius: float, cell: float,
                       offsets: Array) -> Array:
    """Area fraction of each (x, y) cell inside a circle of `radius`.

    Cells are classified by their center distance; only the boundary ring is
    subsampled. `rho2` is the squared center distance, shape (nx, ny).
    """
    half_diag = cell / _SQRT2
    frac = (rho2 <= (radius - half_diag) ** 2).astype(float)
    if radius <= half_diag:
        frac[:] = 0.0
    ring = (rho2 > max(radius - half_diag, 0.0) ** 2) & (rho2 < (radius + half_diag) ** 2)
    ii, jj = np.nonzero(ring)
    if ii.size:
        px = xs[ii][:, None, None] + offsets[None, :, None] * cell
        py = ys[jj][:, None, None] + offsets[None, None, :] * cell
        inside = (px * px + py * py) <= radius * radius
        frac[ii, jj] = inside.mean(axis=(1, 2))
    return frac


def rasterize(geom: PillarGeometry, cell_nm: float, spec: RasterSpec = RasterSpec()) -> PermittivityGrid:
    """Voxelize a device onto a uniform grid with volume-fraction averaging.

    Boundary cells receive eps = 1 + f * (n^2 - 1) with f the diamond volume
    fraction estimated from `spec.subsamples`^3 sample points, so interfaces
    land between grid lines instead of snapping to them.
    """
    geom.validate()
    spec.validate()
    if cell_nm <= 0:
        raise ValidationError(f"cell size must be positive, got {cell_nm}")
    if cell_nm > geom.top_radius_nm:
        raise ConfigurationError(
            f"cell size {cell_nm} nm exceeds the facet radius {geom.top_radius_nm} nm"
        )

    pml_nm = spec.pml_cells * cell_nm
    half_w = geom.base_radius_nm + abs(geom.emitter_offset_nm) + spec.air_lateral_nm + pml_nm
    nx = ny = 2 * int(math.ceil(half_w / cell_nm))
    z_facet = pml_nm + spec.air_above_nm
    z_base = z_facet + geom.height_nm
    z_sub_bot = z_base + geom.substrate_um * 1e3
    nz = int(math.ceil((z_sub_bot + spec.exit_air_nm + pml_nm) / cell_nm))
    if min(nx, ny, nz) < 2 * spec.pml_cells + 8:
        raise ConfigurationError(
            f"domain {nx}x{ny}x{nz} too small for {spec.pml_cells}-cell absorbers"
        )

    cx = 0.5 * nx * cell_nm
    cy = 0.5 * ny * cell_nm
    xs = (np.arange(nx) + 0.5) * cell_nm - cx
    ys = (np.arange(ny) + 0.5) * cell_nm - cy
    rho2 = xs[:, None] ** 2 + ys[None, :] ** 2

    ss = spec.subsamples
    offsets = (np.arange(ss) + 0.5) / ss - 0.5

    frac = np.zeros((nx, ny, nz))
    for k in range(nz):
        zlo = k * cell_nm
        zhi = zlo + cell_nm
        # substrate contribution: exact 1D overlap, full cross-section
        sub_overlap = max(0.0, min(zhi, z_sub_bot) - max(zlo, z_base)) / cell_nm
        layer = np.full((nx, ny), sub_overlap)
        if zhi > z_facet and zlo < z_base:
            acc = np.zeros((nx, ny))
            for oz in offsets:
                z = zlo + (0.5 + oz) * cell_nm
                if z_facet <= z < z_base:
                    r = geom.radius_at_depth(z - z_facet)
                    acc += _lateral_fractions(rho2, xs, ys, float(r), cell_nm, offsets)
            layer += acc / ss
        frac[:, :, k] = np.clip(layer, 0.0, 1.0)

    eps = 1.0 + frac * (geom.index**2 - 1.0)
    ex, ey, ez = geom.emitter_position_nm()
    return PermittivityGrid(
        eps=eps,
        cell_nm=float(cell_nm),
        pml_cells=spec.pml_cells,
        z_facet_nm=z_facet,
        z_base_nm=z_base,
        z_substrate_bottom_nm=z_sub_bot,
        emitter_nm=(cx + ex, cy + ey, z_facet + ez),
        index=geom.index,
    )

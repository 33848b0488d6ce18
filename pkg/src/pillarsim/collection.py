"""Collection figures of merit for pillar emitters.

The per-wavelength collection efficiency is the far-field power inside the
objective cone divided by the emitted power; the band figure weights it by
the emitter spectrum. A device summary also carries the NA dependence and
the NA at which 80% of the full-hemisphere collection is reached.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    ConsistencyError,
    DataError,
    ValidationError,
)
from .farfield import FarField, flux_in_cone, na_fraction_curve, near_to_far
from .fdtd import GaussianPulse, Simulation3D
from .geometry import PillarGeometry, RasterSpec, rasterize

BAND_NM = (650.0, 800.0)
DEFAULT_WAVELENGTHS_NM = tuple(float(w) for w in np.linspace(*BAND_NM, 7))
DEFAULT_NA = 0.75
DEFAULT_NA_SAMPLES = tuple(float(v) for v in np.linspace(0.0, 1.0, 21))

# Built-in room-temperature emitter spectrum: a narrow zero-phonon line on
# top of a broad, asymmetric phonon sideband. The sideband is a two-sided
# gaussian (different widths left and right of the peak); the line weight
# is a documented constant, not a fit.
ZPL_NM = 637.0
ZPL_SIGMA_NM = 2.0
ZPL_WEIGHT = 0.04
PSB_PEAK_NM = 690.0
PSB_SIGMA_LO_NM = 35.0
PSB_SIGMA_HI_NM = 65.0
_SUPPORT_NM = (600.0, 820.0)


@dataclass(frozen=True)
class EmissionSpectrum:
    """Tabulated relative emission intensity, linearly interpolated.

    Only ratios matter: every consumer is invariant under a global rescale.
    """

    wavelengths_nm: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=np.float64)
        ii = np.asarray(self.intensity, dtype=np.float64)
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "intensity", ii)
        if wl.ndim != 1 or wl.shape != ii.shape or wl.size < 2:
            raise ValidationError("spectrum needs matching 1D wavelength and "
                                  "intensity tables with at least 2 rows")
        if not np.all(np.isfinite(wl)) or not np.all(np.isfinite(ii)):
            raise ValidationError("spectrum contains non-finite values")
        if np.any(np.diff(wl) <= 0):
            raise ValidationError("spectrum wavelengths must increase strictly")
        if np.any(ii < 0):
            raise ValidationError("spectrum intensity must be non-negative")
        if wl[0] > _SUPPORT_NM[0] + 1e-9 or wl[-1] < _SUPPORT_NM[1] - 1e-9:
            raise ValidationError(
                f"spectrum must cover {_SUPPORT_NM[0]:.0f}-{_SUPPORT_NM[1]:.0f} nm, "
                f"got {wl[0]:.1f}-{wl[-1]:.1f} nm"
            )

    def __call__(self, wavelength_nm) -> np.ndarray:
        return np.interp(wavelength_nm, self.wavelengths_nm, self.intensity)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("wavelength_nm,intensity\n")
            for w, i in zip(self.wavelengths_nm, self.intensity):
                fh.write(f"{float(w)!r},{float(i)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "EmissionSpectrum":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").strip().splitlines()
        except OSError as exc:
            raise ValidationError(f"cannot read spectrum file {path}: {exc}") from exc
        if not lines or [c.strip() for c in lines[0].split(",")] != [
                "wavelength_nm", "intensity"]:
            raise DataError(f"{path}: expected header 'wavelength_nm,intensity'")
        wl, ii = [], []
        for ln, line in enumerate(lines[1:], start=2):
            parts = line.split(",")
            try:
                w, i = (float(p) for p in parts)
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{ln}: bad spectrum row {line!r}") from exc
            wl.append(w)
            ii.append(i)
        return cls(np.array(wl), np.array(ii))


def nv_spectrum_default() -> EmissionSpectrum:
    """Parametric stand-in for the room-temperature emitter spectrum.

    Tabulated on a half-nanometer grid so the narrow line survives linear
    interpolation; swap in a measured CSV for fidelity work.
    """
    wl = np.arange(_SUPPORT_NM[0], _SUPPORT_NM[1] + 0.25, 0.5)
    sigma = np.where(wl < PSB_PEAK_NM, PSB_SIGMA_LO_NM, PSB_SIGMA_HI_NM)
    psb = np.exp(-((wl - PSB_PEAK_NM) / sigma) ** 2)
    line = np.exp(-0.5 * ((wl - ZPL_NM) / ZPL_SIGMA_NM) ** 2)
    amp = (ZPL_WEIGHT / (1.0 - ZPL_WEIGHT)) * (np.trapezoid(psb, wl)
                                               / np.trapezoid(line, wl))
    return EmissionSpectrum(wl, psb + amp * line)


def collection_efficiency(ff: FarField, p_src, na: float = DEFAULT_NA) -> np.ndarray:
    """Fraction of emitted power collected inside the objective cone, per
    wavelength. Values above 1 by more than numerical tolerance indicate a
    broken normalization and raise; small overshoots warn and clamp."""
    p = np.atleast_1d(np.asarray(p_src, dtype=np.float64))
    n_wl = ff.wavelengths_nm.size
    if p.size == 1:
        p = np.full(n_wl, p[0])
    elif p.size != n_wl:
        raise ValidationError(
            f"source power has {p.size} entries for {n_wl} wavelengths"
        )
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise ValidationError("source power must be positive and finite")
    eta = flux_in_cone(ff, na) / p
    if np.any(eta > 1.02):
        raise ConsistencyError(
            f"collection efficiency reaches {eta.max():.4f}; collected power "
            "exceeds emitted power beyond numerical tolerance"
        )
    if np.any(eta > 1.0):
        warnings.warn(
            f"collection efficiency {eta.max():.4f} slightly exceeds 1, "
            "clamping", RuntimeWarning, stacklevel=2)
        eta = np.minimum(eta, 1.0)
    return eta


def spectrum_weighted_efficiency(wavelengths_nm, eta, spectrum: EmissionSpectrum,
                                 band_nm=BAND_NM) -> float:
    """Band average of the efficiency weighted by the emission spectrum.

    Trapezoidal quadrature on the union of a 1 nm grid, the efficiency
    samples and the spectrum nodes inside the band; efficiency between its
    samples is linearly interpolated.
    """
    wl = np.asarray(wavelengths_nm, dtype=np.float64)
    ee = np.asarray(eta, dtype=np.float64)
    if wl.ndim != 1 or wl.shape != ee.shape:
        raise ValidationError("eta and wavelengths must be matching 1D tables")
    if wl.size < 3:
        raise ValidationError("need at least 3 wavelength samples across the band")
    if np.any(np.diff(wl) <= 0):
        order = np.argsort(wl)
        wl, ee = wl[order], ee[order]
        if np.any(np.diff(wl) <= 0):
            raise ValidationError("duplicate wavelength samples")
    lo, hi = (float(b) for b in band_nm)
    if not hi > lo:
        raise ValidationError(f"empty band {band_nm}")
    if wl[0] > lo + 1e-9 or wl[-1] < hi - 1e-9:
        raise ValidationError(
            f"efficiency samples {wl[0]:.0f}-{wl[-1]:.0f} nm do not span the "
            f"band {lo:.0f}-{hi:.0f} nm"
        )
    swl = spectrum.wavelengths_nm
    if swl[0] > lo + 1e-9 or swl[-1] < hi - 1e-9:
        raise ValidationError(
            f"band {lo:.0f}-{hi:.0f} nm lies outside the spectrum support "
            f"{swl[0]:.0f}-{swl[-1]:.0f} nm"
        )
    grid = np.union1d(np.arange(lo, hi, 1.0), [hi])
    grid = np.union1d(grid, wl[(wl >= lo) & (wl <= hi)])
    grid = np.union1d(grid, swl[(swl >= lo) & (swl <= hi)])
    e_i = np.interp(grid, wl, ee)
    s_i = spectrum(grid)
    denom = np.trapezoid(s_i, grid)
    if denom <= 0:
        raise DataError("spectrum integrates to zero over the band")
    return float(np.trapezoid(e_i * s_i, grid) / denom)


def na_080(curve, na_samples=None, monotone_rel_tol: float = 1e-3) -> float:
    """Smallest NA collecting 80% of the full-hemisphere (NA=1) value.

    Tabulated curves interpolate linearly between samples and must include
    NA=1; a callable curve is refined by bisection instead.
    """
    if callable(curve):
        full = float(curve(1.0))
        if full <= 0:
            raise DataError("curve at NA=1 must be positive")
        target = 0.8 * full
        if float(curve(0.0)) >= target:
            return 0.0
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if float(curve(mid)) >= target:
                hi = mid
            else:
                lo = mid
        return hi
    vals = np.asarray(curve, dtype=np.float64)
    na = np.asarray(na_samples, dtype=np.float64)
    if vals.ndim != 1 or na.shape != vals.shape or vals.size < 2:
        raise ValidationError("curve needs matching 1D NA and value tables")
    if np.any(np.diff(na) <= 0):
        raise ValidationError("NA samples must increase strictly")
    if abs(na[-1] - 1.0) > 1e-9:
        raise ValidationError("curve must include NA=1")
    scale = float(np.max(np.abs(vals)))
    if scale <= 0:
        raise DataError("curve is identically zero")
    if np.any(np.diff(vals) < -monotone_rel_tol * scale):
        raise DataError("collection curve decreases with NA beyond tolerance")
    target = 0.8 * vals[-1]
    idx = int(np.argmax(vals >= target))
    if idx == 0:
        return float(na[0])
    v0, v1 = vals[idx - 1], vals[idx]
    frac = (target - v0) / (v1 - v0)
    return float(na[idx - 1] + frac * (na[idx] - na[idx - 1]))


def emitter_dipole_pair() -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Two orthogonal in-plane unit dipoles.

    An emitter whose symmetry axis coincides with the pillar axis radiates
    as the incoherent, equal-weight sum of these two transitions.
    """
    return ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))


def geometry_digest(geom: PillarGeometry) -> str:
    """Stable content hash of a device description."""
    text = json.dumps(geom.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# solver settings and the simulation pipeline


@dataclass(frozen=True)
class SolverSettings:
    """Resolution tier and domain bookkeeping for collection runs."""

    cell_nm: float = 20.0
    pml_cells: int = 10
    courant: float = 0.5
    decay_threshold: float = 1e-5
    max_steps: int | None = None
    air_lateral_nm: float = 500.0
    air_above_nm: float = 300.0
    exit_air_nm: float = 500.0
    subsamples: int = 4

    def __post_init__(self):
        if self.cell_nm <= 0:
            raise ValidationError(f"cell size must be positive, got {self.cell_nm}")
        if not 0 < self.courant <= 1:
            raise ValidationError(f"courant factor {self.courant} outside (0, 1]")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValidationError("max_steps must be positive when given")
        self.raster_spec().validate()

    def raster_spec(self) -> RasterSpec:
        return RasterSpec(air_lateral_nm=self.air_lateral_nm,
                          air_above_nm=self.air_above_nm,
                          exit_air_nm=self.exit_air_nm,
                          pml_cells=self.pml_cells,
                          subsamples=self.subsamples)

    def to_dict(self) -> dict:
        return {
            "cell_nm": self.cell_nm,
            "pml_cells": self.pml_cells,
            "courant": self.courant,
            "decay_threshold": self.decay_threshold,
            "max_steps": self.max_steps,
            "air_lateral_nm": self.air_lateral_nm,
            "air_above_nm": self.air_above_nm,
            "exit_air_nm": self.exit_air_nm,
            "subsamples": self.subsamples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverSettings":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"bad solver settings: {exc}") from exc


def settings_for_tier(tier: str) -> SolverSettings:
    """The two supported resolution tiers: everyday runs vs figure quality."""
    if tier == "coarse":
        return SolverSettings(cell_nm=20.0)
    if tier == "fine":
        return SolverSettings(cell_nm=10.0)
    raise ValidationError(f"unknown resolution tier {tier!r}; use coarse or fine")


@dataclass
class CollectionResult:
    """Efficiency summary for one device (one dipole or the averaged pair)."""

    geometry_digest: str
    band_nm: tuple[float, float]
    na: float
    wavelengths_nm: np.ndarray
    eta: np.ndarray
    eta_bar: float
    na_samples: np.ndarray
    na_curve: np.ndarray
    na_080: float
    eta_per_dipole: np.ndarray | None = None
    far_field: FarField | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "geometry_digest": self.geometry_digest,
            "band_nm": [float(b) for b in self.band_nm],
            "na": self.na,
            "wavelengths_nm": self.wavelengths_nm.tolist(),
            "eta": self.eta.tolist(),
            "eta_bar": self.eta_bar,
            "na_samples": self.na_samples.tolist(),
            "na_curve": self.na_curve.tolist(),
            "na_080": self.na_080,
            "eta_per_dipole": (None if self.eta_per_dipole is None
                               else self.eta_per_dipole.tolist()),
            "provenance": self.provenance,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "CollectionResult":
        try:
            per_dip = d.get("eta_per_dipole")
            return cls(
                geometry_digest=str(d["geometry_digest"]),
                band_nm=tuple(float(b) for b in d["band_nm"]),
                na=float(d["na"]),
                wavelengths_nm=np.asarray(d["wavelengths_nm"], dtype=np.float64),
                eta=np.asarray(d["eta"], dtype=np.float64),
                eta_bar=float(d["eta_bar"]),
                na_samples=np.asarray(d["na_samples"], dtype=np.float64),
                na_curve=np.asarray(d["na_curve"], dtype=np.float64),
                na_080=float(d["na_080"]),
                eta_per_dipole=(None if per_dip is None
                                else np.asarray(per_dip, dtype=np.float64)),
                provenance=dict(d.get("provenance", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad collection result record: {exc}") from exc

    @classmethod
    def from_json(cls, source) -> "CollectionResult":
        if isinstance(source, Path) or (isinstance(source, str)
                                        and source.lstrip()[:1] != "{"):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise ValidationError(f"cannot read result file {source}: {exc}") from exc
        else:
            text = source
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid result JSON: {exc.msg}") from exc


def average_dipoles(result_a: CollectionResult,
                    result_b: CollectionResult) -> CollectionResult:
    """Equal-weight incoherent combination of two dipole orientations."""
    a, b = result_a, result_b
    if a.geometry_digest != b.geometry_digest:
        raise ValidationError("cannot average results for different geometries")
    if tuple(a.band_nm) != tuple(b.band_nm) or a.na != b.na:
        raise ValidationError("cannot average results with different band or NA")
    if (a.wavelengths_nm.shape != b.wavelengths_nm.shape
            or not np.allclose(a.wavelengths_nm, b.wavelengths_nm)):
        raise ValidationError("wavelength sampling differs between dipoles")
    if (a.na_samples.shape != b.na_samples.shape
            or not np.allclose(a.na_samples, b.na_samples)):
        raise ValidationError("NA sampling differs between dipoles")

    na_curve = 0.5 * (a.na_curve + b.na_curve)
    far = None
    if a.far_field is not None and b.far_field is not None:
        fa, fb = a.far_field, b.far_field
        if (fa.intensity_w_sr.shape == fb.intensity_w_sr.shape
                and np.allclose(fa.theta_rad, fb.theta_rad)
                and np.allclose(fa.phi_rad, fb.phi_rad)
                and fa.exit_index == fb.exit_index):
            far = FarField(fa.wavelengths_nm, fa.exit_index, fa.theta_rad,
                           fa.phi_rad,
                           0.5 * (fa.intensity_w_sr + fb.intensity_w_sr))
        else:
            raise ValidationError("far-field grids differ between dipoles")
    return CollectionResult(
        geometry_digest=a.geometry_digest,
        band_nm=tuple(a.band_nm),
        na=a.na,
        wavelengths_nm=a.wavelengths_nm.copy(),
        eta=0.5 * (a.eta + b.eta),
        eta_bar=0.5 * (a.eta_bar + b.eta_bar),
        na_samples=a.na_samples.copy(),
        na_curve=na_curve,
        na_080=na_080(na_curve, a.na_samples),
        eta_per_dipole=np.stack([a.eta, b.eta]),
        far_field=far,
        provenance={"dipoles": [a.provenance, b.provenance]},
    )


def _single_dipole_result(grid, geom_digest: str, orientation,
                          settings: SolverSettings, wavelengths_nm, na: float,
                          na_samples, spectrum: EmissionSpectrum,
                          band_nm) -> CollectionResult:
    wl = np.asarray(wavelengths_nm, dtype=np.float64)
    sim = Simulation3D(grid, wavelengths_nm=wl, courant=settings.courant)
    pulse = GaussianPulse.for_band(float(wl.min()), float(wl.max()))
    sim.add_dipole(grid.emitter_nm, orientation, pulse)
    box_half = 4.0 * grid.cell_nm
    sim.add_box_monitor(grid.emitter_nm, (box_half, box_half, box_half),
                        name="src")
    z_plane = grid.z_substrate_bottom_nm + 0.5 * settings.exit_air_nm
    sim.add_plane_monitor("z", z_plane, sign=1, name="exit")
    run = sim.run(max_steps=settings.max_steps,
                  decay_threshold=settings.decay_threshold)
    p_src = run.source_power("src")
    ff = near_to_far(run.monitors["exit"], exit_index=1.0)
    eta = collection_efficiency(ff, p_src, na)
    eta_curve = na_fraction_curve(ff, na_samples) / p_src[:, None]
    na_arr = np.asarray(na_samples, dtype=np.float64)
    bar_curve = np.array([
        spectrum_weighted_efficiency(wl, eta_curve[:, m], spectrum, band_nm)
        for m in range(na_arr.size)
    ])
    return CollectionResult(
        geometry_digest=geom_digest,
        band_nm=tuple(float(b) for b in band_nm),
        na=float(na),
        wavelengths_nm=wl,
        eta=eta,
        eta_bar=spectrum_weighted_efficiency(wl, eta, spectrum, band_nm),
        na_samples=na_arr,
        na_curve=bar_curve,
        na_080=na_080(bar_curve, na_arr),
        far_field=ff,
        provenance={
            "orientation": [float(c) for c in orientation],
            "cell_nm": grid.cell_nm,
            "grid_shape": list(grid.shape),
            "steps": run.steps,
            "decayed": bool(run.decayed),
        },
    )


def simulate_collection(geom: PillarGeometry,
                        settings: SolverSettings | None = None,
                        wavelengths_nm=DEFAULT_WAVELENGTHS_NM,
                        na: float = DEFAULT_NA,
                        na_samples=DEFAULT_NA_SAMPLES,
                        spectrum: EmissionSpectrum | None = None,
                        band_nm=BAND_NM) -> CollectionResult:
    """Full pipeline for one device: both in-plane dipoles, averaged.

    Voxelizes the device, runs one broadband time march per dipole
    orientation, projects the exit plane to the far field and reduces to
    the efficiency figures.
    """
    settings = settings or SolverSettings()
    spectrum = spectrum or nv_spectrum_default()
    na_arr = np.asarray(na_samples, dtype=np.float64)
    if na_arr.size < 2 or abs(na_arr[-1] - 1.0) > 1e-9:
        raise ValidationError("na_samples must end at 1.0 so the collection "
                              "curve can be normalized")
    grid = rasterize(geom, settings.cell_nm, settings.raster_spec())
    digest = geometry_digest(geom)
    results = [
        _single_dipole_result(grid, digest, orientation, settings, wavelengths_nm,
                              na, na_arr, spectrum, band_nm)
        for orientation in emitter_dipole_pair()
    ]
    return average_dipoles(results[0], results[1])

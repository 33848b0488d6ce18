"""Near-to-far-field projection of monitor-plane phasors.

Surface equivalence over one planar cut: tangential E and H become magnetic
and electric sheet currents, whose radiation integrals give the angular
power density on the hemisphere the face normal points into. Phasors follow
the solver convention (real field = Re[X exp(-i w t)]), so outgoing waves
carry exp(+ikr) and the projection kernel is exp(-ik r_hat . r').

All operations here are pure functions of immutable monitor data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import ETA0
from .errors import ConfigurationError, ValidationError
from .rawio import save_raw

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AperturePhasors:
    """Co-located tangential phasors on a planar aperture.

    The frame (u, v, n) is right-handed with n pointing into the far zone;
    `eu`, `ev`, `hu`, `hv` are indexed [wavelength, u, v] on the uniform
    grid given by `u_nm`, `v_nm`. This is the synthetic-input counterpart
    of a solver plane monitor (which is converted internally).
    """

    wavelengths_nm: np.ndarray
    u_nm: np.ndarray
    v_nm: np.ndarray
    eu: np.ndarray
    ev: np.ndarray
    hu: np.ndarray
    hv: np.ndarray

    def __post_init__(self):
        shape = (len(self.wavelengths_nm), len(self.u_nm), len(self.v_nm))
        for name in ("eu", "ev", "hu", "hv"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValidationError(
                    f"aperture field {name} has shape {arr.shape}, expected {shape}"
                )


@dataclass(frozen=True)
class FarField:
    """Angular radiant intensity on a hemisphere, per wavelength.

    `theta_rad` is the polar angle from the collection axis (the aperture
    normal), `phi_rad` the azimuth in the aperture plane; intensity is in
    W/sr with shape [wavelength, theta, phi].
    """

    wavelengths_nm: np.ndarray
    exit_index: float
    theta_rad: np.ndarray
    phi_rad: np.ndarray
    intensity_w_sr: np.ndarray

    def hemisphere_flux(self) -> np.ndarray:
        """Total radiated power through the hemisphere, per wavelength."""
        return _cone_flux(self.intensity_w_sr, self.theta_rad, self.phi_rad,
                          0.5 * math.pi)

    def _pick_wavelength(self, wavelength_nm: float | None) -> int:
        if wavelength_nm is None:
            if self.wavelengths_nm.size != 1:
                raise ValidationError(
                    "far field holds several wavelengths; pass wavelength_nm"
                )
            return 0
        idx = int(np.argmin(np.abs(self.wavelengths_nm - wavelength_nm)))
        if abs(self.wavelengths_nm[idx] - wavelength_nm) > 1e-6:
            raise ValidationError(
                f"wavelength {wavelength_nm} nm not among {self.wavelengths_nm}"
            )
        return idx

    def write_csv(self, path, wavelength_nm: float | None = None) -> None:
        """Angular map as `theta_deg, phi_deg, intensity` rows."""
        idx = self._pick_wavelength(wavelength_nm)
        grid = self.intensity_w_sr[idx]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("theta_deg,phi_deg,intensity\n")
            for i, th in enumerate(np.degrees(self.theta_rad)):
                for j, ph in enumerate(np.degrees(self.phi_rad)):
                    fh.write(f"{th:.6g},{ph:.6g},{float(grid[i, j])!r}\n")

    def save_raw(self, path) -> Path:
        """Float32 grid dump with a JSON sidecar (figure regeneration)."""
        meta = {
            "wavelengths_nm": [float(w) for w in self.wavelengths_nm],
            "exit_index": self.exit_index,
            "theta_deg": [float(t) for t in np.degrees(self.theta_rad)],
            "phi_deg": [float(p) for p in np.degrees(self.phi_rad)],
            "axes": ["wavelength", "theta", "phi"],
            "units": "W/sr",
        }
        return save_raw(path, self.intensity_w_sr, meta)


def _aperture_frame(plane, exit_index: float):
    """Normalize solver planes and synthetic apertures to one frame.

    Returns (wavelengths, eu, ev, hu, hv, u_nm, v_nm) with the implicit
    normal pointing into the hemisphere to project. Solver planes with
    sign=-1 are mirrored into a right-handed frame about their reversed
    normal by swapping the two tangential directions.
    """
    if isinstance(plane, AperturePhasors):
        return (np.asarray(plane.wavelengths_nm, dtype=np.float64),
                plane.eu, plane.ev, plane.hu, plane.hv,
                np.asarray(plane.u_nm, dtype=np.float64),
                np.asarray(plane.v_nm, dtype=np.float64))

    eps_lo = getattr(plane, "eps_min", None)
    eps_hi = getattr(plane, "eps_max", None)
    if eps_lo is None or not hasattr(plane, "colocated"):
        raise ValidationError(
            f"cannot project {type(plane).__name__}; expected a plane monitor "
            f"result or AperturePhasors"
        )
    if eps_hi - eps_lo > 1e-9:
        raise ConfigurationError(
            "monitor plane intersects structured material "
            f"(permittivity spans {eps_lo:.4g}..{eps_hi:.4g}); far-field "
            "projection needs a homogeneous cut"
        )
    n_plane = math.sqrt(0.5 * (eps_lo + eps_hi))
    if abs(n_plane - exit_index) > 1e-3:
        raise ConfigurationError(
            f"monitor plane lies in index {n_plane:.4g} but exit_index is "
            f"{exit_index:.4g}"
        )
    eu, ev, hu, hv, u_nm, v_nm = plane.colocated()
    if plane.sign < 0:
        swap = (0, 2, 1)
        eu, ev = ev.transpose(swap), eu.transpose(swap)
        hu, hv = hv.transpose(swap), hu.transpose(swap)
        u_nm, v_nm = v_nm, u_nm
    return plane.wavelengths_nm, eu, ev, hu, hv, u_nm, v_nm


def near_to_far(plane, exit_index: float = 1.0, theta_step_deg: float = 1.0,
                phi_step_deg: float = 2.0,
                wavelength_nm=None) -> FarField:
    """Project aperture phasors to the far-zone intensity hemisphere.

    `plane` is a solver plane-monitor result (its sign picks the hemisphere)
    or an AperturePhasors. `wavelength_nm` selects a scalar or sequence of
    the stored wavelengths; default all.
    """
    if theta_step_deg <= 0 or phi_step_deg <= 0:
        raise ValidationError("angular resolution must be positive")
    wl, eu, ev, hu, hv, u_nm, v_nm = _aperture_frame(plane, exit_index)

    if wavelength_nm is not None:
        want = np.atleast_1d(np.asarray(wavelength_nm, dtype=np.float64))
        idx = []
        for w in want:
            j = int(np.argmin(np.abs(wl - w)))
            if abs(wl[j] - w) > 1e-6:
                raise ValidationError(f"wavelength {w} nm not among {wl}")
            idx.append(j)
        wl = wl[idx]
        eu, ev, hu, hv = (a[idx] for a in (eu, ev, hu, hv))

    du = np.diff(u_nm)
    dv = np.diff(v_nm)
    if du.size == 0 or dv.size == 0:
        raise ValidationError("aperture needs at least 2 samples per axis")
    if not (np.allclose(du, du[0]) and np.allclose(dv, dv[0])):
        raise ValidationError("aperture grid must be uniformly spaced")
    a_m = (u_nm - u_nm.mean()) * 1e-9
    b_m = (v_nm - v_nm.mean()) * 1e-9
    cell_area = du[0] * dv[0] * 1e-18

    n_theta = int(round(90.0 / theta_step_deg)) + 1
    n_phi = int(round(360.0 / phi_step_deg))
    theta = np.linspace(0.0, 0.5 * math.pi, n_theta)
    phi = np.arange(n_phi) * (_TWO_PI / n_phi)

    k = exit_index * _TWO_PI / (wl * 1e-9)
    eta = ETA0 / exit_index
    alpha = k[:, None] * np.sin(theta)[None, :]
    cos_t = np.cos(theta)[None, :]

    intensity = np.empty((wl.size, n_theta, n_phi))
    for p, ph in enumerate(phi):
        ca, sa = math.cos(ph), math.sin(ph)
        px = np.exp(-1j * alpha[:, :, None] * (ca * a_m))
        py = np.exp(-1j * alpha[:, :, None] * (sa * b_m))

        def transform(field):
            rows = px @ field
            return (rows * py).sum(axis=-1) * cell_area

        t_hu = transform(hu)
        t_hv = transform(hv)
        t_eu = transform(eu)
        t_ev = transform(ev)
        # sheet currents: J = n x H, M = -n x E (components in the u,v frame)
        j_u, j_v = -t_hv, t_hu
        m_u, m_v = t_ev, -t_eu
        n_t = (j_u * ca + j_v * sa) * cos_t
        n_p = -j_u * sa + j_v * ca
        l_t = (m_u * ca + m_v * sa) * cos_t
        l_p = -m_u * sa + m_v * ca
        intensity[:, :, p] = (np.abs(l_p + eta * n_t) ** 2
                              + np.abs(l_t - eta * n_p) ** 2)

    intensity *= (k[:, None, None] ** 2) / (32.0 * math.pi**2 * eta)
    return FarField(wavelengths_nm=wl, exit_index=float(exit_index),
                    theta_rad=theta, phi_rad=phi, intensity_w_sr=intensity)


def _cone_flux(intensity: np.ndarray, theta: np.ndarray, phi: np.ndarray,
               theta_c: float) -> np.ndarray:
    """Integrate intensity over the solid-angle cone theta <= theta_c.

    Azimuth uses the periodic rectangle rule; the polar integral applies the
    trapezoid rule to intensity*sin(theta) with the boundary segment clipped
    at theta_c by linear interpolation.
    """
    d_phi = _TWO_PI / phi.size
    g = intensity.sum(axis=2) * d_phi * np.sin(theta)
    t0, t1 = theta[:-1], theta[1:]
    seg = t1 - t0
    cover = np.clip((theta_c - t0) / seg, 0.0, 1.0)
    g0, g1 = g[..., :-1], g[..., 1:]
    g_cut = g0 + (g1 - g0) * cover
    return (0.5 * (g0 + g_cut) * seg * cover).sum(axis=-1)


def flux_in_cone(ff: FarField, na: float) -> np.ndarray:
    """Collected power within the cone sin(theta) <= NA/exit_index."""
    if not (0.0 <= na <= ff.exit_index):
        raise ValidationError(
            f"NA must lie in [0, {ff.exit_index}] for this exit medium, got {na}"
        )
    theta_c = math.asin(min(na / ff.exit_index, 1.0))
    return _cone_flux(ff.intensity_w_sr, ff.theta_rad, ff.phi_rad, theta_c)


def na_fraction_curve(ff: FarField, na_samples) -> np.ndarray:
    """Collected power at each NA sample, shaped [wavelength, NA].

    Samples must be sorted ascending within [0, 1]; the curve is monotone
    non-decreasing and its last entry at NA=1 equals the hemisphere flux.
    """
    na = np.asarray(na_samples, dtype=np.float64)
    if na.ndim != 1 or na.size == 0:
        raise ValidationError("NA samples must be a non-empty 1D sequence")
    if np.any(np.diff(na) < 0):
        raise ValidationError("NA samples must be sorted ascending")
    if na[0] < 0.0 or na[-1] > 1.0:
        raise ValidationError("NA samples must lie within [0, 1]")
    return np.stack([flux_in_cone(ff, float(v)) for v in na], axis=1)

"""Three-dimensional staggered-grid Maxwell solver.

Conventions used throughout:

* one shared array shape (nx, ny, nz) for all six field components, with the
  usual half-cell offsets implicit (Ex lives at (i+1/2, j, k) and so on),
* z grows downward, toward the collection optics,
* phasors accumulate with the exp(+i w t) sign, E sampled on whole steps and
  H on half steps, each with its own phase weight,
* monitor phasors and source spectra both carry a factor dt per sample, so
  flux ratios against analytic per-frequency expressions come out unitless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..constants import C0, EPS0, MU0
from ..errors import (
    ConfigurationError,
    ConsistencyError,
    InstabilityError,
    PlacementError,
    StabilityError,
    ValidationError,
)
from ..geometry import PermittivityGrid
from . import kernels
from .cpml import AxisPml, CpmlSpec, build_axis_pml, courant_dt

_TWO_PI = 2.0 * math.pi

# minimum pulse spectral amplitude (relative to peak) across monitored band
MIN_BAND_AMPLITUDE = 0.02


def homogeneous_grid(shape, cell_nm: float, index: float = 1.0,
                     pml_cells: int = 8) -> PermittivityGrid:
    """Uniform-material grid, mainly for validation runs."""
    if isinstance(shape, int):
        shape = (shape, shape, shape)
    nx, ny, nz = (int(s) for s in shape)
    eps = np.full((nx, ny, nz), float(index) ** 2)
    return PermittivityGrid(
        eps=eps,
        cell_nm=float(cell_nm),
        pml_cells=int(pml_cells),
        z_facet_nm=0.0,
        z_base_nm=0.0,
        z_substrate_bottom_nm=0.0,
        emitter_nm=(0.5 * nx * cell_nm, 0.5 * ny * cell_nm, 0.5 * nz * cell_nm),
        index=float(index),
    )


@dataclass(frozen=True)
class GaussianPulse:
    """Gaussian-enveloped sine burst, identically zero outside [0, cutoff]."""

    frequency_hz: float
    tau_s: float
    delay_s: float
    cutoff_s: float

    @classmethod
    def for_band(cls, lambda_lo_nm: float, lambda_hi_nm: float,
                 tau_fs: float = 4.0) -> "GaussianPulse":
        if not 0 < lambda_lo_nm < lambda_hi_nm:
            raise ValidationError(
                f"need 0 < lambda_lo < lambda_hi, got {lambda_lo_nm}, {lambda_hi_nm}"
            )
        f0 = 0.5 * C0 * (1.0 / (lambda_lo_nm * 1e-9) + 1.0 / (lambda_hi_nm * 1e-9))
        tau = tau_fs * 1e-15
        return cls(frequency_hz=f0, tau_s=tau, delay_s=6.0 * tau, cutoff_s=12.0 * tau)

    def __call__(self, t: float) -> float:
        if t < 0.0 or t > self.cutoff_s:
            return 0.0
        x = (t - self.delay_s) / self.tau_s
        return math.sin(_TWO_PI * self.frequency_hz * (t - self.delay_s)) * math.exp(-x * x)

    def spectral_amplitude(self, wavelength_nm: float) -> float:
        """Envelope magnitude at a wavelength, relative to the carrier peak."""
        w = _TWO_PI * C0 / (wavelength_nm * 1e-9)
        w0 = _TWO_PI * self.frequency_hz
        arg = 0.5 * (w - w0) * self.tau_s
        return math.exp(-arg * arg)


_STAGGER = {
    "x": (0.5, 0.0, 0.0),
    "y": (0.0, 0.5, 0.0),
    "z": (0.0, 0.0, 0.5),
}

# cyclic relabeling so every monitor sees a plane with its normal on the last
# axis: (u, v, normal) right-handed, component roles matching the z case
_AXIS_VIEW = {
    "z": ((0, 1, 2), ("x", "y", "x", "y")),
    "x": ((1, 2, 0), ("y", "z", "y", "z")),
    "y": ((2, 0, 1), ("z", "x", "z", "x")),
}


@dataclass
class PlaneResult:
    """Accumulated phasors on one monitor face plus readout helpers.

    The face lies on the half-integer plane ``kp + 1/2`` of its normal axis,
    where the tangential magnetic field is native; the electric field is kept
    on the node planes either side so each Poynting product is evaluated at
    one point. Summed over a closed box this bookkeeping telescopes exactly,
    leaving only source work, so a source-free box reads numerical noise.

    The two tangential families live on interleaved lattices: ``eu``/``hv``
    at (u+1/2, v) with shape (U, V+1), ``ev``/``hu`` at (u, v+1/2) with
    shape (U+1, V), for a face of U by V cells.
    """

    axis: str
    sign: int
    kp: int
    u0: int
    v0: int
    cell_nm: float
    wavelengths_nm: np.ndarray
    eu_lo: np.ndarray
    eu_hi: np.ndarray
    hv: np.ndarray
    ev_lo: np.ndarray
    ev_hi: np.ndarray
    hu: np.ndarray
    # permittivity range over the two node planes the face touches, letting
    # consumers assert the face sits in homogeneous material
    eps_min: float = 1.0
    eps_max: float = 1.0

    @property
    def component_names(self) -> tuple[str, str, str, str]:
        _, names = _AXIS_VIEW[self.axis]
        return ("E" + names[0], "E" + names[1], "H" + names[2], "H" + names[3])

    def flux(self) -> np.ndarray:
        """Net spectral power through the face along +axis times sign.

        Averages the electric field onto the face, the best local estimate
        for a standalone monitor plane.
        """
        area = (self.cell_nm * 1e-9) ** 2
        su = 0.5 * (self.eu_lo + self.eu_hi) * np.conj(self.hv)
        sv = 0.5 * (self.ev_lo + self.ev_hi) * np.conj(self.hu)
        s = np.real(su).sum(axis=(1, 2)) - np.real(sv).sum(axis=(1, 2))
        return self.sign * 0.5 * area * s

    def conserved_flux(self) -> np.ndarray:
        """Face flux in the discretely conserved pairing.

        Takes the electric field from the node plane on the side the face
        normal (sign) points away from, i.e. the box interior when the face
        belongs to an outward-signed closed box. Summed over such a box the
        interior terms cancel identically, leaving exactly the work done by
        enclosed sources, so a source-free box reads only the transform
        truncation floor.
        """
        area = (self.cell_nm * 1e-9) ** 2
        eu = self.eu_lo if self.sign > 0 else self.eu_hi
        ev = self.ev_lo if self.sign > 0 else self.ev_hi
        su = np.real(eu * np.conj(self.hv)).sum(axis=(1, 2))
        sv = np.real(ev * np.conj(self.hu)).sum(axis=(1, 2))
        return self.sign * 0.5 * area * (su - sv)

    def colocated(self):
        """Tangential phasors averaged to cell centers of the monitor face.

        Returns (Eu, Ev, Hu, Hv, u_nm, v_nm); field arrays are indexed
        [wavelength, u, v] and coordinates are absolute within the domain.
        """
        eu_face = 0.5 * (self.eu_lo + self.eu_hi)
        ev_face = 0.5 * (self.ev_lo + self.ev_hi)
        eu = 0.5 * (eu_face[:, :, :-1] + eu_face[:, :, 1:])
        hv = 0.5 * (self.hv[:, :, :-1] + self.hv[:, :, 1:])
        ev = 0.5 * (ev_face[:, :-1, :] + ev_face[:, 1:, :])
        hu = 0.5 * (self.hu[:, :-1, :] + self.hu[:, 1:, :])
        nu = eu.shape[1]
        nv = eu.shape[2]
        u_nm = (self.u0 + np.arange(nu) + 0.5) * self.cell_nm
        v_nm = (self.v0 + np.arange(nv) + 0.5) * self.cell_nm
        return eu, ev, hu, hv, u_nm, v_nm

    @property
    def normal_position_nm(self) -> float:
        return (self.kp + 0.5) * self.cell_nm

    def write_csv(self, path) -> None:
        """Center-point phasors and net flux per wavelength."""
        eu, ev, hu, hv, _, _ = self.colocated()
        iu = eu.shape[1] // 2
        iv = eu.shape[2] // 2
        names = self.component_names
        flux = self.flux()
        with open(path, "w", encoding="utf-8") as fh:
            cols = ["wavelength_nm"]
            for n in names:
                cols += [f"re_{n}", f"im_{n}"]
            cols.append("flux_W")
            fh.write(",".join(cols) + "\n")
            for l, wl in enumerate(self.wavelengths_nm):
                vals = []
                for arr in (eu, ev, hu, hv):
                    z = arr[l, iu, iv]
                    vals += [repr(float(z.real)), repr(float(z.imag))]
                fh.write(",".join([repr(float(wl))] + vals + [repr(float(flux[l]))]) + "\n")


@dataclass
class BoxResult:
    """Six outward-signed face results forming a closed surface."""

    faces: dict

    def net_flux(self) -> np.ndarray:
        """Total outward spectral power, in the conserved face pairing."""
        total = None
        for face in self.faces.values():
            f = face.conserved_flux()
            total = f if total is None else total + f
        return total


class _PlaneAcc:
    """Accumulates the staggered slices one monitor face needs.

    ``kp`` indexes the half-plane kp + 1/2; ``u_range`` and ``v_range`` are
    inclusive node ranges, so a face of U by V cells spans nodes
    [u0, u0 + U] by [v0, v0 + V].
    """

    def __init__(self, sim: "Simulation3D", axis: str, kp: int,
                 u_range: tuple[int, int], v_range: tuple[int, int], sign: int):
        perm, comps = _AXIS_VIEW[axis]
        fields = {"x": (sim.ex, sim.hx), "y": (sim.ey, sim.hy), "z": (sim.ez, sim.hz)}
        eu = np.transpose(fields[comps[0]][0], perm)
        ev = np.transpose(fields[comps[1]][0], perm)
        hu = np.transpose(fields[comps[2]][1], perm)
        hv = np.transpose(fields[comps[3]][1], perm)
        n_axis = eu.shape[2]
        u0, u1 = u_range
        v0, v1 = v_range
        if not (0 <= kp < n_axis - 1):
            raise ConfigurationError(f"monitor plane index {kp} outside the domain")
        if not (0 <= u0 < u1 <= eu.shape[0] - 1 and 0 <= v0 < v1 <= eu.shape[1] - 1):
            raise ConfigurationError(
                f"monitor extent u={u_range}, v={v_range} does not fit the grid"
            )
        a_sl = np.s_[u0:u1, v0:v1 + 1]
        b_sl = np.s_[u0:u1 + 1, v0:v1]
        self.trio_a = (eu[a_sl + (kp,)], eu[a_sl + (kp + 1,)], hv[a_sl + (kp,)])
        self.trio_b = (ev[b_sl + (kp,)], ev[b_sl + (kp + 1,)], hu[b_sl + (kp,)])
        self.axis = axis
        self.sign = sign
        self.kp = kp
        self.u0 = u0
        self.v0 = v0
        eps_slab = np.transpose(sim.grid.eps, perm)[u0:u1 + 1, v0:v1 + 1, kp:kp + 2]
        self.eps_min = float(eps_slab.min())
        self.eps_max = float(eps_slab.max())
        n_wl = sim.wavelengths_nm.size
        self.acc_a = np.zeros((3, n_wl) + self.trio_a[0].shape, dtype=np.complex128)
        self.acc_b = np.zeros((3, n_wl) + self.trio_b[0].shape, dtype=np.complex128)

    def accumulate(self, we: np.ndarray, wh: np.ndarray) -> None:
        kernels.accumulate_trio(self.acc_a, *self.trio_a, we, wh)
        kernels.accumulate_trio(self.acc_b, *self.trio_b, we, wh)

    def result(self, sim: "Simulation3D") -> PlaneResult:
        return PlaneResult(
            axis=self.axis, sign=self.sign, kp=self.kp, u0=self.u0, v0=self.v0,
            cell_nm=sim.cell_nm, wavelengths_nm=sim.wavelengths_nm.copy(),
            eu_lo=self.acc_a[0], eu_hi=self.acc_a[1], hv=self.acc_a[2],
            ev_lo=self.acc_b[0], ev_hi=self.acc_b[1], hu=self.acc_b[2],
            eps_min=self.eps_min, eps_max=self.eps_max,
        )


@dataclass
class SourceRecord:
    position_nm: tuple
    orientation: np.ndarray
    moment_am: float
    pulse: GaussianPulse
    entries: list
    samples: list = field(default_factory=list)

    def spectrum(self, wavelengths_nm: np.ndarray, dt: float) -> np.ndarray:
        """Discrete Fourier transform of the injected waveform, times dt."""
        s = np.asarray(self.samples)
        n = np.arange(s.size)
        w = _TWO_PI * C0 / (np.asarray(wavelengths_nm) * 1e-9)
        phase = np.exp(1j * np.outer(w, (n + 0.5) * dt))
        return (phase @ s) * dt


@dataclass
class RunResult:
    wavelengths_nm: np.ndarray
    cell_nm: float
    dt_s: float
    steps: int
    decayed: bool
    peak_energy: float
    final_energy: float
    energy_history: list
    monitors: dict
    sources: list
    dumps: dict

    def source_spectrum(self, index: int = 0) -> np.ndarray:
        return self.sources[index].spectrum(self.wavelengths_nm, self.dt_s)

    def source_power(self, box_name: str) -> np.ndarray:
        """Net outward flux of a closed box enclosing the source."""
        box = self.monitors.get(box_name)
        if not isinstance(box, BoxResult):
            raise ConfigurationError(f"monitor {box_name!r} is not a closed box")
        net = box.net_flux()
        if np.any(net <= 0.0):
            raise ConsistencyError(
                "source power is not strictly positive across the band; "
                "the box may not enclose the source or the run was too short"
            )
        return net


class _FieldDump:
    def __init__(self, sim, axis, kp, component, every):
        perm, _ = _AXIS_VIEW[axis]
        arr = getattr(sim, component.lower())
        self.view = np.transpose(arr, perm)[:, :, kp]
        self.every = int(every)
        self.frames: list = []
        self.meta = {"axis": axis, "plane_index": kp, "component": component,
                     "every": int(every), "cell_nm": sim.cell_nm}

    def maybe_record(self, step: int) -> None:
        if step % self.every == 0:
            self.frames.append(self.view.astype(np.float32))


class Simulation3D:
    """Time-steps one device and returns per-wavelength monitor phasors.

    Owns its field arrays; one instance drives one run.
    """

    def __init__(self, grid: PermittivityGrid, wavelengths_nm,
                 courant: float = 0.5, cpml: CpmlSpec = CpmlSpec()):
        if courant > 1.0:
            raise StabilityError(
                f"courant factor {courant} exceeds the stability limit 1"
            )
        if courant <= 0.0:
            raise ValidationError(f"courant factor must be positive, got {courant}")
        if grid.pml_cells < 8:
            raise ConfigurationError(
                f"need at least 8 absorber cells, got {grid.pml_cells}"
            )
        eps = np.asarray(grid.eps, dtype=np.float64)
        if eps.ndim != 3:
            raise ConfigurationError(f"permittivity grid must be 3D, got {eps.ndim}D")
        if np.any(eps < 1.0) or not np.all(np.isfinite(eps)):
            raise ConfigurationError("relative permittivity must be finite and >= 1")
        nx, ny, nz = eps.shape
        L = grid.pml_cells
        if min(nx, ny, nz) < 2 * L + 8:
            raise ConfigurationError(
                f"domain {nx}x{ny}x{nz} too small for {L}-cell absorbers"
            )

        self.grid = grid
        self.cell_nm = float(grid.cell_nm)
        self.cell_m = self.cell_nm * 1e-9
        self.courant = float(courant)
        self.dt = courant_dt(self.cell_m, courant, ndim=3)
        self.wavelengths_nm = np.asarray(sorted(wavelengths_nm), dtype=np.float64)
        if self.wavelengths_nm.size == 0 or np.any(self.wavelengths_nm <= 0):
            raise ValidationError("need at least one positive monitor wavelength")
        self.omega = _TWO_PI * C0 / (self.wavelengths_nm * 1e-9)
        self.pml_cells = L

        shape = eps.shape
        self.ex = np.zeros(shape)
        self.ey = np.zeros(shape)
        self.ez = np.zeros(shape)
        self.hx = np.zeros(shape)
        self.hy = np.zeros(shape)
        self.hz = np.zeros(shape)

        # material factors at each component's own position: average the four
        # cells sharing the edge (edge replication at the outer boundary)
        scale = self.dt / (EPS0 * self.cell_m)
        self.cex = scale / _edge_average(eps, 1, 2)
        self.cey = scale / _edge_average(eps, 0, 2)
        self.cez = scale / _edge_average(eps, 0, 1)
        self.ch = self.dt / (MU0 * self.cell_m)

        self._pml = {
            "x": build_axis_pml(nx, L, self.cell_m, self.dt, cpml),
            "y": build_axis_pml(ny, L, self.cell_m, self.dt, cpml),
            "z": build_axis_pml(nz, L, self.cell_m, self.dt, cpml),
        }
        self._psi = {}
        for axis, n_perp in (("x", (ny, nz)), ("y", (nx, nz)), ("z", (nx, ny))):
            pml = self._pml[axis]
            for fam, (lo, hi) in (("e", (pml.e_lo, pml.e_hi)),
                                  ("h", (pml.h_lo, pml.h_hi))):
                for side, (a0, a1) in (("lo", lo), ("hi", hi)):
                    span = a1 - a0
                    if axis == "x":
                        shp = (span, *n_perp)
                    elif axis == "y":
                        shp = (n_perp[0], span, n_perp[1])
                    else:
                        shp = (*n_perp, span)
                    self._psi[axis, fam, side] = (
                        np.zeros(shp), np.zeros(shp), (a0, a1))

        self.sources: list[SourceRecord] = []
        self._plane_accs: dict[str, _PlaneAcc] = {}
        self._box_accs: dict[str, dict[str, _PlaneAcc]] = {}
        self._dumps: dict[str, _FieldDump] = {}
        self._n_monitors = 0

    # -- construction ------------------------------------------------------

    def _in_pml(self, i: int, j: int, k: int) -> bool:
        L = self.pml_cells
        nx, ny, nz = self.ex.shape
        return (i < L or i >= nx - L or j < L or j >= ny - L
                or k < L or k >= nz - L)

    def add_dipole(self, position_nm, orientation, pulse: GaussianPulse,
                   moment_am: float = 1.0):
        """Soft current source spread over the nearest component locations."""
        u = np.asarray(orientation, dtype=np.float64)
        norm = float(np.linalg.norm(u))
        if norm == 0.0 or not np.all(np.isfinite(u)):
            raise ValidationError(f"orientation must be a nonzero vector, got {orientation}")
        u = u / norm
        pos = np.asarray(position_nm, dtype=np.float64)
        if pos.shape != (3,):
            raise ValidationError(f"position must be a 3-vector, got {position_nm}")
        low = self.spectral_floor(pulse)
        if low < MIN_BAND_AMPLITUDE:
            raise ValidationError(
                f"pulse amplitude falls to {low:.3g} of peak inside the "
                f"monitored band; widen the pulse bandwidth"
            )

        comps = {"x": (self.ex, self.cex), "y": (self.ey, self.cey),
                 "z": (self.ez, self.cez)}
        entries = []
        g = pos / self.cell_nm
        for ci, cname in enumerate("xyz"):
            if u[ci] == 0.0:
                continue
            arr, ce = comps[cname]
            off = _STAGGER[cname]
            f = g - np.array(off)
            base = np.floor(f).astype(int)
            t = f - base
            for di in (0, 1):
                for dj in (0, 1):
                    for dk in (0, 1):
                        w = ((t[0] if di else 1 - t[0])
                             * (t[1] if dj else 1 - t[1])
                             * (t[2] if dk else 1 - t[2]))
                        if w == 0.0:
                            continue
                        i, j, k = base[0] + di, base[1] + dj, base[2] + dk
                        if self._in_pml(i, j, k):
                            raise PlacementError(
                                f"source at {tuple(pos)} nm touches the absorbing "
                                f"layers (cell {(i, j, k)})"
                            )
                        coef = ce[i, j, k] * w * moment_am * u[ci] / self.cell_m**2
                        entries.append((arr, i, j, k, coef))
        rec = SourceRecord(position_nm=tuple(pos), orientation=u,
                           moment_am=moment_am, pulse=pulse, entries=entries)
        self.sources.append(rec)
        return len(self.sources) - 1

    def spectral_floor(self, pulse: GaussianPulse) -> float:
        return min(pulse.spectral_amplitude(w) for w in self.wavelengths_nm)

    def _default_extent(self, n: int) -> tuple[int, int]:
        return (self.pml_cells + 1, n - self.pml_cells - 2)

    def add_plane_monitor(self, axis: str, position_nm: float,
                          u_range=None, v_range=None, sign: int = 1,
                          name: str | None = None) -> str:
        if axis not in _AXIS_VIEW:
            raise ConfigurationError(f"monitor axis must be x, y or z, got {axis!r}")
        kp = int(round(position_nm / self.cell_nm - 0.5))
        perm, _ = _AXIS_VIEW[axis]
        dims = self.ex.shape
        nu, nv = dims[perm[0]], dims[perm[1]]
        L = self.pml_cells
        n_axis = dims[perm[2]]
        if kp < L or kp + 1 > n_axis - 1 - L:
            raise ConfigurationError(
                f"monitor plane at {position_nm} nm (face index {kp}) lies in "
                f"the absorbing layers"
            )
        u_range = u_range or self._default_extent(nu)
        v_range = v_range or self._default_extent(nv)
        name = name or f"plane{self._n_monitors}"
        if name in self._plane_accs or name in self._box_accs:
            raise ConfigurationError(f"duplicate monitor name {name!r}")
        self._plane_accs[name] = _PlaneAcc(self, axis, kp, u_range, v_range, sign)
        self._n_monitors += 1
        return name

    def add_box_monitor(self, center_nm, half_size_nm, name: str | None = None) -> str:
        c = np.asarray(center_nm, dtype=np.float64)
        h = np.asarray(half_size_nm, dtype=np.float64)
        if c.shape != (3,) or h.shape != (3,) or np.any(h <= 0):
            raise ValidationError("box monitor needs a 3-vector center and positive half sizes")
        lo = np.round((c - h) / self.cell_nm).astype(int)
        hi = np.round((c + h) / self.cell_nm).astype(int)
        L = self.pml_cells
        dims = np.array(self.ex.shape)
        if np.any(lo <= L) or np.any(hi >= dims - L - 1):
            raise ConfigurationError(
                f"box monitor spans nodes {tuple(lo)}..{tuple(hi)}, which "
                f"intersects the absorbing layers"
            )
        if np.any(hi - lo < 2):
            raise ConfigurationError("box monitor must span at least two cells per axis")
        name = name or f"box{self._n_monitors}"
        if name in self._plane_accs or name in self._box_accs:
            raise ConfigurationError(f"duplicate monitor name {name!r}")
        i0, j0, k0 = (int(v) for v in lo)
        i1, j1, k1 = (int(v) for v in hi)
        # lo faces sit half a cell below the lo node plane, hi faces half a
        # cell above the hi one, closing the surface around whole Yee cells
        faces = {
            "z_lo": _PlaneAcc(self, "z", k0 - 1, (i0, i1), (j0, j1), -1),
            "z_hi": _PlaneAcc(self, "z", k1, (i0, i1), (j0, j1), +1),
            "x_lo": _PlaneAcc(self, "x", i0 - 1, (j0, j1), (k0, k1), -1),
            "x_hi": _PlaneAcc(self, "x", i1, (j0, j1), (k0, k1), +1),
            "y_lo": _PlaneAcc(self, "y", j0 - 1, (k0, k1), (i0, i1), -1),
            "y_hi": _PlaneAcc(self, "y", j1, (k0, k1), (i0, i1), +1),
        }
        self._box_accs[name] = faces
        self._n_monitors += 1
        return name

    def add_field_dump(self, axis: str, position_nm: float, component: str = "ey",
                       every: int = 50, name: str | None = None) -> str:
        if component.lower() not in ("ex", "ey", "ez", "hx", "hy", "hz"):
            raise ConfigurationError(f"unknown field component {component!r}")
        kp = int(round(position_nm / self.cell_nm))
        name = name or f"dump{len(self._dumps)}"
        self._dumps[name] = _FieldDump(self, axis, kp, component, every)
        return name

    # -- stepping ----------------------------------------------------------

    def _apply_cpml(self, family: str) -> None:
        for axis in "xyz":
            pml = self._pml[axis]
            if family == "e":
                b, c, kc = pml.b_e, pml.c_e, pml.kc_e
            else:
                b, c, kc = pml.b_h, pml.c_h, pml.kc_h
            for side in ("lo", "hi"):
                p1, p2, (a0, a1) = self._psi[axis, family, side]
                if a1 <= a0:
                    continue
                if family == "e":
                    if axis == "x":
                        kernels.cpml_e_x(self.ey, self.ez, self.hy, self.hz,
                                         self.cey, self.cez, b, c, kc, p1, p2, a0, a1)
                    elif axis == "y":
                        kernels.cpml_e_y(self.ex, self.ez, self.hx, self.hz,
                                         self.cex, self.cez, b, c, kc, p1, p2, a0, a1)
                    else:
                        kernels.cpml_e_z(self.ex, self.ey, self.hx, self.hy,
                                         self.cex, self.cey, b, c, kc, p1, p2, a0, a1)
                else:
                    if axis == "x":
                        kernels.cpml_h_x(self.ey, self.ez, self.hy, self.hz,
                                         self.ch, b, c, kc, p1, p2, a0, a1)
                    elif axis == "y":
                        kernels.cpml_h_y(self.ex, self.ez, self.hx, self.hz,
                                         self.ch, b, c, kc, p1, p2, a0, a1)
                    else:
                        kernels.cpml_h_z(self.ex, self.ey, self.hx, self.hy,
                                         self.ch, b, c, kc, p1, p2, a0, a1)

    def _energy(self) -> float:
        acc_e, acc_h = kernels.field_energy(self.ex, self.ey, self.ez,
                                            self.hx, self.hy, self.hz,
                                            self.cex, self.cey, self.cez)
        return (acc_e + acc_h / self.ch) * self.dt * self.cell_m**2 / 2.0

    def run(self, max_steps: int | None = None, decay_threshold: float = 1e-5,
            check_every: int = 100, quiet: bool = True) -> RunResult:
        """March the fields until ring-down (or the step cap) and read out."""
        if decay_threshold <= 0 or decay_threshold > 1.0:
            raise ValidationError(
                f"decay threshold must lie in (0, 1], got {decay_threshold}"
            )
        off_time = max((s.pulse.cutoff_s for s in self.sources), default=0.0)
        if max_steps is None:
            max_steps = int(math.ceil(off_time / self.dt)) + 6000 if self.sources else 1000

        all_accs = list(self._plane_accs.values())
        for faces in self._box_accs.values():
            all_accs.extend(faces.values())

        peak = 0.0
        energy = 0.0
        prev_energy = math.inf
        grow_count = 0
        history: list[tuple[int, float]] = []
        decayed = False
        steps_done = 0

        for n in range(max_steps):
            kernels.update_h(self.ex, self.ey, self.ez, self.hx, self.hy, self.hz,
                             self.ch)
            self._apply_cpml("h")
            kernels.update_e(self.ex, self.ey, self.ez, self.hx, self.hy, self.hz,
                             self.cex, self.cey, self.cez)
            self._apply_cpml("e")

            t_inj = (n + 0.5) * self.dt
            for src in self.sources:
                amp = src.pulse(t_inj) if src.moment_am != 0.0 else 0.0
                src.samples.append(amp)
                if amp != 0.0:
                    for arr, i, j, k, coef in src.entries:
                        arr[i, j, k] -= coef * amp

            if all_accs:
                we = np.exp(1j * self.omega * ((n + 1) * self.dt)) * self.dt
                wh = np.exp(1j * self.omega * ((n + 0.5) * self.dt)) * self.dt
                for acc in all_accs:
                    acc.accumulate(we, wh)
            for dump in self._dumps.values():
                dump.maybe_record(n)

            steps_done = n + 1
            if steps_done % check_every == 0:
                energy = self._energy()
                history.append((steps_done, energy))
                if not math.isfinite(energy):
                    raise InstabilityError(
                        f"non-finite field energy at step {steps_done}; "
                        f"the finite-fields condition is violated"
                    )
                peak = max(peak, energy)
                source_off = t_inj > off_time
                if source_off:
                    if energy > 1.02 * prev_energy:
                        grow_count += 1
                        if grow_count >= 2:
                            raise InstabilityError(
                                f"field energy grew after source extinction "
                                f"({prev_energy:.3e} -> {energy:.3e} at step "
                                f"{steps_done}); energy must be non-increasing "
                                f"in lossless media"
                            )
                    else:
                        grow_count = 0
                    if peak > 0.0 and energy <= decay_threshold * peak:
                        decayed = True
                    prev_energy = energy
                    if decayed:
                        break

        monitors: dict[str, object] = {}
        for name, acc in self._plane_accs.items():
            monitors[name] = acc.result(self)
        for name, faces in self._box_accs.items():
            monitors[name] = BoxResult(
                faces={fname: acc.result(self) for fname, acc in faces.items()})
        dumps = {
            name: (np.stack(d.frames) if d.frames else np.zeros((0, 1, 1), np.float32),
                   dict(d.meta))
            for name, d in self._dumps.items()
        }
        return RunResult(
            wavelengths_nm=self.wavelengths_nm.copy(),
            cell_nm=self.cell_nm,
            dt_s=self.dt,
            steps=steps_done,
            decayed=decayed,
            peak_energy=peak,
            final_energy=energy,
            energy_history=history,
            monitors=monitors,
            sources=self.sources,
            dumps=dumps,
        )


def _edge_average(eps: np.ndarray, axis_a: int, axis_b: int) -> np.ndarray:
    """Average the four cells around the edge a component lives on, with edge
    replication so boundary components see their nearest cell values."""
    pad = [(0, 0), (0, 0), (0, 0)]
    pad[axis_a] = (1, 0)
    pad[axis_b] = (1, 0)
    ep = np.pad(eps, pad, mode="edge")
    lo_a = [slice(None)] * 3
    hi_a = [slice(None)] * 3
    lo_a[axis_a] = slice(None, -1)
    hi_a[axis_a] = slice(1, None)
    out = None
    for sa in (lo_a, hi_a):
        for which_b in (0, 1):
            sl = list(sa)
            sl[axis_b] = slice(None, -1) if which_b == 0 else slice(1, None)
            piece = ep[tuple(sl)]
            out = piece if out is None else out + piece
    return 0.25 * out

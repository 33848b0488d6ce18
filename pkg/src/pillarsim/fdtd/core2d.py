"""Reduced two-dimensional solver (out-of-plane E polarization).

Exists for cheap numerical checks: absorber reflection, line-source radiated
power, energy decay. Collection results always come from the 3D solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..constants import C0, EPS0, MU0
from ..errors import (
    ConfigurationError,
    InstabilityError,
    PlacementError,
    StabilityError,
    ValidationError,
)
from . import kernels
from .core import GaussianPulse
from .cpml import CpmlSpec, build_axis_pml, courant_dt

_TWO_PI = 2.0 * math.pi


@dataclass
class LineResult:
    """Phasors along one straight monitor line (normal in-plane axis).

    The line sits on the half-plane ip + 1/2, where the tangential magnetic
    field is native; the out-of-plane electric field is stored on the node
    lines either side and averaged onto the face, so a closed box of such
    lines sums to the source work exactly.
    """

    normal: str
    ip: int
    r0: int
    sign: int
    cell_nm: float
    wavelengths_nm: np.ndarray
    ez_lo: np.ndarray
    ez_hi: np.ndarray
    h: np.ndarray

    def flux(self) -> np.ndarray:
        """Spectral power per unit length through the line, signed."""
        ez = 0.5 * (self.ez_lo + self.ez_hi)
        s = np.real(ez * np.conj(self.h)).sum(axis=1)
        along = -0.5 if self.normal == "x" else 0.5
        return self.sign * along * s * (self.cell_nm * 1e-9)

    def conserved_flux(self) -> np.ndarray:
        """Line flux in the discretely conserved pairing (interior-side Ez);
        closed boxes of such lines sum to the enclosed source work exactly."""
        ez = self.ez_lo if self.sign > 0 else self.ez_hi
        s = np.real(ez * np.conj(self.h)).sum(axis=1)
        along = -0.5 if self.normal == "x" else 0.5
        return self.sign * along * s * (self.cell_nm * 1e-9)


@dataclass
class BoxResult2D:
    faces: dict

    def net_flux(self) -> np.ndarray:
        total = None
        for face in self.faces.values():
            f = face.conserved_flux()
            total = f if total is None else total + f
        return total


class _LineAcc:
    """One monitor line on half-plane ip + 1/2, nodes r0..r1 inclusive."""

    def __init__(self, sim: "Simulation2D", normal: str, ip: int,
                 r0: int, r1: int, sign: int):
        if normal == "x":
            sl = (
                sim.ez[ip, r0:r1 + 1],
                sim.ez[ip + 1, r0:r1 + 1],
                sim.hy[ip, r0:r1 + 1],
            )
        else:
            sl = (
                sim.ez[r0:r1 + 1, ip],
                sim.ez[r0:r1 + 1, ip + 1],
                sim.hx[r0:r1 + 1, ip],
            )
        self.slices = sl
        self.normal = normal
        self.ip = ip
        self.r0 = r0
        self.sign = sign
        self.acc = np.zeros((3, sim.wavelengths_nm.size, r1 - r0 + 1),
                            dtype=np.complex128)

    def accumulate(self, we, wh) -> None:
        kernels.accumulate_lines(self.acc, *self.slices, we, wh)

    def result(self, sim: "Simulation2D") -> LineResult:
        return LineResult(
            normal=self.normal, ip=self.ip, r0=self.r0, sign=self.sign,
            cell_nm=sim.cell_nm, wavelengths_nm=sim.wavelengths_nm.copy(),
            ez_lo=self.acc[0], ez_hi=self.acc[1], h=self.acc[2],
        )


@dataclass
class LineSource:
    position_nm: tuple
    current_a: float
    pulse: GaussianPulse
    entries: list
    samples: list = field(default_factory=list)

    def spectrum(self, wavelengths_nm, dt: float) -> np.ndarray:
        s = np.asarray(self.samples)
        n = np.arange(s.size)
        w = _TWO_PI * C0 / (np.asarray(wavelengths_nm) * 1e-9)
        return (np.exp(1j * np.outer(w, (n + 0.5) * dt)) @ s) * dt


@dataclass
class RunResult2D:
    wavelengths_nm: np.ndarray
    cell_nm: float
    dt_s: float
    steps: int
    decayed: bool
    peak_energy: float
    energy_history: list
    monitors: dict
    probes: dict
    sources: list

    def source_spectrum(self, index: int = 0) -> np.ndarray:
        return self.sources[index].spectrum(self.wavelengths_nm, self.dt_s)


class Simulation2D:
    def __init__(self, eps: np.ndarray, cell_nm: float, wavelengths_nm,
                 courant: float = 0.5, pml_cells: int = 10,
                 cpml: CpmlSpec = CpmlSpec()):
        if courant > 1.0:
            raise StabilityError(
                f"courant factor {courant} exceeds the stability limit 1"
            )
        if courant <= 0.0:
            raise ValidationError(f"courant factor must be positive, got {courant}")
        if pml_cells < 8:
            raise ConfigurationError(f"need at least 8 absorber cells, got {pml_cells}")
        eps = np.asarray(eps, dtype=np.float64)
        if eps.ndim != 2:
            raise ConfigurationError(f"permittivity grid must be 2D, got {eps.ndim}D")
        nx, ny = eps.shape
        if min(nx, ny) < 2 * pml_cells + 8:
            raise ConfigurationError(
                f"domain {nx}x{ny} too small for {pml_cells}-cell absorbers"
            )
        self.cell_nm = float(cell_nm)
        self.cell_m = self.cell_nm * 1e-9
        self.dt = courant_dt(self.cell_m, courant, ndim=2)
        self.pml_cells = int(pml_cells)
        self.wavelengths_nm = np.asarray(sorted(wavelengths_nm), dtype=np.float64)
        self.omega = _TWO_PI * C0 / (self.wavelengths_nm * 1e-9)

        self.ez = np.zeros((nx, ny))
        self.hx = np.zeros((nx, ny))
        self.hy = np.zeros((nx, ny))

        # corner-point permittivity: average of the four surrounding cells
        ep = np.pad(eps, ((1, 0), (1, 0)), mode="edge")
        eps_c = 0.25 * (ep[:-1, :-1] + ep[1:, :-1] + ep[:-1, 1:] + ep[1:, 1:])
        self.ce = self.dt / (EPS0 * eps_c * self.cell_m)
        self.ch = self.dt / (MU0 * self.cell_m)

        self._pml_x = build_axis_pml(nx, pml_cells, self.cell_m, self.dt, cpml)
        self._pml_y = build_axis_pml(ny, pml_cells, self.cell_m, self.dt, cpml)
        px = self._pml_x
        py = self._pml_y
        self._psi = {
            ("x", "e", "lo"): (np.zeros((px.e_lo[1] - px.e_lo[0], ny)), px.e_lo),
            ("x", "e", "hi"): (np.zeros((px.e_hi[1] - px.e_hi[0], ny)), px.e_hi),
            ("x", "h", "lo"): (np.zeros((px.h_lo[1] - px.h_lo[0], ny)), px.h_lo),
            ("x", "h", "hi"): (np.zeros((px.h_hi[1] - px.h_hi[0], ny)), px.h_hi),
            ("y", "e", "lo"): (np.zeros((nx, py.e_lo[1] - py.e_lo[0])), py.e_lo),
            ("y", "e", "hi"): (np.zeros((nx, py.e_hi[1] - py.e_hi[0])), py.e_hi),
            ("y", "h", "lo"): (np.zeros((nx, py.h_lo[1] - py.h_lo[0])), py.h_lo),
            ("y", "h", "hi"): (np.zeros((nx, py.h_hi[1] - py.h_hi[0])), py.h_hi),
        }
        self.sources: list[LineSource] = []
        self._probes: dict[str, tuple[int, int, list]] = {}
        self._boxes: dict[str, dict[str, _LineAcc]] = {}

    def _in_pml(self, i: int, j: int) -> bool:
        L = self.pml_cells
        nx, ny = self.ez.shape
        return i < L or i >= nx - L or j < L or j >= ny - L

    def add_line_current(self, position_nm, pulse: GaussianPulse,
                         current_a: float = 1.0) -> int:
        pos = np.asarray(position_nm, dtype=np.float64)
        if pos.shape != (2,):
            raise ValidationError(f"position must be a 2-vector, got {position_nm}")
        f = pos / self.cell_nm
        base = np.floor(f).astype(int)
        t = f - base
        entries = []
        for di in (0, 1):
            for dj in (0, 1):
                w = (t[0] if di else 1 - t[0]) * (t[1] if dj else 1 - t[1])
                if w == 0.0:
                    continue
                i, j = base[0] + di, base[1] + dj
                if self._in_pml(i, j):
                    raise PlacementError(
                        f"source at {tuple(pos)} nm touches the absorbing layers"
                    )
                entries.append((i, j, self.ce[i, j] * w * current_a / self.cell_m))
        src = LineSource(position_nm=tuple(pos), current_a=current_a,
                         pulse=pulse, entries=entries)
        self.sources.append(src)
        return len(self.sources) - 1

    def add_probe(self, position_nm, name: str | None = None) -> str:
        i = int(round(position_nm[0] / self.cell_nm))
        j = int(round(position_nm[1] / self.cell_nm))
        name = name or f"probe{len(self._probes)}"
        self._probes[name] = (i, j, [])
        return name

    def add_box_monitor(self, center_nm, half_size_nm, name: str | None = None) -> str:
        c = np.asarray(center_nm, dtype=np.float64)
        h = np.asarray(half_size_nm, dtype=np.float64)
        lo = np.round((c - h) / self.cell_nm).astype(int)
        hi = np.round((c + h) / self.cell_nm).astype(int)
        L = self.pml_cells
        dims = np.array(self.ez.shape)
        if np.any(lo <= L) or np.any(hi >= dims - L - 1):
            raise ConfigurationError("box monitor intersects the absorbing layers")
        i0, j0 = (int(v) for v in lo)
        i1, j1 = (int(v) for v in hi)
        name = name or f"box{len(self._boxes)}"
        self._boxes[name] = {
            "x_lo": _LineAcc(self, "x", i0 - 1, j0, j1, -1),
            "x_hi": _LineAcc(self, "x", i1, j0, j1, +1),
            "y_lo": _LineAcc(self, "y", j0 - 1, i0, i1, -1),
            "y_hi": _LineAcc(self, "y", j1, i0, i1, +1),
        }
        return name

    def _energy(self) -> float:
        acc_e, acc_h = kernels.field_energy_2d(self.ez, self.hx, self.hy, self.ce)
        return (acc_e + acc_h / self.ch) * self.dt * self.cell_m / 2.0

    def run(self, max_steps: int | None = None, decay_threshold: float = 1e-5,
            check_every: int = 100) -> RunResult2D:
        off_time = max((s.pulse.cutoff_s for s in self.sources), default=0.0)
        if max_steps is None:
            max_steps = int(math.ceil(off_time / self.dt)) + 4000 if self.sources else 1000

        accs = [a for faces in self._boxes.values() for a in faces.values()]
        peak = 0.0
        prev_energy = math.inf
        grow_count = 0
        history: list[tuple[int, float]] = []
        decayed = False
        steps_done = 0

        for n in range(max_steps):
            kernels.update_h_2d(self.ez, self.hx, self.hy, self.ch)
            for axis in "xy":
                pml = self._pml_x if axis == "x" else self._pml_y
                for side in ("lo", "hi"):
                    psi, (a0, a1) = self._psi[axis, "h", side]
                    if axis == "x":
                        kernels.cpml_h_x_2d(self.ez, self.hy, self.ch, pml.b_h,
                                            pml.c_h, pml.kc_h, psi, a0, a1)
                    else:
                        kernels.cpml_h_y_2d(self.ez, self.hx, self.ch, pml.b_h,
                                            pml.c_h, pml.kc_h, psi, a0, a1)
            kernels.update_e_2d(self.ez, self.hx, self.hy, self.ce)
            for axis in "xy":
                pml = self._pml_x if axis == "x" else self._pml_y
                for side in ("lo", "hi"):
                    psi, (a0, a1) = self._psi[axis, "e", side]
                    if axis == "x":
                        kernels.cpml_e_x_2d(self.ez, self.hy, self.ce, pml.b_e,
                                            pml.c_e, pml.kc_e, psi, a0, a1)
                    else:
                        kernels.cpml_e_y_2d(self.ez, self.hx, self.ce, pml.b_e,
                                            pml.c_e, pml.kc_e, psi, a0, a1)

            t_inj = (n + 0.5) * self.dt
            for src in self.sources:
                amp = src.pulse(t_inj) if src.current_a != 0.0 else 0.0
                src.samples.append(amp)
                if amp != 0.0:
                    for i, j, coef in src.entries:
                        self.ez[i, j] -= coef * amp

            if accs:
                we = np.exp(1j * self.omega * ((n + 1) * self.dt)) * self.dt
                wh = np.exp(1j * self.omega * ((n + 0.5) * self.dt)) * self.dt
                for acc in accs:
                    acc.accumulate(we, wh)
            for i, j, rec in self._probes.values():
                rec.append(self.ez[i, j])

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
                if t_inj > off_time:
                    if energy > 1.02 * prev_energy:
                        grow_count += 1
                        if grow_count >= 2:
                            raise InstabilityError(
                                f"field energy grew after source extinction at "
                                f"step {steps_done}; energy must be "
                                f"non-increasing in lossless media"
                            )
                    else:
                        grow_count = 0
                    if peak > 0.0 and energy <= decay_threshold * peak:
                        decayed = True
                    prev_energy = energy
                    if decayed:
                        break

        monitors = {
            name: BoxResult2D(faces={f: a.result(self) for f, a in faces.items()})
            for name, faces in self._boxes.items()
        }
        probes = {name: np.asarray(rec) for name, (_, _, rec) in self._probes.items()}
        return RunResult2D(
            wavelengths_nm=self.wavelengths_nm.copy(),
            cell_nm=self.cell_nm,
            dt_s=self.dt,
            steps=steps_done,
            decayed=decayed,
            peak_energy=peak,
            energy_history=history,
            monitors=monitors,
            probes=probes,
            sources=self.sources,
        )

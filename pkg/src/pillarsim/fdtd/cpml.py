"""Convolutional absorbing-layer coefficient profiles.

One instance of :class:`AxisPml` describes the two absorber slabs at the ends
of a single grid axis. Profiles are polynomial-graded conductivity with a
linearly graded frequency-shift term, the usual recipe for damping both
propagating and evanescent leakage.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..constants import C0, EPS0, ETA0


@dataclass(frozen=True)
class CpmlSpec:
    """Tuning knobs for the absorbing layers (defaults work for the full band)."""

    grading_order: int = 3
    sigma_scale: float = 0.8
    kappa_max: float = 3.0
    alpha_max: float = 0.2

    def validate(self) -> None:
        if self.grading_order < 1:
            raise ValueError(f"grading order must be >= 1, got {self.grading_order}")
        if self.sigma_scale <= 0:
            raise ValueError(f"sigma scale must be positive, got {self.sigma_scale}")
        if self.kappa_max < 1:
            raise ValueError(f"kappa_max must be >= 1, got {self.kappa_max}")
        if self.alpha_max < 0:
            raise ValueError(f"alpha_max must be >= 0, got {self.alpha_max}")


def _coefficients(depth: np.ndarray, cell_m: float, dt: float, spec: CpmlSpec):
    """Map normalized absorber depth (0 outside, 1 at the wall) to update
    coefficients b, c and the stretch correction (1/kappa - 1)."""
    m = spec.grading_order
    sigma_max = spec.sigma_scale * (m + 1) / (ETA0 * cell_m)
    rho = np.clip(depth, 0.0, 1.0)
    sigma = sigma_max * rho**m
    kappa = 1.0 + (spec.kappa_max - 1.0) * rho**m
    alpha = spec.alpha_max * (1.0 - rho)

    b = np.exp(-(sigma / kappa + alpha) * dt / EPS0)
    den = sigma * kappa + kappa**2 * alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(den > 0.0, sigma * (b - 1.0) / np.where(den > 0.0, den, 1.0), 0.0)
    kc = 1.0 / kappa - 1.0
    # outside the slabs there is nothing to correct
    inside = rho > 0.0
    c = np.where(inside, c, 0.0)
    kc = np.where(inside, kc, 0.0)
    b = np.where(inside, b, 1.0)
    return b, c, kc


@dataclass(frozen=True)
class AxisPml:
    """Per-axis absorber description: graded coefficients plus slab index ranges.

    Integer-position arrays apply to E-field derivative corrections, half-position
    arrays to H. Ranges are half-open cell index windows for the low and high slab.
    """

    b_e: np.ndarray
    c_e: np.ndarray
    kc_e: np.ndarray
    b_h: np.ndarray
    c_h: np.ndarray
    kc_h: np.ndarray
    e_lo: tuple[int, int]
    e_hi: tuple[int, int]
    h_lo: tuple[int, int]
    h_hi: tuple[int, int]


def build_axis_pml(n: int, pml_cells: int, cell_m: float, dt: float,
                   spec: CpmlSpec = CpmlSpec()) -> AxisPml:
    spec.validate()
    L = pml_cells
    idx = np.arange(n, dtype=np.float64)

    # integer positions (E derivatives): wall at index 0 and n-1
    depth_e = np.maximum((L - idx) / L, (idx - (n - 1 - L)) / L)
    # half positions (H derivatives) sit at idx + 1/2
    half = idx + 0.5
    depth_h = np.maximum((L - half) / L, (half - (n - 1 - L)) / L)

    b_e, c_e, kc_e = _coefficients(depth_e, cell_m, dt, spec)
    b_h, c_h, kc_h = _coefficients(depth_h, cell_m, dt, spec)

    return AxisPml(
        b_e=b_e, c_e=c_e, kc_e=kc_e,
        b_h=b_h, c_h=c_h, kc_h=kc_h,
        e_lo=(1, L), e_hi=(n - L, n),
        h_lo=(0, L), h_hi=(n - 1 - L, n - 1),
    )


def courant_dt(cell_m: float, courant: float, ndim: int = 3) -> float:
    """Largest stable time step scaled by the requested fraction of the limit."""
    return courant * cell_m / (C0 * np.sqrt(float(ndim)))

"""Compiled update sweeps for the staggered-grid time-stepper.

All kernels are plain loop nests compiled with numba. Field arrays share one
shape (nx, ny, nz); the half-cell offsets of each component are implicit in
the update stencils. Array edges that never receive an update act as perfect
electric conductor walls behind the absorbing layers.

Absorber correction kernels add the stretched-coordinate and convolution terms
on top of the plain curl update, so they must run directly after the update
sweep of the matching field family, over the slab ranges supplied by the
caller. ``psi_*`` slabs are indexed relative to the slab start.
"""
from __future__ import annotations

import numba
import numpy as np

F = numba.njit(cache=True, fastmath=True)
FS = numba.njit(cache=True, fastmath=False)


@F
def update_h(ex, ey, ez, hx, hy, hz, ch):
    nx, ny, nz = ex.shape
    for i in range(nx):
        for j in range(ny - 1):
            for k in range(nz - 1):
                hx[i, j, k] += ch * (ey[i, j, k + 1] - ey[i, j, k]
                                     - ez[i, j + 1, k] + ez[i, j, k])
    for i in range(nx - 1):
        for j in range(ny):
            for k in range(nz - 1):
                hy[i, j, k] += ch * (ez[i + 1, j, k] - ez[i, j, k]
                                     - ex[i, j, k + 1] + ex[i, j, k])
    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz):
                hz[i, j, k] += ch * (ex[i, j + 1, k] - ex[i, j, k]
                                     - ey[i + 1, j, k] + ey[i, j, k])


@F
def update_e(ex, ey, ez, hx, hy, hz, cex, cey, cez):
    nx, ny, nz = ex.shape
    for i in range(nx):
        for j in range(1, ny):
            for k in range(1, nz):
                ex[i, j, k] += cex[i, j, k] * (hz[i, j, k] - hz[i, j - 1, k]
                                               - hy[i, j, k] + hy[i, j, k - 1])
    for i in range(1, nx):
        for j in range(ny):
            for k in range(1, nz):
                ey[i, j, k] += cey[i, j, k] * (hx[i, j, k] - hx[i, j, k - 1]
                                               - hz[i, j, k] + hz[i - 1, j, k])
    for i in range(1, nx):
        for j in range(1, ny):
            for k in range(nz):
                ez[i, j, k] += cez[i, j, k] * (hy[i, j, k] - hy[i - 1, j, k]
                                               - hx[i, j, k] + hx[i, j - 1, k])


@F
def cpml_e_x(ey, ez, hy, hz, cey, cez, b, c, kc, psi_y, psi_z, i0, i1):
    nx, ny, nz = ey.shape
    for i in range(i0, i1):
        s = i - i0
        bb = b[i]
        cc = c[i]
        kk = kc[i]
        for j in range(ny):
            for k in range(1, nz):
                d = hz[i, j, k] - hz[i - 1, j, k]
                p = bb * psi_y[s, j, k] + cc * d
                psi_y[s, j, k] = p
                ey[i, j, k] -= cey[i, j, k] * (kk * d + p)
        for j in range(1, ny):
            for k in range(nz):
                d = hy[i, j, k] - hy[i - 1, j, k]
                p = bb * psi_z[s, j, k] + cc * d
                psi_z[s, j, k] = p
                ez[i, j, k] += cez[i, j, k] * (kk * d + p)


@F
def cpml_e_y(ex, ez, hx, hz, cex, cez, b, c, kc, psi_x, psi_z, j0, j1):
    nx, ny, nz = ex.shape
    for i in range(nx):
        for j in range(j0, j1):
            s = j - j0
            bb = b[j]
            cc = c[j]
            kk = kc[j]
            for k in range(1, nz):
                d = hz[i, j, k] - hz[i, j - 1, k]
                p = bb * psi_x[i, s, k] + cc * d
                psi_x[i, s, k] = p
                ex[i, j, k] += cex[i, j, k] * (kk * d + p)
    for i in range(1, nx):
        for j in range(j0, j1):
            s = j - j0
            bb = b[j]
            cc = c[j]
            kk = kc[j]
            for k in range(nz):
                d = hx[i, j, k] - hx[i, j - 1, k]
                p = bb * psi_z[i, s, k] + cc * d
                psi_z[i, s, k] = p
                ez[i, j, k] -= cez[i, j, k] * (kk * d + p)


@F
def cpml_e_z(ex, ey, hx, hy, cex, cey, b, c, kc, psi_x, psi_y, k0, k1):
    nx, ny, nz = ex.shape
    for i in range(nx):
        for j in range(1, ny):
            for k in range(k0, k1):
                s = k - k0
                d = hy[i, j, k] - hy[i, j, k - 1]
                p = b[k] * psi_x[i, j, s] + c[k] * d
                psi_x[i, j, s] = p
                ex[i, j, k] -= cex[i, j, k] * (kc[k] * d + p)
    for i in range(1, nx):
        for j in range(ny):
            for k in range(k0, k1):
                s = k - k0
                d = hx[i, j, k] - hx[i, j, k - 1]
                p = b[k] * psi_y[i, j, s] + c[k] * d
                psi_y[i, j, s] = p
                ey[i, j, k] += cey[i, j, k] * (kc[k] * d + p)


@F
def cpml_h_x(ey, ez, hy, hz, ch, b, c, kc, psi_y, psi_z, i0, i1):
    nx, ny, nz = ey.shape
    for i in range(i0, i1):
        s = i - i0
        bb = b[i]
        cc = c[i]
        kk = kc[i]
        for j in range(ny):
            for k in range(nz - 1):
                d = ez[i + 1, j, k] - ez[i, j, k]
                p = bb * psi_y[s, j, k] + cc * d
                psi_y[s, j, k] = p
                hy[i, j, k] += ch * (kk * d + p)
        for j in range(ny - 1):
            for k in range(nz):
                d = ey[i + 1, j, k] - ey[i, j, k]
                p = bb * psi_z[s, j, k] + cc * d
                psi_z[s, j, k] = p
                hz[i, j, k] -= ch * (kk * d + p)


@F
def cpml_h_y(ex, ez, hx, hz, ch, b, c, kc, psi_x, psi_z, j0, j1):
    nx, ny, nz = ex.shape
    for i in range(nx):
        for j in range(j0, j1):
            s = j - j0
            bb = b[j]
            cc = c[j]
            kk = kc[j]
            for k in range(nz - 1):
                d = ez[i, j + 1, k] - ez[i, j, k]
                p = bb * psi_x[i, s, k] + cc * d
                psi_x[i, s, k] = p
                hx[i, j, k] -= ch * (kk * d + p)
    for i in range(nx - 1):
        for j in range(j0, j1):
            s = j - j0
            bb = b[j]
            cc = c[j]
            kk = kc[j]
            for k in range(nz):
                d = ex[i, j + 1, k] - ex[i, j, k]
                p = bb * psi_z[i, s, k] + cc * d
                psi_z[i, s, k] = p
                hz[i, j, k] += ch * (kk * d + p)


@F
def cpml_h_z(ex, ey, hx, hy, ch, b, c, kc, psi_x, psi_y, k0, k1):
    nx, ny, nz = ex.shape
    for i in range(nx):
        for j in range(ny - 1):
            for k in range(k0, k1):
                s = k - k0
                d = ey[i, j, k + 1] - ey[i, j, k]
                p = b[k] * psi_x[i, j, s] + c[k] * d
                psi_x[i, j, s] = p
                hx[i, j, k] += ch * (kc[k] * d + p)
    for i in range(nx - 1):
        for j in range(ny):
            for k in range(k0, k1):
                s = k - k0
                d = ex[i, j, k + 1] - ex[i, j, k]
                p = b[k] * psi_y[i, j, s] + c[k] * d
                psi_y[i, j, s] = p
                hy[i, j, k] -= ch * (kc[k] * d + p)


@numba.njit(cache=True)
def accumulate_trio(acc, s0, s1, s2, we, wh):
    """Running discrete Fourier sums of three same-shape plane slices.

    ``acc`` has shape (3, n_freq, a, b); slices 0-1 take the electric weight
    (the field planes straddling the monitor face), slice 2 the magnetic one
    (native on the face, sampled half a step earlier).
    """
    nl = we.shape[0]
    a, b = s0.shape
    for l in range(nl):
        e = we[l]
        h = wh[l]
        for p in range(a):
            for q in range(b):
                acc[0, l, p, q] += s0[p, q] * e
                acc[1, l, p, q] += s1[p, q] * e
                acc[2, l, p, q] += s2[p, q] * h


@FS
def field_energy(ex, ey, ez, hx, hy, hz, cex, cey, cez):
    """Raw quadratic sums: (sum E^2/ce, sum H^2). Caller applies units."""
    nx, ny, nz = ex.shape
    acc_e = 0.0
    acc_h = 0.0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                acc_e += (ex[i, j, k] ** 2 / cex[i, j, k]
                          + ey[i, j, k] ** 2 / cey[i, j, k]
                          + ez[i, j, k] ** 2 / cez[i, j, k])
                acc_h += (hx[i, j, k] ** 2 + hy[i, j, k] ** 2
                          + hz[i, j, k] ** 2)
    return acc_e, acc_h


# ---------------------------------------------------------------------------
# Reduced solver: fields invariant along one axis, out-of-plane E polarization.
# Layout (nx, ny): ez on integer-integer points, hx on (i, j+1/2),
# hy on (i+1/2, j).


@F
def update_h_2d(ez, hx, hy, ch):
    nx, ny = ez.shape
    for i in range(nx):
        for j in range(ny - 1):
            hx[i, j] -= ch * (ez[i, j + 1] - ez[i, j])
    for i in range(nx - 1):
        for j in range(ny):
            hy[i, j] += ch * (ez[i + 1, j] - ez[i, j])


@F
def update_e_2d(ez, hx, hy, ce):
    nx, ny = ez.shape
    for i in range(1, nx):
        for j in range(1, ny):
            ez[i, j] += ce[i, j] * (hy[i, j] - hy[i - 1, j]
                                    - hx[i, j] + hx[i, j - 1])


@F
def cpml_e_x_2d(ez, hy, ce, b, c, kc, psi, i0, i1):
    ny = ez.shape[1]
    for i in range(i0, i1):
        s = i - i0
        for j in range(1, ny):
            d = hy[i, j] - hy[i - 1, j]
            p = b[i] * psi[s, j] + c[i] * d
            psi[s, j] = p
            ez[i, j] += ce[i, j] * (kc[i] * d + p)


@F
def cpml_e_y_2d(ez, hx, ce, b, c, kc, psi, j0, j1):
    nx = ez.shape[0]
    for i in range(1, nx):
        for j in range(j0, j1):
            s = j - j0
            d = hx[i, j] - hx[i, j - 1]
            p = b[j] * psi[i, s] + c[j] * d
            psi[i, s] = p
            ez[i, j] -= ce[i, j] * (kc[j] * d + p)


@F
def cpml_h_x_2d(ez, hy, ch, b, c, kc, psi, i0, i1):
    ny = ez.shape[1]
    for i in range(i0, i1):
        s = i - i0
        for j in range(ny):
            d = ez[i + 1, j] - ez[i, j]
            p = b[i] * psi[s, j] + c[i] * d
            psi[s, j] = p
            hy[i, j] += ch * (kc[i] * d + p)


@F
def cpml_h_y_2d(ez, hx, ch, b, c, kc, psi, j0, j1):
    nx = ez.shape[0]
    for i in range(nx):
        for j in range(j0, j1):
            s = j - j0
            d = ez[i, j + 1] - ez[i, j]
            p = b[j] * psi[i, s] + c[j] * d
            psi[i, s] = p
            hx[i, j] -= ch * (kc[j] * d + p)


@numba.njit(cache=True)
def accumulate_lines(acc, s0, s1, s2, we, wh):
    """Line-monitor analogue of :func:`accumulate_trio` (3 slices, 1D).

    Slices 0-1 are the field planes either side of the face (electric
    weight), slice 2 the magnetic field native on it.
    """
    nl = we.shape[0]
    m = s0.shape[0]
    for l in range(nl):
        e = we[l]
        h = wh[l]
        for q in range(m):
            acc[0, l, q] += s0[q] * e
            acc[1, l, q] += s1[q] * e
            acc[2, l, q] += s2[q] * h


@FS
def field_energy_2d(ez, hx, hy, ce):
    nx, ny = ez.shape
    acc_e = 0.0
    acc_h = 0.0
    for i in range(nx):
        for j in range(ny):
            acc_e += ez[i, j] ** 2 / ce[i, j]
            acc_h += hx[i, j] ** 2 + hy[i, j] ** 2
    return acc_e, acc_h

"""Far-field projection oracles: analytic apertures, cone integrals, FDTD planes."""
import math

import numpy as np
import pytest

from pillarsim.constants import C0, EPS0, ETA0
from pillarsim.errors import ConfigurationError, ValidationError
from pillarsim.farfield import (
    AperturePhasors,
    FarField,
    flux_in_cone,
    na_fraction_curve,
    near_to_far,
)
from pillarsim.fdtd import GaussianPulse, Simulation3D, homogeneous_grid
from pillarsim.fdtd.core import PlaneResult
from pillarsim.rawio import load_raw

LAM = 700.0


def hertzian_fields(p_vec, pts_m, k):
    """Exact E, H of an oscillating dipole at the origin (phasors, exp(-iwt))."""
    r = np.linalg.norm(pts_m, axis=-1)
    n = pts_m / r[..., None]
    p = np.asarray(p_vec, dtype=np.float64)
    ndp = n @ p
    radial = np.exp(1j * k * r) / r
    nxp = np.cross(n, np.broadcast_to(p, n.shape))
    nxpxn = np.cross(nxp, n)
    e = (k**2 * nxpxn * radial[..., None]
         + (3 * n * ndp[..., None] - p)
         * ((1 / r**3 - 1j * k / r**2) * np.exp(1j * k * r))[..., None]
         ) / (4 * math.pi * EPS0)
    h = (C0 * k**2 / (4 * math.pi)) * nxp * (radial * (1 - 1 / (1j * k * r)))[..., None]
    return e, h


def edge_taper(u_nm, v_nm, half_nm, flat=0.5):
    """Cosine-tapered window, flat out to `flat` of the half-width.

    Synthetic apertures are hard-truncated; tapering the rim suppresses the
    edge-diffraction ripple so pattern comparisons probe the transform, not
    the truncation.
    """
    def one(x):
        a = np.abs(x) / half_nm
        w = np.ones_like(a)
        m = a > flat
        w[m] = 0.5 * (1 + np.cos(math.pi * (a[m] - flat) / (1 - flat)))
        return w
    return one(u_nm)[:, None] * one(v_nm)[None, :]


def gaussian_aperture(w0_nm=1000.0, half_nm=4000.0, step_nm=50.0):
    u = np.arange(-half_nm, half_nm + step_nm / 2, step_nm)
    v = u.copy()
    X, Y = np.meshgrid(u, v, indexing="ij")
    g = np.exp(-(X**2 + Y**2) / w0_nm**2).astype(complex)
    zero = np.zeros_like(g)
    ap = AperturePhasors(np.array([LAM]), u, v,
                         eu=g[None], ev=zero[None],
                         hu=zero[None], hv=(g / ETA0)[None])
    p_aperture = 0.5 * np.sum(np.abs(g) ** 2 / ETA0) * (step_nm * 1e-9) ** 2
    return ap, p_aperture


class TestSyntheticApertures:
    def test_zero_fields_give_zero_far_field(self):
        n = 8
        u = np.arange(n) * 100.0
        z = np.zeros((1, n, n), dtype=complex)
        ap = AperturePhasors(np.array([LAM]), u, u, z, z, z, z)
        ff = near_to_far(ap)
        assert np.all(ff.intensity_w_sr == 0.0)
        assert ff.hemisphere_flux()[0] == 0.0

    def test_gaussian_divergence_half_angle(self):
        ap, _ = gaussian_aperture()
        ff = near_to_far(ap, theta_step_deg=0.25, phi_step_deg=15.0)
        profile = ff.intensity_w_sr[0].mean(axis=1)
        target = profile[0] * math.exp(-2)
        j = int(np.argmax(profile < target))
        t = ff.theta_rad
        frac = (profile[j - 1] - target) / (profile[j - 1] - profile[j])
        theta_e2 = t[j - 1] + frac * (t[j] - t[j - 1])
        assert theta_e2 == pytest.approx(LAM / (math.pi * 1000.0), rel=0.05)

    def test_gaussian_power_conserved(self, tmp_path):
        ap, p_in = gaussian_aperture()
        ff = near_to_far(ap, theta_step_deg=0.25, phi_step_deg=15.0)
        assert ff.hemisphere_flux()[0] == pytest.approx(p_in, rel=0.02)

    def test_tilted_wave_peaks_at_tilt_angle(self):
        ap, _ = gaussian_aperture()
        k = 2 * math.pi / (LAM * 1e-9)
        delta = math.radians(10.0)
        x_m = ap.u_nm[:, None] * 1e-9
        tilt = np.exp(1j * k * math.sin(delta) * x_m)[None]
        ap2 = AperturePhasors(ap.wavelengths_nm, ap.u_nm, ap.v_nm,
                              eu=ap.eu * tilt, ev=ap.ev,
                              hu=ap.hu, hv=ap.hv * tilt)
        ff = near_to_far(ap2, theta_step_deg=0.25, phi_step_deg=15.0)
        i_pk, j_pk = np.unravel_index(np.argmax(ff.intensity_w_sr[0]),
                                      ff.intensity_w_sr[0].shape)
        assert ff.theta_rad[i_pk] == pytest.approx(delta, abs=math.radians(0.5))
        assert ff.phi_rad[j_pk] == 0.0

    def test_global_phase_leaves_intensity_unchanged(self):
        ap, _ = gaussian_aperture(half_nm=2000.0, step_nm=100.0)
        gauge = np.exp(1.234j)
        ap2 = AperturePhasors(ap.wavelengths_nm, ap.u_nm, ap.v_nm,
                              eu=ap.eu * gauge, ev=ap.ev * gauge,
                              hu=ap.hu * gauge, hv=ap.hv * gauge)
        f1 = near_to_far(ap, theta_step_deg=5.0, phi_step_deg=30.0)
        f2 = near_to_far(ap2, theta_step_deg=5.0, phi_step_deg=30.0)
        np.testing.assert_allclose(f2.intensity_w_sr, f1.intensity_w_sr,
                                   rtol=1e-9)

    def test_dipole_plane_recovers_sin2_chi_pattern(self):
        # In-plane dipole, observation plane 1.5 wavelengths underneath.
        # Compare against A*sin^2(chi) inside the cone the aperture subtends.
        d_nm, half_nm, step_nm = 1050.0, 14000.0, 87.5
        u = np.arange(-half_nm, half_nm + step_nm / 2, step_nm)
        A, B = np.meshgrid(u, u, indexing="ij")
        pts = np.stack([B * 1e-9, A * 1e-9, np.full_like(A, -d_nm * 1e-9)],
                       axis=-1)
        k = 2 * math.pi / (LAM * 1e-9)
        e, h = hertzian_fields([1e-30, 0.0, 0.0], pts, k)
        w = edge_taper(u, u, half_nm)
        # frame for the downward hemisphere: (a, b, n) = (y, x, -z)
        ap = AperturePhasors(np.array([LAM]), u, u,
                             eu=e[None, ..., 1] * w, ev=e[None, ..., 0] * w,
                             hu=h[None, ..., 1] * w, hv=h[None, ..., 0] * w)
        ff = near_to_far(ap, theta_step_deg=2.0, phi_step_deg=10.0)
        it = ff.intensity_w_sr[0]
        th, ph = np.meshgrid(ff.theta_rad, ff.phi_rad, indexing="ij")
        cos_chi = np.sin(th) * np.sin(ph)
        pattern = 1.0 - cos_chi**2
        keep = th <= math.radians(70.0)
        amp = np.sum(it[keep] * pattern[keep]) / np.sum(pattern[keep] ** 2)
        rms = np.sqrt(np.mean((it[keep] - amp * pattern[keep]) ** 2))
        assert rms / it[keep].max() < 0.03

    def test_nonuniform_grid_rejected(self):
        u = np.array([0.0, 100.0, 250.0])
        z = np.zeros((1, 3, 3), dtype=complex)
        ap = AperturePhasors(np.array([LAM]), u, u, z, z, z, z)
        with pytest.raises(ValidationError):
            near_to_far(ap)

    def test_mismatched_field_shape_rejected(self):
        u = np.arange(4) * 100.0
        good = np.zeros((1, 4, 4), dtype=complex)
        bad = np.zeros((1, 4, 3), dtype=complex)
        with pytest.raises(ValidationError):
            AperturePhasors(np.array([LAM]), u, u, good, bad, good, good)

    def test_wavelength_selection(self):
        n = 6
        u = np.arange(n) * 100.0
        wl = np.array([650.0, 700.0, 750.0])
        z = np.zeros((3, n, n), dtype=complex)
        ap = AperturePhasors(wl, u, u, z, z, z, z)
        ff = near_to_far(ap, theta_step_deg=15.0, phi_step_deg=60.0,
                         wavelength_nm=700.0)
        assert ff.wavelengths_nm.tolist() == [700.0]
        with pytest.raises(ValidationError):
            near_to_far(ap, wavelength_nm=999.0)

    def test_bad_angular_steps_rejected(self):
        ap, _ = gaussian_aperture(half_nm=1000.0, step_nm=250.0)
        with pytest.raises(ValidationError):
            near_to_far(ap, theta_step_deg=0.0)
        with pytest.raises(ValidationError):
            near_to_far(ap, phi_step_deg=-2.0)


def analytic_far_field(pattern, theta_step=1.0, phi_step=2.0):
    th = np.radians(np.arange(0.0, 90.0 + theta_step / 2, theta_step))
    ph = np.radians(np.arange(0.0, 360.0, phi_step))
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    return FarField(np.array([LAM]), 1.0, th, ph, pattern(TH, PH)[None])


class TestConeIntegrals:
    def test_axial_dipole_na075_fraction_of_4pi(self):
        ff = analytic_far_field(lambda th, ph: np.sin(th) ** 2)
        total_4pi = 8 * math.pi / 3  # unit-amplitude sin^2 emitter
        frac = flux_in_cone(ff, 0.75)[0] / total_4pi
        assert frac == pytest.approx(0.0762855, abs=2e-4)

    def test_na_zero_collects_nothing(self):
        ff = analytic_far_field(lambda th, ph: 1.0 + 0.3 * np.cos(th))
        assert flux_in_cone(ff, 0.0)[0] == 0.0

    def test_na_bounds_enforced(self):
        ff = analytic_far_field(lambda th, ph: np.ones_like(th))
        with pytest.raises(ValidationError):
            flux_in_cone(ff, -0.1)
        with pytest.raises(ValidationError):
            flux_in_cone(ff, 1.2)

    def test_isotropic_curve_closed_form(self):
        ff = analytic_far_field(lambda th, ph: np.ones_like(th))
        nas = np.array([0.0, 0.3, 0.5, 0.75, 0.9, 1.0])
        curve = na_fraction_curve(ff, nas)[0]
        np.testing.assert_allclose(curve / curve[-1], 1 - np.sqrt(1 - nas**2),
                                   atol=1e-6)

    def test_full_na_equals_hemisphere_total(self):
        ff = analytic_far_field(lambda th, ph: np.exp(-((th / 0.4) ** 2)))
        full = flux_in_cone(ff, 1.0)[0]
        assert full == pytest.approx(ff.hemisphere_flux()[0], rel=1e-12)

    def test_single_sample_curve(self):
        ff = analytic_far_field(lambda th, ph: np.cos(th) ** 2)
        curve = na_fraction_curve(ff, [1.0])
        assert curve.shape == (1, 1)
        assert curve[0, 0] == pytest.approx(ff.hemisphere_flux()[0], rel=1e-12)

    def test_curve_monotone(self):
        ff = analytic_far_field(lambda th, ph: 1 + np.cos(4 * ph) * np.sin(th))
        curve = na_fraction_curve(ff, np.linspace(0, 1, 21))[0]
        assert np.all(np.diff(curve) >= -1e-15)
        assert curve[15] <= curve[20]

    def test_bad_samples_rejected(self):
        ff = analytic_far_field(lambda th, ph: np.ones_like(th))
        with pytest.raises(ValidationError):
            na_fraction_curve(ff, [0.5, 0.3])
        with pytest.raises(ValidationError):
            na_fraction_curve(ff, [0.2, 1.4])
        with pytest.raises(ValidationError):
            na_fraction_curve(ff, [])


@pytest.fixture(scope="module")
def mirror_run():
    """In-plane dipole between two z-normal monitor planes, vacuum."""
    n = 67
    cell = 25.0
    grid = homogeneous_grid(n, cell, index=1.0, pml_cells=8)
    sim = Simulation3D(grid, wavelengths_nm=[LAM])
    pulse = GaussianPulse.for_band(650, 800)
    src = (837.5, 850.0, 825.0)  # snaps onto an Ex sample at the mirror plane
    sim.add_dipole(src, (1, 0, 0), pulse)
    sim.add_box_monitor(src, (250.0, 250.0, 250.0), name="src")
    sim.add_plane_monitor("z", 1362.5, sign=1, name="up")
    sim.add_plane_monitor("z", 287.5, sign=-1, name="dn")
    return sim.run(max_steps=4000, decay_threshold=1e-6)


class TestMonitorPlaneProjection:
    def test_opposite_planes_see_the_same_pattern(self, mirror_run):
        # The two faces sit symmetrically about the source, so their
        # hemispheres must match once the down-going frame is mirrored;
        # phi differs by the u<->v relabeling (chi is kept, azimuth swaps).
        ff_up = near_to_far(mirror_run.monitors["up"],
                            theta_step_deg=2.0, phi_step_deg=2.0)
        ff_dn = near_to_far(mirror_run.monitors["dn"],
                            theta_step_deg=2.0, phi_step_deg=2.0)
        up = ff_up.intensity_w_sr[0]
        dn = ff_dn.intensity_w_sr[0]
        j = np.arange(up.shape[1])
        remap = (45 - j) % up.shape[1]
        assert np.max(np.abs(dn[:, remap] - up)) < 1e-4 * up.max()
        assert ff_dn.hemisphere_flux()[0] == pytest.approx(
            ff_up.hemisphere_flux()[0], rel=1e-4)

    def test_hemisphere_power_below_source_power(self, mirror_run):
        ff = near_to_far(mirror_run.monitors["up"],
                         theta_step_deg=2.0, phi_step_deg=5.0)
        p_src = mirror_run.source_power("src")[0]
        hemi = ff.hemisphere_flux()[0]
        assert hemi <= 1.02 * p_src
        assert hemi > 0.1 * p_src

    def test_intensity_nonnegative(self, mirror_run):
        ff = near_to_far(mirror_run.monitors["up"],
                         theta_step_deg=5.0, phi_step_deg=10.0)
        assert np.all(ff.intensity_w_sr >= 0.0)
        assert np.all(np.isfinite(ff.intensity_w_sr))


def fabricated_plane(eps_min, eps_max, n_wl=1):
    shape_a = (n_wl, 4, 6)
    shape_b = (n_wl, 5, 5)
    za = np.zeros(shape_a, dtype=complex)
    zb = np.zeros(shape_b, dtype=complex)
    return PlaneResult(axis="z", sign=1, kp=10, u0=2, v0=2, cell_nm=20.0,
                       wavelengths_nm=np.array([650.0, 700.0, 750.0][:n_wl]),
                       eu_lo=za, eu_hi=za.copy(), hv=za.copy(),
                       ev_lo=zb, ev_hi=zb.copy(), hu=zb.copy(),
                       eps_min=eps_min, eps_max=eps_max)


class TestMediumGuards:
    def test_structured_plane_rejected(self):
        plane = fabricated_plane(1.0, 5.76)
        with pytest.raises(ConfigurationError):
            near_to_far(plane)

    def test_exit_index_mismatch_rejected(self):
        plane = fabricated_plane(5.76, 5.76)
        with pytest.raises(ConfigurationError):
            near_to_far(plane, exit_index=1.0)

    def test_matching_exit_index_accepted(self):
        plane = fabricated_plane(5.76, 5.76)
        ff = near_to_far(plane, exit_index=2.4, theta_step_deg=15.0,
                         phi_step_deg=60.0)
        assert np.all(ff.intensity_w_sr == 0.0)

    def test_unknown_input_type_rejected(self):
        with pytest.raises(ValidationError):
            near_to_far(np.zeros((3, 3)))


class TestExports:
    def test_csv_export_single_wavelength(self, tmp_path):
        ff = analytic_far_field(lambda th, ph: np.cos(th) ** 2,
                                theta_step=15.0, phi_step=90.0)
        path = tmp_path / "ff.csv"
        ff.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "theta_deg,phi_deg,intensity"
        assert len(lines) == 1 + 7 * 4
        th, ph, val = (float(p) for p in lines[1].split(","))
        assert (th, ph) == (0.0, 0.0)
        assert val == pytest.approx(1.0)

    def test_csv_needs_wavelength_when_ambiguous(self, tmp_path):
        th = np.radians(np.arange(0.0, 91.0, 30.0))
        ph = np.radians(np.arange(0.0, 360.0, 90.0))
        ff = FarField(np.array([650.0, 700.0]), 1.0, th, ph,
                      np.ones((2, th.size, ph.size)))
        with pytest.raises(ValidationError):
            ff.write_csv(tmp_path / "ff.csv")
        ff.write_csv(tmp_path / "ff.csv", wavelength_nm=650.0)
        with pytest.raises(ValidationError):
            ff.write_csv(tmp_path / "ff.csv", wavelength_nm=660.0)

    def test_raw_round_trip(self, tmp_path):
        ff = analytic_far_field(lambda th, ph: np.sin(th) ** 2,
                                theta_step=10.0, phi_step=45.0)
        raw_path = ff.save_raw(tmp_path / "ff")
        data, meta = load_raw(raw_path)
        assert data.shape == ff.intensity_w_sr.shape
        assert meta["axes"] == ["wavelength", "theta", "phi"]
        np.testing.assert_allclose(data, ff.intensity_w_sr, rtol=1e-6)

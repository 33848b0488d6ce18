"""Fast solver checks on the reduced 2D mode plus shared pulse/absorber units."""
import numpy as np
import pytest

from pillarsim.constants import C0, ETA0
from pillarsim.errors import (
    ConfigurationError,
    InstabilityError,
    PlacementError,
    StabilityError,
    ValidationError,
)
from pillarsim.fdtd import GaussianPulse, Simulation2D, build_axis_pml, courant_dt

CELL = 25.0
BAND = [650.0, 700.0, 800.0]


def vacuum_sim(nx=160, ny=160, wavelengths=BAND, pml=10):
    return Simulation2D(np.ones((nx, ny)), CELL, wavelengths_nm=wavelengths,
                        pml_cells=pml)


class TestGaussianPulse:
    def test_zero_outside_support(self):
        p = GaussianPulse.for_band(650, 800)
        assert p(-1e-15) == 0.0
        assert p(p.cutoff_s + 1e-18) == 0.0
        assert p(p.delay_s + 0.3 * p.tau_s) != 0.0

    def test_band_coverage(self):
        p = GaussianPulse.for_band(650, 800)
        assert p.spectral_amplitude(650) > 0.5
        assert p.spectral_amplitude(800) > 0.5
        # way outside the band the envelope has died off
        assert p.spectral_amplitude(450) < 1e-3

    def test_carrier_at_band_center(self):
        p = GaussianPulse.for_band(650, 800)
        f_expected = 0.5 * C0 * (1 / 650e-9 + 1 / 800e-9)
        assert p.frequency_hz == pytest.approx(f_expected)
        assert p.spectral_amplitude(2 * C0 / f_expected * 1e9 / 2) == pytest.approx(1.0)

    def test_band_order_rejected(self):
        with pytest.raises(ValidationError):
            GaussianPulse.for_band(800, 650)


class TestCourantStep:
    def test_formula_3d(self):
        # 10 nm cells at half the limit
        dt = courant_dt(10e-9, 0.5, ndim=3)
        assert dt * 1e15 == pytest.approx(0.00962, abs=1e-4)

    def test_2d_larger_than_3d(self):
        assert courant_dt(10e-9, 0.5, ndim=2) > courant_dt(10e-9, 0.5, ndim=3)


class TestAbsorberProfiles:
    def test_interior_untouched(self):
        ax = build_axis_pml(100, 10, 25e-9, 1e-17)
        interior = slice(12, 88)
        assert np.all(ax.b_e[interior] == 1.0)
        assert np.all(ax.c_e[interior] == 0.0)
        assert np.all(ax.kc_e[interior] == 0.0)

    def test_decay_coefficients_bounded(self):
        ax = build_axis_pml(100, 10, 25e-9, 1e-17)
        for b in (ax.b_e, ax.b_h):
            assert np.all(b > 0.0)
            assert np.all(b <= 1.0)
        # convolution feed is strongest at the outer wall
        assert abs(ax.c_e[1]) > abs(ax.c_e[8])


class TestLineSourcePower:
    def test_matches_analytic(self):
        sim = vacuum_sim(220, 220)
        pulse = GaussianPulse.for_band(650, 800)
        c = 0.5 * 220 * CELL
        sim.add_line_current((c, c), pulse, current_a=1.0)
        sim.add_box_monitor((c, c), (1000.0, 1000.0), name="src")
        res = sim.run(max_steps=6000, decay_threshold=1e-6)
        assert res.decayed
        P = res.monitors["src"].net_flux()
        ihat = res.source_spectrum(0)
        k = 2 * np.pi / (res.wavelengths_nm * 1e-9)
        # power per unit length radiated by a sinusoidal line current
        P_an = ETA0 * k * np.abs(ihat) ** 2 / 8.0
        assert np.all(np.abs(P / P_an - 1.0) < 0.02)


class TestAbsorberReflection:
    def test_normal_incidence_below_1e_4(self):
        # identical source and probe; only the distance to the +x wall differs.
        # any difference at the probe is wall reflection.
        pulse = GaussianPulse.for_band(650, 800)
        ny = 160

        def run(nx):
            sim = Simulation2D(np.ones((nx, ny)), CELL, wavelengths_nm=[700.0],
                               pml_cells=10)
            cy = 0.5 * ny * CELL
            sim.add_line_current((40 * CELL, cy), pulse)
            sim.add_probe((145 * CELL, cy), name="p")
            return sim.run(max_steps=2600, decay_threshold=1e-12,
                           check_every=10**9).probes["p"]

        near_wall = run(160)
        reference = run(560)
        refl = np.max(np.abs(near_wall - reference)) / np.max(np.abs(reference))
        assert refl < 1e-4


class TestEnergyBudget:
    def test_non_increasing_after_source_off(self):
        sim = vacuum_sim()
        pulse = GaussianPulse.for_band(650, 800)
        c = 0.5 * 160 * CELL
        sim.add_line_current((c, c), pulse)
        res = sim.run(max_steps=3000, decay_threshold=1e-30, check_every=50)
        off = pulse.cutoff_s
        tail = [e for step, e in res.energy_history if step * res.dt_s > off]
        assert len(tail) > 3
        floor = 1e-14 * res.peak_energy
        for a, b in zip(tail[:-1], tail[1:]):
            if a > floor:
                assert b <= a * (1.0 + 1e-9)

    def test_threshold_one_stops_at_source_off(self):
        sim = vacuum_sim()
        pulse = GaussianPulse.for_band(650, 800)
        c = 0.5 * 160 * CELL
        sim.add_line_current((c, c), pulse)
        res = sim.run(max_steps=4000, decay_threshold=1.0, check_every=50)
        off_steps = int(np.ceil(pulse.cutoff_s / res.dt_s))
        assert res.decayed
        assert res.steps <= off_steps + 100

    def test_nan_fields_detected(self):
        sim = vacuum_sim()
        sim.ez[80, 80] = np.nan
        with pytest.raises(InstabilityError, match="finite"):
            sim.run(max_steps=200, check_every=50)


class TestLinearity:
    def test_doubling_current_quadruples_power(self):
        def flux(amp):
            sim = vacuum_sim(120, 120)
            pulse = GaussianPulse.for_band(650, 800)
            c = 0.5 * 120 * CELL
            sim.add_line_current((c, c), pulse, current_a=amp)
            sim.add_box_monitor((c, c), (500.0, 500.0), name="src")
            return sim.run(max_steps=1500, decay_threshold=1e-30,
                           check_every=500).monitors["src"].net_flux()

        p1 = flux(1.0)
        p2 = flux(2.0)
        assert np.array_equal(p2, 4.0 * p1)


class TestSetupValidation:
    def test_courant_above_limit(self):
        with pytest.raises(StabilityError):
            Simulation2D(np.ones((60, 60)), CELL, BAND, courant=1.2)

    def test_too_few_absorber_cells(self):
        with pytest.raises(ConfigurationError):
            Simulation2D(np.ones((60, 60)), CELL, BAND, pml_cells=4)

    def test_domain_too_small(self):
        with pytest.raises(ConfigurationError):
            Simulation2D(np.ones((20, 20)), CELL, BAND, pml_cells=10)

    def test_source_in_absorber(self):
        sim = vacuum_sim()
        with pytest.raises(PlacementError):
            sim.add_line_current((3 * CELL, 80 * CELL), GaussianPulse.for_band(650, 800))

    def test_zero_current_leaves_fields_zero(self):
        sim = vacuum_sim(120, 120)
        c = 0.5 * 120 * CELL
        sim.add_line_current((c, c), GaussianPulse.for_band(650, 800), current_a=0.0)
        res = sim.run(max_steps=300, check_every=100)
        assert res.peak_energy == 0.0
        assert np.all(sim.ez == 0.0)

    def test_sourceless_run_stays_zero(self):
        sim = vacuum_sim(120, 120)
        sim.run(max_steps=100, check_every=50)
        for arr in (sim.ez, sim.hx, sim.hy):
            assert np.all(arr == 0.0)

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pillarsim.errors import ConfigurationError, ValidationError
from pillarsim.geometry import (
    ConeSegment,
    PermittivityGrid,
    PillarGeometry,
    RasterSpec,
    critical_angle_deg,
    expansion_factor,
    rasterize,
    rmid_from_angle,
    single_cone,
)
from pillarsim.rawio import load_raw

MULTICONE = PillarGeometry(
    top_radius_nm=150.0,
    segments=(ConeSegment(0.5, 51.0), ConeSegment(4.5, 80.0)),
)


class TestRadiusProfile:
    def test_facet_radius(self):
        assert MULTICONE.radius_at_depth(0.0) == 150.0

    def test_base_radius_single_cone(self):
        g = single_cone(150.0, 5.0, 80.0)
        assert g.base_radius_nm == pytest.approx(1031.7, abs=0.5)

    def test_cylinder_base_equals_top(self):
        g = single_cone(150.0, 5.0, 90.0)
        assert g.base_radius_nm == 150.0

    def test_piecewise_linear_and_continuous(self):
        depths = np.linspace(0.0, MULTICONE.height_nm, 1001)
        r = MULTICONE.radius_at_depth(depths)
        # continuous: no jump bigger than slope*dz anywhere
        max_slope = max(1.0 / math.tan(math.radians(51.0)), 0.2)
        assert np.all(np.diff(r) <= max_slope * np.diff(depths) + 1e-9)
        assert np.all(np.diff(r) >= -1e-12)
        # value at the junction from both sides
        junction = 500.0
        below = MULTICONE.radius_at_depth(junction - 1e-6)
        above = MULTICONE.radius_at_depth(junction + 1e-6)
        assert below == pytest.approx(above, abs=1e-4)

    def test_junction_radius_matches_rmid(self):
        assert MULTICONE.radius_at_depth(500.0) == pytest.approx(
            rmid_from_angle(150.0, 0.5, 51.0), rel=1e-12
        )


class TestRmidFromAngle:
    def test_vertical_wall(self):
        assert rmid_from_angle(150.0, 0.5, 90.0) == 150.0

    def test_51_degrees(self):
        assert rmid_from_angle(150.0, 0.5, 51.0) == pytest.approx(554.9, abs=0.1)

    def test_80_degrees(self):
        assert rmid_from_angle(150.0, 0.5, 80.0) == pytest.approx(238.2, abs=0.1)

    def test_out_of_range_angle(self):
        with pytest.raises(ValidationError):
            rmid_from_angle(150.0, 0.5, 0.0)
        with pytest.raises(ValidationError):
            rmid_from_angle(150.0, 0.5, 91.0)

    @given(st.floats(min_value=5.0, max_value=89.0))
    def test_strictly_decreasing_in_angle(self, phi):
        assert rmid_from_angle(150.0, 0.5, phi) > rmid_from_angle(150.0, 0.5, phi + 1.0)


class TestExpansionFactor:
    def test_short_single_cone(self):
        assert expansion_factor(single_cone(150.0, 1.0, 80.0)) == pytest.approx(2.2, abs=0.05)

    def test_tall_single_cone(self):
        assert expansion_factor(single_cone(150.0, 5.0, 80.0)) == pytest.approx(6.9, abs=0.05)

    def test_multicone(self):
        assert expansion_factor(MULTICONE) == pytest.approx(9.0, abs=0.05)

    @given(st.floats(min_value=50.0, max_value=500.0), st.floats(min_value=0.2, max_value=8.0))
    def test_cylinder_is_exactly_one(self, r_top, h):
        assert expansion_factor(single_cone(r_top, h, 90.0)) == 1.0


class TestValidation:
    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValidationError):
            single_cone(0.0, 1.0, 80.0)

    def test_rejects_empty_segments(self):
        with pytest.raises(ValidationError):
            PillarGeometry(150.0, ())

    def test_rejects_bad_angle(self):
        with pytest.raises(ValidationError):
            single_cone(150.0, 1.0, 120.0)

    def test_rejects_emitter_below_base(self):
        with pytest.raises(ValidationError):
            single_cone(150.0, 1.0, 90.0, emitter_depth_nm=1500.0)

    def test_rejects_emitter_outside_radius(self):
        with pytest.raises(ValidationError):
            single_cone(150.0, 1.0, 90.0, emitter_offset_nm=200.0)

    def test_rejects_low_index(self):
        with pytest.raises(ValidationError):
            single_cone(150.0, 1.0, 90.0, index=1.0)


class TestCriticalAngle:
    def test_diamond_air(self):
        assert critical_angle_deg(2.4) == pytest.approx(24.62, abs=0.01)

    def test_no_critical_angle_into_denser(self):
        with pytest.raises(ValidationError):
            critical_angle_deg(1.0, 1.5)


class TestJsonRoundTrip:
    def test_schema_keys(self):
        d = MULTICONE.to_dict()
        assert set(d) == {"r_top_nm", "segments", "substrate_um", "n_d", "d_nm", "delta_nm"}
        assert d["segments"][0] == {"h_um": 0.5, "angle_deg": 51.0}

    def test_round_trip_identity(self):
        text = MULTICONE.to_json()
        assert PillarGeometry.from_json(text) == MULTICONE

    def test_file_round_trip(self, tmp_path):
        p = tmp_path / "geom.json"
        MULTICONE.to_json(p)
        assert PillarGeometry.from_json(p) == MULTICONE

    def test_defaults_fill_in(self):
        g = PillarGeometry.from_json('{"r_top_nm": 150, "segments": [{"h_um": 1, "angle_deg": 90}]}')
        assert g.index == 2.4
        assert g.emitter_depth_nm == 5.0
        assert g.emitter_offset_nm == 0.0

    def test_malformed_json_reports_line(self):
        with pytest.raises(ValidationError, match="line"):
            PillarGeometry.from_json('{"r_top_nm": 150,\n "segments": [}')

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError, match="unknown"):
            PillarGeometry.from_json('{"r_top_nm": 150, "segments": [{"h_um": 1, "angle_deg": 90}], "bogus": 1}')

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            PillarGeometry.from_json(tmp_path / "nope.json")


SMALL_SPEC = RasterSpec(air_lateral_nm=200.0, air_above_nm=150.0, exit_air_nm=200.0, pml_cells=8)


class TestRasterize:
    def test_disk_cross_section_area(self):
        g = single_cone(150.0, 0.2, 90.0, substrate_um=0.05)
        grid = rasterize(g, 10.0, SMALL_SPEC)
        k = int((grid.z_facet_nm + 100.0) / grid.cell_nm)
        frac = (grid.eps[:, :, k] - 1.0) / (g.index**2 - 1.0)
        area = frac.sum() * grid.cell_nm**2
        assert area == pytest.approx(math.pi * 150.0**2, rel=0.02)

    def test_vacuum_cells_outside(self):
        g = single_cone(150.0, 0.2, 90.0, substrate_um=0.05)
        grid = rasterize(g, 10.0, SMALL_SPEC)
        assert grid.eps[0, 0, 0] == 1.0
        assert grid.eps.min() == 1.0
        assert grid.eps.max() == pytest.approx(g.index**2)

    def test_values_are_convex_combinations(self):
        grid = rasterize(single_cone(150.0, 0.3, 70.0, substrate_um=0.05), 20.0, SMALL_SPEC)
        assert np.all(grid.eps >= 1.0 - 1e-12)
        assert np.all(grid.eps <= grid.index**2 + 1e-12)

    def test_mirror_symmetry(self):
        grid = rasterize(MULTICONE, 25.0)
        assert np.array_equal(grid.eps, grid.eps[::-1, :, :])
        assert np.array_equal(grid.eps, grid.eps[:, ::-1, :])

    def test_deterministic(self):
        g = single_cone(150.0, 0.3, 75.0, substrate_um=0.05)
        a = rasterize(g, 15.0, SMALL_SPEC)
        b = rasterize(g, 15.0, SMALL_SPEC)
        assert np.array_equal(a.eps, b.eps)

    def test_volume_convergence_order(self):
        g = PillarGeometry(150.0, (ConeSegment(0.2, 51.0), ConeSegment(0.3, 80.0)),
                           substrate_um=0.05)
        exact = g.diamond_volume_nm3()
        # O(c) bound: error stays under k*c at both resolutions
        for c in (40.0, 20.0):
            err = abs(rasterize(g, c, SMALL_SPEC).diamond_volume_nm3() - exact) / exact
            assert err < 0.0005 * c

    def test_substrate_slab_spans_domain(self):
        g = single_cone(150.0, 0.2, 90.0, substrate_um=0.1)
        grid = rasterize(g, 10.0, SMALL_SPEC)
        k = int((grid.z_base_nm + 50.0) / grid.cell_nm)
        assert np.all(grid.eps[:, :, k] == pytest.approx(g.index**2))

    def test_cell_larger_than_facet_rejected(self):
        with pytest.raises(ConfigurationError):
            rasterize(single_cone(30.0, 0.2, 90.0), 40.0, SMALL_SPEC)

    def test_raw_export_round_trip(self, tmp_path):
        g = single_cone(150.0, 0.2, 90.0, substrate_um=0.05)
        grid = rasterize(g, 20.0, SMALL_SPEC)
        raw_path = grid.save(tmp_path / "eps")
        arr, meta = load_raw(raw_path)
        assert meta["axes"] == ["z", "y", "x"]
        assert tuple(meta["shape"]) == grid.shape[::-1]
        assert meta["cell_nm"] == 20.0
        np.testing.assert_allclose(arr.transpose(2, 1, 0), grid.eps, rtol=1e-6)

    def test_emitter_lands_below_facet(self):
        grid = rasterize(MULTICONE, 25.0)
        ex, ey, ez = grid.emitter_nm
        assert ez == pytest.approx(grid.z_facet_nm + 5.0)
        nx, ny, _ = grid.shape
        assert ex == pytest.approx(nx * grid.cell_nm / 2)

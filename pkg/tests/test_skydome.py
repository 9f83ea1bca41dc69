import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canopy_light.skydome import (
    DIFFUSE,
    SUN,
    SkyDome,
    build_hemisphere,
    cie_by_type,
    cie_parameters,
    composite_sky,
    distribute_diffuse,
    geodesic_hemisphere,
    instantaneous_sky,
    load_dome,
    relative_luminance,
    save_dome,
    sky_at,
)
from canopy_light.weather import IrradianceSplit, SolarPosition, angles_from_direction, direction_from_angles


def split_of(direct, diffuse):
    total = direct + diffuse
    return IrradianceSplit(diffuse / total if total else 1.0, direct, diffuse, 0.5, 0.5, 0.5, total, 12.0, 50.0)


SUN_NE = SolarPosition(40.0, 55.0, 35.0)


class TestHemisphere:
    @pytest.mark.parametrize("target,count", [(19, 26), (121, 126), (315, 341), (12, 26), (6, 6)])
    def test_nearest_subdivision_at_or_above(self, target, count):
        assert len(build_hemisphere(target)) == count

    @pytest.mark.parametrize("frequency", range(1, 11))
    def test_unit_vectors_above_horizon(self, frequency):
        d = geodesic_hemisphere(frequency)
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
        assert np.all(d[:, 2] >= 0.0)

    @pytest.mark.parametrize("frequency", range(2, 11))
    def test_quasi_uniform_spacing(self, frequency):
        d = geodesic_hemisphere(frequency)
        ang = np.degrees(np.arccos(np.clip(d @ d.T, -1, 1)))
        np.fill_diagonal(ang, np.inf)
        nearest = ang.min(axis=1)
        assert nearest.max() / nearest.min() < 1.5

    def test_vertex_up_and_deterministic(self):
        d = geodesic_hemisphere(3)
        np.testing.assert_array_equal(d[0], [0.0, 0.0, 1.0])
        np.testing.assert_array_equal(d, geodesic_hemisphere(3))


class TestCie:
    def test_table_rows(self):
        assert tuple(cie_parameters(0.10))[:5] == (-1, -0.32, 10, -3, 0.45)
        assert cie_parameters(0.10).sky_type == 12
        assert tuple(cie_parameters(0.40))[:5] == (-1, -0.55, 10, -3, 0.45)
        assert tuple(cie_parameters(0.60))[:5] == (0, -1.0, 5, -2.5, 0.30)
        assert tuple(cie_parameters(0.90))[:5] == (4, -0.7, 2, -1.5, 0.15)
        assert cie_parameters(0.90).sky_type == 1

    @pytest.mark.parametrize("d,sky_type", [(0.0, 12), (0.25, 12), (0.2500001, 11), (0.5, 11), (0.75, 7), (1.0, 1)])
    def test_closed_upper_bounds(self, d, sky_type):
        assert cie_parameters(d).sky_type == sky_type

    @pytest.mark.parametrize("d", [-0.01, 1.01])
    def test_out_of_range(self, d):
        with pytest.raises(ValueError):
            cie_parameters(d)


class TestLuminance:
    def test_sun_direction_gives_zero_scattering_angle(self):
        p = cie_by_type(12)
        lum = relative_luminance(40.0, 40.0, 0.0, p)
        expected = (1 + p.c * (1 - math.exp(p.d * math.pi / 2)) + p.e) * (1 + p.a * math.exp(p.b / math.cos(math.radians(40))))
        # arccos near 1 leaves chi ~ 1e-8 rather than exactly 0
        assert lum == pytest.approx(expected, rel=1e-6)

    @pytest.mark.parametrize("sky_type", [1, 7, 11, 12])
    def test_indicatrix_is_one_at_right_angle(self, sky_type):
        p = cie_by_type(sky_type)
        # sun at zenith, node on the horizon: chi = 90 deg; divide out the gradation
        gradation = 1 + p.a * math.exp(p.b / math.cos(math.radians(89.5)))
        assert relative_luminance(90.0, 0.0, 0.0, p) / gradation == pytest.approx(1.0, abs=1e-12)

    def test_overcast_zenith_gradation(self):
        p = cie_by_type(1)
        gradation = 1 + 4 * math.exp(-0.7)
        assert gradation == pytest.approx(2.9863, abs=1e-4)
        zs = 30.0
        chi = math.radians(zs)
        f = 1 + 2 * (math.exp(-1.5 * chi) - math.exp(-1.5 * math.pi / 2)) + 0.15 * math.cos(chi) ** 2
        assert relative_luminance(0.0, zs, 0.0, p) == pytest.approx(f * gradation, rel=1e-12)

    @pytest.mark.parametrize("sky_type", [1, 7, 11, 12])
    def test_positive_and_continuous(self, sky_type):
        p = cie_by_type(sky_type)
        z = np.linspace(0, 89.5, 2000)
        for zs in (0.0, 30.0, 60.0, 89.0):
            lum = relative_luminance(z, zs, 45.0, p)
            assert np.all(lum > 0)
            assert np.max(np.abs(np.diff(lum))) < 0.1 * lum.max()

    @pytest.mark.parametrize("sky_type", [1, 7, 11, 12])
    def test_horizon_gradation_clamped(self, sky_type):
        p = cie_by_type(sky_type)
        # sun overhead so chi equals the node zenith; 1/cos(90 deg) would blow up
        chi = math.pi / 2
        indicatrix = 1 + p.c * (math.exp(p.d * chi) - math.exp(p.d * math.pi / 2)) + p.e * math.cos(chi) ** 2
        gradation = 1 + p.a * math.exp(p.b / math.cos(math.radians(89.5)))
        lum = relative_luminance(90.0, 0.0, 0.0, p)
        assert np.isfinite(lum)
        assert lum == pytest.approx(indicatrix * gradation, rel=1e-12)


class TestDistributeDiffuse:
    def test_zero_total(self):
        v = distribute_diffuse(0.0, build_hemisphere(19), SUN_NE, cie_by_type(12))
        assert np.all(v == 0)

    @settings(max_examples=50)
    @given(st.floats(1, 1000), st.floats(0, 359.9), st.floats(1, 89), st.sampled_from([1, 7, 11, 12]), st.sampled_from([6, 19, 121]))
    def test_normalised(self, total, az, el, sky_type, res):
        sun = SolarPosition(az, el, 90 - el)
        v = distribute_diffuse(total, build_hemisphere(res), sun, cie_by_type(sky_type))
        assert abs(v.sum() - total) <= 1e-9 * total

    def test_clear_sky_brightest_near_sun(self):
        d = build_hemisphere(121)
        v = distribute_diffuse(100.0, d, SUN_NE, cie_by_type(12))
        dots = d @ SUN_NE.direction
        assert v[np.argmax(dots)] > v[np.argmin(dots)]

    def test_negative_total(self):
        with pytest.raises(ValueError):
            distribute_diffuse(-1.0, build_hemisphere(19), SUN_NE, cie_by_type(12))


class TestInstantaneousSky:
    def test_dedicated_sun_node(self):
        dome = instantaneous_sky(split_of(300.0, 200.0), SUN_NE, 19)
        assert (dome.kinds == SUN).sum() == 1
        sun_dir = dome.directions[dome.kinds == SUN][0]
        np.testing.assert_allclose(sun_dir, SUN_NE.direction, atol=1e-15)
        assert dome.values[dome.kinds == SUN][0] == 300.0
        assert dome.diffuse_total == pytest.approx(200.0, rel=1e-12)
        assert dome.resolution == 26

    def test_no_direct_no_sun_node(self):
        dome = instantaneous_sky(split_of(0.0, 200.0), SUN_NE, 19)
        assert (dome.kinds == SUN).sum() == 0

    def test_total_is_input(self):
        dome = instantaneous_sky(split_of(321.5, 178.25), SUN_NE, 121)
        assert dome.total == pytest.approx(499.75, rel=1e-14)

    def test_snapped_sun_goes_to_max_dot_node(self):
        split = split_of(300.0, 200.0)
        dedicated = instantaneous_sky(split, SUN_NE, 19)
        plain = SkyDome(dedicated.directions[:-1], dedicated.values[:-1], dedicated.kinds[:-1], 26)
        snapped = instantaneous_sky(split, SUN_NE, 19, dedicated_sun=False)
        assert len(snapped) == len(plain)
        gained = snapped.values - plain.values
        # oracle: brute-force angular distance
        angles = [math.acos(min(1.0, float(np.dot(d, SUN_NE.direction)))) for d in plain.directions]
        assert int(np.argmax(gained)) == int(np.argmin(angles))
        assert gained.max() == pytest.approx(300.0, rel=1e-12)

    def test_no_diffuse_puts_everything_in_sun(self):
        dome = instantaneous_sky(split_of(300.0, 200.0), SUN_NE, 19, include_diffuse=False)
        assert len(dome) == 1 and dome.kinds[0] == SUN and dome.values[0] == 500.0


class TestSkyAt:
    def test_clear_day_brightest_diffuse_next_to_sun(self, clear_week):
        t = clear_week.times[48 + 20]
        dome = sky_at(clear_week, t, 121)
        diffuse = dome.kinds == DIFFUSE
        brightest = dome.directions[diffuse][np.argmax(dome.values[diffuse])]
        sun_dir = dome.directions[dome.kinds == SUN][0]
        spacing = np.degrees(np.arccos(np.clip(dome.directions[diffuse] @ brightest, -1, 1)))
        spacing = np.sort(spacing)[1]
        assert np.degrees(np.arccos(brightest @ sun_dir)) <= 1.5 * spacing

    def test_overcast_brightest_at_zenith(self):
        sun = SolarPosition(10.0, 75.0, 15.0)
        d = build_hemisphere(121)
        v = distribute_diffuse(100.0, d, sun, cie_by_type(1))
        _, el = angles_from_direction(d[np.argmax(v)])
        assert el > 70.0


class TestComposite:
    def test_single_step_is_dt_times_snapped(self, clear_week):
        t = clear_week.times[48 + 20]
        comp = composite_sky(clear_week, t, t + 1800.0, 1800.0, 19)
        inst = sky_at(clear_week, t, 19, dedicated_sun=False)
        np.testing.assert_allclose(comp.values, 1800.0 * inst.values, rtol=1e-14)
        assert comp.mode == "composite"

    def test_additive_over_adjacent_spans(self, clear_week):
        t0 = clear_week.times[48]
        a = composite_sky(clear_week, t0, t0 + 6 * 3600, 1800.0, 19)
        b = composite_sky(clear_week, t0 + 6 * 3600, t0 + 24 * 3600, 1800.0, 19)
        ab = composite_sky(clear_week, t0, t0 + 24 * 3600, 1800.0, 19)
        np.testing.assert_allclose(ab.values, a.values + b.values, rtol=1e-12, atol=0)

    def test_day_total_matches_integral(self, clear_week):
        t0 = clear_week.times[48]
        comp = composite_sky(clear_week, t0, t0 + 86400.0, 1800.0, 19)
        expected = clear_week.global_wm2[48:96].sum() * 1800.0
        assert comp.total == pytest.approx(expected, rel=1e-6)

    def test_empty_span(self, clear_week):
        with pytest.raises(ValueError):
            composite_sky(clear_week, 10.0, 10.0)


def test_dome_csv_round_trip(tmp_path):
    dome = instantaneous_sky(split_of(300.0, 200.0), SUN_NE, 19)
    save_dome(dome, tmp_path / "d.csv")
    back = load_dome(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.values, dome.values)
    np.testing.assert_array_equal(back.kinds, dome.kinds)
    np.testing.assert_allclose(back.directions, dome.directions, atol=1e-12)


def test_dome_rejects_ragged_arrays():
    with pytest.raises(ValueError):
        SkyDome(direction_from_angles(np.array([0.0]), np.array([90.0])), [1.0, 2.0], [0], 1)

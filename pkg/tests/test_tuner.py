from dataclasses import replace

import numpy as np
import pytest

from canopy_light.cloud import rotate_about_trunk
from canopy_light.scenes import asymmetric_canopy, clear_sky_weather, measurement_grid, synthetic_dataset
from canopy_light.tuner import (
    EXPERIMENTS,
    PARAM_COLUMNS,
    ParameterPoint,
    StagePlan,
    Variant,
    ablate,
    evaluate,
    grid_search,
    offset_axis,
    offset_search,
    parse_experiment,
    report_rows,
)


class TestParameterPoint:
    @pytest.mark.parametrize(
        "kwargs", [{"beta_f": 0.0}, {"beta_f": 1.1}, {"s_vox": 0.0}, {"w_vox": -1}, {"sky_resolution": 0}]
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            ParameterPoint(**kwargs)

    def test_row_columns(self):
        assert PARAM_COLUMNS == ("beta_f", "s_vox", "w_vox", "sky_resolution", "offset_x", "offset_y", "dedicated_sun")


class TestExperimentNames:
    @pytest.mark.parametrize(
        "name,parsed",
        [("rotation", ("rotation", None)), ("rotation:30", ("rotation", 30.0)), ("rotation(45)", ("rotation", 45.0)),
         ("wrong_time:-1.5", ("wrong_time", -1.5)), ("no_diffuse", ("no_diffuse", None))],
    )
    def test_parse(self, name, parsed):
        assert parse_experiment(name) == parsed

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown experiment"):
            parse_experiment("wrong_tree")

    def test_all_known(self):
        assert all(parse_experiment(e)[0] == e for e in EXPERIMENTS)


class TestOffsetAxis:
    def test_enumeration(self):
        axis = offset_axis(1.0, 0.1)
        assert len(axis) == 21 and axis[0] == -1.0 and axis[-1] == 1.0 and 0.3 in axis

    @pytest.mark.parametrize("step", [0.3, 0.0, -0.1])
    def test_step_must_divide(self, step):
        with pytest.raises(ValueError):
            offset_axis(1.0, step)


class TestEvaluate:
    def test_self_consistent_is_perfect(self, small_scene):
        ds, truth = small_scene
        r = evaluate([ds], truth)
        assert r.fit.r_squared > 0.999999 and r.fit.slope == pytest.approx(1.0, abs=1e-6)

    def test_reproducible(self, small_scene):
        ds, truth = small_scene
        p = replace(truth, beta_f=0.6)
        assert evaluate([ds], p, workers=1).fit == evaluate([ds], p, workers=3).fit

    def test_window_applied(self, small_scene):
        ds, truth = small_scene
        p = replace(truth, beta_f=0.6)
        assert evaluate([ds], p, window=2.0).fit != evaluate([ds], p).fit

    def test_exclude_north(self, small_scene):
        ds, truth = small_scene
        north = replace(ds, exclude_north=True)
        cy = ds.cloud.centroid_xy[1]
        assert 0 < len(north.active_readings()) < len(ds.readings)
        assert np.all(north.positions()[:, 1] <= cy)
        assert evaluate([north], truth).fit.n == len(north.active_readings())


class TestGridSearch:
    def test_single_point_plan(self, small_scene):
        ds, truth = small_scene
        plan = StagePlan(betas=(0.8,), s_voxes=(0.2,), w_voxes=(1,), sky_resolutions=(19,), dedicated=(True,))
        result = grid_search([ds], plan)
        assert [len(v) for v in result.stages.values()] == [1, 1, 1]
        assert result.best == truth

    def test_recovers_truth_and_is_reproducible(self, small_scene):
        ds, truth = small_scene
        plan = StagePlan(betas=(0.6, 0.7, 0.8, 0.9), s_voxes=(0.2,), w_voxes=(1, 3), sky_resolutions=(19,), dedicated=(True, False))
        a = grid_search([ds], plan, base=truth)
        b = grid_search([ds], plan, base=truth)
        assert a.best.beta_f == 0.8 and a.best.w_vox == 1 and a.best.dedicated_sun
        assert [r.fit for r in a.results] == [r.fit for r in b.results]
        rows = report_rows(a.results)
        assert rows[0]["stage"] in ("beta_svox", "w_vox", "sky")
        assert [r["r2"] for r in rows] == sorted((r["r2"] for r in rows), reverse=True)

    def test_needs_dataset(self):
        with pytest.raises(ValueError):
            grid_search([])


class TestOffsetSearch:
    def test_zero_optimum_and_size(self, small_scene):
        ds, truth = small_scene
        hm = offset_search(ds, truth, extent=0.3, step=0.1)
        assert hm.rmse.shape == (7, 7) and hm.rmse.size == round(0.6 / 0.1 + 1) ** 2
        assert hm.best == (0.0, 0.0)
        assert hm.rmse[3, 3] == pytest.approx(0.0, abs=1e-6)


class TestAblate:
    def test_rotation_zero_is_baseline(self, small_scene):
        ds, truth = small_scene
        assert ablate(ds, "rotation:0", truth).fit == ablate(ds, "baseline", truth).fit

    def test_rotation_90_worse(self, small_scene):
        ds, truth = small_scene
        assert ablate(ds, "rotation(90)", truth).fit.rmse > ablate(ds, "rotation(0)", truth).fit.rmse

    def test_rotation_label(self, small_scene):
        ds, truth = small_scene
        assert ablate(ds, "rotation", truth, rotation=45.0).label == "rotation(45)"

    def test_baseline_beats_every_ablation(self, small_scene):
        ds, truth = small_scene
        alt = rotate_about_trunk(asymmetric_canopy(3000, 400, seed=9), 180.0)
        base = ablate(ds, "baseline", truth).fit.r_squared
        for e in EXPERIMENTS[1:]:
            assert ablate(ds, e, truth, alt_cloud=alt).fit.r_squared <= base

    def test_wrong_cloud_needs_alternate(self, small_scene):
        ds, truth = small_scene
        with pytest.raises(ValueError, match="alternate"):
            ablate(ds, "wrong_cloud", truth)

    def test_shift_outside_record(self, small_scene):
        ds, truth = small_scene
        with pytest.raises(ValueError, match="outside the weather record"):
            ablate(ds, "wrong_date:100", truth)

    def test_no_diffuse_small_on_clear_day(self):
        weather = clear_sky_weather(days=3, peak=1150.0)
        times = [weather.times[0] + 86400.0 + h * 3600.0 for h in (11.0, 12.5)]
        grid = measurement_grid(np.arange(-3.0, 3.01, 1.0), np.arange(-3.2, 3.21, 0.8))
        truth = ParameterPoint(s_vox=0.2)
        ds = synthetic_dataset("clear", asymmetric_canopy(3000, 400), weather, times, grid, truth=truth, noise=0.03, seed=1)
        base = ablate(ds, "baseline", truth).fit.r_squared
        drop = base - ablate(ds, "no_diffuse", truth).fit.r_squared
        assert 0.0 <= drop < 0.05


def test_variant_defaults_are_identity(small_scene):
    ds, truth = small_scene
    assert evaluate([ds], truth, Variant()).fit == evaluate([ds], truth).fit

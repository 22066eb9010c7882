import numpy as np
import pytest

from restphase.core import PixelPoint
from restphase.phantom import PhantomConfig, generate_phantom
from restphase.pipeline import (LocalizerConfig, MotionConfig, PipelineConfig, StageError, cohort_member, locate,
                                run_pipeline, truth_rest_set)
from restphase.registration import RegistrationParams


def test_default_phantom_end_to_end(default_phantom):
    series, truth = default_phantom
    # tau in the range that phantom calibration finds
    res = run_pipeline(series, truth.track[0], PipelineConfig().with_overrides(tau=0.02))
    assert len(res.track) == 25 and len(res.fields) == 24 and len(res.curve) == 24
    assert res.roi.size == (34, 34)
    ref = truth_rest_set(truth, series)
    assert [iv.label for iv in res.rp.intervals] == ["systolic", "diastolic"]
    for p, r in zip(res.rp.intervals, ref.intervals):
        assert abs(p.start_frame - r.start_frame) <= 1 and abs(p.end_frame - r.end_frame) <= 1
    assert set(res.timings) == {"normalization", "localization", "cropping", "registration",
                                "motion", "classification"}


def test_zero_motion_gives_full_window(static_phantom):
    series, truth = static_phantom
    cfg = PipelineConfig().with_overrides(alpha_ms=0, omega_ms=0)
    res = run_pipeline(series, truth.track[0], cfg)
    (iv,) = res.rp.intervals
    assert (iv.start_frame, iv.end_frame) == (0, series.n_frames - 1)


def test_tiny_tau_gives_no_rest(noisy_phantom):
    series, truth = noisy_phantom
    res = run_pipeline(series, truth.track[0], PipelineConfig().with_overrides(tau=0.001))
    assert res.rp.intervals == ()


def test_missing_annotation_is_a_localization_failure(default_phantom):
    series, _ = default_phantom
    with pytest.raises(StageError) as exc:
        run_pipeline(series, None)
    assert exc.value.stage == "localization"


def test_stage_error_names_failing_stage(default_phantom):
    series, _ = default_phantom
    with pytest.raises(StageError) as exc:
        run_pipeline(series, PixelPoint(1, 1))  # template does not fit
    assert exc.value.stage == "localization"
    cfg = PipelineConfig(roi_size_mm=(500.0, 500.0))
    with pytest.raises(StageError) as exc:
        run_pipeline(series, PixelPoint(48, 48), cfg)
    assert exc.value.stage == "cropping"


def test_propagation_localizer_and_threads(default_phantom):
    series, truth = default_phantom
    cfg = PipelineConfig(localizer=LocalizerConfig(kind="propagation"), threads=4)
    res = run_pipeline(series, truth.track[0], cfg)
    assert np.sqrt(np.mean(np.sum((res.track.xy - truth.track.xy) ** 2, axis=1))) <= 0.5


def test_resampled_localization(default_phantom):
    series, truth = default_phantom
    track = locate(series, truth.track[0], LocalizerConfig(resample=(32, 96, 96)))
    assert len(track) == 25
    assert np.max(np.abs(track.xy - truth.track.xy)) <= 1.0


def test_config_round_trip_and_overrides():
    cfg = PipelineConfig(localizer=LocalizerConfig(resample=(32, 224, 224)),
                         registration=RegistrationParams(pyramid_levels=2),
                         motion=MotionConfig(variant="pct(90)"), threads=2)
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"rp": {"tau": 0.1, "beta": 3}})
    o = cfg.with_overrides(tau=0.05, percentile=30, sigma=8, alpha_ms=50, omega_ms=60, threads=1)
    assert (o.rp.tau, o.rp.alpha_ms, o.rp.omega_ms) == (0.05, 50, 60)
    assert (o.motion.variant, o.motion.sigma, o.threads) == ("pct(30)", 8.0, 1)
    assert cfg.with_overrides(variant="wpct", percentile=70).motion.variant == "wpct(70)"
    assert cfg.with_overrides(variant="mean").motion.variant == "mean"
    with pytest.raises(ValueError):
        LocalizerConfig(kind="cnn")


def test_cohort_member_shapes():
    series, truth = generate_phantom(PhantomConfig(dims=(12, 64, 64)))
    m = cohort_member(series, truth, truth.track[0], name="a")
    assert len(m.fields) == 11 and len(m.track) == 12 and m.truth_mask.shape == (11,)
    assert m.name == "a"


def test_truth_rest_set_keeps_short_runs(default_phantom):
    series, truth = default_phantom
    rp = truth_rest_set(truth, series)
    assert [(iv.start_frame, iv.end_frame) for iv in rp.intervals] == [(7, 8), (15, 20)]

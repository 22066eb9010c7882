from dataclasses import replace

import numpy as np
import pytest

from restphase.errors import TrajectoryOutOfBounds
from restphase.phantom import (CohortRanges, PhantomConfig, cohort_configs, generate_cohort,
                               generate_phantom, target_displacement)


def test_zero_amplitude_is_all_rest(static_phantom):
    series, truth = static_phantom
    assert np.all(truth.resting_frames)
    assert np.ptp(truth.track.xy, axis=0).max() == 0.0
    assert np.array_equal(series.frames[0], series.frames[-1])


def test_default_plateaus_mark_transitions(default_phantom):
    # rr 1000 ms over 25 frames: frames every 40 ms
    _, truth = default_phantom
    assert np.flatnonzero(truth.resting_frames).tolist() == [7, 15, 16, 17, 18, 19]


def test_resting_frames_match_closed_form():
    cfg = PhantomConfig(dims=(31, 64, 64), rr_interval=870.0, rest_intervals=((200, 290), (540, 700)))
    _, truth = generate_phantom(cfg)
    t = np.arange(31) * 870.0 / 31
    inside = np.zeros(31, bool)
    for a, b in cfg.rest_intervals:
        inside |= (t >= a) & (t <= b)
    expected = inside[:-1] & inside[1:]
    assert np.array_equal(truth.resting_frames, expected)


def test_displacement_profile():
    cfg = PhantomConfig()
    t = np.linspace(0, 999, 4000)
    s = target_displacement(cfg, t)
    for a, b in cfg.rest_intervals:
        level = s[(t >= a) & (t <= b)]
        assert np.ptp(level) == 0.0
    assert s.min() >= -1e-12 and s.max() <= cfg.motion_amplitude + 1e-12
    # smooth: no jumps larger than the peak cosine slope allows
    assert np.max(np.abs(np.diff(s))) < 0.1


def test_track_is_closed_form(default_phantom):
    _, truth = default_phantom
    cfg = PhantomConfig()
    t = np.arange(25) * 40.0
    s = target_displacement(cfg, t)
    a = np.radians(cfg.motion_angle_deg)
    c = np.array([95 * 1.5 / 2, 95 * 1.5 / 2])
    expected = (c + s[:, None] * np.array([np.cos(a), np.sin(a)])) / 1.5
    assert np.allclose(truth.track.xy, expected, atol=1e-12)


def test_target_is_bright_at_track(default_phantom):
    series, truth = default_phantom
    for k in (0, 10, 20):
        x, y = np.round(truth.track.xy[k]).astype(int)
        assert series.frames[k, y, x] == pytest.approx(1.0)


def test_deterministic_given_seed():
    cfg = PhantomConfig(dims=(6, 48, 48), motion_amplitude=3.0, noise_sigma=0.05, seed=11)
    a, _ = generate_phantom(cfg)
    b, _ = generate_phantom(cfg)
    assert a.frames.tobytes() == b.frames.tobytes()
    c, _ = generate_phantom(replace(cfg, seed=12))
    assert not np.array_equal(a.frames, c.frames)


def test_noise_level():
    cfg = PhantomConfig(dims=(4, 64, 64), motion_amplitude=0.0)
    clean, _ = generate_phantom(cfg)
    noisy, _ = generate_phantom(replace(cfg, noise_sigma=0.05))
    assert np.std(noisy.frames - clean.frames) == pytest.approx(0.05, rel=0.05)


def test_out_of_bounds():
    with pytest.raises(TrajectoryOutOfBounds):
        generate_phantom(PhantomConfig(dims=(8, 32, 32), motion_amplitude=30.0))
    with pytest.raises(TrajectoryOutOfBounds):
        generate_phantom(PhantomConfig(dims=(8, 32, 32), distractor=True))


@pytest.mark.parametrize("bad", [
    dict(motion_amplitude=-1.0),
    dict(target_radius=0.0),
    dict(rest_intervals=((100, 300), (250, 400))),
    dict(rest_intervals=((900, 1100),)),
    dict(distractor_path="zigzag"),
])
def test_invalid_config(bad):
    with pytest.raises(ValueError):
        PhantomConfig(**bad)


def test_config_round_trip():
    cfg = PhantomConfig(distractor=True, target_center_mm=(40.0, 50.0), seed=3)
    assert PhantomConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        PhantomConfig.from_dict({"nonsense": 1})


def test_separable_texture_matches_full_evaluation():
    # the distractor path renders tissue point by point; a far-away distractor
    # with zero amplitude and full coupling must give the same image
    base = PhantomConfig(dims=(3, 64, 64), motion_amplitude=3.0, distractor_amplitude=0.0,
                         tissue_coupling_mm=1e4)
    plain, _ = generate_phantom(base)
    full, _ = generate_phantom(replace(base, distractor=True, distractor_radius=1.0,
                                       distractor_offset_mm=(-40.0, -40.0)))
    mask = np.ones((64, 64), bool)
    mask[:8, :8] = False  # distractor disk corner
    assert np.allclose(plain.frames[:, mask], full.frames[:, mask], atol=1e-9)


def test_cohort_single_member_matches_direct():
    base = PhantomConfig(dims=(25, 64, 64))
    (cfg,) = cohort_configs(base, 1, seed=9)
    (series, truth), = generate_cohort(base, 1, seed=9)
    direct, dtruth = generate_phantom(cfg)
    assert np.array_equal(series.frames, direct.frames)
    assert np.array_equal(truth.resting_frames, dtruth.resting_frames)


def test_cohort_deterministic_and_in_range():
    base = PhantomConfig(dims=(25, 96, 96))
    a = cohort_configs(base, 20, seed=4)
    b = cohort_configs(base, 20, seed=4)
    assert a == b
    assert len({c.seed for c in a}) == 20
    for c in a:
        assert 620.0 <= c.rr_interval <= 1710.0
        assert 25 <= c.dims[0] <= 32
        assert len(c.rest_intervals) == 2
    assert cohort_configs(base, 20, seed=5) != a
    with pytest.raises(ValueError):
        cohort_configs(base, 0, seed=1)


def test_cohort_ranges_round_trip():
    r = CohortRanges(rr_interval=(700.0, 900.0))
    assert CohortRanges.from_dict(r.to_dict()) == r


def test_cohort_members_have_two_rest_runs():
    for _, truth in generate_cohort(PhantomConfig(dims=(25, 64, 64)), 5, seed=2):
        runs = np.diff(np.concatenate([[0], truth.resting_frames.astype(int), [0]]))
        assert np.sum(runs == 1) == 2


import numpy as np
import pytest

from restphase.core import PixelPoint
from restphase.errors import FlatTemplate, LengthMismatch, PointOutOfBounds
from restphase.localization import (Localizer, NccTemplateLocalizer, PropagationLocalizer, TemplateTrackerParams,
                                    distance_error, ncc_template_track, propagation_localizer)
from restphase.core import LandmarkTrack
from restphase.phantom import PhantomConfig, generate_phantom

from conftest import blob_image, make_series

LOCALIZERS = {
    "ncc": lambda p0: NccTemplateLocalizer(p0),
    "propagation": lambda p0: PropagationLocalizer(p0),
}


def rms(track, truth):
    d = track.xy - truth.xy
    return float(np.sqrt(np.mean(np.sum(d ** 2, axis=1))))


@pytest.fixture(scope="module")
def fast_phantom():
    # up to ~2 px per frame at 1 mm spacing
    return generate_phantom(PhantomConfig(dims=(20, 80, 80), pixel_spacing=(1.0, 1.0),
                                          motion_amplitude=10.0, seed=2))


@pytest.mark.parametrize("kind", sorted(LOCALIZERS))
class TestLocalizerContract:
    def test_is_localizer(self, kind):
        assert isinstance(LOCALIZERS[kind](PixelPoint(10, 10)), Localizer)

    def test_length_and_bounds(self, kind, default_phantom):
        series, truth = default_phantom
        track = LOCALIZERS[kind](truth.track[0]).locate(series)
        assert len(track) == series.n_frames
        assert track.in_bounds(series.frame_shape)
        assert track[0] == truth.track[0]

    def test_static_gives_constant_track(self, kind, static_phantom):
        series, truth = static_phantom
        track = LOCALIZERS[kind](truth.track[0]).locate(series)
        assert np.ptp(track.xy, axis=0).max() <= 0.05

    @pytest.mark.parametrize("which", ["default", "fast"])
    def test_rms_on_noise_free_phantom(self, kind, which, default_phantom, fast_phantom):
        series, truth = default_phantom if which == "default" else fast_phantom
        track = LOCALIZERS[kind](truth.track[0]).locate(series)
        assert rms(track, truth.track) <= 0.5

    def test_start_outside_frame(self, kind, default_phantom):
        series, _ = default_phantom
        with pytest.raises(PointOutOfBounds):
            LOCALIZERS[kind](PixelPoint(-3, 500)).locate(series)


def test_fast_phantom_moves_two_pixels(fast_phantom):
    _, truth = fast_phantom
    assert np.max(np.linalg.norm(np.diff(truth.track.xy, axis=0), axis=1)) >= 1.8


def test_ncc_per_frame_error(fast_phantom):
    series, truth = fast_phantom
    track = ncc_template_track(series, truth.track[0])
    assert np.max(np.linalg.norm(track.xy - truth.track.xy, axis=1)) <= 0.5


def test_ncc_flat_template():
    s = make_series(np.full((3, 32, 32), 0.4))
    with pytest.raises(FlatTemplate):
        ncc_template_track(s, PixelPoint(16, 16))


def test_ncc_template_must_fit():
    s = make_series(np.random.default_rng(0).random((3, 32, 32)))
    with pytest.raises(PointOutOfBounds):
        ncc_template_track(s, PixelPoint(3, 16), TemplateTrackerParams(template_radius=7))
    with pytest.raises(ValueError):
        TemplateTrackerParams(template_radius=0)


def test_propagation_two_frame_shift():
    s = make_series(np.stack([blob_image(), blob_image(shift=(1.5, -1.0))]))
    track = propagation_localizer(s, PixelPoint(24, 24))
    assert len(track) == 2
    assert track.xy[1] == pytest.approx([25.5, 23.0], abs=0.2)


def test_noisy_phantom_tracking(noisy_phantom):
    series, truth = noisy_phantom
    assert rms(ncc_template_track(series, truth.track[0]), truth.track) <= 0.5


def test_distance_error_identical():
    t = LandmarkTrack(np.random.default_rng(1).random((7, 2)) * 50)
    assert distance_error([t, t], [t, t], (1.5, 1.5)) == (0.0, 0.0)


def test_distance_error_constant_offset():
    t = LandmarkTrack(np.random.default_rng(1).random((7, 2)) * 50)
    assert distance_error([t.shifted(3, 0)], [t], (1.0, 1.0)) == pytest.approx((3.0, 0.0))


def test_distance_error_population_std():
    t = LandmarkTrack(np.zeros((2, 2)))
    mean, std = distance_error([t.shifted(1, 0), t.shifted(0, 3)], [t, t], (1.0, 1.0))
    assert (mean, std) == pytest.approx((2.0, 1.0))


def test_distance_error_scales_with_spacing():
    t = LandmarkTrack(np.zeros((3, 2)))
    assert distance_error([t.shifted(2, 0)], [t], (1.0, 0.7))[0] == pytest.approx(1.4)
    assert distance_error([t.shifted(0, 2)], [t], (0.7, 1.0))[0] == pytest.approx(1.4)


def test_distance_error_translation_invariant():
    rng = np.random.default_rng(4)
    p = [LandmarkTrack(rng.random((5, 2)) * 30) for _ in range(3)]
    q = [LandmarkTrack(rng.random((5, 2)) * 30) for _ in range(3)]
    base = distance_error(p, q, (1.2, 0.8))
    moved = distance_error([a.shifted(7, -3) for a in p], [b.shifted(7, -3) for b in q], (1.2, 0.8))
    assert moved == pytest.approx(base, abs=1e-12)


def test_distance_error_length_mismatch():
    t = LandmarkTrack(np.zeros((3, 2)))
    with pytest.raises(LengthMismatch):
        distance_error([t], [t, t], (1, 1))
    with pytest.raises(LengthMismatch):
        distance_error([t], [LandmarkTrack(np.zeros((4, 2)))], (1, 1))

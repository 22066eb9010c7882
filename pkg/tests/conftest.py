import numpy as np
import pytest

from restphase.core import CineSeries
from restphase.phantom import PhantomConfig, generate_phantom


def make_series(frames, spacing=(1.0, 1.0), rr=1000.0):
    frames = np.asarray(frames, dtype=float)
    t = frames.shape[0]
    times = np.arange(t) * (rr / t)
    return CineSeries(frames, spacing, times, rr)


def blob_image(shape=(48, 48), center=(24.0, 24.0), width=4.0, shift=(0.0, 0.0)):
    """Smooth test image: two Gaussian blobs plus a gentle ramp, shifted by ``shift`` (dx, dy)."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    cx, cy = center[0] + shift[0], center[1] + shift[1]
    img = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * width ** 2))
    img += 0.6 * np.exp(-((xx - cx + 9) ** 2 + (yy - cy - 6) ** 2) / (2 * (0.7 * width) ** 2))
    img += 0.4 * np.exp(-((xx - cx - 7) ** 2 + (yy - cy + 8) ** 2) / (2 * (1.2 * width) ** 2))
    return img


@pytest.fixture(scope="session")
def default_phantom():
    return generate_phantom(PhantomConfig())


@pytest.fixture(scope="session")
def noisy_phantom():
    return generate_phantom(PhantomConfig(noise_sigma=0.02, seed=5))


@pytest.fixture(scope="session")
def static_phantom():
    return generate_phantom(PhantomConfig(motion_amplitude=0.0, dims=(6, 64, 64)))


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])

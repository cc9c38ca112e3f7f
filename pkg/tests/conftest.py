import numpy as np
import pytest

from echokit.geometry import ArrayGeometry, generate_probe


@pytest.fixture(scope="session")
def paper_geom():
    """Six microphones on a 0.2 m circle at 22.05 kHz, c = 343 m/s."""
    return ArrayGeometry(mic_count=6, radius_m=0.2)


@pytest.fixture(scope="session")
def small_probe():
    """Short probe for fast pipeline tests."""
    return generate_probe(active_len=800, total_len=6000, sample_rate_hz=22050.0, seed=7)


@pytest.fixture(scope="session")
def full_probe():
    """The evaluation probe: 1,500 active samples padded to 20,000."""
    return generate_probe(active_len=1500, total_len=20000, sample_rate_hz=22050.0, seed=7)


def assert_allclose(actual, desired, rtol=1e-7, atol=0.0):
    np.testing.assert_allclose(actual, desired, rtol=rtol, atol=atol)

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from dprsim.devices import bundled_device  # noqa: E402

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bram_device():
    return bundled_device("bram")


@pytest.fixture(scope="session")
def dsp_device():
    return bundled_device("dsp")


@pytest.fixture(scope="session")
def mixed_device():
    return bundled_device("mixed")


@pytest.fixture(scope="session")
def devices(bram_device, dsp_device, mixed_device):
    return {"bram": bram_device, "dsp": dsp_device, "mixed": mixed_device}

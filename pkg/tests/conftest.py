import os

import pytest
from hypothesis import HealthCheck, settings

from gvlasov import kernels

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BACKENDS = kernels.available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def backend(request, monkeypatch):
    """Run the test once per importable kernel backend."""
    monkeypatch.setattr(kernels, "backend", BACKENDS[request.param])
    return request.param


@pytest.fixture
def threads():
    old = kernels.get_num_threads()
    yield kernels.set_num_threads
    kernels.set_num_threads(old)

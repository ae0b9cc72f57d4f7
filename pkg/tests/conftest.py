import pytest
from hypothesis import settings

from ecmtput._accel import ENV_FLAG, HAVE_NUMBA

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

MODES = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=MODES)
def kernel_mode(request, monkeypatch):
    """Run the test once per kernel implementation."""
    if request.param == "numpy":
        monkeypatch.setenv(ENV_FLAG, "1")
    else:
        monkeypatch.delenv(ENV_FLAG, raising=False)
    return request.param

import pytest

from pdc_g2.model.gaussian import build_biphoton
from pdc_g2.model.params import ppktp


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo and full-grid runs")


@pytest.fixture(params=[30.0, 3.0], ids=["30ps", "3ps"])
def preset_params(request):
    return ppktp(request.param)


@pytest.fixture
def biphoton_30ps():
    return build_biphoton(ppktp(30.0))


@pytest.fixture
def biphoton_3ps():
    return build_biphoton(ppktp(3.0))

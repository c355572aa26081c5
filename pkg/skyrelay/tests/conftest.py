import pytest

from skyrelay.params import load_params


@pytest.fixture
def table1():
    return load_params()

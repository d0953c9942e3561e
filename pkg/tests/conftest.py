import pytest

from vmcsim.controller import DEFAULT_GENOME


@pytest.fixture
def genome():
    return DEFAULT_GENOME

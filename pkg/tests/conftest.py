import pytest

from panbayes.dp_core import RandomSource
from panbayes.fixtures import tiny_dataset


@pytest.fixture
def rng():
    return RandomSource(12345)


@pytest.fixture
def tiny():
    return tiny_dataset()

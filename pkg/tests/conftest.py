import pytest

from critflow import Grid, SplitMix64, build_filter_bank


@pytest.fixture(scope="session")
def grid64():
    return Grid(2, 64)


@pytest.fixture(scope="session")
def grid32():
    return Grid(2, 32)


@pytest.fixture(scope="session")
def bank64(grid64):
    return build_filter_bank(grid64)


@pytest.fixture(scope="session")
def bank32(grid32):
    return build_filter_bank(grid32)


@pytest.fixture
def rng():
    return SplitMix64(1234)

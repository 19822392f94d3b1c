import pytest

from fkforest import bundled_model


@pytest.fixture(scope="session")
def drift2():
    return bundled_model("drift2")


@pytest.fixture(scope="session")
def flat2():
    return bundled_model("flat2")


@pytest.fixture(scope="session")
def skew2():
    return bundled_model("skew2")


@pytest.fixture(scope="session")
def cycle3():
    return bundled_model("cycle3")


@pytest.fixture(scope="session")
def blend3():
    return bundled_model("blend3")

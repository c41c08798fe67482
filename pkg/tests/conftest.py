import numpy as np
import pytest

from vfoldsel import make_setting, regu_collection


@pytest.fixture(scope="session")
def setting_l():
    return make_setting("L")


@pytest.fixture(scope="session")
def setting_s():
    return make_setting("S")


@pytest.fixture(scope="session")
def setting_uniform():
    return make_setting("uniform")


@pytest.fixture(scope="session")
def regu20():
    return regu_collection(20)


def rng_of(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

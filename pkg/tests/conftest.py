import numpy as np
import pytest

from ehsrb import SystemSpec, build_local_system, build_system, default_config


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def spec():
    return SystemSpec()


@pytest.fixture(scope="session")
def slowed(spec, cfg):
    return build_system(spec, cfg.integrator, slowed=True)


@pytest.fixture(scope="session")
def base(spec, cfg):
    return build_system(spec, cfg.integrator, slowed=False)


@pytest.fixture(scope="session")
def pure(spec, cfg):
    return build_system(spec, cfg.integrator, slowed=False, deformed=False)


@pytest.fixture(scope="session")
def local(spec, cfg):
    return build_local_system(spec, cfg.integrator)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

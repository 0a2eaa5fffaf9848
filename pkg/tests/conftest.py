import numpy as np
import pytest

from irsec import SystemConfig, dbm_to_watts
from irsec.channels import build_channel_set, child_rng, sample_geometry, scenario_seed_tree


def random_hermitian(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_psd(rng, n, scale=1.0):
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (b @ b.conj().T) / n


@pytest.fixture(scope="session")
def desk_config():
    return SystemConfig(p_max=dbm_to_watts(20.0))


@pytest.fixture(scope="session")
def desk_channels(desk_config):
    root = scenario_seed_tree(desk_config, 0)
    geometry = sample_geometry(desk_config, child_rng(root, 0))
    return build_channel_set(desk_config, geometry, root)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)

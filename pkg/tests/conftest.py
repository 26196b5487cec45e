import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evcsi.channelgen import ChannelParams, build_dataset
from evcsi.model import ModelConfig, init_model

settings.register_profile(
    "ci",
    max_examples=100,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("ci")


DESK_MODEL = dict(n_tx=8, n_subband=12, n_e=64, n_b=2, n_head=4, k_h=2,
                  bits_total=32, bits_per_symbol=2)


@pytest.fixture(scope="session")
def desk_cfg():
    return ModelConfig(**DESK_MODEL)


@pytest.fixture(scope="session")
def desk_weights(desk_cfg):
    return init_model(desk_cfg, seed=101)


@pytest.fixture(scope="session")
def flat_params():
    return ChannelParams(n_tx=8, n_rx=2, n_subband=12, delay_spread=0.0)


@pytest.fixture(scope="session")
def flat_dataset(flat_params):
    return build_dataset(flat_params, 48, master_seed=321)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)

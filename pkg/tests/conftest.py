"""Shared fixtures: a reduced two-topology registry and a small trained model.

The reduced registry keeps only the named geometry parameters (no auxiliary
slots), which shrinks the unified vector from 32 to 15 so session-scoped
training fixtures stay fast while exercising the same code paths.
"""

import numpy as np
import pytest

from motormeta.designspace import ParamSpec, TopologyRegistry, TopologySpec
from motormeta.surrogate import OracleConfig, build_dataset
from motormeta.training import TrainConfig, train
from motormeta.vae import model_for_registry

# compact architecture used wherever tests train or probe a model
SMALL_VAE = dict(
    encoder_channels=(8, 12, 12),
    trunk_width=32,
    decoder_reshape_channels=12,
    decoder_channels=(12, 12, 8),
    decoder_dense=32,
    mlp_widths=(32, 24, 16),
)


def make_small_registry() -> TopologyRegistry:
    reg = TopologyRegistry()
    reg.register(
        TopologySpec(
            1,
            "sv",
            (
                ParamSpec("air_gap", 0.8, 1.8, "mm"),
                ParamSpec("magnet_height", 4.5, 6.5, "mm"),
                ParamSpec("magnet_inclination", 14.0, 36.0, "deg"),
                ParamSpec("stator_tooth_height", 12.0, 20.0, "mm"),
                ParamSpec("iron_length", 120.0, 160.0, "mm"),
                ParamSpec("rotor_outer_diameter", 150.0, 180.0, "mm"),
            ),
        )
    )
    reg.register(
        TopologySpec(
            2,
            "dv",
            (
                ParamSpec("air_gap", 0.8, 1.8, "mm"),
                ParamSpec("magnet_height_1", 4.5, 6.5, "mm"),
                ParamSpec("magnet_inclination_1", 20.0, 40.0, "deg"),
                ParamSpec("magnet_height_2", 3.7, 5.6, "mm"),
                ParamSpec("magnet_inclination_2", 18.0, 35.0, "deg"),
                ParamSpec("stator_tooth_height", 10.0, 24.0, "mm"),
                ParamSpec("iron_length", 120.0, 160.0, "mm"),
                ParamSpec("rotor_outer_diameter", 150.0, 180.0, "mm"),
            ),
        )
    )
    return reg


@pytest.fixture(scope="session")
def small_registry() -> TopologyRegistry:
    return make_small_registry()


@pytest.fixture(scope="session")
def small_dataset(small_registry):
    return build_dataset(small_registry, OracleConfig(seed=3, counts={"sv": 300, "dv": 300}))


@pytest.fixture(scope="session")
def small_model(small_registry, small_dataset):
    """A model trained well enough for downstream recon/optimization tests.

    m = 10 respects the sizing rule: strictly larger than the widest topology
    parameterization (here DV with 8).
    """
    model = model_for_registry(
        small_registry.n, small_registry.content_hash(), m=10, seed=1, **SMALL_VAE
    )
    train(model, small_registry, small_dataset, TrainConfig(epochs=150, patience=15, seed=1))
    return model


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)

"""Latent-space metamodeling and multi-objective optimization for machine design.

Pipeline: register topologies, sample oracle-labelled designs, train the joint
encoder/decoder/KPI metamodel, then optimize conflicting KPIs with NSGA-II in
the learned latent space and re-validate the resulting front.
"""

from .designspace import (
    DesignSample,
    ParamSpec,
    TopologyRegistry,
    TopologySpec,
    default_registry,
)
from .surrogate import Dataset, OracleConfig, build_dataset, kpi_oracle, load_dataset, write_dataset
from .training import TrainConfig, TrainTrace, evaluate_kpis, evaluate_reconstruction, latent_sweep, train
from .vae import LatentSample, LossBreakdown, VaeConfig, VaeModel, model_for_registry

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DesignSample",
    "LatentSample",
    "LossBreakdown",
    "OracleConfig",
    "ParamSpec",
    "TopologyRegistry",
    "TopologySpec",
    "TrainConfig",
    "TrainTrace",
    "VaeConfig",
    "VaeModel",
    "build_dataset",
    "default_registry",
    "evaluate_kpis",
    "evaluate_reconstruction",
    "kpi_oracle",
    "latent_sweep",
    "load_dataset",
    "model_for_registry",
    "train",
    "write_dataset",
]

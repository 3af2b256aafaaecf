"""Deterministic synthetic stand-in for magneto-static FE simulation.

Samples design parameters uniformly within bounds and evaluates a smooth
analytic KPI oracle. The oracle formulas are frozen (documented in the README)
so independent runs agree bit-for-bit with noise disabled. Working in
normalized features keeps the formulas unit-free:

    a  air gap, h  magnet height (DV: mean of both), alpha  inclination
    (DV: mean of both), t  stator tooth height, l  iron length, d  rotor
    outer diameter, g  mean of auxiliary parameters, delta = 1 for DV else 0.

    y1 = 150 + 300*h*d*l + 50*sin(pi*alpha) - 60*a + 20*(g - 0.5) + 80*delta*h
    y2 = 0.35 * y1 * (0.8 + 0.4*t)
    y3 = 5 + 40*|sin(2*pi*alpha)|*(1 - a) + 10*(1 - t) + 60*delta*h*|sin(2*pi*alpha)|
    y4 = 50 + 120*h*l*d + 30*t + 40*delta*h
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .designspace import KPI_NAMES, DesignSample, TopologyRegistry, TopologySpec
from .errors import ConfigError, DataError, ValidationError

SPLIT_NAMES = ("train", "val", "test")
DATASET_FORMAT = "motormeta-dataset"
DATASET_VERSION = 1

# stream tags keep the per-purpose RNGs of one seed independent
_STREAM_SAMPLING = 101
_STREAM_NOISE = 102
_STREAM_SPLIT = 103


@dataclass
class OracleConfig:
    """Sampling and noise settings for one dataset build."""

    seed: int = 0
    noise_std: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    counts: dict[str, int] = field(default_factory=lambda: {"sv": 4000, "dv": 4000})

    def __post_init__(self):
        if any(s < 0 for s in self.noise_std):
            raise ConfigError("noise_std entries must be >= 0")
        if any(c < 0 for c in self.counts.values()):
            raise ConfigError("sample counts must be >= 0")


@dataclass
class Dataset:
    """Oracle-labelled design samples with train/val/test split labels."""

    samples: list[DesignSample]
    splits: list[str]
    config: OracleConfig
    registry_hash: str
    split_fractions: tuple[float, float, float] = (0.9, 0.05, 0.05)

    def __post_init__(self):
        if len(self.samples) != len(self.splits):
            raise DataError("samples and split labels differ in length")

    def indices(self, split: str) -> list[int]:
        if split not in SPLIT_NAMES:
            raise ConfigError(f"unknown split {split!r}")
        return [i for i, s in enumerate(self.splits) if s == split]

    def subset(self, split: str) -> list[DesignSample]:
        return [self.samples[i] for i in self.indices(split)]

    def __len__(self) -> int:
        return len(self.samples)


def _normalized_feature(spec: TopologySpec, values: np.ndarray, name: str) -> float:
    p = spec.params[spec.param_index(name)]
    return p.normalize(float(values[spec.param_index(name)]))


def _oracle_features(spec: TopologySpec, values: np.ndarray) -> tuple[float, ...]:
    is_dv = any(p.name == "magnet_height_2" for p in spec.params)
    a = _normalized_feature(spec, values, "air_gap")
    if is_dv:
        h = 0.5 * (
            _normalized_feature(spec, values, "magnet_height_1")
            + _normalized_feature(spec, values, "magnet_height_2")
        )
        alpha = 0.5 * (
            _normalized_feature(spec, values, "magnet_inclination_1")
            + _normalized_feature(spec, values, "magnet_inclination_2")
        )
    else:
        h = _normalized_feature(spec, values, "magnet_height")
        alpha = _normalized_feature(spec, values, "magnet_inclination")
    t = _normalized_feature(spec, values, "stator_tooth_height")
    l = _normalized_feature(spec, values, "iron_length")
    d = _normalized_feature(spec, values, "rotor_outer_diameter")
    aux = [
        spec.params[i].normalize(float(values[i]))
        for i, p in enumerate(spec.params)
        if p.name.startswith("aux_")
    ]
    g = float(np.mean(aux)) if aux else 0.5
    delta = 1.0 if is_dv else 0.0
    return a, h, alpha, t, l, d, g, delta


def kpi_oracle(
    registry: TopologyRegistry,
    sample: DesignSample,
    noise_std: tuple[float, float, float, float] | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Evaluate the analytic KPI formulas for one in-bounds design.

    Deterministic with noise disabled; otherwise adds independent Gaussian
    noise per KPI from the supplied generator.
    """
    violations = registry.validate_bounds(sample)
    if violations:
        v = violations[0]
        raise ValidationError(
            f"parameter {v.param!r} = {v.value} outside [{v.minimum}, {v.maximum}]"
        )
    spec = registry.spec(sample.topology_id)
    a, h, alpha, t, l, d, g, delta = _oracle_features(spec, sample.values)
    y1 = 150.0 + 300.0 * h * d * l + 50.0 * np.sin(np.pi * alpha) - 60.0 * a + 20.0 * (g - 0.5) + 80.0 * delta * h
    y2 = 0.35 * y1 * (0.8 + 0.4 * t)
    y3 = (
        5.0
        + 40.0 * abs(np.sin(2.0 * np.pi * alpha)) * (1.0 - a)
        + 10.0 * (1.0 - t)
        + 60.0 * delta * h * abs(np.sin(2.0 * np.pi * alpha))
    )
    y4 = 50.0 + 120.0 * h * l * d + 30.0 * t + 40.0 * delta * h
    y = np.array([y1, y2, y3, y4])
    if noise_std is not None and any(s > 0 for s in noise_std):
        if rng is None:
            raise ConfigError("noise requested but no rng supplied")
        y = y + rng.standard_normal(4) * np.asarray(noise_std)
    return y


def sample_designs(
    registry: TopologyRegistry, topology_id: int, count: int, seed: int
) -> list[DesignSample]:
    """Uniform i.i.d. designs within bounds; reproducible for a fixed seed."""
    spec = registry.spec(topology_id)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _STREAM_SAMPLING, topology_id]))
    lo = np.array([p.minimum for p in spec.params])
    span = np.array([p.span for p in spec.params])
    u = rng.random((count, spec.n_params))
    return [DesignSample(topology_id, lo + u[i] * span) for i in range(count)]


def build_dataset(
    registry: TopologyRegistry,
    cfg: OracleConfig,
    split_fractions: tuple[float, float, float] = (0.9, 0.05, 0.05),
) -> Dataset:
    """Sample every topology, attach oracle KPIs, assign seeded splits."""
    if len(split_fractions) != 3 or any(not 0.0 < f < 1.0 for f in split_fractions):
        raise ConfigError(f"split fractions must each be in (0,1), got {split_fractions}")
    if abs(sum(split_fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {split_fractions}")
    samples: list[DesignSample] = []
    for name in sorted(cfg.counts):
        spec = registry.spec_by_name(name)
        samples.extend(sample_designs(registry, spec.id, cfg.counts[name], cfg.seed))
    noisy = any(s > 0 for s in cfg.noise_std)
    for i, s in enumerate(samples):
        rng = (
            np.random.default_rng(np.random.SeedSequence([cfg.seed, _STREAM_NOISE, i]))
            if noisy
            else None
        )
        s.kpis = kpi_oracle(registry, s, cfg.noise_std if noisy else None, rng)
    total = len(samples)
    n_train = int(round(split_fractions[0] * total))
    n_val = int(round(split_fractions[1] * total))
    order = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, _STREAM_SPLIT])
    ).permutation(total)
    splits = [""] * total
    for rank, idx in enumerate(order):
        if rank < n_train:
            splits[idx] = "train"
        elif rank < n_train + n_val:
            splits[idx] = "val"
        else:
            splits[idx] = "test"
    return Dataset(samples, splits, cfg, registry.content_hash(), tuple(split_fractions))


# -- file formats -------------------------------------------------------------


def _param_columns(registry: TopologyRegistry) -> list[tuple[int, int, str]]:
    """(topology id, param index, column name) in unified-vector order."""
    cols = []
    for k in registry.ids:
        spec = registry.spec(k)
        for i, p in enumerate(spec.params):
            cols.append((k, i, f"{spec.name}_{p.name}"))
    return cols


def sidecar_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_dataset(dataset: Dataset, registry: TopologyRegistry, csv_path: str | Path) -> list[Path]:
    """Write the dataset CSV plus its JSON sidecar; returns both paths.

    Floats are written with repr so that a reload is bitwise identical.
    """
    csv_path = Path(csv_path)
    cols = _param_columns(registry)
    header = ["topology", "k"] + [c[2] for c in cols] + list(KPI_NAMES) + ["split"]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for sample, split in zip(dataset.samples, dataset.splits):
            spec = registry.spec(sample.topology_id)
            row = [spec.name, str(sample.topology_id)]
            for k, i, _ in cols:
                row.append(repr(float(sample.values[i])) if k == sample.topology_id else "")
            row.extend(repr(float(v)) for v in sample.kpis)
            row.append(split)
            writer.writerow(row)
    sidecar = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "oracle": {
            "seed": dataset.config.seed,
            "noise_std": list(dataset.config.noise_std),
            "counts": dict(dataset.config.counts),
        },
        "split_fractions": list(dataset.split_fractions),
        "registry_hash": dataset.registry_hash,
        "registry": registry.to_config(),
    }
    side = sidecar_path(csv_path)
    with open(side, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [csv_path, side]


def load_dataset(csv_path: str | Path) -> tuple[Dataset, TopologyRegistry]:
    """Load a dataset CSV and its sidecar; reconstructs the registry."""
    csv_path = Path(csv_path)
    side = sidecar_path(csv_path)
    if not csv_path.exists():
        raise DataError(f"dataset file {csv_path} does not exist")
    if not side.exists():
        raise DataError(f"dataset sidecar {side} does not exist")
    try:
        with open(side, encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt dataset sidecar {side}: {exc}") from None
    if meta.get("format") != DATASET_FORMAT:
        raise DataError(f"{side} is not a dataset sidecar")
    if meta.get("version") != DATASET_VERSION:
        raise DataError(f"unsupported dataset version {meta.get('version')}")
    registry = TopologyRegistry.from_config(meta["registry"])
    if registry.content_hash() != meta["registry_hash"]:
        raise DataError("dataset sidecar registry hash does not match its registry block")
    cfg = OracleConfig(
        seed=int(meta["oracle"]["seed"]),
        noise_std=tuple(meta["oracle"]["noise_std"]),
        counts={str(k): int(v) for k, v in meta["oracle"]["counts"].items()},
    )
    cols = _param_columns(registry)
    expected_header = ["topology", "k"] + [c[2] for c in cols] + list(KPI_NAMES) + ["split"]
    samples: list[DesignSample] = []
    splits: list[str] = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_header:
            raise DataError(f"dataset header of {csv_path} does not match its registry")
        for row in reader:
            if len(row) != len(expected_header):
                raise DataError(f"malformed dataset row of length {len(row)}")
            k = int(row[1])
            spec = registry.spec(k)
            offset = 2
            values = []
            for kk, _, _ in cols:
                cell = row[offset]
                offset += 1
                if kk == k:
                    values.append(float(cell))
            if len(values) != spec.n_params:
                raise DataError(f"row for topology {spec.name} has {len(values)} values")
            kpis = np.array([float(row[offset + j]) for j in range(4)])
            split = row[offset + 4]
            if split not in SPLIT_NAMES:
                raise DataError(f"unknown split label {split!r}")
            samples.append(DesignSample(k, np.array(values), kpis))
            splits.append(split)
    return (
        Dataset(samples, splits, cfg, meta["registry_hash"], tuple(meta["split_fractions"])),
        registry,
    )

"""Synthetic oracle and dataset pipeline: formulas, determinism, file formats."""

import numpy as np
import pytest

from motormeta.designspace import DesignSample, default_registry
from motormeta.errors import ConfigError, DataError, ValidationError
from motormeta.surrogate import (
    OracleConfig,
    build_dataset,
    kpi_oracle,
    load_dataset,
    sample_designs,
    write_dataset,
)


def sv_sample_from_features(registry, a, h, alpha, t, l, d, g):
    """SV design whose normalized oracle features take the given values."""
    spec = registry.spec_by_name("sv")
    by_name = {
        "air_gap": a, "magnet_height": h, "magnet_inclination": alpha,
        "stator_tooth_height": t, "iron_length": l, "rotor_outer_diameter": d,
    }
    values = [p.denormalize(by_name.get(p.name, g)) for p in spec.params]
    return DesignSample(spec.id, np.array(values))


def dv_sample_from_features(registry, a, h, alpha, t, l, d, g):
    spec = registry.spec_by_name("dv")
    by_name = {
        "air_gap": a, "magnet_height_1": h, "magnet_height_2": h,
        "magnet_inclination_1": alpha, "magnet_inclination_2": alpha,
        "stator_tooth_height": t, "iron_length": l, "rotor_outer_diameter": d,
    }
    values = [p.denormalize(by_name.get(p.name, g)) for p in spec.params]
    return DesignSample(spec.id, np.array(values))


class TestOracle:
    def test_all_zero_features(self):
        reg = default_registry()
        y = kpi_oracle(reg, sv_sample_from_features(reg, 0, 0, 0, 0, 0, 0, 0))
        assert np.allclose(y, [140.0, 39.2, 15.0, 50.0], atol=1e-12)

    def test_mid_features(self):
        reg = default_registry()
        y = kpi_oracle(reg, sv_sample_from_features(reg, *([0.5] * 7)))
        assert np.allclose(y, [207.5, 72.625, 10.0, 80.0], atol=1e-12)

    def test_dv_torque_offset_is_80h(self):
        reg = default_registry()
        for h in (0.0, 0.3, 1.0):
            feats = dict(a=0.2, h=h, alpha=0.4, t=0.6, l=0.7, d=0.8, g=0.5)
            y_sv = kpi_oracle(reg, sv_sample_from_features(reg, **feats))
            y_dv = kpi_oracle(reg, dv_sample_from_features(reg, **feats))
            assert y_dv[0] - y_sv[0] == pytest.approx(80.0 * h, abs=1e-10)

    def test_out_of_bounds_rejected(self):
        reg = default_registry()
        s = sv_sample_from_features(reg, *([0.5] * 7))
        s.values[0] = 5.0
        with pytest.raises(ValidationError):
            kpi_oracle(reg, s)

    def test_noise_requires_rng(self):
        reg = default_registry()
        with pytest.raises(ConfigError):
            kpi_oracle(reg, sv_sample_from_features(reg, *([0.5] * 7)), noise_std=(1, 1, 1, 1))

    def test_power_cost_tradeoff_has_no_dominating_design(self, rng):
        """Neither the max-power nor the min-cost design dominates a large
        uniform sample (objectives: maximize y2, minimize y4)."""
        n = 100_000
        h, l, d, t, alpha, a, g = (rng.random(n) for _ in range(7))
        delta = rng.integers(0, 2, n).astype(float)
        y1 = 150 + 300 * h * d * l + 50 * np.sin(np.pi * alpha) - 60 * a + 20 * (g - 0.5) + 80 * delta * h
        y2 = 0.35 * y1 * (0.8 + 0.4 * t)
        y4 = 50 + 120 * h * l * d + 30 * t + 40 * delta * h
        top_power = int(np.argmax(y2))
        low_cost = int(np.argmin(y4))
        dominates_all_power = np.all((y2[top_power] >= y2) & (y4[top_power] <= y4))
        dominates_all_cost = np.all((y2[low_cost] >= y2) & (y4[low_cost] <= y4))
        assert not dominates_all_power
        assert not dominates_all_cost

    def test_vectorized_formulas_match_oracle(self, rng):
        # the trade-off test above recomputes the formulas; pin them to kpi_oracle
        reg = default_registry()
        feats = dict(a=0.17, h=0.83, alpha=0.39, t=0.55, l=0.91, d=0.08, g=0.5)
        s = sv_sample_from_features(reg, **feats)
        y = kpi_oracle(reg, s)
        y1 = 150 + 300 * feats["h"] * feats["d"] * feats["l"] + 50 * np.sin(np.pi * feats["alpha"]) \
            - 60 * feats["a"] + 20 * (feats["g"] - 0.5)
        assert y[0] == pytest.approx(y1, abs=1e-10)


class TestSampling:
    def test_zero_count_is_empty(self, small_registry):
        assert sample_designs(small_registry, 1, 0, seed=5) == []

    def test_same_seed_is_identical(self, small_registry):
        a = sample_designs(small_registry, 2, 50, seed=9)
        b = sample_designs(small_registry, 2, 50, seed=9)
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))

    def test_uniform_coverage(self, small_registry):
        samples = sample_designs(small_registry, 1, 10_000, seed=1)
        values = np.stack([s.values for s in samples])
        spec = small_registry.spec(1)
        for i, p in enumerate(spec.params):
            assert values[:, i].min() <= p.minimum + 0.01 * p.span
            assert values[:, i].max() >= p.maximum - 0.01 * p.span


class TestDatasetBuild:
    def test_split_sizes(self, small_registry):
        ds = build_dataset(
            small_registry,
            OracleConfig(seed=2, counts={"sv": 400, "dv": 400}),
            (0.9, 0.05, 0.05),
        )
        assert len(ds.indices("train")) == 720
        assert len(ds.indices("val")) == 40
        assert len(ds.indices("test")) == 40

    def test_default_counts_total(self):
        cfg = OracleConfig()
        assert sum(cfg.counts.values()) == 8000

    def test_deterministic_rebuild(self, small_registry):
        cfg = OracleConfig(seed=11, counts={"sv": 60, "dv": 60})
        a = build_dataset(small_registry, cfg)
        b = build_dataset(small_registry, cfg)
        assert a.splits == b.splits
        for x, y in zip(a.samples, b.samples):
            assert np.array_equal(x.values, y.values)
            assert np.array_equal(x.kpis, y.kpis)

    def test_bad_fractions_rejected(self, small_registry):
        with pytest.raises(ConfigError):
            build_dataset(small_registry, OracleConfig(counts={"sv": 10, "dv": 0}), (0.5, 0.2, 0.2))

    def test_noise_is_seeded_and_nonzero(self, small_registry):
        noisy_cfg = OracleConfig(seed=4, noise_std=(1.0, 1.0, 1.0, 1.0), counts={"sv": 30, "dv": 0})
        clean = build_dataset(small_registry, OracleConfig(seed=4, counts={"sv": 30, "dv": 0}))
        noisy_a = build_dataset(small_registry, noisy_cfg)
        noisy_b = build_dataset(small_registry, noisy_cfg)
        assert not np.array_equal(noisy_a.samples[0].kpis, clean.samples[0].kpis)
        assert all(
            np.array_equal(x.kpis, y.kpis) for x, y in zip(noisy_a.samples, noisy_b.samples)
        )


class TestDatasetFiles:
    def test_write_load_round_trip(self, small_registry, tmp_path):
        ds = build_dataset(small_registry, OracleConfig(seed=6, counts={"sv": 40, "dv": 40}))
        csv_path = tmp_path / "data.csv"
        write_dataset(ds, small_registry, csv_path)
        loaded, registry = load_dataset(csv_path)
        assert registry.content_hash() == small_registry.content_hash()
        assert loaded.splits == ds.splits
        for a, b in zip(loaded.samples, ds.samples):
            assert a.topology_id == b.topology_id
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.kpis, b.kpis)

    def test_rewrites_are_byte_identical(self, small_registry, tmp_path):
        cfg = OracleConfig(seed=8, counts={"sv": 25, "dv": 25})
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_dataset(build_dataset(small_registry, cfg), small_registry, p1)
        write_dataset(build_dataset(small_registry, cfg), small_registry, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_sidecar_is_data_error(self, small_registry, tmp_path):
        ds = build_dataset(small_registry, OracleConfig(seed=1, counts={"sv": 5, "dv": 5}))
        csv_path = tmp_path / "data.csv"
        write_dataset(ds, small_registry, csv_path)
        (tmp_path / "data.json").unlink()
        with pytest.raises(DataError):
            load_dataset(csv_path)

    def test_corrupt_sidecar_is_data_error(self, small_registry, tmp_path):
        ds = build_dataset(small_registry, OracleConfig(seed=1, counts={"sv": 5, "dv": 5}))
        csv_path = tmp_path / "data.csv"
        write_dataset(ds, small_registry, csv_path)
        (tmp_path / "data.json").write_text("{broken")
        with pytest.raises(DataError):
            load_dataset(csv_path)

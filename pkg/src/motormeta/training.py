"""Training loop with early stopping, quality metrics, and the latent sweep."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .designspace import KPI_NAMES, TopologyRegistry
from .errors import AmbiguousTopologyError, ConfigError, DataError, NumericError
from .nn import restore_params, snapshot_params
from .surrogate import Dataset
from .vae import LossBreakdown, VaeModel, model_for_registry

# parameters tracked by the latent sweep: (topology name, parameter name)
SWEEP_TRACKED = (
    ("sv", "air_gap"),
    ("sv", "iron_length"),
    ("sv", "rotor_outer_diameter"),
    ("dv", "stator_tooth_height"),
    ("dv", "iron_length"),
    ("dv", "rotor_outer_diameter"),
)


@dataclass
class TrainConfig:
    epochs: int = 300
    patience: int = 10
    batch_size: int = 40
    lr_start: float = 1e-3
    lr_floor: float = 1e-4
    lr_halve_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ConfigError("epochs, patience and batch_size must be >= 1")
        if self.patience > self.epochs:
            raise ConfigError("patience cannot exceed epochs")
        if not 0.0 < self.lr_floor <= self.lr_start:
            raise ConfigError("need 0 < lr_floor <= lr_start")


@dataclass
class EpochRecord:
    epoch: int
    train: LossBreakdown
    val: LossBreakdown
    lr: float


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)
    initial_val: LossBreakdown | None = None
    best_epoch: int = 0
    stopping_reason: str = ""

    @property
    def best_val_total(self) -> float:
        return self.records[self.best_epoch - 1].val.total if self.records else float("inf")


class TrainingDiverged(NumericError):
    """Raised when a batch loss turns non-finite; carries the partial trace."""

    def __init__(self, message: str, trace: TrainTrace):
        super().__init__(message)
        self.trace = trace


def dataset_matrices(
    registry: TopologyRegistry, dataset: Dataset, split: str
) -> tuple[np.ndarray, np.ndarray]:
    """Unified design matrix and KPI matrix for one split."""
    subset = dataset.subset(split)
    if any(s.kpis is None for s in subset):
        raise DataError(f"split {split!r} contains samples without KPIs")
    p = registry.embed_many(subset)
    y = np.stack([s.kpis for s in subset]) if subset else np.zeros((0, len(KPI_NAMES)))
    return p, y


EVAL_CHUNK = 1024  # keeps conv scratch buffers modest on big splits


def batched_apply(fn, x: np.ndarray, chunk: int = EVAL_CHUNK) -> np.ndarray:
    if x.shape[0] <= chunk:
        return fn(x)
    return np.concatenate([fn(x[i : i + chunk]) for i in range(0, x.shape[0], chunk)])


def evaluate_loss(model: VaeModel, p: np.ndarray, y: np.ndarray) -> LossBreakdown:
    """Deterministic loss (z = latent mean, no sampling noise); no gradients."""
    total = p.shape[0]
    sums = np.zeros(3)
    for i in range(0, total, EVAL_CHUNK):
        pc = p[i : i + EVAL_CHUNK]
        yc = y[i : i + EVAL_CHUNK]
        mean, logvar = model.encode(pc)
        p_hat = model.decode(mean)
        y_hat = model.predict_kpis_normalized(mean)
        y_norm = model.normalize_kpis(yc)
        sums[0] += float(np.sum((pc - p_hat) ** 2))
        sums[1] += float(np.sum((y_norm - y_hat) ** 2))
        sums[2] += float(np.sum(model.kl_per_sample(mean, logvar)))
    recon, kpi, kl = sums / total
    return LossBreakdown(recon=recon, kpi=kpi, kl=kl, total=recon + kpi + model.config.kl_weight * kl)


def train(
    model: VaeModel,
    registry: TopologyRegistry,
    dataset: Dataset,
    cfg: TrainConfig,
) -> TrainTrace:
    """Train in place; on return the model holds the best-validation parameters.

    Mini-batches are reshuffled each epoch from a seeded stream. The learning
    rate halves after `lr_halve_patience` epochs without validation improvement
    (floored at lr_floor) and training stops `patience` epochs after the best
    validation epoch. Fixed (seed, cfg, dataset) reproduce the identical model.
    """
    p_train, y_train = dataset_matrices(registry, dataset, "train")
    p_val, y_val = dataset_matrices(registry, dataset, "val")
    if p_train.shape[0] == 0 or p_val.shape[0] == 0:
        raise DataError("training requires non-empty train and val splits")

    kpi_mean = y_train.mean(axis=0)
    kpi_std = y_train.std(axis=0)
    kpi_std[kpi_std < 1e-12] = 1.0  # constant KPI: leave it unscaled
    model.set_kpi_stats(kpi_mean, kpi_std)

    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11]))
    eps_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 13]))

    trace = TrainTrace()
    trace.initial_val = evaluate_loss(model, p_val, y_val)
    best_val = trace.initial_val.total
    best_snapshot = snapshot_params(model.param_sets())
    best_epoch = 0
    lr = cfg.lr_start
    epochs_since_lr_drop_improve = 0
    n = p_train.shape[0]

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        sums = np.zeros(4)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            try:
                breakdown, _ = model.loss_and_grads(p_train[idx], y_train[idx], rng=eps_rng)
                model.adam_step(lr)
            except NumericError as exc:
                trace.stopping_reason = "diverged"
                trace.best_epoch = best_epoch
                raise TrainingDiverged(str(exc), trace) from exc
            w = len(idx)
            sums += w * np.array([breakdown.recon, breakdown.kpi, breakdown.kl, breakdown.total])
        train_loss = LossBreakdown(*(sums / n))
        val_loss = evaluate_loss(model, p_val, y_val)
        trace.records.append(EpochRecord(epoch=epoch, train=train_loss, val=val_loss, lr=lr))

        if val_loss.total < best_val:
            best_val = val_loss.total
            best_epoch = epoch
            best_snapshot = snapshot_params(model.param_sets())
            epochs_since_lr_drop_improve = 0
        else:
            epochs_since_lr_drop_improve += 1
            if epochs_since_lr_drop_improve >= cfg.lr_halve_patience and lr > cfg.lr_floor:
                lr = max(lr / 2.0, cfg.lr_floor)
                epochs_since_lr_drop_improve = 0
        if epoch - best_epoch >= cfg.patience:
            trace.stopping_reason = "patience"
            break
    else:
        trace.stopping_reason = "epochs"

    restore_params(model.param_sets(), best_snapshot)
    trace.best_epoch = best_epoch
    return trace


# -- metrics -------------------------------------------------------------------


@dataclass
class MetricRow:
    """MAE/RMSE/PCC/MRE for one predicted quantity on one split."""

    label: str
    topology: str
    split: str
    mae: float
    rmse: float
    pcc: float
    mre_pct: float
    n: int
    n_excluded_mre: int = 0


def regression_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float, float, float, int]:
    """(mae, rmse, pcc, mre%, n_excluded_from_mre) between two 1-d arrays."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise ConfigError("metrics need two equal-length non-empty 1-d arrays")
    err = y_pred - y_true
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    st, sp = y_true.std(), y_pred.std()
    if st < 1e-300 or sp < 1e-300:
        pcc = 1.0 if mae == 0.0 else 0.0
    else:
        pcc = float(np.corrcoef(y_true, y_pred)[0, 1])
    mask = np.abs(y_true) >= 1e-9
    excluded = int(np.sum(~mask))
    mre = float(np.mean(np.abs(err[mask]) / np.abs(y_true[mask])) * 100.0) if mask.any() else 0.0
    return mae, rmse, pcc, mre, excluded


def evaluate_kpis(
    model: VaeModel, registry: TopologyRegistry, dataset: Dataset, split: str = "test"
) -> list[MetricRow]:
    """Prediction quality per KPI: oracle truth vs predict(encode-mean)."""
    p, y = dataset_matrices(registry, dataset, split)
    if p.shape[0] == 0:
        raise DataError(f"split {split!r} is empty")
    y_hat = batched_apply(lambda c: model.predict_kpis(model.encode_mean(c)), p)
    rows = []
    for j, name in enumerate(KPI_NAMES):
        mae, rmse, pcc, mre, excl = regression_metrics(y[:, j], y_hat[:, j])
        rows.append(MetricRow(name, "", split, mae, rmse, pcc, mre, p.shape[0], excl))
    return rows


@dataclass
class ReconstructionReport:
    rows: list[MetricRow]
    id_recovery_rate: float
    n_samples: int
    n_id_mismatch: int


def evaluate_reconstruction(
    model: VaeModel, registry: TopologyRegistry, dataset: Dataset, split: str = "test"
) -> ReconstructionReport:
    """Per-parameter reconstruction quality in native units.

    Samples whose reconstructed topology id differs (or cannot be resolved)
    are counted separately and excluded from the per-parameter statistics.
    """
    subset = dataset.subset(split)
    if not subset:
        raise DataError(f"split {split!r} is empty")
    p = registry.embed_many(subset)
    p_hat = batched_apply(lambda c: model.decode(model.encode_mean(c)), p)
    true_vals: dict[int, list[np.ndarray]] = {k: [] for k in registry.ids}
    recon_vals: dict[int, list[np.ndarray]] = {k: [] for k in registry.ids}
    mismatches = 0
    for sample, row in zip(subset, p_hat):
        try:
            recon, _ = registry.extract(row, snap=False)
        except AmbiguousTopologyError:
            mismatches += 1
            continue
        if recon.topology_id != sample.topology_id:
            mismatches += 1
            continue
        true_vals[sample.topology_id].append(sample.values)
        recon_vals[sample.topology_id].append(recon.values)
    rows = []
    for k in registry.ids:
        if not true_vals[k]:
            continue
        spec = registry.spec(k)
        t = np.stack(true_vals[k])
        r = np.stack(recon_vals[k])
        for i, param in enumerate(spec.params):
            mae, rmse, pcc, mre, excl = regression_metrics(t[:, i], r[:, i])
            rows.append(MetricRow(param.name, spec.name, split, mae, rmse, pcc, mre, t.shape[0], excl))
    rate = 1.0 - mismatches / len(subset)
    return ReconstructionReport(rows, rate, len(subset), mismatches)


# -- latent-dimension sweep ------------------------------------------------------


@dataclass
class SweepCell:
    topology: str
    parameter: str
    m: int
    mae: float
    error: str = ""


def latent_sweep(
    registry: TopologyRegistry,
    dataset: Dataset,
    dims: list[int],
    cfg: TrainConfig,
    tracked: tuple[tuple[str, str], ...] = SWEEP_TRACKED,
    model_overrides: dict | None = None,
) -> tuple[list[SweepCell], dict[int, VaeModel]]:
    """Train one model per latent dimension; report test-split MAE per tracked parameter.

    A failing cell records its error and the sweep continues.
    """
    if not dims:
        raise ConfigError("sweep needs at least one latent dimension")
    cells: list[SweepCell] = []
    models: dict[int, VaeModel] = {}
    overrides = model_overrides or {}
    for m in dims:
        try:
            model = model_for_registry(
                registry.n, registry.content_hash(), m=m, seed=cfg.seed, **overrides
            )
            train(model, registry, dataset, cfg)
            report = evaluate_reconstruction(model, registry, dataset, "test")
            by_key = {(r.topology, r.label): r for r in report.rows}
            models[m] = model
            for topo, param in tracked:
                row = by_key.get((topo, param))
                if row is None:
                    cells.append(SweepCell(topo, param, m, float("nan"), "no reconstructed samples"))
                else:
                    cells.append(SweepCell(topo, param, m, row.mae))
        except (NumericError, DataError, ConfigError) as exc:
            for topo, param in tracked:
                cells.append(SweepCell(topo, param, m, float("nan"), str(exc)))
    return cells, models

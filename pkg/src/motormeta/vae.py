"""Joint metamodel: conv encoder -> latent space -> decoder + KPI predictor.

The encoder maps a unified design vector to a latent mean and log-variance,
the reparameterization trick realizes z = mean + exp(0.5*logvar) * eps, the
transposed-conv decoder reconstructs the design vector, and a dense MLP
predicts (z-score normalized) KPIs from the same latent code. The three
networks train jointly on reconstruction MSE + KPI MSE + weighted KL
divergence against a standard-normal prior.

Log-variance rather than a direct sigma output keeps sigma strictly positive.
At inference the deterministic latent mean is used; sampling only happens
during training. Encode/decode/predict are pure functions of (input, params);
forward passes cache activations for backward, so one model instance must not
be trained and queried concurrently (single writer).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericError
from .nn import (
    Activation,
    Conv1d,
    ConvTranspose1d,
    Dense,
    Flatten,
    FusedParams,
    LayerParams,
    Network,
    Reshape,
)

MODEL_FORMAT = "motormeta-vae"
MODEL_VERSION = 1


@dataclass
class VaeConfig:
    """Architecture and loss settings; defaults are the stock desk-scale net."""

    n: int
    m: int = 19
    encoder_channels: tuple[int, ...] = (16, 32, 32)
    conv_kernel: int = 3
    conv_stride: int = 1
    conv_padding: str = "same"
    trunk_width: int = 64
    decoder_reshape_channels: int = 32
    decoder_channels: tuple[int, ...] = (32, 32, 16)
    decoder_dense: int = 64
    mlp_widths: tuple[int, ...] = (64, 64, 32, 32, 16)
    n_kpis: int = 4
    kl_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError(f"latent dimension must be >= 1, got {self.m}")
        if self.n < 2:
            raise ConfigError(f"input dimension must be >= 2, got {self.n}")
        if self.kl_weight < 0:
            raise ConfigError("kl_weight must be >= 0")
        self.encoder_channels = tuple(self.encoder_channels)
        self.decoder_channels = tuple(self.decoder_channels)
        self.mlp_widths = tuple(self.mlp_widths)


@dataclass
class LatentSample:
    """One reparameterized draw: z = mean + exp(0.5*logvar) * eps, exactly."""

    mean: np.ndarray
    logvar: np.ndarray
    eps: np.ndarray
    z: np.ndarray


@dataclass
class LossBreakdown:
    recon: float
    kpi: float
    kl: float
    total: float


def _b64(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(),
    }


def _from_b64(obj: dict) -> np.ndarray:
    data = np.frombuffer(base64.b64decode(obj["data"]), dtype="<f8")
    return data.reshape(obj["shape"]).astype(np.float64)


class VaeModel:
    """Encoder, decoder and KPI head sharing one latent space."""

    def __init__(self, config: VaeConfig, registry_hash: str = ""):
        self.config = config
        self.registry_hash = registry_hash
        self.kpi_mean = np.zeros(config.n_kpis)
        self.kpi_std = np.ones(config.n_kpis)
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7]))
        self.encoder_trunk, trunk_out = self._build_encoder_trunk(rng)
        self.head_mean = Dense(trunk_out, config.m, rng)
        self.head_logvar = Dense(trunk_out, config.m, rng)
        self.decoder = self._build_decoder(rng)
        self.kpi_mlp = self._build_mlp(rng)
        # fail fast on any geometry slip
        self.encoder_trunk.validate_geometry((config.n,))
        out = self.decoder.validate_geometry((config.m,))
        if out != (config.n,):
            raise ConfigError(f"decoder emits {out}, expected ({config.n},)")
        self.kpi_mlp.validate_geometry((config.m,))
        self.fused = FusedParams(self.param_sets())

    # -- construction ---------------------------------------------------------

    def _build_encoder_trunk(self, rng: np.random.Generator) -> tuple[Network, int]:
        cfg = self.config
        layers: list = [Reshape(cfg.n, 1)]
        ch = 1
        length = cfg.n
        for out_ch in cfg.encoder_channels:
            conv = Conv1d(ch, out_ch, cfg.conv_kernel, cfg.conv_stride, cfg.conv_padding, rng)
            layers.append(conv)
            layers.append(Activation("relu"))
            length = conv.output_shape((length, ch))[0]
            ch = out_ch
        layers.append(Flatten())
        layers.append(Dense(length * ch, cfg.trunk_width, rng))
        layers.append(Activation("relu"))
        return Network(layers), cfg.trunk_width

    def _build_decoder(self, rng: np.random.Generator) -> Network:
        cfg = self.config
        layers: list = [
            Dense(cfg.m, cfg.decoder_dense, rng),
            Activation("relu"),
            Dense(cfg.decoder_dense, cfg.decoder_reshape_channels * cfg.n, rng),
            Activation("relu"),
            Reshape(cfg.n, cfg.decoder_reshape_channels),
        ]
        ch = cfg.decoder_reshape_channels
        length = cfg.n
        for out_ch in cfg.decoder_channels:
            layers.append(ConvTranspose1d(ch, out_ch, cfg.conv_kernel, cfg.conv_stride, rng))
            layers.append(Activation("relu"))
            length = (length - 1) * cfg.conv_stride + cfg.conv_kernel
            ch = out_ch
        layers.append(Flatten())
        layers.append(Dense(length * ch, cfg.n, rng))
        layers.append(Activation("linear"))
        return Network(layers)

    def _build_mlp(self, rng: np.random.Generator) -> Network:
        cfg = self.config
        layers: list = []
        width = cfg.m
        for w in cfg.mlp_widths:
            layers.append(Dense(width, w, rng))
            layers.append(Activation("relu"))
            width = w
        layers.append(Dense(width, cfg.n_kpis, rng))
        layers.append(Activation("linear"))
        return Network(layers)

    def param_sets(self) -> list[LayerParams]:
        return (
            self.encoder_trunk.param_sets()
            + [self.head_mean.params, self.head_logvar.params]
            + self.decoder.param_sets()
            + self.kpi_mlp.param_sets()
        )

    def zero_grads(self) -> None:
        self.fused.zero_grads()

    def adam_step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.fused.step(lr, beta1=beta1, beta2=beta2, eps=eps)

    def n_params(self) -> int:
        return sum(p.n_params() for p in self.param_sets())

    # -- inference ------------------------------------------------------------

    def encode(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Latent mean and log-variance for a batch of unified vectors."""
        p = np.asarray(p, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != self.config.n:
            raise DimensionError(f"encode expects [batch, {self.config.n}], got {p.shape}")
        h = self.encoder_trunk.forward(p)
        return self.head_mean.forward(h), self.head_logvar.forward(h)

    def encode_mean(self, p: np.ndarray) -> np.ndarray:
        return self.encode(p)[0]

    def reparameterize(
        self,
        mean: np.ndarray,
        logvar: np.ndarray,
        rng: np.random.Generator | None = None,
        eps: np.ndarray | None = None,
    ) -> LatentSample:
        if mean.shape != logvar.shape:
            raise DimensionError(f"mean {mean.shape} and logvar {logvar.shape} differ")
        if eps is None:
            if rng is None:
                raise ConfigError("reparameterize needs either eps or an rng")
            eps = rng.standard_normal(mean.shape)
        elif eps.shape != mean.shape:
            raise DimensionError(f"eps {eps.shape} does not match mean {mean.shape}")
        z = mean + np.exp(0.5 * logvar) * eps
        return LatentSample(mean=mean, logvar=logvar, eps=eps, z=z)

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Reconstructed unified vectors (linear output) for latent codes."""
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.config.m:
            raise DimensionError(f"decode expects [batch, {self.config.m}], got {z.shape}")
        return self.decoder.forward(z)

    def predict_kpis_normalized(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.config.m:
            raise DimensionError(f"predict expects [batch, {self.config.m}], got {z.shape}")
        return self.kpi_mlp.forward(z)

    def predict_kpis(self, z: np.ndarray) -> np.ndarray:
        """KPI predictions denormalized by the stored training statistics."""
        return self.predict_kpis_normalized(z) * self.kpi_std + self.kpi_mean

    def set_kpi_stats(self, mean: np.ndarray, std: np.ndarray) -> None:
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        if mean.shape != (self.config.n_kpis,) or std.shape != (self.config.n_kpis,):
            raise DimensionError("KPI stats must have one entry per KPI")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std)) and np.all(std > 0)):
            raise NumericError("KPI stats must be finite with std > 0")
        self.kpi_mean = mean
        self.kpi_std = std

    @staticmethod
    def kl_per_sample(mean: np.ndarray, logvar: np.ndarray) -> np.ndarray:
        """Closed-form KL(N(mean, exp(logvar)) || N(0, I)) per batch row."""
        if mean.shape != logvar.shape:
            raise DimensionError(f"mean {mean.shape} and logvar {logvar.shape} differ")
        return -0.5 * np.sum(1.0 + logvar - mean**2 - np.exp(logvar), axis=-1)

    @staticmethod
    def kl_divergence(mean: np.ndarray, logvar: np.ndarray) -> float:
        return float(np.mean(VaeModel.kl_per_sample(mean, logvar)))

    # -- training -------------------------------------------------------------

    def normalize_kpis(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.kpi_mean) / self.kpi_std

    def loss_and_grads(
        self,
        p: np.ndarray,
        y: np.ndarray,
        rng: np.random.Generator | None = None,
        eps: np.ndarray | None = None,
        kl_weight: float | None = None,
    ) -> tuple[LossBreakdown, LatentSample]:
        """Composite loss with gradients staged into every LayerParams buffer.

        recon and kpi are mean-over-batch, sum-over-dims squared errors; the KL
        term regularizes the encoder only. Gradients reach encoder weights
        through all three paths (KL directly, recon and kpi through z).
        Existing gradient buffers are zeroed first: one call, one batch.
        """
        p = np.asarray(p, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] == 0:
            raise DimensionError("loss expects a non-empty batch")
        if y.shape != (p.shape[0], self.config.n_kpis):
            raise DimensionError(f"KPI batch {y.shape} does not match designs {p.shape}")
        beta = self.config.kl_weight if kl_weight is None else kl_weight
        batch = p.shape[0]
        self.zero_grads()

        mean, logvar = self.encode(p)
        latent = self.reparameterize(mean, logvar, rng=rng, eps=eps)
        p_hat = self.decode(latent.z)
        y_norm = self.normalize_kpis(y)
        y_hat = self.predict_kpis_normalized(latent.z)

        recon = float(np.sum((p - p_hat) ** 2)) / batch
        kpi = float(np.sum((y_norm - y_hat) ** 2)) / batch
        kl = self.kl_divergence(mean, logvar)
        total = recon + kpi + beta * kl
        if not np.isfinite(total):
            raise NumericError(
                f"non-finite loss (recon={recon}, kpi={kpi}, kl={kl}); batch aborted"
            )

        # backward: decoder and KPI head both feed dL/dz
        dz = self.decoder.backward(2.0 * (p_hat - p) / batch)
        dz += self.kpi_mlp.backward(2.0 * (y_hat - y_norm) / batch)
        dmean = dz + beta * mean / batch
        dlogvar = dz * (0.5 * np.exp(0.5 * logvar) * latent.eps)
        dlogvar += beta * 0.5 * (np.exp(logvar) - 1.0) / batch
        dh = self.head_mean.backward(dmean) + self.head_logvar.backward(dlogvar)
        self.encoder_trunk.backward(dh)
        return LossBreakdown(recon=recon, kpi=kpi, kl=kl, total=total), latent

    # -- serialization --------------------------------------------------------

    def _named_params(self) -> list[tuple[str, LayerParams]]:
        groups = [
            ("encoder", self.encoder_trunk.param_sets()),
            ("head_mean", [self.head_mean.params]),
            ("head_logvar", [self.head_logvar.params]),
            ("decoder", self.decoder.param_sets()),
            ("kpi_mlp", self.kpi_mlp.param_sets()),
        ]
        out = []
        for prefix, sets in groups:
            for i, ps in enumerate(sets):
                out.append((f"{prefix}.{i}", ps))
        return out

    def save(self, path: str | Path) -> Path:
        """Write a versioned JSON container; round trips are bitwise exact."""
        path = Path(path)
        params = []
        for name, ps in self._named_params():
            entry = {"name": name, "weights": _b64(ps.weights)}
            if ps.biases is not None:
                entry["biases"] = _b64(ps.biases)
            params.append(entry)
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": asdict(self.config),
            "registry_hash": self.registry_hash,
            "kpi_mean": _b64(self.kpi_mean),
            "kpi_std": _b64(self.kpi_std),
            "params": params,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path: str | Path, expected_registry_hash: str | None = None) -> "VaeModel":
        path = Path(path)
        if not path.exists():
            raise DataError(f"model file {path} does not exist")
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"corrupt model file {path}: {exc}") from None
        if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
            raise DataError(f"{path} is not a model file")
        if payload.get("version") != MODEL_VERSION:
            raise DataError(f"unsupported model version {payload.get('version')}")
        if (
            expected_registry_hash is not None
            and payload.get("registry_hash") != expected_registry_hash
        ):
            raise DataError(
                "model was trained against different topology specs "
                f"(hash {payload.get('registry_hash', '')[:12]}... vs "
                f"{expected_registry_hash[:12]}...)"
            )
        try:
            cfg_dict = dict(payload["config"])
            for key in ("encoder_channels", "decoder_channels", "mlp_widths"):
                cfg_dict[key] = tuple(cfg_dict[key])
            config = VaeConfig(**cfg_dict)
            model = cls(config, registry_hash=payload["registry_hash"])
            model.kpi_mean = _from_b64(payload["kpi_mean"])
            model.kpi_std = _from_b64(payload["kpi_std"])
            saved = {entry["name"]: entry for entry in payload["params"]}
            for name, ps in model._named_params():
                entry = saved[name]
                weights = _from_b64(entry["weights"])
                if weights.shape != ps.weights.shape:
                    raise DataError(f"parameter {name} has shape {weights.shape}")
                ps.weights[...] = weights
                if ps.biases is not None:
                    biases = _from_b64(entry["biases"])
                    if biases.shape != ps.biases.shape:
                        raise DataError(f"bias {name} has shape {biases.shape}")
                    ps.biases[...] = biases
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"corrupt model file {path}: {exc}") from None
        return model


def model_for_registry(
    registry_n: int, registry_hash: str, m: int = 19, seed: int = 0, **overrides
) -> VaeModel:
    """Stock model sized to a registry's unified vector length."""
    config = VaeConfig(n=registry_n, m=m, seed=seed, **overrides)
    return VaeModel(config, registry_hash=registry_hash)

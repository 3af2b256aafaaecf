"""Topology registry and the integrated design space.

Each registered machine topology has its own ordered parameter list with box
bounds. Designs of any topology embed into one shared vector of length
n = 1 + sum(n_k): a topology-indicator slot followed by contiguous
per-topology blocks in ascending id order, zero everywhere except the block
belonging to the design's topology. All network-facing values are min-max
normalized to [0, 1]; the indicator is normalized as k/N. Block membership is
decided solely by the indicator, never by zero-detection, so a parameter
sitting at its lower bound (which normalizes to 0) is unambiguous.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousTopologyError, ConfigError, ValidationError

KPI_NAMES = ("y1", "y2", "y3", "y4")
KPI_LABELS = {
    "y1": "maximum torque (Nm)",
    "y2": "maximum power (kW)",
    "y3": "maximum torque ripple (Nm)",
    "y4": "material cost (Euro)",
}


@dataclass(frozen=True)
class ParamSpec:
    """One named design parameter with inclusive box bounds in native units."""

    name: str
    minimum: float
    maximum: float
    unit: str = ""

    def __post_init__(self):
        if not self.minimum < self.maximum:
            raise ConfigError(
                f"parameter {self.name!r}: min {self.minimum} must be < max {self.maximum}"
            )

    @property
    def span(self) -> float:
        return self.maximum - self.minimum

    def normalize(self, value: float) -> float:
        return (value - self.minimum) / self.span

    def denormalize(self, value: float) -> float:
        return self.minimum + value * self.span


@dataclass(frozen=True)
class TopologySpec:
    """A machine topology: integer id >= 1, name, ordered parameter list."""

    id: int
    name: str
    params: tuple[ParamSpec, ...]

    def __post_init__(self):
        if self.id < 1:
            raise ConfigError(f"topology id must be >= 1, got {self.id}")
        if not self.params:
            raise ConfigError(f"topology {self.name!r} has an empty parameter list")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError(f"topology {self.name!r} has duplicate parameter names")

    @property
    def n_params(self) -> int:
        return len(self.params)

    def param_index(self, name: str) -> int:
        for i, p in enumerate(self.params):
            if p.name == name:
                return i
        raise ConfigError(f"topology {self.name!r} has no parameter {name!r}")


@dataclass
class DesignSample:
    """One machine design: topology id plus native-unit parameter values."""

    topology_id: int
    values: np.ndarray
    kpis: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kpis is not None:
            self.kpis = np.asarray(self.kpis, dtype=np.float64)


@dataclass
class BoundViolation:
    """One out-of-bounds parameter with its distance past the bound."""

    param: str
    value: float
    minimum: float
    maximum: float
    distance: float


class TopologyRegistry:
    """Registered topologies plus embed/extract between native and unified space."""

    def __init__(self):
        self._specs: dict[int, TopologySpec] = {}

    def register(self, spec: TopologySpec) -> TopologySpec:
        if spec.id in self._specs:
            raise ConfigError(f"topology id {spec.id} already registered")
        self._specs[spec.id] = spec
        return spec

    @property
    def ids(self) -> list[int]:
        return sorted(self._specs)

    @property
    def n_topologies(self) -> int:
        return len(self._specs)

    @property
    def n(self) -> int:
        """Unified vector length: 1 indicator slot + all parameter blocks."""
        return 1 + sum(s.n_params for s in self._specs.values())

    def spec(self, topology_id: int) -> TopologySpec:
        try:
            return self._specs[topology_id]
        except KeyError:
            raise ConfigError(f"topology id {topology_id} not registered") from None

    def spec_by_name(self, name: str) -> TopologySpec:
        for s in self._specs.values():
            if s.name == name:
                return s
        raise ConfigError(f"no topology named {name!r}")

    def block_slice(self, topology_id: int) -> slice:
        if topology_id not in self._specs:
            raise ConfigError(f"topology id {topology_id} not registered")
        start = 1
        for k in self.ids:
            if k == topology_id:
                return slice(start, start + self._specs[k].n_params)
            start += self._specs[k].n_params
        raise AssertionError("unreachable")

    def _indicator(self, topology_id: int) -> float:
        return topology_id / self.n_topologies

    def validate_bounds(self, sample: DesignSample) -> list[BoundViolation]:
        spec = self.spec(sample.topology_id)
        if sample.values.shape != (spec.n_params,):
            raise ValidationError(
                f"topology {spec.name!r} expects {spec.n_params} values, "
                f"got {sample.values.shape}"
            )
        out = []
        for p, v in zip(spec.params, sample.values):
            if v < p.minimum:
                out.append(BoundViolation(p.name, float(v), p.minimum, p.maximum, p.minimum - float(v)))
            elif v > p.maximum:
                out.append(BoundViolation(p.name, float(v), p.minimum, p.maximum, float(v) - p.maximum))
        return out

    def embed(self, sample: DesignSample) -> np.ndarray:
        """Embed a design into the unified normalized vector.

        The indicator slot holds k/N, the design's block its normalized values,
        and every other block stays zero.
        """
        violations = self.validate_bounds(sample)
        if violations:
            v = violations[0]
            raise ValidationError(
                f"parameter {v.param!r} = {v.value} outside [{v.minimum}, {v.maximum}]"
            )
        spec = self.spec(sample.topology_id)
        vec = np.zeros(self.n)
        vec[0] = self._indicator(sample.topology_id)
        block = self.block_slice(sample.topology_id)
        vec[block] = [p.normalize(v) for p, v in zip(spec.params, sample.values)]
        return vec

    def embed_many(self, samples: list[DesignSample]) -> np.ndarray:
        return np.stack([self.embed(s) for s in samples]) if samples else np.zeros((0, self.n))

    def resolve_topology(self, indicator: float) -> tuple[int, float]:
        """Map a (normalized) indicator value to the nearest registered id.

        Returns (id, distance in id units). Raises AmbiguousTopologyError when
        the nearest id is farther than 0.5 away or two ids are equidistant.
        """
        if not self._specs:
            raise ConfigError("no topologies registered")
        k_est = indicator * self.n_topologies
        dists = sorted((abs(k_est - k), k) for k in self.ids)
        best_d, best_k = dists[0]
        if best_d > 0.5:
            raise AmbiguousTopologyError(
                f"indicator decodes to k={k_est:.4f}, {best_d:.4f} from nearest id {best_k}"
            )
        if len(dists) > 1 and abs(dists[1][0] - best_d) < 1e-12:
            raise AmbiguousTopologyError(
                f"indicator decodes to k={k_est:.4f}, midway between ids "
                f"{best_k} and {dists[1][1]}"
            )
        return best_k, best_d

    def extract(
        self, vector: np.ndarray, snap: bool = False
    ) -> tuple[DesignSample, dict[str, float]]:
        """Inverse of embed, tolerant of approximate decoder outputs.

        Reads only the block selected by the indicator and denormalizes it.
        With snap=True, values are clamped to bounds; the second return value
        maps parameter names to their clamp distance in native units (empty
        when nothing was clamped).
        """
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.n,):
            raise ValidationError(f"expected vector of length {self.n}, got {vector.shape}")
        k, _ = self.resolve_topology(float(vector[0]))
        spec = self.spec(k)
        raw = vector[self.block_slice(k)]
        values = np.array([p.denormalize(v) for p, v in zip(spec.params, raw)])
        clamps: dict[str, float] = {}
        if snap:
            for i, p in enumerate(spec.params):
                clipped = min(max(values[i], p.minimum), p.maximum)
                if clipped != values[i]:
                    clamps[p.name] = abs(values[i] - clipped)
                    values[i] = clipped
        return DesignSample(topology_id=k, values=values), clamps

    # -- serialization ------------------------------------------------------

    def to_config(self) -> dict:
        return {
            "topologies": [
                {
                    "id": s.id,
                    "name": s.name,
                    "params": [
                        {"name": p.name, "min": p.minimum, "max": p.maximum, "unit": p.unit}
                        for p in s.params
                    ],
                }
                for _, s in sorted(self._specs.items())
            ]
        }

    @classmethod
    def from_config(cls, config: dict) -> "TopologyRegistry":
        reg = cls()
        try:
            topologies = config["topologies"]
        except (KeyError, TypeError):
            raise ConfigError("topology config must contain a 'topologies' list") from None
        for t in topologies:
            try:
                params = tuple(
                    ParamSpec(p["name"], float(p["min"]), float(p["max"]), p.get("unit", ""))
                    for p in t["params"]
                )
                reg.register(TopologySpec(int(t["id"]), t["name"], params))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"malformed topology entry: {exc}") from None
        return reg

    @classmethod
    def from_config_file(cls, path) -> "TopologyRegistry":
        try:
            with open(path, encoding="utf-8") as fh:
                config = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read topology config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"topology config {path} is not valid JSON: {exc}") from None
        return cls.from_config(config)

    def content_hash(self) -> str:
        """Stable hash of the registered specs; models record it at train time."""
        blob = json.dumps(self.to_config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _aux(count: int) -> list[ParamSpec]:
    return [ParamSpec(f"aux_{i + 1}", 0.0, 1.0, "-") for i in range(count)]


def default_registry() -> TopologyRegistry:
    """Single-V and Double-V PMSM topologies with their stock bounds.

    Six (SV) and eight (DV) geometry parameters carry physical bounds; the
    remaining slots are dimensionless auxiliary parameters so the topologies
    keep their full 13/18-parameter dimensionality.
    """
    reg = TopologyRegistry()
    reg.register(
        TopologySpec(
            id=1,
            name="sv",
            params=tuple(
                [
                    ParamSpec("air_gap", 0.8, 1.8, "mm"),
                    ParamSpec("magnet_height", 4.5, 6.5, "mm"),
                    ParamSpec("magnet_inclination", 14.0, 36.0, "deg"),
                    ParamSpec("stator_tooth_height", 12.0, 20.0, "mm"),
                    ParamSpec("iron_length", 120.0, 160.0, "mm"),
                    ParamSpec("rotor_outer_diameter", 150.0, 180.0, "mm"),
                ]
                + _aux(7)
            ),
        )
    )
    reg.register(
        TopologySpec(
            id=2,
            name="dv",
            params=tuple(
                [
                    ParamSpec("air_gap", 0.8, 1.8, "mm"),
                    ParamSpec("magnet_height_1", 4.5, 6.5, "mm"),
                    ParamSpec("magnet_inclination_1", 20.0, 40.0, "deg"),
                    ParamSpec("magnet_height_2", 3.7, 5.6, "mm"),
                    ParamSpec("magnet_inclination_2", 18.0, 35.0, "deg"),
                    ParamSpec("stator_tooth_height", 10.0, 24.0, "mm"),
                    ParamSpec("iron_length", 120.0, 160.0, "mm"),
                    ParamSpec("rotor_outer_diameter", 150.0, 180.0, "mm"),
                ]
                + _aux(10)
            ),
        )
    )
    return reg

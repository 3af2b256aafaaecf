"""Plot-ready CSV emitters, run manifests, and checksum helpers.

Floats are written with repr so identical runs produce byte-identical files;
the manifest is written atomically and last, so a partial run leaves none.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .designspace import KPI_NAMES, DesignSample, TopologyRegistry
from .errors import DataError
from .surrogate import _param_columns
from .training import MetricRow, SweepCell, TrainTrace

MANIFEST_FORMAT = "motormeta-manifest"


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str | Path,
    command: str,
    config: dict,
    seed: int,
    inputs: list[str | Path],
    outputs: list[str | Path],
    registry_hash: str,
    wall_clock_s: float,
) -> Path:
    """Atomically write manifest_<command>.json listing artifact checksums."""
    out_dir = Path(out_dir)
    payload = {
        "format": MANIFEST_FORMAT,
        "command": command,
        "config": config,
        "seed": seed,
        "registry_hash": registry_hash,
        "inputs": [str(p) for p in inputs],
        "outputs": [{"path": str(p), "sha256": sha256_file(p)} for p in outputs],
        "wall_clock_s": wall_clock_s,
    }
    path = out_dir / f"manifest_{command}.json"
    tmp = path.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def verify_manifest(path: str | Path) -> list[str]:
    """Re-hash every output listed in a manifest; returns mismatched paths."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MANIFEST_FORMAT:
        raise DataError(f"{path} is not a run manifest")
    bad = []
    for entry in payload["outputs"]:
        if not Path(entry["path"]).exists() or sha256_file(entry["path"]) != entry["sha256"]:
            bad.append(entry["path"])
    return bad


# -- specific emitters ----------------------------------------------------------


def write_trace_csv(path: str | Path, trace: TrainTrace) -> Path:
    header = [
        "epoch",
        "lr",
        "train_recon",
        "train_kpi",
        "train_kl",
        "train_total",
        "val_recon",
        "val_kpi",
        "val_kl",
        "val_total",
    ]
    rows: list[list] = []
    if trace.initial_val is not None:
        iv = trace.initial_val
        rows.append([0, "", "", "", "", "", iv.recon, iv.kpi, iv.kl, iv.total])
    for r in trace.records:
        rows.append(
            [
                r.epoch,
                r.lr,
                r.train.recon,
                r.train.kpi,
                r.train.kl,
                r.train.total,
                r.val.recon,
                r.val.kpi,
                r.val.kl,
                r.val.total,
            ]
        )
    return write_csv(path, header, rows)


def write_metrics_csv(path: str | Path, rows: list[MetricRow]) -> Path:
    header = ["label", "topology", "split", "mae", "rmse", "pcc", "mre_pct", "n", "n_excluded_mre"]
    return write_csv(
        path,
        header,
        [
            [r.label, r.topology, r.split, r.mae, r.rmse, r.pcc, r.mre_pct, r.n, r.n_excluded_mre]
            for r in rows
        ],
    )


def write_sweep_csv(path: str | Path, cells: list[SweepCell]) -> Path:
    header = ["topology", "parameter", "m", "mae", "error"]
    return write_csv(
        path, header, [[c.topology, c.parameter, c.m, c.mae, c.error] for c in cells]
    )


def write_archive_csv(
    path: str | Path,
    registry: TopologyRegistry,
    designs: list[DesignSample],
    predicted_kpis: np.ndarray,
    objectives: np.ndarray,
    ranks: list[int] | None = None,
) -> Path:
    """Pareto archive rows: decoded native parameters, predicted KPIs, objectives."""
    cols = _param_columns(registry)
    n_obj = objectives.shape[1]
    header = (
        ["topology", "k"]
        + [c[2] for c in cols]
        + list(KPI_NAMES)
        + [f"objective{j + 1}" for j in range(n_obj)]
        + ["rank"]
    )
    rows = []
    for i, design in enumerate(designs):
        spec = registry.spec(design.topology_id)
        row: list = [spec.name, design.topology_id]
        for k, pi, _ in cols:
            row.append(float(design.values[pi]) if k == design.topology_id else "")
        row.extend(float(v) for v in predicted_kpis[i])
        row.extend(float(v) for v in objectives[i])
        row.append(0 if ranks is None else ranks[i])
        rows.append(row)
    return write_csv(path, header, rows)


def read_archive_csv(
    path: str | Path, registry: TopologyRegistry
) -> tuple[list[DesignSample], np.ndarray, np.ndarray]:
    """Load archive designs, predicted KPIs, and objective values."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"archive file {path} does not exist")
    cols = _param_columns(registry)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["topology", "k"]:
            raise DataError(f"{path} is not an archive CSV")
        expected_prefix = ["topology", "k"] + [c[2] for c in cols] + list(KPI_NAMES)
        if header[: len(expected_prefix)] != expected_prefix:
            raise DataError(f"archive header of {path} does not match the registry")
        n_obj = len(header) - len(expected_prefix) - 1
        if n_obj < 2 or header[-1] != "rank":
            raise DataError(f"archive header of {path} is missing objective/rank columns")
        designs: list[DesignSample] = []
        kpis: list[list[float]] = []
        objs: list[list[float]] = []
        for row in reader:
            k = int(row[1])
            spec = registry.spec(k)
            offset = 2
            values = []
            for kk, _, _ in cols:
                if kk == k:
                    values.append(float(row[offset]))
                offset += 1
            if len(values) != spec.n_params:
                raise DataError(f"archive row for {spec.name} has {len(values)} values")
            kpis.append([float(row[offset + j]) for j in range(4)])
            objs.append([float(row[offset + 4 + j]) for j in range(n_obj)])
            designs.append(DesignSample(k, np.array(values)))
    if not designs:
        raise DataError(f"archive {path} is empty")
    return designs, np.array(kpis), np.array(objs)


def write_validation_csv(path: str | Path, rows: list[dict]) -> Path:
    header = ["design", "topology", "kpi", "oracle", "prediction", "mre_pct"]
    return write_csv(
        path,
        header,
        [[r["design"], r["topology"], r["kpi"], r["oracle"], r["prediction"], r["mre_pct"]] for r in rows],
    )

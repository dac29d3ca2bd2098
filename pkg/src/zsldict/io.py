"""DMAT text matrices, dataset manifests and model directories."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .core_types import DenseMatrix, Hyperparams, JedmModel, SeenDataset, UnseenDataset, dense

MODEL_FORMAT = "tstd-model/1"


class ManifestError(ValueError):
    """A manifest is malformed or references a missing file."""

    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key


def format_dmat(M) -> str:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("DMAT holds 2-D matrices only")
    # repr() of a Python float is the shortest string that round-trips exactly
    lines = [f"dmat {M.shape[0]} {M.shape[1]}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in M)
    return "\n".join(lines) + "\n"


def parse_dmat(text: str, source: str = "<string>") -> DenseMatrix:
    rows = None
    cols = None
    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if rows is None:
            parts = line.split()
            if len(parts) != 3 or parts[0] != "dmat":
                raise ValueError(f"{source}:{lineno}: expected header 'dmat <rows> <cols>'")
            rows, cols = int(parts[1]), int(parts[2])
            continue
        entries = line.split()
        if len(entries) != cols:
            raise ValueError(f"{source}:{lineno}: expected {cols} entries, found {len(entries)}")
        values.append([float(v) for v in entries])
    if rows is None:
        raise ValueError(f"{source}: missing DMAT header")
    if len(values) != rows:
        raise ValueError(f"{source}: header declares {rows} rows, found {len(values)}")
    return dense(np.array(values, dtype=np.float64).reshape(rows, cols), source)


def write_dmat(path, M) -> None:
    Path(path).write_text(format_dmat(M), encoding="utf-8")


def read_dmat(path) -> DenseMatrix:
    path = Path(path)
    return parse_dmat(path.read_text(encoding="utf-8"), str(path))


def _read_names(path: Path) -> list[str]:
    return [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]


def _resolve(manifest: dict, key: str, base: Path, required: bool = True) -> Optional[Path]:
    if key not in manifest:
        if required:
            raise ManifestError(f"manifest is missing key '{key}'", key)
        return None
    path = base / manifest[key]
    if not path.exists():
        raise ManifestError(f"manifest key '{key}' points to missing file {path}", key)
    return path


def _load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest {path} does not exist", "manifest")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}", "manifest") from exc
    if not isinstance(manifest, dict):
        raise ManifestError("manifest must be a JSON object", "manifest")
    if "classes" not in manifest:
        raise ManifestError("manifest is missing key 'classes'", "classes")
    return manifest, path.parent


def load_seen(path) -> SeenDataset:
    manifest, base = _load_manifest(path)
    X = read_dmat(_resolve(manifest, "features", base))
    A = read_dmat(_resolve(manifest, "embeddings", base))
    names = list(manifest["classes"])
    index = {name: c for c, name in enumerate(names)}
    labels = []
    for pos, name in enumerate(_read_names(_resolve(manifest, "labels", base))):
        if name not in index:
            raise ManifestError(f"instance {pos} has unknown class '{name}'", "labels")
        labels.append(index[name])
    if len(labels) != X.shape[1]:
        raise ManifestError(f"{len(labels)} labels for {X.shape[1]} feature columns", "labels")
    if len(names) != A.shape[1]:
        raise ManifestError(f"{len(names)} classes for {A.shape[1]} embedding columns", "classes")
    return SeenDataset.from_labels(X, labels, A, names)


def load_unseen(path) -> UnseenDataset:
    """Unseen manifests share the seen layout; ``labels`` is optional ground truth."""
    manifest, base = _load_manifest(path)
    X = read_dmat(_resolve(manifest, "features", base))
    A = read_dmat(_resolve(manifest, "embeddings", base))
    names = list(manifest["classes"])
    if len(names) != A.shape[1]:
        raise ManifestError(f"{len(names)} classes for {A.shape[1]} embedding columns", "classes")
    truth = None
    label_path = _resolve(manifest, "labels", base, required=False)
    if label_path is not None:
        index = {name: c for c, name in enumerate(names)}
        try:
            truth = [index[name] for name in _read_names(label_path)]
        except KeyError as exc:
            raise ManifestError(f"unknown class {exc} in truth labels", "labels") from exc
        if len(truth) != X.shape[1]:
            raise ManifestError(f"{len(truth)} labels for {X.shape[1]} feature columns", "labels")
    return UnseenDataset.build(X, A, names, truth)


def write_dataset(directory, X, A, class_names, labels=None, stem: str = "data") -> Path:
    """Write DMAT files plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_dmat(directory / f"{stem}_features.dmat", X)
    write_dmat(directory / f"{stem}_embeddings.dmat", A)
    manifest = {
        "features": f"{stem}_features.dmat",
        "embeddings": f"{stem}_embeddings.dmat",
        "classes": list(class_names),
    }
    if labels is not None:
        (directory / f"{stem}_labels.txt").write_text(
            "".join(f"{class_names[c]}\n" for c in labels), encoding="utf-8")
        manifest["labels"] = f"{stem}_labels.txt"
    path = directory / f"{stem}.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def save_model(model: JedmModel, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_dmat(directory / "D_s.dmat", model.D)
    write_dmat(directory / "V.dmat", model.V)
    meta = {
        "format": MODEL_FORMAT,
        "hyperparams": model.hyper.to_dict(),
        "latent_dim": model.d,
        "seed": model.seed,
        "objective_trace": list(model.objective_trace),
    }
    (directory / "model.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return directory


def load_model(directory) -> JedmModel:
    directory = Path(directory)
    meta_path = directory / "model.json"
    if not meta_path.exists():
        raise ManifestError(f"{directory} is not a model directory (no model.json)", "model")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format") != MODEL_FORMAT:
        raise ManifestError(f"unsupported model format {meta.get('format')!r}", "format")
    return JedmModel(
        D=read_dmat(directory / "D_s.dmat"),
        V=read_dmat(directory / "V.dmat"),
        hyper=Hyperparams.from_dict(meta["hyperparams"]),
        objective_trace=tuple(meta["objective_trace"]),
        seed=int(meta["seed"]),
    )

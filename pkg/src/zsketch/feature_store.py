"""Feature dataset ingestion, validation, and the seen/unseen split.

A store is described on disk by a CSV manifest with the header
``id,modality,label,features_path,offset,count`` plus a JSON sidecar
(same path with a ``.json`` suffix instead of the manifest's) that pins
the feature dimension and the class order.  Feature payloads are either
text CSV (one row of decimal floats per instance, ``offset`` = row
index) or raw little-endian float32 binary (``offset``/``count`` in
float elements).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyStoreError,
    MissingFileError,
    NonFiniteValueError,
    SplitError,
    StoreError,
    UnknownClassError,
    UnknownModalityError,
)

SKETCH = "sketch"
IMAGE = "image"
MODALITIES = (SKETCH, IMAGE)

MANIFEST_HEADER = ["id", "modality", "label", "features_path", "offset", "count"]


@dataclass(frozen=True)
class Instance:
    """One sketch or image sample."""

    id: str
    modality: str
    label: str
    features: np.ndarray  # float64, read-only

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if not np.all(np.isfinite(feats)):
            raise NonFiniteValueError(
                f"instance {self.id!r} has non-finite feature values"
            )
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        if self.modality not in MODALITIES:
            raise UnknownModalityError(
                f"instance {self.id!r} has unknown modality {self.modality!r}"
            )


class FeatureStore:
    """Immutable collection of instances with a fixed class order.

    ``class_set`` order is authoritative: classifier label indices and
    split bookkeeping all derive from it.
    """

    def __init__(
        self,
        instances: Sequence[Instance],
        class_set: Sequence[str],
        dim: int | None = None,
        featurizer_meta: dict | None = None,
    ):
        instances = list(instances)
        if not instances:
            raise EmptyStoreError("empty store: no instances")
        dims = {inst.features.shape[0] for inst in instances}
        if dim is None:
            dim = dims.pop() if len(dims) == 1 else None
        if dim is None or dims - {dim}:
            raise DimensionMismatchError(
                f"inconsistent feature dimensions: {sorted(dims)} (declared {dim})"
            )
        classes = list(class_set)
        known = set(classes)
        for inst in instances:
            if inst.label not in known:
                raise UnknownClassError(
                    f"instance {inst.id!r} has label {inst.label!r} "
                    f"not in class set"
                )
        ids = [inst.id for inst in instances]
        if len(set(ids)) != len(ids):
            raise StoreError("duplicate instance ids in store")

        self.instances: tuple[Instance, ...] = tuple(instances)
        self.class_set: tuple[str, ...] = tuple(classes)
        self.dim: int = dim
        self.featurizer_meta = featurizer_meta
        self._matrix = np.stack([inst.features for inst in instances])
        self._matrix.setflags(write=False)
        self._by_id = {inst.id: i for i, inst in enumerate(instances)}
        # Test instrumentation: callable receiving each accessed index list.
        self._access_recorder: Callable[[Sequence[int]], None] | None = None

    def __len__(self) -> int:
        return len(self.instances)

    def index_of(self, instance_id: str) -> int:
        return self._by_id[instance_id]

    def set_access_recorder(self, recorder: Callable[[Sequence[int]], None] | None):
        """Install a hook that observes every ``feature_matrix`` gather."""
        self._access_recorder = recorder

    def feature_matrix(self, indices: Sequence[int]) -> np.ndarray:
        """Gather feature rows; the only sanctioned bulk feature access."""
        idx = np.asarray(indices, dtype=np.intp)
        if self._access_recorder is not None:
            self._access_recorder(idx.tolist())
        return self._matrix[idx]

    def indices_where(
        self, modality: str | None = None, labels: Iterable[str] | None = None
    ) -> list[int]:
        lbl = set(labels) if labels is not None else None
        out = []
        for i, inst in enumerate(self.instances):
            if modality is not None and inst.modality != modality:
                continue
            if lbl is not None and inst.label not in lbl:
                continue
            out.append(i)
        return out

    def label_index(self, label: str) -> int:
        return self.class_set.index(label)


@dataclass(frozen=True)
class SplitView:
    """Disjoint seen/unseen class partition with instance index lists."""

    seen_classes: tuple[str, ...]
    unseen_classes: tuple[str, ...]
    train_instances: tuple[int, ...]
    test_instances: tuple[int, ...]

    def __post_init__(self):
        if set(self.seen_classes) & set(self.unseen_classes):
            raise SplitError("seen and unseen classes overlap")


def make_split(store: FeatureStore, unseen: Iterable[str]) -> SplitView:
    """Partition the store into seen (train) and unseen (test) classes.

    Deterministic: class order follows ``store.class_set``, instance
    order follows the store.
    """
    unseen_set = set(unseen)
    if not unseen_set:
        raise SplitError("unseen class set is empty")
    unknown = unseen_set - set(store.class_set)
    if unknown:
        raise SplitError(f"unseen classes not in store: {sorted(unknown)}")
    if unseen_set == set(store.class_set):
        raise SplitError("unseen classes cover the whole store; nothing to train on")

    seen = tuple(c for c in store.class_set if c not in unseen_set)
    unseen_ordered = tuple(c for c in store.class_set if c in unseen_set)
    train = tuple(
        i for i, inst in enumerate(store.instances) if inst.label not in unseen_set
    )
    test = tuple(
        i for i, inst in enumerate(store.instances) if inst.label in unseen_set
    )
    return SplitView(seen, unseen_ordered, train, test)


def _sidecar_path(manifest_path: Path) -> Path:
    return manifest_path.with_suffix(".json")


def _read_csv_payload_rows(path: Path) -> list[np.ndarray]:
    rows = []
    with open(path, newline="") as fh:
        for line in csv.reader(fh):
            if not line:
                continue
            rows.append(np.array([float(v) for v in line], dtype=np.float64))
    return rows


def load_store(manifest_path: str | Path) -> FeatureStore:
    """Load and validate a feature store from its manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFileError(f"manifest not found: {manifest_path}")
    sidecar = _sidecar_path(manifest_path)
    if not sidecar.exists():
        raise MissingFileError(f"manifest sidecar not found: {sidecar}")
    with open(sidecar) as fh:
        meta = json.load(fh)
    dim = int(meta["dim"])
    classes = list(meta["classes"])
    featurizer_meta = meta.get("featurizer")

    base = manifest_path.parent
    csv_payload_cache: dict[Path, list[np.ndarray]] = {}
    instances: list[Instance] = []
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise MissingFileError(
                f"manifest header {reader.fieldnames} != {MANIFEST_HEADER}"
            )
        for row in reader:
            modality = row["modality"]
            if modality not in MODALITIES:
                raise UnknownModalityError(
                    f"row {row['id']!r}: unknown modality tag {modality!r}"
                )
            payload = base / row["features_path"]
            if not payload.exists():
                raise MissingFileError(f"feature payload not found: {payload}")
            offset = int(row["offset"])
            count = int(row["count"])
            if payload.suffix == ".csv":
                if payload not in csv_payload_cache:
                    csv_payload_cache[payload] = _read_csv_payload_rows(payload)
                rows = csv_payload_cache[payload]
                if offset >= len(rows):
                    raise MissingFileError(
                        f"row {row['id']!r}: payload row {offset} past end of {payload}"
                    )
                feats = rows[offset]
                if feats.shape[0] != count:
                    raise DimensionMismatchError(
                        f"row {row['id']!r}: payload row has {feats.shape[0]} values,"
                        f" manifest says {count}"
                    )
            else:
                raw = np.fromfile(payload, dtype="<f4")
                if offset + count > raw.shape[0]:
                    raise MissingFileError(
                        f"row {row['id']!r}: offset/count past end of {payload}"
                    )
                feats = raw[offset : offset + count].astype(np.float64)
            if feats.shape[0] != dim:
                raise DimensionMismatchError(
                    f"row {row['id']!r}: feature dim {feats.shape[0]} != store dim {dim}"
                )
            if not np.all(np.isfinite(feats)):
                raise NonFiniteValueError(
                    f"row {row['id']!r}: non-finite feature value"
                )
            instances.append(Instance(row["id"], modality, row["label"], feats))

    if not instances:
        raise EmptyStoreError(f"empty store: {manifest_path} has no rows")
    return FeatureStore(instances, classes, dim, featurizer_meta=featurizer_meta)


def save_store(store: FeatureStore, out_dir: str | Path, name: str = "manifest"):
    """Write manifest + sidecar + one CSV payload per modality.

    Text payloads round-trip float64 bit-exactly (shortest ``repr``),
    so ``load_store(save_store(s)) == s`` on features.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload_names = {m: f"features_{m}.csv" for m in MODALITIES}
    row_counters = {m: 0 for m in MODALITIES}
    payload_files = {}
    try:
        for m in MODALITIES:
            payload_files[m] = open(out_dir / payload_names[m], "w", newline="")
        with open(out_dir / f"{name}.csv", "w", newline="") as mh:
            writer = csv.writer(mh)
            writer.writerow(MANIFEST_HEADER)
            for inst in store.instances:
                m = inst.modality
                payload_files[m].write(
                    ",".join(repr(float(v)) for v in inst.features) + "\n"
                )
                writer.writerow(
                    [inst.id, m, inst.label, payload_names[m],
                     row_counters[m], store.dim]
                )
                row_counters[m] += 1
    finally:
        for fh in payload_files.values():
            fh.close()
    meta = {"dim": store.dim, "classes": list(store.class_set)}
    if store.featurizer_meta is not None:
        meta["featurizer"] = store.featurizer_meta
    with open(out_dir / f"{name}.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    return out_dir / f"{name}.csv"

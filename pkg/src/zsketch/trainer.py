"""Cross-triplet construction, balanced batching, and the training loop.

Training alternates mini-batch gradient descent over the four loss
terms (``round_robin``, one term per batch in the order cpl, iii, ce,
dl) or sums them (``joint``).  Everything is seeded and deterministic:
the same config and seed reproduce a bit-identical checkpoint.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import net
from .errors import (
    BatchingError,
    CheckpointError,
    LossInputError,
    TrainingDivergedError,
    TripletBuildError,
    VariantMismatchError,
)
from .feature_store import FeatureStore, IMAGE, SKETCH, SplitView
from .losses import LossConfig, LossReport, batch_triplet_loss, ce_loss, decoder_loss, projection_loss, total_loss
from .net import Affine, EncoderParams, decode, decode_backward, init_affine, init_encoder
from .semantics import (
    SemanticProjection,
    SemanticTable,
    init_projection,
    project_matrix,
    project_matrix_backward,
)

CHECKPOINT_MAGIC = b"ZSXM1\n"
VARIANTS = ("fixed300", "latent128")
SCHEDULES = ("round_robin", "joint")
ROUND_ROBIN_ORDER = ("cpl", "iii", "ce", "dl")


@dataclass(frozen=True)
class Triplet:
    """Anchor + cross-modal positive/negative, all store indices."""

    anchor_idx: int
    positive_idx: int
    negative_idx: int
    anchor_modality: str


@dataclass(frozen=True)
class TrainConfig:
    triplets_per_anchor_type: int = 14000
    batch_size: int = 64
    learning_rate: float = 0.02
    max_epochs: int = 12
    convergence_eps: float = 1e-4
    seed: int = 0
    variant: str = "fixed300"
    latent_dim: int = 128
    latent_hidden_dim: int | None = None
    hidden_dims: tuple[int, ...] = net.HIDDEN_DIMS
    schedule: str = "round_robin"
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if self.batch_size % 2 or self.batch_size < 2:
            raise ValueError("batch_size must be even and >= 2 (balanced halves)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be > 0")
        if self.triplets_per_anchor_type < 1:
            raise ValueError("triplets_per_anchor_type must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        """Strict parse: unknown keys are rejected."""
        data = dict(data)
        loss_data = data.pop("loss", None)
        known = set(cls.__dataclass_fields__) - {"loss"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "hidden_dims" in data:
            data["hidden_dims"] = tuple(data["hidden_dims"])
        loss = LossConfig()
        if loss_data is not None:
            loss_known = {"margin", "enabled", "weights"}
            bad = set(loss_data) - loss_known
            if bad:
                raise ValueError(f"unknown loss config keys: {sorted(bad)}")
            loss = LossConfig(
                margin=loss_data.get("margin", 1.0),
                enabled=frozenset(loss_data.get("enabled", list(ROUND_ROBIN_ORDER))),
                weights=dict(loss_data.get("weights", {})),
            )
        return cls(loss=loss, **data)

    def to_dict(self) -> dict:
        return {
            "triplets_per_anchor_type": self.triplets_per_anchor_type,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "convergence_eps": self.convergence_eps,
            "seed": self.seed,
            "variant": self.variant,
            "latent_dim": self.latent_dim,
            "latent_hidden_dim": self.latent_hidden_dim,
            "hidden_dims": list(self.hidden_dims),
            "schedule": self.schedule,
            "loss": {
                "margin": self.loss.margin,
                "enabled": sorted(self.loss.enabled),
                "weights": dict(self.loss.weights),
            },
        }


@dataclass
class TrainedModel:
    encoder_s: EncoderParams
    encoder_i: EncoderParams
    dec_s: Affine
    dec_i: Affine
    classifier: Affine
    projection: SemanticProjection | None
    semantic_classes: list[str]
    semantic_matrix: np.ndarray  # base table snapshot, rows follow semantic_classes
    seen_classes: list[str]
    config: TrainConfig
    featurizer_meta: dict | None = None
    final_report: LossReport = field(default_factory=LossReport)
    steps: int = 0

    @property
    def d_in(self) -> int:
        return self.encoder_s.d_in

    @property
    def d_out(self) -> int:
        return self.encoder_s.d_out


# ---------------------------------------------------------------------------
# triplets and batches

def build_triplets(
    split: SplitView, store: FeatureStore, n_per_type: int, seed: int
) -> list[Triplet]:
    """Sample n_per_type sketch-anchored plus n_per_type image-anchored
    cross triplets over the seen classes, uniformly and deterministically."""
    rng = np.random.default_rng(seed)
    seen = list(split.seen_classes)
    train_set = set(split.train_instances)
    by_mod_class: dict[str, dict[str, list[int]]] = {SKETCH: {}, IMAGE: {}}
    for idx in split.train_instances:
        inst = store.instances[idx]
        by_mod_class[inst.modality].setdefault(inst.label, []).append(idx)
    for c in seen:
        for m in (SKETCH, IMAGE):
            if not by_mod_class[m].get(c):
                raise TripletBuildError(
                    f"seen class {c!r} has no {m} instances; cannot form triplets"
                )

    triplets: list[Triplet] = []
    for anchor_mod, other_mod in ((SKETCH, IMAGE), (IMAGE, SKETCH)):
        anchor_pool = np.array(
            [i for i in split.train_instances
             if store.instances[i].modality == anchor_mod],
            dtype=np.intp,
        )
        pos_buckets = {c: np.array(by_mod_class[other_mod][c], dtype=np.intp)
                       for c in seen}
        neg_buckets = {}
        for c in seen:
            neg_buckets[c] = np.concatenate(
                [pos_buckets[c2] for c2 in seen if c2 != c]
            )
        anchors = rng.choice(anchor_pool, size=n_per_type, replace=True)
        labels = [store.instances[a].label for a in anchors]
        positives = np.empty(n_per_type, dtype=np.intp)
        negatives = np.empty(n_per_type, dtype=np.intp)
        for c in seen:
            mask = np.array([lbl == c for lbl in labels])
            k = int(mask.sum())
            if k == 0:
                continue
            positives[mask] = pos_buckets[c][rng.integers(0, len(pos_buckets[c]), k)]
            negatives[mask] = neg_buckets[c][rng.integers(0, len(neg_buckets[c]), k)]
        triplets.extend(
            Triplet(int(a), int(p), int(n), anchor_mod)
            for a, p, n in zip(anchors, positives, negatives)
        )
    assert all(t.anchor_idx in train_set for t in triplets)
    return triplets


def make_batches(
    triplets: list[Triplet], batch_size: int, rng: np.random.Generator
) -> list[list[Triplet]]:
    """Shuffled balanced batches: batch_size/2 of each anchor type.

    The trailing partial batch is dropped.
    """
    if batch_size % 2:
        raise BatchingError("batch_size must be even")
    half = batch_size // 2
    sa = [t for t in triplets if t.anchor_modality == SKETCH]
    ia = [t for t in triplets if t.anchor_modality == IMAGE]
    if len(sa) < half or len(ia) < half:
        raise BatchingError(
            f"need {half} triplets per anchor type, have {len(sa)}/{len(ia)}"
        )
    sa = [sa[i] for i in rng.permutation(len(sa))]
    ia = [ia[i] for i in rng.permutation(len(ia))]
    n_batches = min(len(sa), len(ia)) // half
    return [
        sa[b * half : (b + 1) * half] + ia[b * half : (b + 1) * half]
        for b in range(n_batches)
    ]


# ---------------------------------------------------------------------------
# one training step, shared with the gradient-check tests

@dataclass
class BatchView:
    """Row bookkeeping for one triplet batch.

    ``sketch_store_idx`` / ``image_store_idx`` are the unique store
    indices embedded this step; all ``*_rows`` index into those row
    spaces.  Pair rows are the class-matched (sketch, image) couples:
    anchor+positive of every triplet.
    """

    sketch_store_idx: np.ndarray
    image_store_idx: np.ndarray
    sa_rows: tuple[np.ndarray, np.ndarray, np.ndarray]
    ia_rows: tuple[np.ndarray, np.ndarray, np.ndarray]
    pair_s_rows: np.ndarray
    pair_i_rows: np.ndarray


def assemble_batch(batch: list[Triplet]) -> BatchView:
    sa = [t for t in batch if t.anchor_modality == SKETCH]
    ia = [t for t in batch if t.anchor_modality == IMAGE]
    sketch_ids = np.array(
        [t.anchor_idx for t in sa]
        + [t.positive_idx for t in ia] + [t.negative_idx for t in ia],
        dtype=np.intp,
    )
    image_ids = np.array(
        [t.positive_idx for t in sa] + [t.negative_idx for t in sa]
        + [t.anchor_idx for t in ia],
        dtype=np.intp,
    )
    uniq_s, inv_s = np.unique(sketch_ids, return_inverse=True)
    uniq_i, inv_i = np.unique(image_ids, return_inverse=True)
    ns, ni = len(sa), len(ia)
    sa_rows = (inv_s[:ns], inv_i[:ns], inv_i[ns : 2 * ns])
    ia_rows = (inv_i[2 * ns :], inv_s[ns : ns + ni], inv_s[ns + ni :])
    pair_s_rows = np.concatenate([sa_rows[0], ia_rows[1]])
    pair_i_rows = np.concatenate([sa_rows[1], ia_rows[0]])
    return BatchView(uniq_s, uniq_i, sa_rows, ia_rows, pair_s_rows, pair_i_rows)


def compute_batch_gradients(
    model: TrainedModel,
    view: BatchView,
    x_s: np.ndarray,
    x_i: np.ndarray,
    y_s: np.ndarray,
    y_i: np.ndarray,
    seen_semantic_base: np.ndarray,
    loss_cfg: LossConfig,
    update_terms: frozenset[str] | None = None,
    update_running: bool = True,
) -> tuple[LossReport, dict[str, np.ndarray]]:
    """Forward both encoders on a batch, evaluate the enabled loss terms,
    and chain gradients back to every trainable parameter.

    Values are reported for all enabled terms; gradients are merged over
    ``update_terms`` (defaults to all enabled).  Pure apart from the
    optional running-statistics update, so finite-difference probes can
    call it repeatedly.
    """
    if update_terms is None:
        update_terms = loss_cfg.enabled
    v_s, cache_s = net.forward(model.encoder_s, x_s, train=True,
                               update_running=update_running)
    v_i, cache_i = net.forward(model.encoder_i, x_i, train=True,
                               update_running=update_running)
    if model.projection is not None:
        sem_rows = project_matrix(model.projection, seen_semantic_base)
    else:
        sem_rows = seen_semantic_base

    components: dict[str, tuple[float, dict[str, np.ndarray]]] = {}
    if "ce" in loss_cfg.enabled:
        logits_s = decode(model.classifier, v_s)
        logits_i = decode(model.classifier, v_i)
        val_s, dlog_s = ce_loss(logits_s, y_s)
        val_i, dlog_i = ce_loss(logits_i, y_i)
        head_s, dv_s = decode_backward(model.classifier, v_s, dlog_s)
        head_i, dv_i = decode_backward(model.classifier, v_i, dlog_i)
        components["ce"] = (
            val_s + val_i,
            {
                "V_s": dv_s,
                "V_i": dv_i,
                "classifier.weight": head_s["weight"] + head_i["weight"],
                "classifier.bias": head_s["bias"] + head_i["bias"],
            },
        )
    if "iii" in loss_cfg.enabled:
        components["iii"] = batch_triplet_loss(
            v_s, v_i, view.sa_rows, view.ia_rows, loss_cfg.margin
        )
    if "dl" in loss_cfg.enabled or "cpl" in loss_cfg.enabled:
        vs_pairs = v_s[view.pair_s_rows]
        vi_pairs = v_i[view.pair_i_rows]
        pair_labels = y_s[view.pair_s_rows]
    if "dl" in loss_cfg.enabled:
        val, grads = decoder_loss(vs_pairs, vi_pairs, model.dec_i, model.dec_s)
        dv_s = np.zeros_like(v_s)
        dv_i = np.zeros_like(v_i)
        np.add.at(dv_s, view.pair_s_rows, grads.pop("V_s"))
        np.add.at(dv_i, view.pair_i_rows, grads.pop("V_i"))
        grads["V_s"] = dv_s
        grads["V_i"] = dv_i
        components["dl"] = (val, grads)
    if "cpl" in loss_cfg.enabled:
        val_s, dvp_s, dsem_s = projection_loss(vs_pairs, pair_labels, sem_rows)
        val_i, dvp_i, dsem_i = projection_loss(vi_pairs, pair_labels, sem_rows)
        dv_s = np.zeros_like(v_s)
        dv_i = np.zeros_like(v_i)
        np.add.at(dv_s, view.pair_s_rows, dvp_s)
        np.add.at(dv_i, view.pair_i_rows, dvp_i)
        components["cpl"] = (
            val_s + val_i,
            {"V_s": dv_s, "V_i": dv_i, "semantics": dsem_s + dsem_i},
        )

    report, _ = total_loss(loss_cfg, components)

    # merge gradients over the update subset only
    merged: dict[str, np.ndarray] = {}
    for term in update_terms:
        if term not in components:
            raise LossInputError(f"update term {term!r} has no computed inputs")
        w = loss_cfg.weight(term)
        for key, g in components[term][1].items():
            if key in merged:
                merged[key] = merged[key] + w * g
            else:
                merged[key] = w * g if w != 1.0 else g.copy()

    param_grads: dict[str, np.ndarray] = {}
    for key, g in merged.items():
        if key in ("V_s", "V_i", "semantics"):
            continue
        param_grads[key] = g
    if "V_s" in merged:
        enc_grads, _ = net.backward(model.encoder_s, cache_s, merged["V_s"])
        for name, g in enc_grads.items():
            param_grads[f"encoder_s.{name}"] = g
    if "V_i" in merged:
        enc_grads, _ = net.backward(model.encoder_i, cache_i, merged["V_i"])
        for name, g in enc_grads.items():
            param_grads[f"encoder_i.{name}"] = g
    if "semantics" in merged and model.projection is not None:
        proj_grads = project_matrix_backward(
            model.projection, seen_semantic_base, merged["semantics"]
        )
        for name, g in proj_grads.items():
            param_grads[f"projection.{name}"] = g
    return report, param_grads


def trainable_blocks(model: TrainedModel) -> list[tuple[str, np.ndarray]]:
    blocks: list[tuple[str, np.ndarray]] = []
    for prefix, enc in (("encoder_s", model.encoder_s), ("encoder_i", model.encoder_i)):
        blocks.extend((f"{prefix}.{n}", a) for n, a in net.encoder_param_blocks(enc))
    for prefix, aff in (("dec_s", model.dec_s), ("dec_i", model.dec_i),
                        ("classifier", model.classifier)):
        blocks.append((f"{prefix}.weight", aff.weight))
        blocks.append((f"{prefix}.bias", aff.bias))
    if model.projection is not None:
        for i, (w, b) in enumerate(zip(model.projection.weights,
                                       model.projection.biases)):
            blocks.append((f"projection.weights.{i}", w))
            blocks.append((f"projection.biases.{i}", b))
    return blocks


def state_blocks(model: TrainedModel) -> list[tuple[str, np.ndarray]]:
    blocks: list[tuple[str, np.ndarray]] = []
    for prefix, enc in (("encoder_s", model.encoder_s), ("encoder_i", model.encoder_i)):
        blocks.extend((f"{prefix}.{n}", a) for n, a in net.encoder_state_blocks(enc))
    return blocks


def sgd_step(model: TrainedModel, grads: dict[str, np.ndarray], lr: float):
    """In-place parameter update on every block named in ``grads``."""
    for name, arr in trainable_blocks(model):
        g = grads.get(name)
        if g is not None:
            arr -= lr * g


# ---------------------------------------------------------------------------
# the training loop

def _seen_label_ids(store: FeatureStore, seen_classes: list[str]) -> np.ndarray:
    index = {c: i for i, c in enumerate(seen_classes)}
    return np.array(
        [index.get(inst.label, -1) for inst in store.instances], dtype=np.intp
    )


def init_model(
    store_dim: int,
    semantics: SemanticTable,
    seen_classes: list[str],
    cfg: TrainConfig,
    featurizer_meta: dict | None = None,
) -> TrainedModel:
    """Fresh, untrained model with per-component child seeds."""
    ss = np.random.SeedSequence(cfg.seed)
    seeds = ss.spawn(6)
    if cfg.variant == "fixed300":
        d_out = semantics.dim
        projection = None
    else:
        d_out = cfg.latent_dim
        projection = init_projection(
            semantics.dim, d_out, seeds[5], hidden_dim=cfg.latent_hidden_dim
        )
    sem_classes = semantics.classes()
    return TrainedModel(
        encoder_s=init_encoder(store_dim, d_out, seeds[0], cfg.hidden_dims),
        encoder_i=init_encoder(store_dim, d_out, seeds[1], cfg.hidden_dims),
        dec_s=init_affine(d_out, d_out, seeds[2]),
        dec_i=init_affine(d_out, d_out, seeds[3]),
        classifier=init_affine(len(seen_classes), d_out, seeds[4]),
        projection=projection,
        semantic_classes=sem_classes,
        semantic_matrix=semantics.matrix(sem_classes),
        seen_classes=list(seen_classes),
        config=cfg,
        featurizer_meta=featurizer_meta,
    )


def train(
    store: FeatureStore,
    split: SplitView,
    semantics: SemanticTable,
    cfg: TrainConfig,
    metrics_path: str | Path | None = None,
    learning_rate_override: float | None = None,
    progress=None,
) -> TrainedModel:
    """Alternating (or joint) mini-batch gradient descent to convergence.

    Stops when the relative epoch-mean improvement of the total loss
    falls below ``cfg.convergence_eps`` or at ``cfg.max_epochs``.
    Raises ``TrainingDivergedError`` as soon as the total goes non-finite.
    """
    if len(split.seen_classes) < 2:
        raise TripletBuildError("training needs at least 2 seen classes")
    seen = list(split.seen_classes)
    model = init_model(store.dim, semantics, seen, cfg,
                       featurizer_meta=store.featurizer_meta)
    lr = cfg.learning_rate if learning_rate_override is None else learning_rate_override
    label_ids = _seen_label_ids(store, seen)
    sem_base = semantics.matrix(seen)
    triplets = build_triplets(split, store, cfg.triplets_per_anchor_type,
                              seed=np.random.default_rng([cfg.seed, 1]).integers(2**31))
    cycle = [t for t in ROUND_ROBIN_ORDER if t in cfg.loss.enabled]

    metrics_fh = open(metrics_path, "w") if metrics_path is not None else None
    step = 0
    last_report: LossReport | None = None
    prev_epoch_total: float | None = None
    try:
        for epoch in range(cfg.max_epochs):
            rng = np.random.default_rng([cfg.seed, 2, epoch])
            batches = make_batches(triplets, cfg.batch_size, rng)
            epoch_totals = []
            for batch in batches:
                view = assemble_batch(batch)
                x_s = store.feature_matrix(view.sketch_store_idx)
                x_i = store.feature_matrix(view.image_store_idx)
                y_s = label_ids[view.sketch_store_idx]
                y_i = label_ids[view.image_store_idx]
                if cfg.schedule == "round_robin":
                    update_terms = frozenset({cycle[step % len(cycle)]})
                else:
                    update_terms = cfg.loss.enabled
                report, grads = compute_batch_gradients(
                    model, view, x_s, x_i, y_s, y_i, sem_base, cfg.loss,
                    update_terms=update_terms,
                )
                if not np.isfinite(report.total):
                    raise TrainingDivergedError(
                        f"total loss became non-finite at step {step}",
                        last_report=last_report,
                    )
                sgd_step(model, grads, lr)
                last_report = report
                epoch_totals.append(report.total)
                if metrics_fh is not None:
                    metrics_fh.write(report.json_line(step) + "\n")
                step += 1
            epoch_total = float(np.mean(epoch_totals))
            if progress is not None:
                progress(epoch, epoch_total)
            if prev_epoch_total is not None:
                improvement = (prev_epoch_total - epoch_total) / max(
                    abs(prev_epoch_total), 1e-12
                )
                if improvement < cfg.convergence_eps:
                    prev_epoch_total = epoch_total
                    break
            prev_epoch_total = epoch_total
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    model.final_report = last_report if last_report is not None else LossReport()
    model.steps = step
    return model


# ---------------------------------------------------------------------------
# checkpoint io

def _model_blocks(model: TrainedModel) -> list[tuple[str, np.ndarray]]:
    return (
        trainable_blocks(model)
        + state_blocks(model)
        + [("semantics.matrix", model.semantic_matrix)]
    )


def serialize_model(model: TrainedModel) -> bytes:
    blocks = _model_blocks(model)
    header = {
        "format": 1,
        "variant": model.config.variant,
        "d_in": model.d_in,
        "d_out": model.d_out,
        "hidden_dims": list(model.config.hidden_dims),
        "seen_classes": model.seen_classes,
        "semantic_classes": model.semantic_classes,
        "featurizer": model.featurizer_meta,
        "train_config": model.config.to_dict(),
        "final_report": {
            "ce": model.final_report.ce, "iii": model.final_report.iii,
            "dl": model.final_report.dl, "cpl": model.final_report.cpl,
            "total": model.final_report.total,
        },
        "steps": model.steps,
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
    }
    buf = io.BytesIO()
    raw = json.dumps(header, sort_keys=True).encode()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(len(raw).to_bytes(8, "little"))
    buf.write(raw)
    for _, arr in blocks:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def save_model(model: TrainedModel, path: str | Path) -> str:
    """Write the checkpoint; returns its sha256 fingerprint."""
    blob = serialize_model(model)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def model_fingerprint(model: TrainedModel) -> str:
    return hashlib.sha256(serialize_model(model)).hexdigest()


def load_model(path: str | Path, expected_variant: str | None = None) -> TrainedModel:
    blob = Path(path).read_bytes()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"corrupt checkpoint: bad magic in {path}")
    off = len(CHECKPOINT_MAGIC)
    if len(blob) < off + 8:
        raise CheckpointError(f"corrupt checkpoint: truncated header in {path}")
    hlen = int.from_bytes(blob[off : off + 8], "little")
    off += 8
    if len(blob) < off + hlen:
        raise CheckpointError(f"corrupt checkpoint: truncated header in {path}")
    try:
        header = json.loads(blob[off : off + hlen])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint: bad header json: {exc}") from exc
    off += hlen
    if header.get("format") != 1:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format')}")
    variant = header["variant"]
    if expected_variant is not None and variant != expected_variant:
        raise VariantMismatchError(
            f"checkpoint is {variant!r}, pipeline expects {expected_variant!r}"
        )

    arrays: dict[str, np.ndarray] = {}
    for spec in header["blocks"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        nbytes = n * 8
        if len(blob) < off + nbytes:
            raise CheckpointError(
                f"corrupt checkpoint: truncated block {spec['name']!r}"
            )
        arrays[spec["name"]] = np.frombuffer(
            blob, dtype="<f8", count=n, offset=off
        ).reshape(shape).copy()
        off += nbytes

    cfg = TrainConfig.from_dict(header["train_config"])
    dims = [header["d_in"], *cfg.hidden_dims, header["d_out"]]

    def encoder_from(prefix: str) -> EncoderParams:
        layers, norms = [], []
        for i in range(len(dims) - 1):
            layers.append(Affine(arrays[f"{prefix}.layers.{i}.weight"],
                                 arrays.get(f"{prefix}.layers.{i}.bias")))
            if i < len(dims) - 2:
                norms.append(net.BatchNormState(
                    arrays[f"{prefix}.norms.{i}.gamma"],
                    arrays[f"{prefix}.norms.{i}.beta"],
                    arrays[f"{prefix}.norms.{i}.running_mean"],
                    arrays[f"{prefix}.norms.{i}.running_var"],
                ))
        enc = EncoderParams(layers, norms)
        if [l.weight.shape[1] for l in enc.layers] != dims[:-1]:
            raise CheckpointError("corrupt checkpoint: layer dims do not chain")
        return enc

    projection = None
    if variant == "latent128":
        weights, biases = [], []
        i = 0
        while f"projection.weights.{i}" in arrays:
            weights.append(arrays[f"projection.weights.{i}"])
            biases.append(arrays[f"projection.biases.{i}"])
            i += 1
        if not weights:
            raise CheckpointError("corrupt checkpoint: latent variant lacks projection")
        projection = SemanticProjection(weights, biases)

    try:
        model = TrainedModel(
            encoder_s=encoder_from("encoder_s"),
            encoder_i=encoder_from("encoder_i"),
            dec_s=Affine(arrays["dec_s.weight"], arrays["dec_s.bias"]),
            dec_i=Affine(arrays["dec_i.weight"], arrays["dec_i.bias"]),
            classifier=Affine(arrays["classifier.weight"], arrays["classifier.bias"]),
            projection=projection,
            semantic_classes=list(header["semantic_classes"]),
            semantic_matrix=arrays["semantics.matrix"],
            seen_classes=list(header["seen_classes"]),
            config=cfg,
            featurizer_meta=header.get("featurizer"),
            final_report=LossReport(**header["final_report"]),
            steps=int(header["steps"]),
        )
    except KeyError as exc:
        raise CheckpointError(f"corrupt checkpoint: missing block {exc}") from exc
    return model

"""Acceptance suite: one test per release criterion, one printed verdict line
each.  Run with ``pytest tests/test_acceptance.py -v -s`` to watch them.

The synthetic end-to-end dataset and every tolerance here are frozen;
nothing is calibrated at test time.
"""

import time

import numpy as np
import pytest

from zsketch.feature_store import make_split
from zsketch.losses import LossConfig, cross_triplet_loss
from zsketch.retrieval import EmbeddingIndex, IndexEntry, evaluate, evaluate_index, knn
from zsketch.synthetic import make_synthetic_dataset
from zsketch.trainer import (
    TrainConfig,
    assemble_batch,
    build_triplets,
    compute_batch_gradients,
    init_model,
    make_batches,
    serialize_model,
    train,
    trainable_blocks,
    _seen_label_ids,
)
from .oracles import brute_force_knn, enumerate_average_precision, enumerate_precision_at_k

DATASET_SEED = 20260811
FD_STEP = 1e-5
GRAD_TOL = 1e-6
PROBES_PER_TENSOR = 10


def verdict(ok: bool, name: str, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# shared synthetic end-to-end run (default config, seed 42, instrumented)

@pytest.fixture(scope="module")
def synthetic_run():
    store, semantics, unseen = make_synthetic_dataset(seed=DATASET_SEED)
    split = make_split(store, unseen)
    unseen_set = set(split.test_instances)
    touched: set[int] = set()
    store.set_access_recorder(lambda idx: touched.update(idx))
    t0 = time.perf_counter()
    model = train(store, split, semantics, TrainConfig(seed=42))
    train_touched = set(touched)  # snapshot before eval reads the test split
    store.set_access_recorder(None)
    unseen_idx = store.indices_where(labels=split.unseen_classes)
    seen_idx = store.indices_where(labels=split.seen_classes)
    s2i = evaluate(model, store, unseen_idx, "sketch2image", k=100)
    i2i = evaluate(model, store, seen_idx, "image2image", k=100)
    elapsed = time.perf_counter() - t0
    return {
        "store": store,
        "semantics": semantics,
        "split": split,
        "model": model,
        "s2i": s2i,
        "i2i": i2i,
        "elapsed": elapsed,
        "unseen_set": unseen_set,
        "touched": train_touched,
    }


# ---------------------------------------------------------------------------
# criterion 1: gradient suite

def _gradient_check_one_seed(seed: int) -> tuple[float, float]:
    """Worst relative error across every trainable tensor, plus margin of
    the closest hinge argument to the kink (for probe validity)."""
    store, semantics, unseen = make_synthetic_dataset(
        n_classes=4, n_unseen=1, d_in=16, n_per_class_per_modality=5,
        seed=seed,
    )
    split = make_split(store, unseen)
    triplets = build_triplets(split, store, 5, seed=seed + 7)
    batch = make_batches(triplets, 10, np.random.default_rng(seed))[0]
    view = assemble_batch(batch)
    cfg = TrainConfig(
        triplets_per_anchor_type=5, batch_size=10, seed=seed,
        variant="latent128", latent_dim=8, loss=LossConfig(margin=1.0),
    )
    model = init_model(store.dim, semantics, list(split.seen_classes), cfg)
    label_ids = _seen_label_ids(store, list(split.seen_classes))
    x_s = store.feature_matrix(view.sketch_store_idx)
    x_i = store.feature_matrix(view.image_store_idx)
    y_s = label_ids[view.sketch_store_idx]
    y_i = label_ids[view.image_store_idx]
    sem_base = semantics.matrix(list(split.seen_classes))

    def total():
        # value-only evaluation: empty update set skips the backward chain
        report, _ = compute_batch_gradients(
            model, view, x_s, x_i, y_s, y_i, sem_base, cfg.loss,
            update_terms=frozenset(), update_running=False,
        )
        return report.total

    report, grads = compute_batch_gradients(
        model, view, x_s, x_i, y_s, y_i, sem_base, cfg.loss,
        update_running=False,
    )
    assert np.isfinite(report.total)

    # hinge safety: every triplet argument must sit away from the kink,
    # otherwise the finite-difference probes straddle a subgradient
    from zsketch.net import forward

    v_s, _ = forward(model.encoder_s, x_s, train=True, update_running=False)
    v_i, _ = forward(model.encoder_i, x_i, train=True, update_running=False)
    margins = []
    for (ai, pi, ni), va, vo in ((view.sa_rows, v_s, v_i), (view.ia_rows, v_i, v_s)):
        a, p, n = va[ai], vo[pi], vo[ni]
        arg = ((a - p) ** 2).sum(1) - ((a - n) ** 2).sum(1) + cfg.loss.margin
        margins.extend(np.abs(arg).tolist())
    hinge_margin = min(margins)

    worst = 0.0
    probe_rng = np.random.default_rng(seed * 17 + 1)
    for name, arr in trainable_blocks(model):
        g = grads[name].ravel()
        flat = arr.ravel()
        count = min(PROBES_PER_TENSOR, flat.size)
        idx = probe_rng.choice(flat.size, size=count, replace=False)
        fd = np.empty(count)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + FD_STEP
            up = total()
            flat[i] = orig - FD_STEP
            down = total()
            flat[i] = orig
            fd[j] = (up - down) / (2 * FD_STEP)
        ga = g[idx]
        rel = np.linalg.norm(ga - fd) / max(np.linalg.norm(ga), np.linalg.norm(fd), 1e-12)
        worst = max(worst, rel)
    return worst, hinge_margin


def test_gradient_suite():
    t0 = time.perf_counter()
    worst_overall = 0.0
    for seed in (101, 202, 303):
        worst, hinge_margin = _gradient_check_one_seed(seed)
        assert hinge_margin > 1e-3, "triplet sits on the hinge; invalid probe"
        worst_overall = max(worst_overall, worst)
    elapsed = time.perf_counter() - t0
    verdict(
        worst_overall < GRAD_TOL and elapsed < 30.0,
        "gradient-suite",
        f"all four losses through encoders/decoders/classifier/projection: "
        f"worst rel err {worst_overall:.2e} (tol {GRAD_TOL}), 3 seeds, "
        f"{elapsed:.1f}s (< 30s)",
    )


# ---------------------------------------------------------------------------
# criterion 2: triplet case suite

def test_triplet_case_suite():
    rng = np.random.default_rng(11)
    ok = True
    for _ in range(50):
        a = rng.normal(size=6)
        p = a + rng.normal(size=6) * 0.01
        n = a + rng.normal(size=6) * 10.0  # far: margin satisfied (Case II)
        value, (da, dp, dn) = cross_triplet_loss(a, p, n, alpha=1.0)
        ok &= value == 0.0
        ok &= not (da.any() or dp.any() or dn.any())
    for _ in range(50):
        a = rng.normal(size=6)
        p = a + rng.normal(size=6)
        n = a + rng.normal(size=6) * 0.01  # near: hinge active (Case I)
        d_ap = float(((a - p) ** 2).sum())
        d_an = float(((a - n) ** 2).sum())
        expected = d_ap - d_an + 1.0
        if expected <= 0:
            continue
        value, _ = cross_triplet_loss(a, p, n, alpha=1.0)
        ok &= abs(value - expected) < 1e-12
    verdict(
        ok,
        "triplet-case-suite",
        "Case II exactly zero with zero gradients; Case I equals "
        "|a-p|^2 - |a-n|^2 + alpha to 1e-12",
    )


# ---------------------------------------------------------------------------
# criterion 3: metric oracle

def test_metric_oracle():
    rng = np.random.default_rng(987)
    worst_gap = 0.0
    knn_mismatches = 0
    for trial in range(200):
        n_classes = int(rng.integers(2, 6))
        per_query = int(rng.integers(1, 5))
        per_gallery = int(rng.integers(2, 8))
        dim = int(rng.integers(2, 5))
        entries, vectors = [], []
        for c in range(n_classes):
            for j in range(per_query):
                entries.append(IndexEntry(f"s{c:02d}-{j:02d}", "sketch", f"c{c}"))
                vectors.append(rng.normal(size=dim))
            for j in range(per_gallery):
                entries.append(IndexEntry(f"i{c:02d}-{j:02d}", "image", f"c{c}"))
                vectors.append(rng.normal(size=dim))
        vectors = np.array(vectors)
        if trial % 3 == 0:  # force exact ties
            dup_rows = [r for r, e in enumerate(entries) if e.modality == "image"][:2]
            vectors[dup_rows[1]] = vectors[dup_rows[0]]
        index = EmbeddingIndex(entries, vectors)
        k = int(rng.integers(1, n_classes * per_gallery + 3))
        report = evaluate_index(index, "sketch2image", k=k)

        gal = [(e.id, e.label, vectors[r]) for r, e in enumerate(entries)
               if e.modality == "image"]
        aps, ps = [], []
        for r, e in enumerate(entries):
            if e.modality != "sketch":
                continue
            q = vectors[r]
            ranked = sorted(gal, key=lambda g: (float(((g[2] - q) ** 2).sum()), g[0]))
            rel = [g[1] == e.label for g in ranked]
            aps.append(enumerate_average_precision(rel))
            ps.append(enumerate_precision_at_k(rel, k))
        worst_gap = max(
            worst_gap,
            abs(report.map_score - float(np.mean(aps))),
            abs(report.p_at_k - float(np.mean(ps))),
        )

        query = rng.normal(size=dim)
        got = knn(index, query, k=k, modality="image")
        ids, _ = brute_force_knn(
            [g[0] for g in gal], [g[1] for g in gal],
            np.array([g[2] for g in gal]), query, k,
        )
        if list(got.ids) != ids:
            knn_mismatches += 1
    verdict(
        worst_gap < 1e-12 and knn_mismatches == 0,
        "metric-oracle",
        f"200 random configurations: worst mAP/P@K gap {worst_gap:.2e} "
        f"(tol 1e-12), knn mismatches {knn_mismatches} (ties included)",
    )


# ---------------------------------------------------------------------------
# criterion 4: synthetic zero-shot end-to-end

def test_synthetic_zero_shot_end_to_end(synthetic_run):
    s2i = synthetic_run["s2i"].map_score
    i2i = synthetic_run["i2i"].map_score
    elapsed = synthetic_run["elapsed"]
    verdict(
        s2i >= 0.90 and i2i >= 0.95 and elapsed < 300.0,
        "synthetic-zero-shot",
        f"default config seed 42: unseen sketch2image mAP {s2i:.4f} (>= 0.90), "
        f"seen image2image mAP {i2i:.4f} (>= 0.95), {elapsed:.0f}s (< 300s)",
    )


# ---------------------------------------------------------------------------
# criterion 5: ablation direction check

ABLATION_CFG = dict(
    triplets_per_anchor_type=2000, max_epochs=10, learning_rate=0.002,
    seed=42, schedule="joint",
)


def _ablation_map(store, split, semantics, enabled):
    cfg = TrainConfig(loss=LossConfig(enabled=frozenset(enabled)), **ABLATION_CFG)
    model = train(store, split, semantics, cfg)
    unseen_idx = store.indices_where(labels=split.unseen_classes)
    return evaluate(model, store, unseen_idx, "sketch2image", k=100).map_score


def test_ablation_direction_check(synthetic_run):
    store = synthetic_run["store"]
    split = synthetic_run["split"]
    semantics = synthetic_run["semantics"]
    full = _ablation_map(store, split, semantics, ("ce", "iii", "dl", "cpl"))
    no_cpl = _ablation_map(store, split, semantics, ("ce", "iii", "dl"))
    no_ce = _ablation_map(store, split, semantics, ("iii", "dl", "cpl"))
    drop_cpl = full - no_cpl
    drop_ce = full - no_ce
    verdict(
        drop_cpl >= 0.05 and drop_ce >= 0.05,
        "ablation-direction",
        f"unseen sketch2image mAP: full {full:.3f}, no-cpl {no_cpl:.3f} "
        f"(drop {drop_cpl:.3f}), no-ce {no_ce:.3f} (drop {drop_ce:.3f}); "
        f"both drops >= 0.05",
    )


# ---------------------------------------------------------------------------
# criterion 6: determinism

def test_determinism():
    store, semantics, unseen = make_synthetic_dataset(
        n_classes=5, n_unseen=1, d_in=12, n_per_class_per_modality=8,
        seed=DATASET_SEED,
    )
    split = make_split(store, unseen)
    cfg = TrainConfig(
        triplets_per_anchor_type=60, batch_size=12, learning_rate=0.01,
        max_epochs=3, seed=4242, hidden_dims=(24, 16, 12),
    )
    unseen_idx = store.indices_where(labels=split.unseen_classes)
    blobs, reports = [], []
    for _ in range(2):
        model = train(store, split, semantics, cfg)
        blobs.append(serialize_model(model))
        reports.append(
            evaluate(model, store, unseen_idx, "sketch2image", k=10).to_dict()
        )
    verdict(
        blobs[0] == blobs[1] and reports[0] == reports[1],
        "determinism",
        "identical config+seed reproduces bit-identical checkpoint bytes "
        "and identical eval reports",
    )


# ---------------------------------------------------------------------------
# criterion 7: zero-shot hygiene

def test_zero_shot_hygiene(synthetic_run):
    # snapshot of store reads taken right after train() returned, before eval
    touched = synthetic_run["touched"]
    unseen_set = synthetic_run["unseen_set"]
    overlap = touched & unseen_set
    verdict(
        len(overlap) == 0 and len(touched) > 0,
        "zero-shot-hygiene",
        f"instrumented store: {len(touched)} instances read during training, "
        f"{len(overlap)} from unseen classes (must be 0)",
    )

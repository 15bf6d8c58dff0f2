"""Class semantic prototypes: fixed word vectors and the learned projection.

Word-vector files are whitespace-separated text, one class per line
(``class v1 ... vD``); multi-word class names use underscores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import SemanticsError


class SemanticTable:
    """Immutable class-name -> vector map with a uniform dimension."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise SemanticsError("semantic table is empty")
        dims = {np.asarray(v).shape for v in vectors.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise SemanticsError(f"inconsistent semantic vector shapes: {dims}")
        self.dim = next(iter(dims))[0]
        self._vectors = {}
        for name, vec in vectors.items():
            v = np.asarray(vec, dtype=np.float64).copy()
            if not np.all(np.isfinite(v)):
                raise SemanticsError(f"semantic vector for {name!r} is non-finite")
            v.setflags(write=False)
            self._vectors[name] = v

    def __contains__(self, name: str) -> bool:
        return name in self._vectors

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._vectors[name]
        except KeyError:
            raise SemanticsError(f"no semantic vector for class {name!r}") from None

    def classes(self) -> list[str]:
        return list(self._vectors)

    def matrix(self, class_order: Sequence[str]) -> np.ndarray:
        """Rows in the given class order; raises on missing classes."""
        return np.stack([self[c] for c in class_order])


def load_word_vectors(path: str | Path, class_names: Iterable[str]) -> SemanticTable:
    """Read vectors for exactly ``class_names`` from a word2vec-style file."""
    wanted = list(class_names)
    path = Path(path)
    if not path.exists():
        raise SemanticsError(f"word-vector file not found: {path}")
    found: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            name, values = parts[0], parts[1:]
            if name in found:
                raise SemanticsError(f"{path}:{lineno}: duplicate class {name!r}")
            vec = np.array([float(v) for v in values], dtype=np.float64)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise SemanticsError(
                    f"{path}:{lineno}: {name!r} has {vec.shape[0]} values, "
                    f"expected {dim}"
                )
            found[name] = vec
    missing = [c for c in wanted if c not in found]
    if missing:
        raise SemanticsError(f"word-vector file missing classes: {missing}")
    return SemanticTable({c: found[c] for c in wanted})


def normalized(table: SemanticTable) -> SemanticTable:
    """L2-normalize every vector (optional; off by default everywhere)."""
    out = {}
    for c in table.classes():
        v = table[c]
        n = np.linalg.norm(v)
        out[c] = v / n if n > 0 else v
    return SemanticTable(out)


@dataclass
class SemanticProjection:
    """Affine map (optionally two layers with a leaky-ReLU between)."""

    weights: list[np.ndarray] = field(default_factory=list)  # each (out, in)
    biases: list[np.ndarray] = field(default_factory=list)
    slope: float = 0.01

    @property
    def dim_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.weights[-1].shape[0]


def init_projection(
    dim_in: int, dim_out: int, seed: int, hidden_dim: int | None = None
) -> SemanticProjection:
    rng = np.random.default_rng(seed)
    dims = [dim_in, dim_out] if hidden_dim is None else [dim_in, hidden_dim, dim_out]
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-bound, bound, size=(d_out, d_in)))
        biases.append(np.zeros(d_out))
    return SemanticProjection(weights, biases)


def project_matrix(proj: SemanticProjection, base: np.ndarray) -> np.ndarray:
    """Apply the projection to rows of ``base`` (n_classes x dim_in)."""
    if base.shape[1] != proj.dim_in:
        raise SemanticsError(
            f"projection expects dim {proj.dim_in}, table has {base.shape[1]}"
        )
    h = base
    last = len(proj.weights) - 1
    for i, (w, b) in enumerate(zip(proj.weights, proj.biases)):
        h = h @ w.T + b
        if i < last:
            h = np.where(h > 0, h, proj.slope * h)
    return h


def project_matrix_backward(
    proj: SemanticProjection, base: np.ndarray, grad_out: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss wrt projection parameters.

    ``grad_out`` is dLoss/d(projected rows); recomputes the forward
    activations (cheap: n_classes rows).
    """
    acts = [base]
    h = base
    last = len(proj.weights) - 1
    pre = []
    for i, (w, b) in enumerate(zip(proj.weights, proj.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = np.where(z > 0, z, proj.slope * z) if i < last else z
        acts.append(h)
    grads: dict[str, np.ndarray] = {}
    dh = grad_out
    for i in range(last, -1, -1):
        dz = dh if i == last else dh * np.where(pre[i] > 0, 1.0, proj.slope)
        grads[f"weights.{i}"] = dz.T @ acts[i]
        grads[f"biases.{i}"] = dz.sum(axis=0)
        dh = dz @ proj.weights[i]
    return grads


def project(table: SemanticTable, proj: SemanticProjection) -> SemanticTable:
    """Project every class vector; returns a new table of dim_out."""
    order = table.classes()
    projected = project_matrix(proj, table.matrix(order))
    return SemanticTable({c: projected[i] for i, c in enumerate(order)})

"""Shared fixtures. BLAS threading is pinned to one thread before numpy
loads so timing-sensitive tests measure single-threaded behaviour."""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from zsketch.feature_store import FeatureStore, Instance  # noqa: E402
from zsketch.semantics import SemanticTable  # noqa: E402


@pytest.fixture
def toy_store():
    """3 classes x 2 modalities x 2 instances, 4-d features."""
    rng = np.random.default_rng(7)
    instances = []
    for label in ("apple", "boat", "cat"):
        for modality in ("sketch", "image"):
            for j in range(2):
                instances.append(
                    Instance(f"{modality}:{label}/{j}", modality, label,
                             rng.normal(size=4))
                )
    return FeatureStore(instances, ["apple", "boat", "cat"], 4)


@pytest.fixture
def toy_semantics():
    return SemanticTable(
        {
            "apple": np.array([2.0, 0.0, 0.0, 0.0]),
            "boat": np.array([0.0, 2.0, 0.0, 0.0]),
            "cat": np.array([0.0, 0.0, 2.0, 0.0]),
        }
    )

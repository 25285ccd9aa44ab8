"""Class splits and N-way K-shot episode sampling under seeded RNG streams.

Every random draw comes from a counter-based Philox generator keyed by
``(master_seed, purpose_tag, index)``, so parallel evaluation is
order-independent yet reproducible: stream ``i`` is identical no matter
which worker runs it or in what order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .embedstore import EmbeddingStore
from .errors import NotEnoughClasses, NotEnoughSamples

_SEED_MASK = (1 << 64) - 1


def derive_rng(master_seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Derive an independent generator for (master_seed, purpose, index).

    The purpose tag is hashed with blake2s (stable across platforms and
    processes, unlike builtin ``hash``) and folded into the Philox key.
    """
    tag = int.from_bytes(hashlib.blake2s(purpose.encode("utf-8"), digest_size=8).digest(), "big")
    entropy = (int(master_seed) & _SEED_MASK, tag, int(index) & _SEED_MASK)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class ClassSplit:
    """Disjoint seen / validation / unseen label sets."""

    seen: frozenset[str]
    valid: frozenset[str]
    unseen: frozenset[str]

    def __post_init__(self):
        if self.seen & self.valid or self.seen & self.unseen or self.valid & self.unseen:
            raise ValueError("split sets must be pairwise disjoint")


@dataclass(frozen=True)
class Episode:
    """One N-way K-shot task with Q queries per class.

    Support and query rows are grouped class-major: class index c occupies
    rows [c*K, (c+1)*K) of the support and [c*Q, (c+1)*Q) of the query set.
    Query labels are available for scoring and the training loss but must
    stay hidden from distribution estimation.
    """

    way_labels: tuple[str, ...]
    support_x: np.ndarray  # (N*K, d) float64
    support_y: np.ndarray  # (N*K,) int64, values in [0, N)
    query_x: np.ndarray  # (N*Q, d) float64
    query_y: np.ndarray  # (N*Q,) int64

    @property
    def n_way(self) -> int:
        return len(self.way_labels)

    @property
    def k_shot(self) -> int:
        return self.support_x.shape[0] // self.n_way

    @property
    def n_query(self) -> int:
        return self.query_x.shape[0] // self.n_way


def split_classes(
    store: EmbeddingStore, counts: tuple[int, int, int], seed: int
) -> ClassSplit:
    """Randomly partition the store's labels into seen/valid/unseen sets.

    Deterministic for a fixed (store, counts, seed): labels are sorted
    first, then permuted by a derived stream.
    """
    n_seen, n_valid, n_unseen = counts
    if min(counts) < 0:
        raise ValueError(f"split counts must be nonnegative, got {counts}")
    labels = store.labels
    total = n_seen + n_valid + n_unseen
    if total > len(labels):
        raise NotEnoughClasses(total, len(labels))
    rng = derive_rng(seed, "class-split")
    perm = rng.permutation(len(labels))
    picked = [labels[i] for i in perm[:total]]
    return ClassSplit(
        seen=frozenset(picked[:n_seen]),
        valid=frozenset(picked[n_seen : n_seen + n_valid]),
        unseen=frozenset(picked[n_seen + n_valid : total]),
    )


def sample_episode(
    store: EmbeddingStore,
    allowed: frozenset[str] | set[str],
    n_way: int,
    k_shot: int,
    n_query: int,
    rng: np.random.Generator,
) -> Episode:
    """Sample an episode from the allowed classes, without replacement.

    Queries come from the class remainder after removing the supports, so a
    record never appears in both sets.
    """
    if n_way <= 0 or k_shot <= 0 or n_query <= 0:
        raise ValueError("n_way, k_shot, n_query must all be positive")
    labels = sorted(allowed)
    if len(labels) < n_way:
        raise NotEnoughClasses(n_way, len(labels))
    way_idx = rng.choice(len(labels), size=n_way, replace=False)
    way_labels = tuple(labels[i] for i in way_idx)

    need = k_shot + n_query
    sup_rows, qry_rows = [], []
    for label in way_labels:
        positions = store.class_index[label]
        if len(positions) < need:
            raise NotEnoughSamples(label, need, len(positions))
        pick = rng.choice(len(positions), size=need, replace=False)
        chosen = [positions[i] for i in pick]
        sup_rows.extend(chosen[:k_shot])
        qry_rows.extend(chosen[k_shot:])

    return Episode(
        way_labels=way_labels,
        support_x=store.vectors(sup_rows),
        support_y=np.repeat(np.arange(n_way, dtype=np.int64), k_shot),
        query_x=store.vectors(qry_rows),
        query_y=np.repeat(np.arange(n_way, dtype=np.int64), n_query),
    )

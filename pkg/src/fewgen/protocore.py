"""Prototypical classifier core: projection head, prototypes, softmax scores.

The trainable mapping is a single affine layer over frozen base embeddings.
Classification is a softmax over negative squared Euclidean distances to
per-class prototypes, computed in log-space with max-subtraction because
squared distances of raw embeddings can reach 1e4.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyClass

PROB_FLOOR = 1e-300  # clamp for -log of a vanishing probability


@dataclass
class ProjectionHead:
    """Affine map ``x -> W x + b`` from store space to the working space."""

    weight: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weight must be a matrix and bias a vector")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise DimensionMismatch(self.weight.shape[0], self.bias.shape[0])
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("head parameters must be finite")

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(self.weight.copy(), self.bias.copy())

    @classmethod
    def identity(cls, dim: int) -> "ProjectionHead":
        """Identity head: evaluation on frozen embeddings, no training."""
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def orthonormal(cls, d_in: int, d_out: int, rng: np.random.Generator) -> "ProjectionHead":
        """Random head with orthonormal rows for d_out <= d_in, zero bias."""
        if d_out > d_in:
            raise ValueError(f"d_out={d_out} must not exceed d_in={d_in}")
        if d_out == d_in:
            return cls.identity(d_in)
        gauss = rng.standard_normal((d_in, d_out))
        q, _ = np.linalg.qr(gauss)
        return cls(q.T.copy(), np.zeros(d_out))


def project(head: ProjectionHead, x: np.ndarray) -> np.ndarray:
    """Apply the head to one vector (1-D) or a batch of row vectors (2-D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != head.d_in:
        raise DimensionMismatch(head.d_in, x.shape[-1])
    return x @ head.weight.T + head.bias


def compute_prototypes(embedded: np.ndarray, labels: np.ndarray, n_way: int) -> np.ndarray:
    """Per-class arithmetic mean of the (possibly augmented) support rows.

    Returns an (n_way, d) array; row c is the prototype of class c.
    """
    embedded = np.asarray(embedded, dtype=np.float64)
    labels = np.asarray(labels)
    protos = np.empty((n_way, embedded.shape[1]))
    for c in range(n_way):
        members = embedded[labels == c]
        if members.shape[0] == 0:
            raise EmptyClass(c)
        protos[c] = members.mean(axis=0)
    return protos


def squared_distances(queries: np.ndarray, protos: np.ndarray) -> np.ndarray:
    """(nq, N) matrix of squared Euclidean distances."""
    diff = queries[:, None, :] - protos[None, :, :]
    return np.einsum("qnd,qnd->qn", diff, diff)


def classify(query_embedded: np.ndarray, protos: np.ndarray) -> np.ndarray:
    """Softmax over negative squared distances to the prototypes.

    Accepts a single query (1-D) or a batch (2-D); rows sum to 1 within
    1e-12 by construction.
    """
    q = np.asarray(query_embedded, dtype=np.float64)
    single = q.ndim == 1
    if single:
        q = q[None, :]
    if q.shape[1] != protos.shape[1]:
        raise DimensionMismatch(protos.shape[1], q.shape[1])
    logits = -squared_distances(q, protos)
    logits -= logits.max(axis=1, keepdims=True)
    expo = np.exp(logits)
    probs = expo / expo.sum(axis=1, keepdims=True)
    return probs[0] if single else probs


def basic_loss(prob_rows: np.ndarray, true_idx: np.ndarray) -> float:
    """Mean cross-entropy of query probability rows against true classes.

    The per-query probability is clamped at 1e-300 before the log, so the
    loss is finite for all finite inputs.
    """
    prob_rows = np.atleast_2d(np.asarray(prob_rows, dtype=np.float64))
    true_idx = np.atleast_1d(np.asarray(true_idx))
    picked = prob_rows[np.arange(prob_rows.shape[0]), true_idx]
    return float(-np.log(np.clip(picked, PROB_FLOOR, None)).mean())


def save_head(head: ProjectionHead, path) -> None:
    """Checkpoint: header {"d_in","d_out"}, then W row-major, then b."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"d_in": head.d_in, "d_out": head.d_out}) + "\n")
        for row in head.weight:
            fh.write(" ".join(repr(v) for v in row.tolist()) + "\n")
        fh.write(" ".join(repr(v) for v in head.bias.tolist()) + "\n")


def load_head(path) -> ProjectionHead:
    def parse_row(line: str) -> np.ndarray:
        return np.fromiter((float(tok) for tok in line.split()), dtype=np.float64)

    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        d_in, d_out = int(header["d_in"]), int(header["d_out"])
        rows = [parse_row(fh.readline()) for _ in range(d_out)]
        bias = parse_row(fh.readline())
    weight = np.stack(rows)
    if weight.shape != (d_out, d_in) or bias.shape != (d_out,):
        raise DimensionMismatch(d_in, weight.shape[1] if weight.ndim == 2 else -1)
    return ProjectionHead(weight, bias)

"""Loading, validating, indexing, and serializing labeled embedding vectors.

File format (line-oriented text, UTF-8):
    line 1:            {"dim": <int>, "count": <int>}
    lines 2..count+1:  {"id": "<str>", "label": "<str>", "vec": [<float> x dim]}

Vectors are held as float64 regardless of how many digits the file carries;
covariance estimation and Cholesky factorization downstream are sensitive to
precision.  Record order in the file is preserved and is the canonical
ordering used by seeded samplers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CountMismatch,
    DimensionMismatch,
    DuplicateId,
    MalformedLine,
    MissingHeader,
    NonFiniteComponent,
)


@dataclass(frozen=True)
class EmbeddingRecord:
    """One labeled embedding vector."""

    id: str
    label: str
    vector: np.ndarray  # float64, shape (dim,)


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable collection of labeled embeddings with a class index.

    ``class_index`` maps each label to the positions of its records, in file
    order.  Safe for concurrent read after construction.
    """

    dim: int
    records: tuple[EmbeddingRecord, ...]
    class_index: dict[str, tuple[int, ...]] = field(repr=False)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> list[str]:
        """All class labels, sorted (canonical order)."""
        return sorted(self.class_index)

    def vectors(self, positions) -> np.ndarray:
        """Stack the vectors at the given record positions into an array."""
        return np.stack([self.records[p].vector for p in positions])


def make_store(records: list[EmbeddingRecord], dim: int) -> EmbeddingStore:
    """Build a store from in-memory records, enforcing the invariants."""
    if dim <= 0:
        raise ValueError(f"dim must be positive, got {dim}")
    seen_ids: set[str] = set()
    class_index: dict[str, list[int]] = {}
    for pos, rec in enumerate(records):
        vec = np.asarray(rec.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != dim:
            raise DimensionMismatch(dim, int(vec.size))
        if not np.all(np.isfinite(vec)):
            raise NonFiniteComponent(pos + 2)
        if rec.id in seen_ids:
            raise DuplicateId(rec.id)
        seen_ids.add(rec.id)
        class_index.setdefault(rec.label, []).append(pos)
    frozen_index = {label: tuple(positions) for label, positions in class_index.items()}
    return EmbeddingStore(dim=dim, records=tuple(records), class_index=frozen_index)


def load_embeddings(path) -> EmbeddingStore:
    """Load an embedding file, validating every record against the header.

    Raises:
        MissingHeader: first line absent or not a valid header object.
        DimensionMismatch: a record's vector length differs from ``dim``.
        DuplicateId: a record id occurs twice.
        NonFiniteComponent: a vector component is NaN or infinite.
        MalformedLine: a record line is not valid JSON or lacks a field.
        CountMismatch: header count != number of record lines.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise MissingHeader()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError:
            raise MissingHeader("header line is not valid JSON") from None
        if (
            not isinstance(header, dict)
            or not isinstance(header.get("dim"), int)
            or not isinstance(header.get("count"), int)
            or header["dim"] <= 0
            or header["count"] < 0
        ):
            raise MissingHeader("header must be {\"dim\": <positive int>, \"count\": <int>}")
        dim = header["dim"]
        count = header["count"]

        records: list[EmbeddingRecord] = []
        seen_ids: set[str] = set()
        class_index: dict[str, list[int]] = {}
        lineno = 1
        for raw in fh:
            lineno += 1
            if raw.strip() == "":
                raise MalformedLine(lineno, "blank line in record section")
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedLine(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedLine(lineno, "record is not an object")
            try:
                rec_id = obj["id"]
                label = obj["label"]
                vec_raw = obj["vec"]
            except KeyError as exc:
                raise MalformedLine(lineno, f"missing field {exc.args[0]!r}") from None
            if not isinstance(rec_id, str) or not isinstance(label, str):
                raise MalformedLine(lineno, "id and label must be strings")
            if not isinstance(vec_raw, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in vec_raw
            ):
                raise MalformedLine(lineno, "vec must be a list of numbers")
            if len(vec_raw) != dim:
                raise DimensionMismatch(dim, len(vec_raw), line=lineno)
            if not all(math.isfinite(v) for v in vec_raw):
                raise NonFiniteComponent(lineno)
            if rec_id in seen_ids:
                raise DuplicateId(rec_id, line=lineno)
            seen_ids.add(rec_id)
            vec = np.asarray(vec_raw, dtype=np.float64)
            class_index.setdefault(label, []).append(len(records))
            records.append(EmbeddingRecord(id=rec_id, label=label, vector=vec))

    if len(records) != count:
        raise CountMismatch(count, len(records))
    frozen_index = {label: tuple(positions) for label, positions in class_index.items()}
    return EmbeddingStore(dim=dim, records=tuple(records), class_index=frozen_index)


def save_embeddings(store: EmbeddingStore, path) -> None:
    """Write a store back to the file format.

    Floats are serialized with ``repr``-shortest round-trip precision, so
    load -> save -> load reproduces vectors bit-for-bit.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": store.dim, "count": len(store.records)}) + "\n")
        for rec in store.records:
            fh.write(
                json.dumps({"id": rec.id, "label": rec.label, "vec": rec.vector.tolist()})
                + "\n"
            )


def class_summary(store: EmbeddingStore) -> dict[str, int]:
    """Record count per label; counts sum to the total record count."""
    return {label: len(pos) for label, pos in store.class_index.items()}

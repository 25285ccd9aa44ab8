"""Convert a labeled text dataset into the engine's embedding file format.

Input: one JSON object per line, ``{"id","label","text"}``.  Output: the
embedding file (header ``{"dim","count"}``, then ``{"id","label","vec"}``
records in input order) plus a manifest recording the encoder, the pooling
rule, and SHA-256 hashes of input and output.

Encoders:
  ``hash:<dim>``  deterministic offline encoder: each token maps to a fixed
                  Gaussian vector seeded from its bytes, a sentence embeds
                  as the mean over its token vectors.  No downloads, byte
                  reproducible; carries the tests and pipeline dry runs.
  anything else   a transformers checkpoint name (e.g. bert-base-uncased);
                  mean pooling over the final hidden layer, CPU execution.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_TOKEN_RE = re.compile(r"[\w']+")


class ExtractError(Exception):
    """Any input or encoder problem that aborts an extraction run."""


class MalformedInput(ExtractError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class EncoderLoadError(ExtractError):
    def __init__(self, name: str, reason: str):
        super().__init__(f"cannot load encoder {name!r}: {reason}")


@dataclass(frozen=True)
class TextRecord:
    id: str
    label: str
    text: str


def read_text_records(path) -> list[TextRecord]:
    """Parse the input dataset, aborting on the first malformed line."""
    records: list[TextRecord] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.strip() == "":
                raise MalformedInput(lineno, "blank line")
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedInput(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedInput(lineno, "record is not an object")
            try:
                rec_id, label, text = obj["id"], obj["label"], obj["text"]
            except KeyError as exc:
                raise MalformedInput(lineno, f"missing field {exc.args[0]!r}") from None
            if not all(isinstance(v, str) for v in (rec_id, label, text)):
                raise MalformedInput(lineno, "id, label, and text must be strings")
            if text == "":
                raise MalformedInput(lineno, "text must be non-empty")
            if rec_id in seen_ids:
                raise MalformedInput(lineno, f"duplicate id {rec_id!r}")
            seen_ids.add(rec_id)
            records.append(TextRecord(id=rec_id, label=label, text=text))
    return records


class HashEncoder:
    """Deterministic token-hash encoder with mean pooling.

    A token's vector is standard normal, seeded from the blake2s digest of
    its bytes, so the mapping is stable across processes and platforms.
    Text with no word characters embeds as the zero vector.
    """

    def __init__(self, dim: int):
        if dim <= 0:
            raise EncoderLoadError(f"hash:{dim}", "dim must be a positive integer")
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        if token not in self._cache:
            seed = int.from_bytes(hashlib.blake2s(token.encode("utf-8"), digest_size=8).digest(), "big")
            self._cache[token] = np.random.default_rng(seed).standard_normal(self.dim)
        return self._cache[token]

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            tokens = _TOKEN_RE.findall(text.lower())
            if tokens:
                out[i] = np.mean([self._token_vector(t) for t in tokens], axis=0)
        return out


class TransformerEncoder:
    """Pretrained checkpoint with mask-aware mean pooling, CPU only."""

    def __init__(self, name: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderLoadError(name, f"transformers/torch not installed ({exc})") from None
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(name)
            self._model = AutoModel.from_pretrained(name)
        except Exception as exc:
            raise EncoderLoadError(name, str(exc)) from None
        self._torch = torch
        self._model.eval()
        self.dim = int(self._model.config.hidden_size)

    def encode(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        batch = self._tokenizer(texts, padding=True, truncation=True, return_tensors="pt")
        with torch.no_grad():
            states = self._model(**batch).last_hidden_state
        mask = batch["attention_mask"].unsqueeze(-1).to(states.dtype)
        pooled = (states * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        return pooled.double().numpy()


def make_encoder(name: str):
    if name.startswith("hash:"):
        suffix = name[len("hash:"):]
        try:
            dim = int(suffix)
        except ValueError:
            raise EncoderLoadError(name, f"{suffix!r} is not an integer dim") from None
        return HashEncoder(dim)
    return TransformerEncoder(name)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def write_manifest(input_path, output_path, encoder_name: str, batch_size: int, count: int, dim: int) -> None:
    doc = {
        "command": "extract",
        "config": {
            "input": str(input_path),
            "output": str(output_path),
            "encoder": encoder_name,
            "pooling": "mean",
            "batch_size": batch_size,
            "count": count,
            "dim": dim,
        },
        "inputs": {str(input_path): _sha256(input_path)},
        "outputs": {str(output_path): _sha256(output_path)},
    }
    path = Path(str(output_path) + ".manifest.json")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def extract(input_path, encoder_name: str, output_path, batch_size: int = 32) -> int:
    """Embed every input record into the output file; returns the count."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    records = read_text_records(input_path)
    encoder = make_encoder(encoder_name)

    vectors: list[np.ndarray] = []
    for start in range(0, len(records), batch_size):
        batch = records[start:start + batch_size]
        encoded = encoder.encode([r.text for r in batch])
        if not np.all(np.isfinite(encoded)):
            raise ExtractError(
                f"encoder produced non-finite values in batch starting at record {start + 1}"
            )
        vectors.extend(np.asarray(row, dtype=np.float64) for row in encoded)

    with open(output_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": encoder.dim, "count": len(records)}) + "\n")
        for rec, vec in zip(records, vectors):
            fh.write(json.dumps({"id": rec.id, "label": rec.label, "vec": vec.tolist()}) + "\n")
    write_manifest(input_path, output_path, encoder_name, batch_size, len(records), encoder.dim)
    return len(records)

"""Per-record embeddings from final hidden states, plus file and HTTP exchange.

The embedding file format ("ERSM") is fixed so external providers can write
bit-compatible files:

    magic  b"ERSM"
    version  u16 little-endian (currently 1)
    header_len  u32 little-endian
    header  UTF-8 JSON {"n", "d", "provenance", "row_ids"}
    payload  n*d float32 little-endian, row-major
    crc  u32 little-endian, zlib.crc32 over header bytes + payload
"""

from __future__ import annotations

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
import requests
import torch

from . import model as lm
from .bpe import Vocabulary, tokenize

log = logging.getLogger("erasmo.embedding")

ERSM_MAGIC = b"ERSM"
ERSM_VERSION = 1

POOLING_MODES = ("mean", "last_token")
HTTP_BATCH_LIMIT = 64


class EmbeddingFileError(ValueError):
    """Corrupt, truncated, or incompatible embedding file."""


class ProviderError(RuntimeError):
    """Transport failure or malformed response from an embedding provider."""


@dataclass
class EmbeddingMatrix:
    """n x d float32 embeddings with row provenance."""

    data: np.ndarray
    row_ids: list[int] = field(default_factory=list)
    provenance: str = "internal"

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError(f"expected a non-empty 2-D matrix, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("embedding matrix contains non-finite values")
        if not self.row_ids:
            self.row_ids = list(range(self.data.shape[0]))
        if len(self.row_ids) != self.data.shape[0]:
            raise ValueError("row_ids length does not match row count")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def embed_records(
    model: lm.CausalTransformer,
    vocab: Vocabulary,
    records: list[str],
    pooling: str = "mean",
    batch_size: int = 8,
    row_ids: list[int] | None = None,
    provenance: str = "internal",
) -> EmbeddingMatrix:
    """Tokenize, run the model, and pool final hidden states per record.

    Records longer than the context window are truncated from the tail and
    counted in a single warning. Output row order always matches input
    order, independent of batch_size.
    """
    if not records:
        raise ValueError("no records to embed")
    if pooling not in POOLING_MODES:
        raise ValueError(f"pooling must be one of {POOLING_MODES}, got {pooling!r}")
    if vocab.pad_id is None:
        raise ValueError("vocabulary has no PAD token")

    context = model.config.context_len
    sequences = []
    truncated = 0
    for record in records:
        ids = tokenize(vocab, record)
        if len(ids) > context:
            ids = ids[:context]
            truncated += 1
        sequences.append(ids)
    if truncated:
        log.warning("truncated %d of %d records to context length %d",
                    truncated, len(records), context)

    chunks = []
    with torch.no_grad():
        for start in range(0, len(sequences), batch_size):
            batch = sequences[start:start + batch_size]
            lengths = [len(seq) for seq in batch]
            width = max(lengths)
            ids = torch.full((len(batch), width), vocab.pad_id, dtype=torch.long)
            for row, seq in enumerate(batch):
                ids[row, : len(seq)] = torch.as_tensor(seq, dtype=torch.long)
            hidden, _ = lm.forward(model, ids, pad_id=vocab.pad_id)
            pooled = []
            for b, length in enumerate(lengths):
                states = hidden[b, :length]
                pooled.append(states.mean(dim=0) if pooling == "mean" else states[length - 1])
            chunks.append(torch.stack(pooled))
    data = torch.cat(chunks).to(torch.float32).numpy()
    return EmbeddingMatrix(data=data, row_ids=row_ids or [], provenance=provenance)


def save_embeddings(matrix: EmbeddingMatrix, path) -> None:
    header = json.dumps(
        {
            "n": matrix.n,
            "d": matrix.dim,
            "provenance": matrix.provenance,
            "row_ids": matrix.row_ids,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    payload = matrix.data.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(ERSM_MAGIC)
        fh.write(struct.pack("<H", ERSM_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(header + payload)))


def load_embeddings(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 14 or blob[:4] != ERSM_MAGIC:
        raise EmbeddingFileError("not an ERSM embedding file")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != ERSM_VERSION:
        raise EmbeddingFileError(f"unsupported ERSM version {version}")
    (header_len,) = struct.unpack_from("<I", blob, 6)
    header_start = 10
    payload_start = header_start + header_len
    if payload_start + 4 > len(blob):
        raise EmbeddingFileError("truncated header")
    header_bytes = blob[header_start:payload_start]
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EmbeddingFileError(f"bad header: {exc}") from exc
    n, d = int(header["n"]), int(header["d"])
    payload = blob[payload_start:-4]
    if len(payload) != n * d * 4:
        raise EmbeddingFileError(
            f"payload holds {len(payload) // 4} floats, header declares {n}x{d}"
        )
    (crc_stored,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(header_bytes + payload) != crc_stored:
        raise EmbeddingFileError("checksum mismatch")
    data = np.frombuffer(payload, dtype="<f4").reshape(n, d).copy()
    return EmbeddingMatrix(
        data=data,
        row_ids=[int(r) for r in header.get("row_ids", [])],
        provenance=str(header.get("provenance", "external")),
    )


def fetch_embeddings(
    endpoint: str,
    records: list[str],
    timeout: float = 30.0,
    pooling: str = "mean",
) -> EmbeddingMatrix:
    """Pull embeddings from a provider speaking the v1 wire protocol.

    POSTs /v1/embed with at most 64 texts per request and checks that the
    reported dimension stays constant across batches.
    """
    if not records:
        raise ValueError("no records to embed")
    if pooling not in POOLING_MODES:
        raise ValueError(f"pooling must be one of {POOLING_MODES}, got {pooling!r}")
    url = endpoint.rstrip("/") + "/v1/embed"
    rows: list[list[float]] = []
    dim: int | None = None
    for batch_index, start in enumerate(range(0, len(records), HTTP_BATCH_LIMIT)):
        batch = records[start:start + HTTP_BATCH_LIMIT]
        try:
            response = requests.post(
                url, json={"texts": batch, "pooling": pooling}, timeout=timeout
            )
            response.raise_for_status()
            payload = response.json()
        except (requests.RequestException, ValueError) as exc:
            raise ProviderError(f"batch {batch_index}: {exc}") from exc
        if "dim" not in payload or "embeddings" not in payload:
            raise ProviderError(f"batch {batch_index}: response missing dim/embeddings")
        batch_dim = int(payload["dim"])
        vectors = payload["embeddings"]
        if len(vectors) != len(batch):
            raise ProviderError(
                f"batch {batch_index}: sent {len(batch)} texts, got {len(vectors)} vectors"
            )
        if any(len(vec) != batch_dim for vec in vectors):
            raise ProviderError(f"batch {batch_index}: vector length != declared dim")
        if dim is None:
            dim = batch_dim
        elif batch_dim != dim:
            raise ProviderError(
                f"batch {batch_index}: dimension drift {dim} -> {batch_dim}"
            )
        rows.extend(vectors)
    return EmbeddingMatrix(data=np.asarray(rows, dtype=np.float32), provenance=endpoint)

"""Byte-level BPE tokenizer: training, encoding, decoding, serialization.

The base alphabet is all 256 bytes, so any UTF-8 string tokenizes and the
round trip is lossless by construction. Merges never cross the space-based
chunk boundaries used during training.
"""

from __future__ import annotations

import base64
import json
import re
from dataclasses import dataclass, field

FORMAT_TAG = "erasmo-bpe-v1"
DEFAULT_SPECIALS = ("<pad>", "<bos>", "<eos>")
DEFAULT_VOCAB_SIZE = 2048

# one space may attach to the following word; runs of spaces stand alone
_CHUNK_PATTERN = re.compile(rb" ?[^ ]+| +")

TokenSequence = list[int]


@dataclass
class Vocabulary:
    """Token table plus ranked merge list and optional special ids."""

    tokens: list[bytes]
    merges: list[tuple[bytes, bytes]]
    pad_id: int | None = None
    bos_id: int | None = None
    eos_id: int | None = None
    _token_ids: dict[bytes, int] = field(default_factory=dict, repr=False)
    _merge_ranks: dict[tuple[bytes, bytes], int] = field(default_factory=dict, repr=False)
    _chunk_cache: dict[bytes, list[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._token_ids = {tok: i for i, tok in enumerate(self.tokens)}
        self._merge_ranks = {pair: rank for rank, pair in enumerate(self.merges)}
        self._chunk_cache = {}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def special_ids(self) -> set[int]:
        return {i for i in (self.pad_id, self.bos_id, self.eos_id) if i is not None}


def _chunks(data: bytes) -> list[bytes]:
    return _CHUNK_PATTERN.findall(data)


def _count_pairs(word_symbols, word_freqs):
    counts: dict[tuple[bytes, bytes], int] = {}
    for word, symbols in word_symbols.items():
        freq = word_freqs[word]
        for pair in zip(symbols, symbols[1:]):
            counts[pair] = counts.get(pair, 0) + freq
    return counts


def _merge_symbols(symbols: list[bytes], pair: tuple[bytes, bytes]) -> list[bytes]:
    first, second = pair
    merged = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == first and symbols[i + 1] == second:
            merged.append(first + second)
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return merged


def train_bpe(
    corpus: list[str],
    vocab_size: int = DEFAULT_VOCAB_SIZE,
    specials: tuple[str, ...] = DEFAULT_SPECIALS,
) -> Vocabulary:
    """Greedy highest-frequency pair merging up to vocab_size tokens.

    Stops early once no pair occurs at least twice. Frequency ties merge
    the lexicographically smallest pair, so training is deterministic.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if vocab_size < 256 + len(specials):
        raise ValueError(
            f"vocab_size {vocab_size} below byte alphabet plus {len(specials)} specials"
        )

    tokens = [s.encode("utf-8") for s in specials]
    tokens.extend(bytes([b]) for b in range(256))

    word_freqs: dict[bytes, int] = {}
    for line in corpus:
        for chunk in _chunks(line.encode("utf-8")):
            word_freqs[chunk] = word_freqs.get(chunk, 0) + 1
    word_symbols = {word: [bytes([b]) for b in word] for word in word_freqs}

    merges: list[tuple[bytes, bytes]] = []
    pair_counts = _count_pairs(word_symbols, word_freqs)
    while len(tokens) < vocab_size and pair_counts:
        best_pair, best_count = min(
            pair_counts.items(), key=lambda kv: (-kv[1], kv[0])
        )
        if best_count < 2:
            break
        merges.append(best_pair)
        tokens.append(best_pair[0] + best_pair[1])
        for word, symbols in word_symbols.items():
            if best_pair[0] not in symbols:
                continue
            merged = _merge_symbols(symbols, best_pair)
            if len(merged) == len(symbols):
                continue
            freq = word_freqs[word]
            for pair in zip(symbols, symbols[1:]):
                pair_counts[pair] -= freq
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
            for pair in zip(merged, merged[1:]):
                pair_counts[pair] = pair_counts.get(pair, 0) + freq
            word_symbols[word] = merged

    specials_present = len(specials) == 3
    return Vocabulary(
        tokens=tokens,
        merges=merges,
        pad_id=0 if specials_present else None,
        bos_id=1 if specials_present else None,
        eos_id=2 if specials_present else None,
    )


def _encode_chunk(vocab: Vocabulary, chunk: bytes) -> list[int]:
    cached = vocab._chunk_cache.get(chunk)
    if cached is not None:
        return cached
    symbols = [bytes([b]) for b in chunk]
    ranks = vocab._merge_ranks
    while len(symbols) > 1:
        best_rank = None
        best_pair = None
        for pair in zip(symbols, symbols[1:]):
            rank = ranks.get(pair)
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
                best_pair = pair
        if best_pair is None:
            break
        symbols = _merge_symbols(symbols, best_pair)
    ids = [vocab._token_ids[s] for s in symbols]
    if len(vocab._chunk_cache) < 200_000:
        vocab._chunk_cache[chunk] = ids
    return ids


def tokenize(vocab: Vocabulary, text: str) -> TokenSequence:
    """Encode text to ids, BOS prepended and EOS appended when defined."""
    ids: TokenSequence = []
    if vocab.bos_id is not None:
        ids.append(vocab.bos_id)
    for chunk in _chunks(text.encode("utf-8")):
        ids.extend(_encode_chunk(vocab, chunk))
    if vocab.eos_id is not None:
        ids.append(vocab.eos_id)
    return ids


def detokenize(vocab: Vocabulary, seq: TokenSequence) -> str:
    """Decode ids back to text; special ids are stripped first."""
    specials = vocab.special_ids
    parts = []
    for token_id in seq:
        if not 0 <= token_id < len(vocab.tokens):
            raise ValueError(f"token id {token_id} outside vocabulary of size {len(vocab)}")
        if token_id in specials:
            continue
        parts.append(vocab.tokens[token_id])
    return b"".join(parts).decode("utf-8")


def vocabulary_to_json(vocab: Vocabulary) -> str:
    payload = {
        "format": FORMAT_TAG,
        "tokens": [base64.b64encode(tok).decode("ascii") for tok in vocab.tokens],
        "merges": [
            [base64.b64encode(a).decode("ascii"), base64.b64encode(b).decode("ascii")]
            for a, b in vocab.merges
        ],
        "specials": {"pad": vocab.pad_id, "bos": vocab.bos_id, "eos": vocab.eos_id},
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(vocabulary_to_json(vocab))


def load_vocabulary(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported vocabulary format: {payload.get('format')!r}")
    tokens = [base64.b64decode(tok) for tok in payload["tokens"]]
    merges = [
        (base64.b64decode(a), base64.b64decode(b)) for a, b in payload["merges"]
    ]
    specials = payload["specials"]
    return Vocabulary(
        tokens=tokens,
        merges=merges,
        pad_id=specials["pad"],
        bos_id=specials["bos"],
        eos_id=specials["eos"],
    )

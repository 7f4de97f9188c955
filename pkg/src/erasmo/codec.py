"""Tabular data ingestion and row-to-sentence encoding.

Each row becomes an ordered list of "feature is value," clauses. Clause
order can be permuted with a seeded shuffle, and numeric words inside
values can be verbalized, giving the base and nv corpus variants.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass

from .numwords import NumberParseError, parse_number_words, verbalize_word

Cell = str | int | float | None

_INT_LITERAL = re.compile(r"[+-]?\d+")
_FLOAT_LITERAL = re.compile(r"[+-]?(?:\d+\.\d+|\.\d+)")
_WORD_SPLIT = re.compile(r"(\s+)")

CLAUSE_DELIMITER = ","


class SchemaError(ValueError):
    """Header-level problem: duplicate, empty, or delimiter-bearing names."""


class CsvFormatError(ValueError):
    """Row-level parse problem; carries the offending 1-based row number."""

    def __init__(self, row_number: int, message: str):
        super().__init__(f"row {row_number}: {message}")
        self.row_number = row_number


@dataclass(frozen=True)
class TabularDataset:
    """An n x m table of typed cells with uniquely named features."""

    feature_names: tuple[str, ...]
    rows: tuple[tuple[Cell, ...], ...]

    def __post_init__(self):
        if not self.feature_names:
            raise SchemaError("need at least one feature")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise SchemaError("duplicate feature names in header")
        for name in self.feature_names:
            if not name:
                raise SchemaError("empty feature name")
            if CLAUSE_DELIMITER in name:
                raise SchemaError(f"feature name contains {CLAUSE_DELIMITER!r}: {name!r}")
        if not self.rows:
            raise ValueError("need at least one row")
        m = len(self.feature_names)
        for i, row in enumerate(self.rows):
            if len(row) != m:
                raise CsvFormatError(i + 1, f"expected {m} cells, got {len(row)}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


@dataclass(frozen=True)
class Clause:
    """One "feature is value," unit of a textual record."""

    feature_name: str
    value_text: str

    @property
    def rendered(self) -> str:
        return f"{self.feature_name} is {self.value_text}{CLAUSE_DELIMITER}"


@dataclass(frozen=True)
class TextualRecord:
    """Clauses of one row, stored in (possibly permuted) output order.

    permutation[j] is the source column of the clause at position j, so a
    freshly encoded row carries the identity permutation.
    """

    clauses: tuple[Clause, ...]
    permutation: tuple[int, ...]
    source_row: int

    def __post_init__(self):
        m = len(self.clauses)
        if m == 0:
            raise ValueError("record needs at least one clause")
        if sorted(self.permutation) != list(range(m)):
            raise ValueError("permutation is not a bijection on the clause indices")


def _parse_field(field: str, kind: str | None, row_number: int) -> Cell:
    if field == "":
        return None
    if kind == "text":
        return field
    if _INT_LITERAL.fullmatch(field):
        return int(field)
    if _FLOAT_LITERAL.fullmatch(field):
        return float(field)
    if kind == "numeric":
        raise CsvFormatError(row_number, f"non-numeric field {field!r} in numeric column")
    return field


def load_csv(path, type_hints: dict[str, str] | None = None) -> TabularDataset:
    """Read an RFC-4180 CSV with a mandatory header row.

    Fields that look like optionally signed decimal literals parse as
    numbers, empty fields as missing, everything else as text.
    type_hints maps column names to "text" or "numeric" to override the
    literal rule.
    """
    hints = dict(type_hints or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"empty file: {path}") from None
        unknown = set(hints) - set(header)
        if unknown:
            raise SchemaError(f"type hints for unknown columns: {sorted(unknown)}")
        for name, kind in hints.items():
            if kind not in ("text", "numeric"):
                raise SchemaError(f"bad type hint {kind!r} for column {name!r}")
        column_kinds = [hints.get(name) for name in header]
        rows = []
        for row_number, fields in enumerate(reader, start=2):
            if len(fields) != len(header):
                raise CsvFormatError(
                    row_number, f"expected {len(header)} fields, got {len(fields)}"
                )
            rows.append(
                tuple(
                    _parse_field(field, kind, row_number)
                    for field, kind in zip(fields, column_kinds)
                )
            )
    return TabularDataset(feature_names=tuple(header), rows=tuple(rows))


def render_cell(cell: Cell) -> str:
    """Shortest round-tripping text for a cell; missing renders as "None"."""
    if cell is None:
        return "None"
    if isinstance(cell, bool):
        return str(cell)
    if isinstance(cell, (int, float)):
        return repr(cell)
    return cell


def encode_row(dataset: TabularDataset, i: int) -> TextualRecord:
    """Turn row i into clauses in source column order."""
    if not 0 <= i < dataset.n_rows:
        raise IndexError(f"row index {i} out of range [0, {dataset.n_rows})")
    clauses = tuple(
        Clause(feature_name=name, value_text=render_cell(cell))
        for name, cell in zip(dataset.feature_names, dataset.rows[i])
    )
    return TextualRecord(
        clauses=clauses,
        permutation=tuple(range(dataset.n_features)),
        source_row=i,
    )


_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + _SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def shuffle_record(record: TextualRecord, seed: int) -> TextualRecord:
    """Reorder clauses by a uniform permutation from a seeded generator.

    The splitmix stream is keyed on both the seed and the record's source
    row, so one global seed gives independent per-row permutations.
    """
    m = len(record.clauses)
    state = (seed + (record.source_row + 1) * _SPLITMIX_GAMMA) & _MASK64
    order = list(range(m))
    for i in range(m - 1, 0, -1):
        state, draw = _splitmix64(state)
        j = draw % (i + 1)
        order[i], order[j] = order[j], order[i]
    return TextualRecord(
        clauses=tuple(record.clauses[p] for p in order),
        permutation=tuple(record.permutation[p] for p in order),
        source_row=record.source_row,
    )


def verbalize_value(value_text: str) -> str:
    """Verbalize every whitespace-delimited numeric word, spacing intact."""
    parts = _WORD_SPLIT.split(value_text)
    return "".join(part if part.isspace() else verbalize_word(part) for part in parts)


def verbalize_record(record: TextualRecord) -> TextualRecord:
    """Replace numeric words in every clause value with their spelled form."""
    clauses = tuple(
        Clause(feature_name=c.feature_name, value_text=verbalize_value(c.value_text))
        for c in record.clauses
    )
    return TextualRecord(
        clauses=clauses, permutation=record.permutation, source_row=record.source_row
    )


def parse_verbalized(words: str):
    """Inverse of the verbalization scheme; raises NumberParseError."""
    return parse_number_words(words)


def render(record: TextualRecord) -> str:
    """Join clause renderings with single spaces, final comma retained."""
    return " ".join(clause.rendered for clause in record.clauses)


__all__ = [
    "Cell",
    "Clause",
    "CsvFormatError",
    "NumberParseError",
    "SchemaError",
    "TabularDataset",
    "TextualRecord",
    "encode_row",
    "load_csv",
    "parse_verbalized",
    "render",
    "render_cell",
    "shuffle_record",
    "verbalize_record",
    "verbalize_value",
]

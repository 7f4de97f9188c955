"""End-to-end orchestration: dataset to clustering quality report.

Stages: load CSV, seeded train/test split, textual encoding (base or nv
variant), BPE training, LM training with per-epoch clause reshuffling,
test-row embedding, an algorithm/k sweep scored by silhouette, and report
plus 2-D projection export. Every artifact lands under the output
directory and is checksummed into a manifest; a fixed config yields
byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bpe, codec, model as lm
from .clustering import ALGORITHM_KINDS, AlgorithmSpec, run_algorithm
from .embedding import (
    EmbeddingMatrix,
    embed_records,
    fetch_embeddings,
    load_embeddings,
    save_embeddings,
)
from .metrics import calinski_harabasz, davies_bouldin, silhouette_score

log = logging.getLogger("erasmo.pipeline")

VARIANTS = ("base", "nv")
EPOCH_SEED_STRIDE = 1_000_003


class ConfigError(ValueError):
    """Invalid pipeline configuration or CLI arguments."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage tag."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def _stage(name: str):
    log.info("stage %s: start", name)
    started = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    log.info("stage %s: done in %.2fs", name, time.perf_counter() - started)


@dataclass
class PipelineConfig:
    dataset: str
    out_dir: str
    variant: str = "base"
    seed: int = 0
    shuffle_seed: int | None = None
    test_fraction: float = 0.2
    vocab_size: int = bpe.DEFAULT_VOCAB_SIZE
    model: lm.ModelConfig = field(default_factory=lm.ModelConfig)
    train: lm.TrainConfig = field(default_factory=lm.TrainConfig)
    pooling: str = "mean"
    embeddings_from: str = "internal"
    algorithms: list[str] = field(
        default_factory=lambda: ["kmeans", "kmeans_pp", "ahc_ward", "fuzzy_cm", "spectral"]
    )
    algorithm_params: dict = field(default_factory=dict)
    k_range: list[int] = field(default_factory=lambda: list(range(2, 9)))
    reshuffle_per_epoch: bool = True
    embed_batch_size: int = 8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in [0, 1)")
        if self.pooling not in ("mean", "last_token"):
            raise ConfigError(f"unknown pooling mode {self.pooling!r}")
        if not self.algorithms:
            raise ConfigError("need at least one algorithm")
        for name in self.algorithms:
            if name not in ALGORITHM_KINDS:
                raise ConfigError(f"unknown algorithm {name!r}")
        for name in self.algorithm_params:
            if name not in ALGORITHM_KINDS:
                raise ConfigError(f"algorithm_params for unknown algorithm {name!r}")
        if not self.k_range or min(self.k_range) < 2:
            raise ConfigError("k_range must be non-empty with k >= 2")
        source = self.embeddings_from
        if source != "internal" and not source.startswith(("file:", "http:", "https:")):
            raise ConfigError(
                "embeddings_from must be 'internal', 'file:PATH', or 'http(s)://URL'"
            )
        if self.shuffle_seed is None:
            self.shuffle_seed = self.seed

    def to_dict(self) -> dict:
        payload = {
            "dataset": self.dataset,
            "out_dir": self.out_dir,
            "variant": self.variant,
            "seed": self.seed,
            "shuffle_seed": self.shuffle_seed,
            "test_fraction": self.test_fraction,
            "vocab_size": self.vocab_size,
            "model": vars(self.model).copy(),
            "train": {**vars(self.train), "adam_betas": list(self.train.adam_betas)},
            "pooling": self.pooling,
            "embeddings_from": self.embeddings_from,
            "algorithms": list(self.algorithms),
            "algorithm_params": self.algorithm_params,
            "k_range": list(self.k_range),
            "reshuffle_per_epoch": self.reshuffle_per_epoch,
            "embed_batch_size": self.embed_batch_size,
        }
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(payload)
        try:
            if "model" in data and isinstance(data["model"], dict):
                data["model"] = lm.ModelConfig(**data["model"])
            if "train" in data and isinstance(data["train"], dict):
                train = dict(data["train"])
                if "adam_betas" in train:
                    train["adam_betas"] = tuple(train["adam_betas"])
                data["train"] = lm.TrainConfig(**train)
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    """Read a JSON config file and apply flag overrides on top."""
    payload: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            payload[key] = value
    return PipelineConfig.from_dict(payload)


@dataclass
class ReportEntry:
    approach: str
    algorithm: str
    best_k: int
    ss: float
    chi: float
    dbi: float
    wall_time_s: float = 0.0


@dataclass
class QualityReport:
    """Scores per algorithm plus the silhouette-argmax winner."""

    entries: list[ReportEntry]
    best_algorithm: str
    manifest_hash: str = ""

    @classmethod
    def from_entries(cls, entries: list[ReportEntry]) -> "QualityReport":
        if not entries:
            raise ValueError("report needs at least one entry")
        best = max(range(len(entries)), key=lambda i: (entries[i].ss, -i))
        return cls(entries=entries, best_algorithm=entries[best].algorithm)


def _format_score(value: float, places: int):
    if math.isinf(value):
        return "inf"
    return round(value, places)


def _entry_payload(entry: ReportEntry) -> dict:
    return {
        "approach": entry.approach,
        "algorithm": entry.algorithm,
        "best_k": entry.best_k,
        "ss": _format_score(entry.ss, 4),
        "chi": _format_score(entry.chi, 2),
        "dbi": _format_score(entry.dbi, 4),
    }


def emit_report(report: QualityReport, out_dir, formats=("json", "csv")) -> dict[str, Path]:
    """Write report files; ss uses 4 decimal places, chi 2, dbi 4."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for fmt in formats:
        if fmt == "csv":
            path = out_dir / "report.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["approach", "algorithm", "best_k", "ss", "chi", "dbi"])
                for entry in report.entries:
                    chi = "inf" if math.isinf(entry.chi) else f"{entry.chi:.2f}"
                    writer.writerow(
                        [
                            entry.approach,
                            entry.algorithm,
                            entry.best_k,
                            f"{entry.ss:.4f}",
                            chi,
                            f"{entry.dbi:.4f}",
                        ]
                    )
            written["csv"] = path
        elif fmt == "json":
            path = out_dir / "report.json"
            payload = {
                "entries": [_entry_payload(e) for e in report.entries],
                "best_algorithm": report.best_algorithm,
                "manifest_hash": report.manifest_hash,
            }
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True, indent=2)
                fh.write("\n")
            written["json"] = path
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return written


def project_2d(matrix) -> np.ndarray:
    """Top-2 principal components by power iteration with deflation.

    Sign convention: each component's largest-magnitude coordinate is
    positive. Raises on zero-variance data.
    """
    points = np.asarray(getattr(matrix, "data", matrix), dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise ValueError("need at least 2 points to project")
    centered = points - points.mean(axis=0)
    n, d = centered.shape
    cov = centered.T @ centered / (n - 1)
    if float(np.trace(cov)) <= 0.0:
        raise ValueError("zero-variance data cannot be projected")

    rng = np.random.default_rng(0)
    components = []
    deflated = cov.copy()
    for index in range(2):
        vector = _power_iterate(deflated, rng, previous=components)
        eigenvalue = float(vector @ deflated @ vector)
        components.append(vector)
        deflated = deflated - eigenvalue * np.outer(vector, vector)
    basis = np.stack(components, axis=1)
    for j in range(2):
        pivot = int(np.abs(basis[:, j]).argmax())
        if basis[pivot, j] < 0:
            basis[:, j] = -basis[:, j]
    return centered @ basis


def _power_iterate(A, rng, previous, max_iter=10_000, tol=1e-13):
    d = A.shape[0]
    vector = rng.standard_normal(d)
    for prior in previous:
        vector -= (vector @ prior) * prior
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        vector = np.zeros(d)
        vector[0] = 1.0
    else:
        vector /= norm

    eigenvalue = 0.0
    for _ in range(max_iter):
        step = A @ vector
        for prior in previous:
            step -= (step @ prior) * prior
        norm = float(np.linalg.norm(step))
        if norm < 1e-30:
            # deflated matrix is numerically zero: any orthogonal direction
            for axis in range(d):
                candidate = np.zeros(d)
                candidate[axis] = 1.0
                for prior in previous:
                    candidate -= (candidate @ prior) * prior
                residual = float(np.linalg.norm(candidate))
                if residual > 1e-8:
                    return candidate / residual
            raise ValueError("cannot build an orthogonal direction")
        vector = step / norm
        updated = float(vector @ A @ vector)
        if abs(updated - eigenvalue) <= tol * max(1.0, abs(updated)):
            break
        eigenvalue = updated
    return vector


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def split_rows(n: int, test_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Seeded train/test row split; a zero fraction uses all rows for both."""
    if test_fraction == 0.0:
        everything = list(range(n))
        return everything, everything
    order = np.random.default_rng(seed).permutation(n).tolist()
    test_count = min(max(1, int(round(n * test_fraction))), n - 1)
    test = sorted(order[:test_count])
    train = sorted(order[test_count:])
    return train, test


def encode_rows(
    dataset: codec.TabularDataset,
    rows: list[int],
    variant: str,
    shuffle_seed: int,
) -> list[str]:
    """Render the given rows: encode, shuffle, verbalize for nv, render."""
    rendered = []
    for i in rows:
        record = codec.shuffle_record(codec.encode_row(dataset, i), shuffle_seed)
        if variant == "nv":
            record = codec.verbalize_record(record)
        rendered.append(codec.render(record))
    return rendered


def _token_corpus(vocab, rendered: list[str], context_len: int) -> list[list[int]]:
    sequences = []
    truncated = 0
    for line in rendered:
        ids = bpe.tokenize(vocab, line)
        if len(ids) > context_len:
            ids = ids[:context_len]
            truncated += 1
        sequences.append(ids)
    if truncated:
        log.warning("truncated %d of %d training sequences to context %d",
                    truncated, len(rendered), context_len)
    return sequences


def run_pipeline(config: PipelineConfig) -> QualityReport:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "figures").mkdir(exist_ok=True)
    artifacts: dict[str, Path] = {}

    config_path = out_dir / "config.json"
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    artifacts["config.json"] = config_path

    with _stage("load"):
        dataset = codec.load_csv(config.dataset)

    with _stage("split"):
        train_rows, test_rows = split_rows(
            dataset.n_rows, config.test_fraction, config.seed
        )
        log.info("split: %d train rows, %d test rows", len(train_rows), len(test_rows))

    with _stage("encode"):
        train_corpus = encode_rows(
            dataset, train_rows, config.variant, config.shuffle_seed
        )
        test_corpus = encode_rows(
            dataset, test_rows, config.variant, config.shuffle_seed
        )
        corpus_path = out_dir / "corpus.txt"
        corpus_path.write_text("\n".join(train_corpus) + "\n", encoding="utf-8")
        test_path = out_dir / "test_corpus.txt"
        test_path.write_text("\n".join(test_corpus) + "\n", encoding="utf-8")
        artifacts["corpus.txt"] = corpus_path
        artifacts["test_corpus.txt"] = test_path

    matrix: EmbeddingMatrix | None = None
    source = config.embeddings_from
    if source == "internal":
        with _stage("tokenizer"):
            vocab = bpe.train_bpe(train_corpus, vocab_size=config.vocab_size)
            vocab_path = out_dir / "vocab.json"
            bpe.save_vocabulary(vocab, vocab_path)
            artifacts["vocab.json"] = vocab_path

        with _stage("train"):
            model_config = lm.ModelConfig(
                layers=config.model.layers,
                heads=config.model.heads,
                embed_dim=config.model.embed_dim,
                context_len=config.model.context_len,
                vocab_size=len(vocab),
                dropout=config.model.dropout,
            )
            model = lm.init_params(model_config, config.seed)
            context = model_config.context_len

            def corpus_for_epoch(epoch: int) -> list[list[int]]:
                if epoch == 0 or not config.reshuffle_per_epoch:
                    return _token_corpus(vocab, train_corpus, context)
                epoch_seed = config.shuffle_seed + EPOCH_SEED_STRIDE * epoch
                rendered = encode_rows(dataset, train_rows, config.variant, epoch_seed)
                return _token_corpus(vocab, rendered, context)

            model, trace = lm.train(
                model,
                corpus_for_epoch(0),
                config.train,
                pad_id=vocab.pad_id,
                corpus_per_epoch=corpus_for_epoch if config.reshuffle_per_epoch else None,
            )
            checkpoint_path = out_dir / "checkpoint.bin"
            lm.save_checkpoint(model, checkpoint_path, seed=config.seed)
            trace_path = out_dir / "loss_trace.csv"
            lm.save_loss_trace(trace, trace_path)
            artifacts["checkpoint.bin"] = checkpoint_path
            artifacts["loss_trace.csv"] = trace_path

        with _stage("embed"):
            matrix = embed_records(
                model,
                vocab,
                test_corpus,
                pooling=config.pooling,
                batch_size=config.embed_batch_size,
                row_ids=test_rows,
                provenance=f"internal:seed={config.seed}:pooling={config.pooling}",
            )
    elif source.startswith("file:"):
        with _stage("embed"):
            matrix = load_embeddings(source[len("file:"):])
    else:
        with _stage("embed"):
            matrix = fetch_embeddings(source, test_corpus, pooling=config.pooling)
            matrix.row_ids = list(test_rows)

    embeddings_path = out_dir / "embeddings.ersm"
    save_embeddings(matrix, embeddings_path)
    artifacts["embeddings.ersm"] = embeddings_path

    approach = f"erasmo_{config.variant}"
    entries: list[ReportEntry] = []
    assignments = {}
    sweeps: dict[str, list[tuple[int, float]]] = {}
    with _stage("cluster"):
        n = matrix.n
        ks = [k for k in sorted(set(config.k_range)) if k <= n - 1]
        if not ks:
            raise ValueError(f"no usable k in range for {n} embedded rows")
        for name in config.algorithms:
            spec = AlgorithmSpec(kind=name, params=config.algorithm_params.get(name, {}))
            started = time.perf_counter()
            sweep = []
            best = None
            for k in ks:
                assignment = run_algorithm(matrix, k, spec)
                score = silhouette_score(matrix, assignment.labels)
                sweep.append((k, score))
                if best is None or score > best[2]:
                    best = (k, assignment, score)
            best_k, assignment, ss = best
            elapsed = time.perf_counter() - started
            sweeps[name] = sweep
            assignments[name] = assignment
            entries.append(
                ReportEntry(
                    approach=approach,
                    algorithm=name,
                    best_k=best_k,
                    ss=ss,
                    chi=calinski_harabasz(matrix, assignment.labels),
                    dbi=davies_bouldin(matrix, assignment.labels),
                    wall_time_s=elapsed,
                )
            )
            log.info("%s: best_k=%d ss=%.4f (%.2fs)", name, best_k, ss, elapsed)
            path = out_dir / f"assignments_{name}.csv"
            export_assignment(assignment, matrix.row_ids, path)
            artifacts[path.name] = path

    report = QualityReport.from_entries(entries)

    with _stage("project"):
        coords = project_2d(matrix)
        projection_path = out_dir / "projection.csv"
        with open(projection_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["row_id", "x", "y"])
            for row_id, (x, y) in zip(matrix.row_ids, coords):
                writer.writerow([row_id, repr(float(x)), repr(float(y))])
        artifacts["projection.csv"] = projection_path

        from . import plots

        best_labels = assignments[report.best_algorithm].labels
        figure_path = out_dir / "figures" / f"projection_{report.best_algorithm}.png"
        plots.save_projection_figure(
            coords,
            best_labels,
            title=f"{approach}: {report.best_algorithm} (2-D PCA view)",
            path=figure_path,
        )
        artifacts[f"figures/{figure_path.name}"] = figure_path
        sweep_path = out_dir / "figures" / "silhouette_by_k.png"
        plots.save_sweep_figure(sweeps, title=f"{approach}: silhouette by k", path=sweep_path)
        artifacts["figures/silhouette_by_k.png"] = sweep_path

    with _stage("report"):
        hashes = {name: _sha256(path) for name, path in sorted(artifacts.items())}
        pipeline_hash = hashlib.sha256(
            _canonical_json({"config": config.to_dict(), "artifacts": hashes}).encode()
        ).hexdigest()
        report.manifest_hash = pipeline_hash
        written = emit_report(report, out_dir)
        for fmt, path in written.items():
            hashes[path.name] = _sha256(path)
        manifest = {
            "config_sha256": hashlib.sha256(
                _canonical_json(config.to_dict()).encode()
            ).hexdigest(),
            "artifacts": hashes,
            "manifest_hash": pipeline_hash,
        }
        manifest_path = out_dir / "manifest.json"
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return report


def export_assignment(assignment, row_ids, path) -> None:
    """CSV export: row_id, label, and membership columns for fuzzy output."""
    k = assignment.k
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["row_id", "label"]
        if assignment.memberships is not None:
            header.extend(f"membership_{c}" for c in range(k))
        writer.writerow(header)
        for i, (row_id, label) in enumerate(zip(row_ids, assignment.labels)):
            row = [row_id, int(label)]
            if assignment.memberships is not None:
                row.extend(repr(float(v)) for v in assignment.memberships[i])
            writer.writerow(row)

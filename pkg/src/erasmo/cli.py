"""Command-line entry points.

Subcommands mirror the pipeline stages: run, encode, train, embed,
cluster, report, project. Exit codes: 0 success, 2 configuration error,
3 stage failure. ERASMO_LOG selects the log level (debug/info/warning).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import bpe, codec, model as lm
from .clustering import ALGORITHM_KINDS, AlgorithmSpec, run_algorithm
from .embedding import embed_records, fetch_embeddings, load_embeddings, save_embeddings
from .metrics import calinski_harabasz, davies_bouldin, silhouette_score
from .pipeline import (
    ConfigError,
    PipelineConfig,
    QualityReport,
    ReportEntry,
    StageError,
    emit_report,
    encode_rows,
    export_assignment,
    load_config,
    project_2d,
    run_pipeline,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

log = logging.getLogger("erasmo.cli")


def _setup_logging() -> None:
    level_name = os.environ.get("ERASMO_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--dataset", help="input CSV path")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    parser.add_argument("--variant", choices=("base", "nv"))
    parser.add_argument("--seed", type=int)
    parser.add_argument(
        "--embeddings-from",
        dest="embeddings_from",
        help="internal, file:PATH, or http(s)://URL",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erasmo",
        description="Tabular-to-text encoding, LM training, embeddings, clustering reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline: dataset to quality report")
    _add_run_flags(run)

    encode = sub.add_parser("encode", help="write the encoded corpus for a dataset")
    encode.add_argument("--dataset", required=True)
    encode.add_argument("--out", required=True, help="output corpus file")
    encode.add_argument("--variant", choices=("base", "nv"), default="base")
    encode.add_argument("--seed", type=int, default=0)

    train = sub.add_parser("train", help="train tokenizer and LM on a corpus file")
    train.add_argument("--corpus", required=True, help="one rendered record per line")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--config", help="JSON config for model/train overrides")
    train.add_argument("--seed", type=int)
    train.add_argument("--vocab-size", type=int, dest="vocab_size")

    embed = sub.add_parser("embed", help="embed records from a checkpoint, file, or provider")
    embed.add_argument("--records", required=True, help="one rendered record per line")
    embed.add_argument("--out", required=True, help="output .ersm file")
    embed.add_argument("--checkpoint", help="LM checkpoint (internal source)")
    embed.add_argument("--vocab", help="vocabulary JSON (internal source)")
    embed.add_argument(
        "--embeddings-from", dest="embeddings_from", default="internal"
    )
    embed.add_argument("--pooling", choices=("mean", "last_token"), default="mean")
    embed.add_argument("--batch-size", type=int, default=8)

    cluster = sub.add_parser("cluster", help="algorithm/k sweep over an embedding file")
    cluster.add_argument("--embeddings", required=True)
    cluster.add_argument("--out", required=True, help="output directory")
    cluster.add_argument(
        "--algorithms", default="kmeans,kmeans_pp,ahc_ward,fuzzy_cm,spectral"
    )
    cluster.add_argument("--k-min", type=int, default=2)
    cluster.add_argument("--k-max", type=int, default=8)
    cluster.add_argument("--approach", default="erasmo_base")

    report = sub.add_parser("report", help="format cluster results as report files")
    report.add_argument("--results", required=True, help="cluster_results.json path")
    report.add_argument("--out", required=True, help="output directory")
    report.add_argument("--formats", default="json,csv")

    project = sub.add_parser("project", help="2-D PCA projection of an embedding file")
    project.add_argument("--embeddings", required=True)
    project.add_argument("--out", required=True, help="output directory")

    return parser


def _cmd_run(args) -> int:
    overrides = {
        key: getattr(args, key)
        for key in ("dataset", "out_dir", "variant", "seed", "embeddings_from")
    }
    config = load_config(args.config, overrides)
    if config.dataset is None or config.out_dir is None:
        raise ConfigError("run needs --dataset and --out (or config keys)")
    report = run_pipeline(config)
    best = next(e for e in report.entries if e.algorithm == report.best_algorithm)
    print(
        f"best algorithm: {report.best_algorithm} "
        f"(k={best.best_k}, ss={best.ss:.4f}, chi={best.chi:.2f}, dbi={best.dbi:.4f})"
    )
    print(f"report written under {config.out_dir}")
    return EXIT_OK


def _cmd_encode(args) -> int:
    dataset = codec.load_csv(args.dataset)
    rendered = encode_rows(
        dataset, list(range(dataset.n_rows)), args.variant, args.seed
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rendered) + "\n", encoding="utf-8")
    print(f"encoded {dataset.n_rows} rows -> {out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.vocab_size is not None:
        overrides["vocab_size"] = args.vocab_size
    overrides.setdefault("dataset", "unused.csv")
    overrides["out_dir"] = args.out
    config = load_config(args.config, overrides)

    corpus = Path(args.corpus).read_text(encoding="utf-8").splitlines()
    corpus = [line for line in corpus if line]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    vocab = bpe.train_bpe(corpus, vocab_size=config.vocab_size)
    bpe.save_vocabulary(vocab, out / "vocab.json")
    model_config = lm.ModelConfig(
        layers=config.model.layers,
        heads=config.model.heads,
        embed_dim=config.model.embed_dim,
        context_len=config.model.context_len,
        vocab_size=len(vocab),
        dropout=config.model.dropout,
    )
    model = lm.init_params(model_config, config.seed)
    sequences = []
    for line in corpus:
        ids = bpe.tokenize(vocab, line)
        sequences.append(ids[: model_config.context_len])
    model, trace = lm.train(model, sequences, config.train, pad_id=vocab.pad_id)
    lm.save_checkpoint(model, out / "checkpoint.bin", seed=config.seed)
    lm.save_loss_trace(trace, out / "loss_trace.csv")
    print(
        f"trained on {len(corpus)} records: first loss {trace[0].loss:.4f}, "
        f"last loss {trace[-1].loss:.4f}; artifacts under {out}"
    )
    return EXIT_OK


def _cmd_embed(args) -> int:
    records = Path(args.records).read_text(encoding="utf-8").splitlines()
    records = [line for line in records if line]
    source = args.embeddings_from
    if source == "internal":
        if not args.checkpoint or not args.vocab:
            raise ConfigError("internal embedding needs --checkpoint and --vocab")
        model, _ = lm.load_checkpoint(args.checkpoint)
        vocab = bpe.load_vocabulary(args.vocab)
        matrix = embed_records(
            model, vocab, records, pooling=args.pooling, batch_size=args.batch_size
        )
    elif source.startswith("file:"):
        matrix = load_embeddings(source[len("file:"):])
    elif source.startswith(("http:", "https:")):
        matrix = fetch_embeddings(source, records, pooling=args.pooling)
    else:
        raise ConfigError(f"bad --embeddings-from value: {source!r}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_embeddings(matrix, out)
    print(f"wrote {matrix.n}x{matrix.dim} embeddings -> {out}")
    return EXIT_OK


def _cmd_cluster(args) -> int:
    matrix = load_embeddings(args.embeddings)
    names = [name.strip() for name in args.algorithms.split(",") if name.strip()]
    for name in names:
        if name not in ALGORITHM_KINDS:
            raise ConfigError(f"unknown algorithm {name!r}")
    if args.k_min < 2 or args.k_max < args.k_min:
        raise ConfigError("need 2 <= k-min <= k-max")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ks = [k for k in range(args.k_min, args.k_max + 1) if k <= matrix.n - 1]
    if not ks:
        raise ConfigError(f"no usable k for {matrix.n} embedded rows")
    entries = []
    for name in names:
        spec = AlgorithmSpec(kind=name)
        best = None
        for k in ks:
            assignment = run_algorithm(matrix, k, spec)
            score = silhouette_score(matrix, assignment.labels)
            if best is None or score > best[2]:
                best = (k, assignment, score)
        best_k, assignment, ss = best
        export_assignment(assignment, matrix.row_ids, out / f"assignments_{name}.csv")
        entries.append(
            {
                "approach": args.approach,
                "algorithm": name,
                "best_k": best_k,
                "ss": ss,
                "chi": calinski_harabasz(matrix, assignment.labels),
                "dbi": davies_bouldin(matrix, assignment.labels),
            }
        )
    results = out / "cluster_results.json"
    with open(results, "w", encoding="utf-8") as fh:
        json.dump({"entries": entries}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"cluster results -> {results}")
    return EXIT_OK


def _cmd_report(args) -> int:
    with open(args.results, encoding="utf-8") as fh:
        payload = json.load(fh)
    entries = [ReportEntry(**entry) for entry in payload["entries"]]
    report = QualityReport.from_entries(entries)
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    written = emit_report(report, args.out, formats=formats)
    for fmt, path in written.items():
        print(f"{fmt} report -> {path}")
    return EXIT_OK


def _cmd_project(args) -> int:
    matrix = load_embeddings(args.embeddings)
    coords = project_2d(matrix)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "projection.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "x", "y"])
        for row_id, (x, y) in zip(matrix.row_ids, coords):
            writer.writerow([row_id, repr(float(x)), repr(float(y))])

    from . import plots

    figure = out / "projection.png"
    plots.save_projection_figure(
        coords, [0] * matrix.n, title="2-D PCA projection", path=figure
    )
    print(f"projection -> {path} and {figure}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "encode": _cmd_encode,
    "train": _cmd_train,
    "embed": _cmd_embed,
    "cluster": _cmd_cluster,
    "report": _cmd_report,
    "project": _cmd_project,
}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"pipeline failure in {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # noqa: BLE001 - map everything else to stage failure
        log.debug("unhandled error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())

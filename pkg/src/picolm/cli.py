"""Command-line entry point.

Subcommands mirror the pipeline stages: ``midi encode|decode``,
``tokenizer train|encode|decode``, ``mask plan|stats``, ``pack``, ``score``
and ``pipeline run``. Logs go to stderr as JSON lines; data goes to files or
stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from . import __version__
from .curriculum_packer import Document, pack, preset, save_manifest, write_blocks
from .mask_planner import (
    default_categories,
    load_categories,
    mask_stats,
    plan_masks,
    plan_to_json,
)
from .midi_text import decode_events, encode_events, parse_smf
from .pipeline import (
    ConfigError,
    PipelineConfig,
    read_encoded_corpus,
    run_pipeline,
    sha256_file,
)
from .pll_scorer import ExternalProvider, NgramProvider, evaluate, load_pairs, write_report
from .unigram_tokenizer import Vocabulary, train_unigram


class _JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        message = record.getMessage()
        try:
            payload = json.loads(message)
            if not isinstance(payload, dict):
                raise ValueError
        except (json.JSONDecodeError, ValueError):
            payload = {"msg": message}
        payload.setdefault("level", record.levelname.lower())
        payload.setdefault("logger", record.name)
        return json.dumps(payload, sort_keys=True)


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLineFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _load_category_arg(value: str | None):
    if value is None or value == "builtin":
        return default_categories()
    return load_categories(Path(value))


# ---------------------------------------------------------------------------
# midi
# ---------------------------------------------------------------------------


def _cmd_midi_encode(args: argparse.Namespace) -> int:
    for path in args.files:
        score = parse_smf(Path(path).read_bytes())
        text = encode_events(score)
        if args.output_dir:
            out = Path(args.output_dir) / (Path(path).stem + ".txt")
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
    return 0


def _cmd_midi_decode(args: argparse.Namespace) -> int:
    text = Path(args.file).read_text(encoding="utf-8") if args.file else sys.stdin.read()
    score = decode_events(text, ticks_per_quarter=args.ticks_per_quarter)
    for te, abs_time in zip(score.events, score.absolute_times()):
        print(f"{abs_time}\t{te.event.kind}\t{te.event.channel}\t{te.event.key}")
    return 0


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------


def _read_documents(paths: list[str]) -> list[str]:
    docs: list[str] = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            docs.extend(line.strip() for line in fh if line.strip())
    return docs


def _cmd_tokenizer_train(args: argparse.Namespace) -> int:
    docs = _read_documents(args.input)
    vocab = train_unigram(
        docs,
        vocab_size=args.vocab_size,
        seed_multiplier=args.seed_multiplier,
        shrink_factor=args.shrink_factor,
        em_iters=args.em_iters,
    )
    vocab.save(args.output)
    logging.getLogger(__name__).info(
        json.dumps({"step": "tokenizer_train", "vocab_size": vocab.size, "model": args.output})
    )
    return 0


def _cmd_tokenizer_encode(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.model)
    lines = (
        Path(args.file).read_text(encoding="utf-8").splitlines() if args.file else sys.stdin.read().splitlines()
    )
    for line in lines:
        print(" ".join(str(i) for i in vocab.encode(line)))
    return 0


def _cmd_tokenizer_decode(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.model)
    lines = (
        Path(args.file).read_text(encoding="utf-8").splitlines() if args.file else sys.stdin.read().splitlines()
    )
    for line in lines:
        ids = [int(tok) for tok in line.split()]
        print(vocab.decode(ids))
    return 0


# ---------------------------------------------------------------------------
# mask
# ---------------------------------------------------------------------------


def _cmd_mask_plan(args: argparse.Namespace) -> int:
    categories = _load_category_arg(args.categories)
    docs = read_encoded_corpus(Path(args.corpus))
    lines: list[str] = []
    for index, doc in enumerate(docs):
        plan = plan_masks(
            doc.ids, doc.words, categories, budget=args.budget, seed=args.seed + index
        )
        text = plan_to_json(index, plan)
        if text:
            lines.append(text)
    output = "\n".join(lines) + ("\n" if lines else "")
    if args.output:
        Path(args.output).write_text(output, encoding="utf-8")
    else:
        sys.stdout.write(output)
    return 0


def _cmd_mask_stats(args: argparse.Namespace) -> int:
    categories = _load_category_arg(args.categories)
    docs = read_encoded_corpus(Path(args.corpus))
    stats = mask_stats(
        ((doc.ids, doc.words) for doc in docs), categories, sample_length=args.sample_length
    )
    payload = {
        "sample_length": args.sample_length,
        "sample_count": stats.sample_count,
        "categories": {
            name: {"total_masks": c.total_masks, "avg_masks_per_sample": c.avg_masks_per_sample}
            for name, c in stats.per_category.items()
        },
    }
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


# ---------------------------------------------------------------------------
# pack
# ---------------------------------------------------------------------------


def _cmd_pack(args: argparse.Namespace) -> int:
    stages = preset(args.preset)
    if args.stage is not None:
        if not 1 <= args.stage <= len(stages):
            print(f"preset {args.preset!r} has stages 1..{len(stages)}", file=sys.stderr)
            return 2
        selected = [(args.stage - 1, stages[args.stage - 1])]
    else:
        selected = list(enumerate(stages))

    corpora = {}
    corpora["text"] = read_encoded_corpus(Path(args.text_corpus)) if args.text_corpus else []
    corpora["music"] = read_encoded_corpus(Path(args.music_corpus)) if args.music_corpus else []

    vocab_sha = sha256_file(Path(args.model)) if args.model else None
    vocab_size = Vocabulary.load(args.model).size if args.model else None

    out_root = Path(args.output_dir)
    for stage_index, stage in selected:
        docs = []
        for source in sorted(stage.sources):
            if not corpora[source]:
                print(f"stage {stage.name} needs a --{source}-corpus", file=sys.stderr)
                return 2
            docs.extend(Document.make(d.doc_id, d.ids) for d in corpora[source])
        stage_dir = out_root / f"stage{stage_index + 1}_len{stage.seq_len}_{stage.mask_policy}"
        stage_dir.mkdir(parents=True, exist_ok=True)
        epochs = args.epochs if args.epochs is not None else stage.epochs
        for epoch in range(epochs):
            epoch_dir = stage_dir / f"epoch{epoch:03d}"
            epoch_dir.mkdir(exist_ok=True)
            manifest = pack(
                docs,
                seq_len=stage.seq_len,
                seed=args.seed + stage_index * 1_000_000 + epoch,
                stage=stage,
                vocab_size=vocab_size,
                vocab_sha=vocab_sha,
            )
            save_manifest(manifest, epoch_dir / "manifest.bin")
            write_blocks(manifest, docs, epoch_dir / "blocks.bin")
        logging.getLogger(__name__).info(
            json.dumps({"step": "pack", "stage": stage.name, "epochs": epochs, "dir": str(stage_dir)})
        )
    return 0


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def _cmd_score(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.model)
    pairs = load_pairs(Path(args.pairs))
    if args.provider == "ngram":
        if not args.train_corpus:
            print("--train-corpus is required for the ngram provider", file=sys.stderr)
            return 2
        stream: list[int] = []
        for doc in read_encoded_corpus(Path(args.train_corpus)):
            stream.extend(doc.ids)
            stream.append(vocab.eos_id)
        provider = NgramProvider(stream, vocab.size, order=args.order, alpha=args.alpha)
        report = evaluate(provider, pairs, vocab)
    else:
        if not args.cmd:
            print("--cmd is required for the external provider", file=sys.stderr)
            return 2
        with ExternalProvider(shlex.split(args.cmd), vocab.size) as provider:
            report = evaluate(provider, pairs, vocab)

    json_path = Path(args.output) if args.output else Path("report.json")
    tsv_path = json_path.with_suffix(".tsv")
    write_report(report, json_path, tsv_path)
    print(json.dumps({"overall_accuracy": report.overall_accuracy, "report": str(json_path)}))
    return 0


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def _cmd_pipeline_run(args: argparse.Namespace) -> int:
    overrides = {
        "output_dir": args.output_dir,
        "preset_name": args.preset,
        "vocab_size": args.vocab_size,
        "pack_seed": args.pack_seed,
        "mask_seed": args.mask_seed,
    }
    try:
        config = PipelineConfig.from_file(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run_pipeline(config)


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="picolm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"picolm {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug-level logs")
    sub = parser.add_subparsers(dest="command", required=True)

    midi = sub.add_parser("midi", help="MIDI <-> event-code text").add_subparsers(
        dest="subcommand", required=True
    )
    enc = midi.add_parser("encode", help="SMF files to event-code text")
    enc.add_argument("files", nargs="+")
    enc.add_argument("--output-dir", help="write one .txt per input instead of stdout")
    enc.set_defaults(fn=_cmd_midi_encode)
    dec = midi.add_parser("decode", help="event-code text to a tab-separated event list")
    dec.add_argument("file", nargs="?")
    dec.add_argument("--ticks-per-quarter", type=int, default=480)
    dec.set_defaults(fn=_cmd_midi_decode)

    tok = sub.add_parser("tokenizer", help="unigram tokenizer").add_subparsers(
        dest="subcommand", required=True
    )
    train = tok.add_parser("train", help="train a vocabulary")
    train.add_argument("--vocab-size", type=int, required=True)
    train.add_argument("--input", nargs="+", required=True, help="text files, one document per line")
    train.add_argument("--output", required=True, help="model file path")
    train.add_argument("--seed-multiplier", type=int, default=4)
    train.add_argument("--shrink-factor", type=float, default=0.75)
    train.add_argument("--em-iters", type=int, default=2)
    train.set_defaults(fn=_cmd_tokenizer_train)
    tenc = tok.add_parser("encode", help="lines of text to lines of ids")
    tenc.add_argument("--model", required=True)
    tenc.add_argument("file", nargs="?")
    tenc.set_defaults(fn=_cmd_tokenizer_encode)
    tdec = tok.add_parser("decode", help="lines of ids to lines of text")
    tdec.add_argument("--model", required=True)
    tdec.add_argument("file", nargs="?")
    tdec.set_defaults(fn=_cmd_tokenizer_decode)

    mask = sub.add_parser("mask", help="targeted mask planning").add_subparsers(
        dest="subcommand", required=True
    )
    plan = mask.add_parser("plan", help="mask plans for an encoded corpus")
    plan.add_argument("--corpus", required=True, help="encoded corpus JSONL")
    plan.add_argument("--categories", default=None, help="category file, or 'builtin'")
    plan.add_argument("--budget", type=float, default=0.15)
    plan.add_argument("--seed", type=int, required=True)
    plan.add_argument("--output")
    plan.set_defaults(fn=_cmd_mask_plan)
    stats = mask.add_parser("stats", help="targeted-mask statistics over packed samples")
    stats.add_argument("--corpus", required=True, help="encoded corpus JSONL")
    stats.add_argument("--categories", default=None)
    stats.add_argument("--sample-length", type=int, default=512)
    stats.set_defaults(fn=_cmd_mask_stats)

    packer = sub.add_parser("pack", help="pack encoded corpora into stage blocks")
    packer.add_argument("--preset", required=True)
    packer.add_argument("--stage", type=int, default=None, help="1-based stage index; default all")
    packer.add_argument("--seed", type=int, required=True)
    packer.add_argument("--text-corpus", help="encoded text corpus JSONL")
    packer.add_argument("--music-corpus", help="encoded music corpus JSONL")
    packer.add_argument("--model", help="vocabulary model, recorded in manifests")
    packer.add_argument("--epochs", type=int, default=None, help="override stage epoch count")
    packer.add_argument("--output-dir", required=True)
    packer.set_defaults(fn=_cmd_pack)

    score = sub.add_parser("score", help="minimal-pair evaluation by pseudo-log-likelihood")
    score.add_argument("--pairs", required=True, help="JSONL minimal pairs")
    score.add_argument("--model", required=True, help="vocabulary model")
    score.add_argument("--provider", choices=("ngram", "external"), default="ngram")
    score.add_argument("--train-corpus", help="encoded corpus JSONL for the ngram provider")
    score.add_argument("--order", type=int, default=2)
    score.add_argument("--alpha", type=float, default=1.0)
    score.add_argument("--cmd", help="external provider command line (one shell-quoted string)")
    score.add_argument("--output", help="report JSON path")
    score.set_defaults(fn=_cmd_score)

    pipe = sub.add_parser("pipeline", help="full pipeline").add_subparsers(
        dest="subcommand", required=True
    )
    run = pipe.add_parser("run", help="run every step from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--output-dir", default=None)
    run.add_argument("--preset", dest="preset", default=None)
    run.add_argument("--vocab-size", type=int, default=None)
    run.add_argument("--pack-seed", type=int, default=None)
    run.add_argument("--mask-seed", type=int, default=None)
    run.set_defaults(fn=_cmd_pipeline_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

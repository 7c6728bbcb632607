"""End-to-end pipeline: config file, step sequencing, manifests, hashing.

`run_pipeline` executes midi encode -> tokenizer train -> corpus encode ->
per-stage packing -> mask planning (targeted stages) -> optional scoring,
entirely driven by explicit seeds, and writes a top-level manifest recording
the tool version, the config hash and one content hash per step. Identical
configs produce byte-identical artifacts.

Each step builds inside a ``<step>.part`` directory that is renamed into
place on success; on failure the partial output is left under a
``<step>.quarantine`` suffix and the run aborts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .curriculum_packer import (
    MUSIC,
    TARGETED_POLICY,
    TEXT,
    Document,
    block_segments,
    iter_blocks,
    load_manifest,
    pack,
    preset,
    preset_names,
    save_manifest,
    write_blocks,
)
from .mask_planner import (
    DEFAULT_BUDGET,
    default_categories,
    load_categories,
    plan_masks,
    plan_to_json,
)
from .midi_text import encode_events, parse_smf
from .pll_scorer import NgramProvider, evaluate, load_pairs, write_report
from .unigram_tokenizer import Vocabulary, WordAlignment, train_unigram

logger = logging.getLogger(__name__)

_STAGE_SEED_STRIDE = 1_000_000
_EPOCH_SEED_STRIDE = 10_000


class ConfigError(ValueError):
    """Invalid or incomplete pipeline configuration."""


class StepError(RuntimeError):
    """A pipeline step failed; carries the step name."""

    def __init__(self, step: str, message: str):
        super().__init__(f"step {step!r}: {message}")
        self.step = step


# ---------------------------------------------------------------------------
# Config file parsing (flat TOML-style sections of key = value lines)
# ---------------------------------------------------------------------------


def _parse_value(raw: str, line_no: int) -> Any:
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw.startswith("[") and raw.endswith("]"):
        inner = raw[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(part.strip(), line_no) for part in inner.split(",")]
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {line_no}: cannot parse value {raw!r}") from None


def parse_config_text(text: str) -> dict[str, dict[str, Any]]:
    """Parse the TOML-style config format: [section] headers, key = value."""
    sections: dict[str, dict[str, Any]] = {}
    current: dict[str, Any] | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name in sections:
                raise ConfigError(f"line {line_no}: duplicate section [{name}]")
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key = value, got {line!r}")
        if current is None:
            raise ConfigError(f"line {line_no}: key outside any [section]")
        key, _, raw_value = line.partition("=")
        current[key.strip()] = _parse_value(raw_value.split("#", 1)[0], line_no)
    return sections


@dataclass
class PipelineConfig:
    text_dir: Path
    output_dir: Path
    preset_name: str
    vocab_size: int
    pack_seed: int
    mask_seed: int
    midi_dir: Path | None = None
    seed_multiplier: int = 4
    shrink_factor: float = 0.75
    em_iters: int = 2
    categories_path: Path | None = None
    budget: float = DEFAULT_BUDGET
    score_pairs: Path | None = None
    ngram_order: int = 2
    ngram_alpha: float = 1.0

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict[str, Any] | None = None) -> "PipelineConfig":
        sections = parse_config_text(Path(path).read_text(encoding="utf-8"))
        base = Path(path).resolve().parent

        def section(name: str) -> dict[str, Any]:
            return sections.get(name, {})

        def path_of(value: Any) -> Path:
            p = Path(value)
            return p if p.is_absolute() else base / p

        paths, tok, packing, mask, seeds, score = (
            section("paths"),
            section("tokenizer"),
            section("pack"),
            section("mask"),
            section("seeds"),
            section("score"),
        )
        merged = {
            "text_dir": paths.get("text_dir"),
            "midi_dir": paths.get("midi_dir"),
            "output_dir": paths.get("output_dir"),
            "vocab_size": tok.get("vocab_size"),
            "seed_multiplier": tok.get("seed_multiplier", 4),
            "shrink_factor": tok.get("shrink_factor", 0.75),
            "em_iters": tok.get("em_iters", 2),
            "preset_name": packing.get("preset"),
            "categories_path": mask.get("categories"),
            "budget": mask.get("budget", DEFAULT_BUDGET),
            "pack_seed": seeds.get("pack"),
            "mask_seed": seeds.get("mask"),
            "score_pairs": score.get("pairs"),
            "ngram_order": score.get("order", 2),
            "ngram_alpha": score.get("alpha", 1.0),
        }
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value

        for required in ("text_dir", "output_dir", "preset_name", "vocab_size"):
            if merged.get(required) is None:
                raise ConfigError(f"missing required config value: {required}")
        for seed_key in ("pack_seed", "mask_seed"):
            if merged.get(seed_key) is None:
                raise ConfigError(f"missing required seed: {seed_key} (seeds must be explicit)")

        return cls(
            text_dir=path_of(merged["text_dir"]),
            midi_dir=path_of(merged["midi_dir"]) if merged.get("midi_dir") else None,
            output_dir=path_of(merged["output_dir"]),
            preset_name=str(merged["preset_name"]),
            vocab_size=int(merged["vocab_size"]),
            seed_multiplier=int(merged["seed_multiplier"]),
            shrink_factor=float(merged["shrink_factor"]),
            em_iters=int(merged["em_iters"]),
            categories_path=path_of(merged["categories_path"]) if merged.get("categories_path") else None,
            budget=float(merged["budget"]),
            pack_seed=int(merged["pack_seed"]),
            mask_seed=int(merged["mask_seed"]),
            score_pairs=path_of(merged["score_pairs"]) if merged.get("score_pairs") else None,
            ngram_order=int(merged["ngram_order"]),
            ngram_alpha=float(merged["ngram_alpha"]),
        )

    def validate(self) -> list:
        """Check paths and preset before any work is done."""
        if self.preset_name not in preset_names():
            raise ConfigError(
                f"unknown preset {self.preset_name!r}; valid: {', '.join(preset_names())}"
            )
        stages = preset(self.preset_name)
        if not self.text_dir.is_dir():
            raise ConfigError(f"text_dir does not exist: {self.text_dir}")
        needs_music = any(MUSIC in stage.sources for stage in stages)
        if needs_music:
            if self.midi_dir is None:
                raise ConfigError(f"preset {self.preset_name!r} uses music but no midi_dir is set")
            if not self.midi_dir.is_dir():
                raise ConfigError(f"midi_dir does not exist: {self.midi_dir}")
        if self.categories_path is not None and not self.categories_path.is_file():
            raise ConfigError(f"category file does not exist: {self.categories_path}")
        if self.score_pairs is not None and not self.score_pairs.is_file():
            raise ConfigError(f"pairs file does not exist: {self.score_pairs}")
        return stages

    def to_dict(self) -> dict[str, Any]:
        return {
            "text_dir": str(self.text_dir),
            "midi_dir": str(self.midi_dir) if self.midi_dir else None,
            "output_dir": str(self.output_dir),
            "preset": self.preset_name,
            "vocab_size": self.vocab_size,
            "seed_multiplier": self.seed_multiplier,
            "shrink_factor": self.shrink_factor,
            "em_iters": self.em_iters,
            "categories": str(self.categories_path) if self.categories_path else None,
            "budget": self.budget,
            "pack_seed": self.pack_seed,
            "mask_seed": self.mask_seed,
            "score_pairs": str(self.score_pairs) if self.score_pairs else None,
            "ngram_order": self.ngram_order,
            "ngram_alpha": self.ngram_alpha,
        }


# ---------------------------------------------------------------------------
# Hashing helpers
# ---------------------------------------------------------------------------


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_tree(root: Path) -> str:
    """Hash a directory: relative paths and file contents, sorted."""
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode("utf-8"))
        digest.update(b"\0")
        digest.update(sha256_file(path).encode("ascii"))
        digest.update(b"\0")
    return digest.hexdigest()


def config_sha(config: PipelineConfig) -> str:
    return sha256_bytes(json.dumps(config.to_dict(), sort_keys=True).encode("utf-8"))


# ---------------------------------------------------------------------------
# Corpus representation on disk
# ---------------------------------------------------------------------------


@dataclass
class EncodedDoc:
    doc_id: str
    source: str  # TEXT or MUSIC
    text: str
    ids: list[int]
    words: list[WordAlignment] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "doc_id": self.doc_id,
                "source": self.source,
                "text": self.text,
                "ids": self.ids,
                "words": [
                    [w.text, w.char_start, w.char_end, w.token_start, w.token_end]
                    for w in self.words
                ],
            },
            sort_keys=True,
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "EncodedDoc":
        obj = json.loads(line)
        return cls(
            doc_id=obj["doc_id"],
            source=obj["source"],
            text=obj["text"],
            ids=obj["ids"],
            words=[WordAlignment(*w) for w in obj["words"]],
        )


def read_encoded_corpus(path: Path) -> list[EncodedDoc]:
    with open(path, encoding="utf-8") as fh:
        return [EncodedDoc.from_json(line) for line in fh if line.strip()]


def _iter_text_documents(text_dir: Path):
    """Yield (doc_id, text) per nonblank line of every .txt file, sorted."""
    for path in sorted(text_dir.glob("*.txt")):
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if line:
                    yield f"{TEXT}/{path.stem}:{line_no}", line


# ---------------------------------------------------------------------------
# Pipeline steps
# ---------------------------------------------------------------------------


def _step_midi_encode(config: PipelineConfig, step_dir: Path) -> None:
    assert config.midi_dir is not None
    midi_files = sorted(config.midi_dir.glob("*.mid")) + sorted(config.midi_dir.glob("*.midi"))
    if not midi_files:
        raise StepError("midi_encode", f"no MIDI files in {config.midi_dir}")
    for path in midi_files:
        score = parse_smf(path.read_bytes())
        (step_dir / f"{path.stem}.txt").write_text(encode_events(score) + "\n", encoding="utf-8")
    logger.info(json.dumps({"step": "midi_encode", "files": len(midi_files)}))


def _step_tokenizer_train(config: PipelineConfig, step_dir: Path, midi_text_dir: Path | None) -> Vocabulary:
    docs = [text for _id, text in _iter_text_documents(config.text_dir)]
    if midi_text_dir is not None:
        for path in sorted(midi_text_dir.glob("*.txt")):
            docs.append(path.read_text(encoding="utf-8").strip())
    vocab = train_unigram(
        docs,
        vocab_size=config.vocab_size,
        seed_multiplier=config.seed_multiplier,
        shrink_factor=config.shrink_factor,
        em_iters=config.em_iters,
    )
    vocab.save(step_dir / "vocab.model")
    logger.info(json.dumps({"step": "tokenizer_train", "vocab_size": vocab.size, "documents": len(docs)}))
    return vocab


def _step_corpus_encode(
    config: PipelineConfig, step_dir: Path, vocab: Vocabulary, midi_text_dir: Path | None
) -> dict[str, list[EncodedDoc]]:
    corpora: dict[str, list[EncodedDoc]] = {TEXT: [], MUSIC: []}
    for doc_id, text in _iter_text_documents(config.text_dir):
        ids, words, normalized = vocab.encode_with_words(text)
        corpora[TEXT].append(EncodedDoc(doc_id, TEXT, normalized, ids, words))
    if midi_text_dir is not None:
        for path in sorted(midi_text_dir.glob("*.txt")):
            text = path.read_text(encoding="utf-8").strip()
            ids, words, normalized = vocab.encode_with_words(text)
            corpora[MUSIC].append(EncodedDoc(f"{MUSIC}/{path.stem}", MUSIC, normalized, ids, words))
    for source, docs in corpora.items():
        if docs:
            with open(step_dir / f"{source}.jsonl", "w", encoding="utf-8") as fh:
                for doc in docs:
                    fh.write(doc.to_json() + "\n")
    logger.info(
        json.dumps(
            {"step": "corpus_encode", "text_docs": len(corpora[TEXT]), "music_docs": len(corpora[MUSIC])}
        )
    )
    return corpora


def _stage_dir_name(index: int, stage) -> str:
    return f"stage{index + 1}_len{stage.seq_len}_{stage.mask_policy}"


def _step_pack_stages(
    config: PipelineConfig,
    step_dir: Path,
    stages,
    corpora: dict[str, list[EncodedDoc]],
    vocab: Vocabulary,
    vocab_sha: str,
) -> None:
    for stage_index, stage in enumerate(stages):
        stage_dir = step_dir / _stage_dir_name(stage_index, stage)
        stage_dir.mkdir(parents=True)
        docs: list[Document] = []
        for source in (TEXT, MUSIC):
            if source in stage.sources:
                docs.extend(Document.make(d.doc_id, d.ids) for d in corpora[source])
        if not docs:
            raise StepError("pack", f"stage {stage.name}: no documents for sources {sorted(stage.sources)}")
        base_seed = config.pack_seed + stage_index * _STAGE_SEED_STRIDE
        epoch_hashes = []
        for epoch in range(stage.epochs):
            epoch_dir = stage_dir / f"epoch{epoch:03d}"
            epoch_dir.mkdir()
            manifest = pack(
                docs,
                seq_len=stage.seq_len,
                seed=base_seed + epoch,
                stage=stage,
                vocab_size=vocab.size,
                vocab_sha=vocab_sha,
            )
            save_manifest(manifest, epoch_dir / "manifest.bin")
            write_blocks(manifest, docs, epoch_dir / "blocks.bin")
            epoch_hashes.append(sha256_file(epoch_dir / "blocks.bin"))
        stage_info = {
            "stage": stage.to_dict(),
            "base_seed": base_seed,
            "epochs": stage.epochs,
            "block_hashes": epoch_hashes,
        }
        (stage_dir / "stage.json").write_text(
            json.dumps(stage_info, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        logger.info(
            json.dumps({"step": "pack", "stage": stage.name, "seq_len": stage.seq_len, "epochs": stage.epochs})
        )


def _step_mask_plans(
    config: PipelineConfig,
    step_dir: Path,
    pack_dir: Path,
    stages,
    corpora: dict[str, list[EncodedDoc]],
) -> None:
    categories = (
        load_categories(config.categories_path) if config.categories_path else default_categories()
    )
    for stage_index, stage in enumerate(stages):
        if stage.mask_policy != TARGETED_POLICY:
            continue
        docs: list[EncodedDoc] = []
        for source in (TEXT, MUSIC):
            if source in stage.sources:
                docs.extend(corpora[source])
        pack_docs = [Document.make(d.doc_id, d.ids) for d in docs]
        out_stage_dir = step_dir / _stage_dir_name(stage_index, stage)
        out_stage_dir.mkdir(parents=True)
        for epoch in range(stage.epochs):
            manifest = load_manifest(
                pack_dir / _stage_dir_name(stage_index, stage) / f"epoch{epoch:03d}" / "manifest.bin"
            )
            segments = block_segments(manifest)
            seed_base = (
                config.mask_seed + stage_index * _STAGE_SEED_STRIDE + epoch * _EPOCH_SEED_STRIDE
            )
            lines: list[str] = []
            for block_index, (block, segs) in enumerate(
                zip(iter_blocks(manifest, pack_docs), segments)
            ):
                words: list[WordAlignment] = []
                for doc_idx, seg_start, seg_end, block_offset in segs:
                    shift = block_offset - seg_start
                    for w in docs[doc_idx].words:
                        if w.token_end <= seg_start or w.token_start >= seg_end:
                            continue
                        words.append(
                            WordAlignment(
                                text=w.text,
                                char_start=w.char_start,
                                char_end=w.char_end,
                                token_start=max(w.token_start, seg_start) + shift,
                                token_end=min(w.token_end, seg_end) + shift,
                            )
                        )
                plan = plan_masks(
                    block.tolist(),
                    words,
                    categories,
                    budget=config.budget,
                    seed=seed_base + block_index,
                )
                text = plan_to_json(block_index, plan)
                if text:
                    lines.append(text)
            (out_stage_dir / f"epoch{epoch:03d}.plans.jsonl").write_text(
                "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
            )
        logger.info(json.dumps({"step": "mask_plan", "stage": stage.name, "epochs": stage.epochs}))


def _step_score(config: PipelineConfig, step_dir: Path, corpora: dict[str, list[EncodedDoc]], vocab: Vocabulary) -> None:
    assert config.score_pairs is not None
    stream: list[int] = []
    for doc in corpora[TEXT]:
        stream.extend(doc.ids)
        stream.append(vocab.eos_id)
    provider = NgramProvider(
        stream, vocab.size, order=config.ngram_order, alpha=config.ngram_alpha
    )
    pairs = load_pairs(config.score_pairs)
    report = evaluate(provider, pairs, vocab)
    write_report(report, step_dir / "report.json", step_dir / "pairs.tsv")
    logger.info(
        json.dumps({"step": "score", "pairs": len(report.records), "overall": report.overall_accuracy})
    )


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def _run_step(out_dir: Path, name: str, config: PipelineConfig, fn: Callable[[Path], Any]) -> Any:
    """Run one step in a .part directory, renaming on success.

    Each completed step directory carries a step.json manifest sufficient to
    re-run it: tool version, config hash and the full resolved config.
    """
    final_dir = out_dir / name
    part_dir = out_dir / f"{name}.part"
    quarantine_dir = out_dir / f"{name}.quarantine"
    for stale in (final_dir, part_dir, quarantine_dir):
        if stale.exists():
            shutil.rmtree(stale)
    part_dir.mkdir(parents=True)
    try:
        result = fn(part_dir)
    except Exception as exc:
        part_dir.rename(quarantine_dir)
        if isinstance(exc, StepError):
            raise
        raise StepError(name, str(exc)) from exc
    (part_dir / "step.json").write_text(
        json.dumps(
            {
                "step": name,
                "tool_version": __version__,
                "config_sha256": config_sha(config),
                "config": config.to_dict(),
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    part_dir.rename(final_dir)
    return result


def run_pipeline(config: PipelineConfig) -> int:
    """Execute every pipeline step; returns a process exit status."""
    try:
        stages = config.validate()
    except ConfigError as exc:
        logger.error(json.dumps({"step": "validate", "error": str(exc)}))
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    step_hashes: dict[str, str] = {}

    try:
        # The tokenizer is shared across presets, so music is encoded and
        # included in its training corpus whenever a MIDI dir is configured,
        # even if the chosen preset packs no music stage.
        midi_text_dir: Path | None = None
        if config.midi_dir is not None:
            _run_step(out_dir, "midi_text", config, lambda d: _step_midi_encode(config, d))
            midi_text_dir = out_dir / "midi_text"
            step_hashes["midi_text"] = sha256_tree(midi_text_dir)

        vocab = _run_step(
            out_dir, "tokenizer", config, lambda d: _step_tokenizer_train(config, d, midi_text_dir)
        )
        step_hashes["tokenizer"] = sha256_tree(out_dir / "tokenizer")
        vocab_sha = sha256_file(out_dir / "tokenizer" / "vocab.model")

        corpora = _run_step(
            out_dir, "corpus", config, lambda d: _step_corpus_encode(config, d, vocab, midi_text_dir)
        )
        step_hashes["corpus"] = sha256_tree(out_dir / "corpus")

        _run_step(
            out_dir,
            "stages",
            config,
            lambda d: _step_pack_stages(config, d, stages, corpora, vocab, vocab_sha),
        )
        step_hashes["stages"] = sha256_tree(out_dir / "stages")

        if any(stage.mask_policy == TARGETED_POLICY for stage in stages):
            _run_step(
                out_dir,
                "mask_plans",
                config,
                lambda d: _step_mask_plans(config, d, out_dir / "stages", stages, corpora),
            )
            step_hashes["mask_plans"] = sha256_tree(out_dir / "mask_plans")

        if config.score_pairs is not None:
            _run_step(out_dir, "score", config, lambda d: _step_score(config, d, corpora, vocab))
            step_hashes["score"] = sha256_tree(out_dir / "score")
    except StepError as exc:
        logger.error(json.dumps({"step": exc.step, "error": str(exc)}))
        print(f"pipeline aborted: {exc}", file=sys.stderr)
        return 1

    manifest = {
        "tool_version": __version__,
        "config_sha256": config_sha(config),
        "config": config.to_dict(),
        "steps": step_hashes,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    logger.info(json.dumps({"step": "done", "manifest": str(out_dir / "manifest.json")}))
    return 0

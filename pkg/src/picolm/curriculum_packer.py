"""Deterministic packing of tokenized documents into fixed-length blocks.

Packing shuffles documents with a seeded generator, concatenates them with
end-of-sequence separators, slices the stream into consecutive fixed-length
blocks (the trailing remainder is dropped), and shuffles the block order with
the same generator. The resulting :class:`PackManifest` records everything
needed to rematerialize the blocks byte-identically.

`preset` returns the staged training schedules: the three-phase main recipe
and its five ablation variants, each totalling 57 epochs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .unigram_tokenizer import EOS_ID

TEXT = "text"
MUSIC = "music"

RANDOM_POLICY = "random"
TARGETED_POLICY = "targeted"

_MANIFEST_FORMAT = "packmanifest.v1"


class PackError(ValueError):
    """Corpus cannot be packed with the requested parameters."""


@dataclass(frozen=True)
class StageSpec:
    """One curriculum stage: sequence length, epoch count, sources, masking."""

    name: str
    seq_len: int
    epochs: int
    sources: frozenset[str]
    mask_policy: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seq_len": self.seq_len,
            "epochs": self.epochs,
            "sources": sorted(self.sources),
            "mask_policy": self.mask_policy,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "StageSpec":
        return cls(
            name=obj["name"],
            seq_len=obj["seq_len"],
            epochs=obj["epochs"],
            sources=frozenset(obj["sources"]),
            mask_policy=obj["mask_policy"],
        )


@dataclass(frozen=True)
class Document:
    """A tokenized source document."""

    doc_id: str
    ids: tuple[int, ...]

    @classmethod
    def make(cls, doc_id: str, ids: Sequence[int]) -> "Document":
        return cls(doc_id, tuple(int(i) for i in ids))


@dataclass
class PackManifest:
    """Deterministic layout of one packed epoch.

    `doc_order` is the shuffled permutation of document indices,
    `doc_lengths` the per-document token count including the appended
    end-of-sequence separator, `block_order` maps output block position to
    stream block index, and `entries` gives (document index, token offset)
    of each output block's first token.
    """

    seq_len: int
    seed: int
    block_count: int
    total_tokens: int
    doc_ids: list[str]
    doc_order: list[int]
    doc_lengths: list[int]
    block_order: list[int]
    entries: list[tuple[int, int]]
    stage: StageSpec | None = None
    vocab_size: int | None = None
    vocab_sha: str | None = None
    dropped_tokens: int = field(init=False)

    def __post_init__(self):
        self.dropped_tokens = self.total_tokens - self.block_count * self.seq_len


def _document_length(doc: Document) -> int:
    # One eos separator is appended unless the document already ends with it.
    if doc.ids and doc.ids[-1] == EOS_ID:
        return len(doc.ids)
    return len(doc.ids) + 1


def _stream_ids(doc: Document) -> tuple[int, ...]:
    if doc.ids and doc.ids[-1] == EOS_ID:
        return doc.ids
    return doc.ids + (EOS_ID,)


def pack(
    documents: Sequence[Document],
    seq_len: int,
    seed: int,
    stage: StageSpec | None = None,
    vocab_size: int | None = None,
    vocab_sha: str | None = None,
) -> PackManifest:
    """Pack documents into `seq_len`-token blocks under a seeded shuffle."""
    if seq_len <= 0:
        raise PackError("seq_len must be positive")
    if not documents:
        raise PackError("no documents to pack")

    rng = random.Random(seed)
    doc_order = list(range(len(documents)))
    rng.shuffle(doc_order)

    doc_lengths = [_document_length(doc) for doc in documents]
    total_tokens = sum(doc_lengths)
    block_count = total_tokens // seq_len
    if block_count == 0:
        raise PackError(
            f"corpus of {total_tokens} tokens is shorter than one {seq_len}-token block"
        )

    block_order = list(range(block_count))
    rng.shuffle(block_order)

    # Prefix sums over the shuffled stream locate each block's first token.
    starts: list[int] = []
    acc = 0
    for idx in doc_order:
        starts.append(acc)
        acc += doc_lengths[idx]

    entries: list[tuple[int, int]] = []
    for block in block_order:
        stream_pos = block * seq_len
        # rightmost document starting at or before stream_pos
        lo, hi = 0, len(starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if starts[mid] <= stream_pos:
                lo = mid
            else:
                hi = mid - 1
        entries.append((doc_order[lo], stream_pos - starts[lo]))

    return PackManifest(
        seq_len=seq_len,
        seed=seed,
        block_count=block_count,
        total_tokens=total_tokens,
        doc_ids=[doc.doc_id for doc in documents],
        doc_order=doc_order,
        doc_lengths=doc_lengths,
        block_order=block_order,
        entries=entries,
        stage=stage,
        vocab_size=vocab_size,
        vocab_sha=vocab_sha,
    )


def _stream_array(manifest: PackManifest, documents: Sequence[Document]) -> np.ndarray:
    parts = [
        np.asarray(_stream_ids(documents[idx]), dtype=np.uint32) for idx in manifest.doc_order
    ]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint32)


def iter_blocks(manifest: PackManifest, documents: Sequence[Document]) -> Iterator[np.ndarray]:
    """Yield blocks in output order as uint32 arrays of length seq_len."""
    stream = _stream_array(manifest, documents)
    for block in manifest.block_order:
        yield stream[block * manifest.seq_len : (block + 1) * manifest.seq_len]


def block_segments(manifest: PackManifest) -> list[list[tuple[int, int, int, int]]]:
    """Per output block, the document slices it is assembled from.

    Each segment is (document index, start offset, end offset, block offset),
    offsets counted in stream tokens (document tokens plus the trailing
    end-of-sequence separator).
    """
    starts: list[int] = []
    acc = 0
    for idx in manifest.doc_order:
        starts.append(acc)
        acc += manifest.doc_lengths[idx]

    segments: list[list[tuple[int, int, int, int]]] = []
    for block in manifest.block_order:
        begin = block * manifest.seq_len
        end = begin + manifest.seq_len
        segs: list[tuple[int, int, int, int]] = []
        lo, hi = 0, len(starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if starts[mid] <= begin:
                lo = mid
            else:
                hi = mid - 1
        pos = begin
        k = lo
        while pos < end:
            doc_idx = manifest.doc_order[k]
            doc_start = pos - starts[k]
            take = min(end - pos, manifest.doc_lengths[doc_idx] - doc_start)
            segs.append((doc_idx, doc_start, doc_start + take, pos - begin))
            pos += take
            k += 1
        segments.append(segs)
    return segments


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_manifest(manifest: PackManifest, path: str | Path) -> None:
    """Write a manifest: one JSON header line, then little-endian uint32
    arrays for doc_order, doc_lengths, block_order and the entry table."""
    header = {
        "format": _MANIFEST_FORMAT,
        "seq_len": manifest.seq_len,
        "seed": manifest.seed,
        "block_count": manifest.block_count,
        "total_tokens": manifest.total_tokens,
        "doc_count": len(manifest.doc_ids),
        "doc_ids": manifest.doc_ids,
        "stage": manifest.stage.to_dict() if manifest.stage else None,
        "vocab_size": manifest.vocab_size,
        "vocab_sha": manifest.vocab_sha,
    }
    entry_array = np.asarray(manifest.entries, dtype="<u4").reshape(-1, 2)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.asarray(manifest.doc_order, dtype="<u4").tobytes())
        fh.write(np.asarray(manifest.doc_lengths, dtype="<u4").tobytes())
        fh.write(np.asarray(manifest.block_order, dtype="<u4").tobytes())
        fh.write(entry_array.tobytes())


def load_manifest(path: str | Path) -> PackManifest:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != _MANIFEST_FORMAT:
            raise ValueError(f"{path}: not a pack manifest")
        doc_count = header["doc_count"]
        block_count = header["block_count"]
        doc_order = np.frombuffer(fh.read(4 * doc_count), dtype="<u4").tolist()
        doc_lengths = np.frombuffer(fh.read(4 * doc_count), dtype="<u4").tolist()
        block_order = np.frombuffer(fh.read(4 * block_count), dtype="<u4").tolist()
        raw_entries = np.frombuffer(fh.read(8 * block_count), dtype="<u4").reshape(-1, 2)
    return PackManifest(
        seq_len=header["seq_len"],
        seed=header["seed"],
        block_count=block_count,
        total_tokens=header["total_tokens"],
        doc_ids=header["doc_ids"],
        doc_order=doc_order,
        doc_lengths=doc_lengths,
        block_order=block_order,
        entries=[(int(a), int(b)) for a, b in raw_entries],
        stage=StageSpec.from_dict(header["stage"]) if header.get("stage") else None,
        vocab_size=header.get("vocab_size"),
        vocab_sha=header.get("vocab_sha"),
    )


def write_blocks(manifest: PackManifest, documents: Sequence[Document], path: str | Path) -> None:
    """Materialize all blocks as one flat little-endian uint32 array."""
    with open(path, "wb") as fh:
        for block in iter_blocks(manifest, documents):
            fh.write(block.astype("<u4").tobytes())


# ---------------------------------------------------------------------------
# Stage presets
# ---------------------------------------------------------------------------

_PRESETS: dict[str, list[StageSpec]] = {
    "lil-bevo": [
        StageSpec("stage1", 64, 5, frozenset({TEXT, MUSIC}), RANDOM_POLICY),
        StageSpec("stage2", 128, 50, frozenset({TEXT}), RANDOM_POLICY),
        StageSpec("stage3", 512, 2, frozenset({TEXT}), TARGETED_POLICY),
    ],
    "long-only": [
        StageSpec("stage1", 512, 57, frozenset({TEXT}), RANDOM_POLICY),
    ],
    "short-only": [
        StageSpec("stage1", 128, 57, frozenset({TEXT}), RANDOM_POLICY),
    ],
    "short-target": [
        StageSpec("stage1", 128, 55, frozenset({TEXT}), RANDOM_POLICY),
        StageSpec("stage2", 512, 2, frozenset({TEXT}), TARGETED_POLICY),
    ],
    "music-short": [
        StageSpec("stage1", 64, 5, frozenset({TEXT, MUSIC}), RANDOM_POLICY),
        StageSpec("stage2", 128, 52, frozenset({TEXT}), RANDOM_POLICY),
    ],
    "music-short-long": [
        StageSpec("stage1", 64, 5, frozenset({TEXT, MUSIC}), RANDOM_POLICY),
        StageSpec("stage2", 128, 50, frozenset({TEXT}), RANDOM_POLICY),
        StageSpec("stage3", 512, 2, frozenset({TEXT}), RANDOM_POLICY),
    ],
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def preset(name: str) -> list[StageSpec]:
    """Return the stage list of a named training schedule."""
    try:
        return list(_PRESETS[name])
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; valid presets: {', '.join(preset_names())}"
        ) from None

"""Readers for the data toolkit's on-disk artifact formats.

These parse the documented external formats directly (vocabulary model file,
pack manifest header + blocks.bin, mask-plan JSON lines, pipeline output
layout) so the trainer has no code dependency on the toolkit package.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NUM_CONTROLS = 5
PAD_ID, UNK_ID, EOS_ID, MASK_ID, CLS_ID = 0, 1, 2, 3, 4
CONTROL_HEADER = ("<pad>", "<unk>", "</s>", "<mask>", "<cls>")

_STAGE_DIR_RE = re.compile(r"stage(\d+)_len(\d+)_(random|targeted)$")


@dataclass(frozen=True)
class VocabInfo:
    path: Path
    size: int
    sha256: str


def read_vocab_info(path: str | Path) -> VocabInfo:
    """Validate the model file header and report size + content hash."""
    path = Path(path)
    data = path.read_bytes()
    lines = data.decode("utf-8").splitlines()
    if len(lines) < NUM_CONTROLS:
        raise ValueError(f"{path}: shorter than the control-symbol header")
    for i, surface in enumerate(CONTROL_HEADER):
        if lines[i].split("\t")[0] != surface:
            raise ValueError(f"{path}: header line {i + 1} is not {surface}")
    n_pieces = sum(1 for line in lines[NUM_CONTROLS:] if line)
    return VocabInfo(path=path, size=NUM_CONTROLS + n_pieces, sha256=hashlib.sha256(data).hexdigest())


@dataclass
class EpochData:
    """One packed epoch: the manifest header and the materialized blocks."""

    seq_len: int
    block_count: int
    vocab_size: int | None
    vocab_sha: str | None
    blocks: np.ndarray  # (block_count, seq_len) uint32


def read_epoch(epoch_dir: str | Path) -> EpochData:
    epoch_dir = Path(epoch_dir)
    with open(epoch_dir / "manifest.bin", "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
    if header.get("format") != "packmanifest.v1":
        raise ValueError(f"{epoch_dir}: not a pack manifest")
    seq_len, block_count = header["seq_len"], header["block_count"]
    raw = np.fromfile(epoch_dir / "blocks.bin", dtype="<u4")
    if raw.size != seq_len * block_count:
        raise ValueError(
            f"{epoch_dir}: blocks.bin holds {raw.size} ids, expected {seq_len * block_count}"
        )
    return EpochData(
        seq_len=seq_len,
        block_count=block_count,
        vocab_size=header.get("vocab_size"),
        vocab_sha=header.get("vocab_sha"),
        blocks=raw.reshape(block_count, seq_len),
    )


@dataclass
class StageData:
    index: int
    name: str
    seq_len: int
    mask_policy: str
    path: Path
    epoch_dirs: list[Path] = field(default_factory=list)
    plan_files: dict[int, Path] = field(default_factory=dict)  # epoch -> plans.jsonl


def discover_stages(stages_dir: str | Path, plans_dir: str | Path | None = None) -> list[StageData]:
    """Find stage directories (stage<N>_len<L>_<policy>) and their epochs,
    pairing targeted stages with their mask-plan files when present."""
    stages_dir = Path(stages_dir)
    stages: list[StageData] = []
    for child in sorted(stages_dir.iterdir()):
        match = _STAGE_DIR_RE.match(child.name)
        if not child.is_dir() or not match:
            continue
        stage = StageData(
            index=int(match.group(1)),
            name=child.name,
            seq_len=int(match.group(2)),
            mask_policy=match.group(3),
            path=child,
            epoch_dirs=sorted(p for p in child.iterdir() if p.is_dir() and p.name.startswith("epoch")),
        )
        if plans_dir is not None:
            plan_stage_dir = Path(plans_dir) / child.name
            if plan_stage_dir.is_dir():
                for plan_file in sorted(plan_stage_dir.glob("epoch*.plans.jsonl")):
                    epoch = int(plan_file.name[len("epoch") : len("epoch") + 3])
                    stage.plan_files[epoch] = plan_file
        stages.append(stage)
    if not stages:
        raise ValueError(f"no stage directories under {stages_dir}")
    return stages


@dataclass(frozen=True)
class PlanAction:
    position: int
    action: str
    source: str

    @property
    def targeted(self) -> bool:
        return self.source != "random_fill"


def read_plans(path: str | Path) -> dict[int, list[PlanAction]]:
    """Mask-plan JSON lines grouped by sample index."""
    plans: dict[int, list[PlanAction]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            plans.setdefault(obj["sample_index"], []).append(
                PlanAction(position=obj["position"], action=obj["action"], source=obj["source"])
            )
    return plans


@dataclass(frozen=True)
class Workspace:
    """A pipeline output directory: vocabulary, stages, optional plans."""

    root: Path
    vocab: VocabInfo
    stages: list[StageData]


def open_workspace(root: str | Path) -> Workspace:
    root = Path(root)
    vocab = read_vocab_info(root / "tokenizer" / "vocab.model")
    plans_dir = root / "mask_plans"
    stages = discover_stages(root / "stages", plans_dir if plans_dir.is_dir() else None)
    return Workspace(root=root, vocab=vocab, stages=stages)

"""Staged MLM training over packed blocks and mask plans.

Stages run in order, each initialized from the previous stage's weights, with
a fresh decoupled-weight-decay optimizer and a linear warmup + linear decay
schedule per stage. Targeted stages take their mask positions and actions
from the toolkit's mask plans; random stages sample 15% of positions
uniformly with the 80/10/10 mask/random/keep split. One checkpoint is saved
per stage.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .formats import MASK_ID, NUM_CONTROLS, PlanAction, StageData, Workspace, read_epoch, read_plans
from .model import MaskedLMEncoder, parameter_hash

logger = logging.getLogger(__name__)

IGNORE_INDEX = -100


class VocabMismatchError(RuntimeError):
    """Manifest, vocabulary file and checkpoint disagree about the vocabulary."""


@dataclass
class TrainConfig:
    """Desk-scale defaults; the optimizer hyperparameters are the recipe's
    published settings (lr 6e-4, weight decay 0.1, warmup ratio 1e-4)."""

    layers: int = 4
    hidden: int = 256
    heads: int = 4
    learning_rate: float = 6e-4
    weight_decay: float = 0.1
    warmup_ratio: float = 0.0001
    preset: str = "lil-bevo"
    seed: int = 0
    batch_size: int = 64
    epoch_scale: float = 1.0
    mask_budget: float = 0.15
    action_split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    max_positions: int = 512
    dropout: float = 0.1
    log_masks: bool = False

    def scaled_epochs(self, epochs: int) -> int:
        if epochs <= 0:
            return 0
        return max(1, round(epochs * self.epoch_scale))


@dataclass
class StageResult:
    name: str
    checkpoint: Path
    epoch_losses: list[float]
    init_hash: str
    final_hash: str
    mask_log: Path | None = None


def build_model(config: TrainConfig, vocab_size: int) -> MaskedLMEncoder:
    torch.manual_seed(config.seed)
    return MaskedLMEncoder(
        vocab_size=vocab_size,
        layers=config.layers,
        hidden=config.hidden,
        heads=config.heads,
        max_positions=config.max_positions,
        dropout=config.dropout,
    )


def _random_plan(
    block: np.ndarray, budget: float, split: tuple[float, float, float], rng: np.random.Generator
) -> list[PlanAction]:
    quota = int(budget * len(block))
    candidates = np.flatnonzero(block >= NUM_CONTROLS)
    if quota == 0 or candidates.size == 0:
        return []
    chosen = rng.choice(candidates, size=min(quota, candidates.size), replace=False)
    actions = []
    p_mask, p_random, _ = split
    for pos in sorted(int(p) for p in chosen):
        draw = rng.random()
        if draw < p_mask:
            action = "replace_with_mask"
        elif draw < p_mask + p_random:
            action = "replace_with_random"
        else:
            action = "keep_original"
        actions.append(PlanAction(position=pos, action=action, source="random_fill"))
    return actions


def _apply_plan(
    inputs: torch.Tensor,
    labels: torch.Tensor,
    row: int,
    original: torch.Tensor,
    actions: list[PlanAction],
    vocab_size: int,
    rng: np.random.Generator,
) -> None:
    for action in actions:
        pos = action.position
        labels[row, pos] = original[pos]
        if action.action == "replace_with_mask":
            inputs[row, pos] = MASK_ID
        elif action.action == "replace_with_random":
            inputs[row, pos] = int(rng.integers(NUM_CONTROLS, vocab_size))
        # keep_original leaves the input untouched but still predicts it


def _linear_schedule(optimizer, total_steps: int, warmup_ratio: float):
    warmup = max(1, int(total_steps * warmup_ratio))

    def factor(step: int) -> float:
        if step < warmup:
            return (step + 1) / warmup
        if total_steps <= warmup:
            return 1.0
        return max(0.0, (total_steps - step) / (total_steps - warmup))

    return torch.optim.lr_scheduler.LambdaLR(optimizer, factor)


def train(
    config: TrainConfig,
    workspace: Workspace,
    out_dir: str | Path,
    stage_indices: list[int] | None = None,
    mask_policy_override: str | None = None,
    epoch_overrides: dict[int, int] | None = None,
    initial_state: dict | None = None,
) -> list[StageResult]:
    """Run all (or selected) stages; returns one StageResult per stage.

    `epoch_overrides` maps position in the stage list to an epoch count
    (0 allowed: the stage checkpoint then equals its initialization).
    """
    torch.set_num_threads(1)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    vocab = workspace.vocab
    model = build_model(config, vocab.size)
    if initial_state is not None:
        model.load_state_dict(initial_state)
    loss_fn = nn.CrossEntropyLoss(ignore_index=IGNORE_INDEX)

    stages = list(enumerate(workspace.stages))
    if stage_indices is not None:
        stages = [(i, s) for i, s in stages if i in stage_indices]

    results: list[StageResult] = []
    for position, (stage_idx, stage) in enumerate(stages):
        init_hash = parameter_hash(model)
        if epoch_overrides is not None and stage_idx in epoch_overrides:
            n_epochs = epoch_overrides[stage_idx]
        else:
            n_epochs = config.scaled_epochs(len(stage.epoch_dirs))
        policy = mask_policy_override or stage.mask_policy

        epoch_losses: list[float] = []
        mask_log: list[tuple[int, int, int]] = []  # (epoch, sample, position)

        if n_epochs > 0:
            steps_per_epoch = []
            epoch_data = []
            for e in range(n_epochs):
                data = read_epoch(stage.epoch_dirs[e % len(stage.epoch_dirs)])
                if data.vocab_sha is not None and data.vocab_sha != vocab.sha256:
                    raise VocabMismatchError(
                        f"stage {stage.name}: manifest vocabulary {data.vocab_sha[:12]} does not "
                        f"match vocabulary file {vocab.sha256[:12]}"
                    )
                if data.vocab_size is not None and data.vocab_size != vocab.size:
                    raise VocabMismatchError(
                        f"stage {stage.name}: manifest vocab_size {data.vocab_size} != {vocab.size}"
                    )
                epoch_data.append(data)
                steps_per_epoch.append(-(-data.block_count // config.batch_size))
            optimizer = torch.optim.AdamW(
                model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
            )
            scheduler = _linear_schedule(optimizer, sum(steps_per_epoch), config.warmup_ratio)

            model.train()
            for e, data in enumerate(epoch_data):
                rng = np.random.default_rng(
                    [config.seed, stage_idx, e, 0xA5]
                )
                plans: dict[int, list[PlanAction]] = {}
                if policy == "targeted":
                    plan_file = stage.plan_files.get(e % max(len(stage.epoch_dirs), 1))
                    if plan_file is None:
                        raise FileNotFoundError(
                            f"stage {stage.name} is targeted but has no mask plans for epoch {e}"
                        )
                    plans = read_plans(plan_file)

                total_loss, n_batches = 0.0, 0
                for start in range(0, data.block_count, config.batch_size):
                    batch = data.blocks[start : start + config.batch_size]
                    original = torch.from_numpy(batch.astype(np.int64))
                    inputs = original.clone()
                    labels = torch.full_like(original, IGNORE_INDEX)
                    for row in range(len(batch)):
                        sample = start + row
                        if policy == "targeted":
                            actions = plans.get(sample, [])
                        else:
                            actions = _random_plan(
                                batch[row], config.mask_budget, config.action_split, rng
                            )
                        _apply_plan(inputs, labels, row, original[row], actions, vocab.size, rng)
                        if config.log_masks:
                            mask_log.extend((e, sample, a.position) for a in actions)
                    if (labels != IGNORE_INDEX).sum() == 0:
                        continue
                    logits = model(inputs)
                    loss = loss_fn(logits.reshape(-1, vocab.size), labels.reshape(-1))
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    scheduler.step()
                    total_loss += float(loss.detach())
                    n_batches += 1
                epoch_losses.append(total_loss / max(n_batches, 1))
                logger.info(
                    json.dumps(
                        {"stage": stage.name, "epoch": e, "loss": epoch_losses[-1], "policy": policy}
                    )
                )

        final_hash = parameter_hash(model)
        checkpoint_path = out_dir / f"{stage.name}.pt"
        torch.save(
            {
                "model_state": model.state_dict(),
                "model_config": {
                    "vocab_size": vocab.size,
                    "layers": config.layers,
                    "hidden": config.hidden,
                    "heads": config.heads,
                    "max_positions": config.max_positions,
                    "dropout": config.dropout,
                },
                "vocab_sha": vocab.sha256,
                "stage": stage.name,
                "mask_policy": policy,
                "epoch_losses": epoch_losses,
                "init_hash": init_hash,
                "final_hash": final_hash,
            },
            checkpoint_path,
        )
        mask_log_path = None
        if config.log_masks:
            mask_log_path = out_dir / f"{stage.name}.masks.npz"
            arr = np.asarray(mask_log, dtype=np.int64).reshape(-1, 3)
            np.savez(mask_log_path, epoch=arr[:, 0], sample=arr[:, 1], position=arr[:, 2])
        results.append(
            StageResult(
                name=stage.name,
                checkpoint=checkpoint_path,
                epoch_losses=epoch_losses,
                init_hash=init_hash,
                final_hash=final_hash,
                mask_log=mask_log_path,
            )
        )
    return results


def load_checkpoint(path: str | Path) -> tuple[MaskedLMEncoder, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model = MaskedLMEncoder(**payload["model_config"])
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload

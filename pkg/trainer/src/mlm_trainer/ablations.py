"""Run the training-schedule comparison: train every preset, score each
final checkpoint on minimal pairs through the toolkit's `score` command, and
tabulate per-phenomenon accuracies and per-pair margins as TSV."""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

from .formats import open_workspace
from .training import TrainConfig, train

logger = logging.getLogger(__name__)

PRESET_ORDER = ["lil-bevo", "long-only", "short-only", "short-target", "music-short", "music-short-long"]


@dataclass
class PresetOutcome:
    preset: str
    overall: float | None
    per_phenomenon: dict[str, float]
    pairs_tsv: Path | None
    error: str | None = None


def score_checkpoint(
    checkpoint: Path,
    vocab_model: Path,
    pairs_path: Path,
    report_path: Path,
    score_command: list[str],
) -> dict:
    """Score a checkpoint by spawning the toolkit's score command with this
    package's provider server plugged in as the external provider."""
    provider_cmd = shlex.join([sys.executable, "-m", "mlm_trainer.serve", str(checkpoint)])
    command = list(score_command) + [
        "score",
        "--pairs",
        str(pairs_path),
        "--model",
        str(vocab_model),
        "--provider",
        "external",
        "--cmd",
        provider_cmd,
        "--output",
        str(report_path),
    ]
    result = subprocess.run(command, capture_output=True, text=True)
    if result.returncode != 0:
        raise RuntimeError(
            f"score command failed ({result.returncode}): {result.stderr.strip()[-500:]}"
        )
    return json.loads(report_path.read_text(encoding="utf-8"))


def run_ablations(
    workspaces: dict[str, Path],
    pairs_path: Path,
    out_dir: Path,
    config: TrainConfig,
    score_command: list[str] | None = None,
) -> Path:
    """Train and evaluate every preset; returns the path of the result table.

    `workspaces` maps preset name to a pipeline output directory packed for
    that preset (all sharing one tokenizer). A preset failure is recorded in
    the table and the remaining presets still run.
    """
    score_command = score_command or [sys.executable, "-m", "picolm.cli"]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    outcomes: list[PresetOutcome] = []
    for preset in PRESET_ORDER:
        if preset not in workspaces:
            continue
        preset_dir = out_dir / preset
        try:
            workspace = open_workspace(Path(workspaces[preset]))
            results = train(config, workspace, preset_dir / "checkpoints")
            report = score_checkpoint(
                results[-1].checkpoint,
                workspace.vocab.path,
                Path(pairs_path),
                preset_dir / "report.json",
                score_command,
            )
            outcomes.append(
                PresetOutcome(
                    preset=preset,
                    overall=report["overall_accuracy"],
                    per_phenomenon=report["per_phenomenon"],
                    pairs_tsv=(preset_dir / "report.tsv"),
                )
            )
            logger.info(json.dumps({"preset": preset, "overall": report["overall_accuracy"]}))
        except Exception as exc:
            logger.error(json.dumps({"preset": preset, "error": str(exc)}))
            outcomes.append(
                PresetOutcome(preset=preset, overall=None, per_phenomenon={}, pairs_tsv=None, error=str(exc))
            )

    phenomena = sorted({name for o in outcomes for name in o.per_phenomenon})
    lines = ["preset\toverall\t" + "\t".join(phenomena)]
    for outcome in outcomes:
        if outcome.error is not None:
            cells = ["ERROR"] * (1 + len(phenomena))
        else:
            cells = [f"{outcome.overall:.4f}"] + [
                f"{outcome.per_phenomenon.get(name, float('nan')):.4f}" for name in phenomena
            ]
        lines.append(outcome.preset + "\t" + "\t".join(cells))
    table_path = out_dir / "ablations.tsv"
    table_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    _write_pair_margins(outcomes, out_dir / "pair_margins.tsv")
    _write_comparisons(outcomes, phenomena, out_dir / "comparisons.tsv")
    return table_path


# The schedule contrasts of interest: sequence length, music pretraining,
# and targeted masking, each isolated against its closest variant.
COMPARISONS = [
    ("short-only", "long-only"),
    ("music-short", "short-only"),
    ("short-target", "short-only"),
    ("lil-bevo", "music-short-long"),
    ("lil-bevo", "short-target"),
]


def _write_comparisons(outcomes: list[PresetOutcome], phenomena: list[str], path: Path) -> None:
    """Signed accuracy differences per phenomenon for the named contrasts."""
    by_name = {o.preset: o for o in outcomes}
    lines = ["comparison\toverall_diff\t" + "\t".join(f"{p}_diff" for p in phenomena)]
    for left, right in COMPARISONS:
        a, b = by_name.get(left), by_name.get(right)
        if a is None or b is None or a.error or b.error:
            continue
        cells = [f"{a.overall - b.overall:+.4f}"]
        for name in phenomena:
            diff = a.per_phenomenon.get(name, float("nan")) - b.per_phenomenon.get(name, float("nan"))
            cells.append(f"{diff:+.4f}")
        lines.append(f"{left}-vs-{right}\t" + "\t".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_pair_margins(outcomes: list[PresetOutcome], path: Path) -> None:
    """Wide per-pair table: the pll margin (good minus bad) per preset."""
    margins: dict[str, list[tuple[str, float]]] = {}
    for outcome in outcomes:
        if outcome.pairs_tsv is None or not outcome.pairs_tsv.exists():
            continue
        rows = outcome.pairs_tsv.read_text(encoding="utf-8").splitlines()[1:]
        margins[outcome.preset] = []
        for row in rows:
            phenomenon, pll_good, pll_bad, _correct = row.split("\t")
            margins[outcome.preset].append((phenomenon, float(pll_good) - float(pll_bad)))
    if not margins:
        return
    presets = list(margins)
    n_pairs = min(len(v) for v in margins.values())
    lines = ["pair\tphenomenon\t" + "\t".join(f"{p}_margin" for p in presets)]
    for i in range(n_pairs):
        phenomenon = margins[presets[0]][i][0]
        cells = [f"{margins[p][i][1]:.6f}" for p in presets]
        lines.append(f"{i}\t{phenomenon}\t" + "\t".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

#!/usr/bin/env python3
"""Run the whole pipeline on the bundled sample corpus.

midi encode -> tokenizer train -> corpus encode -> pack all stages of the
chosen preset -> plan targeted masks. Everything is driven by explicit
seeds: running this script twice produces byte-identical artifacts (compare
the step hashes in out/manifest.json).
"""

import json
import tempfile
from pathlib import Path

from picolm.pipeline import PipelineConfig, run_pipeline

ROOT = Path(__file__).resolve().parent.parent
out_dir = Path(tempfile.mkdtemp(prefix="picolm_demo_")) / "out"

config_text = f"""
[paths]
text_dir = "{ROOT / 'sample_corpus' / 'text'}"
midi_dir = "{ROOT / 'sample_corpus' / 'midi'}"
output_dir = "{out_dir}"

[tokenizer]
vocab_size = 1200

[pack]
preset = "lil-bevo"

[seeds]
pack = 1001
mask = 2002
"""
config_path = out_dir.parent / "config.toml"
config_path.parent.mkdir(parents=True, exist_ok=True)
config_path.write_text(config_text)

config = PipelineConfig.from_file(config_path)
status = run_pipeline(config)
assert status == 0

manifest = json.loads((out_dir / "manifest.json").read_text())
print(f"\npipeline finished, artifacts under {out_dir}")
print(f"tool version {manifest['tool_version']}, config hash {manifest['config_sha256'][:16]}...")
print("per-step content hashes:")
for step, digest in manifest["steps"].items():
    print(f"  {step:<12} {digest[:16]}...")

for stage_dir in sorted((out_dir / "stages").iterdir()):
    epochs = len([p for p in stage_dir.iterdir() if p.is_dir()])
    print(f"{stage_dir.name}: {epochs} epoch manifests")

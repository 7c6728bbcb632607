"""Toy-scale masked-LM trainer for the picolm data toolkit's artifacts.

Consumes the toolkit only through its on-disk interfaces: the vocabulary
model file, per-stage pack manifests with materialized block files, and
mask-plan JSON lines. Trained checkpoints answer the scorer's line-delimited
JSON provider protocol via ``python -m mlm_trainer.serve <checkpoint>``.
"""

__version__ = "0.1.0"

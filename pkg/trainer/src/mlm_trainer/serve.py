"""Serve a trained checkpoint over the scorer's line-delimited JSON protocol.

    python -m mlm_trainer.serve checkpoint.pt

Requests: ``{"ids": [...], "masked_position": t}`` per line. Responses:
``{"log_probs": [...]}`` (length vocab_size, log-softmax normalized) or
``{"error": "..."}``; the process stays alive after errors. Inference is
deterministic: eval mode, no dropout, single thread.
"""

from __future__ import annotations

import argparse
import json
import sys

import torch

from .training import load_checkpoint


def answer(model, vocab_size: int, request: dict) -> dict:
    ids = request["ids"]
    position = request["masked_position"]
    if not isinstance(ids, list) or not ids:
        raise ValueError("ids must be a non-empty list")
    if not all(isinstance(i, int) and 0 <= i < vocab_size for i in ids):
        raise ValueError(f"ids must be integers in [0, {vocab_size})")
    if not isinstance(position, int) or not 0 <= position < len(ids):
        raise ValueError(f"masked_position {position} out of range")
    with torch.no_grad():
        logits = model(torch.tensor(ids, dtype=torch.long).unsqueeze(0))
        log_probs = torch.log_softmax(logits[0, position].double(), dim=-1)
    return {"log_probs": log_probs.tolist()}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("checkpoint")
    args = parser.parse_args(argv)

    torch.set_num_threads(1)
    model, payload = load_checkpoint(args.checkpoint)
    vocab_size = payload["model_config"]["vocab_size"]

    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            response = answer(model, vocab_size, json.loads(line))
        except Exception as exc:  # malformed request: report, keep serving
            response = {"error": str(exc)}
        print(json.dumps(response), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())

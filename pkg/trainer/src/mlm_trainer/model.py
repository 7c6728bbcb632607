"""Small transformer encoder with an MLM head."""

from __future__ import annotations

import hashlib

import torch
from torch import nn


class MaskedLMEncoder(nn.Module):
    """Token + position embeddings, a transformer encoder stack, and a
    vocabulary projection. Deliberately generic and desk-scale."""

    def __init__(
        self,
        vocab_size: int,
        layers: int = 4,
        hidden: int = 256,
        heads: int = 4,
        max_positions: int = 512,
        dropout: float = 0.1,
    ):
        super().__init__()
        self.vocab_size = vocab_size
        self.max_positions = max_positions
        self.token_embedding = nn.Embedding(vocab_size, hidden)
        self.position_embedding = nn.Embedding(max_positions, hidden)
        encoder_layer = nn.TransformerEncoderLayer(
            d_model=hidden,
            nhead=heads,
            dim_feedforward=4 * hidden,
            dropout=dropout,
            batch_first=True,
            activation="gelu",
        )
        self.encoder = nn.TransformerEncoder(encoder_layer, num_layers=layers)
        self.norm = nn.LayerNorm(hidden)
        self.lm_head = nn.Linear(hidden, vocab_size)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.dim() == 1:
            ids = ids.unsqueeze(0)
        seq_len = ids.shape[1]
        if seq_len > self.max_positions:
            raise ValueError(f"sequence of {seq_len} tokens exceeds max_positions {self.max_positions}")
        positions = torch.arange(seq_len, device=ids.device).unsqueeze(0)
        hidden = self.token_embedding(ids) + self.position_embedding(positions)
        hidden = self.encoder(hidden)
        return self.lm_head(self.norm(hidden))


def parameter_hash(model: nn.Module) -> str:
    """Order-stable digest of every parameter tensor."""
    digest = hashlib.sha256()
    state = model.state_dict()
    for key in sorted(state):
        digest.update(key.encode("utf-8"))
        digest.update(state[key].detach().cpu().numpy().tobytes())
    return digest.hexdigest()

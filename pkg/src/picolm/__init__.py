"""Data pipeline toolkit for pretraining masked language models on small corpora.

The package covers five stages: converting Standard MIDI Files to a textual
note-event representation (`midi_text`), training and applying a unigram
subword tokenizer (`unigram_tokenizer`), planning targeted mask positions
(`mask_planner`), packing tokenized documents into fixed-length curriculum
stages (`curriculum_packer`), and scoring sentences / minimal pairs by masked
pseudo-log-likelihood (`pll_scorer`). `pipeline` and `cli` wire the stages
into a reproducible command-line workflow.
"""

__version__ = "0.1.0"

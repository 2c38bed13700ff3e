"""Retrieval-augmented adaptive machine translation pipeline.

Indexes a translation-memory context dataset with an IVF-Flat ANN index,
retrieves fuzzy matches for new source segments, renders zero-/one-shot
translation prompts, exports mixed fine-tuning datasets, drives an
OpenAI-compatible completion endpoint, and scores output with BLEU,
chrF++, and TER.
"""

__version__ = "0.1.0"

"""Desk-scale pre-training and in-context-learning laboratory.

Subpackages: corpus (topic/sequence generation), hmm_oracle (exact
conditionals and Bayes mixture), model (trainable predictors with exact
gradients), optim (noisy-gradient training), metrics (loss ladder and
divergences), bounds (closed-form bound evaluation), harness (experiment
orchestration and CLI).
"""

from . import bounds, corpus, harness, hmm_oracle, metrics, model, optim  # noqa: F401

__version__ = "0.1.0"

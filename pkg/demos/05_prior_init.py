"""Warm-start initialization from a prior model trained on held-out topics.

A 1-layer model is trained on a topic subset, its weights transferred
into a 2-layer model, and the warm start is raced against a random
initialization on the full corpus with matched batch and noise streams.
"""

import numpy as np

from icl_lab.corpus import generate_corpus, sample_topics, split_prior
from icl_lab.model import ArchSpec, init_from_prior, init_model
from icl_lab.optim import Schedule, train, train_prior

V, h, K, N, T = 16, 3, 6, 10, 48
topics = sample_topics(K, h, V, seed=1)
corpus = generate_corpus(topics, N, T, seed=2)
split = split_prior(corpus, "topic", holdout=2, seed=3)
print(f"prior topics: {split.held_out}, posterior topics: {split.held_in}")

small = ArchSpec(kind="tiny_attention", vocab_size=V, context_len=T,
                 d_model=16, n_heads=1, n_layers=1, d_ff=32)
large = ArchSpec(kind="tiny_attention", vocab_size=V, context_len=T,
                 d_model=16, n_heads=1, n_layers=2, d_ff=32)

prior_model, _ = train_prior(small, split, corpus, steps=400, batch_size=4,
                             schedule=Schedule(eta=0.5), seed=4)
warm = init_from_prior(prior_model, large, seed=5)
cold = init_model(large, seed=6)

threshold = 1.8
for name, start in (("warm start", warm), ("random init", cold)):
    _, traj = train(start, corpus, steps=600, batch_size=4,
                    schedule=Schedule(eta=0.5), seed=7)
    smooth = np.convolve(traj.step_losses, np.ones(25) / 25, mode="valid")
    below = np.nonzero(smooth <= threshold)[0]
    reach = f"step {below[0] + 25}" if below.size else "never"
    print(f"{name:<12} loss {traj.step_losses[0]:.2f} -> {traj.step_losses[-50:].mean():.3f}, "
          f"crosses {threshold} nats at {reach}")

"""Topics, sequences, and exact conditionals.

Draws a small family of memory-map topics, samples sequences, and checks
the forward-filter oracle against brute-force path enumeration and the
Bayes mixture's topic identification.
"""

import numpy as np

from icl_lab.corpus import generate_hmm_sequence, letter_token, sample_topics
from icl_lab.hmm_oracle import (
    bayes_mixture_predictor,
    forward_filter,
    sequence_log_evidence_bruteforce,
    true_next_token_dist,
)

rng = np.random.default_rng(0)

# A family of four topics over a 12-token vocabulary, 3 hidden states each.
family = sample_topics(K=4, h=3, V=12, concentration=1.0, seed=1)
print("topic 0 transition rows:")
print(np.round(family[0].transition, 3))
print("topic 0 emits tokens:", [letter_token(int(t)) for t in family[0].emission.argmax(1)])

seq = generate_hmm_sequence(family[0], T=12, seed=2)
print("\nsequence from topic 0:", " ".join(letter_token(int(t)) for t in seq))

# The forward filter computes log P(prefix | topic); on tiny instances the
# same number comes from summing over every hidden path.
prefix = seq[:5]
fast = forward_filter(family[0], prefix).log_evidence
slow = sequence_log_evidence_bruteforce(family[0], prefix)
print(f"\nlog evidence (filter)      {fast:.12f}")
print(f"log evidence (enumeration) {slow:.12f}")

dist = true_next_token_dist(family[0], prefix)
print("\nexact next-token conditional after the prefix:")
print(np.round(dist, 4))

# The mixture predictor identifies the generating topic as the prompt grows.
# Memory-map topics reveal themselves almost immediately (disjoint token
# sets); stochastic emissions make the identification gradual.
soft_family = sample_topics(K=4, h=3, V=12, concentration=1.0, seed=4, stochastic_emission=True)
prompt = generate_hmm_sequence(soft_family[2], T=24, seed=3)
prior = np.full(4, 0.25)
for length in (2, 6, 12, 24):
    _, posterior = bayes_mixture_predictor(soft_family, prior, prompt[:length])
    print(f"topic posterior after {length:>2} tokens:", np.round(posterior, 3))

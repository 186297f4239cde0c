"""The loss ladder: empirical loss up to the two-level population loss.

Trains a bigram model, then evaluates every rung and the four-part
decomposition whose terms sum to the population estimate exactly.
"""

import numpy as np

from icl_lab.corpus import generate_corpus, sample_topic_hmm, sample_topics
from icl_lab.metrics import (
    corpus_kl_loss,
    empirical_loss,
    first_level_expected_loss_mc,
    optimization_error,
    population_loss_mc,
    select_best_checkpoint,
)
from icl_lab.model import ArchSpec, init_model
from icl_lab.optim import Schedule, train

topics = sample_topics(K=3, h=3, V=10, seed=1)
corpus = generate_corpus(topics, N=8, T=32, seed=2)
model0 = init_model(ArchSpec(kind="tabular_bigram", vocab_size=10), seed=3)
model, traj = train(model0, corpus, steps=400, batch_size=6,
                    schedule=Schedule(eta=0.5), seed=4)

best, best_step = select_best_checkpoint(model, traj, corpus)
print(f"best checkpoint at step {best_step}")
print(f"optimization error of the final parameters: {optimization_error(model, best, corpus):.6f}")

print(f"\nempirical loss (log-ratio on the corpus):  {empirical_loss(model, corpus, topics):.4f}")
print(f"corpus KL loss (same prefixes, full KL):   {corpus_kl_loss(model, corpus, topics):.4f}")
first = first_level_expected_loss_mc(model, topics, M=64, T=32, seed=5)
print(f"fresh-sequence expected loss:              {first.value:.4f} +/- {first.stderr:.4f}")


def topic_sampler(rng):
    return sample_topic_hmm(3, 10, seed=rng)


report = population_loss_mc(model, topic_sampler, M_topics=24, M_prompts=8, T_p=32,
                            seed=6, corpus=corpus, topics=topics, best=best)
print(f"population loss (fresh topics):            {report.population_mc:.4f} +/- {report.population_se:.4f}")
print("\ndecomposition:")
for name, value in zip(("empirical", "kl - empirical", "fresh-seq gap", "fresh-topic gap"), report.parts):
    print(f"  {name:<16} {value:+.4f}")
print(f"  {'sum':<16} {float(np.sum(report.parts)):+.4f}  (equals the population estimate exactly)")

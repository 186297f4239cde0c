"""Training the tiny attention model on a two-topic corpus.

Shows loss descent, the effect of turning the Langevin noise on, and the
model's in-context behavior on prompts from each topic.
"""

import numpy as np

from icl_lab.corpus import generate_corpus, generate_hmm_sequence, sample_topics
from icl_lab.metrics import icl_accuracy
from icl_lab.model import ArchSpec, count_params, init_model, predict_dist
from icl_lab.optim import Schedule, train

topics = sample_topics(K=2, h=4, V=16, seed=1)
corpus = generate_corpus(topics, N=12, T=64, seed=2)

arch = ArchSpec(kind="tiny_attention", vocab_size=16, context_len=64,
                d_model=16, n_heads=1, n_layers=2, d_ff=32)
print(f"architecture: {arch.kind}, {count_params(arch)} parameters")

model0 = init_model(arch, seed=3)
model, traj = train(model0, corpus, steps=800, batch_size=4,
                    schedule=Schedule(eta=0.5), seed=4)
for step in (0, 100, 400, 799):
    print(f"step {step:>4}: minibatch loss {traj.step_losses[step]:.3f}")

# Same run with injected isotropic noise (variance eta/beta per step).
_, noisy = train(model0, corpus, steps=800, batch_size=4,
                 schedule=Schedule(eta=0.5), beta=200.0, seed=4)
print(f"\nfinal loss, noiseless: {traj.step_losses[-50:].mean():.3f}")
print(f"final loss, beta=200 : {noisy.step_losses[-50:].mean():.3f}")

# Prompts from each topic; accuracy of argmax prediction on the last token.
for k, topic in enumerate(topics):
    prompts, targets = [], []
    for i in range(200):
        p = generate_hmm_sequence(topic, 32, seed=[5, k, i])
        prompts.append(p[:-1])
        targets.append(int(p[-1]))
    acc = icl_accuracy(model, prompts, np.array(targets))
    print(f"topic {k}: last-token accuracy {acc:.3f}")

example = generate_hmm_sequence(topics[0], 16, seed=6)
print("\nmodel conditional after a topic-0 prompt (top entries):")
dist = predict_dist(model, example[:-1])
top = np.argsort(dist)[::-1][:4]
print({int(t): round(float(dist[t]), 3) for t in top})

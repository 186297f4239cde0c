"""Linear dynamical systems: continuous topics, the linear readout model,
and overall versus last-position prediction loss."""

import numpy as np

from icl_lab.corpus import generate_lds_corpus, generate_lds_sequence, sample_topic_lds
from icl_lab.metrics import lds_losses
from icl_lab.model import ArchSpec, init_model, unpack
from icl_lab.optim import Schedule, train

topic = sample_topic_lds(d=2, p=2, seed=1, spectral_radius=0.9)
print("state transition W:")
print(np.round(topic.W, 3))

ys = generate_lds_sequence(topic, T=6, x0=np.array([1.0, -1.0]), seed=2)
print("\nfirst observations:")
print(np.round(ys, 3))

# One topic, noiseless: the order-1 linear readout is exactly realizable.
corpus = generate_lds_corpus([topic], N=16, T=24, seed=3)
arch = ArchSpec(kind="linear_readout_lds", obs_dim=2)
model, traj = train(init_model(arch, seed=4), corpus, steps=8000, batch_size=4,
                    schedule=Schedule(eta=0.1), seed=5)
held_out = generate_lds_corpus([topic], N=8, T=24, seed=6)
overall, last = lds_losses(model, held_out.observations)
print(f"\ntrained on the noiseless system: overall mse {overall:.2e}, last-position mse {last:.2e}")
A = unpack(arch, model.params)["A"]
print(f"recovered transition, max |A - W| = {np.abs(A - topic.W).max():.2e}")

# Several topics: one linear map cannot fit all, the floor is topic spread;
# the last position is still the easiest because the state has decayed.
topics = [sample_topic_lds(2, 2, seed=[7, k], spectral_radius=0.9) for k in range(3)]
corpus3 = generate_lds_corpus(topics, N=16, T=24, seed=8)
model3, _ = train(init_model(arch, seed=9), corpus3, steps=4000, batch_size=4,
                  schedule=Schedule(eta=0.1), seed=10)
held3 = generate_lds_corpus(topics, N=8, T=24, seed=11)
overall3, last3 = lds_losses(model3, held3.observations)
print(f"\nthree topics: overall mse {overall3:.4f}, last-position mse {last3:.4f}")

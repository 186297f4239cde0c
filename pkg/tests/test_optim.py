import numpy as np
import pytest

from icl_lab.corpus import TopicHMM, generate_corpus, sample_topics, split_prior
from icl_lab.model import ArchSpec, init_from_prior, init_model, nll_and_grad_batch
from icl_lab.optim import Schedule, derive_streams, gld_step, save_trajectory, train, train_prior

BIGRAM = ArchSpec(kind="tabular_bigram", vocab_size=8)


def deterministic_corpus(V=8, K=2, N=4, T=12, seed=0):
    """Cyclic deterministic topics: next token = (token + k + 1) mod V."""
    topics = []
    for k in range(K):
        h = V
        transition = np.zeros((h, h))
        transition[np.arange(h), (np.arange(h) + k + 1) % h] = 1.0
        start = np.full(h, 1.0 / h)
        topics.append(TopicHMM(transition=transition, start=start, emission=np.eye(V), topic_id=k))
    return topics, generate_corpus(topics, N=N, T=T, seed=seed)


class TestGldStep:
    def test_zero_gradient_infinite_beta_is_identity(self):
        theta = np.arange(5.0)
        out = gld_step(theta, np.zeros(5), eta=0.3, beta=np.inf, seed=0)
        np.testing.assert_array_equal(out, theta)

    def test_zero_step_size_ignores_gradient_and_noise(self):
        theta = np.arange(5.0)
        out = gld_step(theta, np.ones(5), eta=0.0, beta=2.0, seed=0)
        np.testing.assert_array_equal(out, theta)

    def test_negative_step_size_rejected(self):
        with pytest.raises(ValueError):
            gld_step(np.zeros(2), np.zeros(2), eta=-0.1, beta=1.0)

    def test_nonpositive_beta_rejected(self):
        with pytest.raises(ValueError):
            gld_step(np.zeros(2), np.zeros(2), eta=0.1, beta=0.0)

    def test_injected_noise_variance(self):
        eta, beta = 0.2, 5.0
        rng = np.random.default_rng(0)
        theta = np.zeros(8)
        draws = np.stack([
            gld_step(theta, np.zeros(8), eta=eta, beta=beta, seed=rng) for _ in range(10_000)
        ])
        target = eta / beta
        per_coord = draws.var(axis=0)
        assert np.abs(per_coord - target).max() / target < 0.05
        # isotropy: every coordinate's variance within 5% of the common scale
        assert per_coord.max() / per_coord.min() < 1.1

    def test_beta_infinity_matches_plain_sgd_step(self):
        theta = np.arange(4.0)
        grad = np.array([1.0, -2.0, 0.5, 0.0])
        out = gld_step(theta, grad, eta=0.1, beta=np.inf, seed=123)
        np.testing.assert_array_equal(out, theta - 0.1 * grad)


class TestTrain:
    def test_zero_steps_returns_model_unchanged(self):
        _, corpus = deterministic_corpus()
        model = init_model(BIGRAM, seed=0)
        out, traj = train(model, corpus, steps=0, seed=0)
        np.testing.assert_array_equal(out.params, model.params)
        assert traj.T_prime == 0
        assert traj.step_losses.size == 0 and traj.grad_norms.size == 0

    def test_trajectory_lengths_match_steps(self):
        _, corpus = deterministic_corpus()
        model = init_model(BIGRAM, seed=0)
        _, traj = train(model, corpus, steps=17, batch_size=4, seed=0)
        assert traj.step_losses.shape == (17,) and traj.grad_norms.shape == (17,)
        assert traj.checkpoint_steps[0] == 0 and traj.checkpoint_steps[-1] == 17

    def test_bitwise_determinism(self):
        _, corpus = deterministic_corpus()
        model = init_model(BIGRAM, seed=0)
        out1, traj1 = train(model, corpus, steps=25, batch_size=3, beta=4.0, seed=11)
        out2, traj2 = train(model, corpus, steps=25, batch_size=3, beta=4.0, seed=11)
        np.testing.assert_array_equal(out1.params, out2.params)
        np.testing.assert_array_equal(traj1.step_losses, traj2.step_losses)

    def test_full_batch_descent_is_monotone_for_small_eta(self):
        # softmax cross-entropy in the tabular case is convex; with a small
        # constant step the full-batch loss cannot increase
        for seed in range(3):
            _, corpus = deterministic_corpus(seed=seed)
            model = init_model(BIGRAM, seed=seed)
            _, traj = train(
                model, corpus, steps=40, batch_size=corpus.K * corpus.N,
                schedule=Schedule(eta=0.2), beta=np.inf, seed=seed,
            )
            assert np.all(np.diff(traj.step_losses) <= 1e-12)

    def test_empty_view_rejected(self):
        _, corpus = deterministic_corpus()
        with pytest.raises(ValueError):
            train(init_model(BIGRAM, seed=0), corpus, view=[], steps=1, seed=0)

    def test_gld_with_infinite_beta_equals_sgd_bitwise(self):
        _, corpus = deterministic_corpus()
        model = init_model(BIGRAM, seed=0)
        # beta=inf never touches the noise stream, so it IS plain SGD;
        # verify against a hand-rolled SGD loop on the same batch stream
        out, traj = train(model, corpus, steps=10, batch_size=4,
                          schedule=Schedule(eta=0.3), beta=np.inf, seed=5)
        batch_rng, _ = derive_streams(5)
        view = corpus.all_indices()
        theta = model.params.copy()
        for _ in range(10):
            picks = batch_rng.choice(len(view), size=4, replace=False)
            batch = np.stack([corpus.sequence(*view[i]) for i in picks])
            _, grad = nll_and_grad_batch(model.with_params(theta), batch)
            theta = theta - 0.3 * grad
        np.testing.assert_array_equal(out.params, theta)

    def test_batch_and_noise_streams_are_independent(self):
        # drawing from the noise stream must not perturb batch selection
        batch_a, noise_a = derive_streams(3)
        batch_b, noise_b = derive_streams(3)
        noise_b.standard_normal(1000)  # consume noise only on one side
        np.testing.assert_array_equal(
            batch_a.choice(50, size=10, replace=False),
            batch_b.choice(50, size=10, replace=False),
        )
        # and the two streams themselves differ
        assert not np.array_equal(noise_a.standard_normal(4), batch_a.standard_normal(4))

    def test_warmup_schedule(self):
        sched = Schedule(eta=1.0, warmup=4)
        assert [sched.rate(s) for s in range(5)] == [0.25, 0.5, 0.75, 1.0, 1.0]

    def test_save_trajectory(self, tmp_path):
        _, corpus = deterministic_corpus()
        _, traj = train(init_model(BIGRAM, seed=0), corpus, steps=5, seed=0)
        path = str(tmp_path / "trajectory.csv")
        save_trajectory(traj, path)
        lines = open(path).read().strip().split("\n")
        assert lines[0] == "step,loss,grad_norm"
        assert len(lines) == 6


class TestTrainPrior:
    def test_all_but_one_split(self):
        _, corpus = deterministic_corpus(N=5)
        split = split_prior(corpus, "sequence", holdout=4, seed=0)
        model, traj = train_prior(BIGRAM, split, corpus, steps=3, seed=0)
        assert traj.tag == "prior-sequence"
        assert traj.T_prime == 3

    def test_axes_lead_to_different_priors(self):
        for seed in range(3):
            topics = sample_topics(4, h=3, V=8, seed=seed)
            corpus = generate_corpus(topics, N=6, T=16, seed=seed)
            seq_split = split_prior(corpus, "sequence", holdout=2, seed=seed)
            top_split = split_prior(corpus, "topic", holdout=2, seed=seed)
            m_seq, _ = train_prior(BIGRAM, seq_split, corpus, steps=30, seed=seed)
            m_top, _ = train_prior(BIGRAM, top_split, corpus, steps=30, seed=seed)
            assert np.any(m_seq.params != m_top.params)

    def test_prior_warm_start_reaches_threshold_faster(self):
        # paired runs: warm start from a prior model versus fresh init
        wins = 0
        for seed in range(3):
            topics = sample_topics(4, h=4, V=10, seed=[21, seed])
            corpus = generate_corpus(topics, N=8, T=24, seed=[22, seed])
            arch = ArchSpec(kind="tabular_bigram", vocab_size=10)
            split = split_prior(corpus, "topic", holdout=2, seed=seed)
            prior_model, _ = train_prior(arch, split, corpus, steps=150,
                                         schedule=Schedule(eta=0.8), seed=seed)
            warm = init_from_prior(prior_model, arch, seed=seed)
            cold = init_model(arch, seed=[23, seed])
            threshold = 1.6

            def steps_to(model0):
                _, traj = train(model0, corpus, steps=200, batch_size=8,
                                schedule=Schedule(eta=0.8), seed=[24, seed])
                below = np.nonzero(traj.step_losses <= threshold)[0]
                return below[0] if below.size else 10**9

            if steps_to(warm) <= steps_to(cold):
                wins += 1
        assert wins >= 2


class TestTrajectoryCheckpointing:
    def test_thinning_keeps_final_exactly(self):
        _, corpus = deterministic_corpus()
        out, traj = train(init_model(BIGRAM, seed=0), corpus, steps=333,
                          batch_size=4, seed=0, n_checkpoints=10)
        assert traj.checkpoint_steps[-1] == 333
        np.testing.assert_array_equal(traj.checkpoint_at(333), out.params)
        assert len(traj.checkpoints) <= 13

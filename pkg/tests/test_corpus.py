import numpy as np
import pytest

from icl_lab.corpus import (
    LDSTopic,
    TopicHMM,
    build_prompt,
    generate_corpus,
    generate_hmm_sequence,
    generate_lds_sequence,
    letter_token,
    load_corpus,
    make_random_transition_corpus,
    sample_topic_hmm,
    sample_topic_lds,
    sample_topics,
    save_corpus,
    split_prior,
    split_prompt,
    view_indices,
)
from icl_lab.hmm_oracle import true_next_token_dist


def degenerate_topic(V: int = 5, token: int = 3) -> TopicHMM:
    """Single hidden state that always emits one token."""
    emission = np.zeros((1, V))
    emission[0, token] = 1.0
    return TopicHMM(transition=np.array([[1.0]]), start=np.array([1.0]), emission=emission)


class TestSampleTopicHMM:
    def test_single_state_transition_is_identity(self):
        topic = sample_topic_hmm(h=1, V=2, concentration=7.3, seed=0)
        np.testing.assert_array_equal(topic.transition, [[1.0]])

    def test_rows_sum_to_one(self):
        topic = sample_topic_hmm(h=3, V=50, concentration=1.0, seed=7)
        np.testing.assert_allclose(topic.transition.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(topic.emission.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(topic.start.sum(), 1.0, atol=1e-9)

    def test_deterministic_given_seed(self):
        a = sample_topic_hmm(h=2, V=4, concentration=1.0, seed=1)
        b = sample_topic_hmm(h=2, V=4, concentration=1.0, seed=1)
        np.testing.assert_array_equal(a.transition, b.transition)
        np.testing.assert_array_equal(a.start, b.start)
        np.testing.assert_array_equal(a.emission, b.emission)

    def test_memory_map_mode_is_deterministic_per_state(self):
        topic = sample_topic_hmm(h=4, V=9, seed=3)
        assert np.all(np.isin(topic.emission, (0.0, 1.0)))
        cols = topic.emission.argmax(axis=1)
        assert len(set(cols.tolist())) == 4  # distinct token per state

    def test_stochastic_emission_flag(self):
        topic = sample_topic_hmm(h=3, V=6, seed=3, stochastic_emission=True)
        assert not np.all(np.isin(topic.emission, (0.0, 1.0)))

    @pytest.mark.parametrize("kw", [dict(h=0, V=4), dict(h=2, V=1), dict(h=2, V=4, concentration=0.0)])
    def test_invalid_arguments(self, kw):
        with pytest.raises(ValueError):
            sample_topic_hmm(**{"concentration": 1.0, "seed": 0, **kw})

    def test_invalid_matrices_rejected(self):
        with pytest.raises(ValueError):
            TopicHMM(transition=np.array([[0.5, 0.6], [0.5, 0.5]]),
                     start=np.array([1.0, 0.0]),
                     emission=np.eye(2))


class TestGenerateHMMSequence:
    def test_degenerate_chain(self):
        seq = generate_hmm_sequence(degenerate_topic(), T=5, seed=0)
        np.testing.assert_array_equal(seq, [3, 3, 3, 3, 3])

    def test_determinism(self):
        topic = sample_topic_hmm(h=2, V=3, seed=9)
        a = generate_hmm_sequence(topic, T=4, seed=9)
        b = generate_hmm_sequence(topic, T=4, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            generate_hmm_sequence(degenerate_topic(), T=0, seed=0)

    def test_sampler_matches_exact_conditional(self):
        # bucket 1e5 two-token draws on the first token; the conditional
        # histogram of the second must match the forward-computed law
        topic = sample_topic_hmm(h=2, V=3, seed=9, stochastic_emission=True)
        draws = np.stack([
            generate_hmm_sequence(topic, 2, seed=[11, i]) for i in range(100_000)
        ])
        first_counts = np.bincount(draws[:, 0], minlength=3)
        x1 = int(first_counts.argmax())
        sel = draws[draws[:, 0] == x1, 1]
        hist = np.bincount(sel, minlength=3) / sel.size
        exact = true_next_token_dist(topic, [x1])
        assert np.abs(hist - exact).max() < 0.01
        assert np.abs(hist - exact).sum() < 0.02  # L1 contract


class TestGenerateCorpus:
    def test_single_degenerate_sequence(self):
        corpus = generate_corpus([degenerate_topic()], N=1, T=3, seed=0)
        assert corpus.tokens.shape == (1, 1, 3)
        np.testing.assert_array_equal(corpus.sequence(0, 0), [3, 3, 3])

    def test_paper_scale_counts(self):
        topics = sample_topics(10, h=3, V=20, seed=0)
        corpus = generate_corpus(topics, N=20, T=1280, seed=1)
        assert corpus.K == 10 and corpus.N == 20 and corpus.T == 1280
        assert corpus.tokens.shape == (10, 20, 1280)
        assert corpus.tokens.min() >= 0 and corpus.tokens.max() < 20

    def test_histograms_differ_across_topic_seeds(self):
        t1 = sample_topics(2, h=3, V=12, seed=0)
        t2 = sample_topics(2, h=3, V=12, seed=1)
        c1 = generate_corpus(t1, N=4, T=64, seed=5)
        c2 = generate_corpus(t2, N=4, T=64, seed=5)
        h1 = np.bincount(c1.tokens.ravel(), minlength=12)
        h2 = np.bincount(c2.tokens.ravel(), minlength=12)
        assert np.any(h1 != h2)

    def test_schedule_independence(self):
        # the corpus equals the per-(k, n) regeneration with derived seeds
        topics = sample_topics(3, h=2, V=6, seed=2)
        corpus = generate_corpus(topics, N=2, T=10, seed=42)
        for k in range(3):
            for n in range(2):
                expected = generate_hmm_sequence(topics[k], 10, seed=np.random.default_rng([42, k, n]))
                np.testing.assert_array_equal(corpus.sequence(k, n), expected)

    def test_empty_topic_list_rejected(self):
        with pytest.raises(ValueError):
            generate_corpus([], N=1, T=3, seed=0)


class TestGenerateLDSSequence:
    def test_identity_fixed_point(self):
        topic = LDSTopic(W=np.eye(2), C=np.eye(2), noise_std=0.0)
        ys = generate_lds_sequence(topic, T=4, x0=np.array([1.0, 2.0]), seed=0)
        np.testing.assert_allclose(ys, np.tile([1.0, 2.0], (4, 1)))

    def test_zero_transition(self):
        topic = LDSTopic(W=np.zeros((2, 2)), C=np.eye(2), noise_std=0.0)
        ys = generate_lds_sequence(topic, T=3, x0=np.array([5.0, -1.0]), seed=0)
        np.testing.assert_allclose(ys, 0.0)

    def test_geometric_decay(self):
        topic = LDSTopic(W=np.array([[0.5]]), C=np.array([[1.0]]), noise_std=0.0)
        ys = generate_lds_sequence(topic, T=4, x0=np.array([1.0]), seed=0)
        np.testing.assert_allclose(ys[:, 0], [0.5, 0.25, 0.125, 0.0625])

    def test_dimension_mismatch(self):
        topic = LDSTopic(W=np.eye(2), C=np.eye(2))
        with pytest.raises(ValueError):
            generate_lds_sequence(topic, T=3, x0=np.zeros(3), seed=0)

    def test_spectral_radius_guard(self):
        with pytest.raises(ValueError):
            LDSTopic(W=2.0 * np.eye(2), C=np.eye(2))

    def test_sampled_topic_obeys_radius(self):
        topic = sample_topic_lds(3, 2, seed=0, spectral_radius=0.8)
        rho = np.max(np.abs(np.linalg.eigvals(topic.W)))
        assert rho <= 0.8 + 1e-9


class TestSplitPrior:
    def test_sequence_axis_sizes(self):
        corpus = generate_corpus(sample_topics(2, 2, 4, seed=0), N=10, T=4, seed=0)
        split = split_prior(corpus, "sequence", holdout=3, seed=1)
        assert len(split.held_out) == 3 and len(split.held_in) == 7
        assert not set(split.held_out) & set(split.held_in)
        assert set(split.held_out) | set(split.held_in) == set(range(10))

    def test_topic_axis_paper_sizes(self):
        corpus = generate_corpus(sample_topics(20, 2, 4, seed=0), N=2, T=4, seed=0)
        split = split_prior(corpus, "topic", holdout=5, seed=1)
        assert len(split.held_out) == 5 and len(split.held_in) == 15
        prior_view = view_indices(corpus, split, side="out")
        assert len(prior_view) == 5 * 2

    def test_sequence_axis_shared_across_topics(self):
        corpus = generate_corpus(sample_topics(3, 2, 4, seed=0), N=6, T=4, seed=0)
        split = split_prior(corpus, "sequence", holdout=2, seed=3)
        view = view_indices(corpus, split, side="out")
        by_topic = {k: {n for kk, n in view if kk == k} for k in range(3)}
        assert by_topic[0] == by_topic[1] == by_topic[2] == set(split.held_out)

    @pytest.mark.parametrize("holdout", [0, 10, 11])
    def test_degenerate_holdout_rejected(self, holdout):
        corpus = generate_corpus(sample_topics(2, 2, 4, seed=0), N=10, T=4, seed=0)
        with pytest.raises(ValueError):
            split_prior(corpus, "sequence", holdout=holdout, seed=0)

    def test_different_seeds_give_different_subsets(self):
        corpus = generate_corpus(sample_topics(2, 2, 4, seed=0), N=8, T=4, seed=0)
        subsets = {split_prior(corpus, "sequence", holdout=2, seed=s).held_out for s in range(10)}
        assert len(subsets) > 1


class TestRandomTransitionCorpus:
    def test_long_run_uniform_frequencies(self):
        corpus = make_random_transition_corpus(h=5, V=4, N=10, T=10_000, seed=0)
        freqs = np.bincount(corpus.tokens.ravel(), minlength=4) / corpus.tokens.size
        assert np.abs(freqs - 0.25).max() < 0.01

    def test_single_token_sequences(self):
        corpus = make_random_transition_corpus(h=2, V=6, N=3, T=1, seed=0)
        assert corpus.tokens.shape == (1, 3, 1)

    def test_seed_determinism(self):
        a = make_random_transition_corpus(h=2, V=6, N=3, T=5, seed=9)
        b = make_random_transition_corpus(h=2, V=6, N=3, T=5, seed=9)
        np.testing.assert_array_equal(a.tokens, b.tokens)


class TestBuildPrompt:
    def test_requested_length(self):
        topic = sample_topic_hmm(h=4, V=20, seed=11)
        prompt = build_prompt(topic, T_p=48, seed=0)
        assert prompt.shape == (48,)

    def test_degenerate_topic_constant(self):
        prompt = build_prompt(degenerate_topic(), T_p=6, seed=0)
        np.testing.assert_array_equal(prompt, [3] * 6)

    def test_tokens_in_range(self):
        topic = sample_topic_hmm(h=3, V=7, seed=2)
        prompt = build_prompt(topic, T_p=30, seed=5)
        assert prompt.min() >= 0 and prompt.max() < 7

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            build_prompt(degenerate_topic(), T_p=1, seed=0)

    def test_delimited_demonstrations(self):
        prompt = build_prompt(degenerate_topic(V=5, token=2), T_p=11, seed=0,
                              delimiter_token=4, n_demos=3)
        assert prompt.shape == (11,)
        assert (prompt == 4).sum() == 2  # two separators between three demos

    def test_split_prompt(self):
        context, target = split_prompt(np.array([1, 2, 3]))
        np.testing.assert_array_equal(context, [1, 2])
        assert target == 3


class TestPersistence:
    def test_roundtrip_with_topics(self, tmp_path):
        topics = sample_topics(2, h=2, V=5, seed=0)
        corpus = generate_corpus(topics, N=3, T=7, seed=4)
        path = str(tmp_path / "corpus.jsonl")
        save_corpus(corpus, path, topics=topics)
        loaded, loaded_topics = load_corpus(path)
        np.testing.assert_array_equal(loaded.tokens, corpus.tokens)
        assert loaded.vocab_size == 5 and loaded.seed == 4 and loaded.kind == "hmm"
        assert len(loaded_topics) == 2
        np.testing.assert_array_equal(loaded_topics[1].transition, topics[1].transition)

    def test_letter_tokens(self):
        assert letter_token(0) == "a"
        assert letter_token(25) == "z"
        assert letter_token(26) == "aa"
        assert letter_token(27) == "ab"

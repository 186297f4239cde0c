"""Exact probabilistic ground truth for discrete topics.

Forward filtering gives log P(prefix | topic) and the filtering state, from
which the exact next-token conditional and the posterior-weighted mixture
over topics follow.  All evidence arithmetic is carried in log space with
per-step renormalization so prefixes of length 10^3+ stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import TopicHMM, _rng_from


class ZeroEvidenceError(ValueError):
    """The prefix has probability zero under the topic (or all topics)."""


@dataclass
class ForwardState:
    """Filtering state after consuming a prefix.

    alpha is the normalized distribution over the hidden state given the
    prefix; log_evidence is log P(prefix | topic), -inf when the prefix is
    impossible (alpha is then all-NaN).
    """

    alpha: np.ndarray
    log_evidence: float

    @property
    def is_zero_evidence(self) -> bool:
        return not np.isfinite(self.log_evidence)


def _validate_prefix(topic: TopicHMM, prefix: np.ndarray) -> np.ndarray:
    prefix = np.asarray(prefix, dtype=np.int64)
    if prefix.ndim != 1:
        raise ValueError("prefix must be a 1-D token array")
    if prefix.size and (prefix.min() < 0 or prefix.max() >= topic.vocab_size):
        raise ValueError("prefix token out of range [0, V)")
    return prefix


def forward_filter(topic: TopicHMM, prefix) -> ForwardState:
    """Run the scaled forward recursion over the prefix.

    Empty prefix: alpha = start, log_evidence = 0.  A zero-probability
    prefix yields log_evidence = -inf rather than an error so that mixture
    callers can down-weight the topic instead of aborting.
    """
    prefix = _validate_prefix(topic, prefix)
    alpha = topic.start.copy()
    log_evidence = 0.0
    for i, tok in enumerate(prefix):
        if i > 0:
            alpha = alpha @ topic.transition
        alpha = alpha * topic.emission[:, tok]
        step = alpha.sum()
        if step <= 0.0:
            return ForwardState(alpha=np.full(topic.n_states, np.nan), log_evidence=-np.inf)
        alpha /= step
        log_evidence += np.log(step)
    return ForwardState(alpha=alpha, log_evidence=log_evidence)


def true_next_token_dist(topic: TopicHMM, prefix) -> np.ndarray:
    """Exact P(next token | prefix, topic) as a length-V vector."""
    state = forward_filter(topic, prefix)
    if state.is_zero_evidence:
        raise ZeroEvidenceError("prefix has zero probability under this topic")
    prefix = np.asarray(prefix)
    if prefix.size == 0:
        state_dist = topic.start
    else:
        state_dist = state.alpha @ topic.transition
    dist = state_dist @ topic.emission
    return dist / dist.sum()


def bayes_mixture_predictor(
    topics: list[TopicHMM], topic_prior, prefix
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-weighted mixture of per-topic conditionals.

    Returns (next-token distribution over V, topic posterior over the given
    topics).  Topics under which the prefix is impossible get posterior 0;
    if that is all of them, raises ZeroEvidenceError.
    """
    topic_prior = np.asarray(topic_prior, dtype=np.float64)
    if topic_prior.shape != (len(topics),):
        raise ValueError("topic_prior length must match topics")
    if np.any(topic_prior < 0) or not np.isclose(topic_prior.sum(), 1.0, atol=1e-9):
        raise ValueError("topic_prior must lie on the simplex")
    log_post = np.full(len(topics), -np.inf)
    states = []
    for i, topic in enumerate(topics):
        st = forward_filter(topic, prefix)
        states.append(st)
        if topic_prior[i] > 0 and not st.is_zero_evidence:
            log_post[i] = np.log(topic_prior[i]) + st.log_evidence
    if not np.any(np.isfinite(log_post)):
        raise ZeroEvidenceError("prefix has zero probability under every topic")
    log_post -= log_post[np.isfinite(log_post)].max()
    posterior = np.where(np.isfinite(log_post), np.exp(log_post), 0.0)
    posterior /= posterior.sum()
    V = topics[0].vocab_size
    mixture = np.zeros(V)
    for i, topic in enumerate(topics):
        if posterior[i] > 0:
            mixture += posterior[i] * true_next_token_dist(topic, prefix)
    mixture /= mixture.sum()
    return mixture, posterior


def sample_continuation(topic: TopicHMM, prefix, n: int, seed=0) -> np.ndarray:
    """Sample n further tokens from P(. | prefix, topic), exactly.

    Draws the hidden state from the filtering posterior, then continues the
    chain; the result follows the true conditional data distribution.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    state = forward_filter(topic, prefix)
    if state.is_zero_evidence:
        raise ZeroEvidenceError("cannot continue a zero-probability prefix")
    rng = _rng_from(seed)
    prefix = np.asarray(prefix)
    out = np.empty(n, dtype=np.int64)
    if prefix.size == 0:
        state_dist = topic.start
    else:
        state_dist = state.alpha @ topic.transition
    s = rng.choice(topic.n_states, p=state_dist)
    out[0] = rng.choice(topic.vocab_size, p=topic.emission[s])
    for t in range(1, n):
        s = rng.choice(topic.n_states, p=topic.transition[s])
        out[t] = rng.choice(topic.vocab_size, p=topic.emission[s])
    return out


def per_prefix_dists(topic: TopicHMM, seq) -> np.ndarray:
    """Exact next-token conditionals at every prefix of seq.

    Row i is P(. | seq[:i+1], topic), shape (len(seq), V); rows align with
    the per-position model predictions.  Raises ZeroEvidenceError if any
    prefix is impossible under the topic.
    """
    seq = _validate_prefix(topic, seq)
    out = np.empty((seq.size, topic.vocab_size))
    alpha = topic.start.copy()
    for i, tok in enumerate(seq):
        if i > 0:
            alpha = alpha @ topic.transition
        alpha = alpha * topic.emission[:, tok]
        step = alpha.sum()
        if step <= 0.0:
            raise ZeroEvidenceError(f"prefix of length {i + 1} has zero probability")
        alpha /= step
        dist = (alpha @ topic.transition) @ topic.emission
        out[i] = dist / dist.sum()
    return out


def sequence_log_evidence_bruteforce(topic: TopicHMM, prefix) -> float:
    """Reference evidence by explicit summation over all hidden paths.

    Exponential in len(prefix); only for small test instances.
    """
    prefix = _validate_prefix(topic, prefix)
    if prefix.size == 0:
        return 0.0
    h = topic.n_states
    total = 0.0
    paths = np.stack(np.meshgrid(*([np.arange(h)] * prefix.size), indexing="ij"), axis=-1).reshape(
        -1, prefix.size
    )
    for path in paths:
        p = topic.start[path[0]] * topic.emission[path[0], prefix[0]]
        for t in range(1, prefix.size):
            p *= topic.transition[path[t - 1], path[t]] * topic.emission[path[t], prefix[t]]
        total += p
    if total <= 0.0:
        return -np.inf
    return float(np.log(total))

"""Losses and divergences.

The loss ladder runs from the corpus-level empirical loss (log-ratio of
true to model conditionals, averaged over topics, sequences and positions)
through its exact-KL counterpart on the same positions, to Monte Carlo
estimates of the fresh-sequence expected loss and the fresh-topic
population loss.  The four decomposition parts are the differences of
adjacent rungs computed on shared draws, so they sum to the population
estimate exactly, by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .corpus import Corpus, TopicHMM, child_seed, generate_hmm_sequence
from .hmm_oracle import ZeroEvidenceError, per_prefix_dists
from .model import SequenceModel, logits_all, nll_batch, predict_all_dists, predict_dist, unpack
from .optim import Trajectory

SIMPLEX_ATOL = 1e-9


class AbsoluteContinuityError(ValueError):
    """p puts mass where q has none; KL(p || q) is infinite."""


def _check_simplex(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if np.any(v < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(v.sum() - 1.0) > SIMPLEX_ATOL:
        raise ValueError(f"{name} must sum to 1 (got {v.sum()!r})")
    return v


def kl_divergence(p, q) -> float:
    """sum p_i log(p_i / q_i) in nats, with 0 log 0 = 0."""
    p = _check_simplex(p, "p")
    q = _check_simplex(q, "q")
    if p.shape != q.shape:
        raise ValueError("p and q must have equal length")
    support = p > 0
    if np.any(q[support] == 0):
        raise AbsoluteContinuityError("q vanishes on the support of p")
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def tv_distance(p, q) -> float:
    """Half the L1 distance; in [0, 1] and symmetric."""
    p = _check_simplex(p, "p")
    q = _check_simplex(q, "q")
    if p.shape != q.shape:
        raise ValueError("p and q must have equal length")
    return float(0.5 * np.abs(p - q).sum())


class KlTvCheck(NamedTuple):
    kl: float
    tv: float
    ratio_bound_C: float
    rhs: float
    holds: bool


def kl_tv_bound_check(p, q, slack: float = 1e-12) -> KlTvCheck:
    """Evaluate KL <= (2 C log C / (C - 1)) * TV with C = max_i p_i / q_i.

    C <= 1 forces p = q; the prefactor is extended by continuity to 2
    there.  Raises AbsoluteContinuityError when the ratio is unbounded.
    """
    kl = kl_divergence(p, q)
    tv = tv_distance(p, q)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    pos = q > 0
    C = float(np.max(p[pos] / q[pos]))
    factor = 2.0 * C * np.log(C) / (C - 1.0) if C > 1.0 else 2.0
    rhs = factor * tv
    return KlTvCheck(kl=kl, tv=tv, ratio_bound_C=C, rhs=rhs, holds=kl <= rhs + slack)


class MCEstimate(NamedTuple):
    value: float
    stderr: float


def _kl_rows(p_rows: np.ndarray, q_rows: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) with 0 log 0 = 0; q must be strictly positive."""
    safe_p = np.where(p_rows > 0, p_rows, 1.0)
    return np.sum(p_rows * (np.log(safe_p) - np.log(q_rows)), axis=-1)


@dataclass
class LossReport:
    """One evaluation of a model against the generating process."""

    empirical: float
    first_level_mc: float
    first_level_se: float
    population_mc: float
    population_se: float
    parts: np.ndarray  # four components; parts.sum() == population_mc exactly
    eps_opt: float = float("nan")
    icl_accuracy: float = float("nan")
    n_corpus_positions: int = 0
    n_fresh_sequences: int = 0
    n_topic_samples: int = 0
    n_prompt_samples: int = 0
    n_skipped: int = 0

    CSV_FIELDS = (
        "empirical first_level_mc first_level_se population_mc population_se "
        "part1 part2 part3 part4 eps_opt icl_accuracy n_corpus_positions "
        "n_fresh_sequences n_topic_samples n_prompt_samples n_skipped"
    ).split()

    def to_csv_values(self) -> list:
        return [
            self.empirical,
            self.first_level_mc,
            self.first_level_se,
            self.population_mc,
            self.population_se,
            *[float(x) for x in self.parts],
            self.eps_opt,
            self.icl_accuracy,
            self.n_corpus_positions,
            self.n_fresh_sequences,
            self.n_topic_samples,
            self.n_prompt_samples,
            self.n_skipped,
        ]


# ---------------------------------------------------------------------------
# corpus rungs
# ---------------------------------------------------------------------------


def _corpus_losses(model: SequenceModel, corpus: Corpus, topics: list[TopicHMM]):
    """Per-topic (log-ratio mean, KL mean) over all corpus positions.

    Both rungs reuse identical prefixes: positions t = 1 .. T-1, i.e. the
    T-1 prediction slots of each length-T sequence.
    """
    if len(topics) != corpus.K:
        raise ValueError("need one generating topic per corpus topic")
    ratio_by_topic = np.zeros(corpus.K)
    kl_by_topic = np.zeros(corpus.K)
    skipped = 0
    for k in range(corpus.K):
        ratio_terms = []
        kl_terms = []
        for n in range(corpus.N):
            seq = corpus.tokens[k, n]
            try:
                true_d = per_prefix_dists(topics[k], seq)
            except ZeroEvidenceError:
                skipped += 1
                continue
            model_d = predict_all_dists(model, seq)
            # rows 0..T-2 condition on prefixes of length 1..T-1
            tgt = seq[1:]
            idx = np.arange(corpus.T - 1)
            ratio_terms.append(np.mean(np.log(true_d[idx, tgt] / model_d[idx, tgt])))
            kl_terms.append(float(np.mean(_kl_rows(true_d[:-1], model_d[:-1]))))
        ratio_by_topic[k] = np.mean(ratio_terms) if ratio_terms else np.nan
        kl_by_topic[k] = np.mean(kl_terms) if kl_terms else np.nan
    return ratio_by_topic, kl_by_topic, skipped


def empirical_loss(model: SequenceModel, corpus: Corpus, topics: list[TopicHMM], return_counts: bool = False):
    """Mean log-ratio of true to model next-token probability over the corpus.

    Zero-evidence sequences (possible only under a mismatched topic) are
    skipped and counted; pass return_counts=True to receive the tally.
    """
    ratio, _, skipped = _corpus_losses(model, corpus, topics)
    value = float(np.nanmean(ratio))
    if return_counts:
        n_used = corpus.K * corpus.N - skipped
        return value, n_used, skipped
    return value


def corpus_kl_loss(model: SequenceModel, corpus: Corpus, topics: list[TopicHMM]) -> float:
    """Same averaging as empirical_loss with the target-token log-ratio
    replaced by the full conditional KL at each prefix."""
    _, kl, _ = _corpus_losses(model, corpus, topics)
    return float(np.nanmean(kl))


def optimization_error(model: SequenceModel, best: SequenceModel, corpus) -> float:
    """Mean log-probability gap between the best observed parameters and the
    evaluated ones over all corpus positions; >= 0 whenever best was chosen
    as the empirical-loss argmin over the same corpus."""
    data = corpus.tokens if isinstance(corpus, Corpus) else corpus.observations
    flat = data.reshape(-1, *data.shape[2:])
    return float(nll_batch(model, flat) - nll_batch(best, flat))


def select_best_checkpoint(model: SequenceModel, trajectory: Trajectory, corpus, view=None):
    """Checkpoint with the lowest corpus loss: the computable stand-in for
    the empirical minimizer.  Returns (model at best step, step)."""
    data = corpus.tokens if isinstance(corpus, Corpus) else corpus.observations
    if view is not None:
        stacked = np.stack([data[k, n] for k, n in view])
    else:
        stacked = data.reshape(-1, *data.shape[2:])
    best_step, best_loss, best_params = None, np.inf, None
    for step, params in trajectory.checkpoints:
        loss = nll_batch(model.with_params(params), stacked)
        if loss < best_loss:
            best_step, best_loss, best_params = step, loss, params
    return model.with_params(best_params.copy()), best_step


# ---------------------------------------------------------------------------
# Monte Carlo rungs
# ---------------------------------------------------------------------------


def _sequence_kl_mean(model: SequenceModel, topic: TopicHMM, seq) -> float:
    """Mean over prediction slots of KL(true || model), slots 1..len-1."""
    true_d = per_prefix_dists(topic, seq)[:-1]
    model_d = predict_all_dists(model, seq)[:-1]
    return float(np.mean(_kl_rows(true_d, model_d)))


def first_level_expected_loss_mc(
    model: SequenceModel, topics: list[TopicHMM], M: int, T: int, seed=0
) -> MCEstimate:
    """Fresh-sequence expected loss under the given (seen) topics.

    Per topic, M fresh sequences of length T are drawn and the exact
    conditional KL is averaged over their prediction slots; only the prefix
    expectation is Monte Carlo.  stderr combines per-topic sample variances.
    """
    if M < 1 or T < 2:
        raise ValueError("need M >= 1 and T >= 2")
    values = np.zeros((len(topics), M))
    for k, topic in enumerate(topics):
        for m in range(M):
            seq = generate_hmm_sequence(topic, T, seed=np.random.default_rng(child_seed(seed, 0xF5, k, m)))
            values[k, m] = _sequence_kl_mean(model, topic, seq)
    est = float(values.mean())
    if M > 1:
        per_topic_var = values.var(axis=1, ddof=1) / M
        stderr = float(np.sqrt(per_topic_var.sum()) / len(topics))
    else:
        stderr = float("nan")
    return MCEstimate(est, stderr)


def loss_ladder_rungs(
    model: SequenceModel, corpus: Corpus, topics: list[TopicHMM], M: int, seed: int = 0
) -> tuple[float, float, MCEstimate, int]:
    """(empirical, corpus-KL, fresh-sequence estimate, skip count): the
    prompt-length-independent rungs, computable once and reused."""
    ratio, kl, skipped = _corpus_losses(model, corpus, topics)
    first = first_level_expected_loss_mc(model, topics, M=M, T=corpus.T, seed=seed)
    return float(np.nanmean(ratio)), float(np.nanmean(kl)), first, skipped


def population_loss_mc(
    model: SequenceModel,
    topic_sampler: Callable[[np.random.Generator], TopicHMM],
    M_topics: int,
    M_prompts: int,
    T_p: int,
    seed: int = 0,
    corpus: Corpus | None = None,
    topics: list[TopicHMM] | None = None,
    best: SequenceModel | None = None,
    rungs: tuple[float, float, MCEstimate, int] | None = None,
) -> LossReport:
    """Two-level expected loss plus the four-part decomposition.

    Fresh topics come from topic_sampler, fresh prompts of length T_p from
    each topic; the exact conditional KL is averaged over prediction slots.
    When the pre-training corpus and its topics are supplied, the ladder
    rungs are evaluated on shared draws and the parts are their successive
    differences, so they sum to the population estimate exactly.
    """
    if M_topics < 1 or M_prompts < 1 or T_p < 2:
        raise ValueError("need M_topics, M_prompts >= 1 and T_p >= 2")
    values = np.zeros((M_topics, M_prompts))
    skipped = 0
    for j in range(M_topics):
        topic = topic_sampler(np.random.default_rng(child_seed(seed, 0x70, j)))
        for m in range(M_prompts):
            prompt = generate_hmm_sequence(topic, T_p, seed=np.random.default_rng(child_seed(seed, 0x9E, j, m)))
            try:
                values[j, m] = _sequence_kl_mean(model, topic, prompt)
            except ZeroEvidenceError:
                values[j, m] = np.nan
                skipped += 1
    pop = float(np.nanmean(values))
    per_topic = np.nanmean(values, axis=1)
    pop_se = float(np.std(per_topic, ddof=1) / np.sqrt(M_topics)) if M_topics > 1 else float("nan")

    if rungs is None and corpus is not None and topics is not None:
        rungs = loss_ladder_rungs(model, corpus, topics, M=M_prompts, seed=seed)
    if rungs is not None:
        empirical, l_prime, first, corpus_skipped = rungs
        skipped += corpus_skipped
        n_corpus = corpus.K * corpus.N * (corpus.T - 1) if corpus is not None else 0
        n_fresh = len(topics) * M_prompts if topics is not None else 0
    else:
        empirical, l_prime = 0.0, 0.0
        first = MCEstimate(0.0, float("nan"))
        n_corpus = n_fresh = 0
    parts = np.array(
        [empirical, l_prime - empirical, first.value - l_prime, pop - first.value]
    )
    # the reported population value is the telescoped sum, so the
    # decomposition identity holds bitwise (the raw mean agrees to rounding)
    pop_reported = float(np.sum(parts))
    eps = optimization_error(model, best, corpus) if (best is not None and corpus is not None) else float("nan")
    return LossReport(
        empirical=empirical,
        first_level_mc=first.value,
        first_level_se=first.stderr,
        population_mc=pop_reported,
        population_se=pop_se,
        parts=parts,
        eps_opt=eps,
        n_corpus_positions=n_corpus,
        n_fresh_sequences=n_fresh,
        n_topic_samples=M_topics,
        n_prompt_samples=M_topics * M_prompts,
        n_skipped=skipped,
    )


# ---------------------------------------------------------------------------
# task-level metrics
# ---------------------------------------------------------------------------


def icl_accuracy(model: SequenceModel, prompts, targets) -> float:
    """Fraction of prompts whose argmax prediction hits the target token.

    Ties break toward the lowest token id (np.argmax takes the first max).
    """
    targets = np.asarray(targets, dtype=np.int64)
    if len(prompts) == 0:
        raise ValueError("need at least one prompt")
    if len(prompts) != targets.size:
        raise ValueError("prompts and targets must align")
    lengths = {len(p) for p in prompts}
    if len(lengths) == 1:
        batch = np.asarray(prompts, dtype=np.int64)
        final = logits_all(model, batch)[:, -1, :]
        hits = final.argmax(axis=1) == targets
        return float(hits.mean())
    hits = [int(np.argmax(predict_dist(model, p)) == t) for p, t in zip(prompts, targets)]
    return float(np.mean(hits))


def lds_losses(model: SequenceModel, sequences) -> tuple[float, float]:
    """(overall, last-position) mean squared prediction error.

    overall averages over every prediction slot; the last-position loss
    keeps only the final observation of each sequence.
    """
    if model.arch.kind != "linear_readout_lds":
        raise ValueError("lds_losses requires a linear_readout_lds model")
    ys = np.asarray(sequences, dtype=np.float64)
    if ys.ndim == 2:
        ys = ys[None]
    if ys.ndim == 4:
        ys = ys.reshape(-1, ys.shape[-2], ys.shape[-1])
    blocks = unpack(model.arch, model.params)
    pred = ys[:, :-1] @ blocks["A"].T + blocks["b"]
    err2 = (pred - ys[:, 1:]) ** 2
    overall = float(err2.mean())
    icl_last = float(err2[:, -1, :].mean())
    return overall, icl_last

"""Synthetic topic and sequence generation.

A *topic* is one data distribution: either a hidden Markov model over a
discrete vocabulary (with an optional deterministic state-to-token memory
map) or a linear dynamical system over real observation vectors.  Corpora
are grids of sequences indexed by (topic k, sequence n), generated from
per-sequence derived seeds so results never depend on iteration order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

STOCHASTIC_ATOL = 1e-9


def _rng_from(seed) -> np.random.Generator:
    """Accept an int seed, a seed sequence (list of ints) or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_seed(seed, *extra: int) -> list[int]:
    """Flatten (seed, extra...) into one entropy list for derived streams."""
    if isinstance(seed, np.random.Generator):
        raise TypeError("cannot derive child seeds from a Generator; pass integers")
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return [int(s) for s in base] + [int(e) for e in extra]


def _check_row_stochastic(mat: np.ndarray, name: str) -> None:
    if np.any(mat < 0):
        raise ValueError(f"{name} has negative entries")
    rows = mat.sum(axis=-1)
    if not np.allclose(rows, 1.0, atol=STOCHASTIC_ATOL, rtol=0.0):
        raise ValueError(f"{name} rows must sum to 1 (max error {np.abs(rows - 1).max():.3g})")


@dataclass(frozen=True)
class TopicHMM:
    """One discrete topic: hidden-state chain plus an emission map.

    transition : (h, h) row-stochastic
    start      : (h,) probability vector over the initial hidden state
    emission   : (h, V) row-stochastic; rows may be one-hot (memory-map mode)
    """

    transition: np.ndarray
    start: np.ndarray
    emission: np.ndarray
    topic_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "transition", np.asarray(self.transition, dtype=np.float64))
        object.__setattr__(self, "start", np.asarray(self.start, dtype=np.float64))
        object.__setattr__(self, "emission", np.asarray(self.emission, dtype=np.float64))
        h = self.transition.shape[0]
        if self.transition.shape != (h, h):
            raise ValueError("transition must be square")
        if self.start.shape != (h,):
            raise ValueError("start length must match transition size")
        if self.emission.shape[0] != h:
            raise ValueError("emission must have one row per hidden state")
        _check_row_stochastic(self.transition, "transition")
        _check_row_stochastic(self.start[None, :], "start")
        _check_row_stochastic(self.emission, "emission")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.emission.shape[1]


@dataclass(frozen=True)
class LDSTopic:
    """One continuous topic: state transition W, observation map C, noise level."""

    W: np.ndarray
    C: np.ndarray
    noise_std: float = 0.0
    topic_id: int = 0
    spectral_radius_tol: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=np.float64))
        object.__setattr__(self, "C", np.asarray(self.C, dtype=np.float64))
        d = self.W.shape[0]
        if self.W.shape != (d, d):
            raise ValueError("W must be square")
        if self.C.ndim != 2 or self.C.shape[1] != d:
            raise ValueError("C must be (p, d) with d matching W")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        rho = np.max(np.abs(np.linalg.eigvals(self.W)))
        if rho > 1.0 + self.spectral_radius_tol:
            raise ValueError(f"spectral radius {rho:.4f} exceeds 1 + tol; sequences would blow up")

    @property
    def state_dim(self) -> int:
        return self.W.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.C.shape[0]


@dataclass
class Corpus:
    """K*N token sequences of equal length T plus generation metadata.

    tokens has shape (K, N, T) with integer ids in [0, V).
    """

    tokens: np.ndarray
    vocab_size: int
    seed: int
    kind: str = "hmm"

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if self.tokens.ndim != 3:
            raise ValueError("tokens must be (K, N, T)")
        if self.tokens.size and (self.tokens.min() < 0 or self.tokens.max() >= self.vocab_size):
            raise ValueError("token ids out of range [0, V)")

    @property
    def K(self) -> int:
        return self.tokens.shape[0]

    @property
    def N(self) -> int:
        return self.tokens.shape[1]

    @property
    def T(self) -> int:
        return self.tokens.shape[2]

    def sequence(self, k: int, n: int) -> np.ndarray:
        return self.tokens[k, n]

    def all_indices(self) -> list[tuple[int, int]]:
        return [(k, n) for k in range(self.K) for n in range(self.N)]


@dataclass
class LdsCorpus:
    """K*N real observation sequences, shape (K, N, T, p)."""

    observations: np.ndarray
    seed: int
    kind: str = "lds"

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        if self.observations.ndim != 4:
            raise ValueError("observations must be (K, N, T, p)")

    @property
    def K(self) -> int:
        return self.observations.shape[0]

    @property
    def N(self) -> int:
        return self.observations.shape[1]

    @property
    def T(self) -> int:
        return self.observations.shape[2]

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[3]

    def sequence(self, k: int, n: int) -> np.ndarray:
        return self.observations[k, n]

    def all_indices(self) -> list[tuple[int, int]]:
        return [(k, n) for k in range(self.K) for n in range(self.N)]


@dataclass(frozen=True)
class PriorSplit:
    """Disjoint, exhaustive index split along one corpus axis.

    held_in feeds the posterior training run, held_out the parallel prior run.
    For axis="sequence" the same held-out ids apply to every topic; for
    axis="topic" whole topics are removed.
    """

    held_in: tuple[int, ...]
    held_out: tuple[int, ...]
    axis: str
    total: int

    def __post_init__(self):
        if self.axis not in ("sequence", "topic"):
            raise ValueError("axis must be 'sequence' or 'topic'")
        both = set(self.held_in) | set(self.held_out)
        if set(self.held_in) & set(self.held_out):
            raise ValueError("held_in and held_out overlap")
        if both != set(range(self.total)):
            raise ValueError("split must cover the full index set")

    @property
    def n_held_out(self) -> int:
        return len(self.held_out)


# ---------------------------------------------------------------------------
# topic sampling
# ---------------------------------------------------------------------------


def sample_topic_hmm(
    h: int,
    V: int,
    concentration: float = 1.0,
    seed=0,
    topic_id: int = 0,
    stochastic_emission: bool = False,
) -> TopicHMM:
    """Draw one random topic.

    Transition rows and the start vector come from a symmetric
    Dirichlet(concentration).  When h <= V and stochastic_emission is off,
    the emission is a deterministic memory map sending each hidden state to
    a distinct token; otherwise emission rows are Dirichlet draws too.
    """
    if h < 1 or V < 2:
        raise ValueError("need h >= 1 and V >= 2")
    if concentration <= 0:
        raise ValueError("concentration must be positive")
    rng = _rng_from(seed)
    alpha_h = np.full(h, concentration)
    transition = rng.dirichlet(alpha_h, size=h)
    start = rng.dirichlet(alpha_h)
    if h <= V and not stochastic_emission:
        emission = np.zeros((h, V))
        emission[np.arange(h), rng.permutation(V)[:h]] = 1.0
    else:
        emission = rng.dirichlet(np.full(V, concentration), size=h)
    return TopicHMM(transition=transition, start=start, emission=emission, topic_id=topic_id)


def sample_topic_lds(
    d: int,
    p: int,
    seed=0,
    spectral_radius: float = 0.9,
    noise_std: float = 0.0,
    topic_id: int = 0,
) -> LDSTopic:
    """Draw one continuous topic: random W rescaled to the target spectral
    radius, observation map = leading p rows of the identity."""
    if d < 1 or p < 1 or p > d:
        raise ValueError("need 1 <= p <= d")
    rng = _rng_from(seed)
    W = rng.standard_normal((d, d))
    rho = np.max(np.abs(np.linalg.eigvals(W)))
    W *= spectral_radius / rho
    C = np.eye(p, d)
    return LDSTopic(W=W, C=C, noise_std=noise_std, topic_id=topic_id)


def sample_topics(
    K: int,
    h: int,
    V: int,
    concentration: float = 1.0,
    seed=0,
    stochastic_emission: bool = False,
) -> list[TopicHMM]:
    """Draw K topics with per-topic derived seeds (order independent)."""
    return [
        sample_topic_hmm(
            h,
            V,
            concentration,
            seed=np.random.default_rng(child_seed(seed, 0x701C, k)),
            topic_id=k,
            stochastic_emission=stochastic_emission,
        )
        for k in range(K)
    ]


# ---------------------------------------------------------------------------
# sequence generation
# ---------------------------------------------------------------------------


def generate_hmm_sequence(topic: TopicHMM, T: int, seed=0) -> np.ndarray:
    """Sample one length-T token sequence from the topic's data distribution."""
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = _rng_from(seed)
    tokens = np.empty(T, dtype=np.int64)
    cum_trans = np.cumsum(topic.transition, axis=1)
    cum_emit = np.cumsum(topic.emission, axis=1)
    u_state = rng.random(T)
    u_tok = rng.random(T)
    state = int(np.searchsorted(np.cumsum(topic.start), u_state[0], side="right"))
    state = min(state, topic.n_states - 1)
    tokens[0] = min(int(np.searchsorted(cum_emit[state], u_tok[0], side="right")), topic.vocab_size - 1)
    for t in range(1, T):
        state = min(int(np.searchsorted(cum_trans[state], u_state[t], side="right")), topic.n_states - 1)
        tokens[t] = min(int(np.searchsorted(cum_emit[state], u_tok[t], side="right")), topic.vocab_size - 1)
    return tokens


def generate_corpus(topics: list[TopicHMM], N: int, T: int, seed: int = 0) -> Corpus:
    """K*N sequences, i.i.d. within each topic, from per-(k, n) derived seeds."""
    if not topics:
        raise ValueError("need at least one topic")
    if N < 1 or T < 1:
        raise ValueError("need N >= 1 and T >= 1")
    V = topics[0].vocab_size
    if any(t.vocab_size != V for t in topics):
        raise ValueError("all topics must share one vocabulary")
    tokens = np.empty((len(topics), N, T), dtype=np.int64)
    for k, topic in enumerate(topics):
        for n in range(N):
            tokens[k, n] = generate_hmm_sequence(topic, T, seed=np.random.default_rng(child_seed(seed, k, n)))
    return Corpus(tokens=tokens, vocab_size=V, seed=seed, kind="hmm")


def generate_lds_sequence(topic: LDSTopic, T: int, x0: np.ndarray, seed=0) -> np.ndarray:
    """Observations y_1..y_T of the system started at x0.

    The state advances first, so y_1 already reflects one application of W:
    x_{t+1} = W x_t + noise, y_{t+1} = C x_{t+1}.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (topic.state_dim,):
        raise ValueError(f"x0 must have dimension {topic.state_dim}")
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = _rng_from(seed)
    ys = np.empty((T, topic.obs_dim))
    x = x0
    for t in range(T):
        noise = topic.noise_std * rng.standard_normal(topic.state_dim) if topic.noise_std > 0 else 0.0
        x = topic.W @ x + noise
        ys[t] = topic.C @ x
    return ys


def generate_lds_corpus(
    topics: list[LDSTopic], N: int, T: int, seed: int = 0, x0_std: float = 1.0
) -> LdsCorpus:
    """K*N observation sequences with random Gaussian initial states."""
    if not topics:
        raise ValueError("need at least one topic")
    p = topics[0].obs_dim
    obs = np.empty((len(topics), N, T, p))
    for k, topic in enumerate(topics):
        for n in range(N):
            rng = np.random.default_rng(child_seed(seed, k, n))
            x0 = x0_std * rng.standard_normal(topic.state_dim)
            obs[k, n] = generate_lds_sequence(topic, T, x0, seed=rng)
    return LdsCorpus(observations=obs, seed=seed)


def make_random_transition_corpus(h: int, V: int, N: int, T: int, seed: int = 0) -> Corpus:
    """Unstructured pre-training data: every token transition is uniform.

    Tokens are i.i.d. uniform over [0, V), so all V*V transitions occur with
    equal frequency and there is no topic to infer.  h is accepted for
    signature parity with the structured generators and has no effect.
    """
    del h
    if V < 2:
        raise ValueError("V must be >= 2")
    if N < 1 or T < 1:
        raise ValueError("need N >= 1 and T >= 1")
    tokens = np.empty((1, N, T), dtype=np.int64)
    for n in range(N):
        rng = np.random.default_rng(child_seed(seed, 0, n))
        tokens[0, n] = rng.integers(0, V, size=T)
    return Corpus(tokens=tokens, vocab_size=V, seed=seed, kind="random_transition")


def build_prompt(
    topic: TopicHMM,
    T_p: int,
    seed=0,
    delimiter_token: int | None = None,
    n_demos: int = 1,
) -> np.ndarray:
    """Sample one evaluation prompt of length T_p; the final position is the
    prediction target and the first T_p - 1 tokens are the context.

    By default the prompt is a single auto-regressively sampled sequence.
    Setting delimiter_token and n_demos > 1 instead joins independent
    demonstration segments with the delimiter (total length still T_p).
    """
    if T_p < 2:
        raise ValueError("prompt needs length >= 2 (at least one context token)")
    if delimiter_token is None or n_demos <= 1:
        return generate_hmm_sequence(topic, T_p, seed=seed)
    if not 0 <= delimiter_token < topic.vocab_size:
        raise ValueError("delimiter_token out of vocabulary")
    rng = _rng_from(seed)
    budget = T_p - (n_demos - 1)  # token positions left after delimiters
    if budget < n_demos:
        raise ValueError("T_p too short for the requested demo count")
    base, extra = divmod(budget, n_demos)
    parts: list[np.ndarray] = []
    for i in range(n_demos):
        seg = base + (1 if i < extra else 0)
        parts.append(generate_hmm_sequence(topic, seg, seed=rng))
        if i < n_demos - 1:
            parts.append(np.array([delimiter_token], dtype=np.int64))
    return np.concatenate(parts)


def split_prompt(prompt: np.ndarray) -> tuple[np.ndarray, int]:
    """(context, target): everything but the last token, and the last token."""
    prompt = np.asarray(prompt)
    if prompt.shape[0] < 2:
        raise ValueError("prompt too short to split")
    return prompt[:-1], int(prompt[-1])


# ---------------------------------------------------------------------------
# prior splits
# ---------------------------------------------------------------------------


def split_prior(corpus, axis: str, holdout: int, seed: int = 0) -> PriorSplit:
    """Uniformly sample a held-out subset (without replacement) along one axis.

    axis="sequence": holdout = N' sequence ids, shared by every topic.
    axis="topic":    holdout = K' whole topics.
    """
    if axis == "sequence":
        total = corpus.N
    elif axis == "topic":
        total = corpus.K
    else:
        raise ValueError("axis must be 'sequence' or 'topic'")
    if not 0 < holdout < total:
        raise ValueError(f"holdout must be in (0, {total}); an empty prior or posterior set is meaningless")
    rng = _rng_from(seed)
    out = np.sort(rng.choice(total, size=holdout, replace=False))
    held_out = tuple(int(i) for i in out)
    held_in = tuple(i for i in range(total) if i not in set(held_out))
    return PriorSplit(held_in=held_in, held_out=held_out, axis=axis, total=total)


def view_indices(corpus, split: PriorSplit | None = None, side: str = "in") -> list[tuple[int, int]]:
    """(k, n) pairs selected by a split side; the whole corpus when split is None."""
    if split is None:
        return corpus.all_indices()
    ids = split.held_in if side == "in" else split.held_out
    if split.axis == "sequence":
        return [(k, n) for k in range(corpus.K) for n in ids]
    return [(k, n) for k in ids for n in range(corpus.N)]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_corpus(corpus: Corpus, path: str, topics: list[TopicHMM] | None = None) -> None:
    """Newline-delimited JSON: one header record, then one record per sequence.

    Topics, when given, go to a dense-array sidecar at path + '.topics.npz'.
    """
    with open(path, "w", encoding="utf-8") as f:
        header = {
            "K": corpus.K,
            "N": corpus.N,
            "T": corpus.T,
            "V": corpus.vocab_size,
            "seed": corpus.seed,
            "kind": corpus.kind,
        }
        f.write(json.dumps(header) + "\n")
        for k in range(corpus.K):
            for n in range(corpus.N):
                rec = {"k": k, "n": n, "tokens": corpus.tokens[k, n].tolist()}
                f.write(json.dumps(rec) + "\n")
    if topics is not None:
        np.savez(
            path + ".topics.npz",
            transition=np.stack([t.transition for t in topics]),
            start=np.stack([t.start for t in topics]),
            emission=np.stack([t.emission for t in topics]),
            topic_ids=np.array([t.topic_id for t in topics], dtype=np.int64),
        )


def load_corpus(path: str) -> tuple[Corpus, list[TopicHMM] | None]:
    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline())
        tokens = np.zeros((header["K"], header["N"], header["T"]), dtype=np.int64)
        for line in f:
            rec = json.loads(line)
            tokens[rec["k"], rec["n"]] = rec["tokens"]
    corpus = Corpus(tokens=tokens, vocab_size=header["V"], seed=header["seed"], kind=header["kind"])
    topics = None
    try:
        with np.load(path + ".topics.npz") as z:
            topics = [
                TopicHMM(
                    transition=z["transition"][k],
                    start=z["start"][k],
                    emission=z["emission"][k],
                    topic_id=int(z["topic_ids"][k]),
                )
                for k in range(z["transition"].shape[0])
            ]
    except FileNotFoundError:
        pass
    return corpus, topics


def letter_token(token_id: int) -> str:
    """Display-only mapping of dense ids onto 'a'..'z', 'aa'..'az', ...."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    if token_id < 0:
        raise ValueError("token id must be nonnegative")
    out = []
    token_id += 1
    while token_id:
        token_id, rem = divmod(token_id - 1, 26)
        out.append(letters[rem])
    return "".join(reversed(out))

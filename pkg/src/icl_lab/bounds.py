"""Closed-form generalization-bound evaluation.

Evaluates the capacity term, estimators for the three assumption constants
(loss bound S, gradient bound L, expected-gradient bound sigma), a
Gaussian-ensemble posterior/prior KL, and both bound formulas.  Hidden
big-O constants are set to 1; the evaluators are meant for ordering,
monotonicity and non-violation checks, not tightness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, TopicHMM, child_seed, generate_hmm_sequence
from .hmm_oracle import per_prefix_dists
from .metrics import AbsoluteContinuityError  # noqa: F401  (re-exported for callers)
from .model import SequenceModel, nll_and_grad, predict_all_dists
from .optim import Trajectory


class InsufficientEnsembleError(ValueError):
    """Fewer than two parameter vectors per side; no variance to fit."""


@dataclass
class BoundInputs:
    """Every scalar entering the two bound formulas."""

    K: int
    N: int
    T: int
    T_p: int = 0
    K_prime: int = 0
    N_prime: int = 0
    T_prime: int = 0
    beta: float = 1.0
    S: float = 0.0
    L: float = 0.0
    sigma: float = 0.0
    delta: float = 0.1
    eps_opt: float = 0.0
    N_param: int = 1
    kl_posterior_prior: float | None = None
    scaling: tuple[float, float] | None = None  # (N_c, alpha_N)

    def __post_init__(self):
        for name in ("K", "N", "T", "N_param"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive count")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.N_prime and not 0 < self.N_prime < self.N:
            raise ValueError("need 0 < N' < N")
        if self.K_prime and not 0 < self.K_prime < self.K:
            raise ValueError("need 0 < K' < K")
        if min(self.S, self.L, self.sigma) < 0:
            raise ValueError("S, L, sigma must be >= 0")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.kl_posterior_prior is not None and self.kl_posterior_prior < 0:
            raise ValueError("measured KL must be >= 0")


def capacity_C(beta: float, S: float, T_prime: float) -> float:
    """(beta/2) e^{8 beta S} (1 - e^{-T' / e^{8 beta S}}).

    Evaluated as (beta/2) T' (1 - e^{-x}) / x with x = T' e^{-8 beta S},
    which is the same quantity but stays finite when e^{8 beta S}
    overflows; the small-T' limit (beta T' / 2) falls out automatically.
    """
    if beta <= 0 or S < 0 or T_prime < 0:
        raise ValueError("need beta > 0, S >= 0, T_prime >= 0")
    if T_prime == 0:
        return 0.0
    x = T_prime * np.exp(-8.0 * beta * S)
    if x == 0.0:
        return 0.5 * beta * T_prime
    return float(0.5 * beta * T_prime * (-np.expm1(-x)) / x)


def estimate_S(
    model: SequenceModel | None = None,
    corpus: Corpus | None = None,
    topics: list[TopicHMM] | None = None,
    scaling: tuple[float, float] | None = None,
    n_param: int | None = None,
) -> float:
    """Loss bound: empirical max log-ratio over corpus positions, or the
    scaling form (N_c / N_param)^alpha_N when fit constants are supplied."""
    if scaling is not None:
        n_c, alpha = scaling
        n_param = n_param if n_param is not None else (model.n_param if model else None)
        if n_param is None:
            raise ValueError("scaling mode needs N_param (or a model)")
        return float((n_c / n_param) ** alpha)
    if model is None or corpus is None or topics is None:
        raise ValueError("need either (model, corpus, topics) or scaling constants")
    worst = -np.inf
    for k in range(corpus.K):
        for n in range(corpus.N):
            seq = corpus.tokens[k, n]
            true_d = per_prefix_dists(topics[k], seq)
            model_d = predict_all_dists(model, seq)
            tgt = seq[1:]
            idx = np.arange(corpus.T - 1)
            worst = max(worst, float(np.max(np.log(true_d[idx, tgt] / model_d[idx, tgt]))))
    return max(worst, 0.0)


def _per_sequence_grad_norms(model: SequenceModel, params: np.ndarray, seqs) -> np.ndarray:
    m = model.with_params(params)
    return np.array([float(np.linalg.norm(nll_and_grad(m, s)[1])) for s in seqs])


def estimate_L(
    trajectory: Trajectory,
    corpus,
    model: SequenceModel,
    max_checkpoints: int | None = None,
    max_sequences: int | None = None,
    seed: int = 0,
) -> float:
    """Gradient bound: max per-sequence gradient norm over checkpoints.

    Optional subsampling keeps desk-scale sweeps fast; the estimate is
    monotone in the evaluated set, so subsampling can only lower it.
    """
    if not trajectory.checkpoints:
        raise ValueError("trajectory has no checkpoints")
    data = corpus.tokens if hasattr(corpus, "tokens") else corpus.observations
    seqs = data.reshape(-1, *data.shape[2:])
    rng = np.random.default_rng(seed)
    if max_sequences is not None and len(seqs) > max_sequences:
        seqs = seqs[rng.choice(len(seqs), size=max_sequences, replace=False)]
    checkpoints = trajectory.checkpoints
    if max_checkpoints is not None and len(checkpoints) > max_checkpoints:
        pick = np.linspace(0, len(checkpoints) - 1, max_checkpoints).astype(int)
        checkpoints = [checkpoints[i] for i in pick]
    worst = 0.0
    for _, params in checkpoints:
        worst = max(worst, float(_per_sequence_grad_norms(model, params, seqs).max()))
    return worst


def estimate_sigma(
    trajectory: Trajectory,
    topics: list[TopicHMM],
    model: SequenceModel,
    M: int,
    T: int,
    seed: int = 0,
    max_checkpoints: int | None = None,
) -> float:
    """Expected-gradient bound: max over checkpoints and topics of the norm
    of the M-sequence Monte Carlo mean gradient on fresh sequences."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if not trajectory.checkpoints:
        raise ValueError("trajectory has no checkpoints")
    checkpoints = trajectory.checkpoints
    if max_checkpoints is not None and len(checkpoints) > max_checkpoints:
        pick = np.linspace(0, len(checkpoints) - 1, max_checkpoints).astype(int)
        checkpoints = [checkpoints[i] for i in pick]
    fresh = {
        k: [
            generate_hmm_sequence(topic, T, seed=np.random.default_rng(child_seed(seed, 0x516, k, m)))
            for m in range(M)
        ]
        for k, topic in enumerate(topics)
    }
    worst = 0.0
    for _, params in checkpoints:
        m = model.with_params(params)
        for k in range(len(topics)):
            grads = [nll_and_grad(m, s)[1] for s in fresh[k]]
            worst = max(worst, float(np.linalg.norm(np.mean(grads, axis=0))))
    return worst


def kl_posterior_prior_gaussian(final_params_posterior, final_params_prior, var_floor: float = 1e-8) -> float:
    """Fit diagonal Gaussians to the two parameter ensembles and return the
    closed-form KL(posterior || prior)."""
    post = np.asarray(final_params_posterior, dtype=np.float64)
    prior = np.asarray(final_params_prior, dtype=np.float64)
    if post.ndim != 2 or prior.ndim != 2:
        raise ValueError("ensembles must be (runs, N_param) arrays")
    if post.shape[0] < 2 or prior.shape[0] < 2:
        raise InsufficientEnsembleError("need at least two runs per side")
    if post.shape[1] != prior.shape[1]:
        raise ValueError("parameter dimension mismatch between ensembles")
    m_p, v_p = post.mean(axis=0), np.maximum(post.var(axis=0, ddof=1), var_floor)
    m_q, v_q = prior.mean(axis=0), np.maximum(prior.var(axis=0, ddof=1), var_floor)
    kl = 0.5 * np.sum(v_p / v_q + (m_q - m_p) ** 2 / v_q - 1.0 + np.log(v_q / v_p))
    return float(max(kl, 0.0))


@dataclass
class BoundResult:
    general: float
    detailed: float
    terms: dict = field(default_factory=dict)
    clamped: bool = False

    def __iter__(self):
        return iter((self.general, self.detailed))


def _radicand(value: float) -> tuple[float, bool]:
    return (max(value, 0.0), value < 0)


def first_level_bound(inputs: BoundInputs) -> BoundResult:
    """Fresh-sequence (first-level) bound.

    general:  sqrt(log(1/d)/(KNT)) + sqrt((KL + log(1/d))/(KNT) - eps_opt)
    detailed: KL replaced by L^2 C(beta, S, T') / N' and N by N - N'.
    Negative radicands clamp to zero and set the clamped flag.
    """
    log_inv_delta = float(np.log(1.0 / inputs.delta))
    kl = inputs.kl_posterior_prior if inputs.kl_posterior_prior is not None else 0.0
    knt = inputs.K * inputs.N * inputs.T
    rad_gen, clamp_gen = _radicand((kl + log_inv_delta) / knt - inputs.eps_opt)
    general = float(np.sqrt(log_inv_delta / knt) + np.sqrt(rad_gen))

    if not inputs.N_prime:
        raise ValueError("detailed form needs N_prime")
    cap = capacity_C(inputs.beta, inputs.S, inputs.T_prime)
    kl_proxy = inputs.L**2 * cap / inputs.N_prime
    knt_post = inputs.K * (inputs.N - inputs.N_prime) * inputs.T
    rad_det, clamp_det = _radicand((kl_proxy + log_inv_delta) / knt_post - inputs.eps_opt)
    detailed = float(np.sqrt(log_inv_delta / knt_post) + np.sqrt(rad_det))
    return BoundResult(
        general=general,
        detailed=detailed,
        terms={
            "log_inv_delta": log_inv_delta,
            "capacity": cap,
            "kl_measured": kl,
            "kl_proxy": kl_proxy,
            "knt": knt,
            "knt_posterior": knt_post,
        },
        clamped=clamp_gen or clamp_det,
    )


def population_bound(inputs: BoundInputs) -> BoundResult:
    """Fresh-topic (two-level) bound: a prompt-length term plus the
    first-level detailed bound.

    general:  sqrt(1/(K T_p)) (KL + log(1/d)) + first-level detailed bound
    detailed: KL replaced by sigma^2 C(beta, S, T') / K' and K by K - K'.
    """
    if inputs.T_p < 1:
        raise ValueError("population bound needs T_p >= 1")
    t1 = first_level_bound(inputs)
    log_inv_delta = t1.terms["log_inv_delta"]
    kl = inputs.kl_posterior_prior if inputs.kl_posterior_prior is not None else 0.0
    general = float(np.sqrt(1.0 / (inputs.K * inputs.T_p)) * (kl + log_inv_delta) + t1.detailed)

    if not inputs.K_prime:
        raise ValueError("detailed form needs K_prime")
    cap = t1.terms["capacity"]
    kl_proxy_topic = inputs.sigma**2 * cap / inputs.K_prime
    detailed = float(
        np.sqrt(1.0 / ((inputs.K - inputs.K_prime) * inputs.T_p)) * (kl_proxy_topic + log_inv_delta)
        + t1.detailed
    )
    terms = dict(t1.terms)
    terms["kl_proxy_topic"] = kl_proxy_topic
    terms["first_level_component"] = t1.detailed
    return BoundResult(general=general, detailed=detailed, terms=terms, clamped=t1.clamped)

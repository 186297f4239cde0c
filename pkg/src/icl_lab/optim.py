"""Training dynamics: noisy gradient steps and trajectory recording.

The single update rule is gradient descent plus isotropic Gaussian noise of
per-coordinate variance eta/beta; beta = inf turns the noise off exactly, so
one code path serves both plain SGD and its noisy counterpart.  Batch
sampling and noise injection draw from independent derived streams, so
changing one never perturbs the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import PriorSplit, child_seed, view_indices
from .model import ArchSpec, SequenceModel, init_model, nll_and_grad_batch


@dataclass(frozen=True)
class Schedule:
    """Step sizes: constant eta, with an optional linear warmup prefix."""

    eta: float
    warmup: int = 0

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")

    def rate(self, step: int) -> float:
        if self.warmup and step < self.warmup:
            return self.eta * (step + 1) / self.warmup
        return self.eta


@dataclass
class Trajectory:
    """Per-step losses and gradient norms plus thinned parameter snapshots."""

    T_prime: int
    beta: float
    schedule: Schedule
    seed: int
    step_losses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    grad_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    checkpoints: list[tuple[int, np.ndarray]] = field(default_factory=list)
    tag: str = ""

    def checkpoint_at(self, step: int) -> np.ndarray:
        for s, params in self.checkpoints:
            if s == step:
                return params
        raise KeyError(f"no checkpoint stored at step {step}")

    @property
    def checkpoint_steps(self) -> list[int]:
        return [s for s, _ in self.checkpoints]


def derive_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (batch, noise) generators derived from one seed."""
    return np.random.default_rng(child_seed(seed, 0xBA7C)), np.random.default_rng(child_seed(seed, 0x9015E))


def gld_step(theta: np.ndarray, grad: np.ndarray, eta: float, beta: float, seed=None) -> np.ndarray:
    """theta - eta * grad + sqrt(eta / beta) * standard normal noise.

    beta = inf gives the pure gradient step without consuming randomness;
    eta = 0 returns theta unchanged (the noise scale is also zero).
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    if not (beta > 0):
        raise ValueError("beta must be positive (np.inf allowed)")
    theta = np.asarray(theta, dtype=np.float64)
    new = theta - eta * np.asarray(grad, dtype=np.float64)
    if np.isinf(beta) or eta == 0.0:
        return new
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return new + np.sqrt(eta / beta) * rng.standard_normal(theta.shape)


def _gather_batch(corpus, view: list[tuple[int, int]], picks: np.ndarray) -> np.ndarray:
    data = corpus.tokens if hasattr(corpus, "tokens") else corpus.observations
    ks = np.array([view[i][0] for i in picks])
    ns = np.array([view[i][1] for i in picks])
    return data[ks, ns]


def train(
    model: SequenceModel,
    corpus,
    view: list[tuple[int, int]] | None = None,
    steps: int = 1000,
    batch_size: int = 8,
    schedule: Schedule | None = None,
    beta: float = np.inf,
    seed: int = 0,
    n_checkpoints: int = 100,
    tag: str = "",
) -> tuple[SequenceModel, Trajectory]:
    """Run `steps` noisy-gradient updates on minibatch-averaged loss.

    view selects (k, n) pairs of the corpus (defaults to all of it).
    Snapshots are thinned to roughly n_checkpoints plus the initial and
    final parameters; the final parameters are always stored exactly.
    """
    if view is None:
        view = corpus.all_indices()
    if not view:
        raise ValueError("corpus view must be nonempty")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    schedule = schedule or Schedule(eta=0.1)
    batch_rng, noise_rng = derive_streams(seed)
    every = max(1, int(np.ceil(steps / n_checkpoints))) if steps else 1
    theta = model.params.copy()
    losses = np.zeros(steps)
    norms = np.zeros(steps)
    checkpoints: list[tuple[int, np.ndarray]] = [(0, theta.copy())]
    batch_size = min(batch_size, len(view))
    for step in range(steps):
        picks = batch_rng.choice(len(view), size=batch_size, replace=False)
        batch = _gather_batch(corpus, view, picks)
        loss, grad = nll_and_grad_batch(model.with_params(theta), batch)
        losses[step] = loss
        norms[step] = float(np.linalg.norm(grad))
        theta = gld_step(theta, grad, schedule.rate(step), beta, seed=noise_rng)
        if (step + 1) % every == 0 and (step + 1) != steps:
            checkpoints.append((step + 1, theta.copy()))
    if steps:
        checkpoints.append((steps, theta.copy()))
    traj = Trajectory(
        T_prime=steps,
        beta=beta,
        schedule=schedule,
        seed=seed,
        step_losses=losses,
        grad_norms=norms,
        checkpoints=checkpoints,
        tag=tag,
    )
    return model.with_params(theta), traj


def train_prior(
    model_arch: ArchSpec,
    split: PriorSplit,
    corpus,
    steps: int,
    batch_size: int = 8,
    schedule: Schedule | None = None,
    beta: float = np.inf,
    seed: int = 0,
    init_std: float = 0.02,
) -> tuple[SequenceModel, Trajectory]:
    """Parallel training run on the held-out prior subset of the corpus."""
    if not split.held_out:
        raise ValueError("prior split has no held-out indices")
    prior_view = view_indices(corpus, split, side="out")
    model = init_model(model_arch, seed=np.random.default_rng(child_seed(seed, 0x1417)), init_std=init_std)
    return train(
        model,
        corpus,
        view=prior_view,
        steps=steps,
        batch_size=batch_size,
        schedule=schedule,
        beta=beta,
        seed=seed,
        tag=f"prior-{split.axis}",
    )


def save_trajectory(traj: Trajectory, path: str) -> None:
    """CSV with one row per step: step, loss, grad_norm."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,loss,grad_norm\n")
        for step in range(traj.T_prime):
            f.write(f"{step},{traj.step_losses[step]:.17g},{traj.grad_norms[step]:.17g}\n")

"""Experiment orchestration: seeded sweeps, canonical experiments, CSV output.

The topic distribution for discrete experiments is a uniform mixture over a
finite family of randomly drawn topics; each run pre-trains on K family
members and is evaluated on prompts drawn from the full family, so runs
with different K, N face identical evaluation material per seed.
Evaluation prompts follow the few-shot construction: independent
demonstration segments from one topic concatenated to the requested
prompt length, the final token being the prediction target.

Every run row is keyed by its grid values plus the seed; sweeps skip keys
already present in the output CSV, so interrupted sweeps resume cleanly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import bounds as bounds_mod
from .corpus import (
    TopicHMM,
    generate_corpus,
    generate_hmm_sequence,
    generate_lds_corpus,
    make_random_transition_corpus,
    sample_topic_lds,
    sample_topics,
    split_prior,
)
from .metrics import (
    LossReport,
    icl_accuracy,
    lds_losses,
    loss_ladder_rungs,
    population_loss_mc,
    select_best_checkpoint,
)
from .model import ArchSpec, init_from_prior, init_model
from .optim import Schedule, train, train_prior


class SweepError(RuntimeError):
    def __init__(self, n_errors: int, path: str):
        super().__init__(f"{n_errors} grid points failed; error rows recorded in {path}")
        self.n_errors = n_errors


@dataclass
class ExperimentConfig:
    generator: str = "hmm"
    # data
    V: int = 50
    h: int = 5
    family_size: int = 16
    concentration: float = 1.0
    K_grid: tuple[int, ...] = (2, 5, 10)
    N_grid: tuple[int, ...] = (20, 100)
    T_grid: tuple[int, ...] = (256,)
    Tp_grid: tuple[int, ...] = (16, 48, 128)
    # architecture
    arch_kind: str = "tiny_attention"
    d_model: int = 16
    n_heads: int = 1
    n_layers: int = 2
    d_ff: int = 32
    init_std: float = 0.02
    # optimizer
    eta: float = 0.5
    warmup: int = 0
    beta: float = float("inf")
    T_prime: int = 5000
    batch_size: int = 4
    # evaluation
    eval_prompts: int = 768
    demo_len: int = 16
    mc_topics: int = 12
    mc_prompts: int = 16
    # prior split / bounds
    prior_axis: str = "topic"
    N_prime: int = 0  # 0 -> N // 2
    K_prime: int = 0  # 0 -> max(1, K // 2)
    bound_beta: float = 32.0
    delta: float = 0.1
    # failure-case experiment: the tabular model isolates the data-structure
    # contrast (the tied-readout attention argmax keeps an epsilon-level
    # repeat-token ranking that uniform data cannot train away)
    failure_arch_kind: str = "tabular_bigram"
    failure_T_prime: int = 2500
    # prior-init experiment
    small_n_layers: int = 1
    prior_steps: int = 1000
    loss_threshold: float = 1.7
    prior_T_prime: int = 2500
    # lds experiment
    lds_dim: int = 2
    lds_obs_dim: int = 2
    lds_noise_std: float = 0.0
    lds_spectral_radius: float = 0.9
    lds_eta: float = 0.1
    lds_T: int = 24
    lds_T_prime: int = 20000
    # run control
    seeds: tuple[int, ...] = (0, 1, 2)
    workers: int = 1
    out_dir: str = "runs"

    def replace_grids_for(self, **kw) -> "ExperimentConfig":
        cfg = ExperimentConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        for k, v in kw.items():
            setattr(cfg, k, v)
        return cfg


_TUPLE_FIELDS = {"K_grid", "N_grid", "T_grid", "Tp_grid", "seeds"}


def parse_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Flat key=value text config; comma lists for grids; unknown keys are
    rejected so typos fail loudly."""
    cfg = ExperimentConfig()
    known = {f.name: f for f in fields(ExperimentConfig)}
    items: list[tuple[str, str]] = []
    if path:
        with open(path, encoding="utf-8") as f:
            for line_no, raw in enumerate(f, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{line_no}: expected key=value, got {raw!r}")
                key, _, value = line.partition("=")
                items.append((key.strip(), value.strip()))
    for key, value in items + list((overrides or {}).items()):
        if key not in known:
            raise ValueError(f"unknown config key {key!r}; known keys: {sorted(known)}")
        current = getattr(cfg, key)
        if key in _TUPLE_FIELDS:
            parts = value.split(",") if isinstance(value, str) else value
            setattr(cfg, key, tuple(int(p) for p in parts))
        elif isinstance(current, bool):
            setattr(cfg, key, str(value).lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(cfg, key, int(value))
        elif isinstance(current, float):
            setattr(cfg, key, float(value))
        else:
            setattr(cfg, key, str(value))
    for name in ("K_grid", "N_grid", "T_grid", "Tp_grid"):
        if any(v <= 0 for v in getattr(cfg, name)):
            raise ValueError(f"{name} values must be positive")
    if not cfg.seeds:
        raise ValueError("seeds must be nonempty")
    return cfg


def _limit_blas_threads() -> None:
    """Small-matrix workloads run fastest with BLAS pinned to one thread;
    the fused kernels keep their own threads."""
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1, "blas")
    except Exception:
        os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")


def make_arch(cfg: ExperimentConfig, T: int) -> ArchSpec:
    context = max(max(cfg.Tp_grid), T)
    if cfg.arch_kind == "tabular_bigram":
        return ArchSpec(kind="tabular_bigram", vocab_size=cfg.V)
    return ArchSpec(
        kind="tiny_attention",
        vocab_size=cfg.V,
        context_len=context,
        d_model=cfg.d_model,
        n_heads=cfg.n_heads,
        n_layers=cfg.n_layers,
        d_ff=cfg.d_ff,
    )


def topic_family(cfg: ExperimentConfig, seed: int) -> list[TopicHMM]:
    """The support of the topic distribution for one seed."""
    return sample_topics(cfg.family_size, cfg.h, cfg.V, cfg.concentration, seed=[seed, 0xFA0])


def training_topics(cfg: ExperimentConfig, family: list[TopicHMM], K: int, seed: int) -> list[TopicHMM]:
    rng = np.random.default_rng([seed, 0x5E1])
    picks = rng.choice(len(family), size=K, replace=False)
    return [family[i] for i in picks]


def build_demo_prompt(topic: TopicHMM, T_p: int, demo_len: int, rng) -> np.ndarray:
    """Concatenated independent demonstration segments, total length T_p."""
    segs = []
    n_full, rem = divmod(T_p, demo_len)
    for _ in range(n_full):
        segs.append(generate_hmm_sequence(topic, demo_len, seed=rng))
    if rem:
        segs.append(generate_hmm_sequence(topic, rem, seed=rng))
    return np.concatenate(segs)


def family_eval_prompts(
    cfg: ExperimentConfig, family: list[TopicHMM], T_p: int, seed: int
) -> tuple[list[np.ndarray], np.ndarray]:
    """Evaluation prompts drawn from the family mixture.

    The per-prompt stream does not depend on T_p, so different prompt
    lengths reuse the same topics and are directly comparable.
    """
    prompts, targets = [], []
    for i in range(cfg.eval_prompts):
        rng = np.random.default_rng([seed, 0xE7A1, i])
        topic = family[rng.integers(len(family))]
        pr = build_demo_prompt(topic, T_p, cfg.demo_len, rng)
        prompts.append(pr[:-1])
        targets.append(int(pr[-1]))
    return prompts, np.asarray(targets)


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

SWEEP_KEY = ("generator", "K", "N", "T", "T_p", "seed")
_REPORT_FIELDS = [f for f in LossReport.CSV_FIELDS if f != "icl_accuracy"]
SWEEP_COLUMNS = [
    *SWEEP_KEY,
    "V",
    "h",
    "d_model",
    "n_heads",
    "n_layers",
    "eta",
    "beta",
    "T_prime",
    "batch_size",
    "icl_accuracy",
    "chance",
    *_REPORT_FIELDS,
    "S_hat",
    "L_hat",
    "sigma_hat",
    "bound1_general",
    "bound1_detailed",
    "bound2_general",
    "bound2_detailed",
    "bound_clamped",
    "loss_semantics",
    "overall_mse",
    "icl_last_mse",
    "wall_time_s",
    "status",
    "error",
]


def _existing_keys(path: str) -> set[tuple]:
    if not os.path.exists(path):
        return set()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != SWEEP_COLUMNS:
            raise ValueError(
                f"{path} has a different column set than this version writes; "
                "move or delete it before resuming")
        return {tuple(row[k] for k in SWEEP_KEY) for row in reader}


def _append_rows(path: str, rows: list[dict]) -> None:
    new_file = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS, restval="")
        if new_file:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)  # shortest representation that round-trips exactly
    return str(value)


def write_manifest(out_dir: str, cfg: ExperimentConfig, artifacts: list[str]) -> str:
    hashes = {}
    for name in artifacts:
        p = os.path.join(out_dir, name)
        if os.path.exists(p):
            with open(p, "rb") as f:
                hashes[name] = hashlib.sha256(f.read()).hexdigest()
    manifest = {
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "artifacts": hashes,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, default=list)
    return path


# ---------------------------------------------------------------------------
# single grid-point execution
# ---------------------------------------------------------------------------


def _train_seed(seed: int, K: int, N: int, T: int) -> int:
    # derived from grid values so resumed sweeps reproduce rows bitwise
    return int(np.random.default_rng([seed, K, N, T, 0x7AE1]).integers(0, 2**31))


def run_grid_point(cfg: ExperimentConfig, K: int, N: int, T: int, seed: int) -> list[dict]:
    """Train one model and emit one row per prompt length."""
    t_start = time.time()
    family = topic_family(cfg, seed)
    topics = training_topics(cfg, family, K, seed)
    corpus = generate_corpus(topics, N, T, seed=_train_seed(seed, K, N, T))
    arch = make_arch(cfg, T)
    run_seed = _train_seed(seed, K, N, T) ^ 0x55AA55
    model0 = init_model(arch, seed=[run_seed, 1], init_std=cfg.init_std)
    model, traj = train(
        model0,
        corpus,
        steps=cfg.T_prime,
        batch_size=cfg.batch_size,
        schedule=Schedule(eta=cfg.eta, warmup=cfg.warmup),
        beta=cfg.beta,
        seed=run_seed,
    )

    thin = traj.checkpoints[:: max(1, len(traj.checkpoints) // 10)]
    if thin[-1][0] != traj.checkpoints[-1][0]:
        thin = thin + [traj.checkpoints[-1]]
    thin_traj = replace(traj, checkpoints=thin)
    best, _ = select_best_checkpoint(model, thin_traj, corpus)
    s_hat = bounds_mod.estimate_S(model, corpus, topics)
    l_hat = bounds_mod.estimate_L(thin_traj, corpus, model, max_checkpoints=6, max_sequences=24, seed=seed)
    sigma_hat = bounds_mod.estimate_sigma(
        thin_traj, topics, model, M=6, T=T, seed=seed, max_checkpoints=4
    )

    def topic_sampler(rng):
        return family[rng.integers(len(family))]

    rungs = loss_ladder_rungs(model, corpus, topics, M=cfg.mc_prompts, seed=seed)
    rows = []
    for T_p in cfg.Tp_grid:
        report = population_loss_mc(
            model,
            topic_sampler,
            M_topics=cfg.mc_topics,
            M_prompts=cfg.mc_prompts,
            T_p=T_p,
            seed=seed,
            corpus=corpus,
            topics=topics,
            best=best,
            rungs=rungs,
        )
        prompts, targets = family_eval_prompts(cfg, family, T_p, seed)
        acc = icl_accuracy(model, prompts, targets)
        n_prime = cfg.N_prime or max(1, N // 2)
        k_prime = cfg.K_prime or max(1, K // 2)
        inputs = bounds_mod.BoundInputs(
            K=K,
            N=N,
            T=T,
            T_p=T_p,
            K_prime=min(k_prime, K - 1) if K > 1 else 0,
            N_prime=min(n_prime, N - 1),
            T_prime=cfg.T_prime,
            beta=cfg.bound_beta,
            S=s_hat,
            L=l_hat,
            sigma=sigma_hat,
            delta=cfg.delta,
            eps_opt=report.eps_opt,
        )
        b1 = bounds_mod.first_level_bound(inputs)
        if inputs.K_prime:
            b2 = bounds_mod.population_bound(inputs)
            b2_general, b2_detailed = b2.general, b2.detailed
        else:
            b2_general = b2_detailed = float("nan")
        clamped = b1.clamped
        row = {
            "generator": cfg.generator,
            "K": K,
            "N": N,
            "T": T,
            "T_p": T_p,
            "seed": seed,
            "V": cfg.V,
            "h": cfg.h,
            "d_model": arch.d_model,
            "n_heads": arch.n_heads,
            "n_layers": arch.n_layers,
            "eta": _fmt(cfg.eta),
            "beta": _fmt(cfg.beta),
            "T_prime": cfg.T_prime,
            "batch_size": cfg.batch_size,
            "icl_accuracy": _fmt(acc),
            "chance": _fmt(1.0 / cfg.V),
            "S_hat": _fmt(s_hat),
            "L_hat": _fmt(l_hat),
            "sigma_hat": _fmt(sigma_hat),
            "bound1_general": _fmt(b1.general),
            "bound1_detailed": _fmt(b1.detailed),
            "bound2_general": _fmt(b2_general),
            "bound2_detailed": _fmt(b2_detailed),
            "bound_clamped": int(clamped),
            "loss_semantics": "log_ratio",
            "overall_mse": "",
            "icl_last_mse": "",
            "wall_time_s": _fmt(time.time() - t_start),
            "status": "ok",
            "error": "",
        }
        for name, value in zip(LossReport.CSV_FIELDS, report.to_csv_values()):
            if name == "icl_accuracy":
                continue
            row[name] = _fmt(value)
        rows.append(row)
    return rows


def _error_rows(cfg: ExperimentConfig, K: int, N: int, T: int, seed: int, err: Exception) -> list[dict]:
    return [
        {
            "generator": cfg.generator,
            "K": K,
            "N": N,
            "T": T,
            "T_p": T_p,
            "seed": seed,
            "status": "error",
            "error": f"{type(err).__name__}: {err}",
        }
        for T_p in cfg.Tp_grid
    ]


def _grid_worker(args):
    cfg, K, N, T, seed = args
    _limit_blas_threads()
    try:
        return run_grid_point(cfg, K, N, T, seed), None
    except Exception as err:  # recorded as error rows, sweep continues
        return _error_rows(cfg, K, N, T, seed, err), err


def run_sweep(cfg: ExperimentConfig, out_dir: str | None = None) -> str:
    """Grid x seeds sweep; returns the metrics.csv path."""
    _limit_blas_threads()
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "metrics.csv")
    done = _existing_keys(path)
    jobs = []
    for T in cfg.T_grid:
        for K in cfg.K_grid:
            for N in cfg.N_grid:
                for seed in cfg.seeds:
                    key_tp = [(cfg.generator, str(K), str(N), str(T), str(tp), str(seed)) for tp in cfg.Tp_grid]
                    if all(k in done for k in key_tp):
                        continue
                    jobs.append((cfg, K, N, T, seed))
    n_errors = 0
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for rows, err in pool.map(_grid_worker, jobs):
                _append_rows(path, rows)
                n_errors += err is not None
    else:
        for job in jobs:
            rows, err = _grid_worker(job)
            _append_rows(path, rows)
            n_errors += err is not None
    write_manifest(out_dir, cfg, ["metrics.csv"])
    if n_errors:
        raise SweepError(n_errors, path)
    return path


# ---------------------------------------------------------------------------
# canonical experiments
# ---------------------------------------------------------------------------


def run_failure_case(cfg: ExperimentConfig, out_dir: str | None = None) -> str:
    """Random-transition pre-training against a structured control."""
    _limit_blas_threads()
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "failure.csv")
    K = max(cfg.K_grid)
    N = max(cfg.N_grid)
    T = cfg.T_grid[0]
    T_p = cfg.Tp_grid[len(cfg.Tp_grid) // 2]
    arch_cfg = cfg.replace_grids_for(arch_kind=cfg.failure_arch_kind)
    columns = [
        "arm", "seed", "K", "N", "T", "T_p", "V", "icl_accuracy", "chance",
        "binomial_stderr", "n_prompts", "wall_time_s",
    ]
    rows = []
    for seed in cfg.seeds:
        family = topic_family(cfg, seed)
        arch = make_arch(arch_cfg, T)
        prompts_by_tp, targets_by_tp = family_eval_prompts(cfg, family, T_p, seed)
        for arm in ("random_transition", "structured_control"):
            t0 = time.time()
            if arm == "random_transition":
                corpus = make_random_transition_corpus(cfg.h, cfg.V, K * N, T, seed=_train_seed(seed, 0, K * N, T))
            else:
                topics = training_topics(cfg, family, K, seed)
                corpus = generate_corpus(topics, N, T, seed=_train_seed(seed, K, N, T))
            run_seed = _train_seed(seed, K, N, T) ^ (0x3D if arm == "random_transition" else 0x55AA55)
            model0 = init_model(arch, seed=[run_seed, 1], init_std=cfg.init_std)
            model, _ = train(
                model0,
                corpus,
                steps=cfg.failure_T_prime,
                batch_size=cfg.batch_size,
                schedule=Schedule(eta=cfg.eta, warmup=cfg.warmup),
                beta=cfg.beta,
                seed=run_seed,
            )
            acc = icl_accuracy(model, prompts_by_tp, targets_by_tp)
            chance = 1.0 / cfg.V
            se = float(np.sqrt(chance * (1 - chance) / len(targets_by_tp)))
            rows.append(
                dict(
                    arm=arm, seed=seed, K=K, N=N, T=T, T_p=T_p, V=cfg.V,
                    icl_accuracy=_fmt(acc), chance=_fmt(chance), binomial_stderr=_fmt(se),
                    n_prompts=len(targets_by_tp), wall_time_s=_fmt(time.time() - t0),
                )
            )
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    write_manifest(out_dir, cfg, ["failure.csv"])
    return path


def run_prior_init(cfg: ExperimentConfig, out_dir: str | None = None) -> str:
    """Warm-start training from a small model trained on held-out topics,
    against a random-initialization baseline with matched seeds."""
    _limit_blas_threads()
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "prior_init.csv")
    K = max(cfg.K_grid)
    N = max(cfg.N_grid)
    T = cfg.T_grid[0]
    k_prime = cfg.K_prime or max(1, K // 2)
    n_prime = cfg.N_prime or max(1, N // 2)
    holdout = k_prime if cfg.prior_axis == "topic" else n_prime
    columns = [
        "arm", "seed", "K", "K_prime", "N", "T", "prior_axis", "steps_to_threshold",
        "censored", "threshold", "final_loss", "small_steps", "wall_time_s",
    ]
    rows = []
    curves: list[dict] = []
    for seed in cfg.seeds:
        family = topic_family(cfg, seed)
        topics = training_topics(cfg, family, K, seed)
        corpus = generate_corpus(topics, N, T, seed=_train_seed(seed, K, N, T))
        split = split_prior(corpus, cfg.prior_axis, holdout, seed=[seed, 0x791])
        large_arch = make_arch(cfg, T)
        small_arch = ArchSpec(
            kind=large_arch.kind,
            vocab_size=large_arch.vocab_size,
            context_len=large_arch.context_len,
            d_model=large_arch.d_model,
            n_heads=large_arch.n_heads,
            n_layers=cfg.small_n_layers,
            d_ff=large_arch.d_ff,
        )
        run_seed = _train_seed(seed, K, N, T)
        small, _ = train_prior(
            small_arch,
            split,
            corpus,
            steps=cfg.prior_steps,
            batch_size=cfg.batch_size,
            schedule=Schedule(eta=cfg.eta, warmup=cfg.warmup),
            beta=cfg.beta,
            seed=run_seed ^ 0x11,
        )
        for arm in ("prior_init", "random_init"):
            t0 = time.time()
            if arm == "prior_init":
                model0 = init_from_prior(small, large_arch, seed=[run_seed, 2], init_std=cfg.init_std)
            else:
                model0 = init_model(large_arch, seed=[run_seed, 3], init_std=cfg.init_std)
            steps_budget = cfg.prior_T_prime
            model, traj = train(
                model0,
                corpus,
                steps=steps_budget,
                batch_size=cfg.batch_size,
                schedule=Schedule(eta=cfg.eta, warmup=cfg.warmup),
                beta=cfg.beta,
                seed=run_seed ^ 0x22,  # same batch/noise streams for both arms
            )
            window = max(1, min(50, steps_budget // 20))
            smooth = np.convolve(traj.step_losses, np.ones(window) / window, mode="valid")
            below = np.nonzero(smooth <= cfg.loss_threshold)[0]
            censored = below.size == 0
            steps_to = steps_budget if censored else int(below[0] + window)
            final_loss = float(traj.step_losses[-min(100, steps_budget):].mean())
            rows.append(
                dict(
                    arm=arm, seed=seed, K=K, K_prime=k_prime, N=N, T=T,
                    prior_axis=cfg.prior_axis,
                    steps_to_threshold=steps_to, censored=int(censored),
                    threshold=_fmt(cfg.loss_threshold), final_loss=_fmt(final_loss),
                    small_steps=cfg.prior_steps, wall_time_s=_fmt(time.time() - t0),
                )
            )
            for step in range(0, steps_budget, max(1, steps_budget // 200)):
                curves.append(
                    dict(arm=arm, seed=seed, step=step, loss=_fmt(float(traj.step_losses[step])))
                )
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    curves_path = os.path.join(out_dir, "prior_init_curves.csv")
    with open(curves_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["arm", "seed", "step", "loss"])
        writer.writeheader()
        writer.writerows(curves)
    write_manifest(out_dir, cfg, ["prior_init.csv", "prior_init_curves.csv"])
    return path


def run_lds(cfg: ExperimentConfig, out_dir: str | None = None) -> str:
    """Linear-dynamical-system pipeline: overall vs last-position loss.

    Rows use the sweep column schema with loss_semantics = "mse"; the
    token-model metric columns stay empty.
    """
    _limit_blas_threads()
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "lds.csv")
    rows = []
    arch = ArchSpec(kind="linear_readout_lds", obs_dim=cfg.lds_obs_dim)
    for seed in cfg.seeds:
        for K in cfg.K_grid:
            for N in cfg.N_grid:
                t0 = time.time()
                topics = [
                    sample_topic_lds(
                        cfg.lds_dim,
                        cfg.lds_obs_dim,
                        seed=[seed, 0x1D5, k],
                        spectral_radius=cfg.lds_spectral_radius,
                        noise_std=cfg.lds_noise_std,
                        topic_id=k,
                    )
                    for k in range(K)
                ]
                corpus = generate_lds_corpus(topics, N, cfg.lds_T, seed=_train_seed(seed, K, N, cfg.lds_T))
                model0 = init_model(arch, seed=[seed, K, N, 4], init_std=cfg.init_std)
                model, _ = train(
                    model0,
                    corpus,
                    steps=cfg.lds_T_prime,
                    batch_size=cfg.batch_size,
                    schedule=Schedule(eta=cfg.lds_eta),
                    beta=cfg.beta,
                    seed=_train_seed(seed, K, N, cfg.lds_T) ^ 0x44,
                )
                held_out = generate_lds_corpus(
                    topics, max(4, N // 4), cfg.lds_T, seed=_train_seed(seed, K, N, cfg.lds_T) ^ 0x99
                )
                overall, icl_last = lds_losses(model, held_out.observations)
                rows.append(
                    {
                        "generator": "lds",
                        "K": K,
                        "N": N,
                        "T": cfg.lds_T,
                        "T_p": cfg.lds_T,
                        "seed": seed,
                        "eta": _fmt(cfg.lds_eta),
                        "beta": _fmt(cfg.beta),
                        "T_prime": cfg.lds_T_prime,
                        "batch_size": cfg.batch_size,
                        "loss_semantics": "mse",
                        "overall_mse": _fmt(overall),
                        "icl_last_mse": _fmt(icl_last),
                        "wall_time_s": _fmt(time.time() - t0),
                        "status": "ok",
                        "error": "",
                    }
                )
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS, restval="")
        writer.writeheader()
        writer.writerows(rows)
    write_manifest(out_dir, cfg, ["lds.csv"])
    return path

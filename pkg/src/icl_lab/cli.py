"""Command-line entry points.

    icl-lab gen        --config cfg --out DIR     write corpus.jsonl + topics
    icl-lab train      --config cfg --out DIR     train one model, save
                                                  checkpoint + trajectory CSV
    icl-lab eval       --config cfg --model CKPT  loss report for a checkpoint
    icl-lab bound      --inputs FILE              evaluate both bound formulas
    icl-lab sweep      --config cfg --out DIR     grid x seeds metrics.csv
    icl-lab failure    --config cfg --out DIR     random-transition experiment
    icl-lab prior-init --config cfg --out DIR     warm-start experiment
    icl-lab lds        --config cfg --out DIR     linear-dynamics experiment

Exit code is 0 on success, otherwise the number of failed runs (capped).
"""

from __future__ import annotations

import argparse
import os
import sys


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seeds", default=None, help="comma list, overrides config")


def _load_cfg(args):
    from .harness import parse_config

    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seeds:
        overrides["seeds"] = args.seeds
    return parse_config(args.config, overrides)


def _cmd_gen(args) -> int:
    from .corpus import generate_corpus, save_corpus
    from .harness import topic_family, training_topics, _train_seed

    cfg = _load_cfg(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    seed = cfg.seeds[0]
    family = topic_family(cfg, seed)
    K, N, T = cfg.K_grid[0], cfg.N_grid[0], cfg.T_grid[0]
    topics = training_topics(cfg, family, K, seed)
    corpus = generate_corpus(topics, N, T, seed=_train_seed(seed, K, N, T))
    path = os.path.join(cfg.out_dir, "corpus.jsonl")
    save_corpus(corpus, path, topics=topics)
    print(f"wrote {path} ({corpus.K}x{corpus.N} sequences of length {corpus.T})")
    return 0


def _cmd_train(args) -> int:
    from .corpus import generate_corpus
    from .harness import make_arch, topic_family, training_topics, _train_seed, _limit_blas_threads
    from .model import init_model, save_model
    from .optim import Schedule, save_trajectory, train

    _limit_blas_threads()
    cfg = _load_cfg(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    seed = cfg.seeds[0]
    K, N, T = cfg.K_grid[0], cfg.N_grid[0], cfg.T_grid[0]
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
    run_id = f"{cfg.generator}_K{K}_N{N}_T{T}_s{seed}"
    ckpt = os.path.join(cfg.out_dir, f"model_{run_id}.ckpt")
    save_model(model, ckpt)
    traj_path = os.path.join(cfg.out_dir, f"trajectory_{run_id}.csv")
    save_trajectory(traj, traj_path)
    ckpt_dir = os.path.join(cfg.out_dir, f"checkpoints_{run_id}")
    os.makedirs(ckpt_dir, exist_ok=True)
    stride = max(1, len(traj.checkpoints) // 10)
    kept = traj.checkpoints[::stride]
    if kept[-1][0] != traj.checkpoints[-1][0]:
        kept.append(traj.checkpoints[-1])
    for step, params in kept:
        save_model(model.with_params(params.copy()), os.path.join(ckpt_dir, f"step_{step:06d}.ckpt"))
    print(f"final loss {traj.step_losses[-min(100, len(traj.step_losses)):].mean():.4f}")
    print(f"wrote {ckpt} and {traj_path}")
    return 0


def _cmd_eval(args) -> int:
    from .corpus import generate_corpus
    from .harness import topic_family, training_topics, _train_seed, _limit_blas_threads
    from .metrics import icl_accuracy, population_loss_mc
    from .harness import family_eval_prompts
    from .model import load_model

    _limit_blas_threads()
    cfg = _load_cfg(args)
    model = load_model(args.model)
    seed = cfg.seeds[0]
    K, N, T = cfg.K_grid[0], cfg.N_grid[0], cfg.T_grid[0]
    family = topic_family(cfg, seed)
    topics = training_topics(cfg, family, K, seed)
    corpus = generate_corpus(topics, N, T, seed=_train_seed(seed, K, N, T))
    T_p = cfg.Tp_grid[0]
    report = population_loss_mc(
        model,
        lambda rng: family[rng.integers(len(family))],
        M_topics=cfg.mc_topics,
        M_prompts=cfg.mc_prompts,
        T_p=T_p,
        seed=seed,
        corpus=corpus,
        topics=topics,
    )
    prompts, targets = family_eval_prompts(cfg, family, T_p, seed)
    acc = icl_accuracy(model, prompts, targets)
    print(",".join(report.CSV_FIELDS))
    values = report.to_csv_values()
    values[report.CSV_FIELDS.index("icl_accuracy")] = acc
    print(",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in values))
    return 0


def _cmd_bound(args) -> int:
    from .bounds import BoundInputs, first_level_bound, population_bound

    fields: dict[str, str] = {}
    with open(args.inputs, encoding="utf-8") as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    ints = {"K", "N", "T", "T_p", "K_prime", "N_prime", "T_prime", "N_param"}
    kwargs = {}
    for key, value in fields.items():
        if key == "scaling":
            nc, alpha = value.split(",")
            kwargs["scaling"] = (float(nc), float(alpha))
        elif key in ints:
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    if "S" not in kwargs and "scaling" in kwargs:
        from .bounds import estimate_S

        kwargs["S"] = estimate_S(scaling=kwargs["scaling"], n_param=kwargs.get("N_param", 1))
    inputs = BoundInputs(**kwargs)
    b1 = first_level_bound(inputs)
    b2 = population_bound(inputs) if inputs.K_prime and inputs.T_p else None
    names = ["first_level_general", "first_level_detailed"]
    values = [b1.general, b1.detailed]
    if b2 is not None:
        names += ["population_general", "population_detailed"]
        values += [b2.general, b2.detailed]
    terms = b2.terms if b2 is not None else b1.terms
    for term, val in sorted(terms.items()):
        names.append(term)
        values.append(val)
    names.append("clamped")
    values.append(int(b1.clamped))
    print(",".join(names))
    print(",".join(f"{v:.12g}" for v in values))
    return 0


def _run_and_report(runner, cfg) -> int:
    from .harness import SweepError

    try:
        path = runner(cfg)
        print(f"wrote {path}")
        return 0
    except SweepError as err:
        print(str(err), file=sys.stderr)
        return min(err.n_errors, 125)
    except RuntimeError as err:
        print(str(err), file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="icl-lab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen", "train", "sweep", "failure", "prior-init", "lds"):
        p = sub.add_parser(name)
        _add_common(p)
    p_eval = sub.add_parser("eval")
    _add_common(p_eval)
    p_eval.add_argument("--model", required=True, help="checkpoint path")
    p_bound = sub.add_parser("bound")
    p_bound.add_argument("--inputs", required=True, help="key=value file of bound inputs")
    args = parser.parse_args(argv)

    if args.command == "gen":
        return _cmd_gen(args)
    if args.command == "train":
        return _cmd_train(args)
    if args.command == "eval":
        return _cmd_eval(args)
    if args.command == "bound":
        return _cmd_bound(args)

    from . import harness

    cfg = _load_cfg(args)
    runner = {
        "sweep": harness.run_sweep,
        "failure": harness.run_failure_case,
        "prior-init": harness.run_prior_init,
        "lds": harness.run_lds,
    }[args.command]
    return _run_and_report(runner, cfg)


if __name__ == "__main__":
    sys.exit(main())

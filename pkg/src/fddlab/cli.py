"""Command line front end.

Subcommands:
  gen-data   draw synthetic channel datasets for the three splits
  train      train a feedback autoencoder on the configured datasets
  fit-gmm    fit the structured mixture prior on the training split
  evaluate   score the configured schemes at one operating point
  sweep      score the configured schemes across one axis

Every subcommand takes --config PATH plus optional --seed, --out DIR and
--workers N overrides. Reruns with the same config and seed reproduce all
CSV and binary outputs bit for bit; log files additionally carry timings.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

from . import channels, harness
from .baselines import gmm_fit, save_prior
from .config import ConfigError, parse_config, format_config
from .pilots import build_pilot_matrix, build_q_transform
from .vqvae import build_model, save_model, train


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _load_split(path: str, split: str, geometry):
    if not path:
        raise ConfigError(f"a {split} dataset path is required; "
                          f"set [data] {split}")
    ds = channels.load_dataset(path, split=split)
    if ds.geometry != geometry:
        raise ConfigError(f"dataset {path} was generated for a different "
                          f"array geometry")
    return ds


def _cmd_gen_data(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(args)
    base_seed = args.seed if args.seed is not None \
        else cfg.synthetic.cluster.seed
    counts = {"train": cfg.synthetic.train,
              "validation": cfg.synthetic.validation,
              "evaluation": cfg.synthetic.evaluation}
    lines = [f"geometry: {cfg.geometry.n_v} x {cfg.geometry.n_h}",
             f"base seed: {base_seed}"]
    for offset, split in enumerate(channels.SPLITS):
        start = time.perf_counter()
        # distinct per-split seeds keep the splits disjoint
        cluster = replace(cfg.synthetic.cluster, seed=base_seed + offset)
        ds = channels.generate_channels(cluster, cfg.geometry,
                                        counts[split], split=split)
        ds = channels.normalize_dataset(ds)
        path = os.path.join(out, f"{split}.fdch")
        channels.save_dataset(path, ds)
        lines.append(f"{split}: {counts[split]} samples, seed "
                     f"{base_seed + offset}, wrote {path} "
                     f"({time.perf_counter() - start:.2f}s)")
        print(lines[-1])
    _write(os.path.join(out, "gen-data.log"),
           "\n".join(lines) + "\n\n" + format_config(cfg))
    return 0


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(args)
    train_ds = _load_split(cfg.data.train, "train", cfg.geometry)
    val_ds = _load_split(cfg.data.validation, "validation", cfg.geometry)
    tcfg = cfg.training if args.seed is None \
        else replace(cfg.training, seed=args.seed)
    pilots = build_pilot_matrix(cfg.geometry, cfg.pilots,
                                rho=cfg.precoder.rho)
    q = build_q_transform(cfg.geometry)
    model = build_model(cfg.geometry, cfg.train_variant,
                        latent_dim=cfg.feedback.latent_dim,
                        codebook_size=cfg.feedback.codebook_size,
                        seed=tcfg.seed, jitter=tcfg.jitter)
    start = time.perf_counter()
    model, history = train(model, train_ds, val_ds, pilots, q, tcfg)
    wall = time.perf_counter() - start

    name = f"vqvae_{cfg.train_variant.lower()}.fdvq"
    model_path = os.path.join(out, name)
    save_model(model_path, model)
    rows = ["epoch,train_loss,val_loss"]
    for epoch, (tl, vl) in enumerate(zip(history.train_loss,
                                         history.val_loss), start=1):
        rows.append(f"{epoch},{tl!r},{vl!r}")
    _write(os.path.join(out, "history.csv"), "\n".join(rows) + "\n")
    lines = [f"variant: {cfg.train_variant}",
             f"bits per message: {model.feedback_bits}",
             f"epochs: {tcfg.epochs}, final train loss "
             f"{history.train_loss[-1]:.6f}, final val loss "
             f"{history.val_loss[-1]:.6f}",
             f"wrote {model_path} ({wall:.2f}s)"]
    print("\n".join(lines))
    _write(os.path.join(out, "train.log"),
           "\n".join(lines) + "\n\n" + format_config(cfg))
    return 0


def _cmd_fit_gmm(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(args)
    train_ds = _load_split(cfg.data.train, "train", cfg.geometry)
    seed = cfg.gmm.seed if args.seed is None else args.seed
    q = build_q_transform(cfg.geometry)
    start = time.perf_counter()
    prior = gmm_fit(train_ds, cfg.gmm.components, q, seed=seed,
                    max_iters=cfg.gmm.max_iters, jitter=cfg.gmm.jitter)
    wall = time.perf_counter() - start
    prior_path = os.path.join(out, "gmm_prior.npz")
    save_prior(prior, prior_path)
    rows = ["iteration,log_likelihood"]
    for it, ll in enumerate(prior.log_likelihoods):
        rows.append(f"{it},{float(ll)!r}")
    _write(os.path.join(out, "loglik.csv"), "\n".join(rows) + "\n")
    lines = [f"components: {cfg.gmm.components}, seed {seed}",
             f"EM iterations: {len(prior.log_likelihoods)}, final "
             f"log-likelihood {float(prior.log_likelihoods[-1]):.6f}",
             f"wrote {prior_path} ({wall:.2f}s)"]
    print("\n".join(lines))
    _write(os.path.join(out, "fit-gmm.log"),
           "\n".join(lines) + "\n\n" + format_config(cfg))
    return 0


def _run_and_emit(args, runner) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    out = _out_dir(args)
    start = time.perf_counter()
    table, audit = runner(cfg)
    wall = time.perf_counter() - start
    _write(os.path.join(out, "summary.csv"),
           harness.format_summary_csv(table))
    _write(os.path.join(out, "audit.csv"), harness.format_audit_csv(audit))
    echo = format_config(cfg)
    _write(os.path.join(out, "config_echo.ini"), echo)
    rendered = harness.format_table(table)
    _write(os.path.join(out, "run.log"),
           f"total wall time: {wall:.2f}s\n\n{rendered}\n\n{echo}")
    print(rendered)
    return 0


def _cmd_evaluate(args) -> int:
    return _run_and_emit(args, lambda cfg: harness.run_experiment(cfg))


def _cmd_sweep(args) -> int:
    return _run_and_emit(args, lambda cfg: harness.sweep(cfg))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fddlab",
        description="Limited-feedback precoding simulation laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": (_cmd_gen_data, "generate synthetic channel datasets"),
        "train": (_cmd_train, "train a feedback autoencoder"),
        "fit-gmm": (_cmd_fit_gmm, "fit the mixture prior"),
        "evaluate": (_cmd_evaluate, "evaluate schemes at one point"),
        "sweep": (_cmd_sweep, "evaluate schemes across one axis"),
    }
    for name, (func, help_text) in commands.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, metavar="PATH",
                         help="experiment config file")
        cmd.add_argument("--seed", type=int, default=None, metavar="U64",
                         help="override the relevant seed from the config")
        cmd.add_argument("--out", default=None, metavar="DIR",
                         help="output directory (default: current)")
        cmd.add_argument("--workers", type=int, default=None, metavar="N",
                         help="worker processes for evaluation")
        cmd.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, harness.HarnessError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

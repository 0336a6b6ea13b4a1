"""Command-line surface: make-synth, train, sample, eval, inspect.

Every command is deterministic given its config and seed; artifacts carry the
resolved configuration so any run can be reproduced from its outputs alone.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .config import load_config
from .metrics import evaluate
from .protonet import build_model, checkpoint_hash
from .protonet.model import load_model
from .sampler import build_domain_prompt, generate, generate_one_hot, generate_unconditional
from .schedule import make_schedule
from .trainer import train


def _schedule_from_echo(cfg: dict):
    s = cfg["schedule"]
    return make_schedule(s["kind"], s["steps"], s["beta_start"], s["beta_end"])


def _load_samples_csv(path) -> np.ndarray:
    """An eval/sample-set CSV: rows of T floats, or a corpus CSV (rows pooled)."""
    with open(path, newline="") as f:
        first = f.readline()
    if first.startswith("domain,"):
        corpus = dataio.load_csv(path)
        return np.vstack(list(corpus.windows.values()))
    return np.loadtxt(path, delimiter=",", dtype=np.float32, ndmin=2)


# -- commands -----------------------------------------------------------------

def cmd_make_synth(args) -> int:
    kinds = args.domains.split(",")
    specs = []
    for k in kinds:
        k = k.strip()
        if not k:
            continue
        specs.append(dataio.DomainSpec(k, k, args.windows))
    corpus = dataio.synth_corpus(specs, length=args.length, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_corpus_csv(corpus, out / "corpus.csv")
    dataio.save_manifest(corpus, out / "manifest.json",
                         extra={"seed": args.seed, "kinds": kinds})
    print(f"wrote {out / 'corpus.csv'} ({sum(corpus.counts.values())} windows, "
          f"T={args.length}, domains={corpus.domains})")
    return 0


def cmd_train(args) -> int:
    overrides = {
        "model.length": args.length,
        "model.prototypes": args.prototypes,
        "model.no_pam": True if args.no_pam else None,
        "train.steps": args.steps,
        "train.batch": args.batch,
        "train.lr": args.lr,
        "train.warmup": args.warmup,
        "train.p_drop": args.p_drop,
        "train.seed": args.seed,
        "train.no_prompt": True if args.no_prompt else None,
        "schedule.steps": args.schedule_steps,
    }
    cfg = load_config(args.config, overrides)
    corpus = dataio.load_csv(args.corpus, cfg.model.length)
    scaled, stats = dataio.normalize(corpus, cfg.data.normalize)
    model = build_model(cfg.model)
    sched = cfg.schedule.build()
    out = Path(args.out)

    def progress(msg):
        print(msg, flush=True)

    result = train(scaled, model, sched, cfg.train, out_dir=out, norm_stats=stats,
                   schedule_cfg=cfg.echo()["schedule"],
                   progress=progress if not args.quiet else None)
    dataio.save_manifest(scaled, out / "manifest.json", stats,
                         extra={"seed": cfg.train.seed})
    final = result.losses[-1][1] if result.losses else float("nan")
    print(f"wrote {result.checkpoint_path} (final loss {final:.4f})")
    return 0


def _resolve_shots(args, model, config) -> tuple[np.ndarray, str]:
    stats = (dataio.NormStats.from_dict(config["norm_stats"])
             if config.get("norm_stats") else None)
    T = model.cfg.length
    if args.shots:
        corpus = dataio.load_csv(args.shots, T)
        if args.domain:
            if args.domain not in corpus.windows:
                raise ValueError(f"domain {args.domain!r} not in {args.shots}")
            rows = corpus.windows[args.domain]
            label = args.domain
        else:
            if len(corpus.domains) != 1:
                raise ValueError(
                    f"{args.shots} holds domains {corpus.domains}; pick one with --domain"
                )
            label = corpus.domains[0]
            rows = corpus.windows[label]
        if args.shots_k:
            rng = np.random.default_rng(args.seed)
            idx = rng.choice(rows.shape[0], size=min(args.shots_k, rows.shape[0]),
                             replace=False)
            rows = rows[idx]
        if stats is not None and label in stats.params:
            rows = stats.apply(label, rows)
            source = f"shots:{args.shots}:{label} (checkpoint normalization)"
        else:
            mini = dataio.DomainCorpus({label: rows}, T)
            scaled, _ = dataio.normalize(mini)
            rows = scaled.windows[label]
            source = f"shots:{args.shots}:{label} (own min-max normalization)"
        return rows, source
    if args.domain:
        if not args.corpus:
            raise ValueError("--domain needs --corpus to draw shots from")
        corpus = dataio.load_csv(args.corpus, T)
        if args.domain not in corpus.windows:
            raise ValueError(f"domain {args.domain!r} not in {args.corpus}")
        rows = corpus.windows[args.domain]
        rng = np.random.default_rng(args.seed)
        k = args.shots_k or 10
        idx = rng.choice(rows.shape[0], size=min(k, rows.shape[0]), replace=False)
        rows = rows[idx]
        if stats is not None and args.domain in stats.params:
            rows = stats.apply(args.domain, rows)
        else:
            mini = dataio.DomainCorpus({args.domain: rows}, T)
            scaled, _ = dataio.normalize(mini)
            rows = scaled.windows[args.domain]
        return rows, f"corpus:{args.corpus}:{args.domain} K={len(rows)}"
    raise ValueError("provide --shots FILE or --domain NAME --corpus FILE "
                     "(or use --unconditional)")


def cmd_sample(args) -> int:
    model, config = load_model(args.checkpoint)
    sched = _schedule_from_echo(config)
    if args.unconditional:
        samples = generate_unconditional(args.count, model, sched, seed=args.seed,
                                         variant=args.variant)
        source = "unconditional"
    else:
        shots, source = _resolve_shots(args, model, config)
        prompt = build_domain_prompt(shots, model, source=source)
        samples = generate(prompt, args.count, model, sched, seed=args.seed,
                           variant=args.variant)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.denorm and config.get("norm_stats") and args.domain:
        stats = dataio.NormStats.from_dict(config["norm_stats"])
        if args.domain in stats.params:
            samples = stats.invert(args.domain, samples).astype(np.float32)
    dataio.save_samples_csv(samples, out / "samples.csv")
    meta = {
        "seed": args.seed,
        "count": args.count,
        "variant": args.variant,
        "prompt_source": source,
        "checkpoint": str(args.checkpoint),
        "checkpoint_sha256": checkpoint_hash(args.checkpoint),
        "config": config,
    }
    (out / "samples.meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {out / 'samples.csv'} ({args.count} samples, {source})")
    return 0


def cmd_eval(args) -> int:
    real = _load_samples_csv(args.real)
    synth = _load_samples_csv(args.synth)
    bandwidth = args.bandwidth if args.bandwidth == "median" else float(args.bandwidth)
    report = evaluate(real, synth, bins=args.bins, bandwidth=bandwidth)
    print(f"{'metric':8s} {'value':>12s}  config")
    for name, value, conf in report.rows():
        print(f"{name:8s} {value:12.6f}  {conf}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["metric", "value", "config"])
            for row in report.rows():
                writer.writerow(row)
        print(f"wrote {out / 'report.csv'}")
    return 0


def cmd_inspect(args) -> int:
    model, config = load_model(args.checkpoint)
    sched = _schedule_from_echo(config)
    corpus = dataio.load_csv(args.corpus, model.cfg.length)
    stats = (dataio.NormStats.from_dict(config["norm_stats"])
             if config.get("norm_stats") else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_p = model.cfg.n_prototypes
    with open(out / "assignments.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["domain"] + [f"w_{j}" for j in range(n_p)])
        for domain, rows in corpus.windows.items():
            if stats is not None and domain in stats.params:
                rows = stats.apply(domain, rows)
            weights = model.assign_raw(rows).data
            for row in weights:
                writer.writerow([domain] + [f"{v:.6g}" for v in row])
    with open(out / "onehot_samples.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["prototype"] + [f"value_{i}" for i in range(model.cfg.length)])
        for j in range(n_p):
            samples = generate_one_hot(j, args.count, model, sched,
                                       seed=args.seed + j)
            for row in samples:
                writer.writerow([j] + [f"{v:.6g}" for v in row])
    print(f"wrote {out / 'assignments.csv'} and {out / 'onehot_samples.csv'}")
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="protodiff",
        description="Multi-domain time-series diffusion with prototype domain prompts",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ms = sub.add_parser("make-synth", help="generate a synthetic multi-domain corpus")
    ms.add_argument("--domains", default="sine,trend,ar1,square",
                    help="comma-separated kinds from {sine,trend,ar1,square}")
    ms.add_argument("--windows", type=int, default=200, help="windows per domain")
    ms.add_argument("--length", type=int, default=24)
    ms.add_argument("--seed", type=int, default=0)
    ms.add_argument("--out", required=True)
    ms.set_defaults(func=cmd_make_synth)

    tr = sub.add_parser("train", help="train a model on a corpus CSV")
    tr.add_argument("--corpus", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--config", default=None, help="INI config file")
    tr.add_argument("--length", type=int, default=None)
    tr.add_argument("--prototypes", "--num-prototypes", type=int, default=None,
                    dest="prototypes")
    tr.add_argument("--steps", type=int, default=None)
    tr.add_argument("--batch", type=int, default=None)
    tr.add_argument("--lr", type=float, default=None)
    tr.add_argument("--warmup", type=int, default=None)
    tr.add_argument("--p-drop", type=float, default=None)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--schedule-steps", type=int, default=None)
    tr.add_argument("--no-pam", action="store_true",
                    help="ablation: condition on projected raw weights")
    tr.add_argument("--no-prompt", action="store_true",
                    help="ablation: train fully unconditional")
    tr.add_argument("--quiet", action="store_true")
    tr.set_defaults(func=cmd_train)

    sa = sub.add_parser("sample", help="generate windows from a checkpoint")
    sa.add_argument("--checkpoint", required=True)
    sa.add_argument("--count", type=int, required=True)
    sa.add_argument("--out", required=True)
    sa.add_argument("--shots", default=None, help="CSV of prompt windows")
    sa.add_argument("--domain", default=None, help="domain name for prompt shots")
    sa.add_argument("--corpus", default=None, help="corpus CSV to draw shots from")
    sa.add_argument("--shots-k", type=int, default=None, help="number of shots K")
    sa.add_argument("--unconditional", action="store_true")
    sa.add_argument("--variant", choices=["ddpm", "alg2"], default="ddpm")
    sa.add_argument("--seed", type=int, default=0)
    sa.add_argument("--denorm", action="store_true",
                    help="report samples in original units of --domain")
    sa.set_defaults(func=cmd_sample)

    ev = sub.add_parser("eval", help="distribution distances between two sample CSVs")
    ev.add_argument("--real", required=True)
    ev.add_argument("--synth", required=True)
    ev.add_argument("--bins", type=int, default=50)
    ev.add_argument("--bandwidth", default="median")
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=cmd_eval)

    ins = sub.add_parser("inspect",
                         help="assignment matrix and per-prototype generations")
    ins.add_argument("--checkpoint", required=True)
    ins.add_argument("--corpus", required=True)
    ins.add_argument("--count", type=int, default=4, help="samples per prototype")
    ins.add_argument("--seed", type=int, default=0)
    ins.add_argument("--out", required=True)
    ins.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # operator surface: fail with a message, not a trace
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

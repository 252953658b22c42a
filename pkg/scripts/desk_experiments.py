#!/usr/bin/env python3
"""Desk-scale experiments behind acceptance criteria 4-6, with JSON output.

    python3 scripts/desk_experiments.py recon    --cache runs/models
    python3 scripts/desk_experiments.py ordering --cache runs/models --seeds 0 1 2
    python3 scripts/desk_experiments.py classify --cache runs/models --seeds 0 1 2
    python3 scripts/desk_experiments.py recon --beta 1e-5 --plan 16,32,64

Models are cached under ``--cache`` keyed by corpus, mask, training and
architecture settings, so ``classify`` reuses the ``ordering`` runs.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import replace

import numpy as np

from wearecg.experiments import (ClassifyConfig, CorpusConfig, build_corpus, classification_summary,
                                 reconstruction_summary, train_or_load)
from wearecg.train import TrainConfig
from wearecg.vae import ArchConfig, MaskSpec

MASKS = ("II,V1,V5", "I,II,V3", "I")


def log(msg: str) -> None:
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", file=sys.stderr, flush=True)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("experiment", choices=("recon", "ordering", "classify"))
    p.add_argument("--cache", default="runs/models")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--plan", help="channel plan (default 32,64,128 for recon, 16,32,64 otherwise)")
    p.add_argument("--lr-max", type=float, default=2e-3)
    p.add_argument("--lr-initial", type=float, default=2e-4)
    p.add_argument("--beta", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--out", help="write results JSON here (default stdout)")
    args = p.parse_args(argv)

    plan = args.plan or ("32,64,128" if args.experiment == "recon" else "16,32,64")
    arch = ArchConfig(channel_plan=tuple(int(c) for c in plan.split(",")))
    base = TrainConfig(lr_initial=args.lr_initial, lr_max=args.lr_max, beta_kl=args.beta, epochs=args.epochs)
    corpus_cfg = CorpusConfig()
    corpus = build_corpus(corpus_cfg)
    log(f"corpus train {corpus.x_train.shape} test {corpus.x_test.shape}; arch {arch.channel_plan}")

    def model(mask: str, seed: int):
        t0 = time.perf_counter()
        m = train_or_load(corpus, corpus_cfg, MaskSpec.parse(mask), replace(base, seed=seed), arch, args.cache)
        log(f"model {mask} seed {seed} ready in {time.perf_counter() - t0:.0f}s")
        return m

    out: dict = {"experiment": args.experiment, "channel_plan": list(arch.channel_plan),
                 "train": {"lr_initial": base.lr_initial, "lr_max": base.lr_max, "beta_kl": base.beta_kl,
                           "epochs": base.epochs}}
    if args.experiment == "recon":
        s = reconstruction_summary(model("II,V1,V5", args.seeds[0]), corpus.x_test, MaskSpec())
        s["ratios"] = {"mse": s["mse"] / s["zero_mse"], "einthoven": s["einthoven"] / s["zero_einthoven"],
                       "fid": s["fid"] / s["noise_fid"]}
        out["result"] = s
    elif args.experiment == "ordering":
        res = {m: [reconstruction_summary(model(m, s), corpus.x_test, MaskSpec.parse(m))["mse"]
                   for s in args.seeds] for m in MASKS}
        out["result"] = {m: {"per_seed": v, "mean": float(np.mean(v))} for m, v in res.items()}
    else:
        warnings.simplefilter("ignore", UserWarning)
        rows = [classification_summary(corpus, corpus_cfg, model("II,V1,V5", s), seed=s, cfg=ClassifyConfig())
                for s in args.seeds]
        out["result"] = {k: {"per_seed": [r[k] for r in rows], "mean": float(np.mean([r[k] for r in rows]))}
                         for k in rows[0]}
    text = json.dumps(out, indent=2, sort_keys=True, default=float)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``wearecg`` command-line driver.

Subcommands: synth, preprocess, train, reconstruct, evaluate, classify, report.
Settings come from an optional JSON config (``--config``) overridden by flags.
Exit codes: 0 success, 1 runtime failure, 2 configuration/validation error.

Environment: ``WEARECG_OUT`` sets the default output root and
``WEARECG_THREADS`` caps BLAS threads (must be set before numpy loads).
"""
from __future__ import annotations

import os
import sys

_threads = os.environ.get("WEARECG_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import dataclasses  # noqa: E402
import datetime as _dt  # noqa: E402
import json  # noqa: E402
import shutil  # noqa: E402
import warnings  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .data import (DatasetManifest, ManifestEntry, VocabularyMismatchError, Vocabulary,  # noqa: E402
                   load_record, load_split, save_record, split_by_subject)
from .diagnoser import (CONFIGURATIONS, classifier_input, classify_configurations,  # noqa: E402
                        label_matrix, pretrain_backbone, render_table, train_head)
from .metrics import FeatureEmbedder, MetricReport, report_from_arrays  # noqa: E402
from .nn.checkpoint import save_checkpoint  # noqa: E402
from .plots import render_strips  # noqa: E402
from .preprocess import PreprocessConfig, preprocess_record  # noqa: E402
from .synthgen import (DEFAULT_MIX, DipoleParams, GenConfig, SubjectVariability, gen_dataset,  # noqa: E402
                       provenance)
from .train import (TrainConfig, TrainingDivergedError, load_model, reconstruct_batch,  # noqa: E402
                    stack_signals, train)
from .vae import ArchConfig, MaskSpec  # noqa: E402


class ConfigError(ValueError):
    """Invalid configuration or input; maps to exit code 2."""


# -- config ---------------------------------------------------------------------
@dataclasses.dataclass(frozen=True)
class SynthOptions:
    n_subjects: int = 400
    records_per_subject: int = 5
    test_fraction: float = 0.1
    duration_s: float = 2.0
    fs: int = 500
    noise_std: float = 0.01
    subject_variability: bool = True
    pathology_mix: dict = dataclasses.field(default_factory=lambda: dict(DEFAULT_MIX))


@dataclasses.dataclass(frozen=True)
class EvalOptions:
    split: str = "test"
    fid: bool = True
    plot: bool = False
    plot_limit: int | None = None


@dataclasses.dataclass(frozen=True)
class ClassifyOptions:
    backbone: str = "pretrained"
    pretrain_epochs: int = 5
    pretrain_lr: float = 1e-3
    head_epochs: int = 200
    head_lr: float = 5e-2
    one_lead: str = "I"
    vocab: str | None = None


@dataclasses.dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str | None = None
    mask: str = "II,V1,V5"
    synth: SynthOptions = SynthOptions()
    preprocess: PreprocessConfig = PreprocessConfig()
    train: TrainConfig = TrainConfig()
    arch: ArchConfig = ArchConfig()
    evaluate: EvalOptions = EvalOptions()
    classify: ClassifyOptions = ClassifyOptions()


_SECTIONS = {"synth": SynthOptions, "preprocess": PreprocessConfig, "train": TrainConfig,
             "arch": ArchConfig, "evaluate": EvalOptions, "classify": ClassifyOptions}


def _build(cls, values: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    if cls is ArchConfig and "channel_plan" in values:
        values = {**values, "channel_plan": tuple(values["channel_plan"])}
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {where}: {e}") from None


def load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {', '.join(unknown)}")
    kw = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            kw[key] = _build(_SECTIONS[key], value, f"config section {key!r}")
        else:
            kw[key] = value
    # a top-level seed reaches training unless the train section pins its own
    if "seed" in raw and "seed" not in raw.get("train", {}):
        kw["train"] = dataclasses.replace(kw.get("train", TrainConfig()), seed=raw["seed"])
    return RunConfig(**kw)


def _override(obj, where: str, **flags):
    vals = {k: v for k, v in flags.items() if v is not None}
    if not vals:
        return obj
    try:
        return dataclasses.replace(obj, **vals)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {where}: {e}") from None


def _mask(cfg: RunConfig, flag: str | None) -> MaskSpec:
    try:
        return MaskSpec.parse(flag if flag is not None else cfg.mask)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"invalid mask: {e}") from None


def _out_dir(args, cfg: RunConfig, default_name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    root = cfg.out_dir or os.environ.get("WEARECG_OUT")
    if root:
        return Path(root) / default_name
    raise ConfigError("no output directory: pass --out, set out_dir in the config, or set WEARECG_OUT")


def _prepare_out(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise ConfigError(f"output directory {path} is not empty (use --force)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_info(out: Path, command: str, argv: list[str], started: _dt.datetime) -> None:
    # wall-clock data lives only here so every other output stays byte-stable
    _write_json(out / "run_info.json", {
        "command": command, "argv": argv, "version": __version__,
        "started": started.isoformat(timespec="seconds"),
        "finished": _dt.datetime.now().isoformat(timespec="seconds"),
    })


def _load_manifest(data_dir: Path) -> DatasetManifest:
    path = data_dir / "manifest.json"
    if not path.exists():
        raise ConfigError(f"no manifest.json in {data_dir}")
    return DatasetManifest.load(path)


def _split_records(data_dir: Path, tag: str):
    manifest = _load_manifest(data_dir)
    if tag not in ("train", "test"):
        raise ConfigError(f"split must be train or test, got {tag!r}")
    records = load_split(manifest, data_dir, tag)
    if not records:
        raise ConfigError(f"{tag} split of {data_dir} is empty")
    return manifest, records


def _resolve_checkpoint(path: str) -> Path:
    p = Path(path)
    if p.is_dir():
        found = sorted(p.glob("epoch_*.json"))
        if not found:
            raise ConfigError(f"no epoch checkpoints in {p}")
        return found[-1]
    if not p.with_suffix(".json").exists():
        raise ConfigError(f"checkpoint not found: {path}")
    return p.with_suffix(".json")


def _stack(records):
    try:
        return stack_signals(records, dtype=np.float64)
    except ValueError as e:
        raise ConfigError(str(e)) from None


# -- subcommands ------------------------------------------------------------------
def cmd_synth(args, cfg: RunConfig) -> int:
    opts = _override(cfg.synth, "synth options", n_subjects=args.n_subjects,
                     records_per_subject=args.records_per_subject, test_fraction=args.test_fraction,
                     duration_s=args.duration)
    if args.mix is not None:
        try:
            mix = json.loads(args.mix)
        except json.JSONDecodeError:
            mix = {}
            for item in args.mix.split(","):
                key, _, val = item.partition("=")
                try:
                    mix[key.strip()] = float(val)
                except ValueError:
                    raise ConfigError(f"bad --mix item {item!r}; use LABEL=prob") from None
        opts = dataclasses.replace(opts, pathology_mix=mix)
    vocab = Vocabulary.default()
    for label in opts.pathology_mix:
        if label not in vocab.labels:
            raise ConfigError(f"unknown pathology {label!r} in pathology_mix")
    seed = cfg.seed if args.seed is None else args.seed
    out = _out_dir(args, cfg, "data")
    _prepare_out(out, args.force)
    started = _dt.datetime.now()
    base = DipoleParams(noise_std=opts.noise_std)
    gen_cfg = GenConfig(opts.duration_s, opts.fs,
                        SubjectVariability() if opts.subject_variability else SubjectVariability.none())
    try:
        records = gen_dataset(opts.n_subjects, opts.records_per_subject, opts.pathology_mix, base, seed,
                              gen_cfg, vocab)
    except (KeyError, ValueError) as e:
        raise ConfigError(str(e)) from None
    (out / "records").mkdir()
    paths = []
    for r in records:
        save_record(r, out / "records" / r.record_id)
        paths.append(f"records/{r.record_id}.ecgjson")
    manifest = split_by_subject([(r.record_id, r.subject_id) for r in records], opts.test_fraction, seed, paths)
    manifest.save(out / "manifest.json")
    (out / "generator_params.json").write_text(
        provenance(opts.n_subjects, opts.records_per_subject, opts.pathology_mix, base, seed, gen_cfg) + "\n")
    _run_info(out, "synth", args.argv, started)
    c = manifest.counts
    print(f"wrote {len(records)} records to {out} (train {c['train']}, test {c['test']})")
    return 0


def cmd_preprocess(args, cfg: RunConfig) -> int:
    pcfg = _override(cfg.preprocess, "preprocess options", target_fs=args.target_fs,
                     nan_window=args.nan_window, zscore=args.zscore)
    src = Path(args.data)
    manifest = _load_manifest(src)
    out = _out_dir(args, cfg, "preprocessed")
    _prepare_out(out, args.force)
    started = _dt.datetime.now()
    entries = []
    for e in manifest.entries:
        rec = preprocess_record(load_record(src / e.path), pcfg)
        rel = Path(e.path)
        (out / rel.parent).mkdir(parents=True, exist_ok=True)
        save_record(rec, out / rel)
        entries.append(ManifestEntry(e.path, e.subject_id, e.split, e.record_id))
    DatasetManifest(entries, manifest.seed, manifest.test_fraction).save(out / "manifest.json")
    _write_json(out / "preprocess_config.json", dataclasses.asdict(pcfg))
    _run_info(out, "preprocess", args.argv, started)
    print(f"preprocessed {len(entries)} records into {out}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    mask = _mask(cfg, args.mask)
    plan = None if args.channel_plan is None else tuple(int(c) for c in args.channel_plan.split(","))
    arch = _override(cfg.arch, "arch options", channel_plan=plan)
    out = _out_dir(args, cfg, "checkpoints")
    tcfg = _override(cfg.train, "train options", epochs=args.epochs, batch_size=args.batch_size,
                     lr_initial=args.lr_initial, lr_max=args.lr_max, beta_kl=args.beta_kl, seed=args.seed)
    tcfg = dataclasses.replace(tcfg, checkpoint_dir=str(out))
    data_dir = Path(args.data)
    manifest, records = _split_records(data_dir, "train")
    x = _stack(records)
    if x.shape[2] % arch.downsample_factor:
        raise ConfigError(f"T={x.shape[2]} is not divisible by the downsample factor {arch.downsample_factor}")
    if args.resume is None:
        _prepare_out(out, args.force)
    started = _dt.datetime.now()
    resume = _resolve_checkpoint(args.resume) if args.resume else None
    try:
        res = train(x, mask, tcfg, arch, manifest_digest=manifest.digest(), resume_from=resume)
    except TrainingDivergedError as e:
        print(f"error: training diverged at step {e.step}", file=sys.stderr)
        return 1
    _run_info(out, "train", args.argv, started)
    if res.epochs:
        last = res.epochs[-1]
        print(f"epoch {last['epoch'] + 1}: recon {last['recon']:.6f} kl {last['kl']:.4f} total {last['total']:.6f}")
    print(f"{len(res.checkpoints)} checkpoint(s) in {out}")
    return 0


def _load_checked_model(path: str, cfg: RunConfig, arch_flag_given: bool):
    ckpt = _resolve_checkpoint(path)
    try:
        model, meta, _ = load_model(ckpt)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"cannot load checkpoint {ckpt}: {e}") from None
    if arch_flag_given and model.arch != cfg.arch:
        raise ConfigError(f"checkpoint architecture {model.arch} does not match configured {cfg.arch}")
    return model, meta


def cmd_reconstruct(args, cfg: RunConfig) -> int:
    model, meta = _load_checked_model(args.checkpoint, cfg, args.config_arch)
    mask = _mask(cfg, args.mask if args.mask is not None else meta.get("mask"))
    data_dir = Path(args.data)
    manifest, records = _split_records(data_dir, args.split)
    out = _out_dir(args, cfg, "reconstructed")
    _prepare_out(out, args.force)
    started = _dt.datetime.now()
    records = sorted(records, key=lambda r: r.record_id)
    x = _stack(records)
    if x.shape[2] % model.arch.downsample_factor:
        raise ConfigError("record length incompatible with the model's downsample factor")
    seed = cfg.seed if args.seed is None else args.seed
    recon = reconstruct_batch(x, model, mask, args.mode, seed)
    digest = model.digest()
    (out / "records").mkdir()
    entries = []
    for r, y in zip(records, recon):
        prov = {**r.provenance, "reconstruction": {"model_hash": digest, "mask": str(mask), "mode": args.mode}}
        rec = dataclasses.replace(r, signal=y, provenance=prov)
        save_record(rec, out / "records" / r.record_id)
        entries.append(ManifestEntry(f"records/{r.record_id}.ecgjson", r.subject_id, args.split, r.record_id))
    DatasetManifest(entries, manifest.seed, manifest.test_fraction).save(out / "manifest.json")
    _run_info(out, "reconstruct", args.argv, started)
    print(f"reconstructed {len(entries)} records into {out}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    opts = _override(cfg.evaluate, "evaluate options", split=args.split,
                     plot=True if args.plot else None, plot_limit=args.plot_limit,
                     fid=False if args.no_fid else None)
    model, meta = _load_checked_model(args.checkpoint, cfg, args.config_arch)
    mask = _mask(cfg, args.mask if args.mask is not None else meta.get("mask"))
    _, records = _split_records(Path(args.data), opts.split)
    out = _out_dir(args, cfg, "evaluation")
    _prepare_out(out, args.force)
    started = _dt.datetime.now()
    records = sorted(records, key=lambda r: r.record_id)
    x = _stack(records)
    if x.shape[2] % model.arch.downsample_factor:
        raise ConfigError("record length incompatible with the model's downsample factor")
    recon = reconstruct_batch(x, model, mask, "mean")
    report = report_from_arrays(x, recon, mask, FeatureEmbedder(), with_fid=opts.fid)
    (out / "metrics.json").write_text(report.dumps(), encoding="utf-8")
    (out / "metrics.txt").write_text(report.to_text(), encoding="utf-8")
    if opts.plot:
        pdir = out / "plots"
        pdir.mkdir()
        limit = len(records) if opts.plot_limit is None else opts.plot_limit
        kept = {l.name for l in mask.keep}
        for r, y in list(zip(records, recon))[:limit]:
            svg = render_strips(r.signal, y, r.fs, f"{r.record_id}  input: {mask}", highlight=kept)
            (pdir / f"{r.record_id}.svg").write_text(svg, encoding="utf-8")
    _run_info(out, "evaluate", args.argv, started)
    print(report.to_text(), end="")
    return 0


def cmd_classify(args, cfg: RunConfig) -> int:
    opts = _override(cfg.classify, "classify options", backbone=args.backbone, head_epochs=args.head_epochs,
                     pretrain_epochs=args.pretrain_epochs, vocab=args.vocab)
    if opts.backbone not in ("pretrained", "random"):
        raise ConfigError(f"backbone must be 'pretrained' or 'random', got {opts.backbone!r}")
    if opts.vocab is not None:
        if not Path(opts.vocab).exists():
            raise ConfigError(f"labels file not found: {opts.vocab}")
        vocab = Vocabulary.load(opts.vocab)
    else:
        vocab = Vocabulary.default()
    seed = cfg.seed if args.seed is None else args.seed
    three = _mask(cfg, args.mask)
    try:
        one = MaskSpec.parse(opts.one_lead)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"invalid one_lead: {e}") from None
    data_dir = Path(args.data)
    _, train_recs = _split_records(data_dir, "train")
    _, test_recs = _split_records(data_dir, "test")
    train_recs = sorted(train_recs, key=lambda r: r.record_id)
    test_recs = sorted(test_recs, key=lambda r: r.record_id)
    try:
        y_train = label_matrix(train_recs, vocab)
        y_test = label_matrix(test_recs, vocab)
    except VocabularyMismatchError as e:
        raise ConfigError(f"vocabulary hash mismatch: {e}") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None
    model = None
    if args.checkpoint:
        model, _ = _load_checked_model(args.checkpoint, cfg, args.config_arch)
    out = _out_dir(args, cfg, "classification")
    _prepare_out(out, args.force)
    started = _dt.datetime.now()
    x_train = classifier_input(_stack(train_recs))
    x_test = _stack(test_recs)
    if opts.backbone == "pretrained":
        backbone = pretrain_backbone(x_train, y_train, seed, opts.pretrain_epochs, opts.pretrain_lr)
    else:
        backbone = FeatureEmbedder()
    head, log = train_head(x_train, y_train, vocab, backbone, opts.head_epochs, opts.head_lr, seed)
    recon = reconstruct_batch(x_test, model, three, "mean") if model is not None else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        reports = classify_configurations(head, x_test, recon, y_test, vocab, three, one)
    for msg in sorted({str(w.message) for w in caught}):
        print(f"warning: {msg}", file=sys.stderr)
    payload = {"vocabulary_hash": vocab.hash, "labels": list(vocab.labels), "backbone": opts.backbone,
               "configurations": {k: v.to_json() for k, v in reports.items()},
               "head_final_loss": log.losses[-1] if log.losses else None}
    _write_json(out / "classification.json", payload)
    table = render_table(reports, vocab)
    (out / "classification.txt").write_text(table, encoding="utf-8")
    save_checkpoint(out / "head", head.state_dict(),
                    {"kind": "classifier-head", "vocabulary_hash": vocab.hash,
                     "feat_mean": head.feat_mean.tolist(), "feat_std": head.feat_std.tolist()})
    save_checkpoint(out / "backbone", backbone.state_dict(), {"kind": "backbone", "mode": opts.backbone})
    _run_info(out, "classify", args.argv, started)
    print(table, end="")
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    parts = []
    if args.metrics:
        p = Path(args.metrics)
        if not p.exists():
            raise ConfigError(f"metrics file not found: {p}")
        parts.append(MetricReport.from_json(json.loads(p.read_text())).to_text())
    if args.classification:
        p = Path(args.classification)
        if not p.exists():
            raise ConfigError(f"classification file not found: {p}")
        d = json.loads(p.read_text())
        names = sorted(d["configurations"], key=lambda n: CONFIGURATIONS.index(n) if n in CONFIGURATIONS else 99)
        labels = d.get("labels") or (sorted(next(iter(d["configurations"].values()))["per_label"]) if names else [])
        width = max(12, *(len(n) + 2 for n in names)) if names else 12
        lines = [f"{'Disease':<18}" + "".join(f"{n:>{width}}" for n in names)]
        for label in labels + ["Macro-AUC"]:
            row = f"{label:<18}"
            for n in names:
                c = d["configurations"][n]
                v = c["macro_auroc"] if label == "Macro-AUC" else c["per_label"][label]["auroc"]
                row += f"{v:>{width}.4f}" if v is not None else f"{'-':>{width}}"
            lines.append(row)
        parts.append("\n".join(lines) + "\n")
    if not parts:
        raise ConfigError("report needs --metrics and/or --classification")
    text = "\n".join(parts)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


# -- parser -------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wearecg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"wearecg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="JSON run config; flags override it")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", help="output directory")
            sp.add_argument("--force", action="store_true", help="replace a non-empty output directory")

    s = sub.add_parser("synth", help="generate a synthetic labelled dataset")
    common(s)
    s.add_argument("--n-subjects", type=int)
    s.add_argument("--records-per-subject", type=int)
    s.add_argument("--test-fraction", type=float)
    s.add_argument("--duration", type=float, help="record length in seconds")
    s.add_argument("--mix", help='pathology mix: JSON object or "LABEL=p,LABEL=p"')
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="reorder, impute, resample and optionally z-score")
    common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--target-fs", type=int)
    s.add_argument("--nan-window", type=int)
    s.add_argument("--zscore", action="store_true", default=None)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", help="train the VAE on a dataset's train split")
    common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--mask", help="kept leads, e.g. II,V1,V5")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr-initial", type=float)
    s.add_argument("--lr-max", type=float)
    s.add_argument("--beta-kl", type=float)
    s.add_argument("--channel-plan", help="comma-separated widths, e.g. 128,256,512")
    s.add_argument("--resume", help="checkpoint file or directory to continue from")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("reconstruct", help="reconstruct 12-lead records from the kept leads")
    common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--mask")
    s.add_argument("--mode", choices=("mean", "sample"), default="mean")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("evaluate", help="per-lead MAE/MSE and FID on a split")
    common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split")
    s.add_argument("--mask")
    s.add_argument("--plot", action="store_true", help="write one SVG strip per record")
    s.add_argument("--plot-limit", type=int)
    s.add_argument("--no-fid", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("classify", help="frozen-backbone multi-label classification report")
    common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", help="VAE checkpoint for the reconstructed configuration")
    s.add_argument("--mask", help="three-lead configuration (default II,V1,V5)")
    s.add_argument("--vocab", help="label vocabulary file")
    s.add_argument("--backbone", choices=("pretrained", "random"))
    s.add_argument("--pretrain-epochs", type=int)
    s.add_argument("--head-epochs", type=int)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("report", help="render stored metric/classification JSON as text tables")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--metrics")
    s.add_argument("--classification")
    s.add_argument("--out", help="write the text report here")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        cfg = load_run_config(args.config)
        args.config_arch = bool(args.config) and "arch" in json.loads(Path(args.config).read_text())
        return args.func(args, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except VocabularyMismatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands wire the library into reproducible runs:

  synth       write a synthetic trial directory (labels.csv + trial CSVs)
  train       train the autoencoder ensemble on a trial directory
  features    dump the hand-crafted d1..d8 descriptors per trial
  classify    fit the head + classifier on a dataset with a trained model
  evaluate    LOSO evaluation (single configuration or the ablation grid)
  export-cdf  empirical CDFs of the hand-crafted features per cohort group

Every run takes --out DIR, refuses to share the directory with a running
job (lockfile), and writes a manifest with the resolved configuration, its
hash, and the produced artifacts.  Config files are flat key=value lines;
unknown keys are rejected.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .dataset import SynthConfig, load_dataset, synthesize_dataset, write_dataset
from .dtwfeat import DtwFeatureExtractor, FEATURE_NAMES, export_feature_cdf, sample_group
from .glocal import GlocalHyper
from .metrics import BINARY_METRICS, MULTILABEL_METRICS
from .pipeline import (
    ABLATION_CELLS,
    PipelineConfig,
    ablation_matrix,
    cross_validate,
    fit_classifier,
)
from .srnn import EnsembleModel, train as train_ensemble

FLOAT_FMT = "%.17g"
LOCKFILE = ".painmotion.lock"


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling

_TUPLE_KEYS = {"hidden_sizes", "skip_lengths", "fc_dims", "epochs", "learning_rates", "length_range"}
_INT_KEYS = {
    "n_subjects", "trials_per_subject", "seed", "max_len", "batch_size",
    "head_epochs", "feature_bins", "dba_iterations", "repetitions",
    "glocal_k", "glocal_g", "glocal_rounds",
}
_FLOAT_KEYS = {
    "noise_scale", "lambda_l1", "dropout", "weight_decay", "head_lr",
    "dtw_theta", "glocal_lam1", "glocal_lam2", "glocal_lam3",
}
_BOOL_KEYS = {"use_handcrafted"}
_STR_KEYS = {"task", "mode", "trial_kind"}

SYNTH_KEYS = {"n_subjects", "trials_per_subject", "length_range", "noise_scale", "seed"}
PIPELINE_KEYS = (
    {"task", "mode", "use_handcrafted", "trial_kind", "repetitions", "seed",
     "hidden_sizes", "skip_lengths", "lambda_l1", "fc_dims", "dropout", "max_len",
     "batch_size", "epochs", "learning_rates", "weight_decay",
     "head_epochs", "head_lr", "feature_bins", "dtw_theta", "dba_iterations",
     "glocal_k", "glocal_g", "glocal_lam1", "glocal_lam2", "glocal_lam3", "glocal_rounds"}
)


def _convert(key, raw):
    try:
        if key in _TUPLE_KEYS:
            parts = [p for p in str(raw).replace("(", "").replace(")", "").split(",") if p.strip()]
            vals = tuple(float(p) if "." in p or "e" in p.lower() else int(p) for p in parts)
            return vals
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            if str(raw).lower() in ("1", "true", "yes"):
                return True
            if str(raw).lower() in ("0", "false", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if key in _STR_KEYS:
            return str(raw)
    except (TypeError, ValueError) as exc:
        raise CliError(f"config key {key}: {exc}") from None
    raise CliError(f"unknown config key {key!r}")


def read_config_file(path, allowed):
    """Flat key=value file; blank lines and '#' comments permitted."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in allowed:
                raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _convert(key, raw.strip())
    return out


def resolve_config(args, allowed, defaults):
    """Merge defaults <- config file <- explicit CLI flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config, allowed))
    for key in allowed:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = _convert(key, flag) if isinstance(flag, str) else flag
    return merged


def pipeline_config_from(merged):
    glocal = GlocalHyper(
        k=merged.get("glocal_k", 6),
        g=merged.get("glocal_g", 4),
        lam1=merged.get("glocal_lam1", 1.0),
        lam2=merged.get("glocal_lam2", 0.1),
        lam3=merged.get("glocal_lam3", 1e-3),
        max_rounds=merged.get("glocal_rounds", 100),
        seed=merged.get("seed", 0),
    )
    kwargs = {
        k: v
        for k, v in merged.items()
        if not k.startswith("glocal_")
    }
    return PipelineConfig(glocal=glocal, **kwargs)


# ---------------------------------------------------------------------------
# run directory plumbing

def _config_hash(payload):
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class RunDir:
    def __init__(self, path, command, config):
        self.path = path
        self.command = command
        self.config = config
        self.outputs = []

    def __enter__(self):
        os.makedirs(self.path, exist_ok=True)
        self.lock = os.path.join(self.path, LOCKFILE)
        try:
            fd = os.open(self.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            os.close(fd)
        except FileExistsError:
            raise CliError(
                f"output directory {self.path} is locked by another run "
                f"(remove {LOCKFILE} if that run is dead)"
            ) from None
        return self

    def __exit__(self, exc_type, exc, tb):
        os.remove(self.lock)
        if exc_type is None:
            self.write_manifest()
        return False

    def file(self, name):
        self.outputs.append(name)
        return os.path.join(self.path, name)

    def write_manifest(self):
        manifest = {
            "command": self.command,
            "version": __version__,
            "seed": self.config.get("seed"),
            "config": {k: list(v) if isinstance(v, tuple) else v for k, v in self.config.items()},
            "config_hash": _config_hash(
                {k: list(v) if isinstance(v, tuple) else v for k, v in self.config.items()}
            ),
            "outputs": sorted(self.outputs),
        }
        with open(os.path.join(self.path, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([FLOAT_FMT % v if isinstance(v, float) else v for v in row])


def _report_rows(label, report):
    row = [label]
    header = ["method"]
    for name in report.metric_names:
        header += [name, f"{name}_hw"]
        row += [report.mean[name], report.half_width[name]]
    return header, row


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args):
    merged = resolve_config(args, SYNTH_KEYS, {
        "n_subjects": 6, "trials_per_subject": 4, "length_range": (40, 60),
        "noise_scale": 0.1, "seed": 0,
    })
    cfg = SynthConfig(**merged)
    ds = synthesize_dataset(cfg)
    with RunDir(args.out, "synth", merged) as run:
        write_dataset(ds, args.out)
        for s in ds.samples:
            run.outputs.append(s.trial_id)
        run.outputs.append("labels.csv")
    print(f"synth: wrote {len(ds)} trials, {len(ds.subjects())} subjects -> {args.out}")
    return 0


_TRAIN_KEYS = {
    "mode", "hidden_sizes", "skip_lengths", "lambda_l1", "fc_dims", "dropout", "max_len",
    "batch_size", "epochs", "learning_rates", "weight_decay", "seed", "trial_kind",
}


def cmd_train(args):
    merged = resolve_config(args, _TRAIN_KEYS, {"seed": 0, "trial_kind": "all"})
    ds = load_dataset(args.data, normalize=False).filter_trial_kind(merged["trial_kind"])
    dsn = ds.normalized()
    pcfg = pipeline_config_from({k: v for k, v in merged.items() if k != "trial_kind"})
    with RunDir(args.out, "train", merged) as run:
        result = train_ensemble(dsn, pcfg.train_config(merged["seed"]), model_config=pcfg.model_config())
        result.model.channel_stats = dsn.channel_stats
        result.model.save(run.file("model.ckpt"))
        _write_csv(
            run.file("loss_trace.csv"),
            ["epoch", "lr", "loss"],
            [(e + 1, float(lr), float(j)) for e, (lr, j) in enumerate(zip(result.epoch_lrs, result.epoch_losses))],
        )
    print(
        f"train: {len(ds)} trials, {result.epoch_lrs.size} epochs, "
        f"final loss {result.epoch_losses[-1]:.4f} -> {args.out}"
    )
    return 0


_FEATURE_KEYS = {"feature_bins", "dtw_theta", "dba_iterations", "trial_kind"}


def cmd_features(args):
    merged = resolve_config(args, _FEATURE_KEYS, {
        "feature_bins": 16, "dtw_theta": 2.0, "dba_iterations": 10, "trial_kind": "all",
    })
    ds = load_dataset(args.data, normalize=False).filter_trial_kind(merged["trial_kind"])
    dsn = ds.normalized()
    extractor = DtwFeatureExtractor(
        K=merged["feature_bins"], theta=merged["dtw_theta"], dba_iterations=merged["dba_iterations"]
    )
    feats = extractor.fit_transform(dsn.samples)
    with RunDir(args.out, "features", merged) as run:
        _write_csv(
            run.file("features.csv"),
            ["subject_id", "trial_file"] + FEATURE_NAMES,
            [[s.subject_id, s.trial_id] + [float(v) for v in feats[i]] for i, s in enumerate(dsn.samples)],
        )
    print(f"features: {len(ds)} trials -> {args.out}/features.csv")
    return 0


_CLASSIFY_KEYS = PIPELINE_KEYS - {"repetitions", "mode"}


def cmd_classify(args):
    merged = resolve_config(args, _CLASSIFY_KEYS, {"task": "multilabel", "seed": 0, "trial_kind": "all"})
    model = EnsembleModel.load(args.model)
    if model.channel_stats is None:
        raise CliError(f"{args.model}: checkpoint carries no normalization stats")
    ds = load_dataset(args.data, normalize=False).filter_trial_kind(merged["trial_kind"])
    dsn = ds.normalized(model.channel_stats)
    pcfg = pipeline_config_from(
        {k: v for k, v in merged.items() if k in PIPELINE_KEYS} | {"repetitions": 1}
    )
    bundle = fit_classifier(model, dsn, pcfg)
    with RunDir(args.out, "classify", merged) as run:
        bundle.save(run.file("classifier.ckpt"))
        rows = bundle.predict_rows(model, dsn.samples)
        n_scores = len(rows[0]) - 4
        _write_csv(
            run.file("predictions.csv"),
            ["subject_id", "trial_file", "pain_pred", "protective_pred"]
            + [f"score_{j + 1}" for j in range(n_scores)],
            rows,
        )
    print(f"classify: task={merged['task']} on {len(ds)} trials -> {args.out}")
    return 0


_EVALUATE_KEYS = PIPELINE_KEYS


def cmd_evaluate(args):
    merged = resolve_config(args, _EVALUATE_KEYS, {"task": "binary", "seed": 0})
    ablation = args.ablation
    ds = load_dataset(args.data, normalize=False)
    with RunDir(args.out, "evaluate", dict(merged, ablation=ablation)) as run:
        if ablation == "all":
            cfg = pipeline_config_from(merged)
            reports = ablation_matrix(ds, cfg)
            header = None
            rows = []
            for cell in ABLATION_CELLS:
                header, row = _report_rows(cell, reports[cell])
                rows.append(row)
            _write_csv(run.file("report.csv"), header, rows)
            payload = {cell: reports[cell].to_dict() for cell in ABLATION_CELLS}
        else:
            mode = "independent" if ablation.startswith("IF") else "shared"
            use_hc = not ablation.endswith("noHC")
            cfg = pipeline_config_from(dict(merged, mode=mode, use_handcrafted=use_hc))
            report = cross_validate(ds, cfg)
            header, row = _report_rows(ablation, report)
            _write_csv(run.file("report.csv"), header, [row])
            payload = {ablation: report.to_dict()}
        with open(run.file("report.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"evaluate: {ablation} task={merged['task']} -> {args.out}/report.csv")
    return 0


_CDF_KEYS = {"feature_bins", "dtw_theta", "dba_iterations", "trial_kind"}


def cmd_export_cdf(args):
    merged = resolve_config(args, _CDF_KEYS, {
        "feature_bins": 16, "dtw_theta": 2.0, "dba_iterations": 10, "trial_kind": "all",
    })
    ds = load_dataset(args.data, normalize=False).filter_trial_kind(merged["trial_kind"])
    dsn = ds.normalized()
    extractor = DtwFeatureExtractor(
        K=merged["feature_bins"], theta=merged["dtw_theta"], dba_iterations=merged["dba_iterations"]
    )
    feats = extractor.fit_transform(dsn.samples)
    groups = {}
    for i, s in enumerate(dsn.samples):
        groups.setdefault(sample_group(s), []).append(feats[i])
    rows = export_feature_cdf({g: np.stack(v) for g, v in groups.items()})
    with RunDir(args.out, "export-cdf", merged) as run:
        _write_csv(run.file("cdf.csv"), ["feature", "group", "value", "cum_prob"], rows)
    print(f"export-cdf: {len(rows)} rows over {len(groups)} groups -> {args.out}/cdf.csv")
    return 0


# ---------------------------------------------------------------------------

def _add_common(p, keys):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out", required=True, help="output directory (one run per directory)")
    for key in sorted(keys):
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="painmotion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic trial directory")
    _add_common(p, SYNTH_KEYS)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the autoencoder ensemble")
    p.add_argument("--data", required=True, help="trial directory")
    _add_common(p, _TRAIN_KEYS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("features", help="dump hand-crafted features")
    p.add_argument("--data", required=True)
    _add_common(p, _FEATURE_KEYS)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("classify", help="fit head+classifier, dump predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="ensemble checkpoint")
    _add_common(p, _CLASSIFY_KEYS)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="leave-one-subject-out evaluation")
    p.add_argument("--data", required=True)
    p.add_argument(
        "--ablation",
        choices=list(ABLATION_CELLS) + ["all"],
        default="SF-HC",
        help="single ablation cell or the whole grid",
    )
    _add_common(p, _EVALUATE_KEYS)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-cdf", help="empirical feature CDFs per cohort group")
    p.add_argument("--data", required=True)
    _add_common(p, _CDF_KEYS)
    p.set_defaults(func=cmd_export_cdf)
    return parser


def dispatch(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line machine-parsable error
        err = {"error": type(exc).__name__, "command": args.command, "message": str(exc)}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()

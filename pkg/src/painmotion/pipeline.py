"""End-to-end pipelines: leave-one-subject-out evaluation and ablations.

One repetition of the full pipeline, per fold: fit normalization on the
training subjects, train the autoencoder ensemble, freeze the encoders,
build DTW barycenter references and hand-crafted features from the
training fold, train the projection head jointly with the classifier, and
score the held-out subject.  Metrics are pooled over folds, and repeated
runs with different seeds give the reported mean and 95% interval.

The four ablation cells cross the training framework (shared vs
independent) with fusing or dropping the hand-crafted features; models and
features are shared between cells wherever the configuration allows it.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .dataset import ChannelStats, Dataset, loso_splits
from .dtwfeat import DtwFeatureExtractor
from .glocal import (
    GlocalHyper,
    GlocalModel,
    decode_scores,
    encode_labels,
    fit_glocal,
)
from .metrics import EvalReport, binary_report, multilabel_report
from .serialize import load_arrays, save_arrays
from .srnn import (
    EnsembleModel,
    FusionHead,
    HeadTrainConfig,
    ModelConfig,
    TrainConfig,
    train,
    train_fused_classifier,
)

ABLATION_CELLS = ("SF-HC", "SF-noHC", "IF-HC", "IF-noHC")


@dataclass
class PipelineConfig:
    task: str = "binary"  # 'binary' (protective softmax) or 'multilabel' (glocal)
    mode: str = "shared"  # 'shared' (SF) or 'independent' (IF)
    use_handcrafted: bool = True
    trial_kind: str = "all"
    repetitions: int = 5
    seed: int = 0
    # ensemble architecture
    hidden_sizes: tuple = (128, 128, 64)
    skip_lengths: tuple = (3, 3, 2)
    lambda_l1: float = 0.005
    fc_dims: tuple = (160, 80)
    dropout: float = 0.5
    max_len: int = 4096
    # autoencoder training
    batch_size: int = 8
    epochs: tuple = (70, 30, 30)
    learning_rates: tuple = (1e-2, 1e-3, 1e-4)
    weight_decay: float = 1e-4
    # head / classifier training
    head_epochs: int = 300
    head_lr: float = 3e-3
    # hand-crafted features
    feature_bins: int = 16
    dtw_theta: float = 2.0
    dba_iterations: int = 10
    glocal: GlocalHyper = field(default_factory=GlocalHyper)

    def model_config(self, mode=None):
        return ModelConfig(
            hidden_sizes=self.hidden_sizes,
            skip_lengths=self.skip_lengths,
            lambda_l1=self.lambda_l1,
            mode=mode or self.mode,
            fc_dims=self.fc_dims,
            dropout=self.dropout,
            max_len=self.max_len,
        )

    def train_config(self, seed):
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rates=self.learning_rates,
            weight_decay=self.weight_decay,
            seed=seed,
        )

    def to_dict(self):
        d = asdict(self)
        return d


def _seed_for(*parts):
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def latent_matrix(model, samples):
    """Encoder latents, one full-length sequence at a time."""
    return np.stack([model.encode_shared(s.streams()) for s in samples])


@dataclass
class FoldData:
    """Per-fold state that does not depend on the repetition seed."""

    train: Dataset
    test: Dataset
    stats: ChannelStats
    extractor: DtwFeatureExtractor = None
    delta_train: np.ndarray = None
    delta_test: np.ndarray = None


def prepare_folds(ds, cfg, with_features=True):
    """Normalize per fold (training subjects only) and, optionally, build
    the fold's DTW references and hand-crafted features once."""
    folds = []
    for train_ds, test_ds in loso_splits(ds):
        stats = ChannelStats.fit(train_ds.samples)
        fold = FoldData(
            train=train_ds.normalized(stats),
            test=test_ds.normalized(stats),
            stats=stats,
        )
        if with_features:
            fold.extractor = DtwFeatureExtractor(
                K=cfg.feature_bins,
                theta=cfg.dtw_theta,
                dba_iterations=cfg.dba_iterations,
            )
            fold.delta_train = fold.extractor.fit_transform(fold.train.samples)
            fold.delta_test = fold.extractor.transform(fold.test.samples)
        folds.append(fold)
    return folds


def _train_fold_ensemble(fold, cfg, mode, seed):
    result = train(fold.train, cfg.train_config(seed), model_config=cfg.model_config(mode))
    model = result.model
    model.channel_stats = fold.stats
    return model


def _fold_predictions(model, fold, cfg, use_hc, seed, task):
    """Train head+classifier on the fold's training data, score its test data."""
    Z_train = latent_matrix(model, fold.train.samples)
    Z_test = latent_matrix(model, fold.test.samples)
    D_train = fold.delta_train if use_hc else None
    D_test = fold.delta_test if use_hc else None
    head_cfg = HeadTrainConfig(epochs=cfg.head_epochs, lr=cfg.head_lr, seed=seed)

    if task == "binary":
        y_train = np.array([s.protective for s in fold.train.samples], dtype=int)
        rw, rb, _ = train_fused_classifier(model.head, Z_train, D_train, y_train, "softmax", head_cfg)
        h_test, _ = model.head.forward(Z_test, training=False)
        x_test = np.concatenate([h_test, D_test], axis=1) if use_hc else h_test
        logits = x_test @ rw + rb
        y_pred = logits.argmax(axis=1).astype(bool)
        y_true = np.array([s.protective for s in fold.test.samples], dtype=bool)
        return y_true, y_pred

    Y_train = encode_labels(fold.train.samples)
    Y01 = (Y_train > 0).astype(float)
    train_fused_classifier(model.head, Z_train, D_train, Y01, "bce", head_cfg)
    h_train, _ = model.head.forward(Z_train, training=False)
    X_train = np.concatenate([h_train, D_train], axis=1) if use_hc else h_train
    glocal_model = fit_glocal(X_train, Y_train, cfg.glocal)
    h_test, _ = model.head.forward(Z_test, training=False)
    X_test = np.concatenate([h_test, D_test], axis=1) if use_hc else h_test
    scores = glocal_model.scores(X_test)
    Y_pred = np.stack([decode_scores(s)[0] for s in scores])
    Y_true = encode_labels(fold.test.samples)
    return Y_true, Y_pred, scores


def _repetition_metrics(folds, cfg, mode, use_hc, rep, task, models=None):
    """Run all folds for one repetition seed and pool the test predictions."""
    if task == "binary":
        y_true_all, y_pred_all = [], []
    else:
        Y_true_all, Y_pred_all, scores_all = [], [], []
    for fi, fold in enumerate(folds):
        seed = _seed_for(cfg.seed, rep, fi)
        model = models[fi] if models is not None else _train_fold_ensemble(fold, cfg, mode, seed)
        out = _fold_predictions(model, fold, cfg, use_hc, seed, task)
        if task == "binary":
            y_true_all.append(out[0])
            y_pred_all.append(out[1])
        else:
            Y_true_all.append(out[0])
            Y_pred_all.append(out[1])
            scores_all.append(out[2])
    if task == "binary":
        return binary_report(np.concatenate(y_true_all), np.concatenate(y_pred_all))
    return multilabel_report(
        np.concatenate(Y_true_all), np.concatenate(Y_pred_all), np.concatenate(scores_all)
    )


def cross_validate(ds, cfg, repetitions=None):
    """LOSO evaluation of the configured pipeline, repeated over seeds.

    Returns an EvalReport with per-metric mean and 95% half-width (reported
    as 0 and flagged when there is a single repetition).
    """
    reps = cfg.repetitions if repetitions is None else repetitions
    if reps < 1:
        raise ValueError("repetitions must be >= 1")
    ds = ds.filter_trial_kind(cfg.trial_kind)
    folds = prepare_folds(ds, cfg, with_features=cfg.use_handcrafted)
    rows = []
    for rep in range(reps):
        rows.append(
            _repetition_metrics(folds, cfg, cfg.mode, cfg.use_handcrafted, rep, cfg.task)
        )
    return EvalReport.from_repetitions(rows)


def ablation_matrix(ds, cfg, repetitions=None):
    """Evaluate the 2x2 ablation grid {SF, IF} x {with, without fused
    hand-crafted features}.

    The two cells of one training framework share the trained ensembles of
    each fold, and every cell shares the per-fold DTW features; only the
    head/classifier stage is retrained per cell.  Returns a dict
    cell name -> EvalReport.
    """
    reps = cfg.repetitions if repetitions is None else repetitions
    ds = ds.filter_trial_kind(cfg.trial_kind)
    folds = prepare_folds(ds, cfg, with_features=True)
    rows = {cell: [] for cell in ABLATION_CELLS}
    for rep in range(reps):
        for mode, tag in (("shared", "SF"), ("independent", "IF")):
            models = [
                _train_fold_ensemble(fold, cfg, mode, _seed_for(cfg.seed, rep, fi))
                for fi, fold in enumerate(folds)
            ]
            for use_hc, hc_tag in ((True, "HC"), (False, "noHC")):
                rows[f"{tag}-{hc_tag}"].append(
                    _repetition_metrics(
                        folds, cfg, mode, use_hc, rep, cfg.task, models=models
                    )
                )
    return {cell: EvalReport.from_repetitions(r) for cell, r in rows.items()}


def majority_baseline_binary(ds, trial_kind="all"):
    """LOSO baseline predicting each fold's training-majority class."""
    ds = ds.filter_trial_kind(trial_kind)
    y_true_all, y_pred_all = [], []
    for train_ds, test_ds in loso_splits(ds):
        frac = np.mean([s.protective for s in train_ds.samples])
        maj = bool(frac > 0.5)
        y_true_all.extend(bool(s.protective) for s in test_ds.samples)
        y_pred_all.extend([maj] * len(test_ds.samples))
    return binary_report(np.array(y_true_all), np.array(y_pred_all))


# ---------------------------------------------------------------------------
# whole-dataset fit + prediction bundle (CLI classify/features commands)

@dataclass
class FittedClassifier:
    """Classifier state stacked on a trained ensemble: the (re)trained head,
    the readout or glocal model, and the fold's feature references."""

    task: str
    use_handcrafted: bool
    head: FusionHead
    references: tuple = None
    bin_range: tuple = None
    feature_bins: int = 16
    dtw_theta: float = 2.0
    readout_w: np.ndarray = None
    readout_b: np.ndarray = None
    glocal_model: GlocalModel = None

    def features(self, model, samples):
        from .dtwfeat import extract_feature_vector

        Z = latent_matrix(model, samples)
        h, _ = self.head.forward(Z, training=False)
        if not self.use_handcrafted:
            return h, None
        delta = np.stack(
            [
                extract_feature_vector(
                    s,
                    self.references,
                    K=self.feature_bins,
                    theta=self.dtw_theta,
                    bin_range=self.bin_range,
                ).as_array()
                for s in samples
            ]
        )
        return np.concatenate([h, delta], axis=1), delta

    def predict_rows(self, model, samples):
        """Prediction dump rows: subject, trial, decoded labels, raw scores."""
        X, _ = self.features(model, samples)
        rows = []
        for i, s in enumerate(samples):
            if self.task == "binary":
                logits = X[i] @ self.readout_w + self.readout_b
                shifted = logits - logits.max()
                probs = np.exp(shifted) / np.exp(shifted).sum()
                rows.append(
                    [s.subject_id, s.trial_id, "", int(logits.argmax()), *probs.tolist()]
                )
            else:
                scores = self.glocal_model.scores(X[i])
                _, pain_idx, protective = decode_scores(scores)
                rows.append(
                    [s.subject_id, s.trial_id, pain_idx, int(protective), *scores.tolist()]
                )
        return rows

    def save(self, path):
        meta = {
            "kind": "classifier",
            "version": 1,
            "task": self.task,
            "use_handcrafted": self.use_handcrafted,
            "feature_bins": self.feature_bins,
            "dtw_theta": self.dtw_theta,
            "bin_range": list(self.bin_range) if self.bin_range else None,
            "has_glocal": self.glocal_model is not None,
        }
        arrays = self.head.arrays("head.")
        if self.references is not None:
            for k, ref in enumerate(self.references):
                arrays[f"ref{k}"] = ref
        if self.readout_w is not None:
            arrays["readout_w"] = self.readout_w
            arrays["readout_b"] = self.readout_b
        if self.glocal_model is not None:
            arrays.update(self.glocal_model.save_arrays("glocal."))
        save_arrays(path, meta, arrays)

    @classmethod
    def load(cls, path, head_template):
        meta, arrays = load_arrays(path)
        if meta.get("kind") != "classifier":
            raise ValueError(f"{path}: not a classifier checkpoint")
        head_template.load_arrays(arrays, "head.")
        refs = None
        if "ref0" in arrays:
            refs = tuple(arrays[f"ref{k}"] for k in range(3))
        obj = cls(
            task=meta["task"],
            use_handcrafted=meta["use_handcrafted"],
            head=head_template,
            references=refs,
            bin_range=tuple(meta["bin_range"]) if meta.get("bin_range") else None,
            feature_bins=meta["feature_bins"],
            dtw_theta=meta["dtw_theta"],
            readout_w=arrays.get("readout_w"),
            readout_b=arrays.get("readout_b"),
        )
        if meta.get("has_glocal"):
            locals_ = []
            j = 1
            while f"glocal.L{j}" in arrays:
                locals_.append(arrays[f"glocal.L{j}"])
                j += 1
            obj.glocal_model = GlocalModel(
                U=arrays["glocal.U"],
                V=arrays["glocal.V"],
                W=arrays["glocal.W"],
                L0=arrays["glocal.L0"],
                locals_=locals_,
                groups=arrays["glocal.groups"],
            )
        return obj


def fit_classifier(model, ds_normalized, cfg, seed=None):
    """Fit the head + classifier on an already-normalized dataset using a
    trained ensemble; returns a FittedClassifier bundle."""
    seed = cfg.seed if seed is None else seed
    samples = ds_normalized.samples
    extractor = None
    delta = None
    if cfg.use_handcrafted:
        extractor = DtwFeatureExtractor(
            K=cfg.feature_bins, theta=cfg.dtw_theta, dba_iterations=cfg.dba_iterations
        )
        delta = extractor.fit_transform(samples)
    Z = latent_matrix(model, samples)
    head_cfg = HeadTrainConfig(epochs=cfg.head_epochs, lr=cfg.head_lr, seed=seed)
    bundle = FittedClassifier(
        task=cfg.task,
        use_handcrafted=cfg.use_handcrafted,
        head=model.head,
        references=extractor.references if extractor else None,
        bin_range=extractor.bin_range if extractor else None,
        feature_bins=cfg.feature_bins,
        dtw_theta=cfg.dtw_theta,
    )
    if cfg.task == "binary":
        y = np.array([s.protective for s in samples], dtype=int)
        if y.min() == y.max():
            raise ValueError("binary task needs both classes in the training data")
        rw, rb, _ = train_fused_classifier(model.head, Z, delta, y, "softmax", head_cfg)
        bundle.readout_w, bundle.readout_b = rw, rb
    else:
        Y = encode_labels(samples)
        train_fused_classifier(model.head, Z, delta, (Y > 0).astype(float), "bce", head_cfg)
        h, _ = model.head.forward(Z, training=False)
        X = np.concatenate([h, delta], axis=1) if cfg.use_handcrafted else h
        bundle.glocal_model = fit_glocal(X, Y, cfg.glocal)
    return bundle

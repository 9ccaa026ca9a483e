"""Data model and dataset utilities for multistream movement trials.

A trial carries three time-aligned streams sampled at the same rate:

* ``s1`` -- 13 joint-angle channels (degrees),
* ``s2`` -- 13 joint angular-energy channels,
* ``s3`` -- 4 surface-EMG channels (normalized amplitude),

plus a self-reported pain level (0..10, forced to 0 for healthy subjects)
and a per-trial protective-behaviour flag.

The module also provides a seeded synthetic generator (a stand-in for
restricted clinical recordings), leave-one-subject-out splitting, and
mini-batch construction where every batch is truncated to its shortest
member instead of padded.
"""

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

S1_DIM = 13
S2_DIM = 13
S3_DIM = 4

TRIAL_KINDS = ("normal", "difficult")

LABEL_HEADER = ["subject_id", "trial_file", "trial_kind", "pain_level", "protective"]
LABEL_INDEX_NAME = "labels.csv"


class DatasetError(ValueError):
    """Raised for malformed trial files, labels, or invalid configurations."""


@dataclass
class MultistreamSample:
    """One trial: three aligned stream matrices plus labels."""

    subject_id: str
    trial_id: str
    trial_kind: str
    s1: np.ndarray  # (C, 13) joint angles
    s2: np.ndarray  # (C, 13) joint energies
    s3: np.ndarray  # (C, 4) sEMG
    pain_level: int
    protective: bool

    def __post_init__(self):
        self.s1 = np.asarray(self.s1, dtype=np.float64)
        self.s2 = np.asarray(self.s2, dtype=np.float64)
        self.s3 = np.asarray(self.s3, dtype=np.float64)
        if self.trial_kind not in TRIAL_KINDS:
            raise DatasetError(f"trial {self.trial_id}: unknown trial_kind {self.trial_kind!r}")
        for name, mat, dim in (("s1", self.s1, S1_DIM), ("s2", self.s2, S2_DIM), ("s3", self.s3, S3_DIM)):
            if mat.ndim != 2 or mat.shape[1] != dim:
                raise DatasetError(
                    f"trial {self.trial_id}: stream {name} has shape {mat.shape}, expected (C, {dim})"
                )
            if not np.all(np.isfinite(mat)):
                raise DatasetError(f"trial {self.trial_id}: stream {name} contains non-finite values")
        C = self.s1.shape[0]
        if self.s2.shape[0] != C or self.s3.shape[0] != C:
            raise DatasetError(
                f"trial {self.trial_id}: stream lengths differ "
                f"({self.s1.shape[0]}, {self.s2.shape[0]}, {self.s3.shape[0]})"
            )
        if C < 2:
            raise DatasetError(f"trial {self.trial_id}: needs at least 2 time steps, got {C}")
        if not (0 <= int(self.pain_level) <= 10):
            raise DatasetError(f"trial {self.trial_id}: pain_level {self.pain_level} outside [0, 10]")
        self.pain_level = int(self.pain_level)
        self.protective = bool(self.protective)

    @property
    def length(self):
        return self.s1.shape[0]

    def streams(self):
        return (self.s1, self.s2, self.s3)


@dataclass
class ChannelStats:
    """Per-channel mean/stddev for each stream; zero-variance channels map to 0."""

    means: tuple  # three arrays (13,), (13,), (4,)
    stds: tuple

    @classmethod
    def fit(cls, samples):
        means, stds = [], []
        for k in range(3):
            stacked = np.concatenate([s.streams()[k] for s in samples], axis=0)
            means.append(stacked.mean(axis=0))
            stds.append(stacked.std(axis=0))
        return cls(means=tuple(means), stds=tuple(stds))

    def apply(self, sample):
        streams = []
        for k, mat in enumerate(sample.streams()):
            sd = self.stds[k]
            out = np.where(sd > 0.0, (mat - self.means[k]) / np.where(sd > 0.0, sd, 1.0), 0.0)
            streams.append(out)
        return replace(sample, s1=streams[0], s2=streams[1], s3=streams[2])

    def invert(self, sample):
        streams = []
        for k, mat in enumerate(sample.streams()):
            streams.append(mat * self.stds[k] + self.means[k])
        return replace(sample, s1=streams[0], s2=streams[1], s3=streams[2])


@dataclass
class Dataset:
    """A collection of trials, optionally carrying the normalization applied to it."""

    samples: list
    channel_stats: ChannelStats = None

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def subjects(self):
        """Distinct subject ids in first-appearance order."""
        seen = []
        for s in self.samples:
            if s.subject_id not in seen:
                seen.append(s.subject_id)
        return seen

    def filter_trial_kind(self, kind):
        """Subset of the dataset with a given trial kind; 'all' keeps everything."""
        if kind in (None, "all"):
            return self
        if kind not in TRIAL_KINDS:
            raise DatasetError(f"unknown trial_kind filter {kind!r}")
        return Dataset([s for s in self.samples if s.trial_kind == kind], self.channel_stats)

    def normalized(self, stats=None):
        """Apply per-channel z-scoring; fits stats on this dataset when not given."""
        if stats is None:
            stats = ChannelStats.fit(self.samples)
        return Dataset([stats.apply(s) for s in self.samples], channel_stats=stats)


# ---------------------------------------------------------------------------
# file ingestion

STREAM_HEADER = (
    ["t"]
    + [f"a{i}" for i in range(1, S1_DIM + 1)]
    + [f"e{i}" for i in range(1, S2_DIM + 1)]
    + [f"m{i}" for i in range(1, S3_DIM + 1)]
)


def _read_trial_file(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty trial file") from None
        header = [h.strip() for h in header]
        if header != STREAM_HEADER:
            raise DatasetError(
                f"{path}: bad header (got {len(header)} columns, expected "
                f"{len(STREAM_HEADER)}: t,a1..a13,e1..e13,m1..m4)"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(STREAM_HEADER):
                raise DatasetError(f"{path}: row {lineno}: {len(row)} columns, expected {len(STREAM_HEADER)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DatasetError(f"{path}: row {lineno}: {exc}") from None
    data = np.asarray(rows, dtype=np.float64)
    if data.size == 0:
        raise DatasetError(f"{path}: no data rows")
    if not np.all(np.isfinite(data)):
        bad = int(np.argwhere(~np.isfinite(data))[0][0]) + 2
        raise DatasetError(f"{path}: row {bad}: non-finite value")
    t = data[:, 0]
    if np.any(np.diff(t) <= 0):
        bad = int(np.argwhere(np.diff(t) <= 0)[0][0]) + 3
        raise DatasetError(f"{path}: row {bad}: time column not strictly ascending")
    s1 = data[:, 1 : 1 + S1_DIM]
    s2 = data[:, 1 + S1_DIM : 1 + S1_DIM + S2_DIM]
    s3 = data[:, 1 + S1_DIM + S2_DIM :]
    return s1, s2, s3


def load_dataset(root_path, normalize=True):
    """Load a trial directory (label index + per-trial stream CSVs).

    With ``normalize=True`` (the default) the returned dataset is z-scored
    per channel using its own statistics, which are recorded in
    ``channel_stats``.  Pipelines that split by subject should load with
    ``normalize=False`` and fit statistics on the training fold only.
    """
    index_path = os.path.join(root_path, LABEL_INDEX_NAME)
    if not os.path.isfile(index_path):
        raise DatasetError(f"{index_path}: label index file missing")
    samples = []
    with open(index_path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != LABEL_HEADER:
            raise DatasetError(f"{index_path}: bad header {header}, expected {LABEL_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LABEL_HEADER):
                raise DatasetError(f"{index_path}: row {lineno}: expected {len(LABEL_HEADER)} fields")
            subject_id, trial_file, trial_kind, pain_s, prot_s = [v.strip() for v in row]
            if trial_kind not in TRIAL_KINDS:
                raise DatasetError(f"{index_path}: row {lineno}: trial_kind {trial_kind!r}")
            try:
                pain = int(pain_s)
            except ValueError:
                raise DatasetError(f"{index_path}: row {lineno}: pain_level {pain_s!r}") from None
            if not 0 <= pain <= 10:
                raise DatasetError(f"{index_path}: row {lineno}: pain_level {pain} outside [0, 10]")
            if prot_s not in ("0", "1"):
                raise DatasetError(f"{index_path}: row {lineno}: protective must be 0 or 1, got {prot_s!r}")
            trial_path = os.path.join(root_path, trial_file)
            if not os.path.isfile(trial_path):
                raise DatasetError(f"{index_path}: row {lineno}: trial file {trial_path} missing")
            s1, s2, s3 = _read_trial_file(trial_path)
            samples.append(
                MultistreamSample(
                    subject_id=subject_id,
                    trial_id=trial_file,
                    trial_kind=trial_kind,
                    s1=s1,
                    s2=s2,
                    s3=s3,
                    pain_level=pain,
                    protective=prot_s == "1",
                )
            )
    if not samples:
        raise DatasetError(f"{root_path}: no trials listed in {LABEL_INDEX_NAME}")
    ds = Dataset(samples)
    return ds.normalized() if normalize else ds


def write_dataset(ds, root_path, fmt="%.17g"):
    """Write a dataset in the directory format read by :func:`load_dataset`."""
    os.makedirs(root_path, exist_ok=True)
    with open(os.path.join(root_path, LABEL_INDEX_NAME), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_HEADER)
        for s in ds.samples:
            writer.writerow([s.subject_id, s.trial_id, s.trial_kind, s.pain_level, int(s.protective)])
    for s in ds.samples:
        path = os.path.join(root_path, s.trial_id)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(STREAM_HEADER) + "\n")
            block = np.concatenate([np.arange(s.length)[:, None], s.s1, s.s2, s.s3], axis=1)
            for row in block:
                fh.write(",".join(fmt % v for v in row) + "\n")


# ---------------------------------------------------------------------------
# synthetic data

@dataclass
class SynthConfig:
    """Configuration for the synthetic trial generator."""

    n_subjects: int = 6
    trials_per_subject: int = 4
    length_range: tuple = (40, 60)
    noise_scale: float = 0.1
    seed: int = 0

    def validate(self):
        if self.n_subjects < 2:
            raise DatasetError(f"n_subjects must be >= 2 (LOSO undefined), got {self.n_subjects}")
        if self.trials_per_subject < 1:
            raise DatasetError("trials_per_subject must be >= 1")
        lo, hi = self.length_range
        if lo < 10 or hi < lo:
            raise DatasetError(f"length_range must satisfy 10 <= min <= max, got {self.length_range}")
        if self.noise_scale < 0:
            raise DatasetError("noise_scale must be >= 0")


def synthesize_dataset(cfg):
    """Generate a deterministic synthetic dataset of movement trials.

    Even-indexed subjects are "healthy" (pain 0, never protective); odd
    subjects carry chronic pain and produce protective trials with reduced
    range of motion and an elevated sEMG baseline.  Every signal is a sum
    of two sinusoids with class- and subject-dependent amplitude/phase plus
    seeded Gaussian noise, so the classes are separable but not trivial.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.length_range
    samples = []
    for subj in range(cfg.n_subjects):
        is_cp = subj % 2 == 1
        subject_id = f"S{subj:02d}"
        # subject-level traits: baseline pain severity and personal style offsets
        severity = float(rng.uniform(0.4, 1.0)) if is_cp else 0.0
        style_phase = rng.uniform(0.0, 2 * np.pi, size=S1_DIM)
        style_gain = rng.uniform(0.9, 1.1, size=S1_DIM)
        for trial in range(cfg.trials_per_subject):
            kind = TRIAL_KINDS[trial % 2]
            C = int(rng.integers(lo, hi + 1))
            protective = bool(is_cp and rng.random() < 0.8)
            amp_factor = 1.0 - 0.5 * severity if protective else 1.0
            difficulty = 1.15 if kind == "difficult" else 1.0
            t = np.linspace(0.0, 2 * np.pi, C)[:, None]
            freqs = 1.0 + np.arange(S1_DIM) * 0.15
            # joint angles: two sinusoids per channel, protective trials shrink motion range
            base = 30.0 * amp_factor * difficulty * style_gain
            angles = base * np.sin(freqs * t + style_phase) + 0.3 * base * np.sin(
                2.3 * freqs * t + 0.7 * style_phase
            )
            angles = angles + rng.normal(0.0, cfg.noise_scale * 10.0, size=angles.shape)
            # angular energies follow the squared angle velocity
            vel = np.vstack([np.zeros((1, S1_DIM)), np.diff(angles, axis=0)])
            energies = vel**2 + rng.normal(0.0, cfg.noise_scale, size=vel.shape) ** 2
            # sEMG: protective trials carry an elevated tonic baseline
            emg_base = 0.5 + 0.35 * severity if protective else 0.2
            burst = 0.25 * np.abs(np.sin(2.0 * t + style_phase[:S3_DIM]))
            emg = emg_base + burst * difficulty
            emg = emg + rng.normal(0.0, cfg.noise_scale * 0.1, size=emg.shape)
            if is_cp:
                pain = int(np.clip(round(10 * severity * (0.8 if not protective else 1.0)), 1, 10))
            else:
                pain = 0
            samples.append(
                MultistreamSample(
                    subject_id=subject_id,
                    trial_id=f"{subject_id}_T{trial:02d}.csv",
                    trial_kind=kind,
                    s1=angles,
                    s2=energies,
                    s3=emg,
                    pain_level=pain,
                    protective=protective,
                )
            )
    return Dataset(samples)


# ---------------------------------------------------------------------------
# splitting and batching

def loso_splits(ds):
    """Leave-one-subject-out folds: one (train, test) pair per subject."""
    subjects = sorted(ds.subjects())
    if len(subjects) < 2:
        raise DatasetError(f"LOSO needs at least 2 subjects, dataset has {len(subjects)}")
    folds = []
    for subj in subjects:
        train = [s for s in ds.samples if s.subject_id != subj]
        test = [s for s in ds.samples if s.subject_id == subj]
        folds.append((Dataset(train, ds.channel_stats), Dataset(test, ds.channel_stats)))
    return folds


@dataclass
class MiniBatch:
    """Samples truncated to a common length with stacked stream arrays."""

    samples: list
    length: int
    s1: np.ndarray = field(default=None)  # (B, C_min, 13)
    s2: np.ndarray = field(default=None)
    s3: np.ndarray = field(default=None)

    @classmethod
    def from_samples(cls, samples):
        length = min(s.length for s in samples)
        truncated = [
            replace(s, s1=s.s1[:length], s2=s.s2[:length], s3=s.s3[:length]) for s in samples
        ]
        return cls(
            samples=truncated,
            length=length,
            s1=np.stack([s.s1 for s in truncated]),
            s2=np.stack([s.s2 for s in truncated]),
            s3=np.stack([s.s3 for s in truncated]),
        )

    def streams(self):
        return (self.s1, self.s2, self.s3)

    def __len__(self):
        return len(self.samples)


def make_minibatches(ds, batch_size, seed):
    """Shuffle deterministically, chunk, and truncate each chunk to its shortest member."""
    if batch_size < 1:
        raise DatasetError(f"batch_size must be >= 1, got {batch_size}")
    if len(ds) == 0:
        raise DatasetError("cannot batch an empty dataset")
    order = np.random.default_rng(seed).permutation(len(ds.samples))
    shuffled = [ds.samples[i] for i in order]
    return [
        MiniBatch.from_samples(shuffled[i : i + batch_size])
        for i in range(0, len(shuffled), batch_size)
    ]

import numpy as np
import pytest

import painmotion as pm
from painmotion.dataset import (
    ChannelStats,
    DatasetError,
    MiniBatch,
    MultistreamSample,
    load_dataset,
    loso_splits,
    make_minibatches,
    synthesize_dataset,
    write_dataset,
)


def _sample(subject="A", trial="t0.csv", C=10, kind="normal", pain=0, protective=False, seed=0):
    rng = np.random.default_rng(seed)
    return MultistreamSample(
        subject_id=subject,
        trial_id=trial,
        trial_kind=kind,
        s1=rng.normal(size=(C, 13)),
        s2=rng.normal(size=(C, 13)),
        s3=rng.normal(size=(C, 4)),
        pain_level=pain,
        protective=protective,
    )


# -- sample validation --------------------------------------------------------

def test_sample_rejects_column_mismatch():
    rng = np.random.default_rng(0)
    with pytest.raises(DatasetError, match="s1"):
        MultistreamSample("A", "t", "normal", rng.normal(size=(5, 12)),
                          rng.normal(size=(5, 13)), rng.normal(size=(5, 4)), 0, False)


def test_sample_rejects_nonfinite_and_bad_pain():
    rng = np.random.default_rng(0)
    s1 = rng.normal(size=(5, 13))
    s1[2, 3] = np.nan
    with pytest.raises(DatasetError, match="non-finite"):
        MultistreamSample("A", "t", "normal", s1, rng.normal(size=(5, 13)),
                          rng.normal(size=(5, 4)), 0, False)
    with pytest.raises(DatasetError, match="pain_level"):
        _sample(pain=11)


def test_sample_rejects_length_mismatch():
    rng = np.random.default_rng(0)
    with pytest.raises(DatasetError, match="lengths differ"):
        MultistreamSample("A", "t", "normal", rng.normal(size=(5, 13)),
                          rng.normal(size=(6, 13)), rng.normal(size=(5, 4)), 0, False)


# -- file round trip ----------------------------------------------------------

def test_load_dataset_round_trip(tmp_path, tiny_dataset):
    root = tmp_path / "data"
    write_dataset(tiny_dataset, root)
    ds = load_dataset(root, normalize=False)
    assert len(ds) == len(tiny_dataset)
    assert sorted(ds.subjects()) == sorted(tiny_dataset.subjects())
    by_id = {s.trial_id: s for s in ds}
    for orig in tiny_dataset:
        got = by_id[orig.trial_id]
        np.testing.assert_array_equal(got.s1, orig.s1)
        np.testing.assert_array_equal(got.s3, orig.s3)
        assert got.pain_level == orig.pain_level
        assert got.protective == orig.protective


def test_load_dataset_counts(tmp_path):
    samples = [
        _sample("A", "a0.csv", seed=1), _sample("A", "a1.csv", seed=2),
        _sample("B", "b0.csv", seed=3), _sample("B", "b1.csv", seed=4),
    ]
    write_dataset(pm.Dataset(samples), tmp_path / "d")
    ds = load_dataset(tmp_path / "d")
    assert len(ds) == 4
    assert len(ds.subjects()) == 2


def test_load_dataset_bad_column_count_names_file(tmp_path):
    root = tmp_path / "d"
    write_dataset(pm.Dataset([_sample("A", "a0.csv"), _sample("B", "b0.csv", seed=1)]), root)
    bad = root / "a0.csv"
    lines = bad.read_text().splitlines()
    header = lines[0].split(",")
    bad.write_text("\n".join([",".join(header[:-1])] + [l.rsplit(",", 1)[0] for l in lines[1:]]) + "\n")
    with pytest.raises(DatasetError, match="a0.csv"):
        load_dataset(root)


def test_load_dataset_nonfinite_reports_row(tmp_path):
    root = tmp_path / "d"
    write_dataset(pm.Dataset([_sample("A", "a0.csv"), _sample("B", "b0.csv", seed=1)]), root)
    bad = root / "a0.csv"
    lines = bad.read_text().splitlines()
    parts = lines[3].split(",")
    parts[2] = "nan"
    lines[3] = ",".join(parts)
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match=r"a0.csv.*row 4"):
        load_dataset(root)


def test_load_dataset_label_out_of_range(tmp_path):
    root = tmp_path / "d"
    write_dataset(pm.Dataset([_sample("A", "a0.csv"), _sample("B", "b0.csv", seed=1)]), root)
    idx = root / "labels.csv"
    text = idx.read_text().replace("A,a0.csv,normal,0,0", "A,a0.csv,normal,12,0")
    idx.write_text(text)
    with pytest.raises(DatasetError, match="pain_level"):
        load_dataset(root)


def test_constant_channel_normalizes_to_zero():
    s = _sample(C=8)
    s.s3[:, 1] = 5.0  # zero-variance channel
    stats = ChannelStats.fit([s])
    out = stats.apply(s)
    np.testing.assert_array_equal(out.s3[:, 1], np.zeros(8))
    assert np.all(np.isfinite(out.s3))


def test_normalization_invertible_where_std_positive(tiny_dataset):
    stats = ChannelStats.fit(tiny_dataset.samples)
    for s in tiny_dataset.samples[:4]:
        back = stats.invert(stats.apply(s))
        for k in range(3):
            sd = stats.stds[k]
            orig = s.streams()[k]
            rec = back.streams()[k]
            np.testing.assert_allclose(rec[:, sd > 0], orig[:, sd > 0], atol=1e-10)


# -- synthetic generation -----------------------------------------------------

def test_synthesize_deterministic():
    cfg = pm.SynthConfig(n_subjects=3, trials_per_subject=2, length_range=(12, 16), seed=9)
    a = synthesize_dataset(cfg)
    b = synthesize_dataset(cfg)
    assert len(a) == len(b) == 6
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa.s1, sb.s1)
        np.testing.assert_array_equal(sa.s2, sb.s2)
        np.testing.assert_array_equal(sa.s3, sb.s3)
        assert (sa.pain_level, sa.protective) == (sb.pain_level, sb.protective)


def test_synthesize_rejects_single_subject():
    with pytest.raises(DatasetError, match="n_subjects"):
        synthesize_dataset(pm.SynthConfig(n_subjects=1))


def test_synthesize_rejects_bad_lengths():
    with pytest.raises(DatasetError, match="length_range"):
        synthesize_dataset(pm.SynthConfig(length_range=(5, 20)))


def test_noise_free_classes_separable_by_mean_semg():
    ds = synthesize_dataset(
        pm.SynthConfig(n_subjects=6, trials_per_subject=4, length_range=(20, 30),
                       noise_scale=0.0, seed=3)
    )
    means = np.array([s.s3.mean() for s in ds])
    prot = np.array([s.protective for s in ds])
    assert prot.any() and (~prot).any()
    # threshold sweep: some threshold classifies every trial correctly
    order = np.argsort(means)
    sorted_prot = prot[order]
    split = np.argmax(sorted_prot)  # first protective index after sorting
    assert sorted_prot[split:].all() and not sorted_prot[:split].any()


def test_healthy_subjects_pain_zero(tiny_dataset):
    for s in tiny_dataset:
        if int(s.subject_id[1:]) % 2 == 0:  # even-indexed subjects are healthy
            assert s.pain_level == 0 and not s.protective
        else:
            assert 1 <= s.pain_level <= 10


# -- LOSO ---------------------------------------------------------------------

def test_loso_one_fold_per_subject():
    ds = synthesize_dataset(pm.SynthConfig(n_subjects=5, trials_per_subject=2, length_range=(12, 14), seed=0))
    folds = loso_splits(ds)
    assert len(folds) == 5


def test_loso_no_leakage_and_partition(tiny_dataset):
    folds = loso_splits(tiny_dataset)
    seen = []
    for train, test in folds:
        test_subjects = set(s.subject_id for s in test)
        assert len(test_subjects) == 1
        assert test_subjects.isdisjoint(s.subject_id for s in train)
        seen.extend(s.trial_id for s in test)
    assert sorted(seen) == sorted(s.trial_id for s in tiny_dataset)


def test_loso_single_subject_errors():
    ds = pm.Dataset([_sample("A", "a0.csv"), _sample("A", "a1.csv", seed=1)])
    with pytest.raises(DatasetError, match="2 subjects"):
        loso_splits(ds)


# -- mini-batches -------------------------------------------------------------

def test_minibatch_truncates_to_shortest():
    samples = [_sample("A", f"t{i}.csv", C=C, seed=i) for i, C in enumerate([100, 80, 120])]
    mb = MiniBatch.from_samples(samples)
    assert mb.length == 80
    assert mb.s1.shape == (3, 80, 13)
    # prefix kept, never padded
    np.testing.assert_array_equal(mb.samples[0].s1, samples[0].s1[:80])


def test_minibatch_single_element_no_truncation():
    s = _sample(C=37)
    batches = make_minibatches(pm.Dataset([s]), batch_size=1, seed=0)
    assert len(batches) == 1 and batches[0].length == 37


def test_minibatch_seed_determinism(tiny_dataset):
    a = make_minibatches(tiny_dataset, 4, seed=11)
    b = make_minibatches(tiny_dataset, 4, seed=11)
    assert [s.trial_id for mb in a for s in mb.samples] == [
        s.trial_id for mb in b for s in mb.samples
    ]


def test_minibatch_rejects_empty_and_bad_batch_size(tiny_dataset):
    with pytest.raises(DatasetError):
        make_minibatches(pm.Dataset([]), 4, seed=0)
    with pytest.raises(DatasetError):
        make_minibatches(tiny_dataset, 0, seed=0)


def test_truncation_exact_over_random_batches():
    rng = np.random.default_rng(4)
    for _ in range(20):
        lengths = rng.integers(5, 40, size=int(rng.integers(1, 6)))
        samples = [_sample("A", f"t{i}.csv", C=int(C), seed=int(C) + i) for i, C in enumerate(lengths)]
        mb = MiniBatch.from_samples(samples)
        assert mb.length == int(lengths.min())
        assert all(s.length == mb.length for s in mb.samples)

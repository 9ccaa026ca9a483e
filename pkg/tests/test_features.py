import numpy as np
import pytest

import painmotion as pm
from painmotion.dtwfeat import (
    DtwFeatureExtractor,
    composite_features,
    discretize,
    export_feature_cdf,
    extract_feature_vector,
    lz76_complexity,
    lz76_phrase_count,
    renyi_entropy,
    sample_group,
    shannon_entropy,
    simpson_diversity,
)


def _entropy_oracle(p):
    """Direct summation, independently of the library path."""
    total = 0.0
    for q in p:
        if q > 0:
            total -= q * np.log(q)
    return total


# -- discretization -----------------------------------------------------------

def test_discretize_uniform_cells():
    vals = np.array([0.0, 1.0, 2.0, 3.0])
    dist = discretize(vals, 4)
    np.testing.assert_allclose(dist.p, [0.25, 0.25, 0.25, 0.25])


def test_discretize_constant_collapses_to_single_bin():
    dist = discretize(np.full(10, 3.3), 5)
    np.testing.assert_array_equal(dist.p, [1.0, 0, 0, 0, 0])


def test_discretize_normalized():
    rng = np.random.default_rng(0)
    dist = discretize(rng.normal(size=1000), 16)
    assert abs(dist.p.sum() - 1.0) <= 1e-12


def test_discretize_rejects_bad_k():
    with pytest.raises(ValueError):
        discretize(np.ones(4), 1)


def test_discretize_fixed_range_clips():
    dist = discretize(np.array([-5.0, 0.5, 10.0]), 4, value_range=(0.0, 1.0))
    assert dist.symbols.tolist() == [0, 2, 3]


# -- entropy family -----------------------------------------------------------

def test_shannon_uniform_maximum():
    assert shannon_entropy(np.full(4, 0.25)) == pytest.approx(np.log(4), abs=1e-15)


def test_shannon_degenerate_zero():
    assert shannon_entropy(np.array([1.0, 0.0, 0.0])) == 0.0


def test_shannon_derived_value():
    p = np.array([0.5, 0.25, 0.25])
    assert shannon_entropy(p) == pytest.approx(_entropy_oracle(p), abs=1e-15)
    assert shannon_entropy(p) == pytest.approx(1.039721, abs=1e-6)


def test_renyi_uniform_any_order():
    for q in (0.5, 2.0, 3.0):
        assert renyi_entropy(np.full(8, 0.125), q) == pytest.approx(np.log(8), abs=1e-12)


def test_renyi_derived_value():
    p = np.array([0.5, 0.25, 0.25])
    assert renyi_entropy(p, 2.0) == pytest.approx(-np.log(0.375), abs=1e-15)
    assert renyi_entropy(p, 2.0) == pytest.approx(0.980829, abs=1e-6)


def test_renyi_rejects_order_one_and_nonpositive():
    with pytest.raises(ValueError):
        renyi_entropy(np.array([0.5, 0.5]), 1)
    with pytest.raises(ValueError):
        renyi_entropy(np.array([0.5, 0.5]), -2)


def test_simpson_values():
    assert simpson_diversity(np.full(4, 0.25)) == pytest.approx(0.25, abs=1e-15)
    assert simpson_diversity(np.array([1.0, 0.0])) == 1.0
    assert simpson_diversity(np.array([0.5, 0.25, 0.25])) == pytest.approx(0.375, abs=1e-15)


def test_renyi2_is_negative_log_simpson():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = rng.dirichlet(np.ones(int(rng.integers(2, 12))))
        assert renyi_entropy(p, 2.0) == pytest.approx(-np.log(simpson_diversity(p)), abs=1e-12)


def test_shannon_bounded_by_log_k():
    rng = np.random.default_rng(2)
    for _ in range(200):
        k = int(rng.integers(2, 12))
        p = rng.dirichlet(np.ones(k))
        h = shannon_entropy(p)
        assert -1e-12 <= h <= np.log(k) + 1e-12


# -- Lempel-Ziv ---------------------------------------------------------------

def test_lz76_constant_sequence():
    # all-equal binarizes to the all-zeros string: 2 phrases
    assert lz76_phrase_count(np.zeros(64, dtype=bool)) == 2
    assert lz76_complexity(np.full(64, 7.0)) == pytest.approx(2 * 6 / 64, abs=1e-15)


def test_lz76_alternating_small_phrase_count():
    # canonical exhaustive parse of a strictly alternating string: 3 phrases
    bits = np.tile([False, True], 32)
    assert lz76_phrase_count(bits) == 3
    vals = np.tile([0.0, 1.0], 32)
    assert lz76_complexity(vals) == pytest.approx(3 * 6 / 64, abs=1e-15)
    # periodic strings stay far below random-string complexity
    assert lz76_complexity(vals) < 0.5


def test_lz76_random_near_one():
    rng = np.random.default_rng(42)
    vals = rng.choice([-1.0, 1.0], size=4096)
    assert 0.8 <= lz76_complexity(vals) <= 1.0


def test_lz76_self_concatenation_bound():
    rng = np.random.default_rng(3)
    for _ in range(50):
        bits = rng.integers(0, 2, size=int(rng.integers(8, 80))).astype(bool)
        assert lz76_phrase_count(np.concatenate([bits, bits])) <= lz76_phrase_count(bits) + 2


def test_lz76_rejects_short():
    with pytest.raises(ValueError):
        lz76_complexity(np.array([1.0]))


# -- composites ---------------------------------------------------------------

def test_composites_all_nonzero():
    d1 = 1.2
    d4, d5, d7, d8 = composite_features(d1, 0.4, np.array([1.0, -2.0, 0.5]), 0.6)
    assert d4 == 1.0
    assert d5 == d1
    assert d7 == pytest.approx(0.6 / 1.2)
    assert d8 == pytest.approx(np.exp(1.2))


def test_composites_degenerate_constant_sequence():
    # constant zero residuals: d1 = 0 -> d7 = 0, d8 = 1; d4 = 0 -> d5 = 0
    d4, d5, d7, d8 = composite_features(0.0, 1.0, np.zeros(5), 0.1875)
    assert (d4, d5, d7) == (0.0, 0.0, 0.0)
    assert d8 == 1.0


def test_composites_uniform_symbols_hill_number():
    for k in (2, 4, 16):
        d1 = np.log(k)
        _, _, _, d8 = composite_features(d1, 1.0 / k, np.ones(k), 0.5)
        assert d8 == pytest.approx(k, rel=1e-12)


# -- per-trial extraction -----------------------------------------------------

def _refs_for(sample):
    return tuple(s.copy() for s in sample.streams())


def test_extract_identical_to_reference_degenerate_chain(tiny_dataset):
    s = tiny_dataset.samples[0]
    f = extract_feature_vector(s, _refs_for(s))
    assert f.d1 == 0.0
    assert f.d3 == 1.0
    assert f.d4 == 0.0
    assert f.d8 == 1.0


def test_extract_vector_length_8(tiny_dataset):
    s0, s1 = tiny_dataset.samples[:2]
    f = extract_feature_vector(s0, _refs_for(s1))
    assert f.as_array().shape == (8,)


def test_extract_deterministic(tiny_dataset):
    s0, s1 = tiny_dataset.samples[:2]
    a = extract_feature_vector(s0, _refs_for(s1)).as_array()
    b = extract_feature_vector(s0, _refs_for(s1)).as_array()
    np.testing.assert_array_equal(a, b)


def test_extractor_fit_transform_shapes(tiny_dataset):
    ex = DtwFeatureExtractor(dba_iterations=3)
    F = ex.fit_transform(tiny_dataset.samples)
    assert F.shape == (len(tiny_dataset), 8)
    assert np.all(np.isfinite(F))
    F2 = ex.transform(tiny_dataset.samples[:2])
    np.testing.assert_array_equal(F2, F[:2])


# -- CDF export ---------------------------------------------------------------

def test_cdf_reaches_one_with_n_steps():
    rows = export_feature_cdf({"g": np.random.default_rng(0).normal(size=(5, 8))})
    d1_rows = [r for r in rows if r[0] == "d1"]
    assert len(d1_rows) == 5
    assert d1_rows[-1][3] == 1.0
    assert all(a[2] <= b[2] for a, b in zip(d1_rows, d1_rows[1:]))


def test_cdf_identical_values_single_step():
    feats = np.tile([[1.0] * 8], (4, 1))
    rows = export_feature_cdf({"g": feats})
    d2_rows = [r for r in rows if r[0] == "d2"]
    assert all(r[2] == 1.0 for r in d2_rows)
    assert d2_rows[-1][3] == 1.0


def test_cdf_empty_group_warns():
    with pytest.warns(UserWarning, match="empty"):
        rows = export_feature_cdf({"g": np.empty((0, 8)), "h": np.ones((2, 8))})
    assert all(r[1] == "h" for r in rows)


def test_protective_groups_separate_in_d1():
    # KS statistic between protective/non-protective d1 CDFs (frozen bound)
    from scipy.stats import ks_2samp

    ds = pm.synthesize_dataset(
        pm.SynthConfig(n_subjects=6, trials_per_subject=4, length_range=(30, 45),
                       noise_scale=0.1, seed=1)
    ).normalized()
    F = DtwFeatureExtractor(dba_iterations=5).fit_transform(ds.samples)
    prot = np.array([s.protective for s in ds])
    stat = ks_2samp(F[prot, 0], F[~prot, 0]).statistic
    assert stat > 0.2


def test_sample_group_names(tiny_dataset):
    names = {sample_group(s) for s in tiny_dataset}
    assert names <= {"healthy_normal", "healthy_difficult", "cp_normal", "cp_difficult"}

import numpy as np
import pytest

from painmotion.metrics import (
    EvalReport,
    coverage,
    example_based_accuracy,
    f_measure_multilabel,
    hamming_loss,
    precision_recall_f1_binary,
    ranking_loss,
    ranks_from_scores,
)


def _rank_oracle(scores):
    """Brute-force ranks: count of strictly larger scores plus index-order ties."""
    l = scores.size
    ranks = np.zeros(l, dtype=int)
    for a in range(l):
        r = 1
        for b in range(l):
            if scores[b] > scores[a] or (scores[b] == scores[a] and b < a):
                r += 1
        ranks[a] = r
    return ranks


def _coverage_oracle(y, scores):
    ranks = _rank_oracle(scores)
    return max(ranks[j] for j in range(y.size) if y[j] > 0) - 1


def _ranking_loss_oracle(y, scores):
    rel = [j for j in range(y.size) if y[j] > 0]
    irr = [j for j in range(y.size) if y[j] <= 0]
    ranks = _rank_oracle(scores)
    bad = sum(1 for a in rel for b in irr if ranks[a] > ranks[b])
    return bad / (len(rel) * len(irr))


# -- hamming ------------------------------------------------------------------

def test_hamming_perfect_and_inverted():
    Y = np.array([[1, -1, 1, -1], [-1, -1, 1, 1]])
    assert hamming_loss(Y, Y) == 0.0
    assert hamming_loss(Y, -Y) == 1.0


def test_hamming_single_flip():
    Y = np.array([[1, -1, -1, -1]])
    P = np.array([[1, 1, -1, -1]])
    assert hamming_loss(Y, P) == 0.25


def test_hamming_shape_mismatch():
    with pytest.raises(ValueError):
        hamming_loss(np.ones((2, 3)), np.ones((2, 4)))


# -- coverage -----------------------------------------------------------------

def test_coverage_perfect_ranking():
    Y = np.array([[1, 1, -1, -1]])
    S = np.array([[4.0, 3.0, 2.0, 1.0]])
    assert coverage(Y, S) == 1.0  # |Y| - 1


def test_coverage_single_relevant_ranked_last():
    Y = np.array([[-1, -1, -1, 1]])
    S = np.array([[4.0, 3.0, 2.0, 1.0]])
    assert coverage(Y, S) == 3.0  # l - 1


def test_coverage_example_l3():
    Y = np.array([[1, -1, 1]])
    S = np.array([[5.0, 1.0, 4.0]])
    assert coverage(Y, S) == 1.0


def test_coverage_skips_empty_with_warning():
    Y = np.array([[1, -1], [-1, -1]])
    S = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.warns(UserWarning, match="no relevant"):
        assert coverage(Y, S) == 0.0


# -- ranking loss -------------------------------------------------------------

def test_ranking_loss_perfect_and_inverted():
    Y = np.array([[1, 1, -1, -1]])
    S_good = np.array([[4.0, 3.0, 2.0, 1.0]])
    S_bad = np.array([[1.0, 2.0, 3.0, 4.0]])
    assert ranking_loss(Y, S_good) == 0.0
    assert ranking_loss(Y, S_bad) == 1.0


def test_ranking_loss_half():
    Y = np.array([[1, 1, -1]])
    S = np.array([[3.0, 1.0, 2.0]])  # one of two pairs misordered
    assert ranking_loss(Y, S) == 0.5


def test_rank_and_pair_oracles_random():
    rng = np.random.default_rng(0)
    for _ in range(300):
        l = int(rng.integers(2, 7))
        y = np.where(rng.random(l) < 0.5, 1, -1)
        s = np.round(rng.normal(size=l), 1)  # rounded to force ties
        np.testing.assert_array_equal(ranks_from_scores(s)[0], _rank_oracle(s))
        if (y > 0).any():
            assert coverage(y[None], s[None]) == _coverage_oracle(y, s)
        if (y > 0).any() and (y < 0).any():
            assert ranking_loss(y[None], s[None]) == pytest.approx(_ranking_loss_oracle(y, s))


# -- set metrics --------------------------------------------------------------

def test_eba_extremes_and_third():
    Y = np.array([[1, 1, -1]])
    assert example_based_accuracy(Y, Y) == 1.0
    assert example_based_accuracy(Y, np.array([[-1, -1, 1]])) == 0.0
    Y2 = np.array([[1, 1, -1, -1]])
    P2 = np.array([[1, -1, 1, -1]])  # |I|=1, |U|=3
    assert example_based_accuracy(Y2, P2) == pytest.approx(1.0 / 3.0)


def test_eba_empty_sets_count_as_one():
    Y = np.array([[-1, -1]])
    assert example_based_accuracy(Y, Y) == 1.0


def test_f_measure_values():
    Y = np.array([[1, 1, -1, -1]])
    assert f_measure_multilabel(Y, Y) == 100.0
    assert f_measure_multilabel(Y, -Y) == 0.0
    P = np.array([[1, -1, 1, -1]])  # |I|=1, |Y|=|P|=2
    assert f_measure_multilabel(Y, P) == pytest.approx(50.0)


def test_metrics_permutation_invariant():
    rng = np.random.default_rng(1)
    Y = np.where(rng.random((8, 5)) < 0.5, 1, -1)
    Y[0] = 1  # make sure at least one relevant everywhere
    P = np.where(rng.random((8, 5)) < 0.5, 1, -1)
    S = rng.normal(size=(8, 5))
    perm = rng.permutation(8)
    assert hamming_loss(Y, P) == hamming_loss(Y[perm], P[perm])
    assert example_based_accuracy(Y, P) == pytest.approx(example_based_accuracy(Y[perm], P[perm]))
    assert f_measure_multilabel(Y, P) == pytest.approx(f_measure_multilabel(Y[perm], P[perm]))
    assert ranking_loss(Y, S) == pytest.approx(ranking_loss(Y[perm], S[perm]))


# -- binary counts ------------------------------------------------------------

def test_binary_perfect():
    assert precision_recall_f1_binary(10, 0, 0) == (1.0, 1.0, 1.0)


def test_binary_zero_tp():
    assert precision_recall_f1_binary(0, 3, 2) == (0.0, 0.0, 0.0)


def test_binary_derived_operating_point():
    p, r, f1 = precision_recall_f1_binary(62, 10, 14)
    assert p == pytest.approx(0.8611, abs=5e-5)
    assert r == pytest.approx(0.8158, abs=5e-5)
    assert f1 == pytest.approx(0.8378, abs=5e-5)


def test_binary_rejects_negative():
    with pytest.raises(ValueError):
        precision_recall_f1_binary(-1, 0, 0)


# -- report aggregation -------------------------------------------------------

def test_report_single_repetition_flagged():
    rep = EvalReport.from_repetitions([{"F1": 0.9}])
    assert rep.degenerate_ci
    assert rep.half_width["F1"] == 0.0


def test_report_constant_metric_zero_half_width():
    rep = EvalReport.from_repetitions([{"F1": 0.8}, {"F1": 0.8}, {"F1": 0.8}])
    assert not rep.degenerate_ci
    assert rep.half_width["F1"] == 0.0


def test_report_mean_within_min_max():
    rows = [{"HL": v} for v in (0.1, 0.3, 0.2)]
    rep = EvalReport.from_repetitions(rows)
    assert 0.1 <= rep.mean["HL"] <= 0.3
    assert rep.half_width["HL"] == pytest.approx(1.96 * np.std([0.1, 0.3, 0.2], ddof=1) / np.sqrt(3))

"""Dynamic time warping, barycenter references, and complexity features.

Trials of different durations are compared by aligning each stream against
a barycenter reference built from the training fold; the magnitudes of the
aligned residuals form one sequence per trial, from which eight
information-theoretic descriptors are computed:

d1  Shannon entropy (natural log) of the binned residual distribution
d2  Renyi entropy of order q (q = 2 in the pipeline)
d3  Simpson diversity (sum of squared bin probabilities)
d4  space filling: fraction of residual entries that are non-zero
d5  expressiveness: d1 / d4 ("economy of diversity")
d6  normalized Lempel-Ziv complexity of the median-binarized residuals
d7  perturbation complexity index: d6 / d1
d8  diversity index: exp(d1), the effective number of symbol categories
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

_ZERO_TOL = 1e-12


# ---------------------------------------------------------------------------
# dynamic time warping

@dataclass
class AlignmentResult:
    """Distance, accumulated raw step cost, and the optimal warping path.

    The path is a list of 0-based index pairs from (0, 0) to (m-1, n-1),
    monotone in both coordinates with steps (1,0), (0,1) or (1,1).
    """

    distance: float
    raw_cost: float
    path: list


def _as_2d(seq):
    a = np.asarray(seq, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    return a


def dtw(a, b, theta=2.0):
    """Align two sequences of vectors under squared-Euclidean step cost.

    The reported distance is the minimal accumulated cost raised to
    1/theta; ties in the traceback prefer the diagonal step.
    """
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    A, B = _as_2d(a), _as_2d(b)
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("dtw requires non-empty sequences")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    m, n = A.shape[0], B.shape[0]
    cost = cdist(A, B, metric="sqeuclidean")
    D = np.empty((m, n))
    D[0, 0] = cost[0, 0]
    for i in range(1, m):
        D[i, 0] = D[i - 1, 0] + cost[i, 0]
    for j in range(1, n):
        D[0, j] = D[0, j - 1] + cost[0, j]
    for i in range(1, m):
        ci = cost[i]
        di = D[i]
        dprev = D[i - 1]
        di[0] = dprev[0] + ci[0]
        for j in range(1, n):
            di[j] = ci[j] + min(dprev[j - 1], dprev[j], di[j - 1])
    # traceback, diagonal preferred on ties
    path = [(m - 1, n - 1)]
    i, j = m - 1, n - 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            choice = int(np.argmin((D[i - 1, j - 1], D[i - 1, j], D[i, j - 1])))
            if choice == 0:
                i -= 1
                j -= 1
            elif choice == 1:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    raw = float(D[m - 1, n - 1])
    return AlignmentResult(distance=float(raw ** (1.0 / theta)), raw_cost=raw, path=path)


def resample_linear(seq, length):
    """Linear resampling of a (C, d) sequence to a given length."""
    a = _as_2d(seq)
    if length == a.shape[0]:
        return a.copy()
    src = np.linspace(0.0, 1.0, a.shape[0])
    dst = np.linspace(0.0, 1.0, length)
    return np.stack([np.interp(dst, src, a[:, k]) for k in range(a.shape[1])], axis=1)


def dba(series, reference_length=None, iterations=10, theta=2.0, return_costs=False):
    """DTW Barycenter Averaging: an iteratively refined reference sequence.

    Starts from the member closest to the target length (resampled to it)
    and repeatedly replaces every reference sample by the mean of the
    values aligned to it.  The summed accumulated alignment cost is
    non-increasing over iterations; pass ``return_costs=True`` to get the
    per-iteration trace along with the reference.
    """
    seqs = [_as_2d(s) for s in series]
    if not seqs:
        raise ValueError("dba requires a non-empty set of sequences")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    lengths = [s.shape[0] for s in seqs]
    if reference_length is None:
        reference_length = int(np.median(lengths))
    start = int(np.argmin([abs(L - reference_length) for L in lengths]))
    ref = resample_linear(seqs[start], reference_length)
    costs = []
    for _ in range(iterations):
        sums = np.zeros_like(ref)
        counts = np.zeros(reference_length)
        total = 0.0
        for s in seqs:
            res = dtw(ref, s, theta=theta)
            total += res.raw_cost
            for u, v in res.path:
                sums[u] += s[v]
                counts[u] += 1
        costs.append(total)
        ref = sums / counts[:, None]
    if return_costs:
        return ref, np.asarray(costs)
    return ref


# ---------------------------------------------------------------------------
# discretization and entropy family

@dataclass
class SymbolDistribution:
    """Probabilities over K equal-width bins plus the assigned symbols."""

    p: np.ndarray
    K: int
    edges: np.ndarray
    symbols: np.ndarray

    def __post_init__(self):
        total = float(self.p.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")


def discretize(values, K, value_range=None):
    """Bin a real sequence into K equal-width cells over its range.

    All-equal input (or a degenerate explicit range) collapses into the
    first bin with probability one.  ``value_range`` lets the caller fix
    the bin edges, e.g. from a training fold; values outside are clipped.
    """
    if K < 2:
        raise ValueError(f"need at least 2 bins, got {K}")
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot discretize an empty sequence")
    lo, hi = (float(v.min()), float(v.max())) if value_range is None else map(float, value_range)
    if hi <= lo:
        symbols = np.zeros(v.size, dtype=np.intp)
    else:
        symbols = np.clip(((v - lo) / (hi - lo) * K).astype(np.intp), 0, K - 1)
    counts = np.bincount(symbols, minlength=K).astype(np.float64)
    edges = np.linspace(lo, hi, K + 1)
    return SymbolDistribution(p=counts / v.size, K=K, edges=edges, symbols=symbols)


def _probs(dist):
    return dist.p if isinstance(dist, SymbolDistribution) else np.asarray(dist, dtype=np.float64)


def shannon_entropy(dist):
    """Shannon entropy in nats; 0 log 0 is taken as 0."""
    p = _probs(dist)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def renyi_entropy(dist, q):
    """Renyi entropy of order q (q > 0, q != 1) in nats."""
    if q <= 0:
        raise ValueError(f"order must be positive, got {q}")
    if q == 1:
        raise ValueError("order 1 is the Shannon limit; use shannon_entropy")
    p = _probs(dist)
    return float(np.log((p**q).sum()) / (1.0 - q))


def simpson_diversity(dist):
    """Simpson concentration index: sum of squared bin probabilities."""
    p = _probs(dist)
    return float((p * p).sum())


# ---------------------------------------------------------------------------
# Lempel-Ziv complexity

def lz76_phrase_count(bits):
    """Exhaustive Lempel-Ziv (1976) phrase count of a binary sequence.

    Kaspar-Schuster formulation: repeatedly extend the current phrase while
    it can be reproduced from the prefix; every failure to extend starts a
    new phrase, and a trailing reproducible run counts as one final phrase.
    """
    s = np.asarray(bits).astype(np.uint8)
    n = s.size
    if n == 0:
        raise ValueError("empty sequence")
    c, l, i, k, kmax = 1, 1, 0, 1, 1
    while True:
        if l + k > n:
            c += 1
            break
        if s[i + k - 1] == s[l + k - 1]:
            k += 1
            continue
        kmax = max(kmax, k)
        i += 1
        if i == l:
            c += 1
            l += kmax
            if l + 1 > n:
                break
            i, k, kmax = 0, 1, 1
        else:
            k = 1
    return c


def lz76_complexity(values):
    """Normalized Lempel-Ziv complexity of a real sequence.

    The sequence is binarized against its median; the phrase count c(n) is
    normalized as c(n) * log2(n) / n and clamped to [0, 1] (random strings
    approach 1, constant ones stay near 0).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError(f"need at least 2 samples, got {v.size}")
    bits = v > np.median(v)
    c = lz76_phrase_count(bits)
    return float(np.clip(c * np.log2(v.size) / v.size, 0.0, 1.0))


def composite_features(d1, d3, values, d6):
    """Derive the ratio-based descriptors from the primary ones.

    ``values`` is the residual sequence whose non-zero fraction (tolerance
    1e-12) gives the space-filling ratio d4.  Degenerate cases are pinned:
    d5 = 0 when d4 = 0, d7 = 0 when d1 = 0.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    d4 = float((np.abs(v) > _ZERO_TOL).mean()) if v.size else 0.0
    d5 = d1 / d4 if d4 > 0.0 else 0.0
    d7 = d6 / d1 if d1 > 0.0 else 0.0
    d8 = float(np.exp(d1))
    return d4, d5, d7, d8


# ---------------------------------------------------------------------------
# per-trial feature extraction

@dataclass
class HandcraftedFeatures:
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    d6: float
    d7: float
    d8: float

    def as_array(self):
        return np.array([self.d1, self.d2, self.d3, self.d4, self.d5, self.d6, self.d7, self.d8])


def aligned_residuals(sample, references, theta=2.0):
    """Concatenated per-stream residual magnitudes along the optimal paths."""
    parts = []
    for stream, ref in zip(sample.streams(), references):
        res = dtw(stream, ref, theta=theta)
        diffs = np.array([np.linalg.norm(stream[u] - ref[v]) for u, v in res.path])
        parts.append(diffs)
    return np.concatenate(parts)


def extract_feature_vector(sample, references, K=16, theta=2.0, bin_range=None):
    """The 8-dimensional hand-crafted descriptor of one trial.

    ``references`` holds one DBA barycenter per stream, built from the
    training fold only.  Deterministic: no randomness anywhere in the
    alignment, binning, or the descriptors.
    """
    values = aligned_residuals(sample, references, theta=theta)
    dist = discretize(values, K, value_range=bin_range)
    d1 = shannon_entropy(dist)
    d2 = renyi_entropy(dist, 2.0)
    d3 = simpson_diversity(dist)
    d6 = lz76_complexity(values)
    d4, d5, d7, d8 = composite_features(d1, d3, values, d6)
    return HandcraftedFeatures(d1, d2, d3, d4, d5, d6, d7, d8)


class DtwFeatureExtractor:
    """Builds per-stream DBA references on a training fold and extracts
    the hand-crafted descriptor for arbitrary trials against them.

    The bin range for the symbol distribution is fixed from the training
    residuals so train and test trials share the same alphabet.
    """

    def __init__(self, K=16, theta=2.0, dba_iterations=10, reference_length=None):
        self.K = K
        self.theta = theta
        self.dba_iterations = dba_iterations
        self.reference_length = reference_length
        self.references = None
        self.bin_range = None

    def fit(self, samples):
        samples = list(samples)
        if not samples:
            raise ValueError("cannot fit feature references on an empty fold")
        ref_len = self.reference_length
        if ref_len is None:
            ref_len = int(np.median([s.length for s in samples]))
        self.references = tuple(
            dba([s.streams()[k] for s in samples], reference_length=ref_len,
                iterations=self.dba_iterations, theta=self.theta)
            for k in range(3)
        )
        residuals = [aligned_residuals(s, self.references, theta=self.theta) for s in samples]
        allr = np.concatenate(residuals)
        self.bin_range = (float(allr.min()), float(allr.max()))
        return self

    def transform(self, samples):
        if self.references is None:
            raise RuntimeError("extractor not fitted")
        return np.stack(
            [
                extract_feature_vector(
                    s, self.references, K=self.K, theta=self.theta, bin_range=self.bin_range
                ).as_array()
                for s in samples
            ]
        )

    def fit_transform(self, samples):
        return self.fit(samples).transform(samples)


# ---------------------------------------------------------------------------
# CDF export

FEATURE_NAMES = ["d1", "d2", "d3", "d4", "d5", "d6", "d7", "d8"]


def sample_group(sample):
    """Cohort/difficulty cell used for the feature CDF plots."""
    cohort = "cp" if sample.pain_level > 0 else "healthy"
    return f"{cohort}_{sample.trial_kind}"


def export_feature_cdf(groups):
    """Empirical CDFs of each descriptor per group.

    ``groups`` maps a group name to an (n, 8) feature matrix; the result is
    a list of (feature, group, value, cum_prob) rows.  Empty groups are
    skipped with a warning.
    """
    rows = []
    for group in sorted(groups):
        feats = np.asarray(groups[group], dtype=np.float64)
        if feats.size == 0:
            warnings.warn(f"feature CDF: group {group!r} is empty, skipping")
            continue
        for fi, fname in enumerate(FEATURE_NAMES):
            vals = np.sort(feats[:, fi])
            n = vals.size
            for idx, v in enumerate(vals, start=1):
                rows.append((fname, group, float(v), idx / n))
    return rows

"""Multi-label classification with global and local label correlations.

The label matrix (pain-level one-hot block plus a protective bit, in
{-1, +1}) is factored into low-rank latent labels ``U V``; a linear map
``W`` ties the latent labels to the fused features, and manifold terms on
label-correlation Laplacians (one global, one per k-means feature group)
pull correlated labels toward similar predictions:

    J = |Y' - U V|^2 + lam1 |V - W X'|^2
        + lam2 ( tr((UV)' L0 (UV)) + sum_g tr((U V_g)' L_g (U V_g)) )
        + lam3 ( |U|^2 + |V|^2 + |W|^2 )

Each alternation round solves exactly for U (a small Sylvester system), V
(per-group ridge systems) and W (ridge regression), so the objective never
increases between rounds.  The binary evaluation setting swaps the whole
classifier for a two-class softmax head trained with Adam.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .srnn.optim import Adam

N_PAIN_LEVELS = 11
LABEL_DIM = N_PAIN_LEVELS + 1


# ---------------------------------------------------------------------------
# label coding

def pain_band_index(pain_level, bands=None):
    """Index of the pain block coordinate for a pain level (0..10).

    ``bands`` optionally coarsens the 11 levels into ranges [(lo, hi), ...];
    by default every level is its own class.
    """
    if bands is None:
        return int(pain_level)
    for idx, (lo, hi) in enumerate(bands):
        if lo <= pain_level <= hi:
            return idx
    raise ValueError(f"pain level {pain_level} not covered by bands {bands}")


def encode_labels(samples, bands=None):
    """Stack {-1,+1} label vectors: one-hot pain block plus protective bit."""
    n_pain = N_PAIN_LEVELS if bands is None else len(bands)
    Y = -np.ones((len(samples), n_pain + 1))
    for i, s in enumerate(samples):
        Y[i, pain_band_index(s.pain_level, bands)] = 1.0
        Y[i, n_pain] = 1.0 if s.protective else -1.0
    return Y


def decode_scores(scores, bands=None):
    """Argmax over the pain block, sign of the protective score.

    Returns (labels, pain_index, protective) where labels is the {-1,+1}
    vector with exactly one +1 in the pain block.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n_pain = scores.shape[-1] - 1
    labels = -np.ones_like(scores)
    pain_idx = int(np.argmax(scores[:n_pain]))
    labels[pain_idx] = 1.0
    protective = bool(scores[n_pain] > 0)
    labels[n_pain] = 1.0 if protective else -1.0
    return labels, pain_idx, protective


# ---------------------------------------------------------------------------
# feature groups and label graphs

def kmeans_groups(X, g, seed=0, iterations=50):
    """Deterministic k-means: seeded first center, then farthest-point
    seeding and Lloyd iterations. Returns per-instance group indices."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if g < 1:
        raise ValueError("need at least one group")
    g = min(g, n)
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    centers = [X[first]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, g):
        nxt = int(np.argmax(d2))
        centers.append(X[nxt])
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    centers = np.stack(centers)
    labels = None
    for _ in range(iterations):
        dists = cdist(X, centers, metric="sqeuclidean")
        new_labels = dists.argmin(axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(g):
            mask = labels == j
            if mask.any():
                centers[j] = X[mask].mean(axis=0)
            else:
                centers[j] = X[int(np.argmax(dists.min(axis=1)))]
    return labels


def label_laplacian(Y):
    """Normalized Laplacian of the positive label-correlation graph.

    Edge weights are the cosine similarities between label columns of the
    {-1,+1} matrix, clipped at zero; the result is symmetric PSD.
    """
    cols = np.asarray(Y, dtype=np.float64).T  # (l, n)
    norms = np.linalg.norm(cols, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    sim = (cols @ cols.T) / np.outer(safe, safe)
    np.fill_diagonal(sim, 0.0)
    sim = np.maximum(sim, 0.0)
    deg = sim.sum(axis=1)
    dinv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    return np.eye(cols.shape[0]) - dinv[:, None] * sim * dinv[None, :]


# ---------------------------------------------------------------------------
# the classifier

@dataclass
class GlocalHyper:
    k: int = 6  # latent label rank
    g: int = 4  # number of k-means feature groups
    lam1: float = 1.0
    lam2: float = 0.1
    lam3: float = 1e-3
    max_rounds: int = 100
    tol: float = 1e-6
    seed: int = 0
    refresh_laplacians: bool = False


@dataclass
class GlocalModel:
    U: np.ndarray = None  # (l, k)
    V: np.ndarray = None  # (k, n_train)
    W: np.ndarray = None  # (k, eta)
    L0: np.ndarray = None
    locals_: list = field(default_factory=list)
    groups: np.ndarray = None
    hyper: GlocalHyper = None
    objective_trace: np.ndarray = None
    bands: tuple = None

    @property
    def fitted(self):
        return self.W is not None

    def scores(self, x):
        if not self.fitted:
            raise RuntimeError("model not fitted")
        x = np.asarray(x, dtype=np.float64)
        return (self.U @ (self.W @ x.T)).T if x.ndim == 2 else self.U @ (self.W @ x)

    def save_arrays(self, prefix=""):
        out = {
            prefix + "U": self.U,
            prefix + "V": self.V,
            prefix + "W": self.W,
            prefix + "L0": self.L0,
            prefix + "groups": self.groups,
        }
        for j, L in enumerate(self.locals_):
            out[f"{prefix}L{j + 1}"] = L
        return out


def _objective(Yt, XT, U, V, W, L0, locals_, group_index, hyper):
    F = U @ V
    rec = float(((Yt - F) ** 2).sum())
    lin = hyper.lam1 * float(((V - W @ XT) ** 2).sum())
    man = float((F * (L0 @ F)).sum())
    for j, L in enumerate(locals_):
        Fg = F[:, group_index[j]]
        man += float((Fg * (L @ Fg)).sum())
    reg = hyper.lam3 * (
        float((U**2).sum()) + float((V**2).sum()) + float((W**2).sum())
    )
    return rec + lin + hyper.lam2 * man + reg


def fit_glocal(X, Y, hyper=None):
    """Alternating minimization of the glocal objective on (features, labels).

    ``X`` is (n, eta), ``Y`` is (n, l) in {-1,+1}.  Requires n >= k; warns
    (but proceeds) when some label column is constant.
    """
    hyper = hyper or GlocalHyper()
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n, eta = X.shape
    l = Y.shape[1]
    k = hyper.k
    if n < k:
        raise ValueError(f"need at least k={k} training instances, got {n}")
    if k > l:
        raise ValueError(f"latent rank k={k} cannot exceed the label count {l}")
    constant = [j for j in range(l) if np.all(Y[:, j] == Y[0, j])]
    if constant:
        warnings.warn(f"label columns {constant} are constant in the training data")

    Yt = Y.T  # (l, n)
    XT = X.T  # (eta, n)
    groups = kmeans_groups(X, hyper.g, seed=hyper.seed)
    group_index = [np.flatnonzero(groups == j) for j in range(groups.max() + 1)]
    group_index = [idx for idx in group_index if idx.size]

    L0 = label_laplacian(Y)
    locals_ = [label_laplacian(Y[idx]) for idx in group_index]

    # init from the top-k SVD of the label matrix
    U0, S, Vt = np.linalg.svd(Yt, full_matrices=False)
    root = np.sqrt(S[:k])
    U = U0[:, :k] * root
    V = root[:, None] * Vt[:k]

    XXt = XT @ XT.T
    ridge_w = hyper.lam1 * XXt + hyper.lam3 * np.eye(eta)
    W = np.linalg.solve(ridge_w, hyper.lam1 * (V @ X).T).T

    trace = [_objective(Yt, XT, U, V, W, L0, locals_, group_index, hyper)]
    eye_l = np.eye(l)
    for _ in range(hyper.max_rounds):
        if hyper.refresh_laplacians:
            F = U @ V
            L0 = label_laplacian(F.T)
            locals_ = [label_laplacian(F[:, idx].T) for idx in group_index]
        # U: vectorized Sylvester-type solve (small: l*k unknowns)
        VVt = V @ V.T
        M = np.kron(VVt, eye_l + hyper.lam2 * L0)
        for j, idx in enumerate(group_index):
            Vg = V[:, idx]
            M += np.kron(Vg @ Vg.T, hyper.lam2 * locals_[j])
        M += hyper.lam3 * np.eye(l * k)
        rhs = (Yt @ V.T).flatten(order="F")
        U = np.linalg.solve(M, rhs).reshape((l, k), order="F")
        # V: per-group ridge systems (exact, columns are separable)
        UtU = U.T @ U
        UtY = U.T @ Yt
        WX = W @ XT
        base = UtU + (hyper.lam1 + hyper.lam3) * np.eye(k) + hyper.lam2 * (U.T @ L0 @ U)
        for j, idx in enumerate(group_index):
            A = base + hyper.lam2 * (U.T @ locals_[j] @ U)
            V[:, idx] = np.linalg.solve(A, UtY[:, idx] + hyper.lam1 * WX[:, idx])
        # W: ridge regression onto the latent labels
        W = np.linalg.solve(ridge_w, hyper.lam1 * (V @ X).T).T
        trace.append(_objective(Yt, XT, U, V, W, L0, locals_, group_index, hyper))
        if abs(trace[-2] - trace[-1]) <= hyper.tol * max(1.0, abs(trace[-2])):
            break
    return GlocalModel(
        U=U,
        V=V,
        W=W,
        L0=L0,
        locals_=locals_,
        groups=groups,
        hyper=hyper,
        objective_trace=np.asarray(trace),
    )


def predict_multilabel(model, x, bands=None):
    """Scores and the decoded {-1,+1} label vector for one feature vector."""
    scores = model.scores(x)
    if scores.ndim == 1:
        labels, _, _ = decode_scores(scores, bands)
        return scores, labels
    decoded = np.stack([decode_scores(s, bands)[0] for s in scores])
    return scores, decoded


# ---------------------------------------------------------------------------
# two-class softmax head (second evaluation setting)

@dataclass
class SoftmaxHead:
    w: np.ndarray  # (d, 2)
    b: np.ndarray  # (2,)

    def predict_proba(self, x):
        x = np.asarray(x, dtype=np.float64)
        logits = x @ self.w + self.b
        shifted = logits - np.max(logits, axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)

    def save_arrays(self, prefix=""):
        return {prefix + "w": self.w, prefix + "b": self.b}


def fit_binary_softmax(X, y, epochs=500, lr=0.05, weight_decay=0.0, seed=0):
    """Fit a two-class softmax by full-batch Adam cross-entropy descent."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError(f"training data contains a single class {classes}")
    n, d = X.shape
    rng = np.random.default_rng(seed)
    lim = 1.0 / np.sqrt(d)
    head = SoftmaxHead(w=rng.uniform(-lim, lim, size=(d, 2)), b=np.zeros(2))
    onehot = np.zeros((n, 2))
    onehot[np.arange(n), y] = 1.0
    opt = Adam([("w", head.w), ("b", head.b)], weight_decay=weight_decay)
    for _ in range(epochs):
        probs = head.predict_proba(X)
        dlogits = (probs - onehot) / n
        grads = {"w": X.T @ dlogits, "b": dlogits.sum(axis=0)}
        opt.step(grads, lr)
    return head


def predict_binary(head, x):
    """Predicted class and the probability of the positive (index 1) class."""
    probs = head.predict_proba(x)
    if probs.ndim == 1:
        return int(probs.argmax()), float(probs[1])
    return probs.argmax(axis=1), probs[:, 1]

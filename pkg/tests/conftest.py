import numpy as np
import pytest

import painmotion as pm


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small synthetic dataset shared by pipeline-level tests."""
    cfg = pm.SynthConfig(
        n_subjects=4, trials_per_subject=3, length_range=(14, 20), noise_scale=0.1, seed=2
    )
    return pm.synthesize_dataset(cfg)


def dtw_bruteforce(a, b):
    """Exhaustive enumeration of all admissible warping paths.

    Independent oracle for small inputs: recursively walks every monotone
    path from (0,0) to (m-1,n-1) and returns the minimal accumulated
    squared-Euclidean cost.
    """
    A = np.atleast_2d(np.asarray(a, dtype=float).T).T
    B = np.atleast_2d(np.asarray(b, dtype=float).T).T
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    m, n = A.shape[0], B.shape[0]

    def step_cost(i, j):
        d = A[i] - B[j]
        return float(np.dot(d, d))

    best = [np.inf]

    def walk(i, j, acc):
        acc += step_cost(i, j)
        if acc >= best[0]:
            return
        if i == m - 1 and j == n - 1:
            best[0] = acc
            return
        if i + 1 < m and j + 1 < n:
            walk(i + 1, j + 1, acc)
        if i + 1 < m:
            walk(i + 1, j, acc)
        if j + 1 < n:
            walk(i, j + 1, acc)

    walk(0, 0, 0.0)
    return best[0]


def fd_gradient_check(model, batch, h=1e-6, rel_tol=1e-4):
    """Compare analytic gradients against central finite differences.

    Returns the worst relative error over every scalar parameter.
    """
    _, grads = model.grad(batch)
    worst = 0.0
    for name, arr in model.named_parameters():
        g = grads[name]
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            jp = model.loss(batch)
            arr[idx] = orig - h
            jm = model.loss(batch)
            arr[idx] = orig
            fd = (jp - jm) / (2.0 * h)
            err = abs(fd - g[idx]) / max(1.0, abs(fd) + abs(g[idx]))
            worst = max(worst, err)
    return worst

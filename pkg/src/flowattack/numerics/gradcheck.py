"""Central finite-difference oracles used as ground truth in tests."""

import numpy as np


def finite_diff_grad(loss_fn, params, h=1e-3):
    """Estimate d loss / d p for every array in ``params`` (perturbed in place, restored)."""
    grads = []
    for p in params:
        g = np.zeros(p.shape, dtype=np.float64)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = float(loss_fn())
            flat[i] = old - h
            down = float(loss_fn())
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def finite_diff_jacobian(map_fn, x, h=1e-3):
    """Full Jacobian ``J[i, j] = d map_fn(x)_i / d x_j`` of a map on flat vectors."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        up = np.asarray(map_fn(x + e), dtype=np.float64).reshape(-1)
        down = np.asarray(map_fn(x - e), dtype=np.float64).reshape(-1)
        cols.append((up - down) / (2 * h))
    return np.stack(cols, axis=1)

import numpy as np

from ..exceptions import ContractError


def cw_loss(logprobs, y):
    """Margin ``max(0, log C_y - max_{c != y} log C_c)``; zero iff ``y`` is not the strict argmax.

    Accepts one log-prob vector or a batch ``(N, K)``; ``y`` is a scalar label
    shared by the batch or one label per row.
    """
    lp = np.asarray(logprobs, dtype=np.float64)
    single = lp.ndim == 1
    lp = np.atleast_2d(lp)
    k = lp.shape[1]
    y = np.broadcast_to(np.asarray(y), (lp.shape[0],))
    if np.any((y < 0) | (y >= k)):
        raise ContractError(f"label out of range for {k} classes")
    rows = np.arange(lp.shape[0])
    true = lp[rows, y]
    other = lp.copy()
    other[rows, y] = -np.inf
    loss = np.maximum(0.0, true - other.max(axis=1))
    return float(loss[0]) if single else loss


def lp_norm(delta, p):
    """Per-example l_p norm over all non-batch axes of a ``(N, ...)`` array."""
    flat = np.asarray(delta, dtype=np.float64).reshape(len(delta), -1)
    if p in ("inf", np.inf):
        return np.abs(flat).max(axis=1)
    return np.sqrt(np.sum(flat * flat, axis=1))


def project(x_cand, x_orig, eps, p="inf"):
    """Map candidates into ``{||x' - x||_p <= eps} ∩ [0, 1]^d``.

    l-inf clamps per pixel; l-2 rescales the residual to norm ``eps`` when it is
    larger, then clamps to [0, 1] (which can only shrink the norm).  Feasible
    candidates come back unchanged.
    """
    x_cand = np.asarray(x_cand, dtype=np.float32)
    x_orig = np.asarray(x_orig, dtype=np.float32)
    single = x_cand.shape == x_orig.shape and x_cand.ndim == x_orig.ndim
    cand = x_cand[None] if single else x_cand
    if cand.shape[1:] != x_orig.shape:
        raise ContractError(f"candidate shape {x_cand.shape} does not match {x_orig.shape}")
    e = np.float32(eps)
    if p in ("inf", np.inf):
        out = np.clip(cand, x_orig - e, x_orig + e)
    elif p in (2, "2"):
        r = cand - x_orig
        norms = lp_norm(r, 2)
        over = norms > eps
        factor = np.ones(len(r), dtype=np.float64)
        # shrink by 2^-20 so float32 rounding cannot leave the result outside the ball
        factor[over] = eps / norms[over] * (1 - 2.0 ** -20)
        out = np.where(over.reshape((-1,) + (1,) * (r.ndim - 1)),
                       x_orig + (r * factor.reshape((-1,) + (1,) * (r.ndim - 1))).astype(np.float32),
                       cand)
    else:
        raise ContractError(f"unsupported norm {p!r}")
    out = np.clip(out, 0, 1).astype(np.float32)
    return out[0] if single else out

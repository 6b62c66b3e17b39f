"""Invertible blocks with exact log-determinants.

Direction convention: ``forward`` is the generative map (latent side to data
side) and ``inverse`` is the normalizing map (data side to latent side).  Both
take a batch ``(N, *shape)`` and return ``(output, logdet)`` with ``logdet`` of
shape ``(N,)`` holding log|det J| *of the map that was applied*, so
``inverse`` log-dets are the negation of the matching ``forward`` ones.

Training differentiates the normalizing direction: ``inverse_cached`` keeps
what ``backward_inverse(cache, grad_z, grad_logdet)`` needs to return
``(grad_x, param_grads)``.
"""

import numpy as np

from ..exceptions import ContractError
from ..numerics.layers import MLP, Dense

ALPHA = 1.5
DELTA = 0.05


def clamp_scale(s, alpha=ALPHA):
    """Soft clamp ``alpha * 2/pi * arctan(s / alpha)``; odd, monotone, bounded by alpha."""
    if alpha <= 0:
        raise ContractError("alpha must be positive")
    s = np.asarray(s)
    return (s.dtype.type(alpha * 2 / np.pi) * np.arctan(s / s.dtype.type(alpha))).astype(s.dtype)


def clamp_scale_grad(s, alpha=ALPHA):
    s = np.asarray(s)
    r = s / s.dtype.type(alpha)
    return s.dtype.type(2 / np.pi) / (1 + r * r)


def _flat(x):
    return x.reshape(x.shape[0], -1)


class Block:
    kind = "block"

    def parameters(self):
        return []

    def inverse_cached(self, x):
        z, ld = self.inverse(x)
        return z, ld, None

    def backward_inverse(self, cache, grad_z, grad_logdet):
        # Parameter-free, volume-preserving reorderings: gradient is the transpose map.
        return self.forward(grad_z)[0], []

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def astype(self, dtype):
        return self

    def describe(self):
        return {"kind": self.kind}

    def tensors(self):
        return self.parameters()


class LogitPreprocess(Block):
    """Pixels in [0, 1] <-> unbounded logits via ``p = delta + (1 - 2 delta) x``."""

    kind = "logit"

    def __init__(self, delta=DELTA):
        if not 0 < delta < 0.5:
            raise ContractError("delta must lie strictly inside (0, 0.5)")
        self.delta = float(delta)

    def _logdet_inv(self, p):
        c = np.log1p(-2 * self.delta)
        return _flat(c - np.log(p) - np.log1p(-p)).sum(axis=1)

    def inverse(self, x):
        x = np.asarray(x)
        if np.any(~((x >= 0) & (x <= 1))):
            raise ContractError("logit preprocessing expects pixels in [0, 1]")
        p = x.dtype.type(self.delta) + x.dtype.type(1 - 2 * self.delta) * x
        y = np.log(p) - np.log1p(-p)
        return y, self._logdet_inv(p)

    def forward(self, y):
        y = np.asarray(y)
        p = 1 / (1 + np.exp(-y))
        x = (p - y.dtype.type(self.delta)) / y.dtype.type(1 - 2 * self.delta)
        # The logistic image is slightly wider than [0, 1]; clipping keeps pixels valid.
        x = np.clip(x, 0, 1).astype(y.dtype)
        return x, -self._logdet_inv(np.clip(p, 1e-30, 1 - 1e-7))

    def inverse_cached(self, x):
        y, ld = self.inverse(x)
        return y, ld, x

    def backward_inverse(self, x, grad_z, grad_logdet):
        t = x.dtype.type
        p = t(self.delta) + t(1 - 2 * self.delta) * x
        dy = t(1 - 2 * self.delta) / (p * (1 - p))
        dld = t(1 - 2 * self.delta) * (1 / (1 - p) - 1 / p)
        g_ld = np.asarray(grad_logdet).reshape((-1,) + (1,) * (x.ndim - 1))
        return grad_z * dy + g_ld * dld, []

    def describe(self):
        return {"kind": self.kind, "delta": self.delta}


class Permute(Block):
    """Fixed reordering of the flattened features: ``forward(z)[..., i] = z[..., perm[i]]``."""

    kind = "permute"

    def __init__(self, perm):
        self.perm = np.asarray(perm, dtype=np.int64)
        if sorted(self.perm.tolist()) != list(range(self.perm.size)):
            raise ContractError("perm must be a permutation of 0..n-1")
        self.inv_perm = np.argsort(self.perm)

    @classmethod
    def random(cls, n, prng):
        return cls(prng.permutation(n))

    def forward(self, z):
        z = np.asarray(z)
        return _flat(z)[:, self.perm].reshape(z.shape), np.zeros(z.shape[0], z.dtype)

    def inverse(self, x):
        x = np.asarray(x)
        return _flat(x)[:, self.inv_perm].reshape(x.shape), np.zeros(x.shape[0], x.dtype)

    def describe(self):
        return {"kind": self.kind, "perm": self.perm.tolist()}


def squeeze(x):
    """Space-to-channel: ``(N, C, H, W) -> (N, 4C, H/2, W/2)``; each 2x2 patch becomes 4 channels."""
    x = np.asarray(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ContractError(f"squeeze needs even spatial dims, got {h}x{w}")
    x = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 5, 2, 4)
    return x.reshape(n, 4 * c, h // 2, w // 2)


def unsqueeze(x):
    """Exact inverse of :func:`squeeze`."""
    x = np.asarray(x)
    n, c4, h, w = x.shape
    if c4 % 4:
        raise ContractError("unsqueeze needs a channel count divisible by 4")
    c = c4 // 4
    x = x.reshape(n, c, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3)
    return x.reshape(n, c, 2 * h, 2 * w)


class Squeeze(Block):
    kind = "squeeze"

    def inverse(self, x):
        return squeeze(x), np.zeros(np.shape(x)[0], np.asarray(x).dtype)

    def forward(self, z):
        return unsqueeze(z), np.zeros(np.shape(z)[0], np.asarray(z).dtype)

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ContractError(f"squeeze needs even spatial dims, got {h}x{w}")
        return (4 * c, h // 2, w // 2)


class Flatten(Block):
    kind = "flatten"

    def __init__(self, shape):
        self.shape = tuple(int(s) for s in shape)

    def inverse(self, x):
        x = np.asarray(x)
        return _flat(x), np.zeros(x.shape[0], x.dtype)

    def forward(self, z):
        z = np.asarray(z)
        return z.reshape((z.shape[0],) + self.shape), np.zeros(z.shape[0], z.dtype)

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def describe(self):
        return {"kind": self.kind, "shape": list(self.shape)}


class CouplingPair(Block):
    """Two stacked affine couplings with soft-clamped log-scales.

    Generative direction on halves ``(z1, z2)``::

        x1 = z1 * exp(clamp(s1(z2))) + t1(z2)
        x2 = z2 * exp(clamp(s2(x1))) + t2(x1)
    """

    kind = "coupling"

    def __init__(self, s1, t1, s2, t2, alpha=ALPHA):
        if alpha <= 0:
            raise ContractError("alpha must be positive")
        self.s1, self.t1, self.s2, self.t2 = s1, t1, s2, t2
        self.alpha = float(alpha)
        self.d1 = s1.layers[-1].n_out
        self.d2 = s2.layers[-1].n_out
        if t1.layers[-1].n_out != self.d1 or t2.layers[-1].n_out != self.d2:
            raise ContractError("s and t widths must match their half")
        if s1.layers[0].n_in != self.d2 or s2.layers[0].n_in != self.d1:
            raise ContractError("subnet input widths must match the opposite half")

    @classmethod
    def init(cls, width, prng, hidden=(64, 64), alpha=ALPHA, zero_last=True, dtype=np.float32):
        d1 = width // 2
        d2 = width - d1
        nets = [MLP.init(d2, d1, hidden, prng, zero_last, dtype),
                MLP.init(d2, d1, hidden, prng, zero_last, dtype),
                MLP.init(d1, d2, hidden, prng, zero_last, dtype),
                MLP.init(d1, d2, hidden, prng, zero_last, dtype)]
        return cls(*nets, alpha=alpha)

    @property
    def width(self):
        return self.d1 + self.d2

    @property
    def nets(self):
        return [self.s1, self.t1, self.s2, self.t2]

    def parameters(self):
        return [p for net in self.nets for p in net.parameters()]

    def _check(self, v):
        v = np.asarray(v)
        f = _flat(v)
        if f.shape[1] != self.width:
            raise ContractError(f"coupling width {self.width} does not match input {v.shape}")
        return v, f

    def forward(self, z):
        z, f = self._check(z)
        z1, z2 = f[:, :self.d1], f[:, self.d1:]
        a1 = clamp_scale(self.s1(z2), self.alpha)
        x1 = z1 * np.exp(a1) + self.t1(z2)
        a2 = clamp_scale(self.s2(x1), self.alpha)
        x2 = z2 * np.exp(a2) + self.t2(x1)
        x = np.concatenate([x1, x2], axis=1).reshape(z.shape)
        return x, a1.sum(axis=1) + a2.sum(axis=1)

    def inverse(self, x):
        z, ld, _ = self.inverse_cached(x, keep=False)
        return z, ld

    def inverse_cached(self, x, keep=True):
        x, f = self._check(x)
        x1, x2 = f[:, :self.d1], f[:, self.d1:]
        S2, cs2 = self.s2.forward(x1)
        T2, ct2 = self.t2.forward(x1)
        a2 = clamp_scale(S2, self.alpha)
        z2 = (x2 - T2) * np.exp(-a2)
        S1, cs1 = self.s1.forward(z2)
        T1, ct1 = self.t1.forward(z2)
        a1 = clamp_scale(S1, self.alpha)
        z1 = (x1 - T1) * np.exp(-a1)
        z = np.concatenate([z1, z2], axis=1).reshape(x.shape)
        ld = -(a1.sum(axis=1) + a2.sum(axis=1))
        cache = (x.shape, x1, z1, z2, S1, S2, a1, a2, cs1, ct1, cs2, ct2) if keep else None
        return z, ld, cache

    def backward_inverse(self, cache, grad_z, grad_logdet):
        shape, x1, z1, z2, S1, S2, a1, a2, cs1, ct1, cs2, ct2 = cache
        g = _flat(np.asarray(grad_z))
        gz1, gz2 = g[:, :self.d1], g[:, self.d1:]
        gld = np.asarray(grad_logdet, dtype=g.dtype)[:, None]

        e1 = np.exp(-a1)
        gx1 = gz1 * e1
        gT1 = -gz1 * e1
        ga1 = -gz1 * z1 - gld
        gS1 = ga1 * clamp_scale_grad(S1, self.alpha)
        gz2_s, p_s1 = self.s1.backward(cs1, gS1)
        gz2_t, p_t1 = self.t1.backward(ct1, gT1)
        gz2 = gz2 + gz2_s + gz2_t

        e2 = np.exp(-a2)
        gx2 = gz2 * e2
        gT2 = -gz2 * e2
        ga2 = -gz2 * z2 - gld
        gS2 = ga2 * clamp_scale_grad(S2, self.alpha)
        gx1_s, p_s2 = self.s2.backward(cs2, gS2)
        gx1_t, p_t2 = self.t2.backward(ct2, gT2)
        gx1 = gx1 + gx1_s + gx1_t

        gx = np.concatenate([gx1, gx2], axis=1).reshape(shape)
        return gx, p_s1 + p_t1 + p_s2 + p_t2

    def astype(self, dtype):
        return CouplingPair(*(net.astype(dtype) for net in self.nets), alpha=self.alpha)

    def describe(self):
        nets = [[[layer.n_in, layer.n_out, layer.activation, layer.slope] for layer in net.layers]
                for net in self.nets]
        return {"kind": self.kind, "alpha": self.alpha, "nets": nets}


def coupling_forward(z, pair):
    return pair.forward(z)


def coupling_inverse(x, pair):
    return pair.inverse(x)


def split_merge(x):
    """Split flat features into (passthrough three quarters, active last quarter)."""
    x = np.asarray(x)
    width = x.shape[-1]
    if width % 4:
        raise ContractError(f"split needs a width divisible by 4, got {width}")
    cut = 3 * width // 4
    return x[..., :cut], x[..., cut:]


def merge(passthrough, active):
    return np.concatenate([passthrough, active], axis=-1)


class Split(Block):
    """Routes the last quarter of flat features through ``inner`` blocks.

    The passthrough part is tapped straight to the output; the base vector is
    ``concat(passthrough, inner latent)`` so no dimension is discarded.
    """

    kind = "split"

    def __init__(self, inner):
        self.inner = list(inner)

    def parameters(self):
        return [p for b in self.inner for p in b.parameters()]

    def inverse(self, x):
        z, ld, _ = self.inverse_cached(x, keep=False)
        return z, ld

    def inverse_cached(self, x, keep=True):
        x = np.asarray(x)
        if x.ndim != 2:
            raise ContractError("split expects flat (N, D) input")
        keep_part, h = split_merge(x)
        ld = np.zeros(x.shape[0], x.dtype)
        caches = []
        for b in self.inner:
            if keep:
                h, l, c = b.inverse_cached(h)
                caches.append(c)
            else:
                h, l = b.inverse(h)
            ld = ld + l
        return merge(keep_part, h), ld, caches

    def forward(self, z):
        z = np.asarray(z)
        keep_part, h = split_merge(z)
        ld = np.zeros(z.shape[0], z.dtype)
        for b in reversed(self.inner):
            h, l = b.forward(h)
            ld = ld + l
        return merge(keep_part, h), ld

    def backward_inverse(self, caches, grad_z, grad_logdet):
        g_keep, g = split_merge(grad_z)
        grads = []
        for b, c in zip(reversed(self.inner), reversed(caches)):
            g, pg = b.backward_inverse(c, g, grad_logdet)
            grads = pg + grads
        return merge(g_keep, g), grads

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] % 4:
            raise ContractError("split expects a flat width divisible by 4")
        return tuple(in_shape)

    def astype(self, dtype):
        return Split([b.astype(dtype) for b in self.inner])

    def describe(self):
        return {"kind": self.kind, "inner": [b.describe() for b in self.inner]}

    def tensors(self):
        return [t for b in self.inner for t in b.tensors()]

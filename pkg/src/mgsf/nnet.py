"""Layer kernels with hand-written backward passes.

Every ``*_fwd`` returns ``(output, cache)`` and the matching ``*_bwd`` takes
the upstream gradient and that cache. Leading axes are treated as batch
axes throughout. All arithmetic is float64.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

LOG_FLOOR = 1e-10


def _check_last(x, n, what):
    if x.shape[-1] != n:
        raise ValueError(f"{what}: expected trailing dimension {n}, got {x.shape[-1]}")


# affine ---------------------------------------------------------------------


def affine_fwd(x, W, b):
    x = np.asarray(x, dtype=float)
    if W.ndim != 2 or b.shape != (W.shape[0],):
        raise ValueError(f"affine: bad parameter shapes W{W.shape}, b{b.shape}")
    _check_last(x, W.shape[1], "affine input")
    return x @ W.T + b, (x, W)


def affine_bwd(gy, cache):
    x, W = cache
    gx = gy @ W
    gy2 = gy.reshape(-1, gy.shape[-1])
    gW = gy2.T @ x.reshape(-1, x.shape[-1])
    gb = gy2.sum(axis=0)
    return gx, gW, gb


# power of (re, im) pairs ------------------------------------------------------


def pow_pairs_fwd(z):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] % 2:
        raise ValueError(f"pow_pairs: trailing dimension must be even, got {z.shape[-1]}")
    re, im = z[..., 0::2], z[..., 1::2]
    return re * re + im * im, z


def pow_pairs_bwd(gp, z):
    gz = np.empty_like(z)
    gz[..., 0::2] = 2.0 * z[..., 0::2] * gp
    gz[..., 1::2] = 2.0 * z[..., 1::2] * gp
    return gz


# elementwise ------------------------------------------------------------------


def relu_fwd(x):
    x = np.asarray(x, dtype=float)
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_bwd(gy, mask):
    return np.where(mask, gy, 0.0)


def log_fwd(x, floor: float = LOG_FLOOR):
    x = np.asarray(x, dtype=float)
    return np.log(np.maximum(x, floor)), (x, floor)


def log_bwd(gy, cache):
    x, floor = cache
    live = x > floor
    return np.where(live, gy / np.where(live, x, 1.0), 0.0)


# 1 x D strided convolution -------------------------------------------------------


def conv1xD_fwd(grid, filters, bias):
    """``(..., K, G*D)`` grid, ``(F, D)`` filters shared over rows -> ``(..., K, G*F)``."""
    grid = np.asarray(grid, dtype=float)
    F, D = filters.shape
    if bias.shape != (F,):
        raise ValueError(f"conv1xD: bias shape {bias.shape} != ({F},)")
    if grid.shape[-1] % D:
        raise ValueError(f"conv1xD: grid width {grid.shape[-1]} not divisible by filter width {D}")
    G = grid.shape[-1] // D
    blocks = grid.reshape(-1, D)
    out = blocks @ filters.T
    out += bias
    return out.reshape(grid.shape[:-1] + (G * F,)), (blocks, filters, grid.shape)


def conv1xD_bwd(gout, cache):
    blocks, filters, shape = cache
    F, D = filters.shape
    g = gout.reshape(-1, F)
    gfilt = g.T @ blocks
    gbias = g.sum(axis=0)
    ggrid = g @ filters
    return ggrid.reshape(shape), gfilt, gbias


# max pooling over the trailing axis ---------------------------------------------------


def maxpool_fwd(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.shape[-1] < 1:
        raise ValueError("maxpool over an empty axis")
    idx = np.argmax(grid, axis=-1)
    out = np.take_along_axis(grid, idx[..., None], axis=-1)[..., 0]
    return out, (idx, grid.shape)


def maxpool_bwd(gy, cache):
    idx, shape = cache
    g = np.zeros(shape)
    np.put_along_axis(g, idx[..., None], gy[..., None], axis=-1)
    return g


# LSTM -----------------------------------------------------------------------------


def lstm_init(n_in: int, n_hidden: int, rng: np.random.Generator, scale: float | None = None) -> dict:
    """Uniform init in +-1/sqrt(H); forget-gate bias 1. Gate order: i, f, g, o."""
    s = 1.0 / np.sqrt(n_hidden) if scale is None else scale
    b = np.zeros(4 * n_hidden)
    b[n_hidden : 2 * n_hidden] = 1.0
    return {
        "Wx": rng.uniform(-s, s, (4 * n_hidden, n_in)),
        "Wh": rng.uniform(-s, s, (4 * n_hidden, n_hidden)),
        "b": b,
    }


def lstm_fwd(x, p, h0=None, c0=None):
    """Run ``(B, T, I)`` inputs through one layer; returns ``(hs, (hT, cT), cache)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"lstm: input must be (batch, time, features), got {x.shape}")
    Wx, Wh, b = p["Wx"], p["Wh"], p["b"]
    H = Wh.shape[1]
    if Wx.shape != (4 * H, x.shape[-1]) or Wh.shape != (4 * H, H) or b.shape != (4 * H,):
        raise ValueError("lstm: parameter shapes inconsistent with input")
    B, T, _ = x.shape
    h = np.zeros((B, H)) if h0 is None else h0
    c = np.zeros((B, H)) if c0 is None else c0
    xa = x @ Wx.T + b
    hs = np.empty((B, T, H))
    gates = np.empty((T, 4, B, H))
    cs = np.empty((T + 1, B, H))
    hprev = np.empty((T, B, H))
    cs[0] = c
    for t in range(T):
        hprev[t] = h
        a = xa[:, t] + h @ Wh.T
        i = expit(a[:, :H])
        f = expit(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = expit(a[:, 3 * H :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[t] = (i, f, g, o)
        cs[t + 1] = c
        hs[:, t] = h
    return hs, (h, c), (x, p, gates, cs, hprev)


def lstm_bwd(ghs, cache, ghT=None, gcT=None):
    """Backprop through time; returns ``(gx, grads, (gh0, gc0))``."""
    x, p, gates, cs, hprev = cache
    Wx, Wh = p["Wx"], p["Wh"]
    T, _, B, H = gates.shape
    dh_next = np.zeros((B, H)) if ghT is None else ghT.copy()
    dc_next = np.zeros((B, H)) if gcT is None else gcT.copy()
    da_all = np.empty((B, T, 4 * H))
    gWh = np.zeros_like(Wh)
    for t in range(T - 1, -1, -1):
        i, f, g, o = gates[t]
        c = cs[t + 1]
        tc = np.tanh(c)
        dh = ghs[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * cs[t]
        dc_next = dc * f
        da = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1
        )
        da_all[:, t] = da
        gWh += da.T @ hprev[t]
        dh_next = da @ Wh
    flat = da_all.reshape(-1, 4 * H)
    grads = {
        "Wx": flat.T @ x.reshape(-1, x.shape[-1]),
        "Wh": gWh,
        "b": flat.sum(axis=0),
    }
    gx = da_all @ Wx
    return gx, grads, (dh_next, dc_next)


# softmax cross entropy ---------------------------------------------------------------


def log_softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def softmax_xent_fwd(logits, labels):
    """Mean cross entropy over all leading positions."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    C = logits.shape[-1]
    if labels.shape != logits.shape[:-1]:
        raise ValueError(f"labels shape {labels.shape} != logits leading shape {logits.shape[:-1]}")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"label out of range [0, {C})")
    lp = log_softmax(logits)
    nll = -np.take_along_axis(lp, labels[..., None].astype(int), axis=-1)[..., 0]
    return float(nll.mean()), (lp, labels)


def softmax_xent_bwd(cache, scale: float = 1.0):
    lp, labels = cache
    g = np.exp(lp)
    idx = labels[..., None].astype(int)
    np.put_along_axis(g, idx, np.take_along_axis(g, idx, axis=-1) - 1.0, axis=-1)
    return g * (scale / labels.size)


# optimizer ---------------------------------------------------------------------------


class Adam:
    """Bias-corrected Adam over a dict of named arrays, updated in place."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: dict[str, dict] = {}

    def step(self, params: dict, grads: dict, names=None) -> None:
        for name in sorted(grads) if names is None else names:
            theta, g = params[name], grads[name]
            if theta.shape != g.shape:
                raise ValueError(f"adam: gradient shape {g.shape} != parameter shape {theta.shape} for {name}")
            st = self.state.get(name)
            if st is None:
                st = self.state[name] = {"m": np.zeros_like(theta), "v": np.zeros_like(theta), "t": 0}
            st["t"] += 1
            st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * g * g
            m_hat = st["m"] / (1 - self.beta1 ** st["t"])
            v_hat = st["v"] / (1 - self.beta2 ** st["t"])
            theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(params: dict, grads: dict, opt: Adam) -> None:
    opt.step(params, grads)


# gradient checking ---------------------------------------------------------------------


def numerical_gradient(f, x: np.ndarray, eps: float = 1e-5, index=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x`` (perturbed in place).

    ``index`` restricts the check to a list of flat positions; other entries
    of the result are NaN.
    """
    flat = x.reshape(-1)
    out = np.full(flat.shape, np.nan)
    positions = range(flat.size) if index is None else index
    for i in positions:
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        out[i] = (fp - fm) / (2 * eps)
    return out.reshape(x.shape)


def relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Max over entries of ``|a - n| / max(|a| + |n|, floor)``, ignoring NaNs in ``numeric``.

    ``floor`` keeps entries that sit below the central-difference roundoff
    level (about ``1e-11`` for O(1) losses at ``eps=1e-5``) from dominating.
    """
    a = np.asarray(analytic, dtype=float).ravel()
    n = np.asarray(numeric, dtype=float).ravel()
    keep = ~np.isnan(n)
    a, n = a[keep], n[keep]
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)))

"""Shared test oracles: finite differences, dense attention, scalar loops.

The oracles here are deliberately independent of the library's compute paths:
dense attention is an explicit per-head loop, pooling oracles walk windows
one token at a time, and gradients come from central finite differences.
"""

from __future__ import annotations

import math

import numpy as np

from tdt import RngStream, Tape, backward, recording

FD_H = 1e-5
FD_RTOL = 1e-4


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-3)


def finite_diff(loss_fn, param, flat_index: int, h: float = FD_H) -> float:
    """Central difference of loss_fn() w.r.t. one coordinate of ``param``."""
    flat = param.value.data.reshape(-1)
    orig = flat[flat_index]
    flat[flat_index] = orig + h
    up = loss_fn()
    flat[flat_index] = orig - h
    down = loss_fn()
    flat[flat_index] = orig
    return (up - down) / (2.0 * h)


def check_param_grads(loss_fn, params, seed: int = 0, n_coords: int = 20,
                      h: float = FD_H, rtol: float = FD_RTOL) -> float:
    """Backward pass vs central differences on sampled coordinates.

    ``loss_fn()`` must rebuild the loss from scratch (pure forward, float).
    Returns the worst relative error seen; asserts every sampled coordinate
    is within ``rtol``.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    tape = Tape()
    with recording(tape):
        loss = loss_fn(tape=True)
    backward(loss, tape)
    rng = RngStream(seed).split("fd-coords")
    worst = 0.0
    for p in params:
        size = p.value.size
        if size == 0:
            continue
        k = min(n_coords, size)
        coords = sorted(set(int(c) for c in rng.randint(0, size, k)))
        for c in coords:
            fd = finite_diff(lambda: loss_fn(tape=False), p, c, h)
            ad = p.grad.reshape(-1)[c]
            err = rel_err(ad, fd)
            worst = max(worst, err)
            assert err <= rtol, (
                f"grad mismatch {p.name}[{c}]: autodiff {ad:.10g} vs fd {fd:.10g} "
                f"(rel err {err:.3g})"
            )
    return worst


# -----------------------------------------------------------------------------
# Dense attention oracle (explicit loops, no shared code paths)
# -----------------------------------------------------------------------------


def dense_attention_oracle(xq, xk, xv, ap, n_heads: int, mask) -> np.ndarray:
    """Brute-force multi-head attention: per-head row loops over a boolean mask."""

    def val(p):
        return p.value.data

    q = xq @ val(ap.wq) + val(ap.bq)
    k = xk @ val(ap.wk) + val(ap.bk)
    v = xv @ val(ap.wv) + val(ap.bv)
    n, d = q.shape
    m = k.shape[0]
    dh = d // n_heads
    out = np.zeros((n, d))
    for h in range(n_heads):
        qs = q[:, h * dh : (h + 1) * dh]
        ks = k[:, h * dh : (h + 1) * dh]
        vs = v[:, h * dh : (h + 1) * dh]
        for i in range(n):
            logits = np.full(m, -np.inf)
            for j in range(m):
                if mask is None or mask[i, j]:
                    logits[j] = qs[i] @ ks[j] / math.sqrt(dh)
            mx = logits.max()
            w = np.exp(logits - mx)
            w = w / w.sum()
            out[i, h * dh : (h + 1) * dh] = w @ vs
    return out @ val(ap.wo) + val(ap.bo)


def cross_attention_oracle(e, s, ap, ln_gain, ln_bias, n_heads: int,
                           eps: float = 1e-5) -> np.ndarray:
    """Scalar-loop oracle of the token-segment update with branch layer norm."""
    branch_ctx = dense_context(e, s, ap, n_heads)
    branch = branch_ctx @ ap.wo.value.data + ap.bo.value.data
    normed = np.zeros_like(branch)
    g, b = ln_gain.value.data, ln_bias.value.data
    for i in range(branch.shape[0]):
        row = branch[i]
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        normed[i] = (row - mu) / math.sqrt(var + eps) * g + b
    return e + normed


def dense_context(xq, xkv, ap, n_heads: int) -> np.ndarray:
    """Per-head softmax(q k^T / sqrt(dh)) v with no mask, loop form."""

    def val(p):
        return p.value.data

    q = xq @ val(ap.wq) + val(ap.bq)
    k = xkv @ val(ap.wk) + val(ap.bk)
    v = xkv @ val(ap.wv) + val(ap.bv)
    n, d = q.shape
    m = k.shape[0]
    dh = d // n_heads
    ctx = np.zeros((n, d))
    for h in range(n_heads):
        qs = q[:, h * dh : (h + 1) * dh]
        ks = k[:, h * dh : (h + 1) * dh]
        vs = v[:, h * dh : (h + 1) * dh]
        for i in range(n):
            logits = np.array([qs[i] @ ks[j] / math.sqrt(dh) for j in range(m)])
            w = np.exp(logits - logits.max())
            w /= w.sum()
            ctx[i, h * dh : (h + 1) * dh] = w @ vs
    return ctx


def layer_norm_oracle(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                      eps: float) -> np.ndarray:
    out = np.zeros_like(x)
    flat = x.reshape(-1, x.shape[-1])
    of = out.reshape(-1, x.shape[-1])
    for i in range(flat.shape[0]):
        row = flat[i]
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        of[i] = (row - mu) / math.sqrt(var + eps) * gain + bias
    return out


def random_params_attention(rng: RngStream, d_model: int, prefix: str = "t"):
    from tdt.attention import init_attention_params

    return init_attention_params(rng, d_model, prefix)

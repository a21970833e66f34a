"""Attention kernels: banded local self-attention, full self-attention over
segments, and token-segment cross-attention, plus exact score-evaluation
accounting.

Local attention is the engineering point: it never materializes an N x N
score matrix. Queries are processed in blocks of w/2 positions, each block
scoring only its own and adjacent key blocks, so live memory grows with
N * w. Masked slots get a -1e30 additive penalty whose exponent underflows
to exactly zero, meaning tokens outside the band cannot influence a row even
at the bit level.

The :class:`OpCounter` tallies query-key dot products per forward pass; for
every kernel the increment equals the number of admitted query-key pairs
summed over heads, which :func:`count_budget` predicts in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import ConfigError, Parameter, ShapeError, Tensor, UsageError


@dataclass(frozen=True)
class AttentionConfig:
    """Width, head count and local window for one attention stack."""

    d_model: int
    n_heads: int
    window: int | None = None  # None means unbounded (full attention)

    def __post_init__(self):
        if self.d_model <= 0 or self.n_heads <= 0:
            raise ConfigError("d_model and n_heads must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.window is not None:
            if self.window < 2 or self.window % 2 != 0:
                raise ConfigError(f"window must be even and >= 2, got {self.window}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


class OpCounter:
    """Monotone counter of query-key dot products, summed over heads."""

    __slots__ = ("score_evals",)

    def __init__(self):
        self.score_evals = 0

    def add(self, n: int) -> None:
        if n < 0:
            raise UsageError("OpCounter cannot decrease")
        self.score_evals += int(n)

    def reset(self) -> None:
        self.score_evals = 0


# -----------------------------------------------------------------------------
# Masks and budgets
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskSpec:
    """Admissibility pattern: full, band(w), causal, or an explicit matrix."""

    kind: str
    window: int | None = None
    matrix: np.ndarray | None = None

    @staticmethod
    def full() -> "MaskSpec":
        return MaskSpec("full")

    @staticmethod
    def band(window: int) -> "MaskSpec":
        if window < 2 or window % 2 != 0:
            raise ConfigError(f"band window must be even and >= 2, got {window}")
        return MaskSpec("band", window=window)

    @staticmethod
    def causal() -> "MaskSpec":
        return MaskSpec("causal")

    @staticmethod
    def explicit(matrix: np.ndarray) -> "MaskSpec":
        return MaskSpec("explicit", matrix=np.asarray(matrix, dtype=bool))


def build_mask(spec: MaskSpec, n_rows: int, n_cols: int) -> np.ndarray:
    """Boolean admissibility matrix for ``spec``.

    A band admits columns j with |i - j| <= w/2, clipped to the sequence, so
    interior rows see w+1 positions and boundary rows fewer.
    """
    if n_rows < 1 or n_cols < 1:
        raise UsageError("mask dimensions must be >= 1")
    if spec.kind == "full":
        return np.ones((n_rows, n_cols), dtype=bool)
    if spec.kind == "band":
        if n_rows != n_cols:
            raise UsageError("band masks are defined for square attention only")
        half = spec.window // 2
        i = np.arange(n_rows)[:, None]
        j = np.arange(n_cols)[None, :]
        return np.abs(i - j) <= half
    if spec.kind == "causal":
        i = np.arange(n_rows)[:, None]
        j = np.arange(n_cols)[None, :]
        return j <= i
    if spec.kind == "explicit":
        m = spec.matrix
        if m is None or m.shape != (n_rows, n_cols):
            raise UsageError(
                f"explicit mask shape {None if m is None else m.shape} "
                f"!= ({n_rows}, {n_cols})"
            )
        if not m.any(axis=1).all():
            raise UsageError("explicit mask has a fully masked row")
        return m.copy()
    raise UsageError(f"unknown mask kind {spec.kind!r}")


def band_popcount(n: int, window: int | None) -> int:
    """Number of admitted pairs in a band mask, without materializing it."""
    if n < 1:
        raise UsageError("sequence length must be >= 1")
    if window is None or window >= 2 * (n - 1):
        return n * n
    half = window // 2
    i = np.arange(n, dtype=np.int64)
    lo = np.maximum(0, i - half)
    hi = np.minimum(n - 1, i + half)
    return int(np.sum(hi - lo + 1))


@dataclass(frozen=True)
class ScoreBudget:
    """Predicted score evaluations per head for one layer of each kind."""

    local: int
    segment: int
    cross: int


def count_budget(n_tokens: int, window: int | None, n_segments: int) -> ScoreBudget:
    """Exact per-head score counts: band popcount, segment^2, tokens*segments."""
    if n_tokens < 1 or n_segments < 0:
        raise UsageError("invalid budget dimensions")
    return ScoreBudget(
        local=band_popcount(n_tokens, window),
        segment=n_segments * n_segments,
        cross=n_tokens * n_segments,
    )


# -----------------------------------------------------------------------------
# Parameters
# -----------------------------------------------------------------------------


@dataclass
class AttentionParams:
    wq: Parameter
    bq: Parameter
    wk: Parameter
    bk: Parameter
    wv: Parameter
    bv: Parameter
    wo: Parameter
    bo: Parameter

    def all(self) -> list[Parameter]:
        return [self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo]


def init_attention_params(rng, d_model: int, prefix: str, init_std: float = 0.02) -> AttentionParams:
    def w(name):
        return Parameter(f"{prefix}.{name}", rng.split(name).normal((d_model, d_model), std=init_std))

    def b(name):
        return Parameter(f"{prefix}.{name}", np.zeros(d_model))

    return AttentionParams(
        wq=w("wq"), bq=b("bq"), wk=w("wk"), bk=b("bk"),
        wv=w("wv"), bv=b("bv"), wo=w("wo"), bo=b("bo"),
    )


def _split_heads(x, n_heads: int, head_dim: int):
    """[..., n, d] -> [..., heads, n, head_dim]."""
    lead = x.shape[:-2]
    n = x.shape[-2]
    y = ops.reshape(x, lead + (n, n_heads, head_dim))
    k = len(lead)
    return ops.transpose(y, tuple(range(k)) + (k + 1, k, k + 2))


def _merge_heads(x, d_model: int):
    """[..., heads, n, head_dim] -> [..., n, d]."""
    lead = x.shape[:-3]
    n = x.shape[-2]
    k = len(lead)
    y = ops.transpose(x, tuple(range(k)) + (k + 1, k, k + 2))
    return ops.reshape(y, lead + (n, d_model))


def _swap_last(x):
    k = len(x.shape)
    return ops.transpose(x, tuple(range(k - 2)) + (k - 1, k - 2))


# -----------------------------------------------------------------------------
# Kernels
# -----------------------------------------------------------------------------


def multi_head_attention(
    q_in,
    k_in,
    v_in,
    params: AttentionParams,
    config: AttentionConfig,
    mask: np.ndarray | None,
    counter: OpCounter | None = None,
    return_weights: bool = False,
):
    """Scaled dot-product attention over an explicit (possibly dense) mask.

    Works on [..., n, d] inputs whose leading axes agree; the mask is shared
    across leading axes and heads. ``mask=None`` means every pair is
    admitted. One head with identity projections reduces to plain
    softmax(q k^T / sqrt(d)) v.
    """
    n = q_in.shape[-2]
    m = k_in.shape[-2]
    if v_in.shape[-2] != m or k_in.shape[:-2] != q_in.shape[:-2]:
        raise ShapeError("query/key/value leading shapes disagree")
    batch = int(np.prod(q_in.shape[:-2])) if len(q_in.shape) > 2 else 1
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n, m):
            raise ShapeError(f"mask shape {mask.shape} != ({n}, {m})")
        if not mask.any(axis=1).all():
            raise UsageError("attention row with no admitted positions")
    h, dh = config.n_heads, config.head_dim
    q = _split_heads(ops.linear(q_in, params.wq, params.bq), h, dh)
    k = _split_heads(ops.linear(k_in, params.wk, params.bk), h, dh)
    v = _split_heads(ops.linear(v_in, params.wv, params.bv), h, dh)
    q = ops.scale(q, 1.0 / math.sqrt(dh))  # pre-scale: one less score-sized copy
    scores = ops.matmul(q, _swap_last(k))
    if mask is not None and not mask.all():
        scores = ops.add_const(scores, ops.NEG_MASK * (~mask))
    probs = ops.softmax_last(scores)
    del scores, q, k
    ctx = _merge_heads(ops.matmul(probs, v), config.d_model)
    out = ops.linear(ctx, params.wo, params.bo)
    if counter is not None:
        counter.add(batch * h * (int(mask.sum()) if mask is not None else n * m))
    if return_weights:
        return out, probs.data.copy()
    return out


def _band_block_bias(n: int, window: int) -> tuple[np.ndarray, int, int]:
    """Additive mask bias for blocked banded attention.

    Returns (bias[nb, block, 3*block], block, nb). Block r of query block i
    scores key slot s, which is absolute position (i-1)*block + s; a slot is
    admitted iff that position is in range and within w/2 of the query.
    Queries in the padded tail admit a single dummy slot so softmax stays
    defined; their outputs are sliced away.
    """
    half = window // 2
    block = half
    nb = -(-n // block)
    i = np.arange(nb)[:, None, None]
    r = np.arange(block)[None, :, None]
    s = np.arange(3 * block)[None, None, :]
    q_abs = i * block + r
    j_abs = (i - 1) * block + s
    admitted = (q_abs < n) & (j_abs >= 0) & (j_abs < n) & (np.abs(q_abs - j_abs) <= half)
    bias = np.where(admitted, 0.0, ops.NEG_MASK)
    pad_rows = q_abs >= n
    dummy = s == (block + r)
    bias = np.where(pad_rows & dummy, 0.0, bias)
    return bias, block, nb


def local_self_attention(
    x,
    params: AttentionParams,
    config: AttentionConfig,
    counter: OpCounter | None = None,
    return_weights: bool = False,
):
    """Windowed self-attention: each token attends w/2 neighbors per side plus
    itself, truncated at the boundaries.

    Saturated windows (w >= 2(N-1)) dispatch to the dense kernel so the result
    is bit-identical to full attention. Otherwise the banded path touches only
    neighbor blocks and its live memory is O(N * w): queries are processed in
    blocks of w/2 positions scoring their own and adjacent key blocks, with
    nothing N x N ever materialized. Leading batch axes pass through.
    """
    n = x.shape[-2]
    w = config.window
    if w is None or w >= 2 * (n - 1):
        mask = None if w is None else build_mask(MaskSpec.band(w), n, n)
        return multi_head_attention(
            x, x, x, params, config, mask, counter, return_weights
        )
    lead = x.shape[:-2]
    batch = int(np.prod(lead)) if lead else 1
    h, dh = config.n_heads, config.head_dim
    bias, block, nb = _band_block_bias(n, w)
    n_pad = nb * block

    q = _split_heads(ops.linear(x, params.wq, params.bq), h, dh)
    k = _split_heads(ops.linear(x, params.wk, params.bk), h, dh)
    v = _split_heads(ops.linear(x, params.wv, params.bv), h, dh)

    q = ops.scale(q, 1.0 / math.sqrt(dh))
    q_blk = ops.reshape(ops.pad_axis(q, -2, 0, n_pad - n), lead + (h, nb, block, dh))
    k_blk = ops.reshape(
        ops.pad_axis(k, -2, block, n_pad - n + block), lead + (h, nb + 2, block, dh)
    )
    v_blk = ops.reshape(
        ops.pad_axis(v, -2, block, n_pad - n + block), lead + (h, nb + 2, block, dh)
    )
    del q, k, v

    # Scores against the left / center / right key blocks, assembled into
    # [..., h, nb, block, 3*block]; neighbor stacks are never materialized.
    scores = ops.concat(
        [
            ops.matmul(q_blk, _swap_last(ops.slice_axis(k_blk, -3, s, nb + s)))
            for s in range(3)
        ],
        axis=-1,
    )
    del k_blk
    scores = ops.add_const(scores, bias)
    probs = ops.softmax_last(scores)
    del scores
    ctx = None
    for s in range(3):
        part = ops.matmul(
            ops.slice_axis(probs, -1, s * block, (s + 1) * block),
            ops.slice_axis(v_blk, -3, s, nb + s),
        )
        ctx = part if ctx is None else ops.add(ctx, part)
    del v_blk
    ctx = ops.slice_axis(ops.reshape(ctx, lead + (h, n_pad, dh)), -2, 0, n)
    out = ops.linear(_merge_heads(ctx, config.d_model), params.wo, params.bo)
    if counter is not None:
        counter.add(batch * h * band_popcount(n, w))
    if return_weights:
        if lead:
            raise UsageError("return_weights supports unbatched input only")
        dense = np.zeros((h, n, n), dtype=np.float64)
        p = probs.data
        for i in range(nb):
            j_lo = (i - 1) * block
            for s in range(3 * block):
                j = j_lo + s
                if 0 <= j < n:
                    rows = np.arange(i * block, min((i + 1) * block, n))
                    dense[:, rows, j] = p[:, i, : len(rows), s]
        return out, dense
    return out


def cross_attention_topdown(
    e,
    s,
    params: AttentionParams,
    ln_gain: Parameter,
    ln_bias: Parameter,
    config: AttentionConfig,
    counter: OpCounter | None = None,
    eps: float = 1e-5,
    return_weights: bool = False,
):
    """Token-segment correction: e + LayerNorm(W_o concat_heads(attn(e -> s))).

    Every token attends every segment (N*M pairs per head); the normalized
    branch is added onto the token states so a zero-weight branch is a no-op.
    Leading batch axes pass through.
    """
    n = e.shape[-2]
    m = s.shape[-2]
    if m < 1:
        raise UsageError("cross attention requires at least one segment")
    if e.shape[:-2] != s.shape[:-2]:
        raise ShapeError("token/segment leading shapes disagree")
    batch = int(np.prod(e.shape[:-2])) if len(e.shape) > 2 else 1
    h, dh = config.n_heads, config.head_dim
    q = _split_heads(ops.linear(e, params.wq, params.bq), h, dh)
    k = _split_heads(ops.linear(s, params.wk, params.bk), h, dh)
    v = _split_heads(ops.linear(s, params.wv, params.bv), h, dh)
    q = ops.scale(q, 1.0 / math.sqrt(dh))
    probs = ops.softmax_last(ops.matmul(q, _swap_last(k)))
    del q, k
    ctx = _merge_heads(ops.matmul(probs, v), config.d_model)
    branch = ops.layer_norm(ops.linear(ctx, params.wo, params.bo), ln_gain, ln_bias, eps)
    out = ops.add(e, branch)
    if counter is not None:
        counter.add(batch * h * n * m)
    if return_weights:
        return out, probs.data.copy()
    return out

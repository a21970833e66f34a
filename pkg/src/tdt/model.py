"""The hierarchical encoder-decoder.

Encoding runs in three stages over token states of shape [N, d_model]:

1. bottom-up: N1 layers of windowed local self-attention + feed-forward,
   so each token sees at most n_bottom_up * window/2 positions of context;
2. segment level: token states are pooled into M overlapping fixed-length
   segments which are updated by N2 layers of full self-attention;
3. top-down: N3 layers in which tokens attend the segment states through
   cross-attention (or a concatenation projection in the ablation variant),
   injecting document-global context back into every position.

A standard causal decoder attends the final token states only. Every
sublayer has the form ``x + LayerNorm(branch)``: the residual stream is
never normalized, so a zero-weight branch is exactly the identity.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import ops
from .attention import (
    AttentionConfig,
    AttentionParams,
    MaskSpec,
    OpCounter,
    band_popcount,
    build_mask,
    cross_attention_topdown,
    init_attention_params,
    local_self_attention,
    multi_head_attention,
)
from .pooling import (
    SegmentationSpec,
    labels_to_weights,
    pool_average,
    pool_weighted,
    segment_index_map,
)
from .rng import RngStream
from .tensor import ConfigError, Parameter, Tensor, UsageError

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2

LN_EPS = 1e-5
# Branch layer-norm gains start small so the residual stream is dominated by
# token content rather than normalized init noise; the gains are trainable
# and grow as branches become useful.
BRANCH_GAIN_INIT = 0.1

POOLING_MODES = ("avg", "ada", "oracle_ada")
TOPDOWN_MODES = ("cross", "concat", "none")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 64
    d_model: int = 64
    n_heads: int = 4
    n_bottom_up: int = 2
    n_segment_layers: int = 1
    n_top_down: int = 1
    n_decoder_layers: int = 2
    window: int | None = 8
    kernel_size: int = 8
    stride: int = 6
    max_positions: int = 128
    ffn_mult: int = 4
    pooling_mode: str = "avg"
    topdown_mode: str = "cross"
    tie_output: bool = True
    dropout: float = 0.0

    def __post_init__(self):
        if self.vocab_size < 4:
            raise ConfigError("vocab_size must be >= 4 (pad/bos/eos reserved)")
        if self.pooling_mode not in POOLING_MODES:
            raise ConfigError(f"pooling_mode must be one of {POOLING_MODES}")
        if self.topdown_mode not in TOPDOWN_MODES:
            raise ConfigError(f"topdown_mode must be one of {TOPDOWN_MODES}")
        if min(self.n_bottom_up, self.n_segment_layers, self.n_top_down,
               self.n_decoder_layers) < 0:
            raise ConfigError("layer counts must be non-negative")
        if self.max_positions < 1 or self.ffn_mult < 1:
            raise ConfigError("max_positions and ffn_mult must be positive")
        # Validate divisibility / window / segmentation eagerly.
        AttentionConfig(self.d_model, self.n_heads, self.window)
        SegmentationSpec(self.kernel_size, self.stride)

    @property
    def segmentation(self) -> SegmentationSpec:
        return SegmentationSpec(self.kernel_size, self.stride)

    @property
    def attention(self) -> AttentionConfig:
        return AttentionConfig(self.d_model, self.n_heads, self.window)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        known = {f.name for f in fields(ModelConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return ModelConfig(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def desk_config(**overrides) -> ModelConfig:
    """Small preset that trains in minutes on a CPU."""
    return replace(ModelConfig(), **overrides)


def paper_config(**overrides) -> ModelConfig:
    """Full-scale preset: 8 bottom-up / 4 top-down / 2 segment layers,
    12 decoder layers, window 1024, kernel 32, stride 24."""
    base = ModelConfig(
        vocab_size=50265,
        d_model=1024,
        n_heads=16,
        n_bottom_up=8,
        n_segment_layers=2,
        n_top_down=4,
        n_decoder_layers=12,
        window=1024,
        kernel_size=32,
        stride=24,
        max_positions=16384,
    )
    return replace(base, **overrides)


# -----------------------------------------------------------------------------
# State wrappers
# -----------------------------------------------------------------------------


@dataclass
class TokenStates:
    states: Tensor
    length: int

    def __post_init__(self):
        if self.states.shape[0] != self.length:
            raise UsageError("token state rows must equal the true length")


@dataclass
class SegmentStates:
    states: Tensor

    @property
    def count(self) -> int:
        return self.states.shape[0]


# -----------------------------------------------------------------------------
# Parameter bundles
# -----------------------------------------------------------------------------


@dataclass
class _LnParams:
    gain: Parameter
    bias: Parameter


@dataclass
class _FfnParams:
    w1: Parameter
    b1: Parameter
    w2: Parameter
    b2: Parameter
    ln: _LnParams


@dataclass
class _EncoderLayer:
    attn: AttentionParams
    ln_attn: _LnParams
    ffn: _FfnParams
    cross: AttentionParams | None = None
    ln_cross: _LnParams | None = None
    concat_w: Parameter | None = None
    concat_b: Parameter | None = None
    ln_concat: _LnParams | None = None


@dataclass
class _DecoderLayer:
    self_attn: AttentionParams
    ln_self: _LnParams
    cross: AttentionParams
    ln_cross: _LnParams
    ffn: _FfnParams


def token_segment_assignment(n_tokens: int, spec: SegmentationSpec) -> np.ndarray:
    """For each token, the covering segment with the nearest window center
    (ties to the lower segment index)."""
    starts = np.array([s for s, _ in segment_index_map(n_tokens, spec)])
    centers = starts + (spec.kernel - 1) / 2.0
    assign = np.zeros(n_tokens, dtype=np.int64)
    for i in range(n_tokens):
        covering = np.nonzero((starts <= i) & (i < starts + spec.kernel))[0]
        best = covering[np.argmin(np.abs(i - centers[covering]))]
        assign[i] = best
    return assign


def top_down_concat_update(e, segs, assignment, proj_w, proj_b, ln: _LnParams,
                           eps: float = LN_EPS):
    """Concat ablation update: e + LN(proj([e_i ; s_assign(i)]))."""
    gathered = ops.take_rows(segs, assignment)
    cat = ops.concat([e, gathered], axis=-1)
    branch = ops.layer_norm(ops.linear(cat, proj_w, proj_b), ln.gain, ln.bias, eps)
    return ops.add(e, branch)


# -----------------------------------------------------------------------------
# Model
# -----------------------------------------------------------------------------


class Model:
    """Owns all parameters and the forward/decode/generate surface.

    Construction is deterministic in (config, seed); the parameter registry
    preserves creation order so training and checkpointing are reproducible.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Parameter] = {}
        self.init_std = 1.0 / math.sqrt(config.d_model)
        rng = RngStream(seed).split("init")
        c = config

        self.tok_emb = self._emb(rng, "embed.token", (c.vocab_size, c.d_model))
        self.pos_enc = self._emb(rng, "embed.pos_enc", (c.max_positions, c.d_model))
        self.pos_dec = self._emb(rng, "embed.pos_dec", (c.max_positions, c.d_model))
        self.max_segments = c.segmentation.n_segments(c.max_positions)
        self.pos_seg = self._emb(rng, "embed.pos_seg", (self.max_segments, c.d_model))
        if not c.tie_output:
            self.out_w = self._emb(rng, "out.weight", (c.d_model, c.vocab_size))
        else:
            self.out_w = None

        self.bottom_up = [
            self._encoder_layer(rng, f"bottom_up.{i}") for i in range(c.n_bottom_up)
        ]
        self.segment_layers = [
            self._encoder_layer(rng, f"segment.{i}") for i in range(c.n_segment_layers)
        ]
        self.top_down = [
            self._encoder_layer(
                rng,
                f"top_down.{i}",
                with_cross=(c.topdown_mode == "cross"),
                with_concat=(c.topdown_mode == "concat"),
            )
            for i in range(c.n_top_down)
        ]
        self.decoder = [
            self._decoder_layer(rng, f"decoder.{i}") for i in range(c.n_decoder_layers)
        ]

    # -- construction helpers -------------------------------------------------

    def _register(self, p: Parameter) -> Parameter:
        if p.name in self.params:
            raise ConfigError(f"duplicate parameter name {p.name}")
        self.params[p.name] = p
        return p

    def _emb(self, rng, name, shape) -> Parameter:
        return self._register(
            Parameter(name, rng.split(name).normal(shape, std=self.init_std))
        )

    def _ln(self, prefix) -> _LnParams:
        d = self.config.d_model
        return _LnParams(
            gain=self._register(
                Parameter(f"{prefix}.gain", np.full(d, BRANCH_GAIN_INIT))
            ),
            bias=self._register(Parameter(f"{prefix}.bias", np.zeros(d))),
        )

    def _attn(self, rng, prefix) -> AttentionParams:
        ap = init_attention_params(rng.split(prefix), self.config.d_model, prefix, self.init_std)
        for p in ap.all():
            self._register(p)
        return ap

    def _ffn(self, rng, prefix) -> _FfnParams:
        d = self.config.d_model
        hidden = d * self.config.ffn_mult
        r = rng.split(prefix)
        return _FfnParams(
            w1=self._register(Parameter(f"{prefix}.w1", r.split("w1").normal((d, hidden), std=self.init_std))),
            b1=self._register(Parameter(f"{prefix}.b1", np.zeros(hidden))),
            w2=self._register(Parameter(f"{prefix}.w2", r.split("w2").normal((hidden, d), std=1.0 / math.sqrt(hidden)))),
            b2=self._register(Parameter(f"{prefix}.b2", np.zeros(d))),
            ln=self._ln(f"{prefix}.ln"),
        )

    def _encoder_layer(self, rng, prefix, with_cross=False, with_concat=False) -> _EncoderLayer:
        layer = _EncoderLayer(
            attn=self._attn(rng, f"{prefix}.attn"),
            ln_attn=self._ln(f"{prefix}.ln_attn"),
            ffn=self._ffn(rng, f"{prefix}.ffn"),
        )
        if with_cross:
            layer.cross = self._attn(rng, f"{prefix}.cross")
            layer.ln_cross = self._ln(f"{prefix}.ln_cross")
        if with_concat:
            d = self.config.d_model
            r = rng.split(f"{prefix}.concat")
            layer.concat_w = self._register(
                Parameter(f"{prefix}.concat.w", r.normal((2 * d, d), std=1.0 / math.sqrt(2 * d)))
            )
            layer.concat_b = self._register(Parameter(f"{prefix}.concat.b", np.zeros(d)))
            layer.ln_concat = self._ln(f"{prefix}.ln_concat")
        return layer

    def _decoder_layer(self, rng, prefix) -> _DecoderLayer:
        return _DecoderLayer(
            self_attn=self._attn(rng, f"{prefix}.self_attn"),
            ln_self=self._ln(f"{prefix}.ln_self"),
            cross=self._attn(rng, f"{prefix}.cross"),
            ln_cross=self._ln(f"{prefix}.ln_cross"),
            ffn=self._ffn(rng, f"{prefix}.ffn"),
        )

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    # -- forward stages --------------------------------------------------------

    def embed(self, token_ids) -> Tensor:
        """Token plus learned absolute position embeddings.

        Accepts one sequence [N] or a same-length batch [B, N].
        """
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.ndim not in (1, 2):
            raise UsageError("embed expects [N] or [B, N] token ids")
        n = ids.shape[-1]
        if n < 1 or ids.size < 1:
            raise UsageError("cannot embed an empty sequence")
        if n > self.config.max_positions:
            raise UsageError(
                f"sequence length {n} exceeds max_positions {self.config.max_positions}"
            )
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise UsageError(
                f"token id out of range [0, {self.config.vocab_size})"
            )
        tok = ops.embedding(self.tok_emb, ids)
        pos = ops.embedding(self.pos_enc, np.arange(n))
        return ops.add(tok, pos)

    def _attn_sublayer(self, x, layer, counter, kind, context=None):
        cfg = self.config.attention
        if kind == "local":
            branch = local_self_attention(x, layer.attn, cfg, counter)
        elif kind == "full":
            branch = multi_head_attention(x, x, x, layer.attn, cfg, None, counter)
        elif kind == "causal":
            t = x.shape[-2]
            mask = build_mask(MaskSpec.causal(), t, t)
            branch = multi_head_attention(x, x, x, layer.self_attn, cfg, mask, counter)
        elif kind == "enc_dec":
            branch = multi_head_attention(x, context, context, layer.cross, cfg, None, counter)
        else:
            raise UsageError(f"unknown sublayer kind {kind}")
        ln = {
            "local": getattr(layer, "ln_attn", None),
            "full": getattr(layer, "ln_attn", None),
            "causal": getattr(layer, "ln_self", None),
            "enc_dec": getattr(layer, "ln_cross", None),
        }[kind]
        return ops.add(x, ops.layer_norm(branch, ln.gain, ln.bias, LN_EPS))

    def _ffn_sublayer(self, x, ffn: _FfnParams):
        return ops.ffn_block(x, ffn.w1, ffn.b1, ffn.w2, ffn.b2, ffn.ln.gain, ffn.ln.bias, LN_EPS)

    def encode_bottom_up(self, x, counter: OpCounter | None = None) -> Tensor:
        """N1 blocks of local self-attention + feed-forward."""
        for layer in self.bottom_up:
            x = self._attn_sublayer(x, layer, counter, "local")
            x = self._ffn_sublayer(x, layer.ffn)
        return x

    def _resolve_pool_weights(self, shape, weights, labels) -> np.ndarray | None:
        mode = self.config.pooling_mode
        if mode == "avg":
            return None
        if mode == "oracle_ada":
            if labels is None:
                raise ConfigError("pooling_mode=oracle_ada requires per-token labels")
            return labels_to_weights(np.asarray(labels))
        if weights is None:
            raise ConfigError("pooling_mode=ada requires per-token importance weights")
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != shape:
            raise UsageError(f"expected importance weights of shape {shape}, got {w.shape}")
        return w

    def encode_segments(self, x, counter: OpCounter | None = None,
                        weights=None, labels=None) -> Tensor:
        """Pool token states into segments and run N2 full-attention blocks."""
        spec = self.config.segmentation
        p = self._resolve_pool_weights(x.shape[:-1], weights, labels)
        segs = pool_average(x, spec) if p is None else pool_weighted(x, p, spec)
        m = segs.shape[-2]
        segs = ops.add(segs, ops.embedding(self.pos_seg, np.arange(m)))
        for layer in self.segment_layers:
            segs = self._attn_sublayer(segs, layer, counter, "full")
            segs = self._ffn_sublayer(segs, layer.ffn)
        return segs

    def encode_top_down(self, x, segs, counter: OpCounter | None = None) -> Tensor:
        """N3 blocks of local attention, token-segment cross-attention, FFN."""
        cfg = self.config.attention
        for layer in self.top_down:
            x = self._attn_sublayer(x, layer, counter, "local")
            x = cross_attention_topdown(
                x, segs, layer.cross, layer.ln_cross.gain, layer.ln_cross.bias,
                cfg, counter, LN_EPS,
            )
            x = self._ffn_sublayer(x, layer.ffn)
        return x

    def encode_top_down_concat(self, x, segs, counter: OpCounter | None = None) -> Tensor:
        """Ablation variant: the cross-attention step is replaced by projecting
        [token ; assigned segment] back to d_model."""
        n = x.shape[-2]
        assign = token_segment_assignment(n, self.config.segmentation)
        for layer in self.top_down:
            x = self._attn_sublayer(x, layer, counter, "local")
            x = top_down_concat_update(
                x, segs, assign, layer.concat_w, layer.concat_b, layer.ln_concat, LN_EPS
            )
            x = self._ffn_sublayer(x, layer.ffn)
        return x

    def encode(self, token_ids, counter: OpCounter | None = None,
               weights=None, labels=None) -> Tensor:
        """Full encoder pass; composition depends on ``topdown_mode``."""
        x = self.embed(token_ids)
        x = self.encode_bottom_up(x, counter)
        if self.config.topdown_mode == "none":
            return x
        segs = self.encode_segments(x, counter, weights=weights, labels=labels)
        if self.config.topdown_mode == "cross":
            return self.encode_top_down(x, segs, counter)
        return self.encode_top_down_concat(x, segs, counter)

    # -- decoder ----------------------------------------------------------------

    def decode(self, prefix_ids, enc_out, counter: OpCounter | None = None) -> Tensor:
        """Next-token logits at every prefix position under a causal mask.

        Accepts one prefix [T] or a batch [B, T] aligned with batched encoder
        output [B, N, d].
        """
        ids = np.asarray(prefix_ids, dtype=np.int64)
        if ids.ndim not in (1, 2):
            raise UsageError("decode expects [T] or [B, T] prefix ids")
        t = ids.shape[-1]
        if t < 1:
            raise UsageError("decoder prefix must be non-empty")
        if t > self.config.max_positions:
            raise UsageError(
                f"prefix length {t} exceeds max_positions {self.config.max_positions}"
            )
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise UsageError(f"token id out of range [0, {self.config.vocab_size})")
        y = ops.add(
            ops.embedding(self.tok_emb, ids), ops.embedding(self.pos_dec, np.arange(t))
        )
        for layer in self.decoder:
            y = self._attn_sublayer(y, layer, counter, "causal")
            y = self._attn_sublayer(y, layer, counter, "enc_dec", context=enc_out)
            y = self._ffn_sublayer(y, layer.ffn)
        if self.out_w is not None:
            return ops.linear(y, self.out_w)
        logits = ops.matmul(
            ops.reshape(y, (-1, self.config.d_model)),
            ops.transpose(self.tok_emb, (1, 0)),
        )
        return ops.reshape(logits, y.shape[:-1] + (self.config.vocab_size,))

    def generate(self, source_ids, max_len: int, strategy: str = "greedy",
                 beam_size: int = 1, eos_id: int = EOS_ID,
                 weights=None, labels=None) -> list[int]:
        """Emit up to ``max_len`` tokens; the terminating eos, when produced,
        is included in the returned sequence.

        Greedy breaks ties toward the lowest token id; beam search is
        length-normalized and fully deterministic.
        """
        if max_len < 1:
            raise UsageError("max_len must be >= 1")
        enc = self.encode(source_ids, weights=weights, labels=labels)
        if strategy == "greedy" or (strategy == "beam" and beam_size == 1):
            prefix = [BOS_ID]
            out: list[int] = []
            for _ in range(max_len):
                logits = self.decode(prefix, enc)
                nxt = int(np.argmax(logits.data[-1]))
                out.append(nxt)
                if nxt == eos_id:
                    break
                prefix.append(nxt)
            return out
        if strategy != "beam":
            raise UsageError(f"unknown generation strategy {strategy!r}")
        return self._beam(enc, max_len, beam_size, eos_id)

    def _beam(self, enc, max_len: int, beam_size: int, eos_id: int) -> list[int]:
        # Hypotheses: (emitted ids, total logprob, finished).
        hyps = [((), 0.0, False)]
        for _ in range(max_len):
            candidates = []
            any_open = False
            for ids, logp, done in hyps:
                if done:
                    candidates.append((ids, logp, True))
                    continue
                any_open = True
                logits = self.decode([BOS_ID] + list(ids), enc).data[-1]
                logprobs = logits - _logsumexp(logits)
                top = np.argsort(-logprobs, kind="stable")[: beam_size]
                for tok in top:
                    tok = int(tok)
                    candidates.append(
                        (ids + (tok,), logp + float(logprobs[tok]), tok == eos_id)
                    )
            if not any_open:
                break
            candidates.sort(key=lambda h: (-(h[1] / len(h[0])), h[0]))
            hyps = candidates[:beam_size]
        best = max(hyps, key=lambda h: (h[1] / max(1, len(h[0])), [-i for i in h[0]]))
        return list(best[0])


def _logsumexp(v: np.ndarray) -> float:
    m = float(v.max())
    return m + float(np.log(np.exp(v - m).sum()))


# -----------------------------------------------------------------------------
# Score budgets for full passes
# -----------------------------------------------------------------------------


def encode_score_budget(config: ModelConfig, n_tokens: int) -> int:
    """Per-head score evaluations of one encoder forward pass.

    none:   N1 * B
    cross:  N1 * B + N2 * M^2 + N3 * (B + N * M)
    concat: N1 * B + N2 * M^2 + N3 * B
    where B is the band popcount for (N, window).
    """
    b = band_popcount(n_tokens, config.window)
    total = config.n_bottom_up * b
    if config.topdown_mode == "none":
        return total
    m = config.segmentation.n_segments(n_tokens)
    total += config.n_segment_layers * m * m
    if config.topdown_mode == "cross":
        total += config.n_top_down * (b + n_tokens * m)
    else:
        total += config.n_top_down * b
    return total


def decode_score_budget(config: ModelConfig, prefix_len: int, enc_len: int) -> int:
    """Per-head score evaluations of one decoder forward pass."""
    causal = prefix_len * (prefix_len + 1) // 2
    return config.n_decoder_layers * (causal + prefix_len * enc_len)

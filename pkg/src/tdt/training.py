"""Training loops, tagger training, and exact-match evaluation.

Everything here is bit-reproducible for a given (seed, config): batches come
from counter-based streams keyed by step and batch index, batch items are
processed sequentially (gradient accumulation, never padded batching), and
validation uses a fixed seed-derived instance set. The best-validation
parameter snapshot is restored into the model when training finishes; a
non-finite loss aborts the run and restores the last good snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .model import BOS_ID, EOS_ID, PAD_ID, Model, ModelConfig
from .optim import Adam
from .rng import RngStream
from .tensor import (
    ConfigError,
    NumericsError,
    Parameter,
    Tape,
    backward,
    recording,
)


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)
    seed: int = 0
    config_hash: str = ""
    steps: int = 0
    best_step: int | None = None
    aborted: bool = False

    def to_dict(self) -> dict:
        return {
            "losses": self.losses,
            "final_metrics": self.final_metrics,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "steps": self.steps,
            "best_step": self.best_step,
            "aborted": self.aborted,
        }


def _pool_kwargs(model: Model, instance) -> dict:
    """Pooling inputs for one instance; training feeds oracle labels for both
    adaptive modes (the learned tagger only enters at evaluation time)."""
    mode = model.config.pooling_mode
    if mode == "avg":
        return {}
    if instance.labels is None:
        raise ConfigError(f"pooling_mode={mode} requires instances with oracle labels")
    return {"labels": instance.labels}


def instance_loss(model: Model, instance, tape: Tape | None = None, loss_scale: float = 1.0):
    """Cross-entropy of teacher-forced decoding for one instance."""
    dec_in = [BOS_ID] + list(instance.target)
    dec_out = list(instance.target) + [EOS_ID]

    def run():
        enc = model.encode(instance.source, **_pool_kwargs(model, instance))
        logits = model.decode(dec_in, enc)
        loss = ops.cross_entropy(logits, np.array(dec_out), PAD_ID)
        return loss if loss_scale == 1.0 else ops.scale(loss, loss_scale)

    if tape is None:
        return run()
    with recording(tape):
        return run()


def batch_loss(model: Model, instances, tape: Tape | None = None, loss_scale: float = 1.0):
    """Cross-entropy averaged over a same-shape batch in one stacked forward.

    All instances must share source and target lengths; the value equals the
    mean of the per-instance losses.
    """
    instances = list(instances)
    src = np.array([inst.source for inst in instances], dtype=np.int64)
    dec_in = np.array([[BOS_ID] + list(inst.target) for inst in instances], dtype=np.int64)
    dec_out = np.array([list(inst.target) + [EOS_ID] for inst in instances], dtype=np.int64)
    kwargs = {}
    mode = model.config.pooling_mode
    if mode != "avg":
        if any(inst.labels is None for inst in instances):
            raise ConfigError(f"pooling_mode={mode} requires instances with oracle labels")
        kwargs["labels"] = np.array([inst.labels for inst in instances], dtype=np.int64)

    def run():
        enc = model.encode(src, **kwargs)
        logits = model.decode(dec_in, enc)
        loss = ops.cross_entropy(logits, dec_out, PAD_ID)
        return loss if loss_scale == 1.0 else ops.scale(loss, loss_scale)

    if tape is None:
        return run()
    with recording(tape):
        return run()


def _shape_groups(instances) -> list[list]:
    """Group same-shape instances so each group can run as one stacked pass."""
    groups: dict[tuple, list] = {}
    for inst in instances:
        key = (len(inst.source), len(inst.target), inst.labels is None)
        groups.setdefault(key, []).append(inst)
    return list(groups.values())


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {name: p.value.data.copy() for name, p in model.params.items()}


def _restore(model: Model, snap: dict[str, np.ndarray]) -> None:
    for name, p in model.params.items():
        p.value.data[...] = snap[name]


def train(
    model: Model,
    task_fn,
    steps: int,
    seed: int,
    lr: float = 3e-4,
    batch_size: int = 8,
    val_size: int = 32,
    eval_every: int | None = None,
    beta1: float = 0.9,
    beta2: float = 0.999,
    adam_eps: float = 1e-8,
) -> TrainReport:
    """Train ``model`` on instances drawn from ``task_fn(rng) -> TaskInstance``.

    Keeps the parameter snapshot with the best validation token accuracy and
    restores it before returning. ``steps == 0`` leaves the model untouched.
    """
    if steps < 0:
        raise ConfigError("steps must be >= 0")
    report = TrainReport(seed=seed, config_hash=model.config.config_hash(), steps=steps)
    if steps == 0:
        return report
    root = RngStream(seed)
    val_set = [task_fn(root.split(f"val/{j}")) for j in range(val_size)]
    eval_every = eval_every or max(1, steps // 4)
    opt = Adam(model.parameters(), lr=lr, beta1=beta1, beta2=beta2, eps=adam_eps)
    best_snap = _snapshot(model)
    best_acc = -1.0
    try:
        for step in range(1, steps + 1):
            opt.zero_grads()
            total = 0.0
            batch = [task_fn(root.split(f"train/{step}/{j}")) for j in range(batch_size)]
            for group in _shape_groups(batch):
                tape = Tape()
                share = len(group) / batch_size
                if len(group) == 1:
                    loss = instance_loss(model, group[0], tape, loss_scale=share)
                else:
                    loss = batch_loss(model, group, tape, loss_scale=share)
                backward(loss, tape)
                total += loss.item()
            opt.step()
            report.losses.append(total)
            if step % eval_every == 0 or step == steps:
                metrics = eval_accuracy(model, val_set)
                if metrics["token_acc"] > best_acc:
                    best_acc = metrics["token_acc"]
                    best_snap = _snapshot(model)
                    report.best_step = step
    except NumericsError:
        report.aborted = True
    _restore(model, best_snap)
    report.final_metrics = (
        eval_accuracy(model, val_set) if best_acc >= 0 else {"token_acc": 0.0, "seq_acc": 0.0}
    )
    return report


def eval_accuracy(
    model: Model,
    instances,
    strategy: str = "greedy",
    beam_size: int = 1,
    tagger=None,
    max_len: int | None = None,
) -> dict:
    """Exact-match token and sequence accuracy over a task set.

    Generated sequences have a trailing eos stripped before comparison. The
    accounting is a plain sum of per-instance counts, so it is invariant to
    evaluation order. Adaptive pooling ("ada") requires a tagger whose logits
    become the pooling weights; oracle mode reads each instance's labels.
    """
    instances = list(instances)
    if not instances:
        raise ConfigError("eval_accuracy requires a non-empty task set")
    mode = model.config.pooling_mode
    tok_hits = 0
    tok_total = 0
    seq_hits = 0
    for inst in instances:
        kwargs = {}
        if mode == "ada":
            if tagger is None:
                raise ConfigError("pooling_mode=ada evaluation requires a tagger")
            kwargs["weights"] = tagger.weights(inst.source)
        elif mode == "oracle_ada":
            if inst.labels is None:
                raise ConfigError("pooling_mode=oracle_ada requires instance labels")
            kwargs["labels"] = inst.labels
        limit = max_len if max_len is not None else len(inst.target) + 1
        gen = model.generate(
            inst.source, max_len=limit, strategy=strategy, beam_size=beam_size, **kwargs
        )
        if gen and gen[-1] == EOS_ID:
            gen = gen[:-1]
        tgt = list(inst.target)
        tok_total += len(tgt)
        tok_hits += sum(1 for a, b in zip(gen, tgt) if a == b)
        seq_hits += int(gen == tgt)
    return {
        "token_acc": tok_hits / max(1, tok_total),
        "seq_acc": seq_hits / len(instances),
    }


# -----------------------------------------------------------------------------
# Importance tagger
# -----------------------------------------------------------------------------


class Tagger:
    """Encoder plus a per-token scoring head.

    The raw head logits are used directly as pooling weights at evaluation
    time (the per-window softmax does its own normalization).
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        if config.pooling_mode != "avg":
            config = ModelConfig.from_dict({**config.to_dict(), "pooling_mode": "avg"})
        self.config = config
        self.encoder = Model(config, seed=seed)
        rng = RngStream(seed).split("tagger")
        d = config.d_model
        self.head_w = Parameter("tagger.head.w", rng.split("w").normal((d, 1), std=0.02))
        self.head_b = Parameter("tagger.head.b", np.zeros(1))
        self.params = dict(self.encoder.params)
        self.params["tagger.head.w"] = self.head_w
        self.params["tagger.head.b"] = self.head_b

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def logits(self, token_ids, tape: Tape | None = None):
        ids = np.asarray(token_ids, dtype=np.int64)

        def run():
            enc = self.encoder.encode(ids)
            return ops.reshape(ops.linear(enc, self.head_w, self.head_b), ids.shape)

        if tape is None:
            return run()
        with recording(tape):
            return run()

    def weights(self, token_ids) -> np.ndarray:
        return self.logits(token_ids).data.copy()

    def predict(self, token_ids) -> np.ndarray:
        return (self.weights(token_ids) > 0.0).astype(np.int64)


def _bce_with_logits(z, labels: np.ndarray):
    """mean(softplus(z) - z * y), stable via logsumexp([0, z])."""
    n = z.size
    zc = ops.reshape(z, (n, 1))
    stacked = ops.concat([ops.scale(zc, 0.0), zc], axis=1)
    softplus = ops.logsumexp_last(stacked)
    zy = ops.mul_const(zc, labels.astype(np.float64).reshape(n, 1))
    return ops.scale(ops.sum_all(ops.sub(softplus, ops.reshape(zy, (n,)))), 1.0 / n)


def token_f1(pred, labels) -> float:
    pred = np.asarray(pred) != 0
    labels = np.asarray(labels) != 0
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def train_tagger(
    config: ModelConfig,
    doc_fn,
    steps: int,
    seed: int,
    lr: float = 3e-4,
    batch_size: int = 8,
) -> tuple[Tagger, TrainReport]:
    """Fit a tagger on ``doc_fn(rng) -> (token_ids, labels)`` pairs with
    per-token binary cross-entropy."""
    tagger = Tagger(config, seed=seed)
    report = TrainReport(seed=seed, config_hash=tagger.config.config_hash(), steps=steps)
    if steps == 0:
        return tagger, report
    root = RngStream(seed).split("tagger-train")
    opt = Adam(tagger.parameters(), lr=lr)
    try:
        for step in range(1, steps + 1):
            opt.zero_grads()
            total = 0.0
            drawn = [doc_fn(root.split(f"train/{step}/{j}")) for j in range(batch_size)]
            groups: dict[int, list] = {}
            for ids, labels in drawn:
                groups.setdefault(len(ids), []).append((ids, labels))
            for group in groups.values():
                ids = np.array([g[0] for g in group], dtype=np.int64)
                labels = np.array([g[1] for g in group], dtype=np.int64)
                tape = Tape()
                with recording(tape):
                    z = tagger.logits(ids)
                    loss = ops.scale(_bce_with_logits(z, labels), len(group) / batch_size)
                backward(loss, tape)
                total += loss.item()
            opt.step()
            report.losses.append(total)
    except NumericsError:
        report.aborted = True
    return tagger, report

"""Complexity and memory benchmarks, and the ablation driver.

Each benchmark cell runs one encoder forward per trial and reports three
things: the exact number of query-key dot products (deterministic, always
equal to the closed-form budget), the median wall time of the trials, and the
peak of the internal tensor-allocation tracker. Cells that exhaust memory
are recorded as failed and the sweep continues.

Variants mirror the ablation rows: "full" is unwindowed self-attention with
no segment level, "local-only" drops the top-down update, "topdown-cross"
is the complete model, "topdown-concat" replaces cross-attention with the
concatenation update.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tensor_mod
from .attention import OpCounter
from .model import Model, ModelConfig, encode_score_budget
from .rng import RngStream
from .tasks import gen_keyvalue_task
from .tensor import ConfigError, UsageError
from .training import eval_accuracy, train

VARIANTS = ("full", "local-only", "topdown-cross", "topdown-concat")

CSV_COLUMNS = ("variant", "N", "w", "M", "score_evals", "wall_ms_median", "peak_bytes", "seed")


@dataclass
class BenchRecord:
    variant: str
    n_tokens: int
    window: int | None
    n_segments: int
    score_evals: int
    wall_ms_median: float
    peak_bytes: int
    seed: int
    failed: bool = False

    def to_row(self) -> dict:
        return {
            "variant": self.variant,
            "N": self.n_tokens,
            "w": "inf" if self.window is None else self.window,
            "M": self.n_segments,
            "score_evals": self.score_evals,
            "wall_ms_median": self.wall_ms_median,
            "peak_bytes": self.peak_bytes,
            "seed": self.seed,
            "failed": self.failed,
        }


def variant_config(variant: str, window: int | None, base: ModelConfig) -> ModelConfig:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown bench variant {variant!r} (use one of {VARIANTS})")
    d = base.to_dict()
    if variant == "full":
        d.update(window=None, topdown_mode="none")
    elif variant == "local-only":
        d.update(window=window, topdown_mode="none")
    elif variant == "topdown-cross":
        d.update(window=window, topdown_mode="cross")
    else:
        d.update(window=window, topdown_mode="concat")
    return ModelConfig.from_dict(d)


def bench_cell(
    variant: str,
    n_tokens: int,
    window: int | None,
    base: ModelConfig,
    trials: int = 3,
    seed: int = 0,
) -> BenchRecord:
    """Time and count one encoder configuration at one sequence length."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    cfg = variant_config(variant, window, base)
    if n_tokens > cfg.max_positions:
        cfg = ModelConfig.from_dict({**cfg.to_dict(), "max_positions": n_tokens})
    m = cfg.segmentation.n_segments(n_tokens)
    rng = RngStream(seed).split(f"bench/{variant}/{n_tokens}")
    ids = rng.randint(3, cfg.vocab_size, n_tokens)
    try:
        model = Model(cfg, seed=seed)
        times = []
        evals = 0
        peak = 0
        for _ in range(trials):
            counter = OpCounter()
            tensor_mod.reset_peak()
            t0 = time.perf_counter()
            model.encode(ids, counter)
            times.append((time.perf_counter() - t0) * 1000.0)
            evals = counter.score_evals
            peak = max(peak, tensor_mod.peak_bytes())
        return BenchRecord(
            variant=variant,
            n_tokens=n_tokens,
            window=cfg.window,
            n_segments=m,
            score_evals=evals,
            wall_ms_median=float(np.median(times)),
            peak_bytes=peak,
            seed=seed,
        )
    except MemoryError:
        return BenchRecord(
            variant=variant, n_tokens=n_tokens, window=window, n_segments=m,
            score_evals=0, wall_ms_median=0.0, peak_bytes=0, seed=seed, failed=True,
        )


def bench_sweep(
    n_list,
    window: int,
    variants=VARIANTS,
    trials: int = 3,
    seed: int = 0,
    base: ModelConfig | None = None,
) -> list[BenchRecord]:
    if not n_list or not variants:
        raise ConfigError("bench grid must be non-empty")
    if trials < 3:
        raise ConfigError("timing needs at least 3 trials")
    if base is None:
        base = ModelConfig(kernel_size=32, stride=24, max_positions=max(n_list))
    records = []
    for variant in variants:
        for n in n_list:
            records.append(bench_cell(variant, n, window, base, trials, seed))
    return records


def expected_score_evals(record: BenchRecord, base: ModelConfig) -> int:
    """Closed-form budget for a record's cell, including the head multiplier."""
    cfg = variant_config(record.variant, record.window, base)
    return cfg.n_heads * encode_score_budget(cfg, record.n_tokens)


def records_to_csv(records) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        row = r.to_row()
        lines.append(",".join(str(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def records_to_json(records) -> str:
    return json.dumps([r.to_row() for r in records], indent=2) + "\n"


def parse_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


# -----------------------------------------------------------------------------
# Ablation driver
# -----------------------------------------------------------------------------


@dataclass
class AblationCell:
    variant: str
    window: int
    accuracies: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def sd(self) -> float:
        return float(np.std(self.accuracies))

    def to_row(self) -> dict:
        return {
            "variant": self.variant,
            "window": self.window,
            "mean_acc": self.mean,
            "sd_acc": self.sd,
            "per_seed": self.accuracies,
        }


def ablate(
    seeds,
    windows=(4, 8, 16),
    base_window: int = 8,
    steps: int = 600,
    n_tokens: int = 64,
    n_eval: int = 64,
    base: ModelConfig | None = None,
    lr: float = 3e-4,
    batch_size: int = 8,
) -> dict:
    """Train {cross, concat, none} at the base window plus cross at each sweep
    window on the key-value task; report mean +/- sd accuracy per cell.

    The orderings (cross >= concat >= none, and accuracy monotone in window)
    are emitted as boolean flags, not asserted. Identical seeds reproduce the
    table bit-identically.
    """
    seeds = list(seeds)
    if len(seeds) < 3:
        raise ConfigError("ablation requires at least 3 seeds")
    if base is None:
        base = ModelConfig()
    cells: list[AblationCell] = []
    grid = [("cross", base_window), ("concat", base_window), ("none", base_window)]
    grid += [("cross", w) for w in windows if w != base_window]

    def task_fn(rng):
        return gen_keyvalue_task(rng, n_tokens, base_window, base.n_bottom_up, base.vocab_size)

    for variant, window in grid:
        cell = AblationCell(variant=variant, window=window)
        for seed in seeds:
            cfg = ModelConfig.from_dict(
                {**base.to_dict(), "topdown_mode": variant, "window": window,
                 "pooling_mode": "avg" if variant == "none" else base.pooling_mode}
            )
            model = Model(cfg, seed=seed)
            train(model, task_fn, steps=steps, seed=seed, lr=lr, batch_size=batch_size)
            val = [task_fn(RngStream(seed).split(f"ablate-eval/{j}")) for j in range(n_eval)]
            cell.accuracies.append(eval_accuracy(model, val)["token_acc"])
        cells.append(cell)

    by_key = {(c.variant, c.window): c for c in cells}
    cross_rows = sorted(
        [c for c in cells if c.variant == "cross"], key=lambda c: c.window
    )
    monotone = all(
        cross_rows[i].mean <= cross_rows[i + 1].mean + 1e-12
        for i in range(len(cross_rows) - 1)
    )
    ordering = (
        by_key[("cross", base_window)].mean
        >= by_key[("concat", base_window)].mean
        >= by_key[("none", base_window)].mean
    )
    return {
        "rows": [c.to_row() for c in cells],
        "base_window": base_window,
        "steps": steps,
        "seeds": seeds,
        "window_monotone": bool(monotone),
        "ordering_cross_concat_none": bool(ordering),
    }

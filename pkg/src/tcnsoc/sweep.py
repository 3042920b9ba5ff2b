"""Hyperparameter sweep over (stacks, window) grids and the latency/file-size
benchmark harness.

Each grid cell trains one model on the hybrid training set, evaluates it
teacher-forced on the held-out cycle(s), and serializes it to measure the
on-disk footprint. Latency is measured afterwards, sequentially, so timing
is never skewed by concurrent training.
"""

from __future__ import annotations

import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import DriveCycle, build_hybrid, fit_normalization
from .model import TcnConfig, TcnModel, build_model, parameter_count, predict
from .modelio import deserialize, serialize
from .rng import SplitMix64
from .training import TrainConfig, evaluate, train

REPORT_COLUMNS = [
    "stacks", "window", "parameters", "mse", "file_size_bytes",
    "latency_ms_mean", "latency_ms_std", "accuracy_pct",
]


@dataclass
class LatencyStats:
    mean_s: float
    std_s: float
    iterations: int
    warmup: int


def measure_latency(
    model: TcnModel, window: np.ndarray, warmup: int = 100, iterations: int = 1000
) -> LatencyStats:
    """Wall-clock time of single-window eval-mode predictions.

    Warm-up passes are run first and excluded; mean and standard deviation
    are over the per-pass timings.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    for _ in range(warmup):
        predict(model, window)
    samples = np.empty(iterations)
    for i in range(iterations):
        t0 = time.perf_counter()
        predict(model, window)
        samples[i] = time.perf_counter() - t0
    return LatencyStats(float(samples.mean()), float(samples.std()), iterations, warmup)


@dataclass
class SweepRow:
    stacks: int
    window: int
    parameters: int = 0
    mse: float = float("nan")
    file_size_bytes: int = 0
    latency_ms_mean: float = float("nan")
    latency_ms_std: float = float("nan")
    accuracy_pct: float = float("nan")
    model_path: str = ""
    failed: bool = False
    error: str = ""


@dataclass
class SweepReport:
    rows: list[SweepRow]
    protocol: str
    train_cycles: list[str]
    eval_cycles: list[str]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(REPORT_COLUMNS) + "\n")
            for r in self.rows:
                fh.write(
                    f"{r.stacks},{r.window},{r.parameters},{r.mse!r},"
                    f"{r.file_size_bytes},{r.latency_ms_mean:.6f},"
                    f"{r.latency_ms_std:.6f},{r.accuracy_pct!r}\n"
                )

    def to_text(self) -> str:
        lines = [
            f"protocol: {self.protocol}  "
            f"(train: {', '.join(self.train_cycles)}; eval: {', '.join(self.eval_cycles)})",
            f"{'stacks':>6} {'window':>6} {'params':>8} {'mse':>12} "
            f"{'size_B':>9} {'lat_ms':>8} {'lat_sd':>8} {'acc_%':>8}",
        ]
        for r in self.rows:
            if r.failed:
                lines.append(f"{r.stacks:>6} {r.window:>6} FAILED: {r.error}")
            else:
                lines.append(
                    f"{r.stacks:>6} {r.window:>6} {r.parameters:>8} {r.mse:>12.6e} "
                    f"{r.file_size_bytes:>9} {r.latency_ms_mean:>8.3f} "
                    f"{r.latency_ms_std:>8.3f} {r.accuracy_pct:>8.2f}"
                )
        return "\n".join(lines) + "\n"

    @property
    def any_failed(self) -> bool:
        return any(r.failed for r in self.rows)


def _train_cell(args) -> SweepRow:
    (stacks, window, kernel_size, filters, p_keep, cell_seed, train_cycles,
     eval_cycles, train_cfg, stride, out_dir) = args
    row = SweepRow(stacks=stacks, window=window)
    try:
        config = TcnConfig(stacks=stacks, input_window=window,
                           kernel_size=kernel_size, filters=filters, p_keep=p_keep)
        row.parameters = parameter_count(config)
        norm = fit_normalization(train_cycles)
        dataset = build_hybrid(train_cycles, norm, window, stride=stride, seed=cell_seed)
        model = build_model(config, seed=cell_seed)
        cfg = replace(train_cfg, seed=cell_seed)
        model, _ = train(model, dataset, cfg)

        mses, accs = [], []
        for cycle in eval_cycles:
            metrics, _ = evaluate(model, cycle, mode="teacher")
            mses.append(metrics.mse)
            accs.append(metrics.accuracy_percent)
        row.mse = float(np.mean(mses))
        row.accuracy_pct = float(np.mean(accs))

        row.model_path = os.path.join(out_dir, f"tcn_s{stacks}_w{window}.bin")
        serialize(model, row.model_path)
        row.file_size_bytes = os.path.getsize(row.model_path)
    except Exception as exc:  # keep sweeping; the row records the diagnostic
        row.failed = True
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(
    stack_counts: list[int],
    window_lengths: list[int],
    cycles: list[DriveCycle],
    train_cfg: TrainConfig,
    *,
    kernel_size: int = 8,
    filters: int = 4,
    p_keep: float = 0.9,
    protocol: str = "held-out",
    holdout_index: int = -1,
    stride: int = 10,
    out_dir: str | None = None,
    jobs: int = 1,
    latency_warmup: int = 100,
    latency_iterations: int = 1000,
) -> SweepReport:
    """Train and score one model per (stacks, window) grid cell.

    protocol 'held-out' trains on all cycles except cycles[holdout_index]
    and evaluates on that one; protocol 'train-on-all' trains on the
    hybrid of all cycles and averages metrics over evaluations on each of
    them. Rows are ordered by (window, stacks) ascending. Cells that fail
    are reported in place and the sweep continues.
    """
    if not stack_counts or not window_lengths:
        raise ValueError("stack_counts and window_lengths must be non-empty")
    if protocol not in ("held-out", "train-on-all"):
        raise ValueError(f"protocol must be 'held-out' or 'train-on-all', got {protocol!r}")
    if protocol == "held-out" and len(cycles) < 2:
        raise ValueError("held-out protocol needs at least two cycles")

    if protocol == "held-out":
        holdout = cycles[holdout_index]
        train_cycles = [c for c in cycles if c is not holdout]
        eval_cycles = [holdout]
    else:
        train_cycles = list(cycles)
        eval_cycles = list(cycles)

    tmp = None
    if out_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="tcn_sweep_")
        out_dir = tmp.name
    os.makedirs(out_dir, exist_ok=True)

    grid = [(s, w) for w in sorted(window_lengths) for s in sorted(stack_counts)]
    seed_rng = SplitMix64(train_cfg.seed)
    cell_seeds = [int(seed_rng.next_u64()) for _ in grid]
    cell_args = [
        (s, w, kernel_size, filters, p_keep, cell_seeds[i], train_cycles,
         eval_cycles, train_cfg, stride, out_dir)
        for i, (s, w) in enumerate(grid)
    ]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_train_cell, cell_args))
    else:
        rows = [_train_cell(a) for a in cell_args]

    # latency phase: exclusive, sequential, on the serialized artifacts
    for row in rows:
        if row.failed:
            continue
        model = deserialize(row.model_path)
        sample = np.zeros((1, model.config.input_features, model.config.input_window))
        stats = measure_latency(model, sample, latency_warmup, latency_iterations)
        row.latency_ms_mean = stats.mean_s * 1e3
        row.latency_ms_std = stats.std_s * 1e3

    report = SweepReport(
        rows=rows,
        protocol=protocol,
        train_cycles=[c.name or f"cycle{i}" for i, c in enumerate(train_cycles)],
        eval_cycles=[c.name or f"cycle{i}" for i, c in enumerate(eval_cycles)],
    )
    if tmp is not None:
        tmp.cleanup()
    return report

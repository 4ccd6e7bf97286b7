"""Monte Carlo recovery experiments for HTP and HiHTP.

A sweep draws, for every measurement count ``m`` and trial index, a fresh
sparse signal and a fresh measurement operator, measures, optionally adds
noise, and runs each requested algorithm on the same instance. The random
stream of a cell is derived from ``(seed, m, trial)`` only, so results do not
depend on scheduling or on which algorithms are enabled.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .measure import (gaussian_operator, normalize_columns, subsampled_dft,
                      unnormalize_solution)
from .model import (FlatSparsity, Sparsity, SparsityTree, as_tree, block_bounds,
                    support_from_indices)
from .ripcalc import random_support
from .solve import SolverOptions, htp, hihtp

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "TrialRecord",
    "CSV_COLUMNS",
    "gen_signal",
    "add_noise",
    "block_metrics",
    "max_support_size",
    "run_cell",
    "run_sweep",
    "write_csv",
    "read_csv",
    "write_sidecar",
    "summarize",
    "worker_count",
]

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("algorithm", "m", "trial", "signal_recovered", "zero_blocks",
               "nonzero_blocks", "mean_block_error", "iterations", "wall_time_s")
ENSEMBLES = ("gaussian", "fourier_uniform", "fourier_lowest")
ALGORITHMS = ("htp", "hihtp")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _sparsity_from_json(obj) -> Sparsity:
    if isinstance(obj, (FlatSparsity, SparsityTree)):
        return obj
    if not isinstance(obj, dict):
        raise ConfigError("sparsity", "must be an object")
    try:
        if "tree" in obj:
            return SparsityTree.from_json(obj["tree"])
        if "levels" in obj:
            return SparsityTree.uniform([tuple(lv) for lv in obj["levels"]])
        return FlatSparsity(int(obj["N"]), int(obj["n"]), int(obj["s"]), int(obj["sigma"]))
    except KeyError as exc:
        raise ConfigError(f"sparsity.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("sparsity", str(exc)) from None


def _sparsity_to_json(sp: Sparsity) -> dict:
    if isinstance(sp, FlatSparsity):
        return sp.to_json()
    if sp.uniform_shape is not None:
        return {"levels": [list(lv) for lv in sp.uniform_shape]}
    return {"tree": sp.to_json()}


@dataclass(frozen=True)
class ExperimentConfig:
    sparsity: Sparsity
    m_grid: tuple[int, ...]
    ensemble: str = "gaussian"
    field: str = "real"
    trials: int = 100
    snr: Optional[float] = None
    recovery_eps: float = 1e-5
    block_eps: Optional[float] = None
    algorithms: tuple[str, ...] = ALGORITHMS
    seed: int = 0
    max_iters: int = 100

    def __post_init__(self):
        object.__setattr__(self, "sparsity", _sparsity_from_json(self.sparsity))
        object.__setattr__(self, "m_grid", tuple(int(m) for m in self.m_grid))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.block_eps is None:
            # noiseless runs use the signal tolerance for blocks, noisy runs 1e-2
            object.__setattr__(self, "block_eps", self.recovery_eps if self.snr is None else 1e-2)
        self.validate()

    @property
    def d(self) -> int:
        return self.sparsity.d

    def validate(self) -> None:
        if self.ensemble not in ENSEMBLES:
            raise ConfigError("ensemble", f"must be one of {ENSEMBLES}, got {self.ensemble!r}")
        if self.field not in ("real", "complex"):
            raise ConfigError("field", f"must be 'real' or 'complex', got {self.field!r}")
        if not self.m_grid:
            raise ConfigError("m_grid", "must not be empty")
        for m in self.m_grid:
            if not 1 <= m <= self.d:
                raise ConfigError("m_grid", f"entry {m} outside [1, d={self.d}]")
        if self.trials < 1:
            raise ConfigError("trials", "must be at least 1")
        if self.snr is not None and not self.snr > 0:
            raise ConfigError("snr", "must be positive")
        if not self.recovery_eps > 0:
            raise ConfigError("recovery_eps", "must be positive")
        if not self.block_eps > 0:
            raise ConfigError("block_eps", "must be positive")
        if not self.algorithms or any(a not in ALGORITHMS for a in self.algorithms):
            raise ConfigError("algorithms", f"must be a non-empty subset of {ALGORITHMS}")
        if self.max_iters < 1:
            raise ConfigError("max_iters", "must be at least 1")

    @classmethod
    def from_json(cls, obj: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        if "sparsity" not in obj:
            raise ConfigError("sparsity", "missing")
        if "m_grid" not in obj:
            raise ConfigError("m_grid", "missing")
        kwargs = dict(obj)
        for key, conv in (("trials", int), ("seed", int), ("max_iters", int),
                          ("recovery_eps", float)):
            if key in kwargs:
                try:
                    kwargs[key] = conv(kwargs[key])
                except (TypeError, ValueError):
                    raise ConfigError(key, f"cannot convert {kwargs[key]!r}") from None
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None

    def to_json(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["sparsity"] = _sparsity_to_json(self.sparsity)
        out["m_grid"] = list(self.m_grid)
        out["algorithms"] = list(self.algorithms)
        return out


@dataclass
class TrialRecord:
    algorithm: str
    m: int
    trial: int
    signal_recovered: bool
    blocks_recovered_zero: int
    blocks_recovered_nonzero: int
    mean_block_error: float
    iterations: int
    wall_time_seconds: float
    error: Optional[str] = None

    def csv_row(self) -> list[str]:
        if self.error is not None:
            return [self.algorithm, str(self.m), str(self.trial), "error", "", "", "", "", ""]
        return [self.algorithm, str(self.m), str(self.trial), str(int(self.signal_recovered)),
                str(self.blocks_recovered_zero), str(self.blocks_recovered_nonzero),
                repr(float(self.mean_block_error)), str(self.iterations),
                f"{self.wall_time_seconds:.6f}"]


def max_support_size(sparsity: Sparsity) -> int:
    """Largest number of leaves a budget-saturating support can hold."""
    if isinstance(sparsity, FlatSparsity):
        return sparsity.s * sparsity.sigma
    tree = as_tree(sparsity)
    best = np.ones(tree.d, dtype=np.int64)
    for depth in range(tree.depth - 1, -1, -1):
        n, s, off = tree.level_arrays(depth)
        best = np.array([np.sort(best[off[p]:off[p] + n[p]])[::-1][:s[p]].sum()
                         for p in range(len(n))])
    return int(best[0])


def gen_signal(sparsity: Sparsity, field: str = "real", rng_seed=None):
    """Random signal on a uniformly drawn saturating support.

    Nonzero entries are standard normal; complex signals draw real and
    imaginary parts independently.
    """
    rng = np.random.default_rng(rng_seed)
    omega = random_support(sparsity, rng)
    d = sparsity.d
    if field == "complex":
        x = np.zeros(d, dtype=np.complex128)
        x[omega] = rng.standard_normal(omega.size) + 1j * rng.standard_normal(omega.size)
    else:
        x = np.zeros(d)
        x[omega] = rng.standard_normal(omega.size)
    return x, support_from_indices(sparsity, omega)


def add_noise(y, snr: float, rng_seed=None) -> np.ndarray:
    """Add Gaussian noise scaled so that ``||y||^2 / ||e||^2 == snr``."""
    y = np.asarray(y)
    if not snr > 0:
        raise ValueError("snr must be positive")
    ny = np.linalg.norm(y)
    if ny == 0:
        raise ValueError("cannot set a signal-to-noise ratio for a zero measurement")
    rng = np.random.default_rng(rng_seed)
    if np.iscomplexobj(y):
        g = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    else:
        g = rng.standard_normal(y.shape)
    return y + g * (ny / (np.sqrt(snr) * np.linalg.norm(g)))


def block_metrics(x_hat, x, sparsity: Sparsity, block_eps: float):
    """Count recovered blocks and the mean block distance.

    Returns ``(zero_recovered, nonzero_recovered, mean_block_error)`` where a
    block counts as recovered when its l2 error is below ``block_eps`` and
    zero/nonzero refers to the true signal.
    """
    x_hat = np.asarray(x_hat)
    x = np.asarray(x)
    if x_hat.shape != x.shape or x.shape != (sparsity.d,):
        raise ValueError("signal dimensions do not match the sparsity")
    bounds = block_bounds(sparsity)
    starts = bounds[:-1]
    diff = np.abs(x_hat - x) ** 2
    err = np.sqrt(np.add.reduceat(diff, starts))
    nonzero = np.add.reduceat((x != 0).astype(np.intp), starts) > 0
    ok = err < block_eps
    return int(np.sum(ok & ~nonzero)), int(np.sum(ok & nonzero)), float(err.mean())


def _cell_seeds(seed: int, m: int, trial: int):
    ss = np.random.SeedSequence([seed, m, trial])
    return ss.spawn(3)


def _make_operator(config: ExperimentConfig, m: int, seed):
    if config.ensemble == "gaussian":
        return gaussian_operator(m, config.d, seed, field=config.field)
    mode = "uniform" if config.ensemble == "fourier_uniform" else "lowest"
    return subsampled_dft(config.d, m, mode=mode, seed=seed)


def run_cell(config: ExperimentConfig, m: int, trial: int) -> list[TrialRecord]:
    """One signal, one operator, every requested algorithm."""
    sig_seed, op_seed, noise_seed = _cell_seeds(config.seed, m, trial)
    records = []
    try:
        x, _ = gen_signal(config.sparsity, config.field, sig_seed)
        op = _make_operator(config, m, op_seed)
        y = op.apply(x)
        if config.snr is not None:
            y = add_noise(y, config.snr, noise_seed)
        unit_op, scaling = normalize_columns(op)
    except Exception as exc:  # a broken instance must not abort the sweep
        logger.exception("instance m=%d trial=%d failed", m, trial)
        return [TrialRecord(a, m, trial, False, 0, 0, float("nan"), 0, 0.0, error=repr(exc))
                for a in config.algorithms]
    opts = SolverOptions(max_iters=config.max_iters)
    k = max_support_size(config.sparsity)
    for alg in config.algorithms:
        try:
            t0 = time.perf_counter()
            if alg == "hihtp":
                res = hihtp(unit_op, y, config.sparsity, opts)
            else:
                res = htp(unit_op, y, k, opts)
            elapsed = time.perf_counter() - t0
            x_hat = unnormalize_solution(res.estimate, scaling)
            zero_ok, nonzero_ok, mean_err = block_metrics(x_hat, x, config.sparsity,
                                                          config.block_eps)
            records.append(TrialRecord(
                algorithm=alg, m=m, trial=trial,
                signal_recovered=bool(np.linalg.norm(x_hat - x) < config.recovery_eps),
                blocks_recovered_zero=zero_ok, blocks_recovered_nonzero=nonzero_ok,
                mean_block_error=mean_err, iterations=res.iterations,
                wall_time_seconds=elapsed))
        except Exception as exc:
            logger.exception("%s failed at m=%d trial=%d", alg, m, trial)
            records.append(TrialRecord(alg, m, trial, False, 0, 0, float("nan"), 0, 0.0,
                                       error=repr(exc)))
    return records


def worker_count() -> int:
    cap = os.environ.get("HISPARSE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            logger.warning("ignoring non-integer HISPARSE_THREADS=%r", cap)
    return n


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(config: ExperimentConfig, workers: int | None = None,
              progress: bool = False) -> list[TrialRecord]:
    """Run every ``(m, trial, algorithm)`` cell; records come back in grid order."""
    tasks = [(config, m, t) for m in config.m_grid for t in range(config.trials)]
    workers = worker_count() if workers is None else workers
    out: list[TrialRecord] = []
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_run_cell_args, tasks, chunksize=max(1, len(tasks) // (4 * workers)))
            for i, recs in enumerate(results, 1):
                out.extend(recs)
                if progress:
                    print(f"\r{i}/{len(tasks)}", end="", flush=True)
    else:
        for i, task in enumerate(tasks, 1):
            out.extend(run_cell(*task))
            if progress:
                print(f"\r{i}/{len(tasks)}", end="", flush=True)
    if progress:
        print()
    return out


def write_csv(records: Iterable[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.csv_row())


def read_csv(path) -> list[TrialRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["signal_recovered"] == "error":
                out.append(TrialRecord(row["algorithm"], int(row["m"]), int(row["trial"]),
                                       False, 0, 0, float("nan"), 0, 0.0, error="recorded error"))
                continue
            out.append(TrialRecord(
                algorithm=row["algorithm"], m=int(row["m"]), trial=int(row["trial"]),
                signal_recovered=row["signal_recovered"] == "1",
                blocks_recovered_zero=int(row["zero_blocks"]),
                blocks_recovered_nonzero=int(row["nonzero_blocks"]),
                mean_block_error=float(row["mean_block_error"]),
                iterations=int(row["iterations"]),
                wall_time_seconds=float(row["wall_time_s"])))
    return out


def write_sidecar(config: ExperimentConfig, path, records: Sequence[TrialRecord] = ()) -> None:
    errors = [{"algorithm": r.algorithm, "m": r.m, "trial": r.trial, "error": r.error}
              for r in records if r.error is not None]
    meta = {
        "config": config.to_json(),
        "seed": config.seed,
        "operator_per_trial": True,
        "rng_stream": "SeedSequence([seed, m, trial]) -> (signal, operator, noise)",
        "column_normalization": True,
        "csv_columns": list(CSV_COLUMNS),
        "errors": errors,
    }
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def summarize(records: Iterable[TrialRecord]) -> dict[tuple[str, int], dict]:
    """Per ``(algorithm, m)`` aggregates derived from raw records."""
    groups: dict[tuple[str, int], list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.algorithm, r.m), []).append(r)
    out = {}
    for key, recs in sorted(groups.items()):
        good = [r for r in recs if r.error is None]
        if not good:
            out[key] = {"trials": len(recs), "errors": len(recs)}
            continue
        zero = np.array([r.blocks_recovered_zero for r in good], dtype=float)
        nonzero = np.array([r.blocks_recovered_nonzero for r in good], dtype=float)
        out[key] = {
            "trials": len(recs),
            "errors": len(recs) - len(good),
            "recovery_rate": float(np.mean([r.signal_recovered for r in good])),
            "mean_zero_blocks": float(zero.mean()),
            "mean_nonzero_blocks": float(nonzero.mean()),
            "mean_total_blocks": float((zero + nonzero).mean()),
            "mean_block_error": float(np.mean([r.mean_block_error for r in good])),
            "mean_iterations": float(np.mean([r.iterations for r in good])),
            "median_wall_time": float(np.median([r.wall_time_seconds for r in good])),
        }
    return out

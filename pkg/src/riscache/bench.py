"""Paired Monte-Carlo comparison of the two nulling solvers.

Every trial draws one channel and one starting phase vector and hands the
same pair to both solvers, so differences come from the update rule alone.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from riscache.channel import draw_channel
from riscache.nulling import (
    ConvergenceTrace,
    baseline_alternating_projection,
    build_path_matrix,
    improved_alternating_projection,
    interference_channel_paths,
    random_phase_vector,
    to_db,
)


@dataclass
class BenchConfig:
    K: int = 10
    G: int = 300
    iterations: int = 500
    trials: int = 100
    seed: int = 0
    tolerance: float = 1e-10
    checkpoint_db: float = -60.0


@dataclass
class TrialResult:
    trial: int
    seed: int
    baseline: ConvergenceTrace
    improved: ConvergenceTrace

    @property
    def common_iteration(self) -> int:
        """Last iteration both traces reached (one may have stopped early on convergence)."""
        return min(self.baseline.iterations, self.improved.iterations)

    def db_at_common_iteration(self) -> tuple[float, float]:
        n = self.common_iteration
        return to_db(self.baseline.linear[n]), to_db(self.improved.linear[n])


@dataclass
class BenchResult:
    config: BenchConfig
    trials: list[TrialResult] = field(default_factory=list)

    def summary(self) -> dict:
        cfg = self.config
        out: dict = {"config": asdict(cfg), "paths": cfg.K * (cfg.K - 1)}
        for name in ("baseline", "improved"):
            traces = [getattr(t, name) for t in self.trials]
            hits = [tr.iterations_to(cfg.checkpoint_db) for tr in traces]
            # unreached checkpoints count as one past the budget for the median
            hits_filled = [cfg.iterations + 1 if h is None else h for h in hits]
            conv = [tr.iterations for tr in traces if tr.converged]
            out[name] = {
                "converged": sum(tr.converged for tr in traces),
                "convergence_rate": sum(tr.converged for tr in traces) / len(traces),
                "median_final_db": statistics.median(tr.final_db for tr in traces),
                "median_iterations_to_checkpoint": statistics.median(hits_filled),
                "median_iterations_to_tolerance": statistics.median(conv) if conv else None,
            }
        pairs = [t.db_at_common_iteration() for t in self.trials]
        out["improved_not_worse_at_common_iteration"] = sum(i <= b for b, i in pairs)
        out["improved_not_worse_final"] = sum(
            t.improved.final_db <= t.baseline.final_db for t in self.trials
        )
        out["trials"] = len(self.trials)
        return out


def trial_seeds(seed: int, trials: int) -> list[int]:
    return [int(x) for x in np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint64)]


def run_trial(cfg: BenchConfig, index: int, seed: int) -> TrialResult:
    ch = draw_channel(cfg.K, cfg.K, cfg.G, seed)
    prob = build_path_matrix(ch, interference_channel_paths(cfg.K), cfg.tolerance, cfg.iterations)
    v0 = random_phase_vector(cfg.G, np.random.default_rng([seed, 1]))
    _, base = baseline_alternating_projection(prob, v0)
    _, imp = improved_alternating_projection(prob, v0)
    return TrialResult(index, seed, base, imp)


def run_bench(cfg: BenchConfig) -> BenchResult:
    result = BenchResult(cfg)
    for i, s in enumerate(trial_seeds(cfg.seed, cfg.trials)):
        result.trials.append(run_trial(cfg, i, s))
    return result


def write_bench(result: BenchResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t in result.trials:
        for name in ("baseline", "improved"):
            (out / f"trial_{t.trial:03d}_{name}.csv").write_text(getattr(t, name).to_csv())
    summary = out / "summary.json"
    summary.write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    return summary

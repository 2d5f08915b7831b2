"""Grid execution over trial configs with worker processes and resume.

The parent process is the only CSV writer; workers return TrialResult
objects over the pool pipe. Every sweep trial pins BLAS to one thread so
results are identical at any parallelism level.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass
from pathlib import Path

from .config import TrialConfig
from .trial import TrialResult, append_result, completed_hashes, run_trial

__all__ = ["SweepSummary", "run_sweep"]


@dataclass
class SweepSummary:
    total: int = 0
    executed: int = 0
    skipped: int = 0
    failed: int = 0


def _worker(task) -> TrialResult:
    cfg, data_dir, log_path = task
    try:
        return run_trial(cfg, data_dir, log_path=log_path, blas_threads=1)
    except Exception as e:
        # a crashed worker must not take the sweep down with it
        return TrialResult(cfg, [], [], [], None, 0.0,
                           error=f"worker error: {type(e).__name__}: {e}")


def run_sweep(configs: list[TrialConfig], data_dir, out_csv, jobs: int = 1,
              log_dir=None, echo=None) -> SweepSummary:
    """Run `configs`, appending one CSV row each as results arrive.

    Config hashes already present in `out_csv` are skipped, so a killed
    sweep resumes by rerunning the same command. Duplicate hashes inside
    `configs` run once.
    """
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    out_csv = Path(out_csv)
    if log_dir is None:
        log_dir = out_csv.parent / "logs"
    done = completed_hashes(out_csv)
    summary = SweepSummary(total=len(configs))

    tasks = []
    queued = set()
    for cfg in configs:
        h = cfg.config_hash
        if h in done or h in queued:
            summary.skipped += 1
            continue
        queued.add(h)
        tasks.append((cfg, str(data_dir), str(Path(log_dir) / f"{h}.log")))

    def record(result: TrialResult) -> None:
        append_result(out_csv, result)
        summary.executed += 1
        if result.failed:
            summary.failed += 1
        if echo is not None:
            tag = (f"max_eval_acc={result.max_eval_acc:.4f}"
                   if not result.failed else f"FAILED ({result.error})")
            echo(f"[{summary.executed + summary.skipped}/{summary.total}] "
                 f"{result.config_hash} {tag}")

    if jobs == 1 or len(tasks) <= 1:
        for task in tasks:
            record(_worker(task))
        return summary

    ctx = multiprocessing.get_context("spawn")
    with ctx.Pool(processes=min(jobs, len(tasks))) as pool:
        for result in pool.imap_unordered(_worker, tasks):
            record(result)
    return summary

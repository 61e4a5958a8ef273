"""Seeds x modes x look-ahead windows comparison, with a lambda grid for twins."""

from __future__ import annotations

import concurrent.futures as cf
import multiprocessing
import os
import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from ..data.features import Corpus
from ..eval.inference import evaluate
from ..train.loop import EpochRecord, train_run
from ..train.optim import Hyperparams

THREADS_ENV = "TWINSEQ_THREADS"


@dataclass
class BenchRun:
    mode: str
    window: int
    lam: float
    seed: int
    dev_fer: float
    test_fer: float
    history: list[EpochRecord]


@dataclass
class BenchRow:
    mode: str
    window: int
    lam: float
    n_seeds: int
    mean_dev_fer: float
    std_dev_fer: float
    mean_test_fer: float
    std_test_fer: float


def worker_count(env=None) -> int:
    """Worker cap from ``TWINSEQ_THREADS`` (default 1, i.e. in-process)."""
    raw = (env if env is not None else os.environ).get(THREADS_ENV, "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _job(corpus: Corpus, hp: Hyperparams, window: int, splits: tuple[str, str, str]) -> BenchRun:
    train_split, dev_split, test_split = splits
    result = train_run(corpus, hp, train_split=train_split, dev_split=dev_split)
    test = evaluate(result.model, corpus.split(test_split)).fer
    lam = hp.lam if hp.mode == "unitwin" else 0.0
    return BenchRun(hp.mode, window, lam, hp.seed, result.final_dev_fer, test, result.history)


def run_jobs(jobs: Sequence[tuple], workers: int = 1,
             on_done: Callable[[BenchRun], None] | None = None) -> list[BenchRun]:
    """Run ``_job`` argument tuples, in order, optionally in worker processes."""
    if workers <= 1 or len(jobs) <= 1:
        out = []
        for args in jobs:
            out.append(_job(*args))
            if on_done:
                on_done(out[-1])
        return out
    ctx = multiprocessing.get_context("spawn")
    with cf.ProcessPoolExecutor(max_workers=min(workers, len(jobs)), mp_context=ctx) as pool:
        futures = [pool.submit(_job, *args) for args in jobs]
        for fut in cf.as_completed(futures):
            if on_done:
                on_done(fut.result())
        return [f.result() for f in futures]


def select_lambda(runs: Sequence[BenchRun]) -> float:
    """Lambda with the lowest mean final dev error (ties: smallest lambda)."""
    by_lam: dict[float, list[float]] = {}
    for r in runs:
        by_lam.setdefault(r.lam, []).append(r.dev_fer)
    return min(sorted(by_lam), key=lambda lam: statistics.fmean(by_lam[lam]))


def _std(values: Sequence[float]) -> float:
    return statistics.stdev(values) if len(values) > 1 else 0.0


def aggregate(runs: Sequence[BenchRun]) -> list[BenchRow]:
    """One row per (mode, window, lambda) with mean and sample stddev over seeds."""
    groups: dict[tuple, list[BenchRun]] = {}
    for r in runs:
        groups.setdefault((r.mode, r.window, r.lam), []).append(r)
    rows = []
    for (mode, window, lam), rs in groups.items():
        dev = [r.dev_fer for r in rs]
        test = [r.test_fer for r in rs]
        rows.append(BenchRow(mode, window, lam, len(rs), statistics.fmean(dev), _std(dev),
                             statistics.fmean(test), _std(test)))
    return rows


@dataclass
class BenchResult:
    runs: list[BenchRun]
    selected: dict[tuple[str, int], float]

    def chosen_runs(self) -> list[BenchRun]:
        return [r for r in self.runs if self.selected.get((r.mode, r.window), r.lam) == r.lam]

    def rows(self) -> list[BenchRow]:
        return aggregate(self.chosen_runs())


def run_bench(corpus: Corpus, base: Hyperparams, seeds: Sequence[int], modes: Sequence[str],
              windows: Sequence[int], lambdas: Sequence[float], past: int = 0,
              splits: tuple[str, str, str] = ("train", "dev", "test"), workers: int = 1,
              on_done: Callable[[BenchRun], None] | None = None) -> BenchResult:
    """Train every (window, mode, [lambda,] seed) combination.

    Twin models are trained for every lambda; the one with the lowest mean
    dev error over seeds is selected per window, and only the selected runs
    enter the aggregate rows.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    jobs = []
    for k in windows:
        wc = corpus if past == 0 and k == 0 else corpus.windowed(past, k)
        for mode in modes:
            lams = list(lambdas) if mode == "unitwin" else [base.lam]
            for lam in lams:
                for s in seeds:
                    jobs.append((wc, replace(base, mode=mode, lam=lam, seed=s), k, splits))
    runs = run_jobs(jobs, workers, on_done)
    selected = {}
    for k in windows:
        twins = [r for r in runs if r.window == k and r.mode == "unitwin"]
        if twins:
            selected[("unitwin", k)] = select_lambda(twins)
    return BenchResult(runs, selected)


def write_bench(result: BenchResult, out: Path, experiment: str, timestamp: bool = True) -> dict[str, Path]:
    from .metrics import format_rows, write_metrics
    out = Path(out)
    chosen = {id(r) for r in result.chosen_runs()}
    for r in result.runs:
        sub = out / "metrics" if id(r) in chosen else out / "metrics" / "grid"
        name = f"{r.mode}_k{r.window}" + (f"_lam{r.lam:g}" if r.mode == "unitwin" else "") + f"_seed{r.seed}.csv"
        write_metrics(sub / name, f"{experiment}/{r.mode}/k{r.window}", r.seed, r.history, timestamp)
    rows = result.rows()
    header = ["mode", "window", "lambda", "n_seeds", "mean_dev_fer", "std_dev_fer", "mean_test_fer",
              "std_test_fer"]
    agg = out / "bench.csv"
    agg.write_text(format_rows(header, [[getattr(r, f) for f in
                                        ("mode", "window", "lam", "n_seeds", "mean_dev_fer", "std_dev_fer",
                                         "mean_test_fer", "std_test_fer")] for r in rows], timestamp),
                   encoding="utf-8")
    summary = out / "summary.txt"
    summary.write_text(summary_text(result, rows), encoding="utf-8")
    return {"aggregate": agg, "summary": summary}


def summary_text(result: BenchResult, rows: Sequence[BenchRow]) -> str:
    lines = [f"{'mode':<8} {'k':>3} {'lambda':>7} {'seeds':>5}  {'dev FER':>16}  {'test FER':>16}"]
    order = {"unidir": 0, "unitwin": 1, "bidir": 2}
    for r in sorted(rows, key=lambda r: (r.window, order.get(r.mode, 9))):
        lam = f"{r.lam:g}" if r.mode == "unitwin" else "-"
        lines.append(f"{r.mode:<8} {r.window:>3} {lam:>7} {r.n_seeds:>5}  "
                     f"{100 * r.mean_dev_fer:7.2f} ± {100 * r.std_dev_fer:5.2f}%  "
                     f"{100 * r.mean_test_fer:7.2f} ± {100 * r.std_test_fer:5.2f}%")
    for (mode, k), lam in sorted(result.selected.items()):
        lines.append(f"selected lambda for {mode} at k={k}: {lam:g}")
    return "\n".join(lines) + "\n"

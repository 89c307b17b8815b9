"""Experiment orchestration: multi-seed runs and plot-ready CSV artifacts.

Per seed the harness writes an append-only event log
(``iteration,task,reward,baseline,advantage_norm``), a best-model summary
and a final checkpoint. After all seeds finish it writes aggregate
artifacts: per-task reward curves (raw + smoothed), a per-task action
distribution heatmap (``task,parameter,choice,probability``) and the
task-embedding correlation matrix (``task_a,task_b,pearson``), plus a
manifest listing every artifact. Rendering is left to external tools.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import (
    load_checkpoint,
    save_checkpoint,
    task_embedding_correlations,
    transfer_init,
)
from .config import ExperimentConfig, build_evaluators, load_experiment_config
from .controller import (
    EXACT_ENUMERATION_LIMIT,
    action_distributions,
    exact_action_distributions,
)
from .errors import ConfigError, DegenerateEmbedding, MissingLog
from .evaluators import brute_force_optimum
from .smoothing import smooth_with_auto_window
from .trainer import Event, SearchResult, build_state, run_state

log = logging.getLogger(__name__)

EVENT_HEADER = ["iteration", "task", "reward", "baseline", "advantage_norm"]
NOT_REACHED = "not_reached"


def _fmt(x: float) -> str:
    return repr(float(x))


class _EventWriter:
    def __init__(self, path: Path):
        self.f = open(path, "w", newline="")
        self.f.write(",".join(EVENT_HEADER) + "\n")

    def __call__(self, e: Event):
        self.f.write(
            f"{e.iteration},{e.task_name},{_fmt(e.reward)},{_fmt(e.baseline)},{_fmt(e.advantage_norm)}\n"
        )

    def close(self):
        self.f.close()


def _write_best_models(result: SearchResult, space, path: Path):
    payload = {}
    for task_id, event in sorted(result.best.items()):
        cfg = space.decode(event.actions)
        payload[event.task_name] = {
            "actions": list(event.actions),
            "config": {k: v for k, v in cfg.items},
            "reward": event.reward,
            "iteration": event.iteration,
        }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_one_seed(config: ExperimentConfig, seed: int, seed_dir: Path, mode: str):
    seed_dir.mkdir(parents=True, exist_ok=True)
    tasks = build_evaluators(config)
    rng = np.random.default_rng(seed)
    if mode == "transfer":
        ckpt = load_checkpoint(config.transfer_checkpoint, config.space)
        state = transfer_init(ckpt, tasks, rng, config=config.trainer, space=config.space)
    else:
        state = build_state(config.space, tasks, config.trainer, rng, config.dims)
    writer = _EventWriter(seed_dir / "events.csv")
    try:
        result = run_state(state, rng, on_event=writer)
    finally:
        writer.close()
    result.seed = seed
    _write_best_models(result, config.space, seed_dir / "best_models.json")
    save_checkpoint(state, seed_dir / "checkpoint.bin", meta_extra={"seed": seed})
    artifacts = ["events.csv", "best_models.json", "checkpoint.bin", "checkpoint.bin.manifest.txt"]
    return result, [str(Path(seed_dir.name) / a) for a in artifacts]


def _group_events(events):
    """events -> {task_name: (iterations array, rewards array)} in order."""
    by_task: dict[str, list] = {}
    for e in events:
        by_task.setdefault(e.task_name, []).append((e.iteration, e.reward))
    return {
        t: (
            np.array([i for i, _ in rows], dtype=np.int64),
            np.array([r for _, r in rows]),
        )
        for t, rows in by_task.items()
    }


def _write_aggregate(config: ExperimentConfig, out_dir: Path, results: list):
    agg = out_dir / "aggregate"
    agg.mkdir(parents=True, exist_ok=True)
    artifacts = []

    task_names = [t.name for t in config.tasks]
    for task in task_names:
        path = agg / f"curve_{task}.csv"
        with open(path, "w", newline="") as f:
            f.write("seed,iteration,reward,reward_smoothed\n")
            for result in results:
                grouped = _group_events(result.events)
                if task not in grouped:
                    continue
                iters, rewards = grouped[task]
                smoothed = smooth_with_auto_window(rewards)
                for i, r, s in zip(iters, rewards, smoothed):
                    f.write(f"{result.seed},{i},{_fmt(r)},{_fmt(s)}\n")
        artifacts.append(str(Path("aggregate") / path.name))

    # heatmap and correlations come from the first seed's final controller
    rep = results[0]
    with open(agg / "heatmap.csv", "w", newline="") as f:
        f.write("task,parameter,choice,probability\n")
        for entry in rep.registry:
            if not entry.active:
                continue
            if config.space.cardinality() <= EXACT_ENUMERATION_LIMIT:
                margs = exact_action_distributions(rep.actor, entry.task_id)
            else:
                # derived stream, distinct from the training seed
                margs = action_distributions(
                    rep.actor,
                    entry.task_id,
                    config.heatmap_samples,
                    np.random.default_rng([rep.seed or 0, entry.task_id, 7]),
                )
            for p, marg in zip(config.space.params, margs):
                for choice, prob in zip(p.choices, marg):
                    f.write(f"{entry.name},{p.name},{choice},{_fmt(prob)}\n")
    artifacts.append("aggregate/heatmap.csv")

    all_ids = [e.task_id for e in rep.registry]
    if len(all_ids) >= 2:
        try:
            corr = task_embedding_correlations(rep.actor, all_ids)
        except DegenerateEmbedding:
            log.warning("skipping correlation matrix: degenerate embedding")
        else:
            with open(agg / "embedding_correlations.csv", "w", newline="") as f:
                f.write("task_a,task_b,pearson\n")
                for i, a in enumerate(all_ids):
                    for j, b in enumerate(all_ids):
                        f.write(
                            f"{rep.registry.entry(a).name},{rep.registry.entry(b).name},{_fmt(corr[i, j])}\n"
                        )
            artifacts.append("aggregate/embedding_correlations.csv")
    return artifacts


def run_search_experiment(config: ExperimentConfig, mode: str = "search") -> Path:
    """Run every seed, then write aggregate artifacts and the manifest."""
    if mode == "transfer" and config.transfer_checkpoint is None:
        raise ConfigError("transfer.checkpoint is required in transfer mode")
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    artifacts = []
    for seed in config.seeds:
        log.info("running seed %d into %s", seed, out_dir / f"seed_{seed}")
        result, seed_artifacts = _run_one_seed(
            config, seed, out_dir / f"seed_{seed}", mode
        )
        results.append(result)
        artifacts.extend(seed_artifacts)
    artifacts.extend(_write_aggregate(config, out_dir, results))
    manifest = {"experiment": config.name, "mode": mode, "artifacts": artifacts}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out_dir


def run_brute_force(config: ExperimentConfig) -> Path:
    """Exhaustive optimum per tabular task; writes brute_force.csv."""
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = build_evaluators(config)
    path = out_dir / "brute_force.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["task"] + [p.name for p in config.space.params] + ["reward"])
        for name, binding in tasks:
            best_config, reward = brute_force_optimum(binding)
            w.writerow([name] + [v for _, v in best_config.items] + [_fmt(reward)])
    manifest = {"experiment": config.name, "mode": "brute-force", "artifacts": ["brute_force.csv"]}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out_dir


# --- run comparison ---------------------------------------------------------


@dataclass
class ReportRow:
    run: str
    seed: str
    task: str
    iterations_to_threshold: int | None
    best_reward: float
    auc_smoothed: float


def read_event_log(path) -> dict:
    """Parse one event log into {task: (iterations, rewards)} in file order."""
    by_task: dict[str, list] = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            by_task.setdefault(row["task"], []).append(
                (int(row["iteration"]), float(row["reward"]))
            )
    return {
        t: (
            np.array([i for i, _ in rows], dtype=np.int64),
            np.array([r for _, r in rows]),
        )
        for t, rows in by_task.items()
    }


def _auc(iterations: np.ndarray, values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    dx = np.diff(iterations.astype(np.float64))
    return float(np.sum((values[1:] + values[:-1]) * 0.5 * dx))


def report_compare(run_dirs, threshold: float, window: int = 101, poly_order: int = 3):
    """Iterations-to-threshold, best reward and smoothed AUC per run/seed/task."""
    rows = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        logs = sorted(run_dir.glob("seed_*/events.csv"))
        if not logs:
            raise MissingLog(f"no seed_*/events.csv under {run_dir}")
        for log_path in logs:
            seed = log_path.parent.name.removeprefix("seed_")
            for task, (iters, rewards) in sorted(read_event_log(log_path).items()):
                smoothed = smooth_with_auto_window(rewards, window, poly_order)
                crossed = np.nonzero(smoothed >= threshold)[0]
                rows.append(
                    ReportRow(
                        run=str(run_dir),
                        seed=seed,
                        task=task,
                        iterations_to_threshold=(
                            int(iters[crossed[0]]) if len(crossed) else None
                        ),
                        best_reward=float(rewards.max()),
                        auc_smoothed=_auc(iters, smoothed),
                    )
                )
    return rows


def write_report(rows, path):
    with open(path, "w", newline="") as f:
        f.write("run,seed,task,iterations_to_threshold,best_reward,auc_smoothed\n")
        for r in rows:
            its = NOT_REACHED if r.iterations_to_threshold is None else r.iterations_to_threshold
            f.write(
                f"{r.run},{r.seed},{r.task},{its},{_fmt(r.best_reward)},{_fmt(r.auc_smoothed)}\n"
            )


def run_experiment(
    config_path,
    mode: str,
    seeds: list[int] | None = None,
    out_dir=None,
    checkpoint=None,
    threshold: float | None = None,
    report_dirs=None,
) -> Path:
    """Entry point behind the CLI; returns the output directory.

    ``mode`` must be one of search, transfer, brute-force, report. CLI
    flags override the corresponding config fields.
    """
    if mode == "report":
        if not report_dirs or len(report_dirs) < 2:
            raise ConfigError("report mode needs at least two run directories")
        if threshold is None:
            raise ConfigError("report.threshold is required in report mode")
        rows = report_compare(report_dirs, threshold)
        out = Path(out_dir) if out_dir is not None else Path("report.csv")
        if out.is_dir():
            out = out / "report.csv"
        write_report(rows, out)
        return out

    config = load_experiment_config(config_path)
    if config.mode is not None and config.mode != mode:
        raise ConfigError(f"mode: config declares {config.mode!r} but {mode!r} was requested")
    if seeds is not None:
        config.seeds = seeds
    if out_dir is not None:
        config.out_dir = Path(out_dir)
    if checkpoint is not None:
        config.transfer_checkpoint = Path(checkpoint)
    if mode == "brute-force":
        return run_brute_force(config)
    return run_search_experiment(config, mode)

"""Multitask search training loop.

One iteration: pick a task uniformly at random, let the actor controller
sample model configurations for it, evaluate them to get rewards, update
the per-task reward baseline, push the records into a replay bank, then
give the critic controller one clipped off-policy policy-gradient step on
a replay batch. Every ``steps_per_sync`` critic steps the actor is pulled
toward the critic by Polyak averaging, keeping a slow-moving behavior
policy while the critic trains off-policy.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .controller import (
    ControllerDims,
    ControllerParams,
    TaskRegistry,
    init_controller,
    policy_backward,
    sample_sequence,
    teacher_forced,
)
from .errors import (
    BaselineUninitialized,
    EmptyBank,
    LengthMismatch,
    UnknownTask,
)
from .optim import AdamState, adaptive_update, clip_global_norm, polyak_average
from .space import SearchSpace

log = logging.getLogger(__name__)


@dataclass
class TrainerConfig:
    """Training hyperparameters; defaults follow the reference setup."""

    batch_size: int = 20
    critic_lr: float = 5e-4
    steps_per_sync: int = 25
    polyak_keep: float = 0.9
    clip_epsilon: float = 0.2
    replay_capacity: int = 1000
    baseline_decay: float = 0.95
    samples_per_iteration: int = 1
    total_iterations: int = 2000
    baseline_floor: float = 1e-3
    grad_clip_norm: float | None = 5.0
    critic_steps_per_iteration: int = 1

    def __post_init__(self):
        for name in (
            "batch_size",
            "critic_lr",
            "steps_per_sync",
            "replay_capacity",
            "samples_per_iteration",
            "critic_steps_per_iteration",
            "baseline_floor",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.total_iterations < 0:
            raise ValueError("total_iterations must be >= 0")
        for name in ("polyak_keep", "clip_epsilon", "baseline_decay"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")

    def as_dict(self) -> dict:
        d = self.__dict__.copy()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerConfig":
        return cls(**d)


@dataclass
class RewardRecord:
    """One evaluated model: the replay bank's unit of storage."""

    task_id: int
    actions: tuple[int, ...]
    behavior_log_probs: np.ndarray
    reward: float
    iteration: int

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ValueError("reward must be finite")
        if np.any(np.asarray(self.behavior_log_probs) > 1e-12):
            raise ValueError("log-probs must be <= 0")


class ReplayBank:
    """Bounded FIFO of RewardRecord with uniform sampling (with replacement)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[RewardRecord] = deque(maxlen=capacity)

    def push(self, record: RewardRecord):
        self._items.append(record)

    def sample(self, batch_size: int, rng) -> list[RewardRecord]:
        if len(self._items) == 0:
            raise EmptyBank("replay bank is empty")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def clear(self):
        self._items.clear()

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


@dataclass
class _BaselineEntry:
    value: float = 0.0
    decay: float = 0.95
    initialized: bool = False


class BaselineTable:
    """Per-task exponential moving average of rewards."""

    def __init__(self, default_decay: float = 0.95):
        if not 0.0 < default_decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        self.default_decay = default_decay
        self._entries: dict[int, _BaselineEntry] = {}

    def ensure_task(self, task_id: int, decay: float | None = None):
        if task_id not in self._entries:
            self._entries[task_id] = _BaselineEntry(
                decay=self.default_decay if decay is None else decay
            )

    def update(self, task_id: int, reward: float) -> "BaselineTable":
        """First reward initializes b(t); afterwards b <- d*b + (1-d)*R."""
        if not np.isfinite(reward):
            raise ValueError("reward must be finite")
        self.ensure_task(task_id)
        e = self._entries[task_id]
        if not e.initialized:
            e.value = float(reward)
            e.initialized = True
        else:
            e.value = e.decay * e.value + (1.0 - e.decay) * float(reward)
        return self

    def initialized(self, task_id: int) -> bool:
        e = self._entries.get(task_id)
        return e is not None and e.initialized

    def value(self, task_id: int) -> float:
        e = self._entries.get(task_id)
        if e is None or not e.initialized:
            raise BaselineUninitialized(f"no reward recorded yet for task {task_id}")
        return e.value

    def as_dict(self) -> dict:
        return {
            str(tid): {"value": e.value, "decay": e.decay, "initialized": e.initialized}
            for tid, e in sorted(self._entries.items())
        }

    @classmethod
    def from_dict(cls, d: dict, default_decay: float = 0.95) -> "BaselineTable":
        t = cls(default_decay)
        for tid, e in d.items():
            t._entries[int(tid)] = _BaselineEntry(
                value=float(e["value"]),
                decay=float(e["decay"]),
                initialized=bool(e["initialized"]),
            )
        return t


def compute_advantage(reward: float, baseline: float, floor: float) -> tuple[float, float]:
    """Advantage and baseline-normalized advantage of one reward.

    A = R - b;  A' = A / max(b, floor). The floor only guards division by
    near-zero baselines and never binds for well-scaled rewards.
    """
    a = float(reward) - float(baseline)
    return a, a / max(float(baseline), float(floor))


def ppo_clipped_loss(
    new_log_probs: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    clip_epsilon: float,
) -> tuple[float, np.ndarray]:
    """Clipped surrogate loss over a batch of sequences.

    Per sequence, with r = exp(sum(new) - sum(old)):
        term = min(r * A, clip(r, 1-eps, 1+eps) * A)
    and loss = -mean(term). Returns the loss and d loss / d new_log_probs
    (shape like ``new_log_probs``); the gradient is zero for sequences
    where the clipped branch is active and binding.
    """
    new_log_probs = np.asarray(new_log_probs, dtype=np.float64)
    old_log_probs = np.asarray(old_log_probs, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if new_log_probs.shape != old_log_probs.shape:
        raise LengthMismatch(
            f"log-prob shapes differ: {new_log_probs.shape} vs {old_log_probs.shape}"
        )
    if new_log_probs.ndim != 2 or advantages.shape != (new_log_probs.shape[0],):
        raise LengthMismatch("expected (B, T) log-probs and (B,) advantages")
    B = new_log_probs.shape[0]
    ratio = np.exp(new_log_probs.sum(axis=1) - old_log_probs.sum(axis=1))
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantages
    per_seq = np.minimum(unclipped, clipped)
    loss = -float(per_seq.mean())
    active = unclipped <= clipped  # ties resolve to the unclipped branch
    d_per_seq = np.where(active, ratio * advantages, 0.0)
    d_new = np.repeat((-d_per_seq / B)[:, None], new_log_probs.shape[1], axis=1)
    return loss, d_new


@dataclass
class Event:
    """One evaluated model, as recorded in the event log."""

    iteration: int
    task_id: int
    task_name: str
    reward: float
    baseline: float
    advantage_norm: float
    actions: tuple[int, ...]


@dataclass
class TrainerState:
    """Everything a search owns; a single logical thread mutates it."""

    space: SearchSpace
    registry: TaskRegistry
    evaluators: dict  # task_id -> EvaluatorBinding
    actor: ControllerParams
    critic: ControllerParams
    adam: AdamState
    replay: ReplayBank
    baselines: BaselineTable
    config: TrainerConfig
    iteration: int = 0
    critic_steps: int = 0
    events: list = field(default_factory=list)
    best: dict = field(default_factory=dict)  # task_id -> Event


@dataclass
class SearchResult:
    events: list
    best: dict
    actor: ControllerParams
    critic: ControllerParams
    baselines: BaselineTable
    registry: TaskRegistry
    config: TrainerConfig
    seed: int | None = None


def build_state(
    space: SearchSpace,
    tasks: Sequence[tuple],
    config: TrainerConfig,
    seed_or_rng,
    dims: ControllerDims = ControllerDims(),
) -> TrainerState:
    """Fresh trainer state. ``tasks`` is a list of (name, evaluator) pairs."""
    if len(tasks) < 1:
        raise ValueError("need at least one task")
    registry = TaskRegistry()
    evaluators = {}
    for name, evaluator in tasks:
        tid = registry.add(name, getattr(evaluator, "name", name))
        evaluators[tid] = evaluator
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    actor = init_controller(space, len(registry), rng, dims)
    critic = actor.copy()
    baselines = BaselineTable(config.baseline_decay)
    return TrainerState(
        space=space,
        registry=registry,
        evaluators=evaluators,
        actor=actor,
        critic=critic,
        adam=AdamState.zeros(actor.layout.total_size),
        replay=ReplayBank(config.replay_capacity),
        baselines=baselines,
        config=config,
    )


def draw_task(registry: TaskRegistry, rng) -> int:
    """Uniform draw over the currently active tasks."""
    active = registry.active_ids()
    if not active:
        raise UnknownTask("<no active tasks>")
    return active[int(rng.integers(0, len(active)))]


def _critic_step(state: TrainerState, rng) -> float | None:
    """One PPO gradient step on a replay batch; returns the loss."""
    cfg = state.config
    if len(state.replay) == 0:
        return None
    batch = state.replay.sample(cfg.batch_size, rng)
    task_ids = np.array([r.task_id for r in batch], dtype=np.int64)
    actions = np.array([r.actions for r in batch], dtype=np.int64)
    old_lp = np.array([r.behavior_log_probs for r in batch])
    adv = np.array(
        [
            compute_advantage(
                r.reward, state.baselines.value(r.task_id), cfg.baseline_floor
            )[1]
            for r in batch
        ]
    )
    fwd = teacher_forced(state.critic, task_ids, actions)
    loss, d_lp = ppo_clipped_loss(fwd.log_probs, old_lp, adv, cfg.clip_epsilon)
    grads = policy_backward(state.critic, fwd, d_lp)
    if cfg.grad_clip_norm is not None:
        grads = clip_global_norm(grads, cfg.grad_clip_norm)
    new_flat, state.adam = adaptive_update(
        state.critic.flat, grads, state.adam, cfg.critic_lr
    )
    state.critic = state.critic.with_flat(new_flat)
    state.critic_steps += 1
    if state.critic_steps % cfg.steps_per_sync == 0:
        state.actor = state.actor.with_flat(
            polyak_average(state.actor.flat, state.critic.flat, cfg.polyak_keep)
        )
    return loss


def train_iteration(state: TrainerState, rng, on_event: Callable | None = None):
    """One controller training iteration; appends Events to the state."""
    cfg = state.config
    task_id = draw_task(state.registry, rng)
    evaluator = state.evaluators[task_id]
    task_name = state.registry.entry(task_id).name

    for _ in range(cfg.samples_per_iteration):
        model = sample_sequence(state.actor, task_id, rng)
        config = state.space.decode(model.actions)
        eval_seed = int(rng.integers(0, 2**63 - 1))
        try:
            reward = float(evaluator(config, eval_seed))
        except Exception:
            log.warning(
                "evaluator %r failed on %r; skipping sample", task_name, config,
                exc_info=True,
            )
            continue
        state.baselines.update(task_id, reward)
        baseline = state.baselines.value(task_id)
        _, a_norm = compute_advantage(reward, baseline, cfg.baseline_floor)
        state.replay.push(
            RewardRecord(
                task_id=task_id,
                actions=model.actions,
                behavior_log_probs=model.behavior_log_probs,
                reward=reward,
                iteration=state.iteration,
            )
        )
        event = Event(
            iteration=state.iteration,
            task_id=task_id,
            task_name=task_name,
            reward=reward,
            baseline=baseline,
            advantage_norm=a_norm,
            actions=model.actions,
        )
        state.events.append(event)
        prev_best = state.best.get(task_id)
        if prev_best is None or reward > prev_best.reward:
            state.best[task_id] = event
        if on_event is not None:
            on_event(event)

    for _ in range(cfg.critic_steps_per_iteration):
        _critic_step(state, rng)
    state.iteration += 1


def run_state(
    state: TrainerState, seed_or_rng, on_event: Callable | None = None
) -> SearchResult:
    """Run the configured number of iterations on an existing state."""
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    for _ in range(state.config.total_iterations):
        train_iteration(state, rng, on_event)
    return SearchResult(
        events=state.events,
        best=state.best,
        actor=state.actor,
        critic=state.critic,
        baselines=state.baselines,
        registry=state.registry,
        config=state.config,
        seed=seed_or_rng if isinstance(seed_or_rng, int) else None,
    )


def run_search(
    space: SearchSpace,
    tasks: Sequence[tuple],
    config: TrainerConfig,
    seed: int,
    dims: ControllerDims = ControllerDims(),
    on_event: Callable | None = None,
) -> SearchResult:
    """Fresh multitask search: deterministic function of its arguments."""
    rng = np.random.default_rng(seed)
    state = build_state(space, tasks, config, rng, dims)
    result = run_state(state, rng, on_event)
    result.seed = seed
    return result

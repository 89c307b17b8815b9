"""Checkpointing and transfer to new tasks.

The checkpoint is a small versioned binary container: magic bytes, format
version, a search-space fingerprint, one timestamp field, a JSON metadata
block (registry, baselines, trainer config, rng note) and the named
float64 weight arrays of both controllers in declared order, all
little-endian. A plain-text sidecar manifest lists every array's shape.
Round trips are bitwise: loading and re-saving yields identical bytes
apart from the timestamp field.

Transfer reuses both controllers' weights, adds one freshly initialized
task-embedding row per new task, restarts the replay bank and leaves the
old tasks registered but excluded from task sampling.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass

import numpy as np

from .controller import (
    ControllerDims,
    ControllerParams,
    TaskEntry,
    TaskRegistry,
    add_task,
)
from .errors import (
    DegenerateEmbedding,
    FingerprintMismatch,
    IoFailure,
    VersionMismatch,
)
from .optim import AdamState
from .space import SearchSpace
from .trainer import BaselineTable, ReplayBank, TrainerConfig, TrainerState

MAGIC = b"MSRCHCKP"
FORMAT_VERSION = 1
# byte range of the timestamp field, for "identical apart from timestamp"
TIMESTAMP_OFFSET = len(MAGIC) + 4 + 32
TIMESTAMP_SIZE = 8


def space_fingerprint(space: SearchSpace) -> bytes:
    """sha256 over parameter names and choice counts, in order."""
    desc = ";".join(f"{p.name}:{p.n_choices}" for p in space.params)
    return hashlib.sha256(desc.encode()).digest()


@dataclass
class CheckpointState:
    """Deserialized checkpoint contents."""

    version: int
    fingerprint: bytes
    actor: ControllerParams
    critic: ControllerParams
    baselines: BaselineTable
    registry: TaskRegistry
    config: TrainerConfig
    meta: dict


def _registry_to_meta(registry: TaskRegistry) -> list:
    return [
        {
            "task_id": e.task_id,
            "name": e.name,
            "evaluator_ref": e.evaluator_ref,
            "active": e.active,
        }
        for e in registry
    ]


def _registry_from_meta(entries: list) -> TaskRegistry:
    return TaskRegistry(
        [
            TaskEntry(
                task_id=int(e["task_id"]),
                name=e["name"],
                evaluator_ref=e["evaluator_ref"],
                active=bool(e["active"]),
            )
            for e in entries
        ]
    )


def _write_array(f, name: str, arr: np.ndarray):
    data = np.ascontiguousarray(arr, dtype="<f8")
    name_b = name.encode()
    f.write(struct.pack("<H", len(name_b)))
    f.write(name_b)
    f.write(struct.pack("<B", data.ndim))
    for d in data.shape:
        f.write(struct.pack("<I", d))
    f.write(data.tobytes())


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise IoFailure("checkpoint file truncated")
    return buf


def _read_array(f) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", _read_exact(f, 2))
    name = _read_exact(f, name_len).decode()
    (ndim,) = struct.unpack("<B", _read_exact(f, 1))
    shape = tuple(struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(ndim))
    size = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(_read_exact(f, size * 8), dtype="<f8").reshape(shape)
    return name, data.astype(np.float64)


def save_checkpoint(state, path, meta_extra: dict | None = None):
    """Serialize a TrainerState (or CheckpointState) to ``path``.

    Also writes a human-readable ``<path>.manifest.txt`` listing shapes.
    """
    actor = state.actor
    critic = state.critic
    if actor.layout.entries != critic.layout.entries:
        raise ValueError("actor and critic layouts differ")
    base_meta = state.meta if isinstance(state, CheckpointState) else {}
    meta = {
        "dims": {
            "hidden_size": actor.dims.hidden_size,
            "action_embed": actor.dims.action_embed,
            "task_embed": actor.dims.task_embed,
            "num_layers": actor.dims.num_layers,
        },
        "n_tasks": actor.n_tasks,
        "registry": _registry_to_meta(state.registry),
        "baselines": state.baselines.as_dict(),
        "trainer_config": state.config.as_dict(),
        "rng_note": base_meta.get(
            "rng_note",
            {
                "iterations_completed": getattr(state, "iteration", None),
                "detail": "runs never resume a generator; new runs draw a fresh stream from their seed",
            },
        ),
    }
    for k, v in base_meta.items():
        meta.setdefault(k, v)
    if meta_extra:
        meta.update(meta_extra)
    meta_b = json.dumps(meta, sort_keys=True).encode()

    arrays = [("actor/" + n, actor.get(n)) for n in actor.layout.names()]
    arrays += [("critic/" + n, critic.get(n)) for n in critic.layout.names()]

    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", FORMAT_VERSION))
            f.write(space_fingerprint(actor.space))
            f.write(struct.pack("<d", time.time()))
            f.write(struct.pack("<I", len(meta_b)))
            f.write(meta_b)
            f.write(struct.pack("<I", len(arrays)))
            for name, arr in arrays:
                _write_array(f, name, arr)
        with open(str(path) + ".manifest.txt", "w") as f:
            f.write(f"format_version {FORMAT_VERSION}\n")
            f.write(f"fingerprint {space_fingerprint(actor.space).hex()}\n")
            for name, arr in arrays:
                f.write(f"{name} {'x'.join(str(d) for d in arr.shape)}\n")
    except OSError as e:
        raise IoFailure(f"cannot write checkpoint at {path}: {e}") from e


def load_checkpoint(path, space: SearchSpace) -> CheckpointState:
    """Read a checkpoint back; verifies version and space fingerprint."""
    try:
        with open(path, "rb") as f:
            magic = _read_exact(f, len(MAGIC))
            if magic != MAGIC:
                raise IoFailure(f"{path} is not a checkpoint (bad magic)")
            (version,) = struct.unpack("<I", _read_exact(f, 4))
            if version != FORMAT_VERSION:
                raise VersionMismatch(f"unsupported checkpoint version {version}")
            fingerprint = _read_exact(f, 32)
            struct.unpack("<d", _read_exact(f, 8))  # timestamp, unused
            (meta_len,) = struct.unpack("<I", _read_exact(f, 4))
            meta = json.loads(_read_exact(f, meta_len).decode())
            (n_arrays,) = struct.unpack("<I", _read_exact(f, 4))
            arrays = dict(_read_array(f) for _ in range(n_arrays))
    except OSError as e:
        raise IoFailure(f"cannot read checkpoint at {path}: {e}") from e

    if fingerprint != space_fingerprint(space):
        raise FingerprintMismatch(
            "checkpoint was written for a different search space"
        )

    dims = ControllerDims(**meta["dims"])
    n_tasks = int(meta["n_tasks"])

    def rebuild(prefix: str) -> ControllerParams:
        params = ControllerParams.zeros(space, dims, n_tasks)
        for name in params.layout.names():
            key = prefix + name
            if key not in arrays:
                raise IoFailure(f"checkpoint misses array {key}")
            view = params.get(name)
            if arrays[key].shape != view.shape:
                raise IoFailure(f"array {key} has shape {arrays[key].shape}")
            view[...] = arrays[key]
        return params

    actor = rebuild("actor/")
    critic = rebuild("critic/")
    cfg = TrainerConfig.from_dict(meta["trainer_config"])
    return CheckpointState(
        version=version,
        fingerprint=fingerprint,
        actor=actor,
        critic=critic,
        baselines=BaselineTable.from_dict(meta["baselines"], cfg.baseline_decay),
        registry=_registry_from_meta(meta["registry"]),
        config=cfg,
        meta=meta,
    )


def transfer_init(
    checkpoint: CheckpointState,
    new_tasks,
    seed_or_rng,
    config: TrainerConfig | None = None,
    space: SearchSpace | None = None,
) -> TrainerState:
    """Trainer state for new tasks on top of a pre-trained controller.

    ``new_tasks`` is a list of (name, evaluator) pairs. Both controllers'
    weights are reused bitwise; each new task gets a fresh uniformly
    initialized embedding row; the replay bank starts empty; baselines for
    the new tasks are uninitialized. Pre-training tasks stay registered
    but inactive, so task sampling only visits the new tasks. Optimizer
    moments are reset (fresh task distribution).
    """
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    space = space if space is not None else checkpoint.actor.space
    if space_fingerprint(space) != checkpoint.fingerprint:
        raise FingerprintMismatch("transfer target space differs from checkpoint")
    cfg = config if config is not None else checkpoint.config

    registry = TaskRegistry(
        [
            TaskEntry(e.task_id, e.name, e.evaluator_ref, active=False)
            for e in checkpoint.registry
        ]
    )
    actor = checkpoint.actor
    critic = checkpoint.critic
    evaluators = {}
    for name, evaluator in new_tasks:
        # one fresh embedding row, shared by actor and critic so the pair
        # starts in sync on the new task
        actor, new_id = add_task(actor, rng)
        new_row = actor.task_embeddings()[new_id]
        critic, critic_id = add_task(critic, rng)
        if critic_id != new_id:
            raise ValueError("actor/critic task tables diverged")
        critic.task_embeddings()[critic_id][...] = new_row
        reg_id = registry.add(name, getattr(evaluator, "name", name), active=True)
        if reg_id != new_id:
            raise ValueError("registry and embedding table out of step")
        evaluators[new_id] = evaluator

    baselines = BaselineTable.from_dict(
        checkpoint.baselines.as_dict(), cfg.baseline_decay
    )
    return TrainerState(
        space=space,
        registry=registry,
        evaluators=evaluators,
        actor=actor,
        critic=critic,
        adam=AdamState.zeros(actor.layout.total_size),
        replay=ReplayBank(cfg.replay_capacity),
        baselines=baselines,
        config=cfg,
    )


def task_embedding_correlations(params: ControllerParams, task_ids) -> np.ndarray:
    """Pairwise Pearson correlation of task-embedding rows.

    Symmetric with unit diagonal; raises DegenerateEmbedding when a row
    has zero variance.
    """
    task_ids = [params.check_task(t) for t in task_ids]
    if len(task_ids) < 2:
        raise ValueError("need at least two tasks to correlate")
    rows = params.task_embeddings()[np.asarray(task_ids, dtype=np.int64)]
    stds = rows.std(axis=1)
    if np.any(stds == 0.0):
        bad = task_ids[int(np.argmin(stds))]
        raise DegenerateEmbedding(f"task {bad} embedding has zero variance")
    corr = np.corrcoef(rows)
    np.fill_diagonal(corr, 1.0)
    return corr

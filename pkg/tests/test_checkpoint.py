import numpy as np
import pytest

from modelsearch.checkpoint import (
    TIMESTAMP_OFFSET,
    TIMESTAMP_SIZE,
    load_checkpoint,
    save_checkpoint,
    space_fingerprint,
    task_embedding_correlations,
    transfer_init,
)
from modelsearch.controller import ControllerDims, init_controller
from modelsearch.errors import (
    DegenerateEmbedding,
    FingerprintMismatch,
    IoFailure,
)
from modelsearch.evaluators import binding_from_table, planted_table
from modelsearch.space import ParamSpec, SearchSpace
from modelsearch.trainer import TrainerConfig, build_state, run_state

TINY = SearchSpace([ParamSpec("a", (0, 1)), ParamSpec("b", ("x", "y", "z"))])
SMALL_DIMS = ControllerDims(hidden_size=8, action_embed=4, task_embed=4, num_layers=2)


def make_state(iters=40, seed=0):
    table = planted_table(TINY, (1, 2), 0.9, falloff=0.8)
    tasks = [
        ("alpha", binding_from_table("alpha", table)),
        ("beta", binding_from_table("beta", table)),
    ]
    state = build_state(TINY, tasks, TrainerConfig(total_iterations=iters), seed, SMALL_DIMS)
    run_state(state, np.random.default_rng(seed))
    return state, tasks


def test_round_trip_reproduces_weights_bitwise(tmp_path):
    state, _ = make_state()
    path = tmp_path / "ck.bin"
    save_checkpoint(state, path)
    loaded = load_checkpoint(path, TINY)
    assert np.array_equal(loaded.actor.flat, state.actor.flat)
    assert np.array_equal(loaded.critic.flat, state.critic.flat)
    assert loaded.baselines.as_dict() == state.baselines.as_dict()
    assert [e.name for e in loaded.registry] == ["alpha", "beta"]
    assert loaded.config == state.config
    assert (tmp_path / "ck.bin.manifest.txt").exists()


def test_resave_identical_apart_from_timestamp(tmp_path):
    state, _ = make_state()
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_checkpoint(state, p1)
    loaded = load_checkpoint(p1, TINY)
    save_checkpoint(loaded, p2)
    b1, b2 = p1.read_bytes(), p2.read_bytes()
    assert len(b1) == len(b2)
    lo, hi = TIMESTAMP_OFFSET, TIMESTAMP_OFFSET + TIMESTAMP_SIZE
    assert b1[:lo] == b2[:lo]
    assert b1[hi:] == b2[hi:]


def test_fingerprint_mismatch_on_different_space(tmp_path):
    state, _ = make_state()
    path = tmp_path / "ck.bin"
    save_checkpoint(state, path)
    other = SearchSpace([ParamSpec("a", (0, 1)), ParamSpec("b", ("x", "y"))])
    with pytest.raises(FingerprintMismatch):
        load_checkpoint(path, other)


def test_truncated_file_raises_io_failure(tmp_path):
    state, _ = make_state()
    path = tmp_path / "ck.bin"
    save_checkpoint(state, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(IoFailure):
        load_checkpoint(path, TINY)


def test_garbage_file_raises_io_failure(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"definitely not a checkpoint")
    with pytest.raises(IoFailure):
        load_checkpoint(path, TINY)


def test_fingerprint_ignores_choice_values_but_not_counts():
    relabeled = SearchSpace([ParamSpec("a", (7, 9)), ParamSpec("b", (1, 2, 3))])
    assert space_fingerprint(TINY) == space_fingerprint(relabeled)
    renamed = SearchSpace([ParamSpec("z", (0, 1)), ParamSpec("b", ("x", "y", "z"))])
    assert space_fingerprint(TINY) != space_fingerprint(renamed)


# --- transfer ----------------------------------------------------------------


def transfer_setup(tmp_path):
    state, tasks = make_state()
    path = tmp_path / "ck.bin"
    save_checkpoint(state, path)
    ckpt = load_checkpoint(path, TINY)
    table = planted_table(TINY, (0, 1), 0.9, falloff=0.8)
    new_tasks = [
        ("gamma", binding_from_table("gamma", table)),
        ("delta", binding_from_table("delta", table)),
    ]
    return state, ckpt, new_tasks


def test_transfer_preserves_all_pre_existing_weights(tmp_path):
    state, ckpt, new_tasks = transfer_setup(tmp_path)
    new_state = transfer_init(ckpt, new_tasks, np.random.default_rng(1))
    n_old = state.actor.layout.total_size
    old_names = state.actor.layout.names()
    for name in old_names:
        if name == "task_embeddings":
            old = state.actor.get(name)
            new = new_state.actor.get(name)
            assert np.array_equal(new[: old.shape[0]], old)
        else:
            assert np.array_equal(new_state.actor.get(name), state.actor.get(name))
            assert np.array_equal(new_state.critic.get(name), state.critic.get(name))


def test_transfer_empties_replay_and_baselines(tmp_path):
    state, ckpt, new_tasks = transfer_setup(tmp_path)
    assert len(state.replay) > 0
    new_state = transfer_init(ckpt, new_tasks, np.random.default_rng(1))
    assert len(new_state.replay) == 0
    for entry in new_state.registry:
        if entry.name in ("gamma", "delta"):
            assert not new_state.baselines.initialized(entry.task_id)


def test_transfer_registers_new_tasks_active_old_inactive(tmp_path):
    _, ckpt, new_tasks = transfer_setup(tmp_path)
    new_state = transfer_init(ckpt, new_tasks, np.random.default_rng(1))
    active = {new_state.registry.entry(t).name for t in new_state.registry.active_ids()}
    assert active == {"gamma", "delta"}
    assert len(new_state.registry) == 4
    new_rows = new_state.actor.task_embeddings()[2:]
    assert np.all(np.abs(new_rows) <= 0.08)
    assert np.array_equal(
        new_state.actor.task_embeddings()[2:], new_state.critic.task_embeddings()[2:]
    )


def test_transfer_rejects_wrong_space(tmp_path):
    _, ckpt, new_tasks = transfer_setup(tmp_path)
    other = SearchSpace([ParamSpec("a", (0, 1, 2)), ParamSpec("b", ("x", "y", "z"))])
    with pytest.raises(FingerprintMismatch):
        transfer_init(ckpt, new_tasks, np.random.default_rng(0), space=other)


def test_transferred_state_trains(tmp_path):
    _, ckpt, new_tasks = transfer_setup(tmp_path)
    new_state = transfer_init(ckpt, new_tasks, np.random.default_rng(1))
    new_state.config = TrainerConfig(total_iterations=20)
    res = run_state(new_state, np.random.default_rng(2))
    assert len(res.events) == 20
    assert {e.task_name for e in res.events} <= {"gamma", "delta"}


# --- correlations ------------------------------------------------------------


def test_correlations_identical_and_negated_embeddings():
    params = init_controller(TINY, 3, 0, SMALL_DIMS)
    emb = params.task_embeddings()
    emb[1] = emb[0]
    emb[2] = -emb[0]
    corr = task_embedding_correlations(params, [0, 1, 2])
    assert corr[0, 1] == pytest.approx(1.0)
    assert corr[0, 2] == pytest.approx(-1.0)
    assert np.allclose(np.diag(corr), 1.0)
    assert np.allclose(corr, corr.T)
    assert np.all(corr >= -1.0 - 1e-12) and np.all(corr <= 1.0 + 1e-12)


def test_correlations_reject_zero_variance():
    params = init_controller(TINY, 2, 0, SMALL_DIMS)
    params.task_embeddings()[1] = 0.25  # constant vector has zero variance
    with pytest.raises(DegenerateEmbedding):
        task_embedding_correlations(params, [0, 1])

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelsearch.errors import IndexOutOfRange, LengthMismatch, UnknownChoice
from modelsearch.space import (
    ModelConfig,
    ParamSpec,
    SearchSpace,
    default_search_space,
    space_from_entries,
)

TINY = SearchSpace([ParamSpec("a", (0, 1)), ParamSpec("b", ("x", "y", "z"))])


def test_default_space_cardinality():
    assert default_search_space().cardinality() == 15360


def test_cardinality_products():
    assert SearchSpace([ParamSpec("p", (7,))]).cardinality() == 1
    assert TINY.cardinality() == 6


def test_decode_first_and_last_of_default_space():
    space = default_search_space()
    first = space.decode([0] * 7)
    assert first.as_dict() == {
        "embedding": "Spanish",
        "embedding_trainable": True,
        "n_layers": 1,
        "n_nodes": 5,
        "learning_rate": 0.001,
        "train_iterations": 5000,
        "l2_weight": 0,
    }
    last = space.decode([5, 1, 4, 3, 3, 3, 3])
    assert last.embedding_choice == "English-wiki"
    assert last.embedding_trainable is False
    assert last.n_layers == 10
    assert last.n_nodes == 100
    assert last.learning_rate == 0.1
    assert last.train_iterations == 20000
    assert last.l2_weight == 0.01


def test_decode_rejects_bad_indices():
    space = default_search_space()
    with pytest.raises(IndexOutOfRange):
        space.decode([7, 0, 0, 0, 0, 0, 0])
    with pytest.raises(LengthMismatch):
        space.decode([0, 0])


def test_encode_round_trip_and_unknown_choice():
    space = default_search_space()
    cfg = space.decode([0] * 7)
    assert space.encode(cfg) == (0,) * 7
    bad = ModelConfig([*cfg.items])
    bad = ModelConfig(
        [(k, (0.02 if k == "learning_rate" else v)) for k, v in cfg.items]
    )
    with pytest.raises(UnknownChoice):
        space.encode(bad)


def test_enumerate_order_and_uniqueness():
    assert list(TINY.enumerate_actions()) == [
        (0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2),
    ]
    single = SearchSpace([ParamSpec("p", (10, 20, 30))])
    assert list(single.enumerate_actions()) == [(0,), (1,), (2,)]

    space = default_search_space()
    seen = set(space.enumerate_actions())
    assert len(seen) == space.cardinality()


def test_rank_round_trip():
    space = default_search_space()
    for rank, actions in enumerate(TINY.enumerate_actions()):
        assert TINY.rank(actions) == rank
        assert TINY.actions_at(rank) == actions
    assert space.rank(space.actions_at(15359)) == 15359


@settings(max_examples=200)
@given(st.data())
def test_encode_decode_identity_property(data):
    space = default_search_space()
    actions = tuple(
        data.draw(st.integers(0, c - 1)) for c in space.choice_counts
    )
    cfg = space.decode(actions)
    assert space.encode(cfg) == actions
    assert space.decode(space.encode(cfg)) == cfg


def test_exhaustive_round_trip_default_space():
    space = default_search_space()
    for actions in space.enumerate_actions():
        assert space.encode(space.decode(actions)) == actions


def test_space_from_entries():
    space = space_from_entries(
        [{"name": "lr", "choices": [0.1, 0.2]}, {"name": "depth", "choices": [1, 2, 3]}]
    )
    assert space.choice_counts == (2, 3)
    assert space.decode([1, 2]).as_dict() == {"lr": 0.2, "depth": 3}


def test_invalid_spaces_rejected():
    with pytest.raises(ValueError):
        SearchSpace([])
    with pytest.raises(ValueError):
        ParamSpec("p", ())
    with pytest.raises(ValueError):
        ParamSpec("p", (1, 1))
    with pytest.raises(ValueError):
        SearchSpace([ParamSpec("p", (1,)), ParamSpec("p", (2,))])


def test_model_config_missing_field():
    cfg = TINY.decode([0, 0])
    with pytest.raises(UnknownChoice):
        _ = cfg.n_layers

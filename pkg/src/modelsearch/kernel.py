"""Minimal dense numeric core on float64 numpy arrays.

Stacked LSTM forward steps with recorded activations, exact reverse-mode
backprop through unrolled sequences, and a numerically stable softmax.
All functions are pure: they never mutate their inputs and accept either a
single vector (shape ``(d,)``) or a batch (shape ``(B, d)``).

Gate layout inside the fused ``4H`` dimension is ``[input, forget,
candidate, output]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Probabilities along the last axis; max-subtracted for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class LstmLayerParams:
    """Weights of one LSTM layer: fused input/hidden maps and gate biases."""

    w_x: np.ndarray  # (input_size, 4H)
    w_h: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[0]

    def check(self):
        h = self.hidden_size
        if self.w_x.shape[1] != 4 * h or self.w_h.shape != (h, 4 * h) or self.b.shape != (4 * h,):
            raise ShapeMismatch(
                f"inconsistent LSTM layer shapes {self.w_x.shape} {self.w_h.shape} {self.b.shape}"
            )


class LstmState:
    """Per-layer (h, c) pair. Immutable by convention; steps return new ones."""

    __slots__ = ("layers",)

    def __init__(self, layers):
        self.layers = tuple(layers)  # tuple of (h, c)

    @classmethod
    def zeros(cls, n_layers: int, hidden_size: int, batch: int | None = None):
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return cls([(np.zeros(shape), np.zeros(shape)) for _ in range(n_layers)])


@dataclass
class LstmStepRecord:
    """Activations of one layer at one timestep, retained for backprop."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tc: np.ndarray  # tanh(c)


def _layer_forward(p: LstmLayerParams, x, h_prev, c_prev):
    h = p.hidden_size
    z = x @ p.w_x + h_prev @ p.w_h + p.b
    i = sigmoid(z[..., 0 * h : 1 * h])
    f = sigmoid(z[..., 1 * h : 2 * h])
    g = np.tanh(z[..., 2 * h : 3 * h])
    o = sigmoid(z[..., 3 * h : 4 * h])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    out = o * tc
    return out, c, LstmStepRecord(x, h_prev, c_prev, i, f, g, o, c, tc)


def lstm_step(params, x: np.ndarray, state: LstmState):
    """One forward step through the layer stack; returns (top h, new state).

    Layer l's hidden output feeds layer l+1's input. Use lstm_step_record
    when the step must later be replayed for backprop.
    """
    out, new_state, _ = lstm_step_record(params, x, state)
    return out, new_state


def lstm_step_record(params, x: np.ndarray, state: LstmState):
    params = list(params)
    if len(params) != len(state.layers):
        raise ShapeMismatch("state has a different number of layers than params")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params[0].input_size:
        raise ShapeMismatch(
            f"input size {x.shape[-1]} != expected {params[0].input_size}"
        )
    records = []
    new_layers = []
    inp = x
    for p, (h_prev, c_prev) in zip(params, state.layers):
        p.check()
        if h_prev.shape[-1] != p.hidden_size:
            raise ShapeMismatch("state width does not match hidden size")
        out, c, rec = _layer_forward(p, inp, h_prev, c_prev)
        records.append(rec)
        new_layers.append((out, c))
        inp = out
    return inp, LstmState(new_layers), records


@dataclass
class LstmLayerGrads:
    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray


def lstm_sequence_backward(params, records, d_outputs):
    """Reverse-mode accumulation through a recorded unrolled sequence.

    ``records[t][l]`` is layer l's LstmStepRecord at step t as produced by
    lstm_step_record; ``d_outputs[t]`` is the loss gradient at the top-layer
    output of step t. Returns (per-layer LstmLayerGrads, d_inputs) where
    d_inputs[t] is the gradient at the bottom-layer input of step t.
    """
    params = list(params)
    n_layers = len(params)
    steps = len(records)
    if len(d_outputs) != steps:
        raise ShapeMismatch("one output gradient required per recorded step")

    grads = [
        LstmLayerGrads(np.zeros_like(p.w_x), np.zeros_like(p.w_h), np.zeros_like(p.b))
        for p in params
    ]
    dh_carry = [None] * n_layers
    dc_carry = [None] * n_layers
    d_inputs = [None] * steps

    for t in reversed(range(steps)):
        d_above = np.asarray(d_outputs[t], dtype=np.float64)
        for l in reversed(range(n_layers)):
            rec = records[t][l]
            dh = d_above if dh_carry[l] is None else d_above + dh_carry[l]
            dc = dh * rec.o * (1.0 - rec.tc**2)
            if dc_carry[l] is not None:
                dc = dc + dc_carry[l]
            do = dh * rec.tc
            di = dc * rec.g
            dg = dc * rec.i
            df = dc * rec.c_prev
            dc_carry[l] = dc * rec.f
            dz = np.concatenate(
                [
                    di * rec.i * (1.0 - rec.i),
                    df * rec.f * (1.0 - rec.f),
                    dg * (1.0 - rec.g**2),
                    do * rec.o * (1.0 - rec.o),
                ],
                axis=-1,
            )
            if dz.ndim == 1:
                grads[l].w_x += np.outer(rec.x, dz)
                grads[l].w_h += np.outer(rec.h_prev, dz)
                grads[l].b += dz
            else:
                grads[l].w_x += rec.x.T @ dz
                grads[l].w_h += rec.h_prev.T @ dz
                grads[l].b += dz.sum(axis=0)
            dh_carry[l] = dz @ params[l].w_h.T
            d_above = dz @ params[l].w_x.T
        d_inputs[t] = d_above
    return grads, d_inputs

"""Multitask recurrent network built on numpy arrays.

Two encoder variants share the same pair of output heads: "simple" stacks
two unidirectional LSTM layers and reads out the last hidden state;
"bidirectional" stacks three bidirectional LSTM layers, reads out the
concatenation of the last forward and first backward hidden states, and
passes it through two rectified dense layers.  The classification head is a
logistic unit (outbreak probability) and the regression head a linear unit
(normalized case count).  Gradients are exact backpropagation through time
over the recorded forward trace; inverted dropout is applied between
recurrent layers and before the dense stack in training mode only.

Gate order throughout is [input i, forget f, cell candidate g, output o].
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DataFormatError, NumericError
from .preprocess import ScalerParams

ARCH_SIMPLE = "simple"
ARCH_BIDIRECTIONAL = "bidirectional"
ARCHITECTURES = (ARCH_SIMPLE, ARCH_BIDIRECTIONAL)

SIMPLE_LSTM_LAYERS = 2
BIDI_LSTM_LAYERS = 3
BIDI_DENSE_LAYERS = 2

PROB_EPS = 1e-7
MODEL_FORMAT_VERSION = 1


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function; clipping keeps exp finite, saturation error < 1e-26."""
    z = np.clip(np.asarray(z, dtype=float), -60.0, 60.0)
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class ModelConfig:
    architecture: str
    window_len: int
    lstm_units: tuple[int, ...]
    dense_units: tuple[int, ...] = ()
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.window_len < 1:
            raise ValueError("window_len must be positive")
        if self.architecture == ARCH_SIMPLE:
            if len(self.lstm_units) != SIMPLE_LSTM_LAYERS:
                raise ValueError("simple architecture uses two stacked LSTM layers")
            if self.dense_units:
                raise ValueError("simple architecture has no intermediate dense layers")
        else:
            if len(self.lstm_units) != BIDI_LSTM_LAYERS:
                raise ValueError("bidirectional architecture uses three LSTM layers")
            if len(self.dense_units) != BIDI_DENSE_LAYERS:
                raise ValueError("bidirectional architecture uses two dense layers")
        if any(u < 1 for u in self.lstm_units) or any(u < 1 for u in self.dense_units):
            raise ValueError("unit counts must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


def default_config(
    architecture: str,
    window_len: int,
    lstm_units: Sequence[int] | None = None,
    dense_units: Sequence[int] | None = None,
    dropout_rate: float = 0.2,
) -> ModelConfig:
    """Fill in architecture-appropriate unit counts where not given.

    Dense widths for the bidirectional variant default to the last LSTM
    layer's unit count.
    """
    n_lstm = SIMPLE_LSTM_LAYERS if architecture == ARCH_SIMPLE else BIDI_LSTM_LAYERS
    if lstm_units is None:
        lstm_units = (64,) * n_lstm
    lstm_units = tuple(int(u) for u in lstm_units)
    if architecture == ARCH_SIMPLE:
        dense = ()
    elif dense_units is not None:
        dense = tuple(int(u) for u in dense_units)
    else:
        dense = (lstm_units[-1],) * BIDI_DENSE_LAYERS
    return ModelConfig(architecture, window_len, lstm_units, dense, dropout_rate)


@dataclass(frozen=True)
class LstmLayerWeights:
    """One LSTM layer: stacked gate maps, shapes (4H, D), (4H, H), (4H,)."""

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h4, d = self.w_x.shape
        if h4 % 4 != 0:
            raise ValueError("first weight dimension must be 4 * hidden size")
        h = h4 // 4
        if self.w_h.shape != (h4, h) or self.b.shape != (h4,):
            raise ValueError(
                f"inconsistent LSTM shapes: w_x {self.w_x.shape}, "
                f"w_h {self.w_h.shape}, b {self.b.shape}"
            )

    @property
    def hidden_size(self) -> int:
        return self.w_x.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.w_x.shape[1]


@dataclass(frozen=True)
class ModelParams:
    """All weights of one model; treated as immutable (updates build new instances).

    ``lstm_layers`` holds LstmLayerWeights for the simple architecture and
    (forward, backward) pairs for the bidirectional one.  Heads are stored
    as (weight (1, in), bias (1,)) like the dense layers.
    """

    config: ModelConfig
    lstm_layers: tuple
    dense_layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    head_clf: tuple[np.ndarray, np.ndarray]
    head_reg: tuple[np.ndarray, np.ndarray]

    @property
    def bidirectional(self) -> bool:
        return self.config.architecture == ARCH_BIDIRECTIONAL


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Seeded initialization: uniform +-sqrt(6/(fan_in+fan_out)) weights,
    zero biases except the forget gate, which starts at 1.0."""
    rng = np.random.default_rng(seed)

    def glorot(rows: int, cols: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-limit, limit, size=(rows, cols))

    def lstm_weights(input_size: int, hidden: int) -> LstmLayerWeights:
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0  # forget gate open at start
        return LstmLayerWeights(
            w_x=glorot(4 * hidden, input_size),
            w_h=glorot(4 * hidden, hidden),
            b=b,
        )

    def dense_weights(input_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray]:
        return glorot(out_size, input_size), np.zeros(out_size)

    lstm_layers = []
    feat = 1  # univariate daily series
    if config.architecture == ARCH_SIMPLE:
        for h in config.lstm_units:
            lstm_layers.append(lstm_weights(feat, h))
            feat = h
        readout = config.lstm_units[-1]
    else:
        for h in config.lstm_units:
            fwd = lstm_weights(feat, h)
            bwd = lstm_weights(feat, h)
            lstm_layers.append((fwd, bwd))
            feat = 2 * h
        readout = 2 * config.lstm_units[-1]

    dense_layers = []
    width = readout
    for out in config.dense_units:
        dense_layers.append(dense_weights(width, out))
        width = out

    head_clf = dense_weights(width, 1)
    head_reg = dense_weights(width, 1)
    return ModelParams(
        config=config,
        lstm_layers=tuple(lstm_layers),
        dense_layers=tuple(dense_layers),
        head_clf=head_clf,
        head_reg=head_reg,
    )


def named_arrays(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Deterministic (name, array) listing of every trainable tensor."""
    out: list[tuple[str, np.ndarray]] = []
    for idx, layer in enumerate(params.lstm_layers):
        if params.bidirectional:
            fwd, bwd = layer
            for tag, w in (("fwd", fwd), ("bwd", bwd)):
                out += [
                    (f"lstm{idx}.{tag}.w_x", w.w_x),
                    (f"lstm{idx}.{tag}.w_h", w.w_h),
                    (f"lstm{idx}.{tag}.b", w.b),
                ]
        else:
            out += [
                (f"lstm{idx}.w_x", layer.w_x),
                (f"lstm{idx}.w_h", layer.w_h),
                (f"lstm{idx}.b", layer.b),
            ]
    for idx, (w, b) in enumerate(params.dense_layers):
        out += [(f"dense{idx}.w", w), (f"dense{idx}.b", b)]
    out += [
        ("head_clf.w", params.head_clf[0]),
        ("head_clf.b", params.head_clf[1]),
        ("head_reg.w", params.head_reg[0]),
        ("head_reg.b", params.head_reg[1]),
    ]
    return out


def rebuild_params(params: ModelParams, arrays: dict[str, np.ndarray]) -> ModelParams:
    """New ModelParams with tensors replaced by ``arrays`` (keyed as named_arrays)."""

    def pick(name: str, current: np.ndarray) -> np.ndarray:
        new = arrays.get(name, current)
        if new.shape != current.shape:
            raise ValueError(f"shape mismatch for {name}: {new.shape} vs {current.shape}")
        return new

    lstm_layers = []
    for idx, layer in enumerate(params.lstm_layers):
        if params.bidirectional:
            fwd, bwd = layer
            lstm_layers.append(
                (
                    LstmLayerWeights(
                        pick(f"lstm{idx}.fwd.w_x", fwd.w_x),
                        pick(f"lstm{idx}.fwd.w_h", fwd.w_h),
                        pick(f"lstm{idx}.fwd.b", fwd.b),
                    ),
                    LstmLayerWeights(
                        pick(f"lstm{idx}.bwd.w_x", bwd.w_x),
                        pick(f"lstm{idx}.bwd.w_h", bwd.w_h),
                        pick(f"lstm{idx}.bwd.b", bwd.b),
                    ),
                )
            )
        else:
            lstm_layers.append(
                LstmLayerWeights(
                    pick(f"lstm{idx}.w_x", layer.w_x),
                    pick(f"lstm{idx}.w_h", layer.w_h),
                    pick(f"lstm{idx}.b", layer.b),
                )
            )
    dense_layers = tuple(
        (pick(f"dense{idx}.w", w), pick(f"dense{idx}.b", b))
        for idx, (w, b) in enumerate(params.dense_layers)
    )
    return replace(
        params,
        lstm_layers=tuple(lstm_layers),
        dense_layers=dense_layers,
        head_clf=(
            pick("head_clf.w", params.head_clf[0]),
            pick("head_clf.b", params.head_clf[1]),
        ),
        head_reg=(
            pick("head_reg.w", params.head_reg[0]),
            pick("head_reg.b", params.head_reg[1]),
        ),
    )


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


@dataclass
class LstmLayerTrace:
    """Everything the layer backward pass needs, stacked over time."""

    x_seq: np.ndarray  # (B, T, D)
    h_seq: np.ndarray  # (B, T, H)
    c_seq: np.ndarray  # (B, T, H)
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


@dataclass
class ForwardTrace:
    """Cache of one forward pass, sufficient for exact gradients."""

    mode: str
    lstm: list  # per layer: LstmLayerTrace, or (fwd, bwd) traces for bidi
    seq_masks: list  # dropout masks between recurrent layers (None in eval)
    readout: np.ndarray  # (B, R) before dropout
    readout_mask: np.ndarray | None
    dense_pre: list[np.ndarray]
    dense_act: list[np.ndarray]
    features: np.ndarray  # (B, width) input to the heads
    p: np.ndarray  # (B,)
    y_hat: np.ndarray  # (B,)


def lstm_cell_forward(
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    weights: LstmLayerWeights,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """One LSTM step.

    i, f, o are logistic gates and g the tanh cell candidate, each an affine
    map of (x_t, h_prev); c_t = f*c_prev + i*g and h_t = o*tanh(c_t).
    Accepts a single sample (vectors) or a batch (leading dimension).
    """
    x_t = np.asarray(x_t, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    h = weights.hidden_size
    if x_t.shape[-1] != weights.input_size:
        raise ValueError(
            f"input size {x_t.shape[-1]} does not match weights ({weights.input_size})"
        )
    if h_prev.shape[-1] != h or c_prev.shape[-1] != h:
        raise ValueError("state size does not match weights")
    if not (np.isfinite(x_t).all() and np.isfinite(h_prev).all() and np.isfinite(c_prev).all()):
        raise NumericError("non-finite input to LSTM cell")

    gates = x_t @ weights.w_x.T + h_prev @ weights.w_h.T + weights.b
    i = sigmoid(gates[..., :h])
    f = sigmoid(gates[..., h : 2 * h])
    g = np.tanh(gates[..., 2 * h : 3 * h])
    o = sigmoid(gates[..., 3 * h :])
    c_t = f * c_prev + i * g
    tanh_c = np.tanh(c_t)
    h_t = o * tanh_c
    return h_t, c_t, {"i": i, "f": f, "g": g, "o": o, "tanh_c": tanh_c}


def _lstm_layer_forward(weights: LstmLayerWeights, x_seq: np.ndarray) -> LstmLayerTrace:
    batch, steps, _ = x_seq.shape
    h_size = weights.hidden_size
    shape = (batch, steps, h_size)
    h_seq = np.empty(shape)
    c_seq = np.empty(shape)
    gi, gf, gg, go, gt = (np.empty(shape) for _ in range(5))

    if not np.isfinite(x_seq).all():
        raise NumericError("non-finite input to LSTM layer")
    # the input projection has no recurrent dependency: one fused matmul,
    # bias folded in place (large broadcast temporaries are costly here)
    gates_x = np.empty((batch, steps, 4 * h_size))
    np.dot(
        x_seq.reshape(batch * steps, -1),
        weights.w_x.T,
        out=gates_x.reshape(batch * steps, 4 * h_size),
    )
    gates_x += weights.b

    w_h_t = np.ascontiguousarray(weights.w_h.T)
    h = np.zeros((batch, h_size))
    c = np.zeros((batch, h_size))
    a = np.empty((batch, 4 * h_size))
    for t in range(steps):
        np.dot(h, w_h_t, out=a)
        a += gates_x[:, t]
        np.clip(a, -60.0, 60.0, out=a)
        # i, f, o are logistic gates; g is the tanh cell candidate
        np.negative(a[:, : 2 * h_size], out=a[:, : 2 * h_size])
        np.exp(a[:, : 2 * h_size], out=a[:, : 2 * h_size])
        a[:, : 2 * h_size] += 1.0
        i = np.reciprocal(a[:, :h_size], out=gi[:, t])
        f = np.reciprocal(a[:, h_size : 2 * h_size], out=gf[:, t])
        g = np.tanh(a[:, 2 * h_size : 3 * h_size], out=gg[:, t])
        np.negative(a[:, 3 * h_size :], out=a[:, 3 * h_size :])
        np.exp(a[:, 3 * h_size :], out=a[:, 3 * h_size :])
        a[:, 3 * h_size :] += 1.0
        o = np.reciprocal(a[:, 3 * h_size :], out=go[:, t])

        c = f * c
        c += i * g
        tanh_c = np.tanh(c, out=gt[:, t])
        h = o * tanh_c
        h_seq[:, t] = h
        c_seq[:, t] = c
    return LstmLayerTrace(x_seq, h_seq, c_seq, gi, gf, gg, go, gt)


def _lstm_layer_backward(
    weights: LstmLayerWeights, trace: LstmLayerTrace, d_hseq: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """BPTT through one layer given gradients w.r.t. every hidden output.

    Only the recurrent carry (dh, dc) runs in the time loop; gate
    pre-activation gradients are collected and contracted against the
    inputs in single batched products afterwards.
    """
    batch, steps, h_size = trace.h_seq.shape
    d_gates_seq = np.empty((batch, steps, 4 * h_size))

    zeros = np.zeros((batch, h_size))
    dh = np.zeros((batch, h_size))
    dc = np.zeros((batch, h_size))
    tmp = np.empty((batch, h_size))
    for t in range(steps - 1, -1, -1):
        i = trace.i[:, t]
        f = trace.f[:, t]
        g = trace.g[:, t]
        o = trace.o[:, t]
        tanh_c = trace.tanh_c[:, t]
        c_prev = trace.c_seq[:, t - 1] if t > 0 else zeros

        dh += d_hseq[:, t]
        # dc accumulates dh * o * (1 - tanh(c)^2) on top of the carried dc*f
        np.multiply(tanh_c, tanh_c, out=tmp)
        np.subtract(1.0, tmp, out=tmp)
        tmp *= o
        tmp *= dh
        dc += tmp

        d_gates = d_gates_seq[:, t]
        v = d_gates[:, :h_size]
        np.subtract(1.0, i, out=v)
        v *= i
        v *= g
        v *= dc
        v = d_gates[:, h_size : 2 * h_size]
        np.subtract(1.0, f, out=v)
        v *= f
        v *= c_prev
        v *= dc
        v = d_gates[:, 2 * h_size : 3 * h_size]
        np.multiply(g, g, out=v)
        np.subtract(1.0, v, out=v)
        v *= i
        v *= dc
        v = d_gates[:, 3 * h_size :]
        np.subtract(1.0, o, out=v)
        v *= o
        v *= tanh_c
        v *= dh
        dc *= f  # carry to step t-1
        np.dot(d_gates, weights.w_h, out=dh)

    h_prev_seq = np.empty((batch, steps, h_size))
    h_prev_seq[:, 0] = 0.0
    h_prev_seq[:, 1:] = trace.h_seq[:, :-1]
    flat_gates = d_gates_seq.reshape(batch * steps, 4 * h_size)
    d_wx = flat_gates.T @ trace.x_seq.reshape(batch * steps, -1)
    d_wh = flat_gates.T @ h_prev_seq.reshape(batch * steps, h_size)
    d_b = flat_gates.sum(axis=0)
    d_x = np.empty(trace.x_seq.shape)
    np.dot(flat_gates, weights.w_x, out=d_x.reshape(batch * steps, -1))

    return d_x, {"w_x": d_wx, "w_h": d_wh, "b": d_b}


def _dropout_mask(rng: np.random.Generator, shape: tuple, rate: float) -> np.ndarray:
    # inverted dropout: surviving units are scaled so eval needs no rescale
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def model_forward(
    params: ModelParams,
    x: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | int | None = None,
):
    """Run the network on one window (shape (T,)) or a batch (B, T).

    Returns (p_outbreak, y_hat, trace); scalars for a single window, arrays
    for a batch.  Dropout fires only in train mode, drawing masks from
    ``rng``; eval mode is deterministic.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.config.window_len:
        raise ValueError(
            f"expected windows of length {params.config.window_len}, got shape {x.shape}"
        )
    if not np.isfinite(x).all():
        raise NumericError("non-finite model input")

    rate = params.config.dropout_rate
    use_dropout = mode == "train" and rate > 0.0
    if use_dropout:
        if rng is None:
            raise ValueError("train-mode forward with dropout needs an rng or seed")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)

    seq = x[:, :, None]
    lstm_traces: list = []
    seq_masks: list = []
    n_layers = len(params.lstm_layers)

    if params.bidirectional:
        for idx, (fwd, bwd) in enumerate(params.lstm_layers):
            tr_f = _lstm_layer_forward(fwd, seq)
            tr_b = _lstm_layer_forward(bwd, seq[:, ::-1].copy())
            lstm_traces.append((tr_f, tr_b))
            if idx < n_layers - 1:
                out = np.concatenate([tr_f.h_seq, tr_b.h_seq[:, ::-1]], axis=2)
                if use_dropout:
                    mask = _dropout_mask(rng, out.shape, rate)
                    out = out * mask
                else:
                    mask = None
                seq_masks.append(mask)
                seq = out
        readout = np.concatenate([tr_f.h_seq[:, -1], tr_b.h_seq[:, -1]], axis=1)
    else:
        for idx, weights in enumerate(params.lstm_layers):
            tr = _lstm_layer_forward(weights, seq)
            lstm_traces.append(tr)
            if idx < n_layers - 1:
                out = tr.h_seq
                if use_dropout:
                    mask = _dropout_mask(rng, out.shape, rate)
                    out = out * mask
                else:
                    mask = None
                seq_masks.append(mask)
                seq = out
        readout = tr.h_seq[:, -1]

    if use_dropout:
        readout_mask = _dropout_mask(rng, readout.shape, rate)
        features = readout * readout_mask
    else:
        readout_mask = None
        features = readout

    dense_pre: list[np.ndarray] = []
    dense_act: list[np.ndarray] = []
    for w, b in params.dense_layers:
        pre = features @ w.T + b
        features = _relu(pre)
        dense_pre.append(pre)
        dense_act.append(features)

    w_c, b_c = params.head_clf
    w_r, b_r = params.head_reg
    p = sigmoid(features @ w_c.T + b_c)[:, 0]
    y_hat = (features @ w_r.T + b_r)[:, 0]

    trace = ForwardTrace(
        mode=mode,
        lstm=lstm_traces,
        seq_masks=seq_masks,
        readout=readout,
        readout_mask=readout_mask,
        dense_pre=dense_pre,
        dense_act=dense_act,
        features=features,
        p=p,
        y_hat=y_hat,
    )
    if single:
        return float(p[0]), float(y_hat[0]), trace
    return p, y_hat, trace


def multitask_loss(p, y_hat, y_clf, y_reg) -> float:
    """Joint loss: binary cross-entropy plus squared error, equally weighted.

    Probabilities are clamped to [1e-7, 1-1e-7] before the logs; batch
    inputs yield the mean of per-sample losses.
    """
    p = np.clip(np.asarray(p, dtype=float), PROB_EPS, 1.0 - PROB_EPS)
    y_hat = np.asarray(y_hat, dtype=float)
    y_clf = np.asarray(y_clf, dtype=float)
    y_reg = np.asarray(y_reg, dtype=float)
    bce = -(y_clf * np.log(p) + (1.0 - y_clf) * np.log(1.0 - p))
    sq = (y_hat - y_reg) ** 2
    return float(np.mean(bce + sq))


def model_backward(
    params: ModelParams, trace: ForwardTrace, y_clf, y_reg
) -> dict[str, np.ndarray]:
    """Gradients of the mean multitask loss w.r.t. every tensor in ``params``.

    Reuses the dropout masks recorded in ``trace``.  The probability clamp
    only guards the logs; gradients use the clamp-free form p - y, exact
    whenever the clamp is inactive.
    """
    if trace.mode != "train":
        raise ValueError("backward requires a train-mode forward trace")
    p = trace.p
    y_hat = trace.y_hat
    y_clf = np.broadcast_to(np.asarray(y_clf, dtype=float), p.shape)
    y_reg = np.broadcast_to(np.asarray(y_reg, dtype=float), p.shape)
    batch = p.shape[0]

    grads: dict[str, np.ndarray] = {}
    dz_clf = (p - y_clf) / batch
    dy = 2.0 * (y_hat - y_reg) / batch

    feats = trace.features
    w_c, _ = params.head_clf
    w_r, _ = params.head_reg
    grads["head_clf.w"] = dz_clf[None, :] @ feats
    grads["head_clf.b"] = np.array([dz_clf.sum()])
    grads["head_reg.w"] = dy[None, :] @ feats
    grads["head_reg.b"] = np.array([dy.sum()])
    d_feat = np.outer(dz_clf, w_c[0]) + np.outer(dy, w_r[0])

    for idx in range(len(params.dense_layers) - 1, -1, -1):
        w, _ = params.dense_layers[idx]
        pre = trace.dense_pre[idx]
        d_pre = d_feat * (pre > 0.0)
        below = trace.dense_act[idx - 1] if idx > 0 else (
            trace.readout if trace.readout_mask is None else trace.readout * trace.readout_mask
        )
        grads[f"dense{idx}.w"] = d_pre.T @ below
        grads[f"dense{idx}.b"] = d_pre.sum(axis=0)
        d_feat = d_pre @ w

    d_readout = d_feat if trace.readout_mask is None else d_feat * trace.readout_mask

    n_layers = len(params.lstm_layers)
    if params.bidirectional:
        h_top = params.lstm_layers[-1][0].hidden_size
        d_seq = None
        for idx in range(n_layers - 1, -1, -1):
            fwd, bwd = params.lstm_layers[idx]
            tr_f, tr_b = trace.lstm[idx]
            if idx == n_layers - 1:
                d_hf = np.zeros_like(tr_f.h_seq)
                d_hb = np.zeros_like(tr_b.h_seq)
                d_hf[:, -1] = d_readout[:, :h_top]
                d_hb[:, -1] = d_readout[:, h_top:]
            else:
                mask = trace.seq_masks[idx]
                d_out = d_seq if mask is None else d_seq * mask
                h_here = fwd.hidden_size
                d_hf = d_out[:, :, :h_here]
                d_hb = d_out[:, ::-1, h_here:]
            dx_f, g_f = _lstm_layer_backward(fwd, tr_f, d_hf)
            dx_b, g_b = _lstm_layer_backward(bwd, tr_b, np.ascontiguousarray(d_hb))
            for key, val in g_f.items():
                grads[f"lstm{idx}.fwd.{key}"] = val
            for key, val in g_b.items():
                grads[f"lstm{idx}.bwd.{key}"] = val
            d_seq = dx_f + dx_b[:, ::-1]
    else:
        d_seq = None
        for idx in range(n_layers - 1, -1, -1):
            weights = params.lstm_layers[idx]
            tr = trace.lstm[idx]
            if idx == n_layers - 1:
                d_h = np.zeros_like(tr.h_seq)
                d_h[:, -1] = d_readout
            else:
                mask = trace.seq_masks[idx]
                d_h = d_seq if mask is None else d_seq * mask
            d_seq, layer_grads = _lstm_layer_backward(weights, tr, d_h)
            for key, val in layer_grads.items():
                grads[f"lstm{idx}.{key}"] = val

    return grads


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_model(
    path,
    params: ModelParams,
    scaler: ScalerParams,
    extra_meta: dict | None = None,
) -> None:
    """Write a versioned .npz artifact: all weight tensors plus a JSON header
    carrying the architecture, window length, dropout rate, and scaler."""
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "architecture": params.config.architecture,
        "window_len": params.config.window_len,
        "lstm_units": list(params.config.lstm_units),
        "dense_units": list(params.config.dense_units),
        "dropout_rate": params.config.dropout_rate,
        "scaler": {
            "x_min": scaler.x_min,
            "x_max": scaler.x_max,
            "fitted_on": scaler.fitted_on,
        },
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = {name: arr for name, arr in named_arrays(params)}
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_model(path) -> tuple[ModelParams, ScalerParams, dict]:
    """Read a model artifact back; weight round-trips are bit-exact."""
    try:
        with np.load(path, allow_pickle=False) as payload:
            if "__meta__" not in payload:
                raise DataFormatError(f"{path}: not a model artifact (missing metadata)")
            meta = json.loads(str(payload["__meta__"][()]))
            if meta.get("format_version") != MODEL_FORMAT_VERSION:
                raise DataFormatError(
                    f"{path}: unsupported model format {meta.get('format_version')!r}"
                )
            config = ModelConfig(
                architecture=meta["architecture"],
                window_len=int(meta["window_len"]),
                lstm_units=tuple(meta["lstm_units"]),
                dense_units=tuple(meta["dense_units"]),
                dropout_rate=float(meta["dropout_rate"]),
            )
            template = init_params(config, seed=0)
            arrays = {name: payload[name] for name, _ in named_arrays(template)}
        scaler = ScalerParams(
            x_min=float(meta["scaler"]["x_min"]),
            x_max=float(meta["scaler"]["x_max"]),
            fitted_on=meta["scaler"]["fitted_on"],
        )
    except DataFormatError:
        raise
    except (KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: corrupt or incompatible model artifact ({exc})") from exc
    return rebuild_params(template, arrays), scaler, meta

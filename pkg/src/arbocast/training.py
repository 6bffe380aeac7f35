"""Mini-batch training: Adam updates, early stopping, LR reduction on plateau.

One call to ``train`` runs seeded shuffled mini-batches for up to
``epochs`` epochs, monitors the joint multitask loss on the validation
split, halves the learning rate after ``plateau_patience`` epochs without
improvement, stops after ``patience_stop`` such epochs, and returns the
parameters from the best validation epoch.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataFormatError, NumericError
from .nn import ModelParams, model_backward, model_forward, multitask_loss, named_arrays, rebuild_params
from .preprocess import SPLIT_TRAIN, SPLIT_VAL, WindowedDataset

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    patience_stop: int | None = 10  # None disables early stopping (tuning trials)
    lr_init: float = 1e-3
    plateau_factor: float = 0.5
    plateau_patience: int | None = 5
    lr_min: float = 1e-5
    improvement_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.patience_stop is not None and self.patience_stop < 1:
            raise ValueError("patience_stop must be positive or None")
        if self.plateau_patience is not None and self.plateau_patience < 1:
            raise ValueError("plateau_patience must be positive or None")
        if self.lr_init <= 0 or self.lr_min <= 0 or not 0 < self.plateau_factor < 1:
            raise ValueError("invalid learning-rate schedule")


@dataclass
class AdamState:
    """First/second moment estimates per tensor, step counter, current LR."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: ModelParams, lr: float) -> "AdamState":
        m = {name: np.zeros_like(arr) for name, arr in named_arrays(params)}
        v = {name: np.zeros_like(arr) for name, arr in named_arrays(params)}
        return cls(m=m, v=v, lr=lr)


def adam_update_arrays(
    arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam step over a name->array mapping; returns new arrays and state."""
    t = state.t + 1
    new_arrays: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, arr in arrays.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in tensor {name!r}")
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_arrays[name] = arr - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_arrays, replace(state, m=new_m, v=new_v, t=t)


def adam_step(
    params: ModelParams, grads: dict[str, np.ndarray], state: AdamState
) -> tuple[ModelParams, AdamState]:
    """Adam update of a full parameter set (functional: inputs untouched)."""
    arrays = dict(named_arrays(params))
    new_arrays, new_state = adam_update_arrays(arrays, grads, state)
    return rebuild_params(params, new_arrays), new_state


@dataclass
class MonitorState:
    """Early-stopping and plateau bookkeeping over the validation loss."""

    improvement_tol: float
    patience_stop: int | None
    plateau_patience: int | None
    plateau_factor: float
    lr_min: float
    lr: float
    best: float = np.inf
    best_epoch: int = 0
    stop_wait: int = 0
    plateau_wait: int = 0

    def update(self, epoch: int, val_loss: float) -> tuple[bool, bool]:
        """Feed one epoch's validation loss; returns (improved, should_stop)."""
        improved = (self.best - val_loss) >= self.improvement_tol
        if improved:
            self.best = val_loss
            self.best_epoch = epoch
            self.stop_wait = 0
            self.plateau_wait = 0
            return True, False
        self.stop_wait += 1
        self.plateau_wait += 1
        if self.plateau_patience is not None and self.plateau_wait >= self.plateau_patience:
            self.lr = max(self.lr * self.plateau_factor, self.lr_min)
            self.plateau_wait = 0
        should_stop = self.patience_stop is not None and self.stop_wait >= self.patience_stop
        return False, should_stop


@dataclass
class TrainHistory:
    """Per-epoch record of one training run."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    def to_csv(self, path, config_hash: str | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            fh.write("epoch,train_loss,val_loss,lr\n")
            for epoch, (tr, va, lr) in enumerate(
                zip(self.train_loss, self.val_loss, self.lr), start=1
            ):
                fh.write(f"{epoch},{tr!r},{va!r},{lr!r}\n")


def evaluate_loss(params: ModelParams, ds: WindowedDataset, batch_size: int = 256) -> float:
    """Mean multitask loss over a dataset slice in eval mode."""
    total = 0.0
    for start in range(0, ds.n, batch_size):
        stop = min(start + batch_size, ds.n)
        p, y_hat, _ = model_forward(params, ds.x[start:stop], mode="eval")
        total += multitask_loss(p, y_hat, ds.y_clf[start:stop], ds.y_reg[start:stop]) * (
            stop - start
        )
    return total / ds.n


def train(
    params: ModelParams, ds: WindowedDataset, cfg: TrainConfig
) -> tuple[ModelParams, TrainHistory]:
    """Fit the model on the train split, monitoring the val split.

    Batches are drawn in a freshly shuffled order each epoch (seeded), the
    validation loss drives both callbacks, and the returned parameters are
    the snapshot from the best validation epoch.
    """
    train_ds = ds.subset(ds.split == SPLIT_TRAIN)
    val_ds = ds.subset(ds.split == SPLIT_VAL)
    if train_ds.n == 0:
        raise DataFormatError("training split is empty")
    if val_ds.n == 0:
        raise DataFormatError("validation split is empty")

    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(params, cfg.lr_init)
    monitor = MonitorState(
        improvement_tol=cfg.improvement_tol,
        patience_stop=cfg.patience_stop,
        plateau_patience=cfg.plateau_patience,
        plateau_factor=cfg.plateau_factor,
        lr_min=cfg.lr_min,
        lr=cfg.lr_init,
    )
    history = TrainHistory()
    best_params = params

    for epoch in range(1, cfg.epochs + 1):
        state.lr = monitor.lr
        order = rng.permutation(train_ds.n)
        loss_sum = 0.0
        for start in range(0, train_ds.n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            p, y_hat, trace = model_forward(params, train_ds.x[idx], mode="train", rng=rng)
            loss = multitask_loss(p, y_hat, train_ds.y_clf[idx], train_ds.y_reg[idx])
            grads = model_backward(params, trace, train_ds.y_clf[idx], train_ds.y_reg[idx])
            params, state = adam_step(params, grads, state)
            loss_sum += loss * idx.size
        train_loss = loss_sum / train_ds.n
        val_loss = evaluate_loss(params, val_ds)
        if not np.isfinite(val_loss):
            raise NumericError(f"validation loss diverged at epoch {epoch}")

        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.lr.append(monitor.lr)
        history.stopped_epoch = epoch

        improved, should_stop = monitor.update(epoch, val_loss)
        if improved:
            best_params = params
        if should_stop:
            break

    history.best_epoch = monitor.best_epoch
    return best_params, history

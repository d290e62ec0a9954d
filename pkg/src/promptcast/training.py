"""Freeze-masked AdamW training of prompts, interaction layers and head."""

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, DivergenceError, InputError, NumericFault
from .model import forward
from .tensor import Rng, Tensor

log = logging.getLogger(__name__)

BASE_LR = 2e-5
DIVERGENCE_LOSS = 1e6


@dataclass
class TrainConfig:
    learning_rate: float = BASE_LR
    lr_multiplier: float = 1.0  # desk-scale scaling of the base rate, kept explicit
    epochs: int = 10
    batch_size: int = 32
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    data_fraction: float = 1.0
    train_stride: int = 1
    eval_stride: int = 0  # 0 -> horizon

    def __post_init__(self):
        if not self.learning_rate > 0 or not self.lr_multiplier > 0:
            raise ConfigError("learning_rate and lr_multiplier must be > 0")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigError(f"epochs must be an integer >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not 0.0 < self.data_fraction <= 1.0:
            raise ConfigError(f"data_fraction must be in (0, 1], got {self.data_fraction}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigError("betas must be in [0, 1) and eps > 0")
        if self.train_stride < 1 or self.eval_stride < 0:
            raise ConfigError("train_stride must be >= 1 and eval_stride >= 0")

    @property
    def lr(self):
        return self.learning_rate * self.lr_multiplier

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    update_norm: list = field(default_factory=list)
    zero_shot_val_mse: float = float("nan")
    # wall-clock varies run to run; excluded from equality
    seconds: list = field(default_factory=list, compare=False)

    def __len__(self):
        return len(self.train_loss)

    def metrics_csv(self):
        """Deterministic metrics table; epoch 0 is the untrained model."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_mse", "update_norm"])
        w.writerow([0, "", repr(self.zero_shot_val_mse), ""])
        for i in range(len(self)):
            w.writerow([i + 1, repr(self.train_loss[i]), repr(self.val_mse[i]), repr(self.update_norm[i])])
        return buf.getvalue()

    def timings_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "seconds"])
        for i, s in enumerate(self.seconds, 1):
            w.writerow([i, f"{s:.3f}"])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(asdict(self), indent=2)


def build_freeze_mask(model):
    """Names of the trainable tensors: prompts, interaction layers and head."""
    return frozenset(model.trainable())


def mse_loss(pred, target):
    """Mean squared error; ``pred`` may be a Tensor, ``target`` an array."""
    p = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, dtype=np.float64))
    y = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionError(f"prediction shape {p.shape} != target shape {y.shape}")
    return T.mean_square(p - y)


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(params, state, config):
    """One in-place AdamW update over ``{name: Tensor}`` with populated ``.grad``.

    Returns the L2 norm of the applied update.
    """
    for name, p in params.items():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise NumericFault(f"non-finite gradient in tensor {name!r}")
    state.step += 1
    b1, b2, lr, wd = config.beta1, config.beta2, config.lr, config.weight_decay
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    total = 0.0
    for name in sorted(params):
        p = params[name]
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        upd = lr * (m / c1) / (np.sqrt(v / c2) + config.eps) + lr * wd * p.data
        p.data -= upd
        total += float((upd * upd).sum())
    return math.sqrt(total)


def _batch_loss(model, windows, idx, description):
    x = np.stack([windows[i].context for i in idx])
    y = np.stack([windows[i].target for i in idx])
    return mse_loss(forward(model, x, description), y)


def evaluate_windows(model, windows, description=None, batch_size=64):
    """Average per-window MSE over a list of :class:`WindowPair`."""
    if len(windows) == 0:
        raise InputError("cannot evaluate on an empty window set")
    total = 0.0
    with T.no_grad():
        for lo in range(0, len(windows), batch_size):
            chunk = windows[lo:lo + batch_size]
            x = np.stack([w.context for w in chunk])
            y = np.stack([w.target for w in chunk])
            err = forward(model, x, description).data - y
            total += float((err * err).mean(axis=1).sum())
    return total / len(windows)


def subsample_windows(windows, fraction, seed):
    if fraction >= 1.0:
        return list(windows)
    n = max(1, int(math.floor(fraction * len(windows))))
    keep = np.sort(Rng(seed).child("data_fraction").permutation(len(windows))[:n])
    return [windows[i] for i in keep]


def train(model, train_windows, val_windows, config, description=None, on_epoch=None):
    """Optimize the trainable tensors of ``model`` in place.

    Validation MSE is recorded before training (``zero_shot_val_mse``) and
    after every epoch. Raises :class:`DivergenceError` carrying the partial
    history if a batch loss exceeds 1e6 or turns non-finite.
    """
    train_windows = list(getattr(train_windows, "windows", train_windows))
    val_windows = list(getattr(val_windows, "windows", val_windows))
    if not train_windows:
        raise InputError("training set is empty")
    rng = Rng(config.seed).child("train")
    train_windows = subsample_windows(train_windows, config.data_fraction, config.seed)
    params = model.trainable()
    state = AdamState()
    hist = TrainHistory()
    if val_windows:
        hist.zero_shot_val_mse = evaluate_windows(model, val_windows, description)
    shuffle = rng.child("shuffle")
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle.permutation(len(train_windows))
        losses, norm_sq = [], 0.0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            model.zero_grad()
            loss = _batch_loss(model, train_windows, idx, description)
            value = loss.item()
            if not math.isfinite(value) or value > DIVERGENCE_LOSS:
                raise DivergenceError(f"training diverged at epoch {epoch} (batch loss {value:.4g})", hist)
            T.backward(loss)
            norm_sq += optimizer_step(params, state, config) ** 2
            losses.append(value * len(idx))
        hist.train_loss.append(float(np.sum(losses)) / len(train_windows))
        hist.update_norm.append(math.sqrt(norm_sq))
        hist.val_mse.append(evaluate_windows(model, val_windows, description) if val_windows else float("nan"))
        hist.seconds.append(time.perf_counter() - t0)
        log.info("epoch %d: train %.5f val %.5f (%.1fs)", epoch, hist.train_loss[-1], hist.val_mse[-1],
                 hist.seconds[-1])
        if on_epoch is not None:
            on_epoch(epoch, hist)
    return hist

"""Training loop: cross-entropy, SGD with momentum, schedule, verification.

The optimizer is classical (heavy-ball) momentum:

    v <- 0.9 v + g        p <- p - lr * v

The reference schedule trains 200 epochs with lr 0.1 for the first 100 and
0.01 for the rest, batch size 8; the desk-scale schedule is the same shape
compressed to 15 + 15 epochs.  Model selection keeps the checkpoint with the
highest validation accuracy, earliest epoch winning ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .errors import NumericError, ValidationError
from .layers import Model, model_forward

MOMENTUM = 0.9
PROB_FLOOR = 1e-12


@dataclass
class ArrayDataset:
    """Sampled two-hemisphere measures with binary labels."""
    left: np.ndarray    # (N, C, 2b, 2b)
    right: np.ndarray   # (N, C, 2b, 2b)
    labels: np.ndarray  # (N,) integers in {0, 1}

    def __post_init__(self):
        self.left = np.asarray(self.left)
        self.right = np.asarray(self.right)
        self.labels = np.asarray(self.labels)
        if not (len(self.left) == len(self.right) == len(self.labels)):
            raise ValidationError("dataset arrays disagree on subject count")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "ArrayDataset":
        return ArrayDataset(self.left[idx], self.right[idx], self.labels[idx])


@dataclass(frozen=True)
class TrainConfig:
    """schedule is a sequence of (epoch_count, learning_rate) phases."""
    schedule: tuple = ((100, 0.1), (100, 0.01))
    batch_size: int = 8
    seed: int = 0

    @property
    def epochs(self) -> int:
        return sum(n for n, _ in self.schedule)

    def lr_for_epoch(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch index."""
        done = 0
        for count, lr in self.schedule:
            done += count
            if epoch <= done:
                return lr
        return self.schedule[-1][1]


def cross_entropy(probs, label: int) -> float:
    """-ln p[label] for one example, with the probability floored at 1e-12."""
    p = float(np.asarray(probs)[int(label)])
    return -float(np.log(max(p, PROB_FLOOR)))


def batch_loss(model: Model, params, left, right, labels, train: bool = True):
    """Mean cross-entropy of a batch via the log-softmax path (differentiable)."""
    out = model_forward(model, left, right, params=params, train=train)
    picked = ad.select_columns(out["log_probs"], np.asarray(labels, dtype=np.intp))
    return ad.scale(ad.sum_axes(picked, (0,)), -1.0 / len(labels))


@dataclass
class OptimizerState:
    velocity: dict = field(default_factory=dict)


def sgd_step(params: dict, grads: dict, state: OptimizerState, lr: float) -> None:
    """In-place heavy-ball update of every parameter Var."""
    for name, var in params.items():
        g = grads[name]
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(var.data)
        v = MOMENTUM * v + g
        state.velocity[name] = v
        var.data -= lr * v


def predict_batched(model: Model, ds: ArrayDataset, batch_size: int = 32) -> np.ndarray:
    """Class probabilities over a dataset in inference mode."""
    chunks = []
    for i in range(0, len(ds), batch_size):
        out = model_forward(model, ds.left[i:i + batch_size],
                            ds.right[i:i + batch_size], train=False)
        chunks.append(np.exp(ad.val(out["log_probs"])))
    return np.concatenate(chunks, axis=0)


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Fraction with positive-class probability on the correct side of 0.5."""
    pred = (probs[:, 1] >= 0.5).astype(int)
    return float(np.mean(pred == np.asarray(labels)))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float
    lr: float


def train(model: Model, train_set: ArrayDataset, val_set: ArrayDataset,
          config: TrainConfig) -> tuple[Model, list[EpochRecord]]:
    """Train in place and return (best-validation-accuracy snapshot, history)."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValidationError("empty training or validation set")
    rng = np.random.default_rng(config.seed)
    params = model.make_vars()
    state = OptimizerState()
    history: list[EpochRecord] = []
    best_acc = -1.0
    best_model = model.copy()
    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_for_epoch(epoch)
        perm = rng.permutation(n)
        loss_sum = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            with Tape() as tape:
                loss = batch_loss(model, params, train_set.left[idx],
                                  train_set.right[idx], train_set.labels[idx])
            lv = float(ad.val(loss))
            if not np.isfinite(lv):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch} batch {bi}")
            grads = dict(zip(params, tape.gradients(loss, list(params.values()))))
            sgd_step(params, grads, state, lr)
            loss_sum += lv * len(idx)
        val_probs = predict_batched(model, val_set)
        val_acc = accuracy(val_probs, val_set.labels)
        history.append(EpochRecord(epoch, loss_sum / n, val_acc, lr))
        if val_acc > best_acc:
            best_acc = val_acc
            best_model = model.copy()
    return best_model, history


def history_csv(history: list[EpochRecord]) -> str:
    lines = ["epoch,train_loss,val_acc,lr"]
    for r in history:
        lines.append(f"{r.epoch},{r.train_loss!r},{r.val_acc!r},{r.lr!r}")
    return "\n".join(lines) + "\n"


def finite_diff_check(model: Model, batch, step: float = 1e-5,
                      max_entries: int = 10_000, seed: int = 0,
                      floor: float = 1e-4) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    batch is (left, right, labels).  Every real scalar entry (complex entries
    contribute their real and imaginary parts separately) is checked, or a
    seeded random subsample when the model has more than max_entries of them.
    The relative error of a pair (a, d) is |a - d| / max(|a|, |d|, floor);
    the floor keeps roundoff noise from dominating entries whose true
    gradient is zero (e.g. a bias immediately followed by batch norm).
    """
    if step == 0:
        raise ValidationError("finite-difference step must be nonzero")
    left, right, labels = batch
    for t in model.tensors.values():
        if t.dtype not in (np.dtype(np.float64), np.dtype(np.complex128)):
            raise ValidationError("finite_diff_check requires a 64-bit model")

    buffers = {n: model.tensors[n].copy() for n in model.tensors
               if not model.trainable[n]}

    def restore():
        for n, v in buffers.items():
            model.tensors[n][...] = v

    params = model.make_vars()
    with Tape() as tape:
        loss = batch_loss(model, params, left, right, labels)
    grads = dict(zip(params, tape.gradients(loss, list(params.values()))))

    entries = []
    for name in model.parameter_names():
        t = model.tensors[name]
        comps = (1.0, 1.0j) if np.iscomplexobj(t) else (1.0,)
        for flat in range(t.size):
            for comp in comps:
                entries.append((name, flat, comp))
    if len(entries) > max_entries:
        sel = np.random.default_rng(seed).choice(len(entries), size=max_entries,
                                                 replace=False)
        entries = [entries[i] for i in sel]

    worst = 0.0
    for name, flat, comp in entries:
        t = model.tensors[name]
        idx = np.unravel_index(flat, t.shape)
        orig = t[idx]
        t[idx] = orig + comp * step
        restore()
        hi = float(ad.val(batch_loss(model, None, left, right, labels)))
        t[idx] = orig - comp * step
        restore()
        lo = float(ad.val(batch_loss(model, None, left, right, labels)))
        t[idx] = orig
        fd = (hi - lo) / (2 * step)
        g = grads[name][idx]
        a = float(np.real(g)) if comp == 1.0 else float(np.imag(g))
        worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), floor))
    restore()
    return worst

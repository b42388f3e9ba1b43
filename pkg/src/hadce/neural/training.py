"""Mini-batch training with plateau LR decay and early stopping."""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..rng import SHUFFLE, stream
from .model import init_model, loss_and_grads, predict
from .optim import adam_init, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    batch: int = 128
    decay_factor: float = 0.1
    plateau_patience: int = 5
    stop_patience: int = 12
    max_epochs: int = 200
    seed: int = 0
    freeze_encoder: bool = False
    # float32 halves training time; gradient checks use float64.
    dtype: str = "float32"
    valid_fraction: float = 0.2


@dataclass
class TrainReport:
    train_losses: list = field(default_factory=list)
    # Entry 0 is the validation loss of the untrained model.
    val_losses: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_val_loss: float = float("inf")


def split_dataset(dataset, valid_fraction=0.2):
    """Contiguous train/validation split (4:1 by default).

    Samples of one channel stay on the same side of the split when the
    dataset knows its antennas-per-channel count.
    """
    x_noisy, x = _arrays(dataset)
    S = len(x)
    per = getattr(dataset, "per_channel", 1) or 1
    n_channels = S // per
    n_train = int(round(n_channels * (1 - valid_fraction))) * per
    if n_train == 0 or n_train == S:
        raise ValueError(f"cannot split {S} samples into train and validation")
    return (x_noisy[:n_train], x[:n_train]), (x_noisy[n_train:], x[n_train:])


def _arrays(dataset):
    if hasattr(dataset, "x_noisy"):
        return dataset.x_noisy, dataset.x
    x_noisy, x = dataset
    return np.asarray(x_noisy), np.asarray(x)


def evaluate_loss(model, x_noisy, x, chunk=8192):
    total = 0.0
    for i in range(0, len(x), chunk):
        d = predict(model, x_noisy[i:i + chunk]) - x[i:i + chunk]
        total += float(np.sum(d.astype(np.float64) ** 2))
    return total / len(x)


def train(dataset, cfg, encoder_init, model=None, progress=None):
    """Train a model on ``(x_noisy, x)`` pairs and keep the best snapshot.

    The learning rate is multiplied by ``cfg.decay_factor`` whenever the
    validation loss has not improved for ``cfg.plateau_patience`` epochs,
    and training stops after ``cfg.stop_patience`` epochs without
    improvement. Returns the best-validation model and a ``TrainReport``.
    """
    x_noisy, x = _arrays(dataset)
    if len(x) == 0:
        raise ValueError("empty dataset")
    dtype = np.dtype(cfg.dtype)
    (xn_tr, x_tr), (xn_va, x_va) = split_dataset(dataset, cfg.valid_fraction)
    xn_tr, x_tr = xn_tr.astype(dtype), x_tr.astype(dtype)
    xn_va, x_va = xn_va.astype(dtype), x_va.astype(dtype)
    N = x.shape[1] // 2

    if model is None:
        model = init_model(N, encoder_init.R, cfg.seed, encoder_init, dtype=dtype)
    else:
        model = model.astype(dtype)
    train_encoder = not cfg.freeze_encoder
    state = adam_init()
    lr = cfg.lr0
    report = TrainReport()
    report.val_losses.append(evaluate_loss(model, xn_va, x_va))
    best = model.copy()
    report.best_val_loss = report.val_losses[0]
    wait_lr = 0
    wait_stop = 0

    n = len(x_tr)
    for epoch in range(1, cfg.max_epochs + 1):
        perm = stream(cfg.seed, SHUFFLE, epoch).permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            loss, grads = loss_and_grads(model, xn_tr[idx], x_tr[idx], train_encoder)
            adam_step(model.params, grads, state, lr)
            total += loss * len(idx)
        report.train_losses.append(total / n)
        report.lrs.append(lr)
        val = evaluate_loss(model, xn_va, x_va)
        report.val_losses.append(val)
        report.stopped_epoch = epoch
        if not np.isfinite(val):
            raise FloatingPointError(f"validation loss diverged at epoch {epoch}")
        if val < report.best_val_loss:
            report.best_val_loss = val
            report.best_epoch = epoch
            best = model.copy()
            wait_lr = wait_stop = 0
        else:
            wait_lr += 1
            wait_stop += 1
        if progress is not None:
            progress(epoch, report.train_losses[-1], val, lr)
        log.debug("epoch %d train %.6g val %.6g lr %.1e", epoch, report.train_losses[-1], val, lr)
        if wait_stop >= cfg.stop_patience:
            break
        if wait_lr >= cfg.plateau_patience:
            lr *= cfg.decay_factor
            wait_lr = 0
    best.meta.update(seed=int(cfg.seed), best_epoch=report.best_epoch)
    return best, report

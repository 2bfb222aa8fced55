"""MSE training loop with Adam and validation-based early stopping."""

from __future__ import annotations

import logging

import numpy as np
from threadpoolctl import threadpool_limits

from ..errors import NumericError, TrainingError
from .network import ArchitectureConfig, Model, TrainConfig

log = logging.getLogger(__name__)


def mse_loss(pred, target):
    """Returns (loss, dloss/dpred). Loss accumulated in float64."""
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(diff * diff))
    dpred = (2.0 / diff.size) * diff
    return loss, dpred


class Adam:
    """Adam with L2-coupled weight decay (decay added to the gradient)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for key, p in self.params.items():
            g = grads[key].astype(np.float64)
            if self.weight_decay:
                g = g + self.weight_decay * p.astype(np.float64)
            m = self.m[key]
            v = self.v[key]
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            upd = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p -= upd.astype(p.dtype)


def _stack_batch(samples, norm_stats, dtype=np.float32):
    """(images, feats, targets) arrays for a list of labelled samples."""
    from .. import features as feat_mod
    from ..imaging import concat_vertical

    imgs = np.stack([concat_vertical(s.images) for s in samples])[:, None, :, :]
    feats = np.stack([feat_mod.apply_normalization(s.features, norm_stats)
                      for s in samples])
    targets = np.array([s.target_delta_db for s in samples], dtype=np.float64)
    return imgs.astype(dtype), feats.astype(dtype), targets.astype(dtype)


def evaluate_loss(model, imgs, feats, targets, batch_size=128):
    """Inference-mode MSE over a full array set."""
    total = 0.0
    n = imgs.shape[0]
    for i in range(0, n, batch_size):
        pred = model.forward(imgs[i:i + batch_size], feats[i:i + batch_size],
                             training=False)
        diff = pred.astype(np.float64) - targets[i:i + batch_size].astype(np.float64)
        total += float(np.sum(diff * diff))
    return total / n


def train(split, arch: ArchitectureConfig, cfg: TrainConfig, norm_stats):
    """Train on split.train, early-stop on split.val; returns best model.

    Returns (model, history) where history has per-epoch train/val MSE
    (in dB^2) and the index of the best validation epoch. Targets are
    standardized internally so the output layer starts at the right
    scale; history carries the target_mean/target_std the predictor
    needs to undo the scaling. Fully deterministic given cfg.seed and
    the split.
    """
    if not split.train:
        raise TrainingError("empty training set")
    model = Model(arch, seed=cfg.seed, dtype=np.float32)
    opt = Adam(model.params(), lr=cfg.learning_rate, beta1=cfg.beta1,
               beta2=cfg.beta2, eps=cfg.eps, weight_decay=cfg.weight_decay)

    tr_imgs, tr_feats, tr_targets = _stack_batch(split.train, norm_stats)
    va = _stack_batch(split.val, norm_stats) if split.val else None

    t_mean = float(np.mean(tr_targets.astype(np.float64)))
    t_std = float(np.std(tr_targets.astype(np.float64)))
    if t_std == 0.0:
        t_std = 1.0
    scale = np.float32(1.0 / t_std)
    shift = np.float32(t_mean)
    tr_targets = (tr_targets - shift) * scale
    if va is not None:
        va = (va[0], va[1], (va[2] - shift) * scale)
    db2 = t_std * t_std  # normalized MSE -> dB^2

    rng = np.random.default_rng(cfg.seed)
    n = tr_imgs.shape[0]
    history = {"train_mse": [], "val_mse": []}

    # single-threaded BLAS: the conv GEMMs are skinny and fight the
    # OpenMP kernels for bandwidth otherwise; also removes a source of
    # run-to-run variation
    with threadpool_limits(limits=1, user_api="blas"):
        _run_epochs(model, opt, cfg, rng, n, tr_imgs, tr_feats, tr_targets,
                    va, db2, history)
    best_val, best_epoch, best_params, best_state = history.pop("_best")

    if va is not None and best_params is not None:
        for key, arr in model.params().items():
            arr[...] = best_params[key]
        for key, arr in model.state().items():
            arr[...] = best_state[key]
        history["best_epoch"] = best_epoch
        history["best_val_mse"] = best_val
    else:
        history["best_epoch"] = len(history["train_mse"]) - 1
        history["best_val_mse"] = None
    history["target_mean"] = t_mean
    history["target_std"] = t_std
    return model, history


def _run_epochs(model, opt, cfg, rng, n, tr_imgs, tr_feats, tr_targets,
                va, db2, history):
    best_val = np.inf
    best_epoch = -1
    best_params = None
    best_state = None
    stale = 0

    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            model.zero_grads()
            pred = model.forward(tr_imgs[idx], tr_feats[idx], training=True)
            loss, dpred = mse_loss(pred, tr_targets[idx])
            if not np.isfinite(loss):
                try:
                    model.forward(tr_imgs[idx], tr_feats[idx], training=True, check=True)
                except NumericError as exc:
                    raise TrainingError(f"divergence at epoch {epoch}: {exc}") from exc
                raise TrainingError(f"divergence at epoch {epoch}: non-finite loss")
            model.backward(dpred)
            opt.step(model.grads())
            epoch_loss += loss * idx.size
        history["train_mse"].append(epoch_loss / n * db2)

        if va is not None:
            val_loss = evaluate_loss(model, *va) * db2
            history["val_mse"].append(val_loss)
            if not np.isfinite(val_loss):
                raise TrainingError(f"divergence at epoch {epoch}: non-finite val loss")
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_params = {k: v.copy() for k, v in model.params().items()}
                best_state = {k: v.copy() for k, v in model.state().items()}
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                    break
        log.debug("epoch %d train_mse=%.4f val_mse=%s", epoch,
                  history["train_mse"][-1],
                  f"{history['val_mse'][-1]:.4f}" if va is not None else "n/a")

    history["_best"] = (best_val, best_epoch, best_params, best_state)

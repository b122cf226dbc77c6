"""Pre-training, fine-tuning and evaluation loops."""
import math
import warnings
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .. import ssl
from ..model import LuMamba, ModelConfig
from ..numcore import Tape, ops
from ..rng import stream
from ..sigproc import WindowBatch, concat_batches, pipeline, window, zscore
from . import metrics
from .checkpoint import Checkpoint, CheckpointError, check_compatible
from .optim import AdamW, clip_grad_norm, cosine_lr

FINETUNE_EPOCH_CAP = 30
EVAL_SEEDS = (0, 1, 2)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    regime: str = "mixed"          # recon | lejepa | mixed | finetune
    epochs: int = 1
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.01
    lam: float = ssl.LAMBDA
    n_slices: int = ssl.N_SLICES
    seed: int = 0
    data: str = ""
    montage: int = 0               # channel-count filter; 0 keeps every montage
    mask_ratio: float = ssl.MASK_RATIO
    max_steps: int = 0             # 0 = epochs x batches
    clip: float = 1.0
    warmup: float = 0.05

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.regime not in ssl.REGIMES + ("finetune",):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f.type for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class TrainResult:
    model: LuMamba
    checkpoint: Checkpoint
    history: list


# ---- data

def prepare(recordings, seconds=5.0):
    """Filter, resample, window and z-score; recordings must share one montage."""
    batches = []
    for rec in recordings:
        wb = window(pipeline(rec), seconds)
        wb.windows = zscore(wb.windows)
        batches.append(wb)
    return concat_batches(batches)


def subject_split(batch, test_subjects):
    """(train, test) with every window of the listed subjects held out."""
    test = np.isin(np.asarray(batch.sources), list(test_subjects))
    return _subset(batch, ~test), _subset(batch, test)


def _subset(batch, keep):
    idx = np.flatnonzero(keep)
    return WindowBatch(batch.montage, batch.windows[idx],
                       None if batch.labels is None else batch.labels[idx],
                       None if batch.starts is None else batch.starts[idx],
                       tuple(batch.sources[i] for i in idx))


def _batches(n, size, seed, epoch):
    order = stream(seed, "data-order", epoch).permutation(n)
    size = min(size, n)
    return [order[i:i + size] for i in range(0, n - size + 1, size)]


def _total_steps(cfg, n):
    per_epoch = max(1, n // min(cfg.batch_size, n))
    total = cfg.epochs * per_epoch
    return min(total, cfg.max_steps) if cfg.max_steps else total


def _state(model, opt, cfg, model_cfg, step, extra=None):
    echo = {"model": model_cfg.to_dict(), "train": asdict(cfg)}
    echo.update(extra or {})
    moments = {"m": dict(opt.m), "v": dict(opt.v)}
    return Checkpoint({k: v.copy() for k, v in model.state_dict().items()}, echo, moments,
                      step, step)


def _update(tape, loss, params, opt, cfg, step, total):
    """Backward, clip, one optimizer step; returns (lr, pre-clip gradient norm)."""
    tape.backward(loss, params)
    grad_norm = clip_grad_norm([p.grad for p in params], cfg.clip)
    lr = cosine_lr(step, total, cfg.lr, cfg.warmup)
    opt.step(lr)
    return lr, grad_norm


# ---- pre-training

def pretrain(cfg, data, model_cfg=ModelConfig(), log=None):
    """Run the configured self-supervised objective; deterministic per ``cfg.seed``."""
    if cfg.regime == "finetune":
        raise ValueError("pretrain needs regime recon, lejepa or mixed")
    model = LuMamba(model_cfg, seed=cfg.seed, with_decoder=cfg.regime != "lejepa")
    opt = AdamW(model.named_parameters(), weight_decay=cfg.weight_decay)
    params = model.parameters()
    coords = data.montage.coords
    total = _total_steps(cfg, data.B)
    history, step = [], 0
    for epoch in range(cfg.epochs):
        for idx in _batches(data.B, cfg.batch_size, cfg.seed, epoch):
            if step >= total:
                break
            try:
                with Tape() as tape:
                    rep = ssl.objective(model, data.windows[idx], coords, cfg.regime, cfg.lam,
                                        cfg.n_slices, cfg.seed, step, cfg.mask_ratio)
            except FloatingPointError as exc:
                raise TrainingError(f"step {step}: forward pass failed: {exc}") from None
            values = rep.values()
            for comp in ("recon", "jepa_pred", "sigreg", "total"):
                v = values[comp]
                if v is not None and not math.isfinite(v):
                    raise TrainingError(f"non-finite {comp} loss ({v}) at step {step}")
            lr, gnorm = _update(tape, rep.total, params, opt, cfg, step, total)
            values.update(step=step, lr=lr, grad_norm=gnorm)
            history.append(values)
            if log:
                log(values)
            step += 1
    return TrainResult(model, _state(model, opt, cfg, model_cfg, step), history)


# ---- fine-tuning

def model_from_checkpoint(ckpt):
    has_decoder = any(k.startswith("decoder.") for k in ckpt.tensors)
    has_head = any(k.startswith("head.") for k in ckpt.tensors)
    mcfg = ckpt.model_config()
    if has_head:
        mcfg = replace(mcfg, n_classes=int(ckpt.tensors["head.out.bias"].shape[0]))
    model = LuMamba(mcfg, with_decoder=has_decoder, with_head=has_head)
    check_compatible(ckpt, model)
    model.load_state_dict(ckpt.tensors)
    return model


def finetune(cfg, init, data, n_classes=2, trainable=None, log=None):
    """Swap the decoder for a classification head and train everything with cross-entropy.

    ``init`` is a pre-training Checkpoint, a LuMamba, or None (random init).
    ``trainable(name) -> bool`` optionally freezes parameters.
    """
    if cfg.epochs > FINETUNE_EPOCH_CAP:
        warnings.warn(f"fine-tuning for {cfg.epochs} epochs exceeds the usual cap of "
                      f"{FINETUNE_EPOCH_CAP}", stacklevel=2)
    if data.labels is None:
        raise ValueError("fine-tuning needs labelled windows")
    if isinstance(init, Checkpoint):
        try:
            base = model_from_checkpoint(init)
        except ValueError as exc:
            raise CheckpointError(str(exc)) from None
    elif init is None:
        base = LuMamba(ModelConfig(), seed=cfg.seed)
    else:
        base = init
    model = base.for_finetuning(n_classes, seed=cfg.seed)
    named = [(k, p) for k, p in model.named_parameters() if trainable is None or trainable(k)]
    opt = AdamW(named, weight_decay=cfg.weight_decay)
    params = [p for _, p in named]
    coords = data.montage.coords
    total = _total_steps(cfg, data.B)
    history, step = [], 0
    for epoch in range(cfg.epochs):
        for idx in _batches(data.B, cfg.batch_size, cfg.seed, epoch):
            if step >= total:
                break
            with Tape() as tape:
                loss = ops.cross_entropy(model.classify(data.windows[idx], coords),
                                         data.labels[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite cross-entropy loss ({value}) at step {step}")
            lr, gnorm = _update(tape, loss, params, opt, cfg, step, total)
            rec = {"step": step, "epoch": epoch, "loss": value, "lr": lr, "grad_norm": gnorm}
            history.append(rec)
            if log:
                log(rec)
            step += 1
    extra = {"n_classes": n_classes}
    return TrainResult(model, _state(model, opt, cfg, model.cfg, step, extra), history)


# ---- evaluation

def predict_proba(model, data, batch_size=32):
    coords = data.montage.coords
    out = []
    for i in range(0, data.B, batch_size):
        logits = model.classify(data.windows[i:i + batch_size], coords).data.astype(np.float64)
        logits -= logits.max(1, keepdims=True)
        p = np.exp(logits)
        out.append(p / p.sum(1, keepdims=True))
    return np.concatenate(out)


def evaluate(model, data, batch_size=32):
    if data.labels is None:
        raise ValueError("evaluation needs labelled windows")
    return metrics.report(data.labels, predict_proba(model, data, batch_size))

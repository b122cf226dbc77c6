"""Optimisation, checkpointing and evaluation."""
from .checkpoint import Checkpoint, CheckpointError, check_compatible, from_bytes, load, save, to_bytes
from .loops import (EVAL_SEEDS, TrainConfig, TrainingError, TrainResult, evaluate, finetune,
                    model_from_checkpoint, predict_proba, prepare, pretrain, subject_split)
from .metrics import MetricReport, aggregate, auroc, aupr, balanced_accuracy, report, write_csv
from .optim import AdamW, clip_grad_norm, cosine_lr

__all__ = [
    "Checkpoint", "CheckpointError", "check_compatible", "from_bytes", "load", "save", "to_bytes",
    "EVAL_SEEDS", "TrainConfig", "TrainingError", "TrainResult", "evaluate", "finetune",
    "model_from_checkpoint", "predict_proba", "prepare", "pretrain", "subject_split",
    "MetricReport", "aggregate", "auroc", "aupr", "balanced_accuracy", "report", "write_csv",
    "AdamW", "clip_grad_norm", "cosine_lr",
]

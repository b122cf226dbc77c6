"""AdamW with a warmup + cosine schedule and global-norm clipping."""
import math

import numpy as np

BETAS = (0.9, 0.999)
EPS = 1e-8
WEIGHT_DECAY = 0.01
WARMUP_FRACTION = 0.05
CLIP_NORM = 1.0


def cosine_lr(step, total_steps, base_lr, warmup_fraction=WARMUP_FRACTION):
    """Learning rate for 0-based ``step``: linear warmup, then cosine decay to zero."""
    warmup = max(1, int(math.ceil(warmup_fraction * total_steps)))
    if step < warmup:
        return base_lr * (step + 1) / warmup
    progress = (step - warmup) / max(1, total_steps - warmup)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * min(progress, 1.0)))


def clip_grad_norm(grads, max_norm=CLIP_NORM):
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the norm."""
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


class AdamW:
    """Adam moments with decoupled weight decay, keyed by parameter name."""

    def __init__(self, named_params, betas=BETAS, eps=EPS, weight_decay=WEIGHT_DECAY):
        self.params = dict(named_params)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, lr, grads=None):
        """One update. ``grads`` maps names to arrays; defaults to each parameter's ``.grad``."""
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad if grads is None else grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data *= (1.0 - lr * self.weight_decay)
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)

    def state(self):
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, t, m, v):
        for name in self.params:
            if name not in m or name not in v:
                raise ValueError(f"optimizer state has no moments for {name}")
        self.t = int(t)
        self.m = {k: np.array(m[k], dtype=self.params[k].data.dtype) for k in self.params}
        self.v = {k: np.array(v[k], dtype=self.params[k].data.dtype) for k in self.params}

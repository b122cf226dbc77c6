import math

import numpy as np

from ..numcore import Linear, LayerNorm, Module, Parameter, ops
from .scan import selective_scan

STATE_WIDTH = 16
EXPAND = 2
DT_INIT = 0.01


class Mamba(Module):
    """Minimal conv-free Mamba layer: gated expansion around one selective scan.

    ``A_log`` stores log(-A) so the transition ``A = -exp(A_log)`` is strictly
    negative; ``delta = softplus(dt_proj(.))`` is strictly positive.
    """

    def __init__(self, rng, d_model, d_state=STATE_WIDTH, expand=EXPAND):
        self.d_model = d_model
        self.d_inner = expand * d_model
        self.d_state = d_state
        self.dt_rank = math.ceil(d_model / 16)
        self.in_proj = Linear(rng, d_model, 2 * self.d_inner)
        self.x_proj = Linear(rng, self.d_inner, self.dt_rank + 2 * d_state, bias=False)
        self.dt_proj = Linear(rng, self.dt_rank, self.d_inner)
        # softplus(bias) == DT_INIT at start
        self.dt_proj.bias = Parameter(np.full(self.d_inner, np.log(np.expm1(DT_INIT))))
        self.A_log = Parameter(np.log(np.tile(np.arange(1, d_state + 1, dtype=np.float64),
                                              (self.d_inner, 1))))
        self.D = Parameter(np.ones(self.d_inner))
        self.out_proj = Linear(rng, self.d_inner, d_model)

    def transition(self):
        return ops.neg(ops.exp(self.A_log))

    def selection(self, x):
        """(xi, z, delta, B, C) for input x of shape (B, S, d_model)."""
        xz = self.in_proj(x)
        xi = ops.silu(ops.slice(xz, -1, 0, self.d_inner))
        z = ops.slice(xz, -1, self.d_inner, 2 * self.d_inner)
        dbc = self.x_proj(xi)
        r, n = self.dt_rank, self.d_state
        delta = ops.softplus(self.dt_proj(ops.slice(dbc, -1, 0, r)))
        Bm = ops.slice(dbc, -1, r, r + n)
        Cm = ops.slice(dbc, -1, r + n, r + 2 * n)
        return xi, z, delta, Bm, Cm

    def __call__(self, x, method="sequential"):
        xi, z, delta, Bm, Cm = self.selection(x)
        y = selective_scan(xi, delta, self.transition(), Bm, Cm, self.D, method=method)
        return self.out_proj(ops.mul(y, ops.silu(z)))


class BiMambaBlock(Module):
    """Pre-norm forward and time-reversed Mamba branches, sigmoid-gated, with residual."""

    def __init__(self, rng, d_model, d_state=STATE_WIDTH):
        self.norm = LayerNorm(d_model)
        self.forward_branch = Mamba(rng, d_model, d_state)
        self.backward_branch = Mamba(rng, d_model, d_state)
        self.gate = Linear(rng, 2 * d_model, d_model)

    def branches(self, x, method="sequential"):
        xn = self.norm(x)
        y_fwd = self.forward_branch(xn, method)
        y_bwd = ops.reverse(self.backward_branch(ops.reverse(xn, 1), method), 1)
        return y_fwd, y_bwd

    def __call__(self, x, method="sequential"):
        y_fwd, y_bwd = self.branches(x, method)
        g = ops.sigmoid(self.gate(ops.concat([y_fwd, y_bwd], axis=-1)))
        fused = ops.add(ops.mul(g, y_fwd), ops.mul(ops.sub(1.0, g), y_bwd))
        return ops.add(x, fused)


class Backbone(Module):
    def __init__(self, rng, d_model, n_blocks=2, d_state=STATE_WIDTH):
        self.d_model = d_model
        self.blocks = [BiMambaBlock(rng, d_model, d_state) for _ in range(n_blocks)]

    def __call__(self, latents, batch, seq_len):
        """(B*S, Q, E) latents -> (B, S, Q*E) sequence features."""
        if latents.ndim != 3 or latents.shape[0] != batch * seq_len \
                or latents.shape[1] * latents.shape[2] != self.d_model:
            raise ValueError(f"backbone expects ({batch * seq_len}, Q, E) with Q*E={self.d_model}, "
                             f"got {latents.shape}")
        x = ops.reshape(latents, (batch, seq_len, self.d_model))
        for block in self.blocks:
            x = block(x)
        return x


class ClassifierHead(Module):
    """Unidirectional Mamba over S on a narrowed width; last step -> K logits.

    The two layer norms keep the gated Mamba output at unit scale; without
    them the initial logits are ~1e-4 and fine-tuning stalls.
    """

    def __init__(self, rng, d_in, width, n_classes, d_state=STATE_WIDTH):
        if n_classes < 2:
            raise ValueError(f"classifier needs at least 2 classes, got {n_classes}")
        self.proj = Linear(rng, d_in, width)
        self.norm_in = LayerNorm(width)
        self.mamba = Mamba(rng, width, d_state)
        self.norm_out = LayerNorm(width)
        self.out = Linear(rng, width, n_classes)

    def __call__(self, features):
        y = self.mamba(self.norm_in(self.proj(features)))
        last = ops.slice(y, 1, y.shape[1] - 1, y.shape[1])
        return self.out(self.norm_out(ops.reshape(last, (y.shape[0], y.shape[2]))))

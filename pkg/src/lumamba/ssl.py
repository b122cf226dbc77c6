"""Self-supervised objectives: masked patch reconstruction, JEPA view prediction and SigReg."""
from dataclasses import dataclass

import numpy as np

from .encoder import tokenize
from .numcore import Array, ops
from .rng import stream

MASK_RATIO = 0.6
N_GLOBAL = 2
N_LOCAL = 4
LAMBDA = 0.5
N_SLICES = 60
STD_EPS = 1e-8
MIN_SIGREG_SAMPLES = 8
REGIMES = ("recon", "lejepa", "mixed")

_SQRT_2_3 = np.sqrt(2.0 / 3.0)
_SQRT_1_2 = np.sqrt(0.5)


# ---- masking

@dataclass(frozen=True)
class MaskPlan:
    mask: np.ndarray        # (B, S) bool; a masked patch is masked on every channel
    ratio: float
    seed: int

    @property
    def flat(self):
        """Per-token mask in the (B*S) order produced by ``tokenize``."""
        return self.mask.reshape(-1)

    @property
    def count(self):
        return int(self.mask.sum())


def mask_count(S, ratio):
    return int(round(ratio * S))


def mask_patches(S, ratio=MASK_RATIO, seed=0, batch=1, step=0):
    """Uniformly random subset of exactly round(ratio*S) patches per window."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"mask ratio must lie in (0, 1), got {ratio}")
    k = mask_count(S, ratio)
    if S < 2 or k in (0, S):
        raise ValueError(f"masking {k} of {S} patches leaves nothing to reconstruct or no context")
    rng = stream(seed, "mask", step)
    mask = np.zeros((batch, S), dtype=bool)
    for b in range(batch):
        mask[b, rng.permutation(S)[:k]] = True
    return MaskPlan(mask, float(ratio), int(seed))


def recon_loss(pred, target, plan):
    """Mean squared error over every sample of every masked patch, nothing else."""
    target = np.asarray(target)
    if tuple(pred.shape) != target.shape:
        raise ValueError(f"prediction {tuple(pred.shape)} and target {target.shape} differ")
    idx = np.flatnonzero(plan.flat)
    if idx.size == 0:
        raise ValueError("mask plan selects no patches")
    if plan.flat.size != target.shape[0]:
        raise ValueError(f"mask covers {plan.flat.size} patches, target has {target.shape[0]}")
    diff = ops.sub(ops.getitem(pred, idx), target[idx])
    return ops.mean(ops.square(diff))


# ---- views

@dataclass(frozen=True)
class ViewSet:
    global_offsets: np.ndarray    # (N_global, B)
    local_offsets: np.ndarray     # (N_local, B)
    T_global: int
    T_local: int

    @staticmethod
    def _crop(windows, offsets, length):
        idx = offsets[:, :, None] + np.arange(length)                 # (N, B, L)
        b = np.arange(windows.shape[0])[None, :, None]
        # (N, B, L, C) -> (N, B, C, L)
        return np.ascontiguousarray(windows[b, :, idx].transpose(0, 1, 3, 2))

    def globals(self, windows):
        return self._crop(np.asarray(windows), self.global_offsets, self.T_global)

    def locals(self, windows):
        return self._crop(np.asarray(windows), self.local_offsets, self.T_local)


def default_view_lengths(T_w, P):
    """0.75 and 0.25 of the window, each rounded down to a whole number of patches."""
    return (int(0.75 * T_w) // P) * P, (int(0.25 * T_w) // P) * P


def sample_views(T_w, T_global, T_local, seed=0, batch=1, P=64, n_global=N_GLOBAL,
                 n_local=N_LOCAL, step=0):
    """Random temporal crops; offsets uniform over every valid start sample."""
    if T_global % P or T_local % P:
        raise ValueError(f"view lengths {T_global} and {T_local} must be multiples of P={P}")
    if not 0 < T_local < T_global <= T_w:
        raise ValueError(f"need 0 < T_local < T_global <= T_w, got {T_local}, {T_global}, {T_w}")
    rng = stream(seed, "views", step)
    g = rng.integers(0, T_w - T_global, size=(n_global, batch), endpoint=True)
    loc = rng.integers(0, T_w - T_local, size=(n_local, batch), endpoint=True)
    return ViewSet(g, loc, int(T_global), int(T_local))


def embed_views(model, crops, coords):
    """(N, B, C, L) crops -> (N, B, Q*E) pooled embeddings, all views in one pass."""
    n, b = crops.shape[:2]
    emb = model.embed_view(crops.reshape(n * b, *crops.shape[2:]), coords)
    return ops.reshape(emb, (n, b, emb.shape[-1]))


# ---- losses

def _split(v):
    if isinstance(v, (list, tuple)):
        return [Array(x) if not isinstance(x, Array) else x for x in v]
    v = v if isinstance(v, Array) else Array(v)
    return [ops.getitem(v, i) for i in range(v.shape[0])]


def jepa_pred_loss(v_local, v_global):
    """(1/N_local) sum_i ||mean_g(v_global) - v_local_i||^2, averaged over the batch.

    No stop-gradient: both sides receive gradients.
    """
    locs, globs = _split(v_local), _split(v_global)
    mu = globs[0]
    for g in globs[1:]:
        mu = ops.add(mu, g)
    mu = ops.mul(mu, 1.0 / len(globs))
    batch = mu.shape[0] if mu.ndim > 1 else 1
    total = None
    for v in locs:
        if v.shape != mu.shape:
            raise ValueError(f"local embedding {v.shape} does not match global {mu.shape}")
        term = ops.sum(ops.square(ops.sub(mu, v)))
        total = term if total is None else ops.add(total, term)
    return ops.mul(total, 1.0 / (len(locs) * batch))


def epps_pulley(z):
    """Closed-form statistic for standardised samples ``z`` along axis 0 (numpy)."""
    z = np.asarray(z, dtype=np.float64)
    m = z.shape[0]
    pair = np.exp(-(z[:, None] - z[None, :]) ** 2 / 4).sum(axis=(0, 1)) / m ** 2
    single = np.exp(-z ** 2 / 6).sum(axis=0) / m
    return pair - 2 * _SQRT_2_3 * single + _SQRT_1_2


def slice_directions(dim, n_slices, seed=0, step=0):
    d = stream(seed, "slices", step).normal(size=(dim, n_slices))
    return d / np.linalg.norm(d, axis=0, keepdims=True)


def standardize(proj):
    mu = ops.mean(proj, axis=0, keepdims=True)
    centred = ops.sub(proj, mu)
    sd = ops.sqrt(ops.mean(ops.square(centred), axis=0, keepdims=True))
    return ops.div(centred, ops.add(sd, STD_EPS))


def _ep_term(z):
    """Per-slice statistic of (M, k) standardised projections as a graph node."""
    m, k = z.shape
    diff = ops.sub(ops.reshape(z, (m, 1, k)), ops.reshape(z, (1, m, k)))
    pair = ops.mul(ops.sum(ops.exp(ops.mul(ops.square(diff), -0.25)), axis=(0, 1)), 1.0 / m ** 2)
    single = ops.mul(ops.sum(ops.exp(ops.mul(ops.square(z), -1.0 / 6.0)), axis=0),
                     2 * _SQRT_2_3 / m)
    return ops.add(ops.sub(pair, single), _SQRT_1_2)


def sigreg(embeddings, n_slices=N_SLICES, seed=0, step=0, chunk_elems=1 << 22):
    """Mean Epps-Pulley statistic over random 1-D projections of (M, D) embeddings."""
    emb = embeddings if isinstance(embeddings, Array) else Array(embeddings)
    if emb.ndim != 2:
        raise ValueError(f"sigreg expects (M, D) embeddings, got {emb.shape}")
    m, dim = emb.shape
    if m < MIN_SIGREG_SAMPLES:
        raise ValueError(f"sigreg needs at least {MIN_SIGREG_SAMPLES} samples, got {m}")
    if n_slices < 1:
        raise ValueError("n_slices must be >= 1")
    z = standardize(ops.matmul(emb, slice_directions(dim, n_slices, seed, step)))
    # the pairwise term is (M, M, k); bound its size by chunking the slices
    k = max(1, min(n_slices, chunk_elems // (m * m)))
    parts = [_ep_term(ops.slice(z, 1, i, min(i + k, n_slices))) for i in range(0, n_slices, k)]
    stats = parts[0] if len(parts) == 1 else ops.concat(parts, axis=0)
    return ops.mean(stats)


# ---- combination

@dataclass
class LossReport:
    recon: object
    jepa_pred: object
    sigreg: object
    lam: float
    total: object
    regime: str = "mixed"

    def values(self):
        """Plain floats (None for components the regime does not define)."""
        out = {}
        for key in ("recon", "jepa_pred", "sigreg", "total"):
            v = getattr(self, key)
            out[key] = None if v is None else float(v.data if isinstance(v, Array) else v)
        out["lambda"] = self.lam
        return out


def mixed_loss(recon, jepa_pred, sigreg_value, lam=LAMBDA, regime="mixed"):
    """total = recon + lam*(jepa_pred + sigreg); the recon term is dropped for LeJEPA-only."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    if regime == "recon":
        return LossReport(recon, None, None, 0.0, recon, regime)
    ssl_term = ops.mul(ops.add(jepa_pred, sigreg_value), lam)
    if regime == "lejepa":
        return LossReport(None, jepa_pred, sigreg_value, lam, ssl_term, regime)
    return LossReport(recon, jepa_pred, sigreg_value, lam, ops.add(recon, ssl_term), regime)


def objective(model, windows, coords, regime="mixed", lam=LAMBDA, n_slices=N_SLICES,
              seed=0, step=0, mask_ratio=MASK_RATIO):
    """Build the selected pre-training loss for one batch of (B, C, T_w) windows."""
    windows = np.asarray(windows, dtype=np.float32)
    b, _, t_w = windows.shape
    P = model.cfg.patch_len
    recon = jepa = reg = None
    if regime in ("recon", "mixed"):
        patches, s = tokenize(windows, P)
        plan = mask_patches(s, mask_ratio, seed, batch=b, step=step)
        recon = recon_loss(model.reconstruct(windows, coords, plan.flat), patches, plan)
    if regime in ("lejepa", "mixed"):
        t_g, t_l = default_view_lengths(t_w, P)
        views = sample_views(t_w, t_g, t_l, seed, batch=b, P=P, step=step)
        v_g = embed_views(model, views.globals(windows), coords)
        v_l = embed_views(model, views.locals(windows), coords)
        jepa = jepa_pred_loss(v_l, v_g)
        pooled = ops.concat([ops.reshape(v_g, (-1, v_g.shape[-1])),
                             ops.reshape(v_l, (-1, v_l.shape[-1]))], axis=0)
        reg = sigreg(pooled, n_slices, seed, step)
    return mixed_loss(recon, jepa, reg, lam, regime)

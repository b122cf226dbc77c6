"""Patch tokenisation, fused patch embedding, channel unification and decoding.

Shapes use B windows, C channels, S patches per window of P samples each,
embedding width E and Q unification queries.
"""
from dataclasses import dataclass

import numpy as np

from .numcore import Array, Linear, LayerNorm, Module, Parameter, ops


@dataclass(frozen=True)
class EncoderConfig:
    patch_len: int = 64
    embed_dim: int = 64
    n_queries: int = 4
    conv_channels: tuple = (8, 16)    # second entry is the temporal feature width
    conv_kernel: int = 7
    spectral_dim: int = 16
    pos_dim: int = 16
    pos_hidden: int = 32


def tokenize(windows, P):
    """(B, C, T_w) -> (B*S, C, P) with patch (b, s, c) = window b, channel c, samples [sP, (s+1)P)."""
    windows = np.asarray(windows)
    b, c, t = windows.shape
    if t % P:
        raise ValueError(f"window length {t} is not divisible by patch length {P}")
    s = t // P
    return windows.reshape(b, c, s, P).transpose(0, 2, 1, 3).reshape(b * s, c, P), s


def untokenize(patches, B):
    """Inverse of :func:`tokenize`."""
    patches = np.asarray(patches)
    bs, c, p = patches.shape
    s = bs // B
    return patches.reshape(B, s, c, p).transpose(0, 2, 1, 3).reshape(B, c, s * p)


def spectral_features(patches):
    """log(1 + |one-sided DFT|) of every patch; a fixed function of the data."""
    return np.log1p(np.abs(np.fft.rfft(np.asarray(patches, dtype=np.float64), axis=-1)))


class PositionalMLP(Module):
    def __init__(self, rng, hidden, out):
        self.fc1 = Linear(rng, 3, hidden)
        self.fc2 = Linear(rng, hidden, out)

    def __call__(self, coords):
        return self.fc2(ops.silu(self.fc1(coords)))


class PatchEmbed(Module):
    """Temporal conv features, spectral features and electrode position fused to E."""

    def __init__(self, rng, cfg, positional):
        c1, c2 = cfg.conv_channels
        k = cfg.conv_kernel
        self.conv1_w = Parameter(rng.uniform(-1, 1, (c1, 1, k)) / np.sqrt(k))
        self.conv1_b = Parameter(np.zeros(c1))
        self.conv2_w = Parameter(rng.uniform(-1, 1, (c2, c1, k)) / np.sqrt(c1 * k))
        self.conv2_b = Parameter(np.zeros(c2))
        self.spectral = Linear(rng, cfg.patch_len // 2 + 1, cfg.spectral_dim)
        self.positional = positional
        self.fuse = Linear(rng, c2 + cfg.spectral_dim + cfg.pos_dim, cfg.embed_dim)

    def __call__(self, patches, coords):
        """patches (B*S, C, P) data; coords (C, 3) -> tokens (B*S, C, E)."""
        bs, c, p = patches.shape
        x = Array(np.asarray(patches).reshape(bs * c, 1, p))
        h = ops.silu(ops.conv1d(x, self.conv1_w, self.conv1_b))
        h = ops.silu(ops.conv1d(h, self.conv2_w, self.conv2_b))
        temporal = ops.reshape(ops.mean(h, axis=-1), (bs, c, -1))
        spectral = self.spectral(Array(spectral_features(patches)))
        pos = self.positional(Array(coords))
        pos = ops.broadcast_to(pos, (bs, c, pos.shape[-1]))
        return self.fuse(ops.concat([temporal, spectral, pos], axis=-1))


class FeedForward(Module):
    def __init__(self, rng, dim, hidden):
        self.norm = LayerNorm(dim)
        self.fc1 = Linear(rng, dim, hidden)
        self.fc2 = Linear(rng, hidden, dim)

    def __call__(self, x):
        return ops.add(x, self.fc2(ops.silu(self.fc1(self.norm(x)))))


class CrossAttention(Module):
    """Single-head scaled dot-product attention of queries over a key/value set."""

    def __init__(self, rng, dim):
        self.dim = dim
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, dim, dim)
        self.wv = Linear(rng, dim, dim)
        self.wo = Linear(rng, dim, dim)

    def weights(self, queries, keys):
        q = self.wq(queries)
        k = self.wk(keys)
        scores = ops.matmul(q, ops.swapaxes(k, -1, -2))
        return ops.softmax(ops.mul(scores, 1.0 / np.sqrt(self.dim)), axis=-1)

    def __call__(self, queries, context):
        attn = self.weights(queries, context)
        return self.wo(ops.matmul(attn, self.wv(context)))


class ChannelUnifier(Module):
    """Q learned queries attend over the channel axis: (B*S, C, E) -> (B*S, Q, E)."""

    def __init__(self, rng, cfg):
        self.queries = Parameter(rng.normal(0.0, 1.0, (cfg.n_queries, cfg.embed_dim)))
        self.attn = CrossAttention(rng, cfg.embed_dim)
        self.ffn = FeedForward(rng, cfg.embed_dim, 2 * cfg.embed_dim)

    def attention(self, tokens):
        return self.attn.weights(self.queries, tokens)

    def __call__(self, tokens):
        return self.ffn(self.attn(self.queries, tokens))


class Decoder(Module):
    """C coordinate-conditioned queries attend over the Q latents, then a linear map to P samples.

    Query for channel c: learned base + projection of the positional MLP of its
    coordinates, so any montage can be decoded with the same parameters.
    """

    def __init__(self, rng, cfg, positional):
        self.positional = positional
        self.base_query = Parameter(rng.normal(0.0, 1.0, cfg.embed_dim))
        self.query_proj = Linear(rng, cfg.pos_dim, cfg.embed_dim)
        self.attn = CrossAttention(rng, cfg.embed_dim)
        self.ffn = FeedForward(rng, cfg.embed_dim, 2 * cfg.embed_dim)
        self.norm = LayerNorm(cfg.embed_dim)
        self.out = Linear(rng, cfg.embed_dim, cfg.patch_len)

    def queries(self, coords):
        return ops.add(self.base_query, self.query_proj(self.positional(Array(coords))))

    def attention(self, latents, coords):
        return self.attn.weights(self.queries(coords), latents)

    def __call__(self, latents, coords):
        q = self.queries(coords)
        h = ops.add(q, self.attn(q, latents))
        return self.out(self.norm(self.ffn(h)))

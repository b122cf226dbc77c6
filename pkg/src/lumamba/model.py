"""The full model: patch embedding -> channel unification -> BiMamba backbone -> decoder or head."""
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .bimamba import Backbone, ClassifierHead
from .encoder import (ChannelUnifier, Decoder, EncoderConfig, PatchEmbed, PositionalMLP,
                      tokenize)
from .numcore import Module, Parameter, ops
from .rng import stream


@dataclass(frozen=True)
class ModelConfig:
    patch_len: int = 64
    embed_dim: int = 64
    n_queries: int = 4
    conv_channels: tuple = (8, 16)
    conv_kernel: int = 7
    spectral_dim: int = 16
    pos_dim: int = 16
    pos_hidden: int = 32
    d_state: int = 16
    n_blocks: int = 2
    head_width: int = 64
    n_classes: int = 2

    @property
    def latent_width(self):
        return self.n_queries * self.embed_dim

    def encoder(self):
        return EncoderConfig(**{f.name: getattr(self, f.name) for f in fields(EncoderConfig)})

    def to_dict(self):
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in known}
        if "conv_channels" in kw:
            kw["conv_channels"] = tuple(kw["conv_channels"])
        return cls(**kw)


class LuMamba(Module):
    def __init__(self, cfg=ModelConfig(), seed=0, with_decoder=True, with_head=False):
        self.cfg = cfg
        rng = stream(seed, "init")
        enc = cfg.encoder()
        self.positional = PositionalMLP(rng, cfg.pos_hidden, cfg.pos_dim)
        self.embed = PatchEmbed(rng, enc, self.positional)
        self.mask_token = Parameter(rng.normal(0.0, 0.02, cfg.embed_dim))
        self.unify = ChannelUnifier(rng, enc)
        self.backbone = Backbone(rng, cfg.latent_width, cfg.n_blocks, cfg.d_state)
        self.decoder = Decoder(rng, enc, self.positional) if with_decoder else None
        head_rng = stream(seed, "init-head")
        self.head = (ClassifierHead(head_rng, cfg.latent_width, cfg.head_width, cfg.n_classes,
                                    cfg.d_state) if with_head else None)
        self.assign_names()

    def named_parameters(self, prefix=""):
        # positional MLP is shared by embed and decoder; report it once
        seen = set()
        for name, p in super().named_parameters(prefix):
            if id(p) not in seen:
                seen.add(id(p))
                yield name, p

    # --- pieces

    def tokens(self, windows, coords, mask=None):
        """(B, C, T) windows -> (B*S, C, E) tokens, masked patches replaced by the mask token."""
        patches, s = tokenize(windows, self.cfg.patch_len)
        tok = self.embed(patches, coords)
        if mask is not None:
            m = np.asarray(mask, dtype=tok.data.dtype).reshape(-1, 1, 1)   # (B*S, 1, 1)
            tok = ops.add(ops.mul(tok, 1.0 - m), ops.mul(self.mask_token, m))
        return tok, s

    def encode(self, windows, coords, mask=None):
        """Montage-independent latents (B*S, Q, E) plus (B, S)."""
        tok, s = self.tokens(windows, coords, mask)
        return self.unify(tok), np.shape(windows)[0], s

    def features(self, windows, coords, mask=None):
        lat, b, s = self.encode(windows, coords, mask)
        return self.backbone(lat, b, s)

    # --- task heads

    def reconstruct(self, windows, coords, mask=None):
        """Predicted patches (B*S, C, P)."""
        if self.decoder is None:
            raise RuntimeError("model has no decoder (it was replaced by a classification head)")
        feats = self.features(windows, coords, mask)
        b, s, _ = feats.shape
        lat = ops.reshape(feats, (b * s, self.cfg.n_queries, self.cfg.embed_dim))
        return self.decoder(lat, coords)

    def embed_view(self, windows, coords):
        """Mean over S of the backbone output: (B, Q*E) whatever the view length."""
        return ops.mean(self.features(windows, coords), axis=1)

    def classify(self, windows, coords):
        if self.head is None:
            raise RuntimeError("model has no classification head")
        return self.head(self.features(windows, coords))

    def for_finetuning(self, n_classes, seed=0):
        """Copy of this model with the decoder dropped and a fresh classification head."""
        new = LuMamba(replace(self.cfg, n_classes=n_classes), seed=seed,
                      with_decoder=False, with_head=True)
        state = {k: v for k, v in self.state_dict().items()
                 if not k.startswith(("decoder.", "head."))}
        state.update((k, v) for k, v in new.state_dict().items() if k.startswith("head."))
        new.load_state_dict(state)
        return new


def parameter_report(model):
    """Parameter counts per top-level component and in total."""
    counts = {}
    for name, p in model.named_parameters():
        top = name.split(".")[0]
        counts[top] = counts.get(top, 0) + p.data.size
    counts["total"] = sum(counts.values())
    return counts

"""Analytic FLOPs and peak-activation-memory model.

Counts are for one window at batch 1, with a multiply-accumulate counted as two
FLOPs. S is the number of patches per channel. Three families are modelled:

* ``ssm-unified``: patch embedding, channel unification to Q latents, then
  bidirectional selective-scan blocks over S steps (this package's model);
* ``attention-per-token``: the same front end followed by self-attention over
  the S unified tokens;
* ``attention-flattened``: self-attention over all S*C patch tokens.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("ssm-unified", "attention-per-token", "attention-flattened")
COMPONENTS = ("tokenize", "unify", "temporal_proj", "temporal_scan", "attn_diag",
              "attn_pairwise", "ffn")
BYTES = 4
DEFAULT_BUDGET = 64 * 2 ** 30


@dataclass(frozen=True)
class ArchSpec:
    name: str
    family: str
    E: int = 64
    Q: int = 4
    N: int = 16
    layers: int = 2
    heads: int = 1
    C: int = 20
    P: int = 64
    expand: int = 2
    conv_channels: tuple = (8, 16)
    conv_kernel: int = 7
    spectral_dim: int = 16
    pos_dim: int = 16
    pos_hidden: int = 32
    ffn_mult: int = 4
    notes: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        dims = (self.E, self.Q, self.N, self.layers, self.heads, self.C, self.P, self.expand)
        if min(dims) < 1:
            raise ValueError(f"all dimensions must be positive: {self}")


@dataclass
class FlopsProfile:
    S: int
    components: dict
    peak_mem_bytes: int
    params: int = 0
    largest_activation: str = ""
    total: int = field(init=False)

    def __post_init__(self):
        if any(v < 0 for v in self.components.values()):
            raise ValueError("negative FLOP count")
        self.total = int(sum(self.components.values()))


def default_specs():
    """LuMamba at the default desk-scale size plus two attention stand-ins with equal E."""
    return [
        ArchSpec("lumamba", "ssm-unified", notes="this package's default model"),
        ArchSpec("per-token-attn", "attention-per-token", heads=4,
                 notes="unified front end, 2 transformer layers over S tokens of width Q*E"),
        ArchSpec("flattened-attn", "attention-flattened", heads=4,
                 notes="2 transformer layers over S*C patch tokens of width E"),
    ]


# ---- per-part counts (FLOPs for one window)

def _linear(tokens, d_in, d_out):
    return 2 * tokens * d_in * d_out


def scan_flops(S, d_inner, n_state):
    """Selective scan: discretise (exp(dA), dB*u), recurrence, readout and skip path.

    Per (t, d, n): 2 for exp(delta*A), 1 for (delta*u)*B, 2 for the recurrence,
    2 for the C.h readout; per (t, d): 1 for delta*u, 2 for the skip term.
    """
    return 7 * S * d_inner * n_state + 3 * S * d_inner


def _tokenize(spec, n_tokens):
    c1, c2 = spec.conv_channels
    k, P = spec.conv_kernel, spec.P
    conv = 2 * n_tokens * P * k * (c1 + c2 * c1)
    fft = int(round(5 * n_tokens * P * math.log2(P) / 2))
    spectral = _linear(n_tokens, P // 2 + 1, spec.spectral_dim)
    pos = _linear(spec.C, 3, spec.pos_hidden) + _linear(spec.C, spec.pos_hidden, spec.pos_dim)
    fuse = _linear(n_tokens, c2 + spec.spectral_dim + spec.pos_dim, spec.E)
    return conv + fft + spectral + pos + fuse


def _unify(spec, S):
    E, C, Q = spec.E, spec.C, spec.Q
    kv = 2 * _linear(S * C, E, E)
    q = _linear(Q, E, E)
    attn = 2 * (2 * S * Q * C * E)
    out = _linear(S * Q, E, E)
    ffn = _linear(S * Q, E, 2 * E) + _linear(S * Q, 2 * E, E)
    return kv + q + attn + out + ffn


def _ssm_backbone(spec, S):
    D = spec.Q * spec.E
    Di = spec.expand * D
    r = math.ceil(D / 16)
    per_branch = (_linear(S, D, 2 * Di) + _linear(S, Di, r + 2 * spec.N) + _linear(S, r, Di)
                  + _linear(S, Di, D))
    per_block = 2 * per_branch + _linear(S, 2 * D, D)
    proj = spec.layers * per_block
    scan = spec.layers * 2 * scan_flops(S, Di, spec.N)
    return proj, scan


def _attention(spec, T, width):
    """One stack of ``layers`` transformer layers over T tokens."""
    L = spec.layers
    proj = L * (_linear(T, width, 3 * width) + _linear(T, width, width))
    # scores and weighted sum: 2 MACs per (query, key, channel) pair
    diag = L * 4 * T * width
    pairwise = L * 4 * T * (T - 1) * width
    ffn = L * (_linear(T, width, spec.ffn_mult * width) + _linear(T, spec.ffn_mult * width, width))
    return proj, diag, pairwise, ffn


# ---- parameters and memory

def param_count(spec):
    c1, c2 = spec.conv_channels
    E, Q, P, k = spec.E, spec.Q, spec.P, spec.conv_kernel
    lin = lambda i, o: i * o + o                       # noqa: E731
    front = (c1 * k + c1 + c2 * c1 * k + c2 + lin(P // 2 + 1, spec.spectral_dim)
             + lin(3, spec.pos_hidden) + lin(spec.pos_hidden, spec.pos_dim)
             + lin(c2 + spec.spectral_dim + spec.pos_dim, E))
    if spec.family == "attention-flattened":
        width = E
    else:
        # queries, mask token, attention projections, FFN with its norm
        front += Q * E + E + 4 * lin(E, E) + 2 * E + lin(E, 2 * E) + lin(2 * E, E)
        width = Q * E
    if spec.family == "ssm-unified":
        D, Di, r = width, spec.expand * width, math.ceil(width / 16)
        branch = lin(D, 2 * Di) + Di * (r + 2 * spec.N) + lin(r, Di) + Di * spec.N + Di + lin(Di, D)
        block = 2 * D + 2 * branch + lin(2 * D, D)
    else:
        block = (4 * width + lin(width, 3 * width) + lin(width, width)
                 + lin(width, spec.ffn_mult * width) + lin(spec.ffn_mult * width, width))
    return front + spec.layers * block


def _activations(spec, S):
    """Sizes (elements) of the large intermediate tensors at batch 1."""
    c1, c2 = spec.conv_channels
    n_tok = S * spec.C
    acts = {"conv": n_tok * max(c1, c2) * spec.P}
    if spec.family != "attention-flattened":
        acts["unify_scores"] = S * spec.Q * spec.C
        width = spec.Q * spec.E
    else:
        width = spec.E
    if spec.family == "ssm-unified":
        di = spec.expand * width
        acts["scan_states"] = S * di * spec.N
        acts["in_proj"] = S * 2 * di
    else:
        T = S if spec.family == "attention-per-token" else n_tok
        acts["attn_matrix"] = spec.heads * T * T
        acts["ffn_hidden"] = T * spec.ffn_mult * width
    return acts


def peak_memory(spec, S):
    """Largest single activation plus resident parameters, in bytes."""
    acts = _activations(spec, S)
    name = max(acts, key=acts.get)
    return BYTES * (acts[name] + param_count(spec)), name


# ---- public API

def count_flops(spec, S):
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    S = int(S)
    comp = dict.fromkeys(COMPONENTS, 0)
    if spec.family == "attention-flattened":
        T = S * spec.C
        comp["tokenize"] = _tokenize(spec, T)
        proj, diag, pair, ffn = _attention(spec, T, spec.E)
        comp.update(temporal_proj=proj, attn_diag=diag, attn_pairwise=pair, ffn=ffn)
    else:
        comp["tokenize"] = _tokenize(spec, S * spec.C)
        comp["unify"] = _unify(spec, S)
        if spec.family == "ssm-unified":
            comp["temporal_proj"], comp["temporal_scan"] = _ssm_backbone(spec, S)
        else:
            proj, diag, pair, ffn = _attention(spec, S, spec.Q * spec.E)
            comp.update(temporal_proj=proj, attn_diag=diag, attn_pairwise=pair, ffn=ffn)
    mem, which = peak_memory(spec, S)
    return FlopsProfile(S, comp, int(mem), param_count(spec), which)


def memory_crossing(spec, budget=DEFAULT_BUDGET, s_max=1 << 40):
    """Smallest S whose peak-memory estimate exceeds ``budget`` bytes (None if beyond s_max)."""
    if peak_memory(spec, 1)[0] > budget:
        return 1
    lo, hi = 1, 2
    while peak_memory(spec, hi)[0] <= budget:
        lo, hi = hi, hi * 2
        if hi > s_max:
            return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if peak_memory(spec, mid)[0] > budget:
            hi = mid
        else:
            lo = mid
    return hi


def sweep_values(lo, hi, per_octave=1):
    """Log-spaced integer S values from lo to hi inclusive."""
    if lo < 1 or hi < lo:
        raise ValueError(f"bad sweep range {lo}:{hi}")
    n = int(round(math.log2(hi / lo) * per_octave)) + 1
    vals = np.unique(np.round(np.geomspace(lo, hi, max(n, 2))).astype(np.int64))
    return [int(v) for v in vals]


@dataclass
class Sweep:
    rows: list                 # (spec, FlopsProfile)
    crossings: dict            # spec name -> S where peak memory passes the budget
    budget: int

    def series(self, name):
        pts = [(p.S, p.total) for s, p in self.rows if s.name == name]
        return np.array([s for s, _ in pts]), np.array([t for _, t in pts], dtype=np.float64)


def scaling_sweep(specs, s_values, budget=DEFAULT_BUDGET):
    rows = [(spec, count_flops(spec, s)) for spec in specs for s in s_values]
    return Sweep(rows, {spec.name: memory_crossing(spec, budget) for spec in specs}, budget)


def loglog_slope(S, flops, top_decade=True):
    S, flops = np.asarray(S, dtype=np.float64), np.asarray(flops, dtype=np.float64)
    if top_decade:
        keep = S >= S.max() / 10
        S, flops = S[keep], flops[keep]
    return float(np.polyfit(np.log(S), np.log(flops), 1)[0])


def write_csv(sweep, path):
    header = ["spec", "family", "S", "flops_total"] + [f"flops_{c}" for c in COMPONENTS]
    header.append("peak_mem_bytes")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for spec, prof in sweep.rows:
            w.writerow([spec.name, spec.family, prof.S, prof.total]
                       + [prof.components[c] for c in COMPONENTS] + [prof.peak_mem_bytes])


def write_crossings(sweep, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["spec", "family", "budget_bytes", "oom_S"])
        for spec in dict.fromkeys(s for s, _ in sweep.rows):
            cross = sweep.crossings[spec.name]
            w.writerow([spec.name, spec.family, sweep.budget, "" if cross is None else cross])

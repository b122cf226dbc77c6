"""Synthetic multi-montage EEG-like recordings for desk-scale experiments.

Each recording is 1/f background noise plus band-limited oscillatory sources
whose power depends on the class. Sources have a fixed scalp direction, so
every montage sees them with a smooth spatial gain.
"""
from dataclasses import dataclass

import numpy as np

from ..rng import stream
from .montage import template
from .recording import Recording

# (lo, hi, source direction) per band; class k is rich in BANDS[k % len(BANDS)]
BANDS = [
    (8.0, 12.0, (0.0, -1.0, 0.3)),    # alpha, posterior
    (2.0, 4.0, (0.0, 1.0, 0.4)),      # delta, frontal
    (4.0, 8.0, (0.0, 0.0, 1.0)),      # theta, central
    (13.0, 30.0, (1.0, 0.0, 0.3)),    # beta, lateral
]


@dataclass
class SynthConfig:
    montages: tuple = (20,)
    n_classes: int = 2
    subjects: int = 8
    seconds: float = 60.0
    fs: float = 500.0
    rich_amp: float = 3.0
    base_amp: float = 0.5
    noise_amp: float = 1.0
    line_noise: float = 0.3
    gain_range: tuple = (0.6, 1.4)
    peak_jitter_hz: float = 0.75
    subject_offset: int = 0


def _band_noise(rng, n, fs, lo, hi):
    spec = np.fft.rfft(rng.normal(size=n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(f < lo) | (f > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (x.std() + 1e-12)


def _pink(rng, shape, fs):
    c, n = shape
    spec = np.fft.rfft(rng.normal(size=shape), axis=-1)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    f[0] = f[1]
    spec /= np.sqrt(f)
    x = np.fft.irfft(spec, n, axis=-1)
    return x / x.std(axis=-1, keepdims=True)


def _spatial_gain(coords, direction):
    d = np.asarray(direction, dtype=np.float64)
    d /= np.linalg.norm(d)
    return 0.5 + 0.5 * np.clip(coords @ d, 0.0, None)


def synth_recording(cfg, montage, subject, label, seed):
    n = int(round(cfg.seconds * cfg.fs))
    rng = stream(seed, "synth", montage.C, subject, label)
    subj = stream(seed, "subject", subject)
    gain = subj.uniform(*cfg.gain_range)
    shift = subj.uniform(-cfg.peak_jitter_hz, cfg.peak_jitter_hz)
    coords = montage.coords.astype(np.float64)

    x = cfg.noise_amp * _pink(rng, (montage.C, n), cfg.fs)
    for k, (lo, hi, direction) in enumerate(BANDS[:max(cfg.n_classes, 2)]):
        amp = cfg.rich_amp if k == label % len(BANDS) else cfg.base_amp
        src = _band_noise(rng, n, cfg.fs, lo + shift, hi + shift)
        x += amp * np.outer(_spatial_gain(coords, direction), src)
    t = np.arange(n) / cfg.fs
    x += cfg.line_noise * np.sin(2 * np.pi * 50.0 * t + rng.uniform(0, 2 * np.pi))
    return Recording(montage, float(cfg.fs), (gain * x).astype(np.float32), int(label),
                     f"s{subject:03d}")


def synth_dataset(cfg, seed):
    """Every (montage, subject, class) combination, in a fixed order."""
    if cfg.n_classes < 1:
        raise ValueError("need at least one class")
    out = []
    for m in cfg.montages:
        montage = template(m)
        for s in range(cfg.subjects):
            for k in range(cfg.n_classes):
                out.append(synth_recording(cfg, montage, cfg.subject_offset + s, k, seed))
    return out

"""Filter -> resample -> window, as applied to every recording."""
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal

from .montage import Montage

TARGET_FS = 256
BAND = (0.1, 75.0)
NOTCH_HZ = 50.0
NOTCH_Q = 30.0
BUTTER_ORDER = 4
KAISER_BETA = 8.6
PAD_SECONDS = 5.0


def design_filters(fs):
    """Second-order sections for the band-pass and the notch at sampling rate ``fs``."""
    if fs <= 2 * BAND[1]:
        raise ValueError(f"sampling rate {fs} Hz leaves {BAND[1]} Hz at or above Nyquist")
    band = signal.butter(BUTTER_ORDER, BAND, btype="bandpass", fs=fs, output="sos")
    b, a = signal.iirnotch(NOTCH_HZ, NOTCH_Q, fs=fs)
    return band, signal.tf2sos(b, a)


def zero_phase_response(fs, freqs):
    """|H(f)| of the forward-backward cascade (the single-pass response squared)."""
    band, notch = design_filters(fs)
    _, hb = signal.sosfreqz(band, worN=np.asarray(freqs, dtype=float), fs=fs)
    _, hn = signal.sosfreqz(notch, worN=np.asarray(freqs, dtype=float), fs=fs)
    return np.abs(hb * hn) ** 2


def bandpass_notch(rec):
    """Zero-phase 0.1-75 Hz Butterworth band-pass plus a 50 Hz notch, per channel."""
    band, notch = design_filters(rec.fs)
    x = rec.samples.astype(np.float64)
    # long odd-extension padding lets the 0.1 Hz poles settle before real data
    padlen = min(rec.T - 1, int(round(PAD_SECONDS * rec.fs)))
    y = signal.sosfiltfilt(np.vstack([band, notch]), x, axis=-1, padlen=padlen)
    return rec.replace(samples=y.astype(np.float32))


def resample(rec, target_fs=TARGET_FS):
    """Polyphase resampling with a Kaiser-windowed sinc; length round(T*target/fs)."""
    if rec.fs == target_fs:
        return rec
    ratio = Fraction(target_fs / rec.fs).limit_denominator(10_000)
    up, down = ratio.numerator, ratio.denominator
    y = signal.resample_poly(rec.samples.astype(np.float64), up, down, axis=-1,
                             window=("kaiser", KAISER_BETA))
    n_out = int(round(rec.T * target_fs / rec.fs))
    if y.shape[-1] < n_out:
        y = np.pad(y, ((0, 0), (0, n_out - y.shape[-1])))
    return rec.replace(samples=y[:, :n_out].astype(np.float32), fs=float(target_fs))


@dataclass
class WindowBatch:
    montage: Montage
    windows: np.ndarray            # (B, C, T_w) at 256 Hz
    labels: np.ndarray | None = None
    starts: np.ndarray | None = None   # sample offset of each window in its source
    sources: tuple = ()                # source subject per window

    @property
    def B(self):
        return self.windows.shape[0]


def window(rec, seconds=5.0, fs=TARGET_FS):
    """Non-overlapping windows; the trailing remainder is dropped."""
    length = seconds * fs
    if abs(length - round(length)) > 1e-9:
        raise ValueError(f"{seconds} s x {fs} Hz = {length} samples is not an integer")
    length = int(round(length))
    if rec.fs != fs:
        raise ValueError(f"windowing expects {fs} Hz input, got {rec.fs}")
    n = rec.T // length
    w = rec.samples[:, :n * length].reshape(rec.montage.C, n, length).transpose(1, 0, 2)
    labels = None if rec.label is None else np.full(n, rec.label, dtype=np.int64)
    return WindowBatch(rec.montage, np.ascontiguousarray(w), labels,
                       np.arange(n) * length, (rec.subject,) * n)


def zscore(windows, eps=1e-8):
    """Per-window, per-channel standardisation over time."""
    w = np.asarray(windows, dtype=np.float64)
    mu = w.mean(axis=-1, keepdims=True)
    sd = w.std(axis=-1, keepdims=True)
    return ((w - mu) / (sd + eps)).astype(np.float32)


def pipeline(rec):
    """Filtered, resampled recording (before windowing)."""
    return resample(bandpass_notch(rec))


def concat_batches(batches):
    batches = [b for b in batches if b.B]
    if not batches:
        raise ValueError("no windows")
    m = batches[0].montage
    if any(b.montage != m for b in batches):
        raise ValueError("cannot stack windows from different montages")
    labels = None
    if all(b.labels is not None for b in batches):
        labels = np.concatenate([b.labels for b in batches])
    return WindowBatch(m, np.concatenate([b.windows for b in batches]), labels,
                       np.concatenate([b.starts for b in batches]),
                       sum((tuple(b.sources) for b in batches), ()))

"""Preprocessing, recording I/O and synthetic data."""
from .montage import TEMPLATES, Montage, template
from .preprocess import (TARGET_FS, WindowBatch, bandpass_notch, concat_batches, pipeline,
                         resample, window, zero_phase_response, zscore)
from .recording import FormatError, Recording, from_bytes, load, save, to_bytes
from .synth import SynthConfig, synth_dataset, synth_recording

__all__ = [
    "TEMPLATES", "Montage", "template", "TARGET_FS", "WindowBatch", "bandpass_notch",
    "concat_batches", "pipeline", "resample", "window", "zero_phase_response", "zscore",
    "FormatError", "Recording", "from_bytes", "load", "save", "to_bytes",
    "SynthConfig", "synth_dataset", "synth_recording",
]

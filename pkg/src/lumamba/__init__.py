"""Latent-unified Mamba for EEG at desk scale."""

__version__ = "0.1.0"

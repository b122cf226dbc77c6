"""Selective state-space temporal modeling."""
from .blocks import Backbone, BiMambaBlock, ClassifierHead, Mamba
from .scan import BACKEND, selective_scan

__all__ = ["Backbone", "BiMambaBlock", "ClassifierHead", "Mamba", "BACKEND", "selective_scan"]

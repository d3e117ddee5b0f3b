"""Multimodal temporal fusion for valence/arousal regression and expression
recognition, on a small float64 autodiff core."""

__version__ = "0.1.0"

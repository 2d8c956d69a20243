"""Rotary position encodings for graphs from Laplacian spectral coordinates."""

from .graph import Graph, InvalidGraphError, laplacian
from .rng import Rng
from .rope import WireFrequencies, apply_rope_fast, init_frequencies
from .spectral import SpectralCoords, Spectrum, Variant, eig_dense, eig_lanczos, spectral_features

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "InvalidGraphError",
    "laplacian",
    "Rng",
    "WireFrequencies",
    "apply_rope_fast",
    "init_frequencies",
    "SpectralCoords",
    "Spectrum",
    "Variant",
    "eig_dense",
    "eig_lanczos",
    "spectral_features",
]

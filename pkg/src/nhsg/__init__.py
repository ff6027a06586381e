"""Two-stage singing generation for non-human timbres.

A score encoder predicts frame-level content tokens and f0 from symbolic
input; a timbre-conditioned GAN vocoder renders audio for human and
non-human voices alike; finetuning with unpaired timbre conditioning
adapts the vocoder to a target domain; an objective evaluation harness
scores pitch accuracy, voicing, timbre similarity, and spectral distance.
"""

from .dsp import FrameSpec, Spectrogram, Waveform, read_wav, write_wav
from .errors import NhsgError
from .pitch import F0Contour, PitchConfig, estimate_f0
from .representation import (Codebook, ContentFeatures, ContentTokens,
                             FrameRepresentation, TimbreEmbedding)
from .segmentation import Segment, SegmentationConfig

__version__ = "0.1.0"

__all__ = [
    "Waveform", "FrameSpec", "Spectrogram", "read_wav", "write_wav",
    "F0Contour", "PitchConfig", "estimate_f0",
    "Segment", "SegmentationConfig",
    "ContentFeatures", "Codebook", "ContentTokens", "FrameRepresentation",
    "TimbreEmbedding",
    "NhsgError", "__version__",
]

"""Causal streaming speech enhancement: a magnitude-gain 0th-order stage
plus recursively generated complex correction terms superimposed with
1/q! weights, in a full-size (TaEr) and a lightweight ERB-domain
(TaErLite) variant, single- or multi-channel."""

from .engine import (
    ComplexSpectrogram, EngineError, EngineSession, OrderTerm, TaylorOutput,
    approximation_mse, forward, remaining_term_mse, superimpose,
)
from .erb import ErbBank, build_erb_bank
from .graph import ModelGraph
from .metrics import mix, si_snr
from .runtime import AudioStream, bench_rtf, enhance_array, enhance_file, load_model
from .stft import StftConfig, istft, make_window, stft
from .weights import WeightArchive, load, random_archive, save, validate
from .zoo import build, build_taer, build_taerlite, probe_receptive_field, receptive_field

__all__ = [
    "AudioStream", "ComplexSpectrogram", "EngineError", "EngineSession",
    "ErbBank", "ModelGraph", "OrderTerm", "StftConfig", "TaylorOutput",
    "WeightArchive", "approximation_mse", "bench_rtf", "build", "build_erb_bank",
    "build_taer", "build_taerlite", "enhance_array", "enhance_file", "forward",
    "istft", "load", "load_model", "make_window", "mix", "probe_receptive_field",
    "random_archive", "receptive_field", "remaining_term_mse", "save", "si_snr",
    "stft", "superimpose", "validate",
]

__version__ = "0.1.0"

"""Switching linear decoders for finger flexion from multichannel ECoG."""
from .config import PipelineConfig, load_config
from .core import (
    FeatureMatrix,
    FingerflexError,
    FlexionRecord,
    FlexModel,
    FlexModelBank,
    MultichannelSignal,
    NumericalError,
    Segment,
    SegmentList,
    StateModel,
    StateSequence,
    ValidationError,
)
from .decode import evaluate, switching_decode
from .io import load_decoder, save_decoder
from .pipeline import TrainedDecoder, decode_recording, fit_decoder
from .synth import SynthSpec, generate

__version__ = "0.1.0"

__all__ = [
    "FeatureMatrix", "FingerflexError", "FlexionRecord", "FlexModel", "FlexModelBank",
    "MultichannelSignal", "NumericalError", "PipelineConfig", "Segment", "SegmentList",
    "StateModel", "StateSequence", "SynthSpec", "TrainedDecoder", "ValidationError",
    "decode_recording", "evaluate", "fit_decoder", "generate", "load_config",
    "load_decoder", "save_decoder", "switching_decode",
]

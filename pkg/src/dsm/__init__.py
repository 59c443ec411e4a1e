"""Deterministic plus stochastic model of the speech residual: training,
vocoding and glottal-signature speaker identification."""

from .audio import AudioSignal, DataError, read_wav, write_wav
from .config import ConfigError, FewFramesWarning, RunConfig, load_config
from .estimators import (DSMVocoder, GlottalSignatureExtractor, ResidualFrameTransformer,
                         SignatureIdentifier)
from .speakerid import GlottalSignature, extract_signature, rtse
from .vocoder import DsmModel, SynthesisPlan, copy_synthesis, train_model

__version__ = "0.1.0"

__all__ = [
    "AudioSignal", "ConfigError", "DSMVocoder", "DataError", "DsmModel", "FewFramesWarning",
    "GlottalSignature", "GlottalSignatureExtractor", "ResidualFrameTransformer", "RunConfig",
    "SignatureIdentifier", "SynthesisPlan", "copy_synthesis", "extract_signature",
    "load_config", "read_wav", "rtse", "train_model", "write_wav",
]

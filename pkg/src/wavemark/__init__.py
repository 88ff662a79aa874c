"""Semantic spectral features from wavelet-domain hidden Markov chains.

Pipeline in one breath: resample and normalize reflectance spectra, take an
undecimated Haar wavelet transform, train a per-wavelength chain of hidden
states over scales, decode state label matrices (optionally sign-augmented
or collapsed to a binary model), then classify or summarize them.
"""

__version__ = "0.1.0"

from .classify import FeatureSet, evaluate_accuracy, nn_classify, svm_predict, svm_train
from .dataset import (
    BlurKernel,
    SpectralLibrary,
    Spectrum,
    balance_classes,
    blur_library,
    dmp_to_kernel,
    load_library,
    preprocess,
    save_library,
    split_train_test,
    synthetic_library,
)
from .errors import (
    ConfigError,
    DegenerateMassError,
    DimensionError,
    DomainError,
    NumericError,
    ParseError,
    ValidationError,
    WavemarkError,
)
from .labeling import LabelArray, add_signs, label_library, label_spectrum, viterbi_gmm
from .mog import MogChainParams, MogModel, collapse_model, viterbi_mog
from .nhmc import ChainParams, NhmcModel, TrainConfig, em_train, forward_backward, train_model
from .semantics import SemanticSummary, absorption_bands, label_mean_vector, rivard_lcp
from .similarity import spectral_distance
from .wavelet import CoeffMatrix, uwt

__all__ = [
    "__version__",
    "BlurKernel",
    "ChainParams",
    "CoeffMatrix",
    "ConfigError",
    "DegenerateMassError",
    "DimensionError",
    "DomainError",
    "FeatureSet",
    "LabelArray",
    "MogChainParams",
    "MogModel",
    "NhmcModel",
    "NumericError",
    "ParseError",
    "SemanticSummary",
    "SpectralLibrary",
    "Spectrum",
    "TrainConfig",
    "ValidationError",
    "WavemarkError",
    "absorption_bands",
    "add_signs",
    "balance_classes",
    "blur_library",
    "collapse_model",
    "dmp_to_kernel",
    "em_train",
    "evaluate_accuracy",
    "forward_backward",
    "label_library",
    "label_mean_vector",
    "label_spectrum",
    "load_library",
    "nn_classify",
    "preprocess",
    "rivard_lcp",
    "save_library",
    "spectral_distance",
    "split_train_test",
    "svm_predict",
    "svm_train",
    "synthetic_library",
    "train_model",
    "uwt",
    "viterbi_gmm",
    "viterbi_mog",
]

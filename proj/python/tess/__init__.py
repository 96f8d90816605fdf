"""Transport elliptical slice sampling.

Thin Python layer over the compiled core. Arrays of samples use the shape
(iterations, chains, dim).
"""

from ._tess import (
    CapabilityError,
    ConfigError,
    ContractError,
    DataError,
    NumericalError,
    TessError,
    TransportMap,
    __version__,
    autocovariance,
    banana_log_normalizer,
    banana_logdensity,
    default_config,
    diagnose,
    hmm_filter_loglik,
    iat,
    known_models,
    read_samples_csv,
    run,
    summarize,
    target_logdensity,
)

__all__ = [
    "CapabilityError",
    "ConfigError",
    "ContractError",
    "DataError",
    "NumericalError",
    "TessError",
    "TransportMap",
    "__version__",
    "autocovariance",
    "banana_log_normalizer",
    "banana_logdensity",
    "default_config",
    "diagnose",
    "hmm_filter_loglik",
    "iat",
    "known_models",
    "read_samples_csv",
    "run",
    "summarize",
    "target_logdensity",
]

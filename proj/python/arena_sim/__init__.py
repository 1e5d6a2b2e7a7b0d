"""Python access to the arena simulation core."""

from ._core import (
    ArenaError,
    ContractError,
    ParseError,
    UnreachableError,
    ValidationError,
    __version__,
    ads,
    config_hash,
    default_config,
    fourier_embed,
    interpolate,
    pdms_frame,
    project_point,
    run_episode,
    sat_separation,
    validate_config,
)

__all__ = [
    "ArenaError",
    "ContractError",
    "ParseError",
    "UnreachableError",
    "ValidationError",
    "__version__",
    "ads",
    "config_hash",
    "default_config",
    "fourier_embed",
    "interpolate",
    "pdms_frame",
    "project_point",
    "run_episode",
    "sat_separation",
    "validate_config",
]

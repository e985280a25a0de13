"""Python bindings for the multi-view state-action recognition core."""

from ._mvsa import (
    ConfigError,
    FormatError,
    __version__,
    config_hash,
    consolidate_status,
    fuse,
    read_tensor,
    run_cli,
    select_target_onion,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "config_hash",
    "consolidate_status",
    "fuse",
    "read_tensor",
    "run_cli",
    "select_target_onion",
]

"""Test fixtures and sample instances for covext tests."""

__all__ = [
    "SMALL_SPACES",
    "EXHAUSTIVE_GROUPS",
    "CANONICAL_POSITION_INSTANCE",
    "QUBIT_CYCLIC_INSTANCE",
    "TRIVIAL_GRAM_INSTANCE",
    "QUBIT_ISOMETRY_INSTANCE",
    "RANDOM_INSTANCE",
    "TWO_SOURCES_INSTANCE",
    "UNKNOWN_PRESET_INSTANCE",
    "MALFORMED_JSON",
    "make_space",
    "random_observable",
]

from .sample_data import (
    SMALL_SPACES,
    EXHAUSTIVE_GROUPS,
    CANONICAL_POSITION_INSTANCE,
    QUBIT_CYCLIC_INSTANCE,
    TRIVIAL_GRAM_INSTANCE,
    QUBIT_ISOMETRY_INSTANCE,
    RANDOM_INSTANCE,
    TWO_SOURCES_INSTANCE,
    UNKNOWN_PRESET_INSTANCE,
    MALFORMED_JSON,
    make_space,
    random_observable,
)

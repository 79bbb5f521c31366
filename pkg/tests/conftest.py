"""Shared pytest fixtures and configuration for covext tests.

This module provides common fixtures used across all test modules including:
- Seeded random generators
- Standard observables (canonical position, qubit analog, trivial)
- Random covariant observables on small spaces
- Temporary file/directory fixtures for CLI runs
"""

import json
import sys
import tempfile
from pathlib import Path
from typing import Callable, Generator

import numpy as np
import pytest

# Add project root to path for imports
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from covext.abelian import make_group, subgroup_closure
from covext.construct import trivial_povm
from covext.models import canonical_position, qubit_cyclic
from covext.povm import Tolerances
from covext.repspace import full_spectrum
from tests.fixtures.sample_data import SMALL_SPACES, make_space, random_observable


# =============================================================================
# Numerical Fixtures
# =============================================================================

@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator; tests never touch global randomness."""
    return np.random.default_rng(20240611)


@pytest.fixture
def tol() -> Tolerances:
    return Tolerances()


@pytest.fixture
def small_spaces():
    """Spectra of the small sample spaces."""
    return [make_space(*space) for space in SMALL_SPACES]


@pytest.fixture
def random_povm(rng) -> Callable:
    """Factory: random covariant observable on the i-th small space."""
    spaces = [make_space(*space) for space in SMALL_SPACES]

    def factory(i: int, ambient_dim=None):
        return random_observable(spaces[i % len(spaces)], rng, ambient_dim)

    return factory


# =============================================================================
# Observable Fixtures
# =============================================================================

@pytest.fixture
def canonical4():
    return canonical_position(4)


@pytest.fixture
def canonical8():
    return canonical_position(8)


@pytest.fixture
def qubit4():
    return qubit_cyclic(4)


@pytest.fixture
def trivial2():
    G = make_group([2])
    return trivial_povm(full_spectrum(G, subgroup_closure(G, [])))


# =============================================================================
# File System Fixtures
# =============================================================================

@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for test file operations.

    Yields:
        Path: Path to the temporary directory.
    """
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def write_instance(temp_dir) -> Callable:
    """Write a dict (or raw text) to a JSON file in temp_dir and return its path."""

    def writer(content, name: str = "instance.json") -> Path:
        path = temp_dir / name
        path.write_text(content if isinstance(content, str) else json.dumps(content))
        return path

    return writer

"""Unit tests for covext.construct.

Tests the observable builders including:
- Isometry fields and their validation
- Gram structures, extraction and minimal factorization
- Canonical, trivial and random observables
- Convolution by probability vectors and the positive-type transform
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

# Add project root to path
PROJECT_ROOT = Path(__file__).parent.parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from covext.abelian import GroupElement, make_group
from covext.construct import (
    GramStructure,
    PositiveTypeFunction,
    build_from_gram,
    build_from_isometries,
    canonical_field,
    convolve,
    convolve_weights,
    eta_from_rho,
    extract_gram,
    invariant_from_rho,
    isometries_from_gram,
    make_gram_structure,
    make_isometry_field,
    make_probability_vector,
    point_mass,
    random_isometry_field,
    rho_from_eta,
    shift,
    trivial_povm,
    uniform,
)
from covext.errors import InvalidInputError, NotCovariantStructureError, NumericalFailureError
from covext.models import canonical_position, position_difference
from covext.povm import CovariantPOVM, distance, validate_povm
from tests.fixtures.sample_data import make_space


def two_point_space():
    return make_space([2], [], [[0, 1], [1, 1]])


class TestIsometryField:
    """Tests for make_isometry_field() and build_from_isometries()."""

    def test_string_keys(self, tol):
        spec = two_point_space()
        W = make_isometry_field(spec, {"0": [[1.0]], "1": [[1j]]}, tol)
        assert W.ambient_dim == 1
        assert W.stacked().shape == (1, 2)

    def test_not_isometry(self, tol):
        spec = two_point_space()
        with pytest.raises(InvalidInputError, match="not an isometry"):
            make_isometry_field(spec, {"0": [[2.0]], "1": [[1.0]]}, tol)

    def test_missing_character(self, tol):
        with pytest.raises(InvalidInputError, match="misses"):
            make_isometry_field(two_point_space(), {"0": [[1.0]]}, tol)

    def test_unknown_character(self, tol):
        spec = make_space([4], [], [[0, 1], [1, 1]])
        with pytest.raises(InvalidInputError, match="outside the spectrum"):
            make_isometry_field(spec, {"0": [[1.0]], "1": [[1.0]], "2": [[1.0]]}, tol)

    def test_ambient_mismatch(self, tol):
        with pytest.raises(InvalidInputError, match="ambient"):
            make_isometry_field(two_point_space(), {"0": [[1.0]], "1": [[1.0], [0.0]]}, tol)

    def test_column_count(self, tol):
        spec = make_space([2], [], [[0, 2], [1, 1]])
        with pytest.raises(InvalidInputError, match="columns"):
            make_isometry_field(spec, {"0": [[1.0], [0.0]], "1": [[1.0], [0.0]]}, tol)

    def test_qubit_effects(self, qubit4):
        """Effect j of the qubit analog is [[1, i^-j], [i^j, 1]] / 4."""
        for j in range(4):
            expected = 0.25 * np.array([[1, 1j ** (-j)], [1j ** j, 1]])
            assert_allclose(qubit4.effects[j], expected, atol=1e-12)

    def test_to_dict(self, qubit4):
        data = qubit4.provenance.to_dict()
        assert data == {"0": [[[1.0, 0.0]]], "1": [[[1.0, 0.0]]]}


class TestGramStructure:
    """Tests for make_gram_structure() and extract_gram()."""

    def test_extract_canonical(self):
        gram = extract_gram(canonical_position(2))
        assert_allclose(gram.blocks[0], np.ones((2, 2)), atol=1e-12)
        assert gram.ranks == (1,)

    def test_extract_trivial(self, trivial2):
        gram = extract_gram(trivial2)
        assert_allclose(gram.blocks[0], np.eye(2), atol=1e-12)
        assert gram.rank == 2

    def test_extract_qubit(self, qubit4):
        gram = extract_gram(qubit4)
        assert_allclose(gram.blocks[0], np.ones((2, 2)), atol=1e-12)
        assert gram.rank == 1

    def test_extract_rejects_cross_coset_terms(self, tol):
        """Coupling characters from different dual cosets is not covariant."""
        spec = make_space([4], [[2]], [[0, 1], [1, 1]])
        effects = np.array([np.eye(2) / 2, np.eye(2) / 2], dtype=complex)
        effects[0, 0, 1] = effects[0, 1, 0] = 0.1
        with pytest.raises(NotCovariantStructureError):
            extract_gram(CovariantPOVM(spec, effects), tol)

    def test_full_is_block_diagonal(self):
        spec = make_space([4], [[2]], [[0, 1], [1, 1], [2, 1]])
        gram = make_gram_structure(spec, [np.array([[1, 0.5], [0.5, 1]]), np.eye(1)])
        full = gram.full()
        assert full[0, 2] == pytest.approx(0.5)
        assert full[0, 1] == 0
        assert full[1, 1] == 1

    def test_block_count(self, tol):
        with pytest.raises(InvalidInputError, match="coset blocks"):
            make_gram_structure(two_point_space(), [np.eye(2), np.eye(2)], tol)

    def test_diagonal_must_be_identity(self, tol):
        with pytest.raises(InvalidInputError, match="identity"):
            make_gram_structure(two_point_space(), [np.array([[2, 0], [0, 1]])], tol)

    def test_not_psd(self, tol):
        with pytest.raises(InvalidInputError, match="PSD"):
            make_gram_structure(two_point_space(), [np.array([[1, 2], [2, 1]])], tol)

    def test_not_hermitian(self, tol):
        with pytest.raises(InvalidInputError, match="Hermitian"):
            make_gram_structure(two_point_space(), [np.array([[1, 0.5], [0.2, 1]])], tol)


class TestFactorization:
    """Tests for isometries_from_gram()."""

    def test_off_diagonal_overlap(self, tol):
        """A rank-two block factors into C^2 with W(0)* W(1) = c."""
        c = 0.3 + 0.4j
        gram = make_gram_structure(two_point_space(), [np.array([[1, c], [np.conj(c), 1]])], tol)
        W = isometries_from_gram(gram, tol)
        assert W.ambient_dim == 2
        w0 = W.blocks[GroupElement((0,))]
        w1 = W.blocks[GroupElement((1,))]
        assert (w0.conj().T @ w1)[0, 0] == pytest.approx(c)

    def test_disjoint_coset_rows(self, tol):
        """Each dual coset occupies its own rows of the ambient space."""
        spec = make_space([4], [[2]], [[0, 1], [1, 1], [2, 1]])
        gram = make_gram_structure(spec, [np.ones((2, 2)), np.eye(1)], tol)
        W = isometries_from_gram(gram, tol)
        assert W.ambient_dim == 2
        overlap = W.blocks[GroupElement((0,))].conj().T @ W.blocks[GroupElement((1,))]
        assert abs(overlap[0, 0]) < 1e-12

    def test_rejects_negative_block(self, tol):
        bad = GramStructure(two_point_space(), (np.array([[1.0, 2.0], [2.0, 1.0]]),), (2,))
        with pytest.raises(InvalidInputError):
            isometries_from_gram(bad, tol)

    def test_eigendecomposition_failure(self, qubit4, tol, mocker):
        gram = extract_gram(qubit4, tol)
        mocker.patch("scipy.linalg.eigh", side_effect=np.linalg.LinAlgError("eigh did not converge"))
        with pytest.raises(NumericalFailureError, match="Gram block 0"):
            isometries_from_gram(gram, tol)

    def test_round_trip(self, random_povm, tol):
        """Gram -> minimal isometries -> observable reproduces the input."""
        for i in range(8):
            M = random_povm(i)
            rebuilt = build_from_isometries(isometries_from_gram(extract_gram(M, tol), tol), tol)
            assert distance(M, rebuilt) < 1e-9

    def test_minimal_dimension_is_rank(self, random_povm, tol):
        M = random_povm(3, ambient_dim=4)
        gram = extract_gram(M, tol)
        assert isometries_from_gram(gram, tol).ambient_dim == gram.rank


class TestStandardObservables:
    """Tests for canonical_field(), trivial_povm() and random_isometry_field()."""

    def test_canonical_field_multiplicity(self):
        spec = make_space([2], [], [[0, 2], [1, 1]])
        W = canonical_field(spec)
        assert W.ambient_dim == 2
        assert W.blocks[GroupElement((1,))].shape == (2, 1)

    def test_trivial_effects(self):
        spec = make_space([4], [[2]], [[0, 1], [1, 2]])
        M = trivial_povm(spec)
        for E in M.effects:
            assert_allclose(E, np.eye(3) / 2, atol=1e-12)

    def test_random_field_is_isometric(self, rng):
        spec = make_space([4], [], [[0, 1], [1, 2]])
        W = random_isometry_field(spec, rng, 3)
        for gamma, n in spec.entries:
            block = W.blocks[gamma]
            assert_allclose(block.conj().T @ block, np.eye(n), atol=1e-12)

    def test_random_field_ambient_too_small(self, rng):
        spec = make_space([4], [], [[0, 1], [1, 2]])
        with pytest.raises(InvalidInputError):
            random_isometry_field(spec, rng, 1)

    def test_build_from_gram_valid(self, tol):
        spec = two_point_space()
        M = build_from_gram(make_gram_structure(spec, [np.array([[1, 0.5j], [-0.5j, 1]])], tol), tol)
        assert validate_povm(M, tol).passed


class TestConvolution:
    """Tests for probability vectors, convolve() and shift()."""

    def test_probability_vector_validation(self):
        with pytest.raises(InvalidInputError):
            make_probability_vector([0.5, 0.6])
        with pytest.raises(InvalidInputError):
            make_probability_vector([1.5, -0.5])
        with pytest.raises(InvalidInputError):
            make_probability_vector([])

    def test_point_mass_range(self):
        with pytest.raises(InvalidInputError):
            point_mass(3, 3)

    def test_shift_moves_effects(self, canonical4):
        moved = shift(canonical4, 1)
        assert_allclose(moved.effects[1], canonical4.effects[0], atol=1e-12)

    def test_point_mass_at_zero_is_identity(self, canonical4):
        assert distance(convolve(point_mass(4, 0), canonical4), canonical4) < 1e-12

    def test_uniform_noise(self, canonical4):
        smeared = convolve(uniform(4), canonical4)
        for E in smeared.effects:
            assert_allclose(E, np.eye(4) / 4, atol=1e-12)

    def test_length_mismatch(self, canonical4):
        with pytest.raises(InvalidInputError):
            convolve(uniform(3), canonical4)

    def test_convolve_weights(self, canonical4):
        out = convolve_weights(canonical4.outcomes, point_mass(4, 1), point_mass(4, 2))
        assert_allclose(out.weights, [0, 0, 0, 1])

    def test_convolve_weights_on_quotient(self):
        """Z_3 x Z_3 modulo the diagonal has three cosets; 1 + 2 wraps to 0."""
        outcomes = position_difference(3).outcomes
        out = convolve_weights(outcomes, point_mass(3, 1), point_mass(3, 2))
        assert_allclose(out.weights, [1, 0, 0])

    def test_convolve_weights_length_mismatch(self):
        outcomes = position_difference(3).outcomes
        with pytest.raises(InvalidInputError, match="quotient has 3 cosets"):
            convolve_weights(outcomes, uniform(9), uniform(3))

    def test_point_mass_at_zero_is_weight_identity(self, canonical8, rng):
        rho = make_probability_vector(rng.dirichlet(np.ones(8)))
        out = convolve_weights(canonical8.outcomes, point_mass(8, 0), rho)
        assert_allclose(out.weights, rho.weights, atol=1e-15)

    @pytest.mark.parametrize("build", [
        lambda: canonical_position(5),
        lambda: position_difference(3),
        lambda: position_difference(4, make_probability_vector([0.7, 0.1, 0.1, 0.1])),
    ])
    def test_composition_law(self, build, rng):
        """Smearing twice equals smearing once by the convolved distribution."""
        M = build()
        n = M.num_outcomes
        for _ in range(5):
            a = make_probability_vector(rng.dirichlet(np.ones(n)))
            b = make_probability_vector(rng.dirichlet(np.ones(n)))
            twice = convolve(a, convolve(b, M))
            once = convolve(convolve_weights(M.outcomes, a, b), M)
            assert distance(twice, once) < 1e-12


class TestPositiveType:
    """Tests for eta_from_rho(), rho_from_eta() and invariant_from_rho()."""

    def test_eta_of_point_mass(self):
        """eta of a point mass at q is a character."""
        G = make_group([5])
        eta = eta_from_rho(G, point_mass(5, 2))
        expected = np.exp(-2j * np.pi * 2 * np.arange(5) / 5)
        assert_allclose(eta.values, expected, atol=1e-12)

    def test_round_trip(self):
        G = make_group([6])
        rho = make_probability_vector([0.1, 0.2, 0.3, 0.0, 0.25, 0.15])
        assert_allclose(rho_from_eta(eta_from_rho(G, rho)).weights, rho.weights, atol=1e-12)

    def test_kernel_is_psd(self):
        G = make_group([4])
        eta = eta_from_rho(G, make_probability_vector([0.4, 0.3, 0.2, 0.1]))
        assert np.linalg.eigvalsh(eta.kernel()).min() > -1e-12

    def test_not_positive_type(self):
        G = make_group([2])
        with pytest.raises(InvalidInputError):
            rho_from_eta(PositiveTypeFunction(G, np.array([1.0, 2.0])))

    def test_eta_zero_must_be_one(self):
        G = make_group([2])
        with pytest.raises(InvalidInputError):
            rho_from_eta(PositiveTypeFunction(G, np.array([0.5, 0.0])))

    def test_invariant_gram(self, tol):
        """rho = (3/4, 1/4) on Z_2 gives the Gram kernel [[1, 1/2], [1/2, 1]]."""
        M = invariant_from_rho(2, make_probability_vector([0.75, 0.25]), tol)
        assert_allclose(extract_gram(M, tol).blocks[0], [[1, 0.5], [0.5, 1]], atol=1e-12)

    def test_invariant_equals_smeared_position(self, tol):
        """The invariant observable of rho is the sharp position smeared by rho."""
        rho = make_probability_vector([0.5, 0.25, 0.0, 0.125, 0.125])
        M = invariant_from_rho(5, rho, tol)
        assert distance(M, convolve(rho, canonical_position(5))) < 1e-9

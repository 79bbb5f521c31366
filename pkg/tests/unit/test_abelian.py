"""Unit tests for covext.abelian.

Tests the finite Abelian group layer including:
- Element parsing and range checks
- Subgroup closure, transversals and sections
- The character pairing, annihilators and the Fourier matrix
- Exhaustive subgroup enumeration on small groups
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

# Add project root to path
PROJECT_ROOT = Path(__file__).parent.parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from covext.abelian import (
    GroupElement,
    act,
    annihilator,
    dft_matrix,
    dual_transversal,
    make_group,
    pairing,
    pairing_matrix,
    parse_element,
    random_section,
    subgroup_closure,
    subgroups,
    transversal,
    with_section,
)
from covext.errors import InvalidInputError
from tests.fixtures.sample_data import EXHAUSTIVE_GROUPS


class TestMakeGroup:
    """Tests for make_group() and GroupSpec arithmetic."""

    def test_order_and_rank(self):
        """Order is the product of the factors."""
        G = make_group([2, 4])
        assert G.order == 8
        assert G.rank == 2
        assert G.exponent_lcm == 4

    def test_elements_lexicographic(self):
        """Elements are enumerated lexicographically."""
        G = make_group([2, 2])
        assert [e.residues for e in G.elements()] == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_index_matches_enumeration(self):
        """index() is the position in elements()."""
        G = make_group([3, 4])
        for k, g in enumerate(G.elements()):
            assert G.index(g) == k

    def test_add_wraps(self):
        G = make_group([4])
        assert G.add(GroupElement((3,)), GroupElement((2,))) == GroupElement((1,))
        assert G.neg(GroupElement((1,))) == GroupElement((3,))

    @pytest.mark.parametrize("factors", [[], [0], [-2], [2.5], [True]])
    def test_rejects_bad_factors(self, factors):
        """Factors must be positive integers."""
        with pytest.raises(InvalidInputError):
            make_group(factors)


class TestParseElement:
    """Tests for parse_element()."""

    def test_parse_string(self):
        G = make_group([2, 4])
        assert parse_element(G, "1,3") == GroupElement((1, 3))

    def test_parse_int_single_factor(self):
        G = make_group([5])
        assert parse_element(G, 4) == GroupElement((4,))

    def test_parse_list(self):
        G = make_group([3, 3])
        assert parse_element(G, [2, 0]) == GroupElement((2, 0))

    def test_out_of_range(self):
        """Residues must be reduced."""
        G = make_group([4])
        with pytest.raises(InvalidInputError):
            parse_element(G, [4])

    def test_wrong_arity(self):
        G = make_group([2, 2])
        with pytest.raises(InvalidInputError):
            parse_element(G, [1])

    def test_garbage_string(self):
        G = make_group([2])
        with pytest.raises(InvalidInputError):
            parse_element(G, "x")


class TestSubgroupsAndTransversals:
    """Tests for subgroup_closure(), transversal() and sections."""

    def test_closure_of_generator(self):
        G = make_group([6])
        H = subgroup_closure(G, [[2]])
        assert [h.residues for h in H.elements] == [(0,), (2,), (4,)]

    def test_trivial_closure(self):
        G = make_group([4])
        assert subgroup_closure(G, []).order == 1

    def test_transversal_cyclic(self):
        """Z_4 / {0, 2} has representatives 0 and 1."""
        G = make_group([4])
        T = transversal(G, subgroup_closure(G, [[2]]))
        assert T.labels() == ["0", "1"]
        assert T.index_of(GroupElement((3,))) == 1

    def test_transversal_diagonal(self):
        """Z_2 x Z_2 modulo the diagonal has representatives (0,0) and (0,1)."""
        G = make_group([2, 2])
        T = transversal(G, subgroup_closure(G, [[1, 1]]))
        assert [r.residues for r in T.representatives] == [(0, 0), (0, 1)]

    def test_act_on_cosets(self):
        """(1,0) moves the coset of (0,1) to the coset of (1,1) = (0,0)."""
        G = make_group([2, 2])
        T = transversal(G, subgroup_closure(G, [[1, 1]]))
        assert act(T, GroupElement((1, 0)), 1) == 0
        assert act(T, GroupElement((1, 0)), 0) == 1

    def test_with_section_reorders_by_coset(self):
        """Representatives keep the coset order whatever order they are given in."""
        G = make_group([4])
        T = transversal(G, subgroup_closure(G, [[2]]))
        S = with_section(T, [[3], [2]])
        assert S.labels() == ["2", "3"]

    def test_with_section_rejects_duplicate_coset(self):
        G = make_group([4])
        T = transversal(G, subgroup_closure(G, [[2]]))
        with pytest.raises(InvalidInputError):
            with_section(T, [[0], [2]])

    def test_random_section_is_a_section(self, rng):
        G = make_group([2, 4])
        T = transversal(G, subgroup_closure(G, [[1, 2]]))
        S = random_section(T, rng)
        for k, rep in enumerate(S.representatives):
            assert T.index_of(rep) == k

    @pytest.mark.parametrize("factors,generators", [
        ([4], [[2]]),
        ([6], [[3]]),
        ([2, 2], [[1, 1]]),
        ([2, 4], [[1, 0]]),
        ([3, 3], []),
    ])
    def test_action_law(self, factors, generators):
        """g1.(g2.omega) = (g1 + g2).omega for every pair and outcome."""
        G = make_group(factors)
        T = transversal(G, subgroup_closure(G, generators))
        for g1 in G.elements():
            for g2 in G.elements():
                for omega in range(len(T)):
                    assert act(T, g1, act(T, g2, omega)) == act(T, G.add(g1, g2), omega)


class TestPairing:
    """Tests for the character pairing and the Fourier matrix."""

    def test_pairing_value(self):
        G = make_group([4])
        assert pairing(G, GroupElement((1,)), GroupElement((1,))) == pytest.approx(1j)

    def test_pairing_bilinear(self):
        """<g + h, gamma> = <g, gamma> <h, gamma> on every triple."""
        G = make_group([2, 3])
        elements = G.elements()
        for g in elements:
            for h in elements:
                for gamma in elements:
                    lhs = pairing(G, G.add(g, h), gamma)
                    rhs = pairing(G, g, gamma) * pairing(G, h, gamma)
                    assert lhs == pytest.approx(rhs)

    def test_pairing_matrix_symmetric(self):
        G = make_group([2, 4])
        P = pairing_matrix(G, G.elements(), G.elements())
        assert_allclose(P, P.T, atol=1e-12)

    def test_dft_row(self):
        """Row 1 of the Z_4 Fourier matrix is (1, i, -1, -i) / 2."""
        F = dft_matrix(make_group([4]))
        assert_allclose(F[1], 0.5 * np.array([1, 1j, -1, -1j]), atol=1e-12)

    @pytest.mark.parametrize("factors", EXHAUSTIVE_GROUPS)
    def test_orthogonality(self, factors):
        """Summing <g, gamma> over g gives |G| at gamma = 0 and zero elsewhere."""
        G = make_group(factors)
        P = pairing_matrix(G, G.elements(), G.elements())
        sums = P.sum(axis=0)
        expected = np.zeros(G.order)
        expected[G.index(G.zero())] = G.order
        assert_allclose(sums, expected, atol=1e-9)

    @pytest.mark.parametrize("factors", [[3], [2, 2], [2, 3], [4, 4]])
    def test_dft_unitary(self, factors):
        F = dft_matrix(make_group(factors))
        assert_allclose(F @ F.conj().T, np.eye(F.shape[0]), atol=1e-12)


class TestAnnihilator:
    """Tests for annihilator() and dual_transversal()."""

    def test_annihilator_cyclic(self):
        """The annihilator of {0, 2} in Z_4 is {0, 2}."""
        G = make_group([4])
        perp = annihilator(G, subgroup_closure(G, [[2]]))
        assert [g.residues for g in perp.elements] == [(0,), (2,)]

    def test_annihilator_diagonal(self):
        """The annihilator of the diagonal of Z_3 x Z_3 is the antidiagonal."""
        G = make_group([3, 3])
        perp = annihilator(G, subgroup_closure(G, [[1, 1]]))
        assert {g.residues for g in perp.elements} == {(0, 0), (1, 2), (2, 1)}

    def test_dual_transversal_size(self):
        G = make_group([2, 4])
        H = subgroup_closure(G, [[1, 0]])
        assert len(dual_transversal(G, H)) == H.order

    @pytest.mark.parametrize("factors", EXHAUSTIVE_GROUPS)
    def test_double_annihilator(self, factors):
        """|H| |H-perp| = |G| and H-perp-perp = H for every subgroup."""
        G = make_group(factors)
        for H in subgroups(G):
            perp = annihilator(G, H)
            assert H.order * perp.order == G.order
            assert annihilator(G, perp).elements == H.elements


class TestSubgroupEnumeration:
    """Tests for subgroups()."""

    @pytest.mark.parametrize("factors,count", [
        ([1], 1),
        ([4], 3),
        ([6], 4),
        ([8], 4),
        ([2, 2], 5),
        ([2, 4], 8),
        ([3, 3], 6),
    ])
    def test_counts(self, factors, count):
        assert len(subgroups(make_group(factors))) == count

    @pytest.mark.parametrize("factors", EXHAUSTIVE_GROUPS)
    def test_each_subgroup_closed(self, factors):
        """Every enumerated subgroup is closed and its order divides |G|."""
        G = make_group(factors)
        for H in subgroups(G):
            assert G.order % H.order == 0
            for a in H.elements:
                for b in H.elements:
                    assert G.sub(a, b) in H

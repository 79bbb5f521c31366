"""System Hilbert space bookkeeping.

The space is a finite direct sum of multiplicity spaces C^{n(gamma)} over the
spectrum Lambda, and the symmetry acts diagonally: U(g) multiplies the gamma
component by <g, gamma>. Basis vectors are flattened as (gamma, i) in
lexicographic order of gamma.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

import numpy as np

from covext.abelian import (
    GroupElement,
    GroupSpec,
    SubgroupData,
    TransversalData,
    dual_transversal,
    pairing_matrix,
    parse_element,
    transversal,
)
from covext.errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CosetBlock:
    """Spectrum entries lying in one coset of the annihilator."""

    coset: int
    characters: Tuple[GroupElement, ...]
    indices: Tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Characters on which U acts, with multiplicities.

    Attributes:
        group: the symmetry group G.
        subgroup: the stabilizer H, so that outcomes are G/H.
        entries: (gamma, n(gamma)) sorted by gamma.
        outcomes: lexicographic transversal of G/H.
        dual_cosets: lexicographic transversal of the dual modulo H-perp.
    """

    group: GroupSpec
    subgroup: SubgroupData
    entries: Tuple[Tuple[GroupElement, int], ...]
    outcomes: TransversalData = field(repr=False)
    dual_cosets: TransversalData = field(repr=False)
    offsets: Dict[GroupElement, int] = field(repr=False)

    @property
    def dim(self) -> int:
        return sum(n for _, n in self.entries)

    @property
    def characters(self) -> List[GroupElement]:
        return [gamma for gamma, _ in self.entries]

    def multiplicity(self, gamma: GroupElement) -> int:
        for g, n in self.entries:
            if g == gamma:
                return n
        return 0

    def slice(self, gamma: GroupElement) -> slice:
        start = self.offsets[gamma]
        return slice(start, start + self.multiplicity(gamma))

    def flatten(self, gamma: GroupElement, i: int) -> int:
        if gamma not in self.offsets or not 0 <= i < self.multiplicity(gamma):
            raise InvalidInputError(f"no basis vector ({gamma}, {i}) in spectrum")
        return self.offsets[gamma] + i

    def unflatten(self, k: int) -> Tuple[GroupElement, int]:
        if not 0 <= k < self.dim:
            raise InvalidInputError(f"flat index {k} outside 0..{self.dim - 1}")
        for gamma, n in self.entries:
            start = self.offsets[gamma]
            if start <= k < start + n:
                return gamma, k - start
        raise AssertionError("unreachable")

    def basis_characters(self) -> List[GroupElement]:
        """gamma of every flat basis vector."""
        out = []
        for gamma, n in self.entries:
            out.extend([gamma] * n)
        return out

    def to_dict(self) -> Dict:
        return {
            "group": list(self.group.factors),
            "subgroup": [h.to_list() for h in self.subgroup.elements],
            "spectrum": [[gamma.to_list(), n] for gamma, n in self.entries],
        }


def make_spectrum(G: GroupSpec, H: SubgroupData, entries: Iterable) -> Spectrum:
    """Validate (gamma, multiplicity) pairs and build the flat indexing."""
    parsed: Dict[GroupElement, int] = {}
    for item in entries:
        try:
            raw_gamma, n = item
        except (TypeError, ValueError):
            raise InvalidInputError(f"spectrum entry {item!r} is not a (character, multiplicity) pair") from None
        gamma = parse_element(G, raw_gamma)
        if isinstance(n, bool) or int(n) != n or int(n) < 1:
            raise InvalidInputError(f"multiplicity of {gamma} must be a positive integer, got {n!r}")
        if gamma in parsed:
            raise InvalidInputError(f"duplicate character {gamma} in spectrum")
        parsed[gamma] = int(n)
    if not parsed:
        raise InvalidInputError("spectrum is empty")

    ordered = tuple(sorted(parsed.items()))
    offsets: Dict[GroupElement, int] = {}
    pos = 0
    for gamma, n in ordered:
        offsets[gamma] = pos
        pos += n
    outcomes = transversal(G, H)
    dual = dual_transversal(G, H)
    logger.debug("spectrum over Z%s: %d characters, dim %d, %d outcomes",
                 G.factors, len(ordered), pos, len(outcomes))
    return Spectrum(G, H, ordered, outcomes, dual, offsets)


def full_spectrum(G: GroupSpec, H: SubgroupData, multiplicity: int = 1) -> Spectrum:
    """Every character of G, each with the same multiplicity."""
    return make_spectrum(G, H, [(gamma, multiplicity) for gamma in G.elements()])


def translate(spec: Spectrum, chi) -> Spectrum:
    """Shift every character by chi."""
    chi = parse_element(spec.group, chi)
    return make_spectrum(
        spec.group, spec.subgroup,
        [(spec.group.add(gamma, chi), n) for gamma, n in spec.entries],
    )


def phases(spec: Spectrum, g: GroupElement) -> np.ndarray:
    """Diagonal of U(g) in flat order."""
    g = spec.group.element(g)
    return pairing_matrix(spec.group, [g], spec.basis_characters())[0]


def rep_matrix(spec: Spectrum, g: GroupElement) -> np.ndarray:
    """U(g) as a dense diagonal matrix.

    Args:
        spec: the spectrum fixing the basis order.
        g: group element.

    Returns:
        dim x dim unitary with the phases <g, gamma> on the diagonal.
    """
    return np.diag(phases(spec, g))


def pvm_existence(spec: Spectrum) -> bool:
    """True iff n(gamma) is constant on every coset of H-perp (zero off Lambda)."""
    dual = spec.dual_cosets
    for k in range(len(dual)):
        mults = {spec.multiplicity(gamma) for gamma in dual.coset(k)}
        if len(mults) > 1:
            return False
    return True


def coset_blocks(spec: Spectrum) -> List[CosetBlock]:
    """Partition of the spectrum by dual coset, in coset order."""
    grouped: Dict[int, List[GroupElement]] = {}
    for gamma, _ in spec.entries:
        grouped.setdefault(spec.dual_cosets.index_of(gamma), []).append(gamma)
    blocks = []
    for coset in sorted(grouped):
        chars = tuple(grouped[coset])
        indices: List[int] = []
        for gamma in chars:
            indices.extend(range(spec.slice(gamma).start, spec.slice(gamma).stop))
        blocks.append(CosetBlock(coset, chars, tuple(indices)))
    return blocks


def coset_mask(spec: Spectrum) -> np.ndarray:
    """Boolean matrix, true where the two basis characters share a dual coset."""
    labels = np.array([spec.dual_cosets.index_of(gamma) for gamma in spec.basis_characters()])
    return labels[:, None] == labels[None, :]


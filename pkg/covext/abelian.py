"""Finite Abelian group arithmetic.

Groups are products of cyclic factors Z_N1 x ... x Z_Nk, enumerated eagerly.
The dual group is identified with the group itself through the standard
pairing <g, gamma> = exp(2 pi i sum_j g_j gamma_j / N_j), so subgroups of the
dual (annihilators) are ordinary SubgroupData of the same GroupSpec.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from covext.errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class GroupElement:
    """An element of a finite Abelian group, stored as reduced residues."""

    residues: Tuple[int, ...]

    def __str__(self) -> str:
        return ",".join(str(r) for r in self.residues)

    def to_list(self) -> List[int]:
        return list(self.residues)


@dataclass(frozen=True)
class GroupSpec:
    """Z_N1 x ... x Z_Nk given by its cyclic factor orders."""

    factors: Tuple[int, ...]

    @property
    def order(self) -> int:
        return math.prod(self.factors)

    @property
    def rank(self) -> int:
        return len(self.factors)

    @property
    def exponent_lcm(self) -> int:
        return math.lcm(*self.factors)

    def zero(self) -> GroupElement:
        return GroupElement(tuple(0 for _ in self.factors))

    def elements(self) -> List[GroupElement]:
        """All elements in lexicographic order."""
        return [GroupElement(r) for r in itertools.product(*(range(n) for n in self.factors))]

    def element(self, values: Union[GroupElement, Sequence[int]]) -> GroupElement:
        """Range-checked element constructor."""
        if isinstance(values, GroupElement):
            values = values.residues
        values = tuple(int(v) for v in values)
        if len(values) != self.rank:
            raise InvalidInputError(
                f"element {values} has {len(values)} components, group has {self.rank} factors"
            )
        for v, n in zip(values, self.factors):
            if not 0 <= v < n:
                raise InvalidInputError(f"element {values} out of range for factors {self.factors}")
        return GroupElement(values)

    def add(self, a: GroupElement, b: GroupElement) -> GroupElement:
        return GroupElement(tuple((x + y) % n for x, y, n in zip(a.residues, b.residues, self.factors)))

    def neg(self, a: GroupElement) -> GroupElement:
        return GroupElement(tuple((-x) % n for x, n in zip(a.residues, self.factors)))

    def sub(self, a: GroupElement, b: GroupElement) -> GroupElement:
        return self.add(a, self.neg(b))

    def index(self, g: GroupElement) -> int:
        """Position of g in elements() (mixed radix)."""
        idx = 0
        for r, n in zip(g.residues, self.factors):
            idx = idx * n + r
        return idx

    def residue_array(self, elements: Optional[Sequence[GroupElement]] = None) -> np.ndarray:
        if elements is None:
            elements = self.elements()
        if not elements:
            return np.zeros((0, self.rank), dtype=np.int64)
        return np.array([e.residues for e in elements], dtype=np.int64)


@dataclass(frozen=True)
class SubgroupData:
    """A subgroup of `parent`, elements sorted lexicographically."""

    parent: GroupSpec
    elements: Tuple[GroupElement, ...]

    @property
    def order(self) -> int:
        return len(self.elements)

    def __contains__(self, g: GroupElement) -> bool:
        return g in self._members

    @cached_property
    def _members(self) -> frozenset:
        return frozenset(self.elements)


@dataclass(frozen=True)
class TransversalData:
    """Coset representatives of `subgroup` in `parent`.

    coset_index maps every group element to the index of its coset; the
    representative list is the section s used to label outcomes.
    """

    parent: GroupSpec
    subgroup: SubgroupData
    representatives: Tuple[GroupElement, ...]
    coset_index: Dict[GroupElement, int] = field(compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.representatives)

    def index_of(self, g: GroupElement) -> int:
        return self.coset_index[g]

    def coset(self, k: int) -> List[GroupElement]:
        rep = self.representatives[k]
        return [self.parent.add(rep, h) for h in self.subgroup.elements]

    def labels(self) -> List[str]:
        return [str(r) for r in self.representatives]


def make_group(factors: Sequence[int]) -> GroupSpec:
    """Validate cyclic factor orders and return the group."""
    factors = list(factors)
    if not factors:
        raise InvalidInputError("group needs at least one cyclic factor")
    for n in factors:
        if isinstance(n, bool) or int(n) != n or int(n) < 1:
            raise InvalidInputError(f"cyclic factor orders must be positive integers, got {factors}")
    return GroupSpec(tuple(int(n) for n in factors))


def parse_element(G: GroupSpec, value: Union[str, int, Sequence[int], GroupElement]) -> GroupElement:
    """Accept "g1,g2", a bare integer (single factor) or an integer list."""
    if isinstance(value, GroupElement):
        return G.element(value)
    if isinstance(value, str):
        try:
            parts = [int(p) for p in value.split(",") if p.strip() != ""]
        except ValueError:
            raise InvalidInputError(f"cannot parse group element {value!r}") from None
        return G.element(parts)
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return G.element([int(value)])
    try:
        return G.element(list(value))
    except TypeError:
        raise InvalidInputError(f"cannot parse group element {value!r}") from None


def subgroup_closure(G: GroupSpec, generators: Iterable) -> SubgroupData:
    """Smallest subgroup containing the generators."""
    gens = [parse_element(G, g) for g in generators]
    members = {G.zero()}
    frontier = [G.zero()]
    while frontier:
        nxt = []
        for x in frontier:
            for g in gens:
                y = G.add(x, g)
                if y not in members:
                    members.add(y)
                    nxt.append(y)
        frontier = nxt
    # finite group: closure under addition already gives negatives
    return SubgroupData(G, tuple(sorted(members)))


def _check_subgroup(G: GroupSpec, H: SubgroupData) -> None:
    if H.parent != G:
        raise InvalidInputError("subgroup belongs to a different group")
    members = set(H.elements)
    if G.zero() not in members:
        raise InvalidInputError("subgroup does not contain the identity")
    for a in H.elements:
        G.element(a)
        if G.neg(a) not in members:
            raise InvalidInputError(f"subgroup not closed under negation at {a}")
        for b in H.elements:
            if G.add(a, b) not in members:
                raise InvalidInputError(f"subgroup not closed under addition at {a} + {b}")


def transversal(G: GroupSpec, H: SubgroupData) -> TransversalData:
    """Lexicographically minimal coset representatives of G/H."""
    _check_subgroup(G, H)
    coset_index: Dict[GroupElement, int] = {}
    reps: List[GroupElement] = []
    for g in G.elements():
        if g in coset_index:
            continue
        k = len(reps)
        reps.append(g)
        for h in H.elements:
            coset_index[G.add(g, h)] = k
    assert len(reps) * H.order == G.order
    return TransversalData(G, H, tuple(reps), coset_index)


def with_section(T: TransversalData, representatives: Sequence) -> TransversalData:
    """Same cosets, alternative representatives (one member of each coset)."""
    G = T.parent
    reps = [parse_element(G, r) for r in representatives]
    if len(reps) != len(T.representatives):
        raise InvalidInputError(
            f"section needs {len(T.representatives)} representatives, got {len(reps)}"
        )
    seen = set()
    ordered: List[Optional[GroupElement]] = [None] * len(reps)
    for r in reps:
        k = T.coset_index[r]
        if k in seen:
            raise InvalidInputError(f"two representatives given for coset of {T.representatives[k]}")
        seen.add(k)
        ordered[k] = r
    # outcome labels keep the coset order of T
    return TransversalData(G, T.subgroup, tuple(ordered), T.coset_index)


def random_section(T: TransversalData, rng: np.random.Generator) -> TransversalData:
    reps = []
    for k in range(len(T)):
        members = T.coset(k)
        reps.append(members[int(rng.integers(len(members)))])
    return with_section(T, reps)


def _phase_numerators(G: GroupSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Integer matrix P with <a_i, b_j> = exp(2 pi i P_ij / L), L = lcm of factors."""
    L = G.exponent_lcm
    scale = np.array([L // n for n in G.factors], dtype=np.int64)
    return ((A * scale) @ B.T) % L


def pairing(G: GroupSpec, g: GroupElement, gamma: GroupElement) -> complex:
    """Character pairing <g, gamma>; modulus one, bilinear."""
    g = G.element(g)
    gamma = G.element(gamma)
    num = _phase_numerators(G, G.residue_array([g]), G.residue_array([gamma]))[0, 0]
    return complex(np.exp(2j * np.pi * num / G.exponent_lcm))


def pairing_matrix(G: GroupSpec, rows: Sequence[GroupElement], cols: Sequence[GroupElement]) -> np.ndarray:
    """Matrix of pairings <rows_i, cols_j>."""
    num = _phase_numerators(G, G.residue_array(rows), G.residue_array(cols))
    return np.exp(2j * np.pi * num / G.exponent_lcm)


def annihilator(G: GroupSpec, H: SubgroupData) -> SubgroupData:
    """Characters trivial on H (exact integer test)."""
    _check_subgroup(G, H)
    dual = G.elements()
    num = _phase_numerators(G, G.residue_array(list(H.elements)), G.residue_array(dual))
    keep = np.all(num == 0, axis=0)
    perp = tuple(gamma for gamma, ok in zip(dual, keep) if ok)
    assert len(perp) * H.order == G.order
    return SubgroupData(G, perp)


def dual_transversal(G: GroupSpec, H: SubgroupData) -> TransversalData:
    """Coset representatives of the dual modulo the annihilator of H."""
    return transversal(G, annihilator(G, H))


def act(T: TransversalData, g: GroupElement, omega: int) -> int:
    """Index of the coset [g + s(omega)]."""
    return T.coset_index[T.parent.add(T.parent.element(g), T.representatives[omega])]


def dft_matrix(G: GroupSpec) -> np.ndarray:
    """Unitary Fourier matrix F[g, gamma] = <g, gamma> / sqrt(|G|)."""
    elements = G.elements()
    return pairing_matrix(G, elements, elements) / math.sqrt(G.order)


def subgroups(G: GroupSpec) -> List[SubgroupData]:
    """Every subgroup of a small group, grown one generator at a time."""
    elements = G.elements()
    trivial = subgroup_closure(G, [])
    found = {trivial.elements: trivial}
    frontier = [trivial]
    while frontier:
        nxt = []
        for H in frontier:
            for g in elements:
                if g in H:
                    continue
                K = subgroup_closure(G, list(H.elements) + [g])
                if K.elements not in found:
                    found[K.elements] = K
                    nxt.append(K)
        frontier = nxt
    logger.debug("enumerated %d subgroups of Z%s", len(found), G.factors)
    return sorted(found.values(), key=lambda H: (H.order, H.elements))

"""Builders for covariant observables.

Every covariant observable is fixed by an isometry field W(gamma): C^{n(gamma)} -> C^m.
With counting measures the effect at outcome [g] is

    M([g])_{(g1,i),(g2,j)} = <g, g1 - g2> <W(g1) e_i, W(g2) e_j> / |Omega|

when g1 - g2 lies in the annihilator of H, and 0 otherwise. Summing over the
outcomes kills every entry whose character difference is a nonzero element of
the annihilator, so M(Omega) = I exactly when each W(gamma) is an isometry.
The Gram blocks <W(g1) e_i, W(g2) e_j> (one PSD matrix per dual coset, identity
diagonal blocks) are therefore the convex coordinates of the covariant set.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from covext.abelian import (
    GroupElement,
    GroupSpec,
    TransversalData,
    make_group,
    pairing_matrix,
    subgroup_closure,
)
from covext.errors import (
    InvalidInputError,
    NotCovariantStructureError,
    NumericalFailureError,
    NumericalInconsistencyError,
)
from covext.povm import (
    DEFAULT_TOLERANCES,
    CovariantPOVM,
    Tolerances,
    check_covariance,
    validate_povm,
)
from covext.repspace import Spectrum, coset_blocks, coset_mask, full_spectrum

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class IsometryField:
    """W(gamma) as an m x n(gamma) matrix for every gamma in the spectrum."""

    spectrum: Spectrum
    ambient_dim: int
    blocks: Dict[GroupElement, np.ndarray] = field(repr=False)

    def stacked(self) -> np.ndarray:
        """m x d matrix whose columns are W(gamma) e_i in flat order."""
        return np.hstack([self.blocks[gamma] for gamma in self.spectrum.characters])

    def left_multiply(self, V: np.ndarray) -> "IsometryField":
        return IsometryField(self.spectrum, V.shape[0], {g: V @ W for g, W in self.blocks.items()})

    def to_dict(self) -> Dict[str, list]:
        return {str(g): _matrix_to_json(W) for g, W in self.blocks.items()}


@dataclass(frozen=True, eq=False)
class GramStructure:
    """One PSD block per dual coset met by the spectrum, aligned with coset_blocks()."""

    spectrum: Spectrum
    blocks: Tuple[np.ndarray, ...] = field(repr=False)
    ranks: Tuple[int, ...]

    @property
    def rank(self) -> int:
        return sum(self.ranks)

    def full(self) -> np.ndarray:
        """d x d Gram matrix, zero across dual cosets."""
        d = self.spectrum.dim
        out = np.zeros((d, d), dtype=complex)
        for block, B in zip(coset_blocks(self.spectrum), self.blocks):
            idx = np.array(block.indices)
            out[np.ix_(idx, idx)] = B
        return out


@dataclass(frozen=True)
class ProbabilityVector:
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class PositiveTypeFunction:
    """eta(gamma) for every gamma in elements() order of `group`."""

    group: GroupSpec
    values: np.ndarray

    def kernel(self) -> np.ndarray:
        """Shift kernel [eta(g1 - g2)]."""
        G = self.group
        elements = G.elements()
        idx = np.array([[G.index(G.sub(a, b)) for b in elements] for a in elements])
        return self.values[idx]


def _matrix_to_json(X: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(X)]


def make_isometry_field(
    spectrum: Spectrum,
    blocks: Mapping,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> IsometryField:
    """Validate W(gamma)* W(gamma) = I and a common ambient dimension."""
    parsed: Dict[GroupElement, np.ndarray] = {}
    lookup = {str(g): g for g in spectrum.characters}
    for key, W in blocks.items():
        gamma = key if isinstance(key, GroupElement) else lookup.get(str(key))
        if gamma is None or gamma not in spectrum.offsets:
            raise InvalidInputError(f"isometry given for character {key} outside the spectrum")
        parsed[gamma] = np.atleast_2d(np.asarray(W, dtype=complex))
    missing = [str(g) for g in spectrum.characters if g not in parsed]
    if missing:
        raise InvalidInputError(f"isometry field misses characters {missing}")

    dims = {W.shape[0] for W in parsed.values()}
    if len(dims) != 1:
        raise InvalidInputError(f"isometries disagree on the ambient dimension: {sorted(dims)}")
    m = dims.pop()
    for gamma, W in parsed.items():
        n = spectrum.multiplicity(gamma)
        if W.shape[1] != n:
            raise InvalidInputError(f"W({gamma}) has {W.shape[1]} columns, multiplicity is {n}")
        if m < n:
            raise InvalidInputError(f"ambient dimension {m} below multiplicity {n} of {gamma}")
        residual = np.linalg.norm(W.conj().T @ W - np.eye(n), 2)
        if residual > tol.eq_tol:
            raise InvalidInputError(f"W({gamma}) is not an isometry (residual {residual:.3e})")
    return IsometryField(spectrum, m, parsed)


def effects_from_gram(spectrum: Spectrum, gram: np.ndarray) -> np.ndarray:
    """Effect stack from a d x d Gram matrix (cross-coset entries are masked out)."""
    reps = spectrum.outcomes.representatives
    P = pairing_matrix(spectrum.group, reps, spectrum.basis_characters())
    masked = np.where(coset_mask(spectrum), gram, 0.0)
    n = len(reps)
    return masked[None, :, :] * P[:, :, None] * np.conj(P)[:, None, :] / n


def _assert_valid(M: CovariantPOVM, tol: Tolerances) -> CovariantPOVM:
    validity = validate_povm(M, tol)
    covariance = check_covariance(M, tol)
    if not (validity.passed and covariance.is_covariant):
        raise NumericalInconsistencyError(
            "constructed observable failed its own checks "
            f"(min eig {validity.min_eigenvalue:.3e}, normalization {validity.normalization_residual:.3e}, "
            f"covariance {covariance.residual:.3e})"
        )
    return M


def build_from_gram(
    gram: GramStructure,
    tol: Tolerances = DEFAULT_TOLERANCES,
    provenance: Optional[IsometryField] = None,
) -> CovariantPOVM:
    M = CovariantPOVM(gram.spectrum, effects_from_gram(gram.spectrum, gram.full()), provenance)
    return _assert_valid(M, tol)


def build_from_isometries(W: IsometryField, tol: Tolerances = DEFAULT_TOLERANCES) -> CovariantPOVM:
    """Covariant observable of an isometry field."""
    S = W.stacked()
    for gamma, block in W.blocks.items():
        n = block.shape[1]
        if np.linalg.norm(block.conj().T @ block - np.eye(n), 2) > tol.eq_tol:
            raise InvalidInputError(f"W({gamma}) is not an isometry")
    gram = S.conj().T @ S
    M = CovariantPOVM(W.spectrum, effects_from_gram(W.spectrum, gram), W)
    logger.debug("built observable: %d outcomes, dim %d, ambient %d",
                 M.num_outcomes, M.dim, W.ambient_dim)
    return _assert_valid(M, tol)


def _block_ranks(blocks: Sequence[np.ndarray], tol: Tolerances) -> Tuple[int, ...]:
    ranks = []
    for B in blocks:
        eig = scipy.linalg.eigvalsh(B)
        ranks.append(int(np.sum(eig > tol.rank_tol * max(eig[-1], 1.0))))
    return tuple(ranks)


def make_gram_structure(
    spectrum: Spectrum,
    blocks: Sequence[np.ndarray],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> GramStructure:
    """Validate per-coset Gram blocks (Hermitian, PSD, identity diagonal blocks)."""
    layout = coset_blocks(spectrum)
    if len(blocks) != len(layout):
        raise InvalidInputError(f"expected {len(layout)} coset blocks, got {len(blocks)}")
    checked = []
    for block, B in zip(layout, blocks):
        B = np.atleast_2d(np.asarray(B, dtype=complex))
        if B.shape != (block.size, block.size):
            raise InvalidInputError(
                f"Gram block for coset {block.coset} has shape {B.shape}, expected {(block.size, block.size)}"
            )
        _check_gram_block(spectrum, block, B, tol, InvalidInputError)
        checked.append(0.5 * (B + B.conj().T))
    return GramStructure(spectrum, tuple(checked), _block_ranks(checked, tol))


def _check_gram_block(spectrum, block, B, tol, error) -> None:
    if np.max(np.abs(B - B.conj().T)) > tol.eq_tol:
        raise error(f"Gram block for coset {block.coset} is not Hermitian")
    pos = 0
    for gamma in block.characters:
        n = spectrum.multiplicity(gamma)
        diag = B[pos:pos + n, pos:pos + n]
        if np.linalg.norm(diag - np.eye(n), 2) > tol.eq_tol:
            raise error(f"diagonal Gram block of {gamma} deviates from the identity")
        pos += n
    lowest = scipy.linalg.eigvalsh(0.5 * (B + B.conj().T))[0]
    if lowest < -tol.psd_tol:
        raise error(f"Gram block for coset {block.coset} is not PSD (eigenvalue {lowest:.3e})")


def extract_gram(M: CovariantPOVM, tol: Tolerances = DEFAULT_TOLERANCES) -> GramStructure:
    """Read the Gram blocks off the identity-coset effect, |Omega| M([0])."""
    spec = M.spectrum
    zero = spec.outcomes.index_of(spec.group.zero())
    full = len(spec.outcomes) * M.effects[zero]
    mask = coset_mask(spec)
    if (~mask).any() and np.max(np.abs(full[~mask])) > tol.eq_tol * len(spec.outcomes):
        raise NotCovariantStructureError("effects couple characters from different dual cosets")
    blocks = []
    for block in coset_blocks(spec):
        idx = np.array(block.indices)
        B = full[np.ix_(idx, idx)]
        _check_gram_block(spec, block, B, tol, NotCovariantStructureError)
        blocks.append(0.5 * (B + B.conj().T))
    return GramStructure(spec, tuple(blocks), _block_ranks(blocks, tol))


def isometries_from_gram(gram: GramStructure, tol: Tolerances = DEFAULT_TOLERANCES) -> IsometryField:
    """Minimal Kolmogorov factorization, coset blocks stacked into disjoint coordinates."""
    spec = gram.spectrum
    factors: List[Tuple[np.ndarray, Tuple[GroupElement, ...]]] = []
    for block, B in zip(coset_blocks(spec), gram.blocks):
        try:
            eig, vecs = scipy.linalg.eigh(B)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericalFailureError(f"eigendecomposition of Gram block {block.coset} failed: {e}") from e
        eig, vecs = eig[::-1], vecs[:, ::-1]
        if eig[-1] < -max(tol.psd_tol, tol.rank_tol * eig[0]):
            raise InvalidInputError(f"Gram block for coset {block.coset} has eigenvalue {eig[-1]:.3e}")
        keep = eig > tol.rank_tol * max(eig[0], 1.0)
        if np.any((eig < 0) & ~keep):
            logger.debug("clipping %d small negative Gram eigenvalues", int(np.sum(eig < 0)))
        V = np.sqrt(eig[keep])[:, None] * vecs[:, keep].conj().T
        factors.append((V, block.characters))

    m = sum(V.shape[0] for V, _ in factors)
    blocks: Dict[GroupElement, np.ndarray] = {}
    row = 0
    for V, characters in factors:
        col = 0
        for gamma in characters:
            n = spec.multiplicity(gamma)
            W = np.zeros((m, n), dtype=complex)
            W[row:row + V.shape[0], :] = V[:, col:col + n]
            blocks[gamma] = W
            col += n
        row += V.shape[0]
    return IsometryField(spec, m, blocks)


def canonical_field(spectrum: Spectrum) -> IsometryField:
    """Constant field: W(gamma) = first n(gamma) standard columns of C^{max n}."""
    m = max(n for _, n in spectrum.entries)
    eye = np.eye(m, dtype=complex)
    return IsometryField(spectrum, m, {g: eye[:, :n].copy() for g, n in spectrum.entries})


def trivial_povm(spectrum: Spectrum, tol: Tolerances = DEFAULT_TOLERANCES) -> CovariantPOVM:
    """Effects I/|Omega|: mutually orthogonal isometries."""
    eye = np.eye(spectrum.dim, dtype=complex)
    W = IsometryField(spectrum, spectrum.dim, {g: eye[:, spectrum.slice(g)] for g in spectrum.characters})
    return build_from_isometries(W, tol)


def random_isometry_field(
    spectrum: Spectrum,
    rng: np.random.Generator,
    ambient_dim: Optional[int] = None,
) -> IsometryField:
    """Random isometries from QR of complex Gaussian matrices."""
    n_max = max(n for _, n in spectrum.entries)
    m = spectrum.dim if ambient_dim is None else int(ambient_dim)
    if m < n_max:
        raise InvalidInputError(f"ambient dimension {m} below largest multiplicity {n_max}")
    blocks = {}
    for gamma, n in spectrum.entries:
        Z = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        Q, R = np.linalg.qr(Z)
        Q = Q * (np.diag(R) / np.abs(np.diag(R)))[None, :]
        blocks[gamma] = Q
    return IsometryField(spectrum, m, blocks)


def make_probability_vector(weights: Sequence[float], tol: Tolerances = DEFAULT_TOLERANCES) -> ProbabilityVector:
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise InvalidInputError("probability vector is empty")
    if not np.all(np.isfinite(w)) or np.min(w) < -tol.psd_tol:
        raise InvalidInputError(f"probability weights must be nonnegative, got min {np.min(w):.3e}")
    if abs(w.sum() - 1.0) > tol.eq_tol:
        raise InvalidInputError(f"probability weights sum to {w.sum():.12g}, expected 1")
    return ProbabilityVector(w)


def point_mass(size: int, q: int) -> ProbabilityVector:
    """Probability vector concentrated on q.

    Args:
        size: number of outcomes.
        q: index of the point carrying all the weight.

    Returns:
        ProbabilityVector whose convolution with an observable shifts it by q.

    Raises:
        InvalidInputError: q lies outside 0..size-1.
    """
    if not 0 <= q < size:
        raise InvalidInputError(f"point {q} outside 0..{size - 1}")
    w = np.zeros(size)
    w[q] = 1.0
    return ProbabilityVector(w)


def uniform(size: int) -> ProbabilityVector:
    return ProbabilityVector(np.full(size, 1.0 / size))


def convolve(rho: ProbabilityVector, M: CovariantPOVM) -> CovariantPOVM:
    """effect(omega) = sum_q rho(q) M(omega - q), shifts taken in the quotient group G/H."""
    outcomes = M.outcomes
    n = len(outcomes)
    if len(rho) != n:
        raise InvalidInputError(f"probability vector has {len(rho)} weights, observable has {n} outcomes")
    G = M.spectrum.group
    effects = np.zeros_like(M.effects)
    for omega in range(n):
        for q in np.flatnonzero(rho.weights):
            diff = G.sub(outcomes.representatives[omega], outcomes.representatives[q])
            effects[omega] += rho.weights[q] * M.effects[outcomes.index_of(diff)]
    return CovariantPOVM(M.spectrum, effects)


def shift(M: CovariantPOVM, q: int) -> CovariantPOVM:
    """M_q(omega) = M(omega - q)."""
    return convolve(point_mass(M.num_outcomes, q), M)


def convolve_weights(outcomes: TransversalData, a: ProbabilityVector, b: ProbabilityVector) -> ProbabilityVector:
    """Convolution on the quotient G/H of two vectors indexed like `outcomes`.

    Args:
        outcomes: transversal of G/H; weight k belongs to the coset of representatives[k].
        a: first probability vector.
        b: second probability vector.

    Returns:
        (a * b)(omega) = sum over omega1 + omega2 = omega of a(omega1) b(omega2).
    """
    n = len(outcomes)
    for name, rho in (("first", a), ("second", b)):
        if len(rho) != n:
            raise InvalidInputError(f"{name} probability vector has {len(rho)} weights, quotient has {n} cosets")
    G = outcomes.parent
    out = np.zeros(n)
    for i, x in enumerate(outcomes.representatives):
        for j, y in enumerate(outcomes.representatives):
            out[outcomes.index_of(G.add(x, y))] += a.weights[i] * b.weights[j]
    return ProbabilityVector(out)


def eta_from_rho(G: GroupSpec, rho: ProbabilityVector) -> PositiveTypeFunction:
    """eta(gamma) = sum_q rho(q) conj(<q, gamma>)."""
    if len(rho) != G.order:
        raise InvalidInputError(f"probability vector has {len(rho)} weights, group order is {G.order}")
    elements = G.elements()
    P = pairing_matrix(G, elements, elements)
    return PositiveTypeFunction(G, P.conj().T @ rho.weights.astype(complex))


def rho_from_eta(eta: PositiveTypeFunction, tol: Tolerances = DEFAULT_TOLERANCES) -> ProbabilityVector:
    """Inverse transform; rejects functions that are not of positive type."""
    G = eta.group
    values = np.asarray(eta.values, dtype=complex)
    if values.shape != (G.order,):
        raise InvalidInputError(f"eta needs {G.order} values, got shape {values.shape}")
    if abs(values[G.index(G.zero())] - 1.0) > tol.eq_tol:
        raise InvalidInputError(f"eta(0) = {values[0]:.6g}, expected 1")
    elements = G.elements()
    P = pairing_matrix(G, elements, elements)
    rho = P @ values / G.order
    lowest = float(scipy.linalg.eigvalsh(PositiveTypeFunction(G, values).kernel())[0])
    if np.max(np.abs(rho.imag)) > tol.eq_tol or rho.real.min() < -tol.psd_tol or lowest < -tol.psd_tol:
        raise InvalidInputError(f"eta is not of positive type (most negative kernel eigenvalue {lowest:.3e})")
    return ProbabilityVector(rho.real)


def invariant_from_rho(N: int, rho: ProbabilityVector, tol: Tolerances = DEFAULT_TOLERANCES) -> CovariantPOVM:
    """Translation-covariant observable on Z_N with Gram kernel eta(g1 - g2)."""
    G = make_group([N])
    spec = full_spectrum(G, subgroup_closure(G, []))
    eta = eta_from_rho(G, make_probability_vector(rho.weights, tol))
    gram = make_gram_structure(spec, [eta.kernel()], tol)
    return build_from_isometries(isometries_from_gram(gram, tol), tol)

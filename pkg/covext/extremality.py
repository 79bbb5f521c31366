"""Extremality tests for covariant observables.

Both tests reduce to the nullspace of a real-linear constraint map acting on
Hermitian unknowns:

  covariant  one block A_c per dual coset, acting on the minimal factor space
             of that coset, with W(gamma)* A_c W(gamma) = 0 for every gamma in it;
  global     one block D(omega) per outcome on the whole factor space, with
             sum_omega J(omega)* D(omega) J(omega) = 0, J the minimal dilation.

The observable is extreme exactly when the nullspace is trivial. A nonzero
nullspace element is returned as a certificate together with the witness
pair M+ / M- whose midpoint is M.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from covext.abelian import TransversalData
from covext.construct import (
    GramStructure,
    IsometryField,
    build_from_gram,
    effects_from_gram,
    extract_gram,
    isometries_from_gram,
    make_gram_structure,
)
from covext.errors import (
    InvalidCertificateError,
    InvalidInputError,
    NotCovariantStructureError,
    NumericalFailureError,
    NumericalInconsistencyError,
)
from covext.povm import (
    DEFAULT_TOLERANCES,
    CovariantPOVM,
    Tolerances,
    ValidityReport,
    check_covariance,
    distance,
    mix,
    validate_povm,
)
from covext.repspace import Spectrum, coset_blocks, coset_mask, phases

logger = logging.getLogger(__name__)

SINGULAR_TAIL = 8


class Verdict(str, Enum):
    EXTREME = "Extreme"
    NOT_EXTREME = "NotExtreme"


@dataclass(frozen=True, eq=False)
class Certificate:
    """Hermitian perturbation blocks: A per dual coset, or D per outcome.

    Attributes:
        kind: "covariant" or "global".
        blocks: one Hermitian matrix per dual coset (covariant) or per outcome (global).
        labels: the dual coset or outcome label of each block.
        section: outcome section of the dilation a global certificate was computed on;
            None means the lexicographic section.
    """

    kind: str
    blocks: Tuple[np.ndarray, ...] = field(repr=False)
    labels: Tuple[str, ...]
    section: Optional[TransversalData] = field(default=None, repr=False)

    @property
    def norm(self) -> float:
        return max((float(np.linalg.norm(B, 2)) for B in self.blocks), default=0.0)

    def scaled(self, factor: float) -> "Certificate":
        return Certificate(self.kind, tuple(factor * B for B in self.blocks), self.labels, self.section)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "kind": self.kind,
            "norm": self.norm,
            "blocks": {
                label: [[[float(z.real), float(z.imag)] for z in row] for row in B]
                for label, B in zip(self.labels, self.blocks)
            },
        }
        if self.section is not None:
            out["section"] = self.section.labels()
        return out


@dataclass
class ExtremalityReport:
    """Outcome of one extremality test.

    Attributes:
        test: "covariant", "global" or "moment-covariant".
        verdict: Extreme iff the constraint map has a trivial nullspace.
        perturbation_dim: dimension of that nullspace.
        singular_values: constraint map singular values, descending.
        num_unknowns: real dimension of the perturbation space.
        num_constraints: number of real constraint equations.
        certificate: nonzero nullspace element of operator norm one, if any.
        constraint_residual: how far the certificate is from solving the constraints.
        witnesses: observables (plus, minus) with midpoint equal to the input.
        reconstruction_residual: distance between that midpoint and the input.
        witness_validity: validity of plus and minus.
    """

    test: str
    verdict: Verdict
    perturbation_dim: int
    singular_values: np.ndarray
    num_unknowns: int
    num_constraints: int
    certificate: Optional[Certificate] = None
    constraint_residual: float = 0.0
    witnesses: Optional[Tuple[CovariantPOVM, CovariantPOVM]] = None
    reconstruction_residual: Optional[float] = None
    witness_validity: Optional[Tuple[ValidityReport, ValidityReport]] = None

    @property
    def is_extreme(self) -> bool:
        return self.verdict is Verdict.EXTREME

    @property
    def rank(self) -> int:
        return self.num_unknowns - self.perturbation_dim

    @property
    def smallest_retained(self) -> Optional[float]:
        if self.rank == 0:
            return None
        return float(self.singular_values[self.rank - 1])

    def to_dict(self, include_witnesses: bool = True) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "test": self.test,
            "verdict": self.verdict.value,
            "perturbation_dim": self.perturbation_dim,
            "num_unknowns": self.num_unknowns,
            "num_constraints": self.num_constraints,
            "smallest_retained_singular_value": self.smallest_retained,
            "singular_value_tail": [float(s) for s in self.singular_values[-SINGULAR_TAIL:]],
            "constraint_residual": self.constraint_residual,
        }
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_dict()
        if self.witnesses is not None:
            out["reconstruction_residual"] = self.reconstruction_residual
            out["witness_validity"] = [v.to_dict() for v in self.witness_validity]
            if include_witnesses:
                out["witnesses"] = {
                    "plus": effects_to_json(self.witnesses[0]),
                    "minus": effects_to_json(self.witnesses[1]),
                }
        return out


@dataclass(frozen=True, eq=False)
class NaimarkDilation:
    """J(omega) = S U(s(omega))* / sqrt(|Omega|), S the stacked minimal isometry field."""

    spectrum: Spectrum
    section: TransversalData
    isometries: IsometryField = field(repr=False)
    blocks: np.ndarray = field(repr=False)

    @property
    def ambient_dim(self) -> int:
        return self.blocks.shape[1]

    def stacked(self) -> np.ndarray:
        return self.blocks.reshape(-1, self.blocks.shape[2])

    def compress(self, D: Sequence[np.ndarray]) -> np.ndarray:
        """sum_omega J(omega)* D(omega) J(omega)."""
        return sum(J.conj().T @ Dw @ J for J, Dw in zip(self.blocks, D))

    def effects(self) -> np.ndarray:
        return np.einsum("wai,waj->wij", self.blocks.conj(), self.blocks)

    def is_unitary(self, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
        J = self.stacked()
        if J.shape[0] != J.shape[1]:
            return False
        return float(np.linalg.norm(J @ J.conj().T - np.eye(J.shape[0]), 2)) <= tol.eq_tol


@dataclass
class MidpointDecomposition:
    """M = (plus + minus) / 2 found by the oracle.

    Attributes:
        trial: 1-based index of the random direction that succeeded.
        epsilon: step taken along it, half the largest PSD-preserving step.
        plus: M + epsilon * delta.
        minus: M - epsilon * delta.
    """

    trial: int
    epsilon: float
    plus: CovariantPOVM
    minus: CovariantPOVM

    def to_dict(self) -> Dict[str, Any]:
        return {"found": True, "trial": self.trial, "epsilon": self.epsilon}


@dataclass
class _Nullspace:
    singular_values: np.ndarray
    vectors: np.ndarray
    num_unknowns: int
    num_constraints: int

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def effects_to_json(M: CovariantPOVM) -> Dict[str, list]:
    return {
        label: [[[float(z.real), float(z.imag)] for z in row] for row in E]
        for label, E in zip(M.outcomes.labels(), M.effects)
    }


def hermitian_basis(d: int) -> np.ndarray:
    """Frobenius-orthonormal basis of d x d Hermitian matrices, shape (d*d, d, d)."""
    basis = []
    for k in range(d):
        E = np.zeros((d, d), dtype=complex)
        E[k, k] = 1.0
        basis.append(E)
    r = 1.0 / math.sqrt(2.0)
    for k in range(d):
        for l in range(k + 1, d):
            S = np.zeros((d, d), dtype=complex)
            S[k, l] = S[l, k] = r
            basis.append(S)
            A = np.zeros((d, d), dtype=complex)
            A[k, l], A[l, k] = -1j * r, 1j * r
            basis.append(A)
    return np.array(basis).reshape(d * d, d, d)


def from_coordinates(x: np.ndarray, d: int) -> np.ndarray:
    return np.tensordot(x, hermitian_basis(d), axes=1)


def realify(images: np.ndarray) -> np.ndarray:
    """(k, a, b) complex images of k basis elements -> (2ab, k) real constraint columns."""
    flat = images.reshape(images.shape[0], -1)
    return np.vstack([flat.real.T, flat.imag.T])


def _compressions(X: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """X* B X for every basis element B."""
    return np.einsum("ai,kab,bj->kij", X.conj(), basis, X)


def constraint_nullspace(K: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES) -> _Nullspace:
    """Right nullspace of K; singular values below rank_tol * sigma_max count as zero."""
    rows, cols = K.shape
    try:
        _, s, vh = scipy.linalg.svd(K, full_matrices=rows < cols)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"SVD of the {rows}x{cols} constraint map failed: {e}") from e
    threshold = tol.rank_tol * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > threshold))
    borderline = s[(s > threshold) & (s < 10.0 * threshold)]
    if borderline.size:
        logger.warning("%d singular values within a factor 10 of the rank threshold %.3e",
                       borderline.size, threshold)
    logger.debug("constraint map %dx%d: rank %d, nullspace %d", rows, cols, rank, cols - rank)
    return _Nullspace(s, vh[rank:].T, cols, rows)


def _smallest_vector(null: _Nullspace) -> np.ndarray:
    return null.vectors[:, -1]


def _require_covariant(M: CovariantPOVM, tol: Tolerances) -> None:
    validity = validate_povm(M, tol)
    if not validity.passed:
        raise InvalidInputError(
            f"not a valid observable (min eig {validity.min_eigenvalue:.3e}, "
            f"normalization {validity.normalization_residual:.3e})"
        )
    covariance = check_covariance(M, tol)
    if not covariance.is_covariant:
        raise NotCovariantStructureError(
            f"observable is not covariant (residual {covariance.residual:.3e})"
        )


def _coset_factors(gram: GramStructure, W: IsometryField) -> List[Tuple[str, List[np.ndarray]]]:
    """Per dual coset: label and the rows of W(gamma) spanning that coset's factor space."""
    spec = gram.spectrum
    out = []
    row = 0
    for block, rank in zip(coset_blocks(spec), gram.ranks):
        rows = slice(row, row + rank)
        label = str(spec.dual_cosets.representatives[block.coset])
        out.append((label, [W.blocks[gamma][rows, :] for gamma in block.characters]))
        row += rank
    return out


def covariant_nullspace_report(
    cosets: Sequence[Tuple[str, Sequence[np.ndarray]]],
    tol: Tolerances = DEFAULT_TOLERANCES,
    test: str = "covariant",
) -> ExtremalityReport:
    """Nullspace of {A_c} -> {W* A_c W} over the given (label, [W]) factor groups."""
    columns = []
    dims = []
    for _, Ws in cosets:
        d = Ws[0].shape[0]
        basis = hermitian_basis(d)
        columns.append(np.vstack([realify(_compressions(W, basis)) for W in Ws]))
        dims.append(d)
    K = scipy.linalg.block_diag(*columns)
    null = constraint_nullspace(K, tol)
    report = ExtremalityReport(
        test=test,
        verdict=Verdict.EXTREME if null.dim == 0 else Verdict.NOT_EXTREME,
        perturbation_dim=null.dim,
        singular_values=null.singular_values,
        num_unknowns=null.num_unknowns,
        num_constraints=null.num_constraints,
    )
    if null.dim == 0:
        return report

    x = _smallest_vector(null)
    blocks = []
    pos = 0
    for d in dims:
        blocks.append(from_coordinates(x[pos:pos + d * d], d))
        pos += d * d
    cert = Certificate("covariant", tuple(blocks), tuple(label for label, _ in cosets))
    cert = cert.scaled(1.0 / cert.norm)
    report.certificate = cert
    report.constraint_residual = max(
        float(np.linalg.norm(W.conj().T @ A @ W, 2))
        for A, (_, Ws) in zip(cert.blocks, cosets) for W in Ws
    )
    return report


def naimark_dilation(
    M: CovariantPOVM,
    section: Optional[TransversalData] = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> NaimarkDilation:
    """Minimal dilation of M for a section of G/H (default: the lexicographic one)."""
    spec = M.spectrum
    outcomes = spec.outcomes
    section = outcomes if section is None else section
    if section.subgroup != spec.subgroup or len(section) != len(outcomes):
        raise InvalidInputError("section does not belong to the observable's outcome space")
    for k, rep in enumerate(section.representatives):
        if outcomes.index_of(rep) != k:
            raise InvalidInputError(f"section representative {rep} lies outside coset {k}")
    W = isometries_from_gram(extract_gram(M, tol), tol)
    S = W.stacked()
    scale = 1.0 / math.sqrt(len(outcomes))
    blocks = np.array([scale * S * np.conj(phases(spec, rep))[None, :] for rep in section.representatives])
    return NaimarkDilation(spec, section, W, blocks)


def _attach_witnesses(report: ExtremalityReport, M: CovariantPOVM, tol: Tolerances) -> ExtremalityReport:
    plus, minus = witnesses_from_certificate(M, report.certificate, tol)
    report.witnesses = (plus, minus)
    report.reconstruction_residual = distance(mix(0.5, plus, minus), M)
    report.witness_validity = (validate_povm(plus, tol), validate_povm(minus, tol))
    return report


def covariant_extreme_test(
    M: CovariantPOVM,
    tol: Tolerances = DEFAULT_TOLERANCES,
    with_witnesses: bool = True,
) -> ExtremalityReport:
    """Extremality within the covariant observables."""
    _require_covariant(M, tol)
    gram = extract_gram(M, tol)
    W = isometries_from_gram(gram, tol)
    report = covariant_nullspace_report(_coset_factors(gram, W), tol)
    logger.info("covariant test: %s (perturbation dim %d)", report.verdict.value, report.perturbation_dim)
    if report.certificate is not None and with_witnesses:
        _attach_witnesses(report, M, tol)
    return report


def global_extreme_test(
    M: CovariantPOVM,
    tol: Tolerances = DEFAULT_TOLERANCES,
    section: Optional[TransversalData] = None,
    with_witnesses: bool = True,
) -> ExtremalityReport:
    """Extremality within all observables on the same outcome space."""
    _require_covariant(M, tol)
    dil = naimark_dilation(M, section, tol)
    m = dil.ambient_dim
    basis = hermitian_basis(m)
    K = np.hstack([realify(_compressions(J, basis)) for J in dil.blocks])
    null = constraint_nullspace(K, tol)
    report = ExtremalityReport(
        test="global",
        verdict=Verdict.EXTREME if null.dim == 0 else Verdict.NOT_EXTREME,
        perturbation_dim=null.dim,
        singular_values=null.singular_values,
        num_unknowns=null.num_unknowns,
        num_constraints=null.num_constraints,
    )
    if null.dim > 0:
        x = _smallest_vector(null).reshape(len(dil.blocks), m * m)
        cert = Certificate(
            "global",
            tuple(from_coordinates(row, m) for row in x),
            tuple(M.outcomes.labels()),
            dil.section,
        )
        report.certificate = cert.scaled(1.0 / cert.norm)
        report.constraint_residual = float(np.linalg.norm(dil.compress(report.certificate.blocks), 2))
        if with_witnesses:
            _attach_witnesses(report, M, tol)
    logger.info("global test: %s (perturbation dim %d)", report.verdict.value, report.perturbation_dim)
    return report


def _residual_bound(tol: Tolerances, size: int) -> float:
    return max(tol.eq_tol, tol.rank_tol) * max(1.0, float(size))


def _check_certificate_blocks(cert: Certificate, shapes: Sequence[Tuple[int, int]], tol: Tolerances):
    if len(cert.blocks) != len(shapes):
        raise InvalidCertificateError(f"certificate has {len(cert.blocks)} blocks, expected {len(shapes)}")
    blocks = []
    for B, shape in zip(cert.blocks, shapes):
        B = np.asarray(B, dtype=complex)
        if B.shape != shape:
            raise InvalidCertificateError(f"certificate block has shape {B.shape}, expected {shape}")
        if np.max(np.abs(B - B.conj().T), initial=0.0) > tol.eq_tol:
            raise InvalidCertificateError("certificate block is not Hermitian")
        blocks.append(0.5 * (B + B.conj().T))
    norm = max((float(np.linalg.norm(B, 2)) for B in blocks), default=0.0)
    if norm > 1.0:
        blocks = [B / norm for B in blocks]
    return blocks


def witnesses_from_certificate(
    M: CovariantPOVM,
    cert: Certificate,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> Tuple[CovariantPOVM, CovariantPOVM]:
    """Witness pair M+ / M- with midpoint M; certificates of norm above one are rescaled."""
    if cert.kind == "covariant":
        gram = extract_gram(M, tol)
        cosets = _coset_factors(gram, isometries_from_gram(gram, tol))
        shapes = [(Ws[0].shape[0],) * 2 for _, Ws in cosets]
        blocks = _check_certificate_blocks(cert, shapes, tol)
        residual = max(
            (float(np.linalg.norm(W.conj().T @ A @ W, 2)) for A, (_, Ws) in zip(blocks, cosets) for W in Ws),
            default=0.0,
        )
        if residual > _residual_bound(tol, sum(s[0] for s in shapes)):
            raise InvalidCertificateError(f"certificate violates its constraints (residual {residual:.3e})")
        pair = []
        for sign in (1.0, -1.0):
            new_blocks = []
            for A, (_, Ws) in zip(blocks, cosets):
                V = np.hstack(Ws)
                new_blocks.append(V.conj().T @ (np.eye(A.shape[0]) + sign * A) @ V)
            pair.append(build_from_gram(make_gram_structure(M.spectrum, new_blocks, tol), tol))
        return pair[0], pair[1]

    if cert.kind == "global":
        dil = naimark_dilation(M, cert.section, tol)
        m = dil.ambient_dim
        blocks = _check_certificate_blocks(cert, [(m, m)] * len(dil.blocks), tol)
        residual = float(np.linalg.norm(dil.compress(blocks), 2))
        if residual > _residual_bound(tol, m * len(dil.blocks)):
            raise InvalidCertificateError(f"certificate violates its constraints (residual {residual:.3e})")
        pair = []
        for sign in (1.0, -1.0):
            effects = np.array([
                J.conj().T @ (np.eye(m) + sign * D) @ J for J, D in zip(dil.blocks, blocks)
            ])
            W = CovariantPOVM(M.spectrum, effects)
            validity = validate_povm(W, tol)
            if not validity.passed:
                raise NumericalInconsistencyError(
                    f"global witness is not an observable (min eig {validity.min_eigenvalue:.3e})"
                )
            pair.append(W)
        return pair[0], pair[1]

    raise InvalidCertificateError(f"unknown certificate kind {cert.kind!r}")


def rank_of(M: CovariantPOVM, tol: Tolerances = DEFAULT_TOLERANCES) -> int:
    """Rank of the Gram structure of M, which is the minimal dilation dimension."""
    return extract_gram(M, tol).rank


def rank1_admissible(spec: Spectrum) -> bool:
    """Spectrum inside one dual coset with every multiplicity one."""
    return len(coset_blocks(spec)) == 1 and all(n == 1 for _, n in spec.entries)


def _same_character_mask(spec: Spectrum) -> np.ndarray:
    labels = np.array([spec.offsets[g] for g in spec.basis_characters()])
    return labels[:, None] == labels[None, :]


def _eigh(X: np.ndarray, what: str) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return scipy.linalg.eigh(X)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"eigendecomposition of {what} failed: {e}") from e


def _tangent_directions(spec: Spectrum, gram: GramStructure, tol: Tolerances) -> np.ndarray:
    """Hermitian X supported on the Gram range, coset-masked, zero on same-character blocks."""
    d = spec.dim
    frames = []
    for block, B in zip(coset_blocks(spec), gram.blocks):
        eig, vecs = _eigh(B, f"Gram block {block.coset}")
        Q = np.zeros((d, 0), dtype=complex)
        keep = eig > tol.rank_tol * max(eig[-1], 1.0)
        if keep.any():
            Q = np.zeros((d, int(keep.sum())), dtype=complex)
            Q[np.array(block.indices), :] = vecs[:, keep]
        frames.append(Q)
    candidates = []
    for Q in frames:
        r = Q.shape[1]
        for E in hermitian_basis(r):
            candidates.append(Q @ E @ Q.conj().T)
    if not candidates:
        return np.zeros((0, d, d), dtype=complex)
    candidates = np.array(candidates)
    same = _same_character_mask(spec)
    K = realify(candidates[:, same].reshape(len(candidates), -1, 1))
    coeffs = scipy.linalg.null_space(K, rcond=tol.rank_tol)
    return np.tensordot(coeffs.T, candidates, axes=1)


def _max_step(effects: np.ndarray, delta: np.ndarray, tol: Tolerances) -> float:
    """Largest eps with effects +- eps * delta PSD, from eigenvalue bounds."""
    eps = np.inf
    for E, D in zip(effects, delta):
        lam, vecs = _eigh(E, "effect")
        cut = max(tol.psd_tol, tol.rank_tol * max(lam[-1], 0.0))
        keep = lam > cut
        kernel, support = vecs[:, ~keep], vecs[:, keep]
        if kernel.shape[1] and np.linalg.norm(kernel.conj().T @ D, 2) > tol.eq_tol:
            return 0.0
        if not support.shape[1]:
            continue
        scale = 1.0 / np.sqrt(lam[keep])
        R = scale[:, None] * (support.conj().T @ D @ support) * scale[None, :]
        spread = float(np.max(np.abs(scipy.linalg.eigvalsh(R))))
        if spread > 0:
            eps = min(eps, 1.0 / spread)
    return 0.0 if np.isinf(eps) else float(eps)


def midpoint_oracle(
    M: CovariantPOVM,
    trials: int = 100,
    seed: int = 0,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> Optional[MidpointDecomposition]:
    """Search random covariant directions for a nontrivial midpoint decomposition.

    Sound for detecting non-extreme observables; returning None only means no
    decomposition was found within the trial budget.
    """
    if trials < 0:
        raise InvalidInputError(f"trial count must be nonnegative, got {trials}")
    spec = M.spectrum
    rng = np.random.default_rng(seed)
    tangent = _tangent_directions(spec, extract_gram(M, tol), tol)
    free = coset_mask(spec) & ~_same_character_mask(spec)
    for trial in range(1, trials + 1):
        if len(tangent):
            X = np.tensordot(rng.standard_normal(len(tangent)), tangent, axes=1)
        else:
            Z = rng.standard_normal((spec.dim, spec.dim)) + 1j * rng.standard_normal((spec.dim, spec.dim))
            X = np.where(free, Z + Z.conj().T, 0.0)
        norm = np.linalg.norm(X, 2)
        if norm <= tol.eq_tol:
            continue
        delta = effects_from_gram(spec, X / norm)
        eps = _max_step(M.effects, delta, tol)
        if eps <= tol.psd_tol:
            continue
        step = 0.5 * eps
        plus = CovariantPOVM(spec, M.effects + step * delta)
        minus = CovariantPOVM(spec, M.effects - step * delta)
        if validate_povm(plus, tol).passed and validate_povm(minus, tol).passed:
            logger.info("oracle: decomposition at trial %d (eps %.3e)", trial, step)
            return MidpointDecomposition(trial, step, plus, minus)
    logger.info("oracle: no decomposition found in %d trials", trials)
    return None

"""Covariant observables: data model and validity checks.

Effects are stored dense in the character basis (flat spectrum order) as an
array of shape (|Omega|, d, d); outcome k is the coset of the k-th
representative of the spectrum's outcome transversal.
"""

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Optional

import numpy as np
import scipy.linalg

from covext.abelian import TransversalData, act
from covext.errors import InvalidInputError, NumericalInconsistencyError
from covext.repspace import Spectrum, coset_blocks, coset_mask, phases

logger = logging.getLogger(__name__)

TOLERANCE_ENV_VAR = "COVEXT_TOL"


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds.

    Attributes:
        psd_tol: most negative eigenvalue still accepted as PSD.
        eq_tol: norm bound for equality checks (normalization, covariance).
        rank_tol: singular values below rank_tol * sigma_max count as zero.
    """

    psd_tol: float = 1e-9
    eq_tol: float = 1e-9
    rank_tol: float = 1e-9

    def __post_init__(self):
        for name in ("psd_tol", "eq_tol", "rank_tol"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidInputError(f"{name} must be a nonnegative real, got {value!r}")

    @classmethod
    def from_env(cls, environ: Optional[Mapping[str, str]] = None) -> "Tolerances":
        """Read COVEXT_TOL: one float for all fields, or "psd=..,eq=..,rank=..."."""
        environ = os.environ if environ is None else environ
        raw = environ.get(TOLERANCE_ENV_VAR, "").strip()
        if not raw:
            return cls()
        return cls.parse(raw)

    @classmethod
    def parse(cls, raw: str) -> "Tolerances":
        if "=" not in raw:
            value = _parse_float(raw, raw)
            return cls(value, value, value)
        values = {}
        for part in raw.split(","):
            key, _, val = part.partition("=")
            key = key.strip().lower()
            if key not in ("psd", "eq", "rank"):
                raise InvalidInputError(f"unknown tolerance field {key!r} in {raw!r}")
            values[f"{key}_tol"] = _parse_float(val, raw)
        return cls(**values)

    def merged(self, overrides: Optional[Mapping[str, float]]) -> "Tolerances":
        if not overrides:
            return self
        unknown = set(overrides) - {"psd_tol", "eq_tol", "rank_tol"}
        if unknown:
            raise InvalidInputError(f"unknown tolerance fields {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def to_dict(self) -> Dict[str, float]:
        return {"psd_tol": self.psd_tol, "eq_tol": self.eq_tol, "rank_tol": self.rank_tol}


def _parse_float(text: str, raw: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InvalidInputError(f"malformed tolerance specification {raw!r}") from None


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True, eq=False)
class CovariantPOVM:
    """Effects M(omega) for every outcome omega in G/H.

    Construction only checks shapes; positivity, normalization and covariance
    are reported by validate_povm and check_covariance so that corrupted
    inputs stay inspectable.
    """

    spectrum: Spectrum
    effects: np.ndarray
    provenance: Optional[Any] = field(default=None, repr=False)

    def __post_init__(self):
        effects = np.asarray(self.effects, dtype=complex)
        expected = (len(self.spectrum.outcomes), self.spectrum.dim, self.spectrum.dim)
        if effects.shape != expected:
            raise InvalidInputError(f"effects have shape {effects.shape}, expected {expected}")
        object.__setattr__(self, "effects", effects)

    @property
    def outcomes(self) -> TransversalData:
        return self.spectrum.outcomes

    @property
    def num_outcomes(self) -> int:
        return self.effects.shape[0]

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    def effect(self, omega: int) -> np.ndarray:
        return self.effects[omega]


@dataclass
class ValidityReport:
    """Positivity and normalization of a family of effects.

    Attributes:
        is_positive: every effect has min eigenvalue >= -psd_tol.
        is_normalized: the effects sum to I within eq_tol.
        min_eigenvalue: smallest eigenvalue over all effects.
        normalization_residual: operator norm of sum(effects) - I.
    """

    is_positive: bool
    is_normalized: bool
    min_eigenvalue: float
    normalization_residual: float

    @property
    def passed(self) -> bool:
        return self.is_positive and self.is_normalized

    def to_dict(self) -> Dict[str, Any]:
        return {
            "is_positive": self.is_positive,
            "is_normalized": self.is_normalized,
            "min_eigenvalue": self.min_eigenvalue,
            "normalization_residual": self.normalization_residual,
            "passed": self.passed,
        }


@dataclass
class CovarianceReport:
    """U(g) M(omega) U(g)* = M(g.omega) checked on every pair.

    Attributes:
        is_covariant: both residuals within eq_tol.
        residual: max over g, omega of the covariance defect.
        off_coset_residual: largest effect entry coupling different dual cosets.
    """

    is_covariant: bool
    residual: float
    off_coset_residual: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "is_covariant": self.is_covariant,
            "residual": self.residual,
            "off_coset_residual": self.off_coset_residual,
        }


def same_space(a: Spectrum, b: Spectrum) -> bool:
    return a is b or (
        a.group == b.group and a.subgroup == b.subgroup and a.entries == b.entries
    )


def _hermitian_part(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + np.conj(np.swapaxes(X, -1, -2)))


def validate_effects(effects: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES) -> ValidityReport:
    """Positivity and normalization of a raw effect stack (|Omega|, d, d)."""
    effects = np.asarray(effects, dtype=complex)
    if effects.ndim != 3 or effects.shape[1] != effects.shape[2]:
        raise InvalidInputError(f"effect stack must have shape (n, d, d), got {effects.shape}")
    min_eig = min(float(np.linalg.eigvalsh(_hermitian_part(E))[0]) for E in effects)
    hermiticity = float(np.max(np.abs(effects - np.conj(np.swapaxes(effects, 1, 2)))))
    total = effects.sum(axis=0)
    norm_residual = float(np.linalg.norm(total - np.eye(effects.shape[1]), 2))
    return ValidityReport(
        is_positive=min_eig >= -tol.psd_tol and hermiticity <= tol.eq_tol,
        is_normalized=norm_residual <= tol.eq_tol,
        min_eigenvalue=min_eig,
        normalization_residual=norm_residual,
    )


def validate_povm(M: CovariantPOVM, tol: Tolerances = DEFAULT_TOLERANCES) -> ValidityReport:
    return validate_effects(M.effects, tol)


def check_covariance(M: CovariantPOVM, tol: Tolerances = DEFAULT_TOLERANCES) -> CovarianceReport:
    """max over g, omega of ||U(g) M(omega) U(g)* - M(g.omega)||, plus the coset block test."""
    spec = M.spectrum
    outcomes = spec.outcomes
    residual = 0.0
    for g in spec.group.elements():
        u = phases(spec, g)
        conj_pair = u[:, None] * np.conj(u)[None, :]
        for omega in range(M.num_outcomes):
            moved = conj_pair * M.effects[omega]
            diff = moved - M.effects[act(outcomes, g, omega)]
            residual = max(residual, float(np.linalg.norm(diff, 2)))
    mask = coset_mask(spec)
    off = float(np.max(np.abs(M.effects[:, ~mask]))) if (~mask).any() else 0.0
    return CovarianceReport(
        is_covariant=residual <= tol.eq_tol and off <= tol.eq_tol,
        residual=residual,
        off_coset_residual=off,
    )


def is_pvm(M: CovariantPOVM, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """Every effect idempotent; cross-checked against the isometry criterion when W is known."""
    sharp = all(
        np.linalg.norm(E @ E - E, 2) <= tol.eq_tol for E in M.effects
    )
    W = M.provenance
    if W is not None:
        by_isometries = _isometry_pvm_criterion(M.spectrum, W, tol)
        if by_isometries != sharp:
            raise NumericalInconsistencyError(
                f"idempotence says PVM={sharp} but the isometry field says PVM={by_isometries}"
            )
    return sharp


def _isometry_pvm_criterion(spec: Spectrum, W, tol: Tolerances) -> bool:
    """W(g2)* W(g1) unitary for every pair inside each (fully occupied) dual coset."""
    coset_size = len(spec.outcomes)  # |H-perp| = |G/H|
    for block in coset_blocks(spec):
        if len(block.characters) != coset_size:
            return False
        for g1 in block.characters:
            for g2 in block.characters:
                X = W.blocks[g2].conj().T @ W.blocks[g1]
                if X.shape[0] != X.shape[1]:
                    return False
                if np.linalg.norm(X.conj().T @ X - np.eye(X.shape[0]), 2) > tol.eq_tol:
                    return False
    return True


def mix(t: float, M1: CovariantPOVM, M2: CovariantPOVM) -> CovariantPOVM:
    """t M1 + (1 - t) M2."""
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError(f"mixing weight must lie in [0, 1], got {t}")
    if not same_space(M1.spectrum, M2.spectrum):
        raise InvalidInputError("cannot mix observables on different spaces")
    return CovariantPOVM(M1.spectrum, t * M1.effects + (1.0 - t) * M2.effects)


def apply_to_state(M: CovariantPOVM, rho: np.ndarray, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Outcome distribution p(omega) = tr(rho M(omega))."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (M.dim, M.dim):
        raise InvalidInputError(f"state has shape {rho.shape}, expected {(M.dim, M.dim)}")
    if np.max(np.abs(rho - rho.conj().T)) > tol.eq_tol:
        raise InvalidInputError("state is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol.eq_tol:
        raise InvalidInputError(f"state has trace {np.trace(rho).real:.6g}, expected 1")
    if scipy.linalg.eigvalsh(rho)[0] < -tol.psd_tol:
        raise InvalidInputError("state is not positive semidefinite")
    probs = np.einsum("ij,kji->k", rho, M.effects).real
    return probs


def distance(M1: CovariantPOVM, M2: CovariantPOVM) -> float:
    """max over outcomes of the operator norm of the effect difference."""
    if not same_space(M1.spectrum, M2.spectrum):
        raise InvalidInputError("cannot compare observables on different spaces")
    return max(float(np.linalg.norm(D, 2)) for D in M1.effects - M2.effects)

"""Worked observables: position, position difference, phase moments, Laguerre checks.

Position vectors |x> of Z_N (or Z_N x Z_N) have character amplitudes
<x, gamma> / sqrt(|G|), i.e. the rows of dft_matrix; see position_basis().
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.special

from covext.abelian import GroupSpec, dft_matrix, make_group, subgroup_closure
from covext.construct import (
    ProbabilityVector,
    build_from_gram,
    build_from_isometries,
    canonical_field,
    convolve,
    invariant_from_rho,
    isometries_from_gram,
    make_gram_structure,
    make_probability_vector,
    point_mass,
)
from covext.errors import InvalidInputError, NumericalFailureError, NumericalInconsistencyError
from covext.extremality import (
    ExtremalityReport,
    Verdict,
    covariant_extreme_test,
    covariant_nullspace_report,
)
from covext.povm import DEFAULT_TOLERANCES, CovariantPOVM, Tolerances, is_pvm
from covext.repspace import full_spectrum, make_spectrum

logger = logging.getLogger(__name__)


def _positive_int(name: str, value, minimum: int) -> int:
    if isinstance(value, bool) or int(value) != value or int(value) < minimum:
        raise InvalidInputError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def position_basis(G: GroupSpec) -> np.ndarray:
    """Columns are the position vectors |x>, x in G.elements(), in character coordinates."""
    return dft_matrix(G).T


def canonical_position(N: int, tol: Tolerances = DEFAULT_TOLERANCES) -> CovariantPOVM:
    """Sharp position observable on Z_N: rank-one projections onto position vectors."""
    N = _positive_int("N", N, 1)
    G = make_group([N])
    spec = full_spectrum(G, subgroup_closure(G, []))
    return build_from_isometries(canonical_field(spec), tol)


def qubit_cyclic(N: int, tol: Tolerances = DEFAULT_TOLERANCES) -> CovariantPOVM:
    """Two characters {0, 1} of Z_N with a common isometry; rank one, never sharp."""
    N = _positive_int("N", N, 3)
    G = make_group([N])
    spec = make_spectrum(G, subgroup_closure(G, []), [([0], 1), ([1], 1)])
    return build_from_isometries(canonical_field(spec), tol)


def _difference_space(N: int):
    G = make_group([N, N])
    H = subgroup_closure(G, [[1, 1]])
    return full_spectrum(G, H)


def position_difference(
    N: int,
    noise: Optional[ProbabilityVector] = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CovariantPOVM:
    """Difference z - w on Z_N x Z_N; outcome k is the coset of (0, k).

    noise=None gives the sharp observable; otherwise it is smeared by convolution.
    """
    N = _positive_int("N", N, 2)
    spec = _difference_space(N)
    sharp = build_from_isometries(canonical_field(spec), tol)
    if noise is None:
        return sharp
    return convolve(make_probability_vector(noise.weights, tol), sharp)


def position_difference_from_kernel(
    N: int,
    alpha: np.ndarray,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CovariantPOVM:
    """Covariant difference observable from kernels alpha[w][p1, p2].

    alpha[w] couples the characters (p, w - p) of dual coset w; each kernel must
    be PSD with unit diagonal.
    """
    N = _positive_int("N", N, 2)
    alpha = np.asarray(alpha, dtype=complex)
    if alpha.shape != (N, N, N):
        raise InvalidInputError(f"kernel array must have shape {(N, N, N)}, got {alpha.shape}")
    spec = _difference_space(N)
    gram = make_gram_structure(spec, list(alpha), tol)
    return build_from_isometries(isometries_from_gram(gram, tol), tol)


@dataclass(frozen=True, eq=False)
class MomentObservable:
    """Circle-valued observable fixed by its indices Z and correlations C[k, l] = <xi_k, xi_l>."""

    indices: Tuple[int, ...]
    correlations: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.indices)

    def differences(self) -> np.ndarray:
        Z = np.array(self.indices)
        return Z[:, None] - Z[None, :]


@dataclass(frozen=True)
class FreeModes:
    """Fourier modes left unconstrained: `modes` inside the window, every |m| >= free_beyond."""

    modes: Tuple[int, ...]
    free_beyond: int

    def __bool__(self) -> bool:
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {"modes": list(self.modes), "free_beyond": self.free_beyond}


def moment_phase(
    indices: Sequence[int],
    correlations,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> MomentObservable:
    Z = [int(z) for z in indices]
    if not Z:
        raise InvalidInputError("index set is empty")
    if len(set(Z)) != len(Z):
        raise InvalidInputError(f"index set {Z} has repeated entries")
    C = np.atleast_2d(np.asarray(correlations, dtype=complex))
    d = len(Z)
    if C.shape != (d, d):
        raise InvalidInputError(f"correlation matrix has shape {C.shape}, expected {(d, d)}")
    if np.max(np.abs(C - C.conj().T)) > tol.eq_tol:
        raise InvalidInputError("correlation matrix is not Hermitian")
    if np.max(np.abs(np.diag(C) - 1.0)) > tol.eq_tol:
        raise InvalidInputError("correlation matrix needs a unit diagonal")
    lowest = float(scipy.linalg.eigvalsh(0.5 * (C + C.conj().T))[0])
    if lowest < -tol.psd_tol:
        raise InvalidInputError(f"correlation matrix is not PSD (eigenvalue {lowest:.3e})")
    order = np.argsort(Z)
    C = C[np.ix_(order, order)]
    return MomentObservable(tuple(sorted(Z)), 0.5 * (C + C.conj().T))


def canonical_phase(d: int) -> MomentObservable:
    """Truncated canonical phase: Z = {0..d-1}, all correlations one."""
    d = _positive_int("d", d, 1)
    return moment_phase(range(d), np.ones((d, d)))


def arc_moment(m, theta1: float, theta2: float):
    """(1/2pi) * integral of exp(i m theta) over [theta1, theta2], vectorized in m."""
    m = np.asarray(m)
    out = np.empty(m.shape, dtype=complex)
    zero = m == 0
    out[zero] = (theta2 - theta1) / (2 * math.pi)
    k = m[~zero]
    out[~zero] = (np.exp(1j * k * theta2) - np.exp(1j * k * theta1)) / (2j * math.pi * k)
    return out


def effects_on_arc(obs: MomentObservable, theta1: float, theta2: float) -> np.ndarray:
    """Effect of the arc [theta1, theta2]."""
    span = theta2 - theta1
    if span < 0 or span > 2 * math.pi + 1e-12:
        raise InvalidInputError(f"arc [{theta1}, {theta2}] must have length in [0, 2pi]")
    return obs.correlations * arc_moment(obs.differences(), theta1, theta2)


def modulated_effects_on_arc(obs: MomentObservable, theta1: float, theta2: float, mode: int, sign: float) -> np.ndarray:
    """Arc effect of the observable with outcome density 1 + sign * cos(mode * theta)."""
    diff = obs.differences()
    moments = arc_moment(diff, theta1, theta2) + 0.5 * sign * (
        arc_moment(diff + mode, theta1, theta2) + arc_moment(diff - mode, theta1, theta2)
    )
    return obs.correlations * moments


def arc_partition(obs: MomentObservable, k: int) -> List[np.ndarray]:
    """Effects of k equal arcs starting at angle 0."""
    k = _positive_int("k", k, 1)
    edges = np.linspace(0.0, 2 * math.pi, k + 1)
    return [effects_on_arc(obs, a, b) for a, b in zip(edges[:-1], edges[1:])]


def free_mode_witnesses(
    obs: MomentObservable,
    k: int,
    mode: Optional[int] = None,
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Two k-arc observables whose midpoint is arc_partition(obs, k).

    The outcome density is reweighted by 1 +- cos(mode * theta). A mode outside
    Z - Z leaves every moment the correlations fix untouched, so both sides stay
    normalized and positive.

    Args:
        obs: phase observable fixed by its moments.
        k: number of equal arcs.
        mode: free Fourier mode; defaults to the smallest positive one.

    Returns:
        (plus, minus) lists of k effects each.

    Raises:
        InvalidInputError: mode is zero or lies in Z - Z.
    """
    k = _positive_int("k", k, 1)
    if mode is None:
        mode = min(m for m in free_modes(obs).modes if m > 0)
    mode = int(mode)
    used = {int(x) for x in obs.differences().ravel()}
    if mode in used:
        raise InvalidInputError(f"mode {mode} is fixed by the indices {obs.indices}")
    edges = np.linspace(0.0, 2 * math.pi, k + 1)
    arcs = list(zip(edges[:-1], edges[1:]))
    logger.debug("free mode witnesses: mode %d over %d arcs", mode, k)
    return tuple(
        [modulated_effects_on_arc(obs, a, b, mode, sign) for a, b in arcs] for sign in (1.0, -1.0)
    )


def arc_observable(obs: MomentObservable, k: int, tol: Tolerances = DEFAULT_TOLERANCES) -> CovariantPOVM:
    """The k-arc coarse graining as a covariant observable of Z_k.

    Index z acts as the character z - min(Z), so the indices must span fewer than k steps.
    """
    k = _positive_int("k", k, 1)
    low = obs.indices[0]
    if obs.indices[-1] - low >= k:
        raise InvalidInputError(f"indices {obs.indices} do not fit into Z_{k}")
    G = make_group([k])
    spec = make_spectrum(G, subgroup_closure(G, []), [([z - low], 1) for z in obs.indices])
    gram = obs.correlations * k * arc_moment(obs.differences(), 0.0, 2 * math.pi / k)
    return build_from_gram(make_gram_structure(spec, [gram], tol), tol)


def _moment_factors(obs: MomentObservable, tol: Tolerances) -> np.ndarray:
    try:
        eig, vecs = scipy.linalg.eigh(obs.correlations)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"eigendecomposition of the correlation matrix failed: {e}") from e
    eig, vecs = eig[::-1], vecs[:, ::-1]
    keep = eig > tol.rank_tol * max(eig[0], 1.0)
    return np.sqrt(eig[keep])[:, None] * vecs[:, keep].conj().T


def moment_covariant_extreme(obs: MomentObservable, tol: Tolerances = DEFAULT_TOLERANCES) -> ExtremalityReport:
    """Covariant extremality: no nonzero Hermitian A with <xi_k, A xi_k> = 0 for all k."""
    V = _moment_factors(obs, tol)
    cosets = [("circle", [V[:, k:k + 1] for k in range(obs.dim)])]
    report = covariant_nullspace_report(cosets, tol, test="moment-covariant")
    logger.info("moment covariant test: %s", report.verdict.value)
    return report


def moment_witnesses(obs: MomentObservable, report: ExtremalityReport,
                     tol: Tolerances = DEFAULT_TOLERANCES) -> Tuple[MomentObservable, MomentObservable]:
    """Correlation matrices V*(I +- A)V from a moment certificate."""
    if report.certificate is None:
        return obs, obs
    V = _moment_factors(obs, tol)
    (A,) = report.certificate.blocks
    I = np.eye(A.shape[0])
    return tuple(
        moment_phase(obs.indices, V.conj().T @ (I + s * A) @ V, tol) for s in (1.0, -1.0)
    )


def free_modes(obs: MomentObservable) -> FreeModes:
    """Modes m with |m| <= span + 1 outside Z - Z; every larger mode is free as well."""
    span = obs.indices[-1] - obs.indices[0]
    used = set(int(x) for x in obs.differences().ravel())
    window = tuple(m for m in range(-(span + 1), span + 2) if m not in used)
    return FreeModes(window, span + 1)


def invariant_extreme_classify(rho: ProbabilityVector, tol: Tolerances = DEFAULT_TOLERANCES) -> Verdict:
    """Extreme among translation-covariant observables of Z_N iff rho is a point mass."""
    rho = make_probability_vector(rho.weights, tol)
    N = len(rho)
    M = invariant_from_rho(N, rho, tol)
    if rho.weights.max() >= 1.0 - tol.eq_tol:
        if not is_pvm(M, tol):
            raise NumericalInconsistencyError("point mass did not produce a sharp observable")
        return Verdict.EXTREME
    if covariant_extreme_test(M, tol, with_witnesses=False).is_extreme:
        raise NumericalInconsistencyError("smeared observable passed the covariant extremality test")
    return Verdict.NOT_EXTREME


def laguerre(n: int, alpha: float, x) -> np.ndarray:
    """Generalized Laguerre polynomial by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev
    cur = 1.0 + alpha - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur


def laguerre_closed_form(m: int, n: int, u) -> np.ndarray:
    """Closed form of the correlation integral of L_m e^{-x/2} and L_n e^{-x/2}.

    u >= 0: L^{-1}_{m-n}(u) e^{-u/2} when m >= n, zero otherwise;
    u < 0:  L^{-1}_{n-m}(-u) e^{u/2} when n >= m, zero otherwise.
    """
    u = np.asarray(u, dtype=float)
    right = laguerre(m - n, -1.0, u) * np.exp(-u / 2) if m >= n else np.zeros_like(u)
    left = laguerre(n - m, -1.0, -u) * np.exp(u / 2) if n >= m else np.zeros_like(u)
    return np.where(u >= 0, right, left)


def laguerre_addition_error(n: int, x, y) -> float:
    """max |L_n(x + y) - sum_k L_k(x) L^{-1}_{n-k}(y)|."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    total = sum(laguerre(k, 0.0, x) * laguerre(n - k, -1.0, y) for k in range(n + 1))
    return float(np.max(np.abs(laguerre(n, 0.0, x + y) - total)))


def _simpson_values(m: int, n: int, u: np.ndarray, step: float) -> np.ndarray:
    """Composite Simpson for every u at once.

    With t = max(-u, 0) + s the integrand is L_m(a + s) L_n(b + s) e^{-(a + b)/2 - s},
    a = max(u, 0), b = max(-u, 0), so all shifts share one grid in s.
    """
    # e^{-s} s^{m+n} is below 1e-15 of its peak well before this cutoff
    length = 40.0 + 6.0 * (m + n)
    points = int(math.ceil(length / step)) | 1
    s = np.linspace(0.0, length, points)
    a = np.maximum(u, 0.0)[:, None]
    b = np.maximum(-u, 0.0)[:, None]
    integrand = laguerre(m, 0.0, a + s) * laguerre(n, 0.0, b + s) * np.exp(-0.5 * (a + b) - s)
    return scipy.integrate.simpson(integrand, x=s, axis=-1)


def _gauss_laguerre_value(m: int, n: int, u: float) -> float:
    nodes, weights = scipy.special.roots_laguerre((m + n) // 2 + 2)
    if u >= 0:
        values = laguerre(m, 0.0, u + nodes) * laguerre(n, 0.0, nodes)
        return float(np.dot(weights, values) * math.exp(-u / 2))
    values = laguerre(m, 0.0, nodes) * laguerre(n, 0.0, nodes - u)
    return float(np.dot(weights, values) * math.exp(u / 2))


def laguerre_identity_error(
    m: int,
    n: int,
    u_grid,
    quadrature_step: float = 0.01,
    method: str = "simpson",
) -> float:
    """max |quadrature - closed form| over u_grid for the integral of f(u + t) g(t), t >= 0."""
    m = _positive_int("m", m, 0)
    n = _positive_int("n", n, 0)
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    if method == "simpson":
        if quadrature_step <= 0:
            raise InvalidInputError(f"quadrature step must be positive, got {quadrature_step}")
        values = _simpson_values(m, n, u_grid, quadrature_step)
    elif method == "gauss-laguerre":
        values = np.array([_gauss_laguerre_value(m, n, u) for u in u_grid])
    else:
        raise InvalidInputError(f"unknown quadrature method {method!r}")
    return float(np.max(np.abs(values - laguerre_closed_form(m, n, u_grid))))


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    default: Any
    help: str


@dataclass(frozen=True)
class Preset:
    name: str
    summary: str
    params: Tuple[ParamSpec, ...]
    builder: Callable[..., CovariantPOVM] = field(repr=False)

    def resolve(self, given: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
        given = dict(given or {})
        known = {p.name for p in self.params}
        unknown = sorted(set(given) - known)
        if unknown:
            raise InvalidInputError(f"preset {self.name} has no parameters {unknown}")
        return {p.name: given.get(p.name, p.default) for p in self.params}

    def build(self, given: Optional[Mapping[str, Any]] = None, tol: Tolerances = DEFAULT_TOLERANCES) -> CovariantPOVM:
        return self.builder(tol=tol, **self.resolve(given))

    def describe(self) -> str:
        lines = [f"{self.name}: {self.summary}"]
        for p in self.params:
            lines.append(f"  {p.name} ({p.kind}, default {p.default!r}): {p.help}")
        return "\n".join(lines)


def _weights_or_point(N: int, weights) -> ProbabilityVector:
    return point_mass(N, 0) if weights is None else ProbabilityVector(np.asarray(weights, dtype=float))


def _build_position_difference(N, noise, tol):
    return position_difference(N, _weights_or_point(N, noise), tol)


def _build_moment_phase(d, arcs, correlations, tol):
    if correlations == "ones":
        obs = canonical_phase(d)
    elif correlations == "identity":
        obs = moment_phase(range(d), np.eye(d), tol)
    else:
        obs = moment_phase(range(d), complex_matrix(correlations), tol)
    return arc_observable(obs, arcs, tol)


def complex_matrix(rows) -> np.ndarray:
    """Entries given as numbers or [re, im] pairs."""
    try:
        return np.array([[complex(*z) if isinstance(z, (list, tuple)) else complex(z) for z in row] for row in rows])
    except (TypeError, ValueError):
        raise InvalidInputError("matrix entries must be numbers or [re, im] pairs") from None


def _build_invariant_position(N, rho, tol):
    return invariant_from_rho(N, _weights_or_point(N, rho), tol)


PRESETS: Dict[str, Preset] = {
    p.name: p for p in (
        Preset(
            "canonical-position",
            "sharp position observable on Z_N",
            (ParamSpec("N", "int >= 1", 8, "group order"),),
            lambda N, tol: canonical_position(N, tol),
        ),
        Preset(
            "qubit-cyclic",
            "characters {0, 1} of Z_N with a common isometry (rank one)",
            (ParamSpec("N", "int >= 3", 4, "group order"),),
            lambda N, tol: qubit_cyclic(N, tol),
        ),
        Preset(
            "position-difference",
            "z - w on Z_N x Z_N, optionally smeared by a noise distribution",
            (
                ParamSpec("N", "int >= 2", 4, "cyclic factor order"),
                ParamSpec("noise", "N weights", None, "noise distribution; default point mass at 0"),
            ),
            _build_position_difference,
        ),
        Preset(
            "moment-phase",
            "phase observable with indices 0..d-1, coarse grained to equal arcs",
            (
                ParamSpec("d", "int >= 1", 3, "number of indices"),
                ParamSpec("arcs", "int >= d", 8, "number of equal arcs"),
                ParamSpec("correlations", "'ones' | 'identity' | d x d matrix", "ones", "correlation matrix"),
            ),
            _build_moment_phase,
        ),
        Preset(
            "invariant-position",
            "translation-covariant observable of Z_N smeared by rho",
            (
                ParamSpec("N", "int >= 1", 8, "group order"),
                ParamSpec("rho", "N weights", None, "smearing distribution; default point mass at 0"),
            ),
            _build_invariant_position,
        ),
    )
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidInputError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None

"""
Spectral machinery of the phase operator F(M) = sum(arctan(lambda_i(M))).

Eigenvalues come from a cyclic Jacobi solver that is vectorized over a batch
of matrices, so the Dirichlet solver can evaluate the operator at every grid
node in one call. PhaseParams carries the constant-coefficient data (A, its
spectrum a, the phase limit g_inf and the decay exponent beta).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from lagrangian.errors import ConfigurationError, DomainError, InputError, InternalError
from utils.config import JACOBI_CONFIG, TOLERANCES

logger = logging.getLogger(__name__)

MIN_DIMENSION = 2
MAX_DIMENSION = 8

ArrayLike = Union["SymmetricMatrix", np.ndarray, Sequence[Sequence[float]]]


@dataclass(frozen=True, eq=False)
class SymmetricMatrix:
    """Real symmetric n x n matrix built from the upper triangle of its input."""

    entries: np.ndarray

    @classmethod
    def from_array(cls, values) -> "SymmetricMatrix":
        arr = np.array(values, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InputError(f"Expected a square matrix, got shape {arr.shape}")
        n = arr.shape[0]
        if not MIN_DIMENSION <= n <= MAX_DIMENSION:
            raise InputError(
                f"Dimension {n} outside supported range {MIN_DIMENSION}..{MAX_DIMENSION}"
            )
        upper = np.triu(arr)
        full = upper + np.triu(arr, 1).T
        full.setflags(write=False)
        return cls(full)

    @classmethod
    def identity(cls, n: int) -> "SymmetricMatrix":
        return cls.from_array(np.eye(n))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __neg__(self) -> "SymmetricMatrix":
        return SymmetricMatrix.from_array(-self.entries)

    def __add__(self, other: "SymmetricMatrix") -> "SymmetricMatrix":
        return SymmetricMatrix.from_array(self.entries + _as_array(other))

    def __sub__(self, other: "SymmetricMatrix") -> "SymmetricMatrix":
        return SymmetricMatrix.from_array(self.entries - _as_array(other))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues sorted ascending, with optional eigenvectors as columns."""

    values: np.ndarray
    vectors: Optional[np.ndarray] = field(default=None, compare=False)

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "Spectrum":
        arr = np.sort(np.asarray(list(values), dtype=float))
        if arr.ndim != 1 or arr.size == 0:
            raise InputError("Spectrum needs at least one value")
        if not np.all(np.isfinite(arr)):
            raise InputError(f"Spectrum has non-finite values: {arr}")
        arr.setflags(write=False)
        return cls(arr)

    @property
    def n(self) -> int:
        return self.values.size

    def __iter__(self):
        return iter(self.values.tolist())

    def __len__(self) -> int:
        return self.values.size


def _as_array(M: ArrayLike) -> np.ndarray:
    if isinstance(M, SymmetricMatrix):
        return M.entries
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InputError(f"Expected a square matrix, got shape {arr.shape}")
    return arr


def _as_values(a: Union[Spectrum, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(a, Spectrum):
        return a.values
    return np.sort(np.asarray(a, dtype=float))


def jacobi_eigen_batch(
    matrices: np.ndarray,
    want_vectors: bool = True,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Cyclic Jacobi eigen decomposition of a stack of symmetric matrices.

    Args:
        matrices (np.ndarray): Array of shape (N, n, n); only the upper triangle is read
        want_vectors (bool): Accumulate the rotations into eigenvectors

    Returns:
        tuple: (values of shape (N, n) sorted ascending, vectors of shape (N, n, n) or None)

    Raises:
        InputError: If any entry is non-finite
        InternalError: If some matrix is not diagonalized within the sweep limit
    """
    arr = np.asarray(matrices, dtype=float)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise InputError(f"Expected a (N, n, n) stack, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("Matrix has non-finite entries")
    n = arr.shape[1]
    upper = np.triu(arr)
    a = upper + np.transpose(np.triu(arr, 1), (0, 2, 1))
    batch = a.shape[0]
    v = np.broadcast_to(np.eye(n), a.shape).copy() if want_vectors else None

    norms = np.max(np.sum(np.abs(a), axis=2), axis=1) if batch else np.zeros(0)
    tol = JACOBI_CONFIG["relative_threshold"] * norms
    iu = np.triu_indices(n, 1)
    pairs = list(zip(*iu))

    for sweep in range(JACOBI_CONFIG["max_sweeps"] + 1):
        off = np.max(np.abs(a[:, iu[0], iu[1]]), axis=1) if pairs and batch else np.zeros(batch)
        if np.all(off <= tol):
            logger.debug(f"Jacobi converged after {sweep} sweeps for {batch} matrices")
            break
        if sweep == JACOBI_CONFIG["max_sweeps"]:
            raise InternalError(
                f"Jacobi did not converge in {JACOBI_CONFIG['max_sweeps']} sweeps; "
                f"worst off-diagonal {float(np.max(off - tol)):.3e} above threshold"
            )
        for p, q in pairs:
            apq = a[:, p, q]
            active = np.abs(apq) > tol
            if not np.any(active):
                continue
            safe = np.where(active, apq, 1.0)
            theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
            sgn = np.where(theta >= 0.0, 1.0, -1.0)
            with np.errstate(over="ignore"):
                t = sgn / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            c = np.where(active, 1.0 / np.sqrt(t * t + 1.0), 1.0)
            s = np.where(active, t * c, 0.0)
            cc, ss = c[:, None], s[:, None]

            col_p = a[:, :, p].copy()
            col_q = a[:, :, q].copy()
            a[:, :, p] = cc * col_p - ss * col_q
            a[:, :, q] = ss * col_p + cc * col_q
            row_p = a[:, p, :].copy()
            row_q = a[:, q, :].copy()
            a[:, p, :] = cc * row_p - ss * row_q
            a[:, q, :] = ss * row_p + cc * row_q
            a[:, p, q] = np.where(active, 0.0, a[:, p, q])
            a[:, q, p] = a[:, p, q]

            if v is not None:
                vp = v[:, :, p].copy()
                vq = v[:, :, q].copy()
                v[:, :, p] = cc * vp - ss * vq
                v[:, :, q] = ss * vp + cc * vq

    values = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(values, axis=1)
    values = np.take_along_axis(values, order, axis=1)
    if v is not None:
        v = np.take_along_axis(v, order[:, None, :], axis=2)
    return values, v


def eigen_sym(M: ArrayLike, vectors: bool = False) -> Spectrum:
    """
    Eigenvalues of a symmetric matrix, sorted ascending.

    Args:
        M: SymmetricMatrix or square array (upper triangle is used)
        vectors (bool): Also return orthonormal eigenvectors

    Returns:
        Spectrum: Sorted eigenvalues, with eigenvectors as columns when requested

    Raises:
        InputError: On non-finite entries
        InternalError: If the trace or reconstruction self-check fails
    """
    arr = _as_array(M)
    sym = np.triu(arr) + np.triu(arr, 1).T
    values, vecs = jacobi_eigen_batch(sym[None, :, :], want_vectors=vectors)
    values = values[0]
    scale = 1.0 + float(np.max(np.sum(np.abs(sym), axis=1)))

    if abs(float(np.sum(values)) - float(np.trace(sym))) > 1e-9 * scale:
        raise InternalError("Eigenvalue sum does not match the trace")
    if vecs is not None:
        q = vecs[0]
        recon = q @ np.diag(values) @ q.T
        if np.max(np.abs(recon - sym)) > 1e-10 * scale:
            raise InternalError("Eigen reconstruction residual above 1e-10")
        q.setflags(write=False)
        vecs = q
    values.setflags(write=False)
    return Spectrum(values, vecs)


def phase_values_batch(matrices: np.ndarray) -> np.ndarray:
    """F(M) for every matrix of an (N, n, n) stack."""
    values, _ = jacobi_eigen_batch(matrices, want_vectors=False)
    return np.sum(np.arctan(values), axis=1)


def phase_value(M: ArrayLike) -> float:
    """Sum of arctan of the eigenvalues."""
    return float(np.sum(np.arctan(eigen_sym(M).values)))


def phase_gradients_batch(matrices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Phase values and derivatives (I + M^2)^-1 for a stack of matrices.

    Returns:
        tuple: (values of shape (N,), gradients of shape (N, n, n))
    """
    arr = np.asarray(matrices, dtype=float)
    lam, q = jacobi_eigen_batch(arr, want_vectors=True)
    weights = 1.0 / (1.0 + lam * lam)
    grads = np.einsum("bik,bk,bjk->bij", q, weights, q)

    n = arr.shape[1]
    sym = np.triu(arr) + np.transpose(np.triu(arr, 1), (0, 2, 1))
    shifted = np.eye(n)[None, :, :] + np.einsum("bik,bkj->bij", sym, sym)
    residual = np.max(np.abs(np.einsum("bik,bkj->bij", shifted, grads) - np.eye(n)), axis=(1, 2))
    cond = (1.0 + np.max(lam * lam, axis=1)) if lam.size else np.zeros(0)
    limit = TOLERANCES["gradient_inverse"] * np.maximum(1.0, cond / 1e6)
    if np.any(residual > limit):
        worst = int(np.argmax(residual - limit))
        raise InternalError(
            f"Phase gradient inversion residual {residual[worst]:.3e} exceeds {limit[worst]:.1e}"
        )
    return np.sum(np.arctan(lam), axis=1), grads


def phase_gradient(M: ArrayLike) -> SymmetricMatrix:
    """Matrix derivative of phase_value at M, equal to (I + M^2)^-1."""
    arr = _as_array(M)
    _, grads = phase_gradients_batch(arr[None, :, :])
    return SymmetricMatrix.from_array(grads[0])


def supercritical_margin(params: Union["PhaseParams", int], g_value: float) -> float:
    """|g| - (n-2)pi/2; positive iff the phase value is supercritical."""
    n = params if isinstance(params, int) else params.n
    return abs(g_value) - (n - 2) * math.pi / 2.0


def m_of_a(a: Union[Spectrum, Sequence[float], np.ndarray]) -> float:
    """
    Admissibility functional M(A) of a definite spectrum.

    The full min over (j, k) is compared with the closed sorted form.

    Raises:
        DomainError: On zero or mixed-sign eigenvalues
        InternalError: If the two forms disagree
    """
    values = _as_values(a)
    if np.all(values > 0):
        pos = values
    elif np.all(values < 0):
        pos = np.sort(-values)
    else:
        raise DomainError(f"M(A) needs a definite spectrum, got {values.tolist()}")

    total = float(np.sum(pos / (1.0 + pos * pos)))
    table = (1.0 + pos[:, None] ** 2) / (2.0 * pos[None, :]) * total
    full_min = float(np.min(table))
    closed = (1.0 + pos[0] ** 2) / (2.0 * pos[-1]) * total
    if abs(full_min - closed) > TOLERANCES["m_of_a_agreement"] * max(1.0, abs(closed)):
        raise InternalError(f"M(A) forms disagree: min {full_min} vs closed {closed}")
    return full_min


def thin_spectrum(g_inf: float, eps: float) -> Spectrum:
    """
    Three-dimensional spectrum (eps, t, t) with sum of arctans equal to g_inf.

    M(A) of this family tends to 0 with eps, so it is the standard example of
    an admissible-looking phase limit for which M(A) > 1 fails.
    """
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    half = (g_inf - math.atan(eps)) / 2.0
    if not 0.0 < half < math.pi / 2.0:
        raise DomainError(f"No positive t solves 2 arctan t = {2 * half}")
    t = math.tan(half)
    return Spectrum.from_values([eps, t, t])


@dataclass(frozen=True, eq=False)
class PhaseParams:
    """Constant-coefficient data, normalized to a positive-definite A."""

    n: int
    A: SymmetricMatrix
    a: Spectrum
    g_inf: float
    beta: float
    m_of_a: float
    sign: int = 1

    @classmethod
    def from_matrix(cls, A: ArrayLike, beta: float, g_inf: Optional[float] = None) -> "PhaseParams":
        """
        Build parameters from a definite matrix.

        Args:
            A: Symmetric definite matrix
            beta (float): Decay exponent, must be positive
            g_inf (float, optional): Phase limit; computed from A when omitted

        Raises:
            DomainError: If A is not definite
            ConfigurationError: If beta <= 0, g_inf does not match A, or g_inf is not supercritical
        """
        matrix = SymmetricMatrix.from_array(_as_array(A))
        spectrum = eigen_sym(matrix, vectors=True)
        if np.all(spectrum.values > 0):
            sign = 1
        elif np.all(spectrum.values < 0):
            sign = -1
            matrix = -matrix
            spectrum = eigen_sym(matrix, vectors=True)
        else:
            raise DomainError(f"A must be definite, eigenvalues {spectrum.values.tolist()}")

        if not beta > 0:
            raise ConfigurationError(f"beta must be positive, got {beta}")

        phase = float(np.sum(np.arctan(spectrum.values)))
        if g_inf is not None and abs(sign * g_inf - phase) > TOLERANCES["params_consistency"]:
            raise ConfigurationError(
                f"g_inf={g_inf} does not match sum(arctan(a))={sign * phase}"
            )
        n = matrix.n
        if not (n - 2) * math.pi / 2.0 < phase < n * math.pi / 2.0:
            raise ConfigurationError(
                f"|g_inf|={phase} outside the supercritical band "
                f"({(n - 2) * math.pi / 2.0}, {n * math.pi / 2.0})"
            )
        params = cls(n, matrix, spectrum, phase, float(beta), m_of_a(spectrum), sign)
        logger.debug(f"PhaseParams n={n} a={spectrum.values.tolist()} g_inf={phase} M(A)={params.m_of_a}")
        return params

    @classmethod
    def diagonal(cls, a_values: Sequence[float], beta: float, g_inf: Optional[float] = None) -> "PhaseParams":
        return cls.from_matrix(np.diag(np.asarray(a_values, dtype=float)), beta, g_inf)

    @classmethod
    def isotropic(cls, n: int, g_inf: float, beta: float) -> "PhaseParams":
        """A = tan(g_inf/n) I."""
        return cls.from_matrix(math.tan(g_inf / n) * np.eye(n), beta)

    @property
    def trace_normalizer(self) -> float:
        """Mean eigenvalue trace(A)/n."""
        return float(np.mean(self.a.values))

    @property
    def is_isotropic(self) -> bool:
        vals = self.a.values
        return bool(vals[-1] - vals[0] <= 1e-12 * max(1.0, abs(vals[-1])))

    def quadratic_form(self, x: np.ndarray) -> np.ndarray:
        """s(x) = x^T A x / 2 for one point or a stack of points."""
        pts = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", pts, self.A.entries, pts)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "a": self.a.values.tolist(),
            "matrix": self.A.entries.tolist(),
            "g_inf": self.g_inf,
            "beta": self.beta,
            "m_of_a": self.m_of_a,
            "sign": self.sign,
        }

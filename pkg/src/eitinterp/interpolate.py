"""Filling in voltages on current-driven electrodes.

Entries with cyclic ``|j - k| <= 1`` of a difference measurement matrix are
treated as unknown.  Two interpolants are provided: the linear rule (each
diagonal entry is the mean of its two neighbours) and the geometric rule,
which picks the completion with the smallest source norm on a support bound
``B``.  The geometric completion is parametrised by ``w_j = V[j-1, j]``; with
column ``j`` written as ``A_j w + b_j`` the problem is the quadratic
``1/2 w^T A w + b^T w`` and ``w = -A^{-1} b``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .forward import CURRENT_DRIVEN, INTERPOLATED, MeasurementMatrix, current_driven_mask
from .sensitivity import BoundMatrix

logger = logging.getLogger(__name__)

COND_WARN = 1e12


class InterpolationError(RuntimeError):
    pass


def mask_current_driven(V: MeasurementMatrix) -> MeasurementMatrix:
    """Blank (NaN) and flag every entry with cyclic ``|j - k| <= 1``."""
    cd = current_driven_mask(V.m)
    values = V.values.copy()
    values[cd] = np.nan
    mask = V.mask.copy()
    mask[cd] = CURRENT_DRIVEN
    return MeasurementMatrix(values, mask)


def _known_part(V: MeasurementMatrix) -> np.ndarray:
    m = V.m
    if m < 5:
        raise InterpolationError(f"interpolation needs at least 5 electrodes, got {m}")
    cd = current_driven_mask(m)
    known = np.where(cd, 0.0, V.values)
    if not np.all(np.isfinite(known)):
        raise InterpolationError("non-finite value among the measured entries")
    return known


def _filled(V: MeasurementMatrix, values: np.ndarray) -> MeasurementMatrix:
    cd = current_driven_mask(V.m)
    out = np.where(cd, values, V.values)
    mask = V.mask.copy()
    mask[cd] = INTERPOLATED
    return MeasurementMatrix(out, mask)


def linear_constraint_system(V: MeasurementMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Stacked linear-interpolation equations in the 3m unknown entries.

    Unknowns are ordered ``V[j, j]``, then ``V[j, j-1]``, then ``V[j-1, j]``
    for ``j = 0..m-1``.  Rows are the m zero-column-sum equations, the m
    symmetry equations and the m neighbour-mean equations.
    """
    known = _known_part(V)
    m = V.m
    j = np.arange(m)
    d, s, t = j, m + j, 2 * m + j
    M = np.zeros((3 * m, 3 * m))
    rhs = np.zeros(3 * m)
    # column k: V[k-1, k] + V[k, k] + V[k+1, k] = -(measured part)
    M[j, t] = 1.0
    M[j, d] = 1.0
    M[j, s[(j + 1) % m]] += 1.0
    rhs[:m] = -known.sum(axis=0)
    M[m + j, s] = 1.0
    M[m + j, t] -= 1.0
    # V[j, j] = (V[j-1, j] + V[j, j+1]) / 2
    M[2 * m + j, d] = 1.0
    M[2 * m + j, t] -= 0.5
    M[2 * m + j, t[(j + 1) % m]] -= 0.5
    return M, rhs


def _scatter_linear(m: int, x: np.ndarray) -> np.ndarray:
    j = np.arange(m)
    out = np.zeros((m, m))
    out[j, j] = x[:m]
    out[j, (j - 1) % m] = x[m:2 * m]
    out[(j - 1) % m, j] = x[2 * m:]
    return out


def linear_interpolate(V: MeasurementMatrix) -> MeasurementMatrix:
    """Linear interpolant; minimum-norm least squares when ``m`` is even."""
    M, rhs = linear_constraint_system(V)
    x, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
    if rank < M.shape[1]:
        logger.debug("linear interpolation system has rank %d of %d", rank, M.shape[1])
    return _filled(V, _scatter_linear(V.m, x))


def selector_matrices(m: int) -> np.ndarray:
    """Stack of ``A_j`` (m, m, m) mapping ``w`` to the unknown part of column j."""
    A = np.zeros((m, m, m))
    for j in range(m):
        jm, jp = (j - 1) % m, (j + 1) % m
        A[j, jm, j] += 1.0
        A[j, jp, jp] += 1.0
        A[j, j, j] -= 1.0
        A[j, j, jp] -= 1.0
    return A


def offset_vectors(V: MeasurementMatrix) -> np.ndarray:
    """Columns ``b_j``: measured entries of column j and the balancing diagonal."""
    known = _known_part(V)
    b = known.copy()
    idx = np.arange(V.m)
    b[idx, idx] = -known.sum(axis=0)
    return b


@dataclass(frozen=True)
class GeomSystem:
    selectors: np.ndarray
    offsets: np.ndarray
    A: np.ndarray
    b: np.ndarray
    w: np.ndarray

    def columns(self) -> np.ndarray:
        return np.einsum("jkl,l->kj", self.selectors, self.w) + self.offsets


class GeometricInterpolator:
    """Geometric interpolation for a fixed support-bound matrix.

    ``A`` does not depend on the data, so its Cholesky factor is computed
    once and reused for every measurement passed to :meth:`__call__`.
    """

    def __init__(self, bound: BoundMatrix):
        self.bound = bound
        m = bound.S_B.shape[0]
        self.m = m
        self.selectors = selector_matrices(m)
        P = bound.S_B_plus
        A = -np.einsum("jkl,kp,jpq->lq", self.selectors, P, self.selectors, optimize=True)
        A = 0.5 * (A + A.T)
        self.A = A
        self.condition = float(np.linalg.cond(A))
        if self.condition > COND_WARN:
            warnings.warn(
                f"geometric interpolation matrix is ill-conditioned (cond {self.condition:.3e}); "
                "the support bound may be too small",
                RuntimeWarning,
                stacklevel=2,
            )
        try:
            self._factor = sla.cho_factor(A)
        except np.linalg.LinAlgError as exc:
            raise InterpolationError(
                f"geometric interpolation matrix is not positive definite "
                f"(condition estimate {self.condition:.3e})"
            ) from exc

    def system(self, V: MeasurementMatrix) -> GeomSystem:
        if V.m != self.m:
            raise ValueError(f"data has {V.m} electrodes, bound matrix has {self.m}")
        offsets = offset_vectors(V)
        b = -np.einsum("jkl,kp,pj->l", self.selectors, self.bound.S_B_plus, offsets, optimize=True)
        w = -sla.cho_solve(self._factor, b)
        return GeomSystem(self.selectors, offsets, self.A, b, w)

    def __call__(self, V: MeasurementMatrix) -> MeasurementMatrix:
        return _filled(V, self.system(V).columns())


def geometric_interpolate(V: MeasurementMatrix, bound: BoundMatrix) -> MeasurementMatrix:
    return GeometricInterpolator(bound)(V)


def objective_value(V: MeasurementMatrix | np.ndarray, S_B_plus: BoundMatrix | np.ndarray) -> float:
    """``-sum_j V[:, j]^T S_B^+ V[:, j]``."""
    values = V.values if isinstance(V, MeasurementMatrix) else np.asarray(V, dtype=float)
    P = S_B_plus.S_B_plus if isinstance(S_B_plus, BoundMatrix) else np.asarray(S_B_plus)
    if P.shape != (values.shape[0],) * 2:
        raise ValueError("matrix and pseudoinverse dimensions differ")
    return float(-np.einsum("kj,kp,pj->", values, P, values, optimize=True))


def interpolation_error(V_true: MeasurementMatrix | np.ndarray, V_interp: MeasurementMatrix | np.ndarray) -> float:
    """Relative Frobenius error ``||V_true - V_interp|| / ||V_true||``."""
    a = V_true.values if isinstance(V_true, MeasurementMatrix) else np.asarray(V_true, dtype=float)
    b = V_interp.values if isinstance(V_interp, MeasurementMatrix) else np.asarray(V_interp, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    ref = np.linalg.norm(a)
    if ref == 0:
        raise ValueError("reference matrix has zero norm")
    return float(np.linalg.norm(a - b) / ref)

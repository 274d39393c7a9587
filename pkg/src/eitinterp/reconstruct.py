"""Monotonicity indicator and linearised Tikhonov reconstruction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import MeasurementMatrix
from .sensitivity import SensitivityTensor

BETA_ZERO_TOL = 1e-14
BETA_CAP_FACTOR = 1e6


@dataclass(frozen=True)
class NoiseSpec:
    delta: float
    seed: int = 0
    symmetrize: bool = False

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("noise level must be non-negative")


@dataclass(frozen=True)
class IndicatorField:
    beta: np.ndarray
    delta: float
    method: str = ""
    note: str = ""

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if not np.all(np.isfinite(b)) or np.any(b < 0):
            raise ValueError("indicator values must be finite and non-negative")
        object.__setattr__(self, "beta", b)

    def support(self, fraction: float = 0.25) -> np.ndarray:
        """Pixels whose value reaches ``fraction`` of the maximum."""
        top = self.beta.max() if self.beta.size else 0.0
        if top <= 0:
            return np.zeros(self.beta.shape, dtype=bool)
        return self.beta >= fraction * top


def _values(V) -> np.ndarray:
    return V.values if isinstance(V, MeasurementMatrix) else np.asarray(V, dtype=float)


def add_noise(V: MeasurementMatrix, spec: NoiseSpec) -> MeasurementMatrix:
    """``V + delta ||V||_F E / ||E||_F`` with ``E`` uniform on [-1, 1]."""
    values = _values(V)
    rng = np.random.default_rng(spec.seed)
    E = rng.uniform(-1.0, 1.0, size=values.shape)
    if spec.symmetrize:
        E = 0.5 * (E + E.T)
    noisy = values + spec.delta * np.linalg.norm(values) * E / np.linalg.norm(E)
    mask = V.mask.copy() if isinstance(V, MeasurementMatrix) else None
    return MeasurementMatrix(noisy, mask)


def matrix_abs(V) -> np.ndarray:
    """Spectral absolute value of the symmetric part of ``V``."""
    values = _values(V)
    lam, Q = np.linalg.eigh(0.5 * (values + values.T))
    return (Q * np.abs(lam)) @ Q.T


def _inverse_root(M: np.ndarray) -> np.ndarray:
    lam, Q = np.linalg.eigh(M)
    if lam.max() <= 0:
        raise np.linalg.LinAlgError("regularized matrix singular")
    keep = lam > 1e-12 * lam.max()
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / np.sqrt(lam[keep])
    return (Q * inv) @ Q.T


def beta_indicator(V_delta, S: SensitivityTensor, delta: float, method: str = "") -> IndicatorField:
    """Largest ``beta >= 0`` with ``beta S_i >= -|V_delta| - delta ||V_delta||_F I`` per pixel.

    With ``A`` the symmetric square root of the right-hand side,
    ``beta_i = -1 / lambda_min(A^{-1} S_i A^{-1})``.  Pixels whose matrix has
    no negative eigenvalue get a cap of ``1e6 * median`` of the other values.
    """
    values = _values(V_delta)
    norm = np.linalg.norm(values)
    if norm == 0:
        raise np.linalg.LinAlgError("regularized matrix singular: the data matrix is zero")
    M = matrix_abs(values) + delta * norm * np.eye(values.shape[0])
    Ainv = _inverse_root(M)
    T = Ainv @ S.pixel_matrices @ Ainv
    lam1 = np.linalg.eigvalsh(0.5 * (T + T.transpose(0, 2, 1)))[:, 0]
    zero = lam1 >= -BETA_ZERO_TOL
    beta = np.zeros(S.r)
    beta[~zero] = -1.0 / lam1[~zero]
    if zero.any():
        finite = beta[~zero]
        cap = BETA_CAP_FACTOR * float(np.median(finite)) if finite.size else BETA_CAP_FACTOR
        beta[zero] = cap
    return IndicatorField(beta, delta, method)


def linearized_reconstruct(S_reduced: np.ndarray, V_reduced: np.ndarray, alpha: float) -> np.ndarray:
    """Tikhonov solution of the reduced system via the normal equations."""
    if alpha <= 0:
        raise ValueError("regularization weight must be positive")
    S_reduced = np.asarray(S_reduced, dtype=float)
    G = S_reduced.T @ S_reduced
    G[np.diag_indices_from(G)] += alpha
    return np.linalg.solve(G, S_reduced.T @ np.asarray(V_reduced, dtype=float))

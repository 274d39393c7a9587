"""Pixel sensitivity matrices and the support-bound matrix."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .forward import ConductivityField, MeasurementMatrix, current_driven_mask, forward_solver
from .geometry import ElectrodeLayout, Mesh, PixelPartition, SupportBound

PINV_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class SensitivityTensor:
    """Per-pixel matrices ``S_i[j, k] = -int_{P_i} grad u_j . grad u_k``.

    ``pixel_matrices`` has shape (r, m, m).
    """

    pixel_matrices: np.ndarray
    sigma0: ConductivityField
    partition: PixelPartition

    @property
    def r(self) -> int:
        return self.pixel_matrices.shape[0]

    @property
    def m(self) -> int:
        return self.pixel_matrices.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """The (m*m, r) sensitivity matrix, row ``j*m + k`` holding ``S_i[j, k]``."""
        return self.pixel_matrices.reshape(self.r, -1).T

    def total(self) -> np.ndarray:
        return self.pixel_matrices.sum(axis=0)


@dataclass(frozen=True, eq=False)
class BoundMatrix:
    S_B: np.ndarray
    S_B_plus: np.ndarray
    bound: SupportBound
    rank: int


def assemble_sensitivity(
    mesh: Mesh,
    layout: ElectrodeLayout,
    partition: PixelPartition,
    sigma0: ConductivityField,
) -> SensitivityTensor:
    """Solve the reference drives on ``mesh`` and integrate gradient products per pixel.

    ``partition`` must be a partition of ``mesh``.
    """
    if partition.mesh is not mesh:
        raise ValueError("the pixel partition must be built on the mesh used for the reference solve")
    if any(len(p) == 0 for p in partition.pixels):
        raise ValueError("empty pixel in partition")
    solver = forward_solver(mesh, layout)
    nodal, _ = solver.drive_potentials(sigma0)
    grads = solver.gradients(nodal)  # (T, 2, m)
    per_element = -mesh.areas[:, None, None] * np.einsum("tdj,tdk->tjk", grads, grads)
    r, m = partition.r, layout.m
    S = np.zeros((r, m, m))
    np.add.at(S, partition.element_pixel, per_element)
    S = 0.5 * (S + S.transpose(0, 2, 1))
    return SensitivityTensor(S, sigma0, partition)


def frechet_apply(S: SensitivityTensor, kappa: np.ndarray) -> np.ndarray:
    """Linearised measurement change ``sum_i kappa_i S_i``."""
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (S.r,):
        raise ValueError(f"kappa must have length {S.r}, got shape {kappa.shape}")
    return np.einsum("i,ijk->jk", kappa, S.pixel_matrices)


def symmetric_pinv(M: np.ndarray, rcond: float = PINV_RCOND) -> tuple[np.ndarray, int]:
    """Moore-Penrose inverse of a symmetric matrix and its numerical rank.

    Eigenvalues with ``|lambda| <= rcond * max|lambda|`` are treated as zero.
    """
    lam, Q = np.linalg.eigh(0.5 * (M + M.T))
    cut = rcond * np.abs(lam).max() if lam.size else 0.0
    keep = np.abs(lam) > cut
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    return (Q * inv) @ Q.T, int(keep.sum())


def bound_matrix(S: SensitivityTensor, B: SupportBound) -> BoundMatrix:
    if B.partition is not S.partition:
        raise ValueError("support bound and sensitivity use different pixel partitions")
    if len(B) == 0:
        raise ValueError("support bound contains no pixels")
    S_B = S.pixel_matrices[B.pixel_indices].sum(axis=0)
    S_B = 0.5 * (S_B + S_B.T)
    S_B_plus, rank = symmetric_pinv(S_B)
    return BoundMatrix(S_B, S_B_plus, B, rank)


def retained_rows(m: int) -> np.ndarray:
    """Flat indices ``j*m + k`` of entries with cyclic ``|j - k| > 1``."""
    return np.flatnonzero(~current_driven_mask(m).ravel())


def reduce_system(S: SensitivityTensor, V: MeasurementMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = V.values if isinstance(V, MeasurementMatrix) else np.asarray(V, dtype=float)
    m = S.m
    if m < 5:
        raise ValueError("the reduced system needs at least 5 electrodes")
    if values.shape != (m, m):
        raise ValueError(f"data has shape {values.shape}, expected {(m, m)}")
    rows = retained_rows(m)
    return S.matrix[rows], values.ravel()[rows]


def write_sensitivity(path: str | Path, S: SensitivityTensor) -> None:
    flat = S.pixel_matrices.reshape(S.r, -1)
    lines = [",".join([str(i)] + [repr(float(x)) for x in row]) for i, row in enumerate(flat)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_sensitivity_matrices(path: str | Path) -> np.ndarray:
    rows = [ln.split(",") for ln in Path(path).read_text().splitlines() if ln.strip()]
    idx = np.array([int(r[0]) for r in rows])
    data = np.array([[float(x) for x in r[1:]] for r in rows])
    m = int(round(np.sqrt(data.shape[1])))
    out = np.empty((len(rows), m, m))
    out[idx] = data.reshape(-1, m, m)
    return out

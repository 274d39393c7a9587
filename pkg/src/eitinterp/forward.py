"""Shunt-model forward solver and measurement matrices.

Piecewise-linear finite elements on a :class:`~eitinterp.geometry.Mesh`.
All nodes of an electrode share a single unknown, which enforces a constant
potential there; the injected current enters the right-hand side on that
unknown.  Electrode 0 is grounded for the solve and the gauge is then moved
so that the electrode potentials sum to zero.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import ElectrodeLayout, Mesh

logger = logging.getLogger(__name__)

MEASURED, CURRENT_DRIVEN, INTERPOLATED = "M", "C", "I"


class SingularSystemError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ConductivityField:
    values: np.ndarray
    description: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("conductivity must be one value per element")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("conductivity must be finite and strictly positive")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, mesh: Mesh, value: float = 1.0, description: str = "") -> "ConductivityField":
        return cls(np.full(mesh.n_triangles, float(value)), description or f"constant {value:g}")

    def __len__(self) -> int:
        return len(self.values)

    def scaled(self, c: float) -> "ConductivityField":
        return ConductivityField(self.values * c, f"{c:g} * ({self.description})")


@dataclass(frozen=True)
class DrivePattern:
    k: int
    currents: np.ndarray

    def __post_init__(self):
        I = np.asarray(self.currents, dtype=float)
        if abs(I.sum()) > 1e-12 * max(1.0, np.abs(I).max()):
            raise ValueError("drive currents must sum to zero")
        object.__setattr__(self, "currents", I)

    @classmethod
    def adjacent(cls, k: int, m: int) -> "DrivePattern":
        """Unit current in through electrode ``k``, out through ``k + 1`` (cyclic)."""
        I = np.zeros(m)
        I[k % m] += 1.0
        I[(k + 1) % m] -= 1.0
        return cls(k % m, I)


@dataclass(frozen=True)
class PotentialField:
    nodal: np.ndarray
    electrode_potentials: np.ndarray
    grounding: str = "electrode potentials sum to zero"


def current_driven_mask(m: int) -> np.ndarray:
    """Boolean (m, m) mask of entries with cyclic ``|j - k| <= 1``."""
    j, k = np.indices((m, m))
    d = np.abs(j - k) % m
    return np.minimum(d, m - d) <= 1


@dataclass(eq=False)
class MeasurementMatrix:
    """An m x m voltage matrix with a per-entry status flag.

    ``mask`` holds one of ``"M"`` (measured), ``"C"`` (current-driven) or
    ``"I"`` (interpolated) for every entry.
    """

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("measurement matrix must be square")
        if self.mask is None:
            self.mask = np.where(current_driven_mask(self.m), CURRENT_DRIVEN, MEASURED)
        self.mask = np.asarray(self.mask, dtype="<U1")
        if self.mask.shape != self.values.shape:
            raise ValueError("mask shape does not match the matrix")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def known(self) -> np.ndarray:
        return self.mask == MEASURED

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.values))

    def __sub__(self, other: "MeasurementMatrix") -> "MeasurementMatrix":
        if other.m != self.m:
            raise ValueError(f"electrode count mismatch: {self.m} vs {other.m}")
        return MeasurementMatrix(self.values - other.values, self.mask.copy())


def format_matrix(values: np.ndarray) -> str:
    return "\n".join(",".join(repr(float(x)) for x in row) for row in values) + "\n"


def format_mask(mask: np.ndarray) -> str:
    return "\n".join(",".join(row) for row in mask) + "\n"


def write_measurement(path: str | Path, V: MeasurementMatrix) -> Path:
    """Write ``V`` as CSV plus a ``<stem>.mask.csv`` sidecar; return the mask path."""
    path = Path(path)
    path.write_text(format_matrix(V.values))
    mask_path = mask_path_for(path)
    mask_path.write_text(format_mask(V.mask))
    return mask_path


def mask_path_for(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".mask.csv")


def read_measurement(path: str | Path) -> MeasurementMatrix:
    path = Path(path)
    values = np.array(
        [[float(x) for x in ln.split(",")] for ln in path.read_text().splitlines() if ln.strip()]
    )
    mpath = mask_path_for(path)
    mask = None
    if mpath.exists():
        mask = np.array([ln.split(",") for ln in mpath.read_text().splitlines() if ln.strip()])
    return MeasurementMatrix(values, mask)


class ForwardSolver:
    """Assembled FEM structure for one mesh and electrode layout.

    The element stiffness matrices are computed once; a conductivity only
    rescales them.
    """

    def __init__(self, mesh: Mesh, layout: ElectrodeLayout):
        self.mesh = mesh
        self.layout = layout
        self.m = layout.m

        p = mesh.nodes[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (T, 2, 2)
        inv = np.linalg.inv(jac)
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        # rows: basis functions, columns: x/y derivative
        self.basis_gradients = np.einsum("ab,tbd->tad", ref, inv)
        self.areas = mesh.areas
        self.local_stiffness = self.areas[:, None, None] * np.einsum(
            "tad,tbd->tab", self.basis_gradients, self.basis_gradients
        )

        node_unknown = np.full(mesh.n_nodes, -1, dtype=np.int64)
        for l in range(self.m):
            node_unknown[layout.electrode_nodes(mesh, l)] = -2 - l
        free = np.flatnonzero(node_unknown == -1)
        node_unknown[free] = np.arange(len(free))
        n_free = len(free)
        on_electrode = node_unknown < -1
        node_unknown[on_electrode] = n_free + (-2 - node_unknown[on_electrode])
        self.node_unknown = node_unknown
        self.n_free = n_free
        self.n_unknowns = n_free + self.m

        tu = node_unknown[mesh.triangles]
        self._rows = np.repeat(tu, 3, axis=1).ravel()
        self._cols = np.tile(tu, (1, 3)).ravel()
        # unknown n_free (electrode 0) is grounded
        self._keep = np.delete(np.arange(self.n_unknowns), n_free)

    def stiffness(self, sigma: ConductivityField) -> sp.csc_matrix:
        """Stiffness matrix on all unknowns (free nodes then electrodes)."""
        if len(sigma) != self.mesh.n_triangles:
            raise ValueError(
                f"conductivity has {len(sigma)} values for {self.mesh.n_triangles} elements"
            )
        data = (sigma.values[:, None, None] * self.local_stiffness).ravel()
        K = sp.coo_matrix((data, (self._rows, self._cols)), shape=(self.n_unknowns,) * 2)
        return K.tocsc()

    def solve(self, sigma: ConductivityField, currents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve for electrode currents given column-wise in ``currents`` (m, p).

        Returns nodal potentials (N, p) and electrode potentials (m, p).
        """
        currents = np.atleast_2d(np.asarray(currents, dtype=float).T).T
        if currents.shape[0] != self.m:
            raise ValueError("current vector length must equal the electrode count")
        if np.any(np.abs(currents.sum(axis=0)) > 1e-12 * np.maximum(1.0, np.abs(currents).max(axis=0))):
            raise ValueError("drive currents must sum to zero")
        K = self.stiffness(sigma)
        Kr = K[self._keep][:, self._keep].tocsc()
        rhs = np.zeros((self.n_unknowns, currents.shape[1]))
        rhs[self.n_free:] = currents
        rhs = rhs[self._keep]
        try:
            lu = spla.splu(Kr)
        except RuntimeError as exc:
            raise SingularSystemError(f"stiffness factorization failed: {exc}") from exc
        x = lu.solve(rhs)
        res = rhs - Kr @ x
        scale = np.linalg.norm(rhs)
        if np.linalg.norm(res) > 1e-10 * scale:
            x += lu.solve(res)
            res = rhs - Kr @ x
        if np.linalg.norm(res) > 1e-10 * scale:
            diag = np.abs(lu.U.diagonal())
            raise SingularSystemError(
                f"relative residual {np.linalg.norm(res) / scale:.3e} exceeds 1e-10; "
                f"pivot ratio {diag.max() / diag.min():.3e}"
            )
        full = np.zeros((self.n_unknowns, x.shape[1]))
        full[self._keep] = x
        phi = full[self.n_free:]
        shift = phi.mean(axis=0)
        full -= shift
        return full[self.node_unknown], full[self.n_free:]

    def electrode_currents(self, sigma: ConductivityField, nodal: np.ndarray) -> np.ndarray:
        """Net current leaving through each electrode for a nodal potential."""
        K = self.stiffness(sigma)
        u = np.zeros((self.n_unknowns,) + nodal.shape[1:])
        u[self.node_unknown] = nodal
        return (K @ u)[self.n_free:]

    def gradients(self, nodal: np.ndarray) -> np.ndarray:
        """Element-wise constant gradients, shape (T, 2, p) for nodal (N, p)."""
        return np.einsum("tad,tap->tdp", self.basis_gradients, nodal[self.mesh.triangles])

    def drive_potentials(self, sigma: ConductivityField) -> tuple[np.ndarray, np.ndarray]:
        """Potentials of all m adjacent drives, one column per drive."""
        return self.solve(sigma, adjacent_currents(self.m))

    def measure(self, sigma: ConductivityField) -> MeasurementMatrix:
        _, phi = self.drive_potentials(sigma)
        return MeasurementMatrix(phi - np.roll(phi, -1, axis=0))


def adjacent_currents(m: int) -> np.ndarray:
    """(m, m) matrix whose column k is the adjacent drive pattern k."""
    return np.eye(m) - np.roll(np.eye(m), 1, axis=0)


@functools.lru_cache(maxsize=8)
def forward_solver(mesh: Mesh, layout: ElectrodeLayout) -> ForwardSolver:
    return ForwardSolver(mesh, layout)


def solve_drive(
    mesh: Mesh, layout: ElectrodeLayout, sigma: ConductivityField, pattern: DrivePattern
) -> PotentialField:
    nodal, phi = forward_solver(mesh, layout).solve(sigma, pattern.currents)
    return PotentialField(nodal[:, 0], phi[:, 0])


def measure(mesh: Mesh, layout: ElectrodeLayout, sigma: ConductivityField) -> MeasurementMatrix:
    """Measurement matrix ``U_jk = u_k(E_j) - u_k(E_{j+1})`` for adjacent drives."""
    return forward_solver(mesh, layout).measure(sigma)


def difference_measurement(
    mesh: Mesh,
    layout: ElectrodeLayout,
    sigma: ConductivityField,
    sigma0: ConductivityField,
) -> MeasurementMatrix:
    return measure(mesh, layout, sigma) - measure(mesh, layout, sigma0)

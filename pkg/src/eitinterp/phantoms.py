"""Conductivity phantoms, rasterised by element centroid."""
from __future__ import annotations

import numpy as np

from .forward import ConductivityField
from .geometry import Mesh

# upper half of an ellipse near the bottom of the disk and two small disks
D1_CENTER = (0.0, -0.55)
D1_SEMI_AXES = (0.35, 0.30)
D2_CENTER, D2_RADIUS = (-0.40, 0.35), 0.13
D3_CENTER, D3_RADIUS = (0.40, 0.35), 0.13


def fig1_inclusions(points: np.ndarray) -> np.ndarray:
    """Boolean membership in D1 u D2 u D3 for (n, 2) points."""
    x, y = points[:, 0], points[:, 1]
    (ex, ey), (a, b) = D1_CENTER, D1_SEMI_AXES
    d1 = (((x - ex) / a) ** 2 + ((y - ey) / b) ** 2 < 1.0) & (y > ey)
    d2 = np.hypot(x - D2_CENTER[0], y - D2_CENTER[1]) < D2_RADIUS
    d3 = np.hypot(x - D3_CENTER[0], y - D3_CENTER[1]) < D3_RADIUS
    return d1 | d2 | d3


def inclusion_centroids() -> np.ndarray:
    ex, ey = D1_CENTER
    _, b = D1_SEMI_AXES
    return np.array([[ex, ey + 4 * b / (3 * np.pi)], D2_CENTER, D3_CENTER])


def disk_inclusion(points: np.ndarray, center=(0.3, 0.0), radius: float = 0.2) -> np.ndarray:
    return np.hypot(points[:, 0] - center[0], points[:, 1] - center[1]) < radius


PHANTOMS = {
    "fig1": fig1_inclusions,
    "disk": disk_inclusion,
    "homogeneous": lambda p: np.zeros(len(p), dtype=bool),
}


def phantom_conductivity(mesh: Mesh, phantom: str = "fig1", sigma0: float = 1.0, contrast: float = 1.0) -> ConductivityField:
    """``sigma0 + contrast`` on the inclusions of ``phantom``, ``sigma0`` elsewhere."""
    try:
        inside = PHANTOMS[phantom](mesh.centroids)
    except KeyError:
        raise ValueError(f"unknown phantom {phantom!r}; choose from {sorted(PHANTOMS)}") from None
    return ConductivityField(sigma0 + contrast * inside.astype(float), f"phantom {phantom}")

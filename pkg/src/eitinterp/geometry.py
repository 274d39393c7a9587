"""Triangulated unit disks with boundary electrodes, and the pixel sets built on them.

The disk mesh is a ring lattice: an octagonal fan of 8 sectors, each cut
into ``n = 2**refinement`` barycentric layers and mapped onto the disk so
that ring ``q`` sits at radius ``q/n`` and carries ``8q`` equally spaced
nodes.  Lattice coordinates of every triangle are kept, which makes the
refinement parent map (and therefore pixel coarsening) exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SECTORS = 8


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulated unit disk.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (T, 3) int array, counter-clockwise
    boundary_edges : (E, 2) int array, ordered counter-clockwise around the
        boundary loop; edge ``q`` runs from boundary node ``q`` to ``q + 1``.
    lattice : (T, 4) int array or None
        ``(sector, i, j, is_down)`` lattice address of each triangle.
    subdivisions : int
        Lattice layers per sector (``2**refinement``).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    lattice: np.ndarray | None = None
    subdivisions: int = 0
    angle_offset: float = 0.0

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def boundary_angles(self) -> np.ndarray:
        """Polar angle in [0, 2pi) of the start node of every boundary edge."""
        p = self.nodes[self.boundary_edges[:, 0]]
        return np.mod(np.arctan2(p[:, 1], p[:, 0]), 2 * np.pi)

    def validate(self) -> None:
        if np.any(self.signed_areas <= 0):
            raise MeshError("mesh has non-positive triangle areas")
        b = self.boundary_edges
        if not np.array_equal(b[:, 1], np.roll(b[:, 0], -1)):
            raise MeshError("boundary edges do not form a single closed loop")
        if len(np.unique(b[:, 0])) != len(b):
            raise MeshError("boundary loop visits a node twice")
        radii = np.hypot(*self.nodes[b[:, 0]].T)
        if np.max(np.abs(radii - 1.0)) > 1e-9:
            raise MeshError("boundary node off the unit circle")


@dataclass(frozen=True, eq=False)
class ElectrodeLayout:
    """Electrodes as runs of consecutive boundary edges.

    Indexing is cyclic: ``layout[m]`` is ``layout[0]`` and ``layout[-1]`` is
    the last electrode.
    """

    m: int
    electrodes: tuple[np.ndarray, ...]
    coverage_fraction: float
    edge_electrode: np.ndarray = field(repr=False)

    def index(self, l: int) -> int:
        return l % self.m

    def __getitem__(self, l: int) -> np.ndarray:
        return self.electrodes[l % self.m]

    def __len__(self) -> int:
        return self.m

    def electrode_nodes(self, mesh: Mesh, l: int) -> np.ndarray:
        return np.unique(mesh.boundary_edges[self[l]])

    def validate(self, mesh: Mesh) -> None:
        seen: set[int] = set()
        n_edges = len(mesh.boundary_edges)
        for l, edges in enumerate(self.electrodes):
            if len(edges) == 0:
                raise MeshError(f"electrode {l} has no boundary edges")
            steps = np.diff(edges) % n_edges
            if np.any(steps != 1):
                raise MeshError(f"electrode {l} is not a connected arc")
            if seen.intersection(edges.tolist()):
                raise MeshError(f"electrode {l} overlaps another electrode")
            seen.update(edges.tolist())
            nodes = self.electrode_nodes(mesh, l)
            for other in range(l):
                if np.intersect1d(nodes, self.electrode_nodes(mesh, other)).size:
                    raise MeshError(f"electrodes {other} and {l} touch")


@dataclass(frozen=True, eq=False)
class PixelPartition:
    mesh: Mesh
    pixels: tuple[np.ndarray, ...]
    element_pixel: np.ndarray
    centroids: np.ndarray
    level: int = 0

    @property
    def r(self) -> int:
        return len(self.pixels)

    @property
    def areas(self) -> np.ndarray:
        return np.bincount(self.element_pixel, weights=self.mesh.areas, minlength=self.r)


@dataclass(frozen=True, eq=False)
class SupportBound:
    radius: float
    pixel_indices: np.ndarray
    partition: PixelPartition

    def __len__(self) -> int:
        return len(self.pixel_indices)


def _ring_offset(q):
    # ring q holds 8q nodes; ring 0 is the centre node
    return np.where(q > 0, 1 + 4 * q * (q - 1), 0)


def minimum_refinement(m: int, coverage_fraction: float) -> int:
    """Smallest refinement giving >= 2 edges per electrode and >= 1 per gap."""
    k = 0
    while True:
        nb = SECTORS * 2**k
        if nb * coverage_fraction / m >= 2 - 1e-9 and nb * (1 - coverage_fraction) / m >= 1 - 1e-9:
            return k
        k += 1


def _lattice_triangles(n: int) -> tuple[np.ndarray, np.ndarray]:
    tris = []
    addr = []
    for s in range(SECTORS):
        for i in range(n):
            for j in range(n - i):
                tris.append(((s, i, j), (s, i + 1, j), (s, i, j + 1)))
                addr.append((s, i, j, 0))
                if i + j <= n - 2:
                    tris.append(((s, i + 1, j), (s, i + 1, j + 1), (s, i, j + 1)))
                    addr.append((s, i, j, 1))
    return np.asarray(tris), np.asarray(addr, dtype=np.int64)


def _lattice_node(s: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    q = i + j
    idx = np.where(q > 0, np.mod(s * q + j, np.maximum(SECTORS * q, 1)), 0)
    return _ring_offset(q) + idx


def _electrode_endpoints(m: int, coverage_fraction: float) -> np.ndarray:
    centres = 2 * np.pi * np.arange(m) / m
    half = np.pi * coverage_fraction / m
    return np.stack([centres - half, centres + half], axis=1)


def build_disk_mesh(
    refinement: int,
    m: int,
    coverage_fraction: float = 0.5,
    angle_offset: float = 0.0,
) -> tuple[Mesh, ElectrodeLayout]:
    """Build the disk triangulation and an equiangular electrode layout.

    Parameters
    ----------
    refinement : int
        Lattice refinement level; the boundary has ``8 * 2**refinement`` edges.
    m : int
        Number of electrodes (>= 4).  Electrode ``l`` is centred at angle
        ``2*pi*l/m``.
    coverage_fraction : float
        Fraction of the circumference covered by electrodes.
    angle_offset : float
        Rigid rotation of the lattice; used to make the reconstruction mesh
        non-nested with the forward mesh.  Electrode arcs do not move.

    Returns
    -------
    mesh, layout
    """
    if m < 4:
        raise MeshError(f"need at least 4 electrodes, got {m}")
    if not 0 < coverage_fraction < 1:
        raise MeshError("coverage_fraction must lie in (0, 1)")
    if refinement < 1:
        raise MeshError("refinement must be a positive integer")
    kmin = minimum_refinement(m, coverage_fraction)
    if refinement < kmin:
        raise MeshError(
            f"mesh too coarse for {m} electrodes at coverage {coverage_fraction}: "
            f"minimum refinement is {kmin}, got {refinement}"
        )

    n = 2**refinement
    nb = SECTORS * n

    rings = np.concatenate([[0]] + [np.full(SECTORS * q, q) for q in range(1, n + 1)])
    pos = np.concatenate([[0]] + [np.arange(SECTORS * q) for q in range(1, n + 1)])
    theta = np.where(rings > 0, 2 * np.pi * pos / np.maximum(SECTORS * rings, 1), 0.0) + angle_offset
    radius = rings / n

    # snap electrode endpoints to boundary nodes, then warp angles so they match exactly
    ends = _electrode_endpoints(m, coverage_fraction)
    boundary_theta = angle_offset + 2 * np.pi * np.arange(nb) / nb
    snapped = np.mod(np.rint((ends - angle_offset) / (2 * np.pi / nb)).astype(np.int64), nb)
    ctrl_theta = boundary_theta[snapped.ravel()]
    shift = np.angle(np.exp(1j * (ends.ravel() - ctrl_theta)))
    order = np.argsort(np.mod(ctrl_theta, 2 * np.pi))
    ctrl = np.mod(ctrl_theta[order], 2 * np.pi)
    if len(np.unique(snapped)) != snapped.size:
        raise MeshError(
            f"mesh too coarse: electrode endpoints collide; minimum refinement is {kmin + 1}"
        )
    delta = np.interp(np.mod(theta, 2 * np.pi), ctrl, shift[order], period=2 * np.pi)
    theta = theta + (radius**2) * delta * (radius > 0)
    nodes = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    outer = rings == n
    nodes[outer] /= np.hypot(*nodes[outer].T)[:, None]

    lat, addr = _lattice_triangles(n)
    triangles = _lattice_node(lat[..., 0], lat[..., 1], lat[..., 2]).astype(np.int64)

    first = int(_ring_offset(n))
    bnodes = first + np.arange(nb)
    boundary_edges = np.stack([bnodes, np.roll(bnodes, -1)], axis=1)

    mesh = Mesh(nodes, triangles, boundary_edges, addr, n, angle_offset)
    mesh.validate()

    edge_electrode = np.full(nb, -1, dtype=np.int64)
    electrodes = []
    for l in range(m):
        a, b = snapped[l]
        count = (b - a) % nb
        edges = np.mod(a + np.arange(count), nb)
        edge_electrode[edges] = l
        electrodes.append(edges)
    ang = mesh.boundary_angles
    span = np.mod(np.roll(ang, -1) - ang, 2 * np.pi)
    covered = float(span[edge_electrode >= 0].sum() / (2 * np.pi))
    layout = ElectrodeLayout(m, tuple(electrodes), covered, edge_electrode)
    layout.validate(mesh)
    return mesh, layout


def build_pixel_partition(mesh: Mesh, level: int = 0) -> PixelPartition:
    """Group mesh triangles into pixels.

    ``level=0`` makes every triangle its own pixel.  ``level=L`` merges the
    ``4**L`` lattice descendants of each triangle of the mesh that is ``L``
    refinement steps coarser.
    """
    if level < 0:
        raise ValueError("coarsening level must be non-negative")
    if level == 0:
        element_pixel = np.arange(mesh.n_triangles)
    else:
        if mesh.lattice is None:
            raise MeshError("mesh carries no lattice addresses; only level 0 is available")
        if mesh.subdivisions % 2**level:
            raise MeshError(f"coarsening level {level} exceeds the mesh refinement")
        s, i, j, down = mesh.lattice.T
        ci = (i + np.where(down, 2.0, 1.0) / 3) / 2**level
        cj = (j + np.where(down, 2.0, 1.0) / 3) / 2**level
        fi = np.floor(ci).astype(np.int64)
        fj = np.floor(cj).astype(np.int64)
        pdown = ((ci - fi) + (cj - fj) > 1).astype(np.int64)
        keys = np.stack([s, fi, fj, pdown], axis=1)
        _, element_pixel = np.unique(keys, axis=0, return_inverse=True)
        element_pixel = element_pixel.ravel()
    r = int(element_pixel.max()) + 1
    order = np.argsort(element_pixel, kind="stable")
    splits = np.cumsum(np.bincount(element_pixel, minlength=r))[:-1]
    pixels = tuple(np.split(order, splits))
    w = mesh.areas
    wsum = np.bincount(element_pixel, weights=w, minlength=r)
    cx = np.bincount(element_pixel, weights=w * mesh.centroids[:, 0], minlength=r) / wsum
    cy = np.bincount(element_pixel, weights=w * mesh.centroids[:, 1], minlength=r) / wsum
    return PixelPartition(mesh, pixels, element_pixel, np.stack([cx, cy], axis=1), level)


def _triangle_origin_distance(p: np.ndarray) -> np.ndarray:
    """Distance from the origin to each closed triangle, p of shape (T, 3, 2)."""
    a, b, c = p[:, 0], p[:, 1], p[:, 2]

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    d1 = cross(b - a, -a)
    d2 = cross(c - b, -b)
    d3 = cross(a - c, -c)
    inside = ((d1 >= 0) & (d2 >= 0) & (d3 >= 0)) | ((d1 <= 0) & (d2 <= 0) & (d3 <= 0))

    def seg(u, v):
        d = v - u
        t = np.clip(-np.einsum("ij,ij->i", u, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
        return np.hypot(*(u + t[:, None] * d).T)

    dist = np.minimum(np.minimum(seg(a, b), seg(b, c)), seg(c, a))
    return np.where(inside, 0.0, dist)


def support_bound(partition: PixelPartition, r_B: float) -> SupportBound:
    """Pixels intersecting the open ball of radius ``r_B`` about the origin."""
    if not 0 < r_B < 1:
        raise ValueError(f"support radius must lie in (0, 1), got {r_B}")
    mesh = partition.mesh
    dist = _triangle_origin_distance(mesh.nodes[mesh.triangles])
    pixel_dist = np.full(partition.r, np.inf)
    np.minimum.at(pixel_dist, partition.element_pixel, dist)
    return SupportBound(float(r_B), np.flatnonzero(pixel_dist < r_B), partition)


def format_mesh(mesh: Mesh, layout: ElectrodeLayout | None = None) -> str:
    ids = layout.edge_electrode if layout is not None else np.full(len(mesh.boundary_edges), -1)
    lines = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles} edges {len(mesh.boundary_edges)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines += [f"{a} {b} {e}" for (a, b), e in zip(mesh.boundary_edges.tolist(), ids.tolist())]
    return "\n".join(lines) + "\n"


def write_mesh(path: str | Path, mesh: Mesh, layout: ElectrodeLayout | None = None) -> None:
    Path(path).write_text(format_mesh(mesh, layout))


def read_mesh(path: str | Path) -> tuple[Mesh, ElectrodeLayout | None]:
    """Read a mesh written by :func:`write_mesh`.

    The layout is rebuilt from the electrode ids on the boundary edges; it is
    ``None`` when every id is -1.  Lattice addresses are not stored, so the
    result only supports the finest pixel partition.
    """
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[0::2] != ["nodes", "triangles", "edges"]:
        raise MeshError(f"bad mesh header: {lines[0]!r}")
    n_nodes, n_tri, n_edges = (int(v) for v in head[1::2])
    body = lines[1:]
    nodes = np.array([[float(v) for v in ln.split()] for ln in body[:n_nodes]])
    tris = np.array([[int(v) for v in ln.split()] for ln in body[n_nodes:n_nodes + n_tri]], dtype=np.int64)
    edata = np.array(
        [[int(v) for v in ln.split()] for ln in body[n_nodes + n_tri:n_nodes + n_tri + n_edges]],
        dtype=np.int64,
    )
    mesh = Mesh(nodes, tris, edata[:, :2])
    mesh.validate()
    ids = edata[:, 2]
    if np.all(ids < 0):
        return mesh, None
    m = int(ids.max()) + 1
    electrodes = []
    for l in range(m):
        edges = np.flatnonzero(ids == l)
        # an electrode may wrap past edge 0
        if len(edges) and edges[0] == 0 and edges[-1] == len(ids) - 1:
            gap = np.flatnonzero(np.diff(edges) > 1)
            if gap.size:
                edges = np.roll(edges, -(gap[0] + 1))
        electrodes.append(edges)
    ang = mesh.boundary_angles
    span = np.mod(np.roll(ang, -1) - ang, 2 * np.pi)
    layout = ElectrodeLayout(m, tuple(electrodes), float(span[ids >= 0].sum() / (2 * np.pi)), ids)
    layout.validate(mesh)
    return mesh, layout

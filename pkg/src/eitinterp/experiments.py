"""End-to-end pipelines behind the command line interface.

Each run returns an in-memory :class:`RunArtifacts` (file name -> bytes) that
:func:`export_run` writes together with a config echo and a hash manifest.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from .config import ExperimentConfig
from .forward import (
    ConductivityField,
    ElectrodeLayout,
    MeasurementMatrix,
    difference_measurement,
    format_mask,
    format_matrix,
    measure,
)
from .geometry import Mesh, PixelPartition, build_disk_mesh, build_pixel_partition, format_mesh, support_bound
from .interpolate import GeometricInterpolator, interpolation_error, linear_interpolate, mask_current_driven
from .phantoms import inclusion_centroids, phantom_conductivity
from .reconstruct import IndicatorField, NoiseSpec, add_noise, beta_indicator
from .sensitivity import SensitivityTensor, assemble_sensitivity, bound_matrix

logger = logging.getLogger(__name__)


@dataclass
class RunArtifacts:
    files: dict[str, bytes] = field(default_factory=dict)

    def add_text(self, name: str, text: str) -> None:
        self.files[name] = text.encode()

    def add_bytes(self, name: str, data: bytes) -> None:
        self.files[name] = data


@dataclass(frozen=True, eq=False)
class Setup:
    """Forward and reconstruction discretisations for one electrode count."""

    m: int
    forward_mesh: Mesh
    forward_layout: ElectrodeLayout
    recon_mesh: Mesh
    recon_layout: ElectrodeLayout
    partition: PixelPartition
    sensitivity: SensitivityTensor
    sigma: ConductivityField
    sigma0: ConductivityField


def reconstruction_side(config: ExperimentConfig, m: int) -> tuple[Mesh, ElectrodeLayout, PixelPartition, SensitivityTensor]:
    """Reconstruction mesh with its pixel sensitivities at ``sigma0``."""
    k = config.reconstruction_refinement
    # rotate the reconstruction lattice by half a boundary cell so no element coincides
    rmesh, rlayout = build_disk_mesh(k, m, config.coverage, angle_offset=np.pi / (8 * 2**k))
    partition = build_pixel_partition(rmesh, config.pixel_level)
    S = assemble_sensitivity(rmesh, rlayout, partition, ConductivityField.constant(rmesh, config.sigma0))
    return rmesh, rlayout, partition, S


def prepare(config: ExperimentConfig, m: int) -> Setup:
    fmesh, flayout = build_disk_mesh(config.forward_refinement, m, config.coverage)
    rmesh, rlayout, partition, S = reconstruction_side(config, m)
    sigma = phantom_conductivity(fmesh, config.phantom, config.sigma0)
    sigma0 = ConductivityField.constant(fmesh, config.sigma0)
    return Setup(m, fmesh, flayout, rmesh, rlayout, partition, S, sigma, sigma0)


def simulate(setup: Setup) -> MeasurementMatrix:
    return difference_measurement(setup.forward_mesh, setup.forward_layout, setup.sigma, setup.sigma0)


def _source_label(method: str, radius: float | None) -> str:
    return method if radius is None else f"{method}_r{radius:g}"


def interpolate_all(
    V_masked: MeasurementMatrix, S: SensitivityTensor, methods, radii
) -> dict[str, MeasurementMatrix]:
    """Fill the current-driven entries with every requested method and radius."""
    out = {}
    if "geometric" in methods:
        for r in radii:
            B = bound_matrix(S, support_bound(S.partition, r))
            out[_source_label("geometric", r)] = GeometricInterpolator(B)(V_masked)
    if "linear" in methods:
        out["linear"] = linear_interpolate(V_masked)
    return out


@dataclass
class ErrorTable:
    m_values: tuple[int, ...]
    rows: dict[tuple[str, float | None], list[float]]

    def entry(self, method: str, radius: float | None, m: int) -> float:
        return self.rows[(method, radius)][self.m_values.index(m)]

    def to_csv(self) -> str:
        lines = ["method,radius," + ",".join(f"m={m}" for m in self.m_values)]
        for (method, radius), errs in self.rows.items():
            r = "" if radius is None else f"{radius:g}"
            lines.append(f"{method},{r}," + ",".join(f"{e:.10g}" for e in errs))
        return "\n".join(lines) + "\n"


def run_table1(config: ExperimentConfig, artifacts: RunArtifacts | None = None) -> ErrorTable:
    """Relative Frobenius interpolation errors for every (method, radius) and m."""
    keys: list[tuple[str, float | None]] = []
    if "linear" in config.methods:
        keys.append(("linear", None))
    if "geometric" in config.methods:
        keys += [("geometric", r) for r in sorted(config.radii, reverse=True)]
    rows: dict[tuple[str, float | None], list[float]] = {k: [] for k in keys}
    columns_plot = None
    for m in config.m_values:
        setup = prepare(config, m)
        V = simulate(setup)
        filled = interpolate_all(mask_current_driven(V), setup.sensitivity, config.methods, config.radii)
        for method, radius in keys:
            rows[(method, radius)].append(interpolation_error(V, filled[_source_label(method, radius)]))
        logger.info("m=%d: %s", m, {k: f"{v[-1]:.4%}" for k, v in rows.items()})
        if artifacts is not None:
            artifacts.add_text(f"V_m{m}.csv", format_matrix(V.values))
            if columns_plot is None or m == 24:
                columns_plot = (m, V, filled)
    table = ErrorTable(tuple(config.m_values), rows)
    if artifacts is not None:
        artifacts.add_text("table1.csv", table.to_csv())
        labels = {k: _source_label(*k) for k in keys}
        artifacts.add_bytes(
            "table1.png",
            plotting.render_error_table(table.m_values, {labels[k]: v for k, v in rows.items()}),
        )
        m, V, filled = columns_plot
        series = {"true": V.values} | {k: v.values for k, v in filled.items()}
        artifacts.add_bytes(f"columns_m{m}.png", plotting.render_columns(series))
    return table


@dataclass
class FigureResult:
    partition: PixelPartition
    indicators: dict[tuple[float, str], IndicatorField]
    overlap: dict[tuple[float, str], tuple[float, float]]
    sources: tuple[str, ...]


def indicator_from(V: MeasurementMatrix, S: SensitivityTensor, delta: float, method: str) -> IndicatorField:
    if V.frobenius() == 0:
        return IndicatorField(np.zeros(S.r), delta, method, note="no change detected")
    return beta_indicator(V, S, delta, method)


def support_overlap(a: IndicatorField, b: IndicatorField, fraction: float = 0.25) -> tuple[float, float]:
    """(pixel agreement fraction, Jaccard index) of the thresholded supports."""
    sa, sb = a.support(fraction), b.support(fraction)
    union = np.count_nonzero(sa | sb)
    jaccard = np.count_nonzero(sa & sb) / union if union else 1.0
    return float(np.mean(sa == sb)), float(jaccard)


def run_reconstruction_figure(config: ExperimentConfig, artifacts: RunArtifacts | None = None) -> FigureResult:
    """Indicator maps from full and interpolated data for each noise level."""
    setup = prepare(config, config.m)
    V = simulate(setup)
    indicators: dict[tuple[float, str], IndicatorField] = {}
    overlap: dict[tuple[float, str], tuple[float, float]] = {}
    sources = ["full"]
    for delta in config.figure_noise:
        Vd = add_noise(V, NoiseSpec(delta, config.seed, config.symmetrize_noise))
        data = {"full": Vd} | interpolate_all(mask_current_driven(Vd), setup.sensitivity, config.methods, config.radii)
        for name, Vs in data.items():
            if name not in sources:
                sources.append(name)
            indicators[(delta, name)] = indicator_from(Vs, setup.sensitivity, delta, name)
        for name in data:
            overlap[(delta, name)] = support_overlap(indicators[(delta, "full")], indicators[(delta, name)])
    result = FigureResult(setup.partition, indicators, overlap, tuple(sources))
    if artifacts is not None:
        _figure_artifacts(result, config, artifacts)
    return result


def indicator_csv(partition: PixelPartition, field_: IndicatorField) -> str:
    lines = ["pixel_index,centroid_x,centroid_y,beta"]
    for i, ((x, y), b) in enumerate(zip(partition.centroids.tolist(), field_.beta.tolist())):
        lines.append(f"{i},{x!r},{y!r},{b!r}")
    return "\n".join(lines) + "\n"


def _figure_artifacts(result: FigureResult, config: ExperimentConfig, artifacts: RunArtifacts) -> None:
    panels = []
    for delta in config.figure_noise:
        row = []
        for name in result.sources:
            ind = result.indicators[(delta, name)]
            artifacts.add_text(f"indicator_{name}_delta{delta:g}.csv", indicator_csv(result.partition, ind))
            row.append((f"{name}, delta={100 * delta:g}%", ind.beta, ind.note))
        panels.append(row)
    artifacts.add_bytes("figure4.png", plotting.render_panels(result.partition, panels))
    lines = ["delta,source,agreement,jaccard"]
    for (delta, name), (agree, jac) in result.overlap.items():
        lines.append(f"{delta:g},{name},{agree:.6f},{jac:.6f}")
    artifacts.add_text("overlap.csv", "\n".join(lines) + "\n")


def centroid_pixels(partition: PixelPartition, points: np.ndarray | None = None) -> np.ndarray:
    """Pixel containing each point (default: the phantom inclusion centroids)."""
    if points is None:
        points = inclusion_centroids()
    mesh = partition.mesh
    p = mesh.nodes[mesh.triangles]
    out = []
    for x, y in np.asarray(points):
        a, b, c = p[:, 0], p[:, 1], p[:, 2]

        def side(u, v):
            return (v[:, 0] - u[:, 0]) * (y - u[:, 1]) - (v[:, 1] - u[:, 1]) * (x - u[:, 0])

        inside = (side(a, b) >= 0) & (side(b, c) >= 0) & (side(c, a) >= 0)
        hit = np.flatnonzero(inside)
        if hit.size == 0:
            raise ValueError(f"point ({x}, {y}) is outside the mesh")
        out.append(partition.element_pixel[hit[0]])
    return np.array(out)


def add_measurement(artifacts: RunArtifacts, stem: str, V: MeasurementMatrix) -> None:
    artifacts.add_text(f"{stem}.csv", format_matrix(V.values))
    artifacts.add_text(f"{stem}.mask.csv", format_mask(V.mask))


def run_simulation(config: ExperimentConfig, artifacts: RunArtifacts) -> MeasurementMatrix:
    """Simulate both measurement matrices along with their (optionally noisy) difference."""
    setup = prepare(config, config.m)
    U = measure(setup.forward_mesh, setup.forward_layout, setup.sigma)
    U0 = measure(setup.forward_mesh, setup.forward_layout, setup.sigma0)
    V = U - U0
    add_measurement(artifacts, "U_sigma", U)
    add_measurement(artifacts, "U_sigma0", U0)
    add_measurement(artifacts, "V", V)
    if config.noise > 0:
        add_measurement(artifacts, "V_noisy", add_noise(V, NoiseSpec(config.noise, config.seed, config.symmetrize_noise)))
    artifacts.add_text("forward_mesh.txt", format_mesh(setup.forward_mesh, setup.forward_layout))
    artifacts.add_text("reconstruction_mesh.txt", format_mesh(setup.recon_mesh, setup.recon_layout))
    return V


def export_run(config: ExperimentConfig, artifacts: RunArtifacts, out_dir: str | Path | None = None) -> Path:
    """Write the artifacts under ``out_dir`` with a config echo and a hash manifest."""
    out = Path(out_dir if out_dir is not None else config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    files = dict(artifacts.files)
    files["config.ini"] = config.to_text().encode()
    entries = {}
    for name in sorted(files):
        data = files[name]
        (out / name).write_bytes(data)
        entries[name] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
    manifest = {"files": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out / "manifest.json"

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eitinterp.forward import (
    ConductivityField,
    DrivePattern,
    MeasurementMatrix,
    adjacent_currents,
    current_driven_mask,
    difference_measurement,
    forward_solver,
    measure,
    read_measurement,
    solve_drive,
    write_measurement,
)
from eitinterp.geometry import build_disk_mesh
from eitinterp.phantoms import disk_inclusion, phantom_conductivity


@pytest.fixture(scope="module")
def disk():
    return build_disk_mesh(4, 16, 0.5)


def test_conductivity_validation():
    with pytest.raises(ValueError):
        ConductivityField(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        ConductivityField(np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        ConductivityField(np.ones((2, 2)))


def test_adjacent_pattern_is_cyclic():
    p = DrivePattern.adjacent(7, 8)
    assert p.currents[7] == 1 and p.currents[0] == -1
    assert p.currents.sum() == 0
    assert np.array_equal(adjacent_currents(8)[:, 7], p.currents)
    with pytest.raises(ValueError):
        DrivePattern(0, np.array([1.0, 0.0, 0.0]))


def test_current_balance_and_shunt_condition(disk):
    mesh, layout = disk
    sigma = ConductivityField.constant(mesh)
    solver = forward_solver(mesh, layout)
    for k in (0, 5, 15):
        u = solve_drive(mesh, layout, sigma, DrivePattern.adjacent(k, 16))
        flux = solver.electrode_currents(sigma, u.nodal[:, None])[:, 0]
        expected = np.zeros(16)
        expected[k], expected[(k + 1) % 16] = 1.0, -1.0
        assert np.max(np.abs(flux - expected)) <= 1e-10
        for l in range(16):
            nodes = layout.electrode_nodes(mesh, l)
            assert np.ptp(u.nodal[nodes]) == 0.0
            assert u.nodal[nodes[0]] == u.electrode_potentials[l]
        assert abs(u.electrode_potentials.sum()) < 1e-12


def test_constant_scaling(disk):
    mesh, layout = disk
    pattern = DrivePattern.adjacent(3, 16)
    u1 = solve_drive(mesh, layout, ConductivityField.constant(mesh, 1.0), pattern)
    u3 = solve_drive(mesh, layout, ConductivityField.constant(mesh, 3.0), pattern)
    assert np.max(np.abs(u3.nodal - u1.nodal / 3)) <= 1e-10 * np.max(np.abs(u1.nodal))


def test_refinement_oracle_m8():
    phis = []
    for k in (6, 7):
        mesh, layout = build_disk_mesh(k, 8, 0.5)
        _, phi = forward_solver(mesh, layout).drive_potentials(ConductivityField.constant(mesh))
        phis.append(phi)
    coarse, fine = phis
    assert np.linalg.norm(coarse - fine) <= 0.01 * np.linalg.norm(fine)


def test_measurement_structure(disk, rng):
    mesh, layout = disk
    sigma = ConductivityField(rng.uniform(0.5, 2.0, mesh.n_triangles))
    U = measure(mesh, layout, sigma)
    nU = U.frobenius()
    assert np.max(np.abs(U.values.sum(axis=0))) <= 1e-12 * nU
    assert np.linalg.norm(U.values - U.values.T) <= 1e-8 * nU
    # definition U_jk = phi_j^(k) - phi_{j+1}^(k)
    _, phi = forward_solver(mesh, layout).drive_potentials(sigma)
    for j, k in [(0, 3), (15, 2), (7, 7)]:
        assert U.values[j, k] == pytest.approx(phi[j, k] - phi[(j + 1) % 16, k], abs=1e-15)


def test_mask_marks_current_driven():
    V = MeasurementMatrix(np.zeros((8, 8)))
    assert np.count_nonzero(V.mask == "C") == 24
    assert np.array_equal(V.mask == "C", current_driven_mask(8))
    assert V.mask[0, 7] == "C" and V.mask[0, 2] == "M"


def test_difference_of_identical_is_zero(disk):
    mesh, layout = disk
    s = phantom_conductivity(mesh, "fig1")
    assert np.all(difference_measurement(mesh, layout, s, s).values == 0)


def test_difference_scaling(disk):
    mesh, layout = disk
    s0 = ConductivityField.constant(mesh)
    V = difference_measurement(mesh, layout, s0.scaled(2.0), s0)
    U0 = measure(mesh, layout, s0)
    assert np.max(np.abs(V.values + U0.values / 2)) <= 1e-10 * np.max(np.abs(U0.values))


def test_electrode_count_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        MeasurementMatrix(np.zeros((8, 8))) - MeasurementMatrix(np.zeros((16, 16)))


def test_phantom_difference_is_nsd(disk):
    mesh, layout = disk
    V = difference_measurement(mesh, layout, phantom_conductivity(mesh, "fig1"), ConductivityField.constant(mesh))
    assert V.frobenius() > 0
    lam = np.linalg.eigvalsh(0.5 * (V.values + V.values.T))
    assert lam.max() <= 1e-8 * V.frobenius()


@settings(max_examples=15, deadline=None)
@given(
    cx=st.floats(-0.5, 0.5),
    cy=st.floats(-0.5, 0.5),
    radius=st.floats(0.1, 0.35),
)
def test_monotonicity_sign(disk, cx, cy, radius):
    mesh, layout = disk
    chi = disk_inclusion(mesh.centroids, (cx, cy), radius).astype(float)
    s0 = ConductivityField.constant(mesh)
    for c, sign in ((1.0, -1), (-0.5, 1)):
        V = difference_measurement(mesh, layout, ConductivityField(1.0 + c * chi), s0).values
        lam = np.linalg.eigvalsh(0.5 * (V + V.T))
        tol = 1e-8 * np.linalg.norm(V)
        assert (sign * lam).min() >= -tol


def test_solver_rejects_wrong_lengths(disk):
    mesh, layout = disk
    solver = forward_solver(mesh, layout)
    with pytest.raises(ValueError):
        solver.stiffness(ConductivityField(np.ones(3)))
    with pytest.raises(ValueError):
        solver.solve(ConductivityField.constant(mesh), np.ones(16))


def test_measurement_round_trip(tmp_path, rng):
    V = MeasurementMatrix(rng.normal(size=(8, 8)))
    V.mask[0, 4] = "I"
    write_measurement(tmp_path / "V.csv", V)
    W = read_measurement(tmp_path / "V.csv")
    assert np.array_equal(V.values, W.values)
    assert np.array_equal(V.mask, W.mask)
    (tmp_path / "V.mask.csv").unlink()
    assert np.count_nonzero(read_measurement(tmp_path / "V.csv").mask == "C") == 24

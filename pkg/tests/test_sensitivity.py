import itertools

import numpy as np
import pytest

from eitinterp.forward import ConductivityField, current_driven_mask, forward_solver, measure
from eitinterp.geometry import SupportBound, support_bound
from eitinterp.sensitivity import (
    assemble_sensitivity,
    bound_matrix,
    frechet_apply,
    read_sensitivity_matrices,
    reduce_system,
    retained_rows,
    symmetric_pinv,
    write_sensitivity,
)


def gram(mesh, layout):
    # energy inner products u_j^T K u_k from the assembled stiffness matrix
    solver = forward_solver(mesh, layout)
    sigma = ConductivityField.constant(mesh)
    nodal, _ = solver.drive_potentials(sigma)
    u = np.zeros((solver.n_unknowns, layout.m))
    u[solver.node_unknown] = nodal
    return u.T @ (solver.stiffness(sigma) @ u)


def test_pixel_matrices_symmetric_nsd(disk16):
    _, _, _, S = disk16
    P = S.pixel_matrices
    norms = np.linalg.norm(P, axis=(1, 2))
    assert np.all(np.linalg.norm(P - P.transpose(0, 2, 1), axis=(1, 2)) <= 1e-10 * norms)
    lam = np.linalg.eigvalsh(P)
    assert np.all(lam[:, -1] <= 1e-10 * norms)
    assert np.all(np.diagonal(P, axis1=1, axis2=2) <= 0)


def test_total_is_minus_gram(disk16):
    mesh, layout, _, S = disk16
    G = gram(mesh, layout)
    assert np.linalg.norm(S.total() + G) <= 1e-10 * np.linalg.norm(G)
    assert np.linalg.norm(frechet_apply(S, np.ones(S.r)) + G) <= 1e-10 * np.linalg.norm(G)


def test_flattening(disk8):
    _, _, _, S = disk8
    i, j, k = 5, 3, 6
    assert S.matrix[j * S.m + k, i] == S.pixel_matrices[i, j, k]
    assert S.matrix.shape == (64, S.r)


def test_frechet_apply_basics(disk8):
    _, _, _, S = disk8
    assert np.all(frechet_apply(S, np.zeros(S.r)) == 0)
    e = np.zeros(S.r)
    e[17] = 1.0
    assert np.array_equal(frechet_apply(S, e), S.pixel_matrices[17])
    with pytest.raises(ValueError):
        frechet_apply(S, np.ones(S.r + 1))


def test_partition_must_match_mesh(disk8, disk16):
    mesh8, layout8, _, _ = disk8
    _, _, part16, _ = disk16
    with pytest.raises(ValueError):
        assemble_sensitivity(mesh8, layout8, part16, ConductivityField.constant(mesh8))


def frechet_orders(mesh, layout, S, pixel, ts):
    s0 = ConductivityField.constant(mesh)
    U0 = measure(mesh, layout, s0).values
    kappa = np.zeros(S.r)
    kappa[pixel] = 1.0
    lin = frechet_apply(S, kappa)
    res = []
    for t in ts:
        sigma = ConductivityField(1.0 + t * kappa[S.partition.element_pixel])
        res.append(np.linalg.norm(measure(mesh, layout, sigma).values - U0 - t * lin))
    res = np.array(res)
    return np.log(res[:-1] / res[1:]) / np.log(np.array(ts[:-1]) / np.array(ts[1:]))


def test_frechet_remainder_is_second_order(disk16_coarse_pixels, rng):
    mesh, layout, _, S = disk16_coarse_pixels
    for pixel in rng.choice(S.r, 3, replace=False):
        orders = frechet_orders(mesh, layout, S, pixel, [1e-1, 3e-2, 1e-2])
        assert np.all(orders >= 1.8), orders


def test_bound_all_pixels(disk8):
    _, _, part, S = disk8
    B = SupportBound(0.99, np.arange(S.r), part)
    assert np.allclose(bound_matrix(S, B).S_B, S.total(), rtol=0, atol=1e-14 * np.abs(S.total()).max())


@pytest.mark.parametrize("r_B", [0.3, 0.6, 0.9])
def test_bound_matrix_structure(disk16, r_B):
    _, _, part, S = disk16
    bm = bound_matrix(S, support_bound(part, r_B))
    SB, P = bm.S_B, bm.S_B_plus
    n = np.linalg.norm(SB, 2)
    assert np.linalg.eigvalsh(SB).max() <= 1e-10 * n
    # independent SVD-based pseudoinverse
    assert np.allclose(P, np.linalg.pinv(SB, rcond=1e-12), rtol=0, atol=1e-8 * np.abs(P).max())
    assert np.linalg.norm(P @ SB @ P - P) <= 1e-8 * np.linalg.norm(P)
    assert np.linalg.norm(SB @ P @ SB - SB) <= 1e-8 * np.linalg.norm(SB)
    # adjacent drives sum to zero, so the constant vector is in the kernel
    assert bm.rank == S.m - 1


def test_bound_errors(disk8, disk16):
    _, _, part8, S8 = disk8
    _, _, part16, _ = disk16
    with pytest.raises(ValueError, match="no pixels"):
        bound_matrix(S8, SupportBound(0.5, np.array([], dtype=int), part8))
    with pytest.raises(ValueError, match="different pixel partitions"):
        bound_matrix(S8, support_bound(part16, 0.5))


def test_symmetric_pinv_of_singular():
    M = np.diag([2.0, -4.0, 0.0])
    P, rank = symmetric_pinv(M)
    assert rank == 2
    assert np.allclose(P, np.diag([0.5, -0.25, 0.0]))


@pytest.mark.parametrize("m,count", [(8, 40), (32, 928)])
def test_retained_rows(m, count):
    rows = retained_rows(m)
    assert len(rows) == count == m * (m - 3)
    expected = [
        j * m + k for j, k in itertools.product(range(m), repeat=2) if min(abs(j - k), m - abs(j - k)) > 1
    ]
    assert rows.tolist() == expected


def test_reduce_system(disk8, rng):
    _, _, _, S = disk8
    V = rng.normal(size=(8, 8))
    Sr, Vr = reduce_system(S, V)
    assert Sr.shape == (40, S.r) and Vr.shape == (40,)
    assert np.array_equal(Vr, V[~current_driven_mask(8)])
    with pytest.raises(ValueError):
        reduce_system(S, np.zeros((6, 6)))


def test_sensitivity_round_trip(tmp_path, disk8):
    _, _, _, S = disk8
    write_sensitivity(tmp_path / "S.csv", S)
    assert np.array_equal(read_sensitivity_matrices(tmp_path / "S.csv"), S.pixel_matrices)


def test_empty_pixel_rejected(disk8):
    mesh, layout, part, _ = disk8
    bad = type(part)(mesh, part.pixels + (np.array([], dtype=int),), part.element_pixel, part.centroids)
    with pytest.raises(ValueError, match="empty pixel"):
        assemble_sensitivity(mesh, layout, bad, ConductivityField.constant(mesh))

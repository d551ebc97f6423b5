import numpy as np
import pytest
import scipy.sparse as sp

from fracsource import mesh as mm
from fracsource.errors import AssumptionViolationError, InvalidParameterError


def test_build_mesh_counts_and_spacing():
    mesh = mm.build_mesh(4)
    assert mesh.n_nodes == 25
    assert mesh.triangles.shape == (32, 3)
    assert mesh.h == 0.25
    assert mesh.nodes[:, 0].min() == -0.5 and mesh.nodes[:, 1].max() == 0.5


def test_build_mesh_rejects_bad_M():
    for bad in (1, 0, -3, 2.5):
        with pytest.raises(InvalidParameterError):
            mm.build_mesh(bad)


def test_node_order_top_is_contiguous():
    mesh = mm.build_mesh(5)
    assert np.array_equal(mesh.top, np.arange(30, 36))
    assert np.all(mesh.nodes[mesh.top, 1] == 0.5)
    # trace grid ordered by x1 and shared with every horizontal layer
    assert np.all(np.diff(mesh.x1) > 0)
    for j in (0, 2, 5):
        layer = mesh.layer(j)
        assert np.array_equal(mesh.nodes[layer, 0], mesh.x1)


def test_triangle_areas_uniform():
    mesh = mm.build_mesh(3)
    _, _, area = mm.triangle_geometry(mesh)
    assert np.allclose(area, 1.0 / 18.0)
    assert np.all(area > 0.0)


def test_boundary_tags():
    mesh = mm.build_mesh(4)
    assert np.sum(mesh.tags == "corner") == 4
    assert len(mesh.lateral) == 2 * (4 + 1)
    assert np.sum(mesh.tags == "top") == 3
    assert np.sum(mesh.tags == "interior") == 9


def test_mass_matrix_facts():
    mesh = mm.build_mesh(4)
    Mmat = mm.assemble_mass(mesh)
    h = mesh.h
    # total mass is the domain area
    assert abs(Mmat.sum() - 1.0) < 1e-14
    # interior diagonal h^2/2, interior row sum h^2
    interior = np.flatnonzero(mesh.tags == "interior")
    diag = Mmat.diagonal()
    rows = np.asarray(Mmat.sum(axis=1)).ravel()
    assert np.allclose(diag[interior], h ** 2 / 2.0)
    assert np.allclose(rows[interior], h ** 2)
    assert abs(Mmat - Mmat.T).max() < 1e-16


def test_stiffness_interior_stencil_identity_coeff():
    # for a = I, q = 0 the interior row is the classic 5-point stencil
    mesh = mm.build_mesh(4)
    co = mm.constant_coefficients()
    A = mm.assemble_stiffness(mesh, co, 0.0)
    node = 2 * 5 + 2  # center node
    row = A.getrow(node).toarray().ravel()
    assert abs(row[node] - 4.0) < 1e-14
    for nb in (node - 1, node + 1, node - 5, node + 5):
        assert abs(row[nb] + 1.0) < 1e-14
    for nb in (node - 6, node + 6, node - 4, node + 4):
        assert abs(row[nb]) < 1e-14
    assert abs(A - A.T).max() < 1e-12


def test_stiffness_annihilates_linears_in_interior():
    mesh = mm.build_mesh(6)
    co = mm.constant_coefficients()
    A = mm.assemble_stiffness(mesh, co, 0.0)
    lin = 0.3 + 1.7 * mesh.nodes[:, 0] - 0.9 * mesh.nodes[:, 1]
    resid = A @ lin
    interior = np.flatnonzero(mesh.tags == "interior")
    assert np.max(np.abs(resid[interior])) < 1e-13


def test_stiffness_rejects_indefinite_coefficient():
    mesh = mm.build_mesh(4)

    def bad_a(x1, x2, t):
        v = np.full_like(np.asarray(x1, dtype=float), -1.0)
        return v, np.zeros_like(v), v

    co = mm.CoefficientSet(a=bad_a, lam=0.25)
    with pytest.raises(AssumptionViolationError):
        mm.assemble_stiffness(mesh, co, 0.0)


def test_trace_mass_row_sums():
    mesh = mm.build_mesh(8)
    B = mm.assemble_trace_mass(mesh)
    ones = np.ones(9)
    # integral of 1 over the observation boundary is its length
    assert abs(ones @ (B @ ones) - 1.0) < 1e-14
    assert abs(B.diagonal()[3] - 2.0 * mesh.h / 3.0) < 1e-15
    assert abs(B.diagonal()[0] - mesh.h / 3.0) < 1e-15


def test_dirichlet_nodes_per_variant():
    mesh = mm.build_mesh(4)
    # lateral including the four corners
    assert len(mm.dirichlet_nodes(mesh, "ISPn")) == 10
    assert len(mm.dirichlet_nodes(mesh, "adjoint")) == 10
    assert len(mm.dirichlet_nodes(mesh, "ISPd-inversion")) == 10
    # lateral plus the top edge
    assert len(mm.dirichlet_nodes(mesh, "ISPd-forward")) == 13
    with pytest.raises(InvalidParameterError):
        mm.dirichlet_nodes(mesh, "nope")


def test_eliminate_rows_cols():
    A = sp.csr_matrix(np.arange(16, dtype=float).reshape(4, 4))
    out = mm.eliminate_rows_cols(A, np.array([1]), unit_diagonal=True).toarray()
    assert np.array_equal(out[1], [0.0, 1.0, 0.0, 0.0])
    assert np.array_equal(out[:, 1], [0.0, 1.0, 0.0, 0.0])
    assert out[0, 0] == 0.0 and out[2, 3] == 11.0
    bare = mm.eliminate_rows_cols(A, np.array([1]), unit_diagonal=False).toarray()
    assert bare[1, 1] == 0.0


def test_apply_bc_zeroes_constrained_rhs():
    mesh = mm.build_mesh(4)
    co = mm.constant_coefficients()
    A = mm.assemble_stiffness(mesh, co, 0.0)
    rhs = np.ones(mesh.n_nodes)
    out, b = mm.apply_bc(mesh, A, rhs, "ISPn")
    idx = mm.dirichlet_nodes(mesh, "ISPn")
    assert np.all(b[idx] == 0.0)
    assert np.allclose(out.diagonal()[idx], 1.0)
    # untouched interior rhs
    interior = np.flatnonzero(mesh.tags == "interior")
    assert np.all(b[interior] == 1.0)


def test_apply_bc_neumann_data_enters_through_trace_mass():
    mesh = mm.build_mesh(4)
    co = mm.constant_coefficients()
    A = mm.assemble_stiffness(mesh, co, 0.0)
    rhs = np.zeros(mesh.n_nodes)
    psi = np.ones(5)
    _, b = mm.apply_bc(mesh, A, rhs, "ISPd-inversion", boundary_data=psi)
    B = mm.assemble_trace_mass(mesh)
    load = B @ psi
    # full edge load integrates to the edge length before corner elimination
    assert abs(load.sum() - 1.0) < 1e-14
    # corner entries are then pinned to zero by the lateral Dirichlet rows
    top = mesh.top
    assert b[top[0]] == 0.0 and b[top[-1]] == 0.0
    assert np.allclose(b[top[1:-1]], load[1:-1])
    assert np.all(b[: top[0]] == 0.0)


def test_apply_bc_requires_data_for_flux_variants():
    mesh = mm.build_mesh(4)
    co = mm.constant_coefficients()
    A = mm.assemble_stiffness(mesh, co, 0.0)
    for variant in ("ISPd-inversion", "adjoint"):
        with pytest.raises(InvalidParameterError):
            mm.apply_bc(mesh, A, np.zeros(mesh.n_nodes), variant)
    with pytest.raises(InvalidParameterError):
        mm.apply_bc(mesh, A, np.zeros(mesh.n_nodes), "bogus")


def test_coefficient_set_separable_synthesis():
    def spatial(x1, x2):
        v = 1.0 + 0.2 * x1 * x2
        return v, np.zeros_like(v), v

    co = mm.CoefficientSet(time_profile=lambda t: 1.0 + t, a_spatial=spatial)
    a11, a12, a22 = co.a(np.array([0.2]), np.array([0.1]), 0.5)
    assert abs(a11[0] - 1.5 * (1.0 + 0.2 * 0.02)) < 1e-15
    assert a12[0] == 0.0
    with pytest.raises(InvalidParameterError):
        mm.CoefficientSet()


def test_validate_coefficients_accepts_identity():
    mesh = mm.build_mesh(6)
    co = mm.constant_coefficients()
    summary = mm.validate_coefficients(mesh, co)
    assert summary["min_eig"] >= 1.0 - 1e-12
    assert summary["max_offdiag_boundary"] == 0.0


def test_validate_coefficients_rejects_offdiagonal_on_boundary():
    mesh = mm.build_mesh(6)

    def skew(x1, x2, t):
        one = np.ones_like(np.asarray(x1, dtype=float))
        return one, 0.2 * one, one

    co = mm.CoefficientSet(a=skew, lam=0.5)
    with pytest.raises(AssumptionViolationError):
        mm.validate_coefficients(mesh, co)


def test_validate_coefficients_rejects_small_R():
    mesh = mm.build_mesh(6)
    co = mm.CoefficientSet(
        a=mm.isotropic(mm.constant_field(1.0)),
        R=lambda x1, x2, t: np.asarray(x1, dtype=float),
        lam=1.0,
        c_R=0.5,
    )
    with pytest.raises(AssumptionViolationError):
        mm.validate_coefficients(mesh, co)


def test_validate_coefficients_rejects_ellipticity_violation():
    mesh = mm.build_mesh(6)
    co = mm.CoefficientSet(a=mm.isotropic(mm.constant_field(3.0)), lam=0.5)
    with pytest.raises(AssumptionViolationError):
        mm.validate_coefficients(mesh, co)

"""P1 finite elements on a uniform right-triangle mesh of (-1/2,1/2)^2.

The square is divided into M x M cells of side h = 1/M, each cell split
along its lower-left to upper-right diagonal.  Nodes are ordered
lexicographically in (x2, x1), so the top boundary x2 = 1/2 (the
observation boundary) occupies the last M+1 indices and the trace of a
nodal vector is a contiguous slice.

Boundary-condition variants:

* ``ISPn``            lateral Dirichlet (x1 = +-1/2, corners included),
                      homogeneous Neumann on top and bottom (natural).
* ``ISPd-forward``    Dirichlet on lateral and top, Neumann on the bottom.
* ``ISPd-inversion``  lateral Dirichlet; measured flux enters the right
                      hand side through the top-edge mass matrix.
* ``adjoint``         lateral Dirichlet; the trace residual enters the
                      right hand side through the top-edge mass matrix.
"""

import numpy as np
import scipy.sparse as sp

from .errors import AssumptionViolationError, InvalidParameterError

ELL = 0.5  # the observation boundary sits at x2 = ELL

VARIANTS = ("ISPn", "ISPd-forward", "ISPd-inversion", "adjoint")

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class Mesh2D:
    """Uniform triangulation of the unit square centered at the origin.

    Attributes
    ----------
    M : int
        Subdivisions per axis; h = 1/M.
    nodes : array, shape ((M+1)^2, 2)
        Node coordinates, lexicographic in (x2, x1).
    triangles : array, shape (2*M^2, 3)
        Node index triples, positively oriented, area h^2/2 each.
    tags : array of str
        Per-node tag in {interior, top, bottom, lateral, corner}.
    top : array
        Indices of the top-boundary nodes ordered by x1 (the trace grid).
    x1 : array
        Trace-grid coordinates, shared with the source grid.
    """

    def __init__(self, M, nodes, triangles, tags):
        self.M = M
        self.h = 1.0 / M
        self.nodes = nodes
        self.triangles = triangles
        self.tags = tags
        self.n_nodes = nodes.shape[0]
        self.top = np.arange(M * (M + 1), (M + 1) ** 2)
        self.bottom = np.arange(0, M + 1)
        self.x1 = nodes[self.top, 0].copy()
        on_lateral = (tags == "lateral") | (tags == "corner")
        self.lateral = np.flatnonzero(on_lateral)

    def layer(self, j):
        """Node indices of the horizontal layer x2 = -1/2 + j*h, ordered by x1."""
        return np.arange(j * (self.M + 1), (j + 1) * (self.M + 1))


def build_mesh(M):
    """Build the uniform right-triangle mesh with M subdivisions per axis.

    Parameters
    ----------
    M : int
        Cells per axis, M >= 2.

    Returns
    -------
    Mesh2D
    """
    if int(M) != M or M < 2:
        raise InvalidParameterError("mesh subdivision count must be an integer >= 2, got %r" % (M,))
    M = int(M)
    x = np.linspace(-0.5, 0.5, M + 1)
    nodes = np.column_stack([np.tile(x, M + 1), np.repeat(x, M + 1)])

    # cell (i, j) has lower-left node j*(M+1)+i; the diagonal runs from the
    # lower-left to the upper-right corner
    ii, jj = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
    ll = (jj * (M + 1) + ii).ravel()
    lr = ll + 1
    ul = ll + (M + 1)
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.vstack([lower, upper])

    tags = np.full(nodes.shape[0], "interior", dtype="<U8")
    on_lat = np.isclose(np.abs(nodes[:, 0]), 0.5)
    on_top = np.isclose(nodes[:, 1], 0.5)
    on_bot = np.isclose(nodes[:, 1], -0.5)
    tags[on_top] = "top"
    tags[on_bot] = "bottom"
    tags[on_lat] = "lateral"
    tags[on_lat & (on_top | on_bot)] = "corner"
    return Mesh2D(M, nodes, triangles, tags)


def centroids(mesh):
    """Triangle centroids, shape (2*M^2, 2)."""
    return mesh.nodes[mesh.triangles].mean(axis=1)


def triangle_geometry(mesh):
    """Edge-difference vectors b, c and areas of all triangles.

    b[k, i] = y_j - y_k and c[k, i] = x_k - x_j (cyclic), so the P1 basis
    gradient on triangle k is (b[k, i], c[k, i]) / (2 * area_k).
    """
    pts = mesh.nodes[mesh.triangles]
    x = pts[:, :, 0]
    y = pts[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (
        (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
        - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    )
    return b, c, area


def _scatter(mesh, local):
    # assemble (n_tri, 3, 3) local blocks into a CSR matrix
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    A = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    )
    return A.tocsr()


def assemble_mass(mesh):
    """Consistent P1 mass matrix, entries int phi_i phi_j."""
    _, _, area = triangle_geometry(mesh)
    local = area[:, None, None] * _LOCAL_MASS[None, :, :]
    return assemble_from_local(mesh, local)


def assemble_from_local(mesh, local):
    """Sparse assembly of per-triangle 3x3 blocks."""
    return _scatter(mesh, local)


def assemble_gradient_part(mesh, a_fn, t):
    """Stiffness contribution int a grad(phi_j) . grad(phi_i) dx.

    The coefficient a is evaluated at triangle centroids (one-point
    quadrature); P1 gradients are constant so the basis factor is exact.

    Parameters
    ----------
    a_fn : callable
        (x1, x2, t) -> (a11, a12, a22) arrays over the sample points.
    """
    b, c, area = triangle_geometry(mesh)
    cx = centroids(mesh)
    a11, a12, a22 = (np.broadcast_to(np.asarray(v, dtype=float), cx[:, 0].shape)
                     for v in a_fn(cx[:, 0], cx[:, 1], t))
    bb = b[:, :, None] * b[:, None, :]
    cc = c[:, :, None] * c[:, None, :]
    bc = b[:, :, None] * c[:, None, :]
    cb = c[:, :, None] * b[:, None, :]
    scale = 1.0 / (4.0 * area)
    local = scale[:, None, None] * (
        a11[:, None, None] * bb
        + a12[:, None, None] * (bc + cb)
        + a22[:, None, None] * cc
    )
    return _scatter(mesh, local), (a11, a12, a22)


def assemble_reaction_part(mesh, q_fn, t):
    """Stiffness contribution int q phi_j phi_i dx, q at centroids."""
    _, _, area = triangle_geometry(mesh)
    cx = centroids(mesh)
    q = np.broadcast_to(np.asarray(q_fn(cx[:, 0], cx[:, 1], t), dtype=float), area.shape)
    local = (q * area)[:, None, None] * _LOCAL_MASS[None, :, :]
    return _scatter(mesh, local)


def assemble_stiffness(mesh, coeffs, t):
    """Time-level stiffness matrix int a grad . grad + q phi phi dx.

    Raises AssumptionViolationError when the sampled coefficient matrix is
    not positive definite at some centroid.
    """
    A, (a11, a12, a22) = assemble_gradient_part(mesh, coeffs.a, t)
    det = a11 * a22 - a12 * a12
    if np.any(a11 <= 0.0) or np.any(det <= 0.0):
        raise AssumptionViolationError(
            "diffusivity is not positive definite at t=%g (min a11=%g, min det=%g)"
            % (t, a11.min(), det.min())
        )
    return A + assemble_reaction_part(mesh, coeffs.q, t)


def assemble_trace_mass(mesh):
    """1-D P1 mass matrix of the top edge on the trace grid, (M+1)^2 sparse."""
    M = mesh.M
    h = mesh.h
    main = np.full(M + 1, 2.0 * h / 3.0)
    main[0] = main[-1] = h / 3.0
    off = np.full(M, h / 6.0)
    return sp.diags([off, main, off], [-1, 0, 1]).tocsr()


def dirichlet_nodes(mesh, variant):
    """Indices of the nodes eliminated by the variant's Dirichlet condition."""
    if variant not in VARIANTS:
        raise InvalidParameterError("unknown boundary-condition variant %r" % (variant,))
    if variant == "ISPd-forward":
        return np.union1d(mesh.lateral, mesh.top)
    return mesh.lateral


def eliminate_rows_cols(A, idx, unit_diagonal=True):
    """Zero the rows and columns idx; optionally put 1 on their diagonal."""
    keep = np.ones(A.shape[0])
    keep[idx] = 0.0
    D = sp.diags(keep)
    out = D @ A @ D
    if unit_diagonal:
        pin = np.zeros(A.shape[0])
        pin[idx] = 1.0
        out = out + sp.diags(pin)
    return out.tocsr()


def apply_bc(mesh, op, rhs, variant, boundary_data=None):
    """Impose the variant's boundary conditions on an assembled system.

    Dirichlet rows and columns are eliminated symmetrically (unit diagonal,
    zero right hand side), which keeps the operator SPD.  For the
    Neumann-data variants the supplied datum enters the right hand side
    through the top-edge mass matrix before the Dirichlet entries (the two
    top corners among them) are zeroed.

    Parameters
    ----------
    op : sparse matrix
    rhs : array, full node length
    variant : str
        One of VARIANTS.
    boundary_data : array or None
        Conormal Neumann datum on the trace grid, required for the
        ISPd-inversion and adjoint variants.

    Returns
    -------
    (sparse matrix, array)
    """
    if variant not in VARIANTS:
        raise InvalidParameterError("unknown boundary-condition variant %r" % (variant,))
    needs_data = variant in ("ISPd-inversion", "adjoint")
    if needs_data and boundary_data is None:
        raise InvalidParameterError("variant %r requires Neumann boundary data" % (variant,))
    rhs = np.array(rhs, dtype=float, copy=True)
    if needs_data:
        B = assemble_trace_mass(mesh)
        rhs[mesh.top] += B @ np.asarray(boundary_data, dtype=float)
    idx = dirichlet_nodes(mesh, variant)
    out = eliminate_rows_cols(op, idx)
    rhs[idx] = 0.0
    return out, rhs


# ---------------------------------------------------------------------------
# coefficients


class CoefficientSet:
    """Evaluable model coefficients with assumption metadata.

    Parameters
    ----------
    a : callable or None
        (x1, x2, t) -> (a11, a12, a22), vectorized over the point arrays.
        May be omitted when time_profile and a_spatial are given.
    q : callable
        (x1, x2, t) -> array, nonnegative reaction coefficient.
    R : callable
        (x1, x2, t) -> array, source prefactor.
    lam : float
        Ellipticity constant: lam |xi|^2 <= a xi . xi <= |xi|^2 / lam.
    c_R : float
        Claimed lower bound of |R| on the observation boundary.
    time_dependent : bool
        False when a and q do not depend on t; the solver then reuses one
        factorization for all time levels.
    time_profile : callable or None
        s(t) when a(x, t) = s(t) * a_spatial(x) with time-independent q;
        lets the solver assemble the spatial part once and rescale it.
    a_spatial : callable or None
        (x1, x2) -> (a11, a12, a22), the spatial factor for time_profile.
    """

    def __init__(self, a=None, q=None, R=None, lam=1.0, c_R=1e-8,
                 time_dependent=True, time_profile=None, a_spatial=None):
        if a is None:
            if time_profile is None or a_spatial is None:
                raise InvalidParameterError("either a or (time_profile, a_spatial) must be given")

            def a(x1, x2, t, _s=time_profile, _as=a_spatial):
                s = _s(t)
                a11, a12, a22 = _as(x1, x2)
                return s * np.asarray(a11, dtype=float), s * np.asarray(a12, dtype=float), s * np.asarray(a22, dtype=float)

        self.a = a
        self.q = q if q is not None else constant_field(0.0)
        self.R = R if R is not None else constant_field(1.0)
        self.lam = float(lam)
        self.c_R = float(c_R)
        self.time_dependent = bool(time_dependent)
        self.time_profile = time_profile
        self.a_spatial = a_spatial


def constant_field(value):
    """Scalar field (x1, x2, t) -> value, broadcasting over the points."""

    def field(x1, x2, t):
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        return np.full(shape, float(value))

    return field


def isotropic(fn):
    """Wrap a scalar diffusivity (x1, x2, t) -> v into the (a11, a12, a22) form."""

    def a(x1, x2, t):
        v = np.asarray(fn(x1, x2, t), dtype=float)
        return v, np.zeros_like(v), v

    return a


def isotropic_spatial(fn):
    """Wrap a scalar spatial factor (x1, x2) -> v into the (a11, a12, a22) form."""

    def a(x1, x2):
        v = np.asarray(fn(x1, x2), dtype=float)
        return v, np.zeros_like(v), v

    return a


def constant_coefficients(a0=1.0, q0=0.0, R0=1.0):
    """Constant-coefficient set (a0 * identity, q0, R0), handy for tests."""
    lam = min(a0, 1.0 / a0)
    return CoefficientSet(
        a=isotropic(constant_field(a0)),
        q=constant_field(q0),
        R=constant_field(R0),
        lam=lam,
        c_R=min(abs(R0), 1.0) * 0.5 if R0 != 0.0 else 0.0,
        time_dependent=False,
    )


def validate_coefficients(mesh, coeffs, T=1.0, n_time=10, tol=1e-10):
    """Sample-based checks of the structural coefficient assumptions.

    Ellipticity is checked at all triangle centroids, the off-diagonal
    condition a12 = 0 and the |R| lower bound at the top/bottom boundary
    nodes, all on an n_time-point uniform time grid.

    Returns a summary dict; raises AssumptionViolationError on violation.
    """
    times = np.linspace(0.0, T, n_time)
    cx = centroids(mesh)
    x1 = mesh.x1
    top_x2 = np.full_like(x1, ELL)
    bot_x2 = np.full_like(x1, -ELL)

    min_eig = np.inf
    max_eig = -np.inf
    max_offdiag = 0.0
    min_R = np.inf
    for t in times:
        a11, a12, a22 = (np.broadcast_to(np.asarray(v, dtype=float), cx[:, 0].shape)
                         for v in coeffs.a(cx[:, 0], cx[:, 1], t))
        mean = 0.5 * (a11 + a22)
        radius = np.sqrt(0.25 * (a11 - a22) ** 2 + a12 ** 2)
        min_eig = min(min_eig, float(np.min(mean - radius)))
        max_eig = max(max_eig, float(np.max(mean + radius)))
        for x2b in (top_x2, bot_x2):
            _, a12b, _ = coeffs.a(x1, x2b, t)
            max_offdiag = max(max_offdiag, float(np.max(np.abs(a12b))))
        min_R = min(min_R, float(np.min(np.abs(coeffs.R(x1, top_x2, t)))))

    if min_eig < coeffs.lam - tol:
        raise AssumptionViolationError(
            "ellipticity lower bound violated: min eigenvalue %g < lambda %g"
            % (min_eig, coeffs.lam)
        )
    if max_eig > 1.0 / coeffs.lam + tol:
        raise AssumptionViolationError(
            "ellipticity upper bound violated: max eigenvalue %g > 1/lambda %g"
            % (max_eig, 1.0 / coeffs.lam)
        )
    if max_offdiag > tol:
        raise AssumptionViolationError(
            "a12 must vanish on the top/bottom boundary; sampled max |a12| = %g"
            % (max_offdiag,)
        )
    if min_R < coeffs.c_R:
        raise AssumptionViolationError(
            "|R| on the observation boundary drops to %g below the bound %g"
            % (min_R, coeffs.c_R)
        )
    return {
        "min_eig": min_eig,
        "max_eig": max_eig,
        "max_offdiag_boundary": max_offdiag,
        "min_R_top": min_R,
    }

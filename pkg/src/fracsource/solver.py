"""Time stepping for the direct, sensitivity and adjoint problems.

Scheme: at every level n >= 1 solve

    (tau^-alpha w_0 Mass + Stiff(t_n)) u_n
        = load_n - tau^-alpha sum_{j=1}^{n} w_j Mass u_{n-j}

with the CQ weights w_j of (1 - z)^alpha, Dirichlet rows and columns
eliminated per variant, and loads assembled with the full mass matrix
before the constrained entries are zeroed.

The adjoint sweep is the exact transpose of the forward block system
(reversed time, same weights, same per-level operators), so the discrete
duality identity

    sum_n <v_n, (Mass F)_n> tau = sum_n <residual_n, trace(u_F)_n>_omega tau

holds to rounding and the gradients built on it are exact for the
discrete misfit.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import mesh as meshmod
from .errors import InvalidParameterError

FACTOR_BUDGET = 1.2e9  # bytes of cached sparse LU factors per stepper


@dataclass
class LateralObservation:
    """Data on the observation boundary omega x {1/2} x (0, T].

    values has shape (N+1, M+1) with time along axis 0; row 0 is t = 0.
    kind is "trace" or "flux"; delta is the known noise level, if any.
    """

    kind: str
    values: np.ndarray
    delta: Optional[float] = None


class Stepper:
    """Owns the assembled operators and factorizations of one problem setup.

    The mesh, coefficients and weights are treated as immutable; a stepper
    may be reused for any number of solves (CG iterations reuse the cached
    factorizations).  Space-time fields are arrays of shape
    (N+1, n_nodes) with u[0] = 0.
    """

    def __init__(self, mesh, coeffs, weights, grid, variant, factor_budget=FACTOR_BUDGET):
        if variant not in meshmod.VARIANTS:
            raise InvalidParameterError("unknown boundary-condition variant %r" % (variant,))
        self.mesh = mesh
        self.coeffs = coeffs
        self.weights = weights
        self.grid = grid
        self.variant = variant
        self.scale = grid.tau ** (-weights.alpha)
        if len(weights) < grid.N + 1:
            raise InvalidParameterError("weight array shorter than the time grid")

        self.constrained = meshmod.dirichlet_nodes(mesh, variant)
        self.top = mesh.top
        self._x1 = mesh.nodes[:, 0]
        self._x2 = mesh.nodes[:, 1]
        self._top_x2 = np.full(mesh.M + 1, meshmod.ELL)

        self.mass = meshmod.assemble_mass(mesh)
        keep = np.ones(mesh.n_nodes)
        keep[self.constrained] = 0.0
        D = sp.diags(keep)
        self.mass_bc = (D @ self.mass @ D).tocsr()
        self.trace_mass = meshmod.assemble_trace_mass(mesh)
        pin = np.zeros(mesh.n_nodes)
        pin[self.constrained] = 1.0
        self._pin = sp.diags(pin)
        self._keep_diag = D

        self.factor_budget = factor_budget
        self._factors = {}
        self._cache_ok = None
        self._single = None
        self._parts = None
        if not coeffs.time_dependent:
            A = meshmod.assemble_stiffness(mesh, coeffs, grid.nodes[0])
            self._single = spla.splu(self._bc_system(A).tocsc())
        elif coeffs.time_profile is not None and coeffs.a_spatial is not None:
            # separable diffusivity: assemble the spatial parts once
            def a_fixed(x1, x2, t):
                return coeffs.a_spatial(x1, x2)

            A_a, _ = meshmod.assemble_gradient_part(mesh, a_fixed, 0.0)
            A_q = meshmod.assemble_reaction_part(mesh, coeffs.q, grid.nodes[0])
            self._parts = (
                (D @ A_a @ D).tocsr(),
                (D @ A_q @ D).tocsr(),
            )

    # -- operators ---------------------------------------------------------

    def _bc_system(self, A_full):
        S = self.scale * self.mass + A_full
        return meshmod.eliminate_rows_cols(S, self.constrained)

    def _system(self, n):
        t = self.grid.nodes[n]
        if self._parts is not None:
            A_a, A_q = self._parts
            s = self.coeffs.time_profile(t)
            S = self.scale * self.mass_bc + s * A_a + A_q + self._pin
            return S.tocsr()
        A = meshmod.assemble_stiffness(self.mesh, self.coeffs, t)
        return self._bc_system(A)

    def _factor(self, n):
        if self._single is not None:
            return self._single
        lu = self._factors.get(n)
        if lu is not None:
            return lu
        lu = spla.splu(self._system(n).tocsc())
        if self._cache_ok is None:
            per = lu.nnz * 12 + 16 * self.mesh.n_nodes
            self._cache_ok = per * self.grid.N <= self.factor_budget
        if self._cache_ok:
            self._factors[n] = lu
        return lu

    # -- loads --------------------------------------------------------------

    def source_load(self, f_n, t):
        """Load vector Mass @ (f extended along mesh columns * R(., t)).

        Relies on the lexicographic node order: the nodal extension of the
        trace-grid samples f_n is a plain tile across the M+1 layers.
        """
        F = np.tile(np.asarray(f_n, dtype=float), self.mesh.M + 1)
        F = F * np.asarray(self.coeffs.R(self._x1, self._x2, t), dtype=float)
        return self.mass @ F

    def neumann_load(self, psi_n, t):
        """Top-edge load for measured flux psi: B @ (a22(., 1/2, t) * psi)."""
        _, _, a22 = self.coeffs.a(self.mesh.x1, self._top_x2, t)
        return self.trace_mass @ (np.asarray(a22, dtype=float) * np.asarray(psi_n, dtype=float))

    # -- sweeps --------------------------------------------------------------

    def solve_direct(self, f=None, neumann=None):
        """March the direct problem forward; returns U of shape (N+1, n_nodes).

        Parameters
        ----------
        f : array or None
            Source samples on the trace grid x time grid, shape (N+1, M+1);
            row 0 is ignored (zero initial data).
        neumann : array or None
            Measured flux on the top edge, same shape; required for the
            ISPd-inversion variant (pass zeros for sensitivity solves).
        """
        if self.variant == "ISPd-inversion" and neumann is None:
            raise InvalidParameterError(
                "the ISPd-inversion variant requires Neumann data (pass zeros "
                "for sensitivity solves)"
            )
        expected = (self.grid.N + 1, self.mesh.M + 1)
        for name, arr in (("f", f), ("neumann", neumann)):
            if arr is not None and np.shape(arr) != expected:
                raise InvalidParameterError(
                    "%s must have shape %r, got %r" % (name, expected, np.shape(arr))
                )
        N = self.grid.N
        nn = self.mesh.n_nodes
        w = self.weights.w
        wr = w[N::-1].copy()  # wr[k] = w[N-k]
        U = np.zeros((N + 1, nn))
        Z = np.zeros((N + 1, nn))
        for n in range(1, N + 1):
            t = self.grid.nodes[n]
            b = np.zeros(nn)
            if f is not None:
                b += self.source_load(f[n], t)
            if neumann is not None:
                b[self.top] += self.neumann_load(neumann[n], t)
            b[self.constrained] = 0.0
            hist = np.dot(wr[N - n : N], Z[:n])
            rhs = b - self.scale * hist
            U[n] = self._factor(n).solve(rhs)
            Z[n] = self.mass_bc @ U[n]
        return U

    def solve_adjoint(self, residual):
        """Reversed sweep, the exact transpose of solve_direct's linear map.

        residual rows 1..N live on the trace grid; they enter through the
        top-edge mass matrix.  Returns V of shape (N+1, n_nodes) with
        V[0] = 0 (the forward scheme never sees level 0).
        """
        expected = (self.grid.N + 1, self.mesh.M + 1)
        if np.shape(residual) != expected:
            raise InvalidParameterError(
                "residual must have shape %r, got %r" % (expected, np.shape(residual))
            )
        N = self.grid.N
        nn = self.mesh.n_nodes
        w = self.weights.w
        V = np.zeros((N + 1, nn))
        Zv = np.zeros((N + 1, nn))
        for n in range(N, 0, -1):
            load = np.zeros(nn)
            load[self.top] = self.trace_mass @ np.asarray(residual[n], dtype=float)
            load[self.constrained] = 0.0
            k = N - n
            if k > 0:
                load -= self.scale * np.dot(w[1 : k + 1], Zv[n + 1 : N + 1])
            V[n] = self._factor(n).solve(load)
            Zv[n] = self.mass_bc @ V[n]
        return V


def solve_direct(mesh, coeffs, weights, grid, f, variant, neumann_data=None):
    """One-shot direct solve; see Stepper.solve_direct.

    neumann_data may be a LateralObservation or a plain array.
    """
    psi = neumann_data.values if isinstance(neumann_data, LateralObservation) else neumann_data
    stepper = Stepper(mesh, coeffs, weights, grid, variant)
    return stepper.solve_direct(f=f, neumann=psi)


def solve_adjoint(mesh, coeffs, weights, grid, residual):
    """One-shot adjoint solve; see Stepper.solve_adjoint."""
    r = residual.values if isinstance(residual, LateralObservation) else residual
    stepper = Stepper(mesh, coeffs, weights, grid, "adjoint")
    return stepper.solve_adjoint(r)


def trace_top(U, mesh):
    """Trace of a space-time field on the observation boundary."""
    return LateralObservation("trace", np.array(U[:, mesh.top]))


def trace_values(U, mesh):
    """Trace values as a plain (N+1, M+1) array."""
    return U[:, mesh.top]


def flux_top(U, mesh, coeffs=None):
    """Discrete d_x2 u on the top edge, one-sided quadratic stencil.

    (3 u_M - 4 u_{M-1} + u_{M-2}) / (2h), exact on quadratics in x2.
    """
    if mesh.M < 3:
        raise InvalidParameterError("flux extraction needs at least 3 node layers (M >= 3)")
    M = mesh.M
    u0 = U[:, mesh.layer(M)]
    u1 = U[:, mesh.layer(M - 1)]
    u2 = U[:, mesh.layer(M - 2)]
    vals = (3.0 * u0 - 4.0 * u1 + u2) / (2.0 * mesh.h)
    return LateralObservation("flux", vals)


def second_diff_top(U, mesh, stencil="3-layer"):
    """One-sided approximation of d2_x2 u on the top edge.

    "3-layer": (u_M - 2 u_{M-1} + u_{M-2}) / h^2 (first order at the edge);
    "4-layer": (2 u_M - 5 u_{M-1} + 4 u_{M-2} - u_{M-3}) / h^2 (second order).
    """
    M = mesh.M
    if stencil == "3-layer":
        if M < 3:
            raise InvalidParameterError("3-layer stencil needs M >= 3")
        u0 = U[:, mesh.layer(M)]
        u1 = U[:, mesh.layer(M - 1)]
        u2 = U[:, mesh.layer(M - 2)]
        return (u0 - 2.0 * u1 + u2) / mesh.h ** 2
    if stencil == "4-layer":
        if M < 4:
            raise InvalidParameterError("4-layer stencil needs M >= 4")
        u0 = U[:, mesh.layer(M)]
        u1 = U[:, mesh.layer(M - 1)]
        u2 = U[:, mesh.layer(M - 2)]
        u3 = U[:, mesh.layer(M - 3)]
        return (2.0 * u0 - 5.0 * u1 + 4.0 * u2 - u3) / mesh.h ** 2
    raise InvalidParameterError("unknown second-difference stencil %r" % (stencil,))

"""Misfit, adjoint gradient, CG reconstruction and the fixed-point path.

All space-time norms on the trace grid use the right-endpoint rectangle
rule in time and the 1-D boundary mass matrix in space,

    ||x||^2 = tau * sum_{n=1}^{N} x_n^T B x_n,

the inner product under which the discrete adjoint is the exact transpose
of the forward map.  Consequently the computed gradient is exact for the
discrete misfit and the CG line search is exactly quadratic.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla
from scipy import ndimage

from . import mesh as meshmod
from .errors import (
    AssumptionViolationError,
    DegenerateDirectionError,
    DivergenceError,
    InvalidParameterError,
)
from .fractime import caputo_apply
from .solver import LateralObservation, Stepper, second_diff_top, trace_values


def spacetime_inner(x, y, B, tau):
    """Inner product tau * sum_{n>=1} x_n^T B y_n; row 0 (t=0) is excluded."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise InvalidParameterError("shape mismatch %r vs %r" % (x.shape, y.shape))
    return tau * float(np.sum(x[1:] * (B @ y[1:].T).T))


def spacetime_norm(x, B, tau):
    """Norm induced by spacetime_inner."""
    return np.sqrt(max(spacetime_inner(x, x, B, tau), 0.0))


def error_metric(f_hat, f_true, mesh, grid):
    """Reconstruction error ||f_hat - f_true|| in the trace-grid norm."""
    f_hat = np.asarray(f_hat, dtype=float)
    f_true = np.asarray(f_true, dtype=float)
    if f_hat.shape != f_true.shape:
        raise InvalidParameterError(
            "source grids differ: %r vs %r" % (f_hat.shape, f_true.shape)
        )
    B = meshmod.assemble_trace_mass(mesh)
    return spacetime_norm(f_hat - f_true, B, grid.tau)


class InverseProblem:
    """Forward map, misfit and gradient for one observation setup.

    Parameters
    ----------
    mesh, coeffs, weights, grid : discretization objects
    isp : {"ISPn", "ISPd"}
        Which lateral observation drives the misfit.  "ISPn" measures the
        trace of the Neumann forward problem; "ISPd" measures the flux of
        the Dirichlet forward problem, imposed here as Neumann data with a
        zero Dirichlet target.
    data : LateralObservation or array
        The (noisy) observation g^delta; kind "trace" for ISPn, "flux" for
        ISPd.
    """

    def __init__(self, mesh, coeffs, weights, grid, isp="ISPn", data=None):
        if isp not in ("ISPn", "ISPd"):
            raise InvalidParameterError("isp must be 'ISPn' or 'ISPd', got %r" % (isp,))
        self.mesh = mesh
        self.coeffs = coeffs
        self.weights = weights
        self.grid = grid
        self.isp = isp
        variant = "ISPn" if isp == "ISPn" else "ISPd-inversion"
        self.stepper = Stepper(mesh, coeffs, weights, grid, variant)
        self.B = meshmod.assemble_trace_mass(mesh)
        self._B_lu = spla.splu(self.B.tocsc())
        self._zero_psi = np.zeros((grid.N + 1, mesh.M + 1))
        self._nodes_x1 = mesh.nodes[:, 0]
        self._nodes_x2 = mesh.nodes[:, 1]

        values = data.values if isinstance(data, LateralObservation) else data
        if isp == "ISPn":
            if values is None:
                values = self._zero_psi
            self.target = np.asarray(values, dtype=float)
            self.psi = None
        else:
            if values is None:
                raise InvalidParameterError("ISPd needs the measured flux as data")
            self.target = self._zero_psi
            self.psi = np.asarray(values, dtype=float)

    # -- inner products -----------------------------------------------------

    def inner(self, x, y):
        return spacetime_inner(x, y, self.B, self.grid.tau)

    def norm(self, x):
        return spacetime_norm(x, self.B, self.grid.tau)

    # -- forward map ---------------------------------------------------------

    def forward_trace(self, f):
        """Trace of the forward solution driven by source f and the measured
        boundary data (ISPd); f=None means the zero source."""
        if self.isp == "ISPn":
            if f is None:
                return np.zeros((self.grid.N + 1, self.mesh.M + 1))
            U = self.stepper.solve_direct(f=f)
        else:
            U = self.stepper.solve_direct(f=f, neumann=self.psi)
        return trace_values(U, self.mesh)

    def sensitivity_trace(self, d):
        """Trace of the solution driven by source d alone (zero boundary data)."""
        if self.isp == "ISPn":
            U = self.stepper.solve_direct(f=d)
        else:
            U = self.stepper.solve_direct(f=d, neumann=self._zero_psi)
        return trace_values(U, self.mesh)

    def residual(self, f):
        return self.forward_trace(f) - self.target

    # -- misfit and gradient ---------------------------------------------------

    def misfit(self, f):
        r = self.residual(f)
        return 0.5 * self.norm(r) ** 2

    def gradient_from_adjoint(self, V):
        """Riesz representative of J' on the trace grid.

        Column i of the gradient is the mass-weighted x2-integral of R*v
        over the mesh column at x1_i, premassaged by the boundary mass:
        B grad_n = P^T (R_n * (Mass v_n)) with P the column extension.
        """
        M = self.mesh.M
        N = self.grid.N
        g = np.zeros((N + 1, M + 1))
        for n in range(1, N + 1):
            t = self.grid.nodes[n]
            Rn = np.asarray(self.coeffs.R(self._nodes_x1, self._nodes_x2, t), dtype=float)
            y = Rn * (self.stepper.mass @ V[n])
            g[n] = self._B_lu.solve(y.reshape(M + 1, M + 1).sum(axis=0))
        return g

    def gradient(self, residual):
        V = self.stepper.solve_adjoint(residual)
        return self.gradient_from_adjoint(V)


def eval_J(f, problem):
    """Misfit J(f) = 1/2 ||trace(u_f) - g^delta||^2 in the trace-grid norm."""
    return problem.misfit(f)


def eval_gradient(f, problem):
    """Exact gradient of the discrete misfit at f, on the source grid."""
    return problem.gradient(problem.residual(f))


def discrepancy_stop(residual_norm, c, delta):
    """True once the residual has dropped to c * delta (c > 1 required)."""
    if c <= 1.0:
        raise InvalidParameterError("discrepancy constant must exceed 1, got %r" % (c,))
    if delta < 0.0:
        raise InvalidParameterError("noise level must be nonnegative, got %r" % (delta,))
    return residual_norm <= c * delta


@dataclass
class ReconstructionReport:
    """Outcome of one reconstruction run."""

    f_hat: np.ndarray
    stop_index: int
    e: Optional[float]
    residual_norm: float
    delta: Optional[float]
    history: dict
    x1: np.ndarray
    t: np.ndarray
    f_true: Optional[np.ndarray] = None
    config: dict = field(default_factory=dict)


def cg_reconstruct(problem, delta=None, c_dp=1.01, k_max=50, f_true=None,
                   best_iterate=False, config=None):
    """Conjugate-gradient reconstruction of the source component.

    Starts from f = 0 and minimizes the misfit with Fletcher-Reeves
    conjugation and exact line search.  Each iteration costs one adjoint
    and one forward solve; the residual is advanced through the linearity
    of the forward map and the reported final residual is recomputed from
    a fresh solve.

    Parameters
    ----------
    problem : InverseProblem
    delta : float or None
        Noise level for the discrepancy stop (residual <= c_dp * delta);
        None disables it and the loop runs k_max iterations.
    c_dp : float
        Discrepancy constant, > 1.
    k_max : int
        Iteration cap.
    f_true : array or None
        When known, the error ||f_k - f_true|| is logged per iterate.
    best_iterate : bool
        Return the minimum-error iterate instead of the last one (requires
        f_true; used for the flux-data benchmark where the discrepancy
        principle does not apply directly).

    Returns
    -------
    ReconstructionReport
    """
    if k_max < 1:
        raise InvalidParameterError("iteration cap must be >= 1, got %r" % (k_max,))
    if best_iterate and f_true is None:
        raise InvalidParameterError("best_iterate mode needs the true source")

    N, M = problem.grid.N, problem.mesh.M
    f = np.zeros((N + 1, M + 1))
    r = problem.residual(None)
    hist = {"J": [], "residual_norm": [], "error": [], "step": [], "gamma": []}
    d = None
    gg_prev = None
    best = None
    k = 0
    stop_index = 0
    while True:
        res_norm = problem.norm(r)
        hist["J"].append(0.5 * res_norm ** 2)
        hist["residual_norm"].append(res_norm)
        if f_true is not None:
            e_k = problem.norm(f - f_true)
            hist["error"].append(e_k)
            if best is None or e_k < best[0]:
                best = (e_k, f.copy(), k)
        stop_index = k
        if delta is not None and not best_iterate and discrepancy_stop(res_norm, c_dp, delta):
            break
        if k >= k_max:
            break
        g = problem.gradient(r)
        gg = problem.inner(g, g)
        if gg == 0.0:
            break
        gamma = 0.0 if d is None else gg / gg_prev
        d = -g if d is None else -g + gamma * d
        hist["gamma"].append(gamma)
        w = problem.sensitivity_trace(d)
        ww = problem.inner(w, w)
        if ww == 0.0:
            raise DegenerateDirectionError(
                "search direction has zero forward sensitivity at iteration %d" % k
            )
        s = -problem.inner(w, r) / ww
        hist["step"].append(s)
        f = f + s * d
        r = r + s * w
        gg_prev = gg
        k += 1

    e = None
    if best_iterate:
        e, f, stop_index = best
    final_res = problem.norm(problem.residual(f))
    if f_true is not None and e is None:
        e = problem.norm(f - f_true)
    return ReconstructionReport(
        f_hat=f,
        stop_index=stop_index,
        e=e,
        residual_norm=final_res,
        delta=delta,
        history=hist,
        x1=problem.mesh.x1.copy(),
        t=problem.grid.nodes.copy(),
        f_true=None if f_true is None else np.asarray(f_true, dtype=float),
        config=dict(config or {}),
    )


# ---------------------------------------------------------------------------
# fixed-point path


def _mollify(g, sigma):
    """Gaussian smoothing with odd-reflection padding on both axes.

    Antisymmetric extension about the edge values keeps the smoother exact
    on locally linear data, so neither the edge slope nor the Caputo ramp
    at t = T picks up the O(|g'|/h) padding bias that plain replicate or
    mirror modes feed into the second differences.
    """
    pads = []
    for axis in (0, 1):
        w = min(int(3.0 * sigma + 0.5) + 1, g.shape[axis] - 1)
        pads.append(w)
        G = np.moveaxis(g, axis, 0)
        left = 2.0 * G[:1] - G[w:0:-1]
        right = 2.0 * G[-1:] - G[-2 : -w - 2 : -1]
        g = np.moveaxis(np.concatenate([left, G, right], axis=0), 0, axis)
    g = ndimage.gaussian_filter(g, sigma=sigma, mode="nearest", truncate=3.0)
    return g[pads[0] : -pads[0], pads[1] : -pads[1]]


def fixed_point_h(g_obs, mesh, coeffs, weights, grid, mollify_width=None):
    """Boundary reduction of the observed trace.

    h(x1,t) = [discrete-Caputo g - d_x1(a11(x1,1/2,t) d_x1 g) + q g] / R
    on the trace grid, with conservative centered differences in x1
    (midpoint a11) closed at the endpoints by linear extrapolation of the
    divergence, and optional Gaussian presmoothing of the data.

    Parameters
    ----------
    g_obs : LateralObservation or array
        Observed trace, shape (N+1, M+1).
    mollify_width : float or None
        Gaussian sigma in grid cells, applied in (t, x1) before
        differentiation; None or 0 disables smoothing.
    """
    g = g_obs.values if isinstance(g_obs, LateralObservation) else g_obs
    g = np.array(g, dtype=float, copy=True)
    if g.shape != (grid.N + 1, mesh.M + 1):
        raise InvalidParameterError(
            "observation shape %r does not match the (N+1, M+1) trace grid" % (g.shape,)
        )
    x1 = mesh.x1
    top_x2 = np.full_like(x1, meshmod.ELL)
    Rmin = min(
        float(np.min(np.abs(coeffs.R(x1, top_x2, t)))) for t in grid.nodes
    )
    if Rmin < coeffs.c_R:
        raise AssumptionViolationError(
            "|R| on the observation boundary drops to %g below the bound %g"
            % (Rmin, coeffs.c_R)
        )
    if mollify_width:
        g = _mollify(g, float(mollify_width))
        g[0] = 0.0

    dtg = caputo_apply(weights, grid, g)
    h = np.zeros_like(g)
    M = mesh.M
    hspace = mesh.h
    x1m = 0.5 * (x1[:-1] + x1[1:])
    mid_x2 = np.full_like(x1m, meshmod.ELL)
    for n in range(1, grid.N + 1):
        t = grid.nodes[n]
        a11_mid, _, _ = coeffs.a(x1m, mid_x2, t)
        flux = np.asarray(a11_mid, dtype=float) * np.diff(g[n]) / hspace
        D = np.empty(M + 1)
        D[1:M] = np.diff(flux) / hspace
        D[0] = 2.0 * D[1] - D[2]
        D[M] = 2.0 * D[M - 1] - D[M - 2]
        qv = np.asarray(coeffs.q(x1, top_x2, t), dtype=float)
        Rv = np.asarray(coeffs.R(x1, top_x2, t), dtype=float)
        h[n] = (dtg[n] - D + qv * g[n]) / Rv
    return h


def apply_H(phi, problem, stencil="3-layer"):
    """The causal source-to-boundary operator of the fixed-point equation.

    H phi = a22(x1, 1/2, t) * d2_x2 u_phi(., 1/2, t) / R(x1, 1/2, t), with
    u_phi the forward solution driven by phi alone and the second
    derivative taken by a one-sided stencil at the observation boundary.
    """
    if problem.isp != "ISPn":
        raise InvalidParameterError("the fixed-point path is defined for trace data")
    U = problem.stepper.solve_direct(f=phi)
    d2 = second_diff_top(U, problem.mesh, stencil=stencil)
    x1 = problem.mesh.x1
    top_x2 = np.full_like(x1, meshmod.ELL)
    out = np.zeros_like(d2)
    for n in range(1, problem.grid.N + 1):
        t = problem.grid.nodes[n]
        _, _, a22 = problem.coeffs.a(x1, top_x2, t)
        Rv = np.asarray(problem.coeffs.R(x1, top_x2, t), dtype=float)
        out[n] = np.asarray(a22, dtype=float) * d2[n] / Rv
    return out


@dataclass
class FixedPointReport:
    """Outcome of the fixed-point iteration."""

    f_hat: np.ndarray
    iterations: int
    increments: list
    converged: bool


def fixed_point_solve(hfield, problem, j_max=30, tol=1e-8, operator=None, stencil="3-layer"):
    """Iterate f <- h - H f from f = h until the increments stall out.

    The causal, weakly singular structure of H makes the iteration a
    contraction on short time horizons; increments should decay
    geometrically.  Three consecutive non-decreasing increments raise
    DivergenceError (rough data; mollify first).

    Parameters
    ----------
    hfield : array
        Output of fixed_point_h.
    operator : callable or None
        Override for H (testing); defaults to apply_H via a forward solve.

    Returns
    -------
    FixedPointReport
    """
    if j_max < 1:
        raise InvalidParameterError("iteration cap must be >= 1, got %r" % (j_max,))
    H = operator if operator is not None else (lambda phi: apply_H(phi, problem, stencil=stencil))
    f = np.array(hfield, dtype=float, copy=True)
    increments = []
    converged = False
    j = 0
    for j in range(1, j_max + 1):
        f_next = hfield - H(f)
        inc = problem.norm(f_next - f)
        increments.append(inc)
        denom = problem.norm(f)
        f = f_next
        if inc <= tol * max(denom, 1e-300):
            converged = True
            break
        if len(increments) >= 3 and increments[-1] >= increments[-2] >= increments[-3]:
            raise DivergenceError(
                "fixed-point increments stopped decreasing after %d iterations "
                "(%.3e, %.3e, %.3e); the data may need mollification"
                % (j, increments[-3], increments[-2], increments[-1])
            )
    return FixedPointReport(f_hat=f, iterations=j, increments=increments, converged=converged)

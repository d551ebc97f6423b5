"""Benchmark examples, synthetic data and experiment drivers.

The five registry ids name the benchmark setups reproduced by the tables:
"5.1" (time-independent diffusivity, trace data), "5.2i"/"5.2ii"
(separable time-dependent diffusivity, smooth and truncated-in-time
sources, trace data) and "5.3i"/"5.3ii" (their flux-data counterparts).
Exact data always comes from a forward solve on a refined grid (factor
``refine`` in space and time, nodal restriction back), which keeps the
inversion honest.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import mesh as meshmod
from .errors import InvalidParameterError
from .fractime import TimeGrid, cq_weights, gamma_fn
from .inversion import (
    InverseProblem,
    ReconstructionReport,
    cg_reconstruct,
    error_metric,
    fixed_point_h,
    fixed_point_solve,
    spacetime_norm,
)
from .solver import LateralObservation, Stepper, flux_top, trace_values

EXAMPLES = ("5.1", "5.2i", "5.2ii", "5.3i", "5.3ii")
TABLE_ALPHAS = (0.25, 0.5, 0.75)
TABLE_EPSILONS = (0.0, 1e-3, 5e-3, 1e-2, 5e-2)


@dataclass
class ExperimentConfig:
    """Resolved settings of one reconstruction experiment."""

    isp: str = "ISPn"
    example: str = "5.1"
    alpha: float = 0.5
    M: int = 100
    N: int = 1000
    T: float = 1.0
    epsilon: float = 0.0
    c_dp: float = 1.01
    k_max: int = 50
    seed: int = 2024
    refine: int = 2
    allow_inverse_crime: bool = False
    method: str = "cg"
    mollify_width: float = 2.0
    d2_stencil: str = "3-layer"
    out_dir: str = "out"
    jobs: int = 1

    def validate(self):
        if self.isp not in ("ISPn", "ISPd"):
            raise InvalidParameterError("isp must be ISPn or ISPd, got %r" % (self.isp,))
        if self.example not in EXAMPLES and self.example != "custom":
            raise InvalidParameterError("unknown example id %r" % (self.example,))
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameterError("alpha must lie in (0, 1), got %r" % (self.alpha,))
        if self.M < 2 or self.N < 1:
            raise InvalidParameterError("grid sizes M >= 2, N >= 1 required")
        if self.T <= 0.0:
            raise InvalidParameterError("final time must be positive")
        if self.epsilon < 0.0:
            raise InvalidParameterError("noise level must be nonnegative")
        if self.c_dp <= 1.0:
            raise InvalidParameterError("discrepancy constant must exceed 1")
        if self.k_max < 1:
            raise InvalidParameterError("iteration cap must be >= 1")
        if self.refine < 1:
            raise InvalidParameterError("refinement factor must be >= 1")
        if self.refine < 2 and not self.allow_inverse_crime:
            raise InvalidParameterError(
                "synthesizing data on the inversion grid itself is an inverse "
                "crime; set allow_inverse_crime to override"
            )
        if self.method not in ("cg", "fixed-point"):
            raise InvalidParameterError("method must be 'cg' or 'fixed-point'")
        if self.method == "fixed-point" and self.isp != "ISPn":
            raise InvalidParameterError("the fixed-point method needs trace data (ISPn)")
        if self.d2_stencil not in ("3-layer", "4-layer"):
            raise InvalidParameterError("d2_stencil must be '3-layer' or '4-layer'")
        return self

    def as_dict(self):
        return asdict(self)


def example_isp(example):
    """The observation type an example id was benchmarked with."""
    return "ISPd" if example.startswith("5.3") else "ISPn"


def make_example(example, T=1.0):
    """Coefficients and exact source of a benchmark id.

    Returns
    -------
    (CoefficientSet, f_fn) with f_fn(x1, t) broadcasting over arrays.
    """

    def hump(x1, x2):
        v = 1.0 + np.sin(np.pi * x1) * x2 * (1.0 - x2)
        return v, np.zeros_like(v), v

    def shifted_hump(x1, x2):
        v = 1.0 + np.sin(np.pi * (x1 + 0.5)) * (0.25 - x2 ** 2)
        return v, np.zeros_like(v), v

    def profile(t):
        return 1.0 + np.sin(t)

    def bump_source(x1, t):
        return (0.25 - x1 ** 2) * t * (T - t) * np.exp(t)

    def sine_source(x1, t):
        return np.sin((x1 + 0.5) * np.pi) * t * (T - t) * np.exp(t)

    def sine_source_cut(x1, t):
        t = np.asarray(t, dtype=float)
        return sine_source(x1, t) * np.where(t <= 0.7, 1.0, 0.0)

    if example == "5.1":
        coeffs = meshmod.CoefficientSet(
            a=lambda x1, x2, t: hump(x1, x2),
            lam=0.25, c_R=0.5, time_dependent=False,
        )
        return coeffs, bump_source
    if example in ("5.2i", "5.2ii"):
        coeffs = meshmod.CoefficientSet(
            lam=0.25, c_R=0.5, time_dependent=True,
            time_profile=profile, a_spatial=hump,
        )
        return coeffs, (sine_source if example == "5.2i" else sine_source_cut)
    if example in ("5.3i", "5.3ii"):
        coeffs = meshmod.CoefficientSet(
            lam=0.4, c_R=0.5, time_dependent=True,
            time_profile=profile, a_spatial=shifted_hump,
        )
        return coeffs, (sine_source if example == "5.3i" else sine_source_cut)
    if example == "custom":
        raise InvalidParameterError(
            "custom runs must supply coefficients and source directly"
        )
    raise InvalidParameterError("unknown example id %r" % (example,))


def sample_source(f_fn, x1, grid):
    """Sample f(x1, t) on the source grid, shape (N+1, M+1); row 0 is t=0."""
    vals = np.asarray(f_fn(np.asarray(x1)[None, :], grid.nodes[:, None]), dtype=float)
    return np.broadcast_to(vals, (grid.N + 1, len(x1))).copy()


def manufactured_solution(alpha, amplitude=1.0):
    """Closed-form benchmark with identity diffusivity and zero reaction.

    u(x,t) = amplitude * t^2 cos(2 pi x2) cos(pi x1) satisfies the trace-data
    boundary conditions exactly (zero lateral values, zero top/bottom normal
    derivative) and zero initial data; the matching source grid function and
    prefactor R(x) = cos(2 pi x2) are returned alongside.

    Returns
    -------
    (CoefficientSet, u_fn(x1, x2, t), f_fn(x1, t))
    """
    g3 = gamma_fn(3.0 - alpha)

    def u_fn(x1, x2, t):
        return amplitude * t ** 2 * np.cos(2.0 * np.pi * x2) * np.cos(np.pi * x1)

    def f_fn(x1, t):
        t = np.asarray(t, dtype=float)
        return amplitude * (2.0 * t ** (2.0 - alpha) / g3
                            + 5.0 * np.pi ** 2 * t ** 2) * np.cos(np.pi * x1)

    def R(x1, x2, t):
        x1 = np.asarray(x1, dtype=float)
        return np.cos(2.0 * np.pi * np.asarray(x2, dtype=float)) + 0.0 * x1

    coeffs = meshmod.CoefficientSet(
        a=meshmod.isotropic(meshmod.constant_field(1.0)),
        q=meshmod.constant_field(0.0),
        R=R, lam=1.0, c_R=0.5, time_dependent=False,
    )
    return coeffs, u_fn, f_fn


# ---------------------------------------------------------------------------
# synthetic data


def _cell_rng(seed, alpha, epsilon):
    # counter-based generator keyed by the sweep cell, so parallel execution
    # order cannot change any cell's noise
    entropy = (int(seed), int(round(alpha * 10000)), int(round(epsilon * 1e9)))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def exact_data(config, coeffs, f_fn):
    """Exact observation from a refined-grid forward solve, restricted back."""
    config.validate()
    refine = int(config.refine)
    mesh_f = meshmod.build_mesh(config.M * refine)
    grid_f = TimeGrid(config.N * refine, config.T)
    weights_f = cq_weights(config.alpha, grid_f.N)
    f_fine = sample_source(f_fn, mesh_f.x1, grid_f)
    if config.isp == "ISPn":
        stepper = Stepper(mesh_f, coeffs, weights_f, grid_f, "ISPn")
        vals = trace_values(stepper.solve_direct(f=f_fine), mesh_f)
        kind = "trace"
    else:
        stepper = Stepper(mesh_f, coeffs, weights_f, grid_f, "ISPd-forward")
        vals = flux_top(stepper.solve_direct(f=f_fine), mesh_f).values
        kind = "flux"
    return LateralObservation(kind, vals[::refine, ::refine].copy(), delta=0.0)


def noisy_from_exact(g_exact, config, mesh, grid):
    """Additive Gaussian noise scaled by epsilon * max |exact data|."""
    vals = g_exact.values
    if config.epsilon == 0.0:
        return LateralObservation(g_exact.kind, vals.copy(), delta=0.0), 0.0
    scale = config.epsilon * float(np.max(np.abs(vals[1:])))
    rng = _cell_rng(config.seed, config.alpha, config.epsilon)
    noisy = vals.copy()
    noisy[1:] += scale * rng.standard_normal(vals[1:].shape)
    B = meshmod.assemble_trace_mass(mesh)
    delta = spacetime_norm(noisy - vals, B, grid.tau)
    return LateralObservation(g_exact.kind, noisy, delta=delta), delta


def synthesize_data(config, coeffs=None, f_fn=None):
    """Exact and noisy observations for a config.

    Returns
    -------
    (g_exact, g_noisy, delta) with delta = || g_noisy - g_exact || in the
    space-time trace norm.
    """
    if coeffs is None or f_fn is None:
        coeffs, f_fn = make_example(config.example, config.T)
    g_exact = exact_data(config, coeffs, f_fn)
    mesh = meshmod.build_mesh(config.M)
    grid = TimeGrid(config.N, config.T)
    g_noisy, delta = noisy_from_exact(g_exact, config, mesh, grid)
    return g_exact, g_noisy, delta


# ---------------------------------------------------------------------------
# experiment drivers


def run_reconstruction(config, coeffs=None, f_fn=None, g_exact=None):
    """One end-to-end reconstruction; returns a ReconstructionReport.

    coeffs/f_fn override the registry (required for example="custom");
    g_exact short-circuits the refined-grid data solve when reusing data
    across noise levels.
    """
    config.validate()
    if coeffs is None or f_fn is None:
        coeffs, f_fn = make_example(config.example, config.T)
    mesh = meshmod.build_mesh(config.M)
    grid = TimeGrid(config.N, config.T)
    weights = cq_weights(config.alpha, grid.N)
    if g_exact is None:
        g_exact = exact_data(config, coeffs, f_fn)
    g_noisy, delta = noisy_from_exact(g_exact, config, mesh, grid)
    f_true = None if f_fn is None else sample_source(f_fn, mesh.x1, grid)
    problem = InverseProblem(mesh, coeffs, weights, grid, config.isp, data=g_noisy)
    echo = config.as_dict()
    echo["delta"] = delta

    if config.method == "fixed-point":
        width = config.mollify_width if config.epsilon > 0.0 else None
        hfield = fixed_point_h(g_noisy, mesh, coeffs, weights, grid, mollify_width=width)
        fp = fixed_point_solve(hfield, problem, j_max=config.k_max,
                               stencil=config.d2_stencil)
        e = None if f_true is None else error_metric(fp.f_hat, f_true, mesh, grid)
        return ReconstructionReport(
            f_hat=fp.f_hat,
            stop_index=fp.iterations,
            e=e,
            residual_norm=problem.norm(problem.residual(fp.f_hat)),
            delta=delta,
            history={"increments": list(fp.increments)},
            x1=mesh.x1.copy(),
            t=grid.nodes.copy(),
            f_true=f_true,
            config=echo,
        )

    if config.isp == "ISPn":
        report = cg_reconstruct(problem, delta=delta, c_dp=config.c_dp,
                                k_max=config.k_max, f_true=f_true, config=echo)
    else:
        # flux data: the discrepancy principle is off (best_iterate guards
        # the stop), but the noise magnitude still belongs in the report
        report = cg_reconstruct(problem, delta=delta, k_max=config.k_max,
                                f_true=f_true, best_iterate=f_true is not None,
                                config=echo)
    return report


def _table_row(args):
    # one alpha row of the sweep: exact data solved once, reused per epsilon
    config, epsilons = args
    coeffs, f_fn = make_example(config.example, config.T)
    g_exact = exact_data(config, coeffs, f_fn)
    cells = []
    for eps in epsilons:
        cell_cfg = replace(config, epsilon=eps)
        try:
            rep = run_reconstruction(cell_cfg, coeffs, f_fn, g_exact=g_exact)
            cells.append({"e": rep.e, "k": rep.stop_index, "delta": rep.delta})
        except Exception as exc:  # record, keep sweeping
            cells.append({"failed": "%s: %s" % (type(exc).__name__, exc)})
    return config.alpha, cells


def format_cell(cell):
    if "failed" in cell:
        return "FAILED[%s]" % cell["failed"]
    return "%.2e (%d)" % (cell["e"], cell["k"])


def run_table(config, alphas=TABLE_ALPHAS, epsilons=TABLE_EPSILONS, jobs=None):
    """Error sweep over (alpha, epsilon) in the benchmark table layout.

    Returns a dict with the raw per-cell records and formatted "e (k*)" rows.
    """
    config.validate()
    jobs = config.jobs if jobs is None else jobs
    row_args = [(replace(config, alpha=alpha), tuple(epsilons)) for alpha in alphas]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
            results = list(pool.map(_table_row, row_args))
    else:
        results = [_table_row(args) for args in row_args]
    cells = {}
    rows = []
    for alpha, row in results:
        for eps, cell in zip(epsilons, row):
            cells[(alpha, eps)] = cell
        rows.append([alpha] + [format_cell(c) for c in row])
    return {
        "alphas": list(alphas),
        "epsilons": list(epsilons),
        "cells": cells,
        "rows": rows,
        "config": config.as_dict(),
    }


def run_convergence_study(alpha=0.5, amplitude=1.0, mode="both",
                          spatial_M=(16, 32, 64), spatial_N=2000,
                          temporal_N=(125, 250, 500, 1000), temporal_M=32, T=1.0):
    """Closed-form-benchmark convergence study.

    Spatial: final-time mass-norm error against the nodal interpolant of the
    exact solution on successively refined meshes, at a fine time step.
    Temporal: successive differences u^(N) - u^(2N) at a fixed mesh, which
    cancel the mesh error and expose the first-order time stepping.

    Returns a dict of row records and least-squares observed orders.
    """
    coeffs, u_fn, f_fn = manufactured_solution(alpha, amplitude)
    out = {"alpha": alpha, "amplitude": amplitude}

    def final_error(M, N):
        mesh = meshmod.build_mesh(M)
        grid = TimeGrid(N, T)
        weights = cq_weights(alpha, grid.N)
        stepper = Stepper(mesh, coeffs, weights, grid, "ISPn")
        U = stepper.solve_direct(f=sample_source(f_fn, mesh.x1, grid))
        exact = u_fn(mesh.nodes[:, 0], mesh.nodes[:, 1], grid.T)
        d = U[-1] - exact
        return float(np.sqrt(d @ (stepper.mass @ d)))

    def fitted_order(xs, errs):
        if any(e <= 0.0 for e in errs):
            return float("nan")
        return float(np.polyfit(np.log(xs), np.log(errs), 1)[0])

    if mode in ("both", "spatial"):
        rows = []
        for M in spatial_M:
            err = final_error(M, spatial_N)
            rows.append({"M": M, "N": spatial_N, "h": 1.0 / M,
                         "tau": T / spatial_N, "error": err})
        out["spatial"] = {"rows": rows,
                          "order": fitted_order([1.0 / M for M in spatial_M],
                                                [r["error"] for r in rows])}

    if mode in ("both", "temporal"):
        mesh = meshmod.build_mesh(temporal_M)
        levels = list(temporal_N) + [2 * max(temporal_N)]
        finals = {}
        for N in levels:
            grid = TimeGrid(N, T)
            weights = cq_weights(alpha, grid.N)
            stepper = Stepper(mesh, coeffs, weights, grid, "ISPn")
            U = stepper.solve_direct(f=sample_source(f_fn, mesh.x1, grid))
            finals[N] = (U[-1], stepper.mass)
        rows = []
        for N in temporal_N:
            d = finals[N][0] - finals[2 * N][0]
            err = float(np.sqrt(d @ (finals[N][1] @ d)))
            rows.append({"M": temporal_M, "N": N, "h": 1.0 / temporal_M,
                         "tau": T / N, "error": err})
        out["temporal"] = {"rows": rows,
                           "order": fitted_order([T / N for N in temporal_N],
                                                 [r["error"] for r in rows])}
    return out


def validate_example(example, M=20, T=1.0, n_time=10):
    """Run the coefficient validators on a registry example."""
    coeffs, _ = make_example(example, T)
    mesh = meshmod.build_mesh(M)
    return meshmod.validate_coefficients(mesh, coeffs, T=T, n_time=n_time)

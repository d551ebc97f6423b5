"""Convolution quadrature and discrete fractional calculus on uniform grids.

The time discretization is backward Euler convolution quadrature: the
weights are the power-series coefficients of (1 - z)^alpha.  The discrete
Caputo derivative applies the weights to u - u(0); the right-sided
Riemann-Liouville integral applies the weights of order -(1 - alpha) in
reversed time.  History sums are evaluated directly (O(N^2)), which keeps
runs at the benchmark scales in minutes and is trivial to verify.
"""

import math

import numpy as np

from .errors import InvalidParameterError


class TimeGrid:
    """Uniform partition of [0, T] into N steps, nodes t_n = n*tau.

    Parameters
    ----------
    N : int
        Step count, N >= 1.
    T : float
        Final time, T > 0.
    """

    def __init__(self, N, T=1.0):
        if int(N) != N or N < 1:
            raise InvalidParameterError("step count must be a positive integer, got %r" % (N,))
        if T <= 0.0:
            raise InvalidParameterError("final time must be positive, got %r" % (T,))
        self.N = int(N)
        self.T = float(T)
        self.tau = self.T / self.N
        self.nodes = self.tau * np.arange(self.N + 1)


class CQWeights:
    """Backward Euler CQ weights w_0..w_N, coefficients of (1 - z)^alpha."""

    def __init__(self, alpha, w):
        self.alpha = float(alpha)
        self.w = np.asarray(w, dtype=float)

    def __len__(self):
        return self.w.shape[0]


def series_coefficients(order, N):
    """Power-series coefficients c_0..c_N of (1 - z)^order.

    Uses the stable downward recurrence c_0 = 1,
    c_j = (1 - (order + 1)/j) * c_{j-1}.
    """
    c = np.empty(N + 1)
    c[0] = 1.0
    if N >= 1:
        j = np.arange(1, N + 1, dtype=float)
        c[1:] = np.cumprod(1.0 - (order + 1.0) / j)
    return c


def cq_weights(alpha, N):
    """CQ weights of order alpha on an N-step grid.

    Parameters
    ----------
    alpha : float
        Fractional order, 0 < alpha < 1.
    N : int
        Step count; the returned array has length N + 1.

    Returns
    -------
    CQWeights
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError("fractional order must lie in (0, 1), got %r" % (alpha,))
    if int(N) != N or N < 1:
        raise InvalidParameterError("weight count must be a positive integer, got %r" % (N,))
    return CQWeights(alpha, series_coefficients(float(alpha), int(N)))


def _convolve_head(kernel, samples):
    # leading len(samples) entries of the full discrete convolution,
    # column by column so 2-D sample arrays (time along axis 0) work
    n = samples.shape[0]
    if samples.ndim == 1:
        return np.convolve(kernel[:n], samples)[:n]
    out = np.empty_like(samples)
    for k in range(samples.shape[1]):
        out[:, k] = np.convolve(kernel[:n], samples[:, k])[:n]
    return out


def caputo_apply(weights, grid, samples):
    """Discrete Caputo derivative of sampled values.

    Returns tau^(-alpha) * sum_{j=0}^{n} w_j (u_{n-j} - u_0) at every node
    covered by the samples (the value at t_0 is 0).

    Parameters
    ----------
    weights : CQWeights
    grid : TimeGrid
    samples : array
        Shape (n+1,) or (n+1, m) with time along axis 0, n <= N.

    Returns
    -------
    array of the same shape as samples.
    """
    u = np.asarray(samples, dtype=float)
    if u.shape[0] > len(weights) or u.shape[0] > grid.N + 1:
        raise InvalidParameterError(
            "sample sequence has %d levels but the grid provides %d"
            % (u.shape[0], min(len(weights), grid.N + 1))
        )
    du = u - u[0]
    return grid.tau ** (-weights.alpha) * _convolve_head(weights.w, du)


def rl_integral(alpha, grid, samples):
    """Discrete right-sided Riemann-Liouville integral of order 1 - alpha.

    Computed by reversing time, applying the CQ weights of (1-z)^(-(1-alpha)),
    and reversing back.  The value at t = T is an integral over an empty
    interval and is set to zero, the convention under which the adjoint
    sweep's terminal condition holds by construction.

    Parameters
    ----------
    alpha : float
        Order in (0, 1); the integral order is 1 - alpha.
    grid : TimeGrid
    samples : array
        Shape (N+1,) or (N+1, m) on the full grid.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError("fractional order must lie in (0, 1), got %r" % (alpha,))
    v = np.asarray(samples, dtype=float)
    if v.shape[0] != grid.N + 1:
        raise InvalidParameterError(
            "samples must cover the full grid: expected %d levels, got %d"
            % (grid.N + 1, v.shape[0])
        )
    beta = 1.0 - alpha
    b = series_coefficients(-beta, grid.N)
    acc = _convolve_head(b, v[::-1])
    acc[0] = 0.0
    return grid.tau ** beta * acc[::-1]


def gamma_fn(z):
    """Euler Gamma function for z > 0 (Lanczos-grade accuracy)."""
    if z <= 0.0:
        raise InvalidParameterError("gamma function requested at z=%r <= 0" % (z,))
    return math.gamma(z)

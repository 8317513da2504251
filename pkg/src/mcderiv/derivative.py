"""Discrete forward-derivative pre-processing.

The order-1 operator maps y to z with z[i] = y[i+1] - y[i] for i < n-1 and
z[n-1] = -y[n-1], i.e. differencing against an implicit trailing zero.  Order
m is m applications.  Because each symbol's last m post-derivative samples
mix in the next symbol, per-symbol use truncates to the first N - m samples.
"""

from __future__ import annotations

from math import comb

import numpy as np

from .channel import ChannelVector
from .signal import GaussianStats

__all__ = [
    "apply_derivative",
    "derivative_matrix",
    "transform_stats",
    "truncate_noncausal",
    "intended_mean",
]


def apply_derivative(y: np.ndarray, order: int) -> np.ndarray:
    """Apply the forward-difference operator ``order`` times.

    Cost is O(order * n); the result is identical to multiplying by the dense
    operator power.  Integer-valued inputs stay exact as long as intermediate
    sums fit in float64.
    """
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    z = np.asarray(y, dtype=float)
    if z.ndim != 1:
        raise ValueError(f"expected a 1-D sequence, got shape {z.shape}")
    for _ in range(order):
        nxt = np.empty_like(z)
        nxt[:-1] = z[1:] - z[:-1]
        nxt[-1] = -z[-1]
        z = nxt
    return z


def derivative_matrix(n: int, order: int) -> np.ndarray:
    """Dense n x n matrix of the order-m operator.

    Row i carries (-1)^(m-k) C(m,k) at column i+k for k = 0..m, with columns
    beyond the edge dropped.  Entries are exact small integers.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    mat = np.zeros((n, n))
    for k in range(order + 1):
        coeff = (-1) ** (order - k) * comb(order, k)
        idx = np.arange(n - k)
        mat[idx, idx + k] += coeff
    return mat


def transform_stats(stats: GaussianStats, order: int) -> GaussianStats:
    """Push Gaussian statistics through the order-m operator.

    Mean maps to D^m mu and covariance to D^m Sigma D^m^T, symmetrized to
    kill float asymmetry.
    """
    n = stats.mean.shape[0]
    op = derivative_matrix(n, order)
    mean = op @ stats.mean
    cov = op @ stats.covariance @ op.T
    cov = 0.5 * (cov + cov.T)
    return GaussianStats(mean=mean, covariance=cov)


def truncate_noncausal(values: np.ndarray, order: int) -> np.ndarray:
    """Drop the last ``order`` entries of a per-symbol vector, or the trailing
    rows and columns of a per-symbol covariance block."""
    arr = np.asarray(values)
    n = arr.shape[0]
    if order >= n:
        raise ValueError(f"order {order} leaves no samples out of {n}")
    if arr.ndim == 1:
        return arr[: n - order]
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        return arr[: n - order, : n - order]
    raise ValueError(f"expected a vector or square matrix, got shape {arr.shape}")


def truncated_operator(n: int, order: int) -> np.ndarray:
    """First n - order rows of the dense order-m operator.

    These rows are pure binomial stencils (no edge clipping), so applying
    them to a symbol's N raw samples reproduces the stream-level derivative
    restricted to the symbol's causal part.
    """
    if order >= n:
        raise ValueError(f"order {order} leaves no samples out of {n}")
    return derivative_matrix(n, order)[: n - order]


def intended_mean(channel: ChannelVector, molecules: float, order: int) -> np.ndarray:
    """Noise-free post-derivative mean of an isolated 1-bit, truncated.

    The raw mean over the symbol's own N slots is molecules * h[1..N]; the
    result has N - order entries.
    """
    if molecules < 0.0:
        raise ValueError(f"molecules must be >= 0, got {molecules}")
    base = molecules * channel.first_symbol()
    op = truncated_operator(channel.n_samples, order)
    return op @ base

"""Orthonormal-series (cosine basis) long-run variance estimation.

The estimator projects the demeaned series onto the first B cosine basis
functions and averages the outer products of the projection coefficients:

    Omega = B^-1 sum_j Lambda_j Lambda_j',
    Lambda_j = sqrt(2/T) sum_t (x_t - xbar) cos[pi j (t - 1/2) / T].

Applied to cluster-wise cross-sectional average series it is robust to
arbitrary autocorrelation and cross-sectional dependence.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, NumericalError
from .kmeans import Clustering
from .panel import LossPanel

EIG_FLOOR_REL = 1e-12


@dataclass(frozen=True)
class OsLrv:
    """Long-run covariance estimate with cluster-block accessors.

    ``omega`` is d x d with d = K * p_dim for cluster-mean series (p_dim
    stays None for a plain multivariate series).
    """

    omega: np.ndarray
    b: int
    p_dim: int | None = None

    def block(self, k: int, g: int) -> np.ndarray:
        """The {k, g} P x P block (clusters indexed from 1)."""
        if self.p_dim is None:
            raise InputError("block access requires a cluster-structured estimate")
        p = self.p_dim
        return self.omega[(k - 1) * p:k * p, (g - 1) * p:g * p]

    def contrast(self, k: int, g: int) -> np.ndarray:
        """Covariance of the k-vs-g cluster-mean contrast:
        omega_kk + omega_gg - 2 * omega_kg (symmetrized)."""
        s = self.block(k, k) + self.block(g, g) - self.block(k, g) - self.block(g, k)
        return (s + s.T) / 2.0


def cluster_mean_series(z: LossPanel, c: Clustering) -> tuple[np.ndarray, np.ndarray]:
    """T x (KP) series of stacked per-cluster cross-sectional averages,
    and its KP time-average (the stacked cluster centers)."""
    if c.n != z.n:
        raise InputError("clustering does not match the panel")
    parts = []
    for k in range(1, c.k + 1):
        members = c.members(k)
        parts.append(z.z[members].mean(axis=0))  # T x P
    series = np.concatenate(parts, axis=1)
    return series, series.mean(axis=0)


def os_lrv(series: np.ndarray, b: int) -> OsLrv:
    """Cosine-projection long-run variance of a T x d series."""
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    t = x.shape[0]
    if b < 1:
        raise InputError("number of basis functions must be at least 1")
    if b > t:
        raise InputError(f"B={b} exceeds the series length T={t}")
    centered = x - x.mean(axis=0)
    grid = np.pi * np.arange(1, b + 1)[:, None] * (np.arange(1, t + 1)[None, :] - 0.5) / t
    lam = np.sqrt(2.0 / t) * np.cos(grid) @ centered  # B x d
    omega = lam.T @ lam / b
    omega = (omega + omega.T) / 2.0
    return OsLrv(omega=omega, b=b)


def cluster_lrv(z: LossPanel, c: Clustering, b: int) -> OsLrv:
    """OS long-run variance of the stacked cluster-mean series."""
    series, _ = cluster_mean_series(z, c)
    est = os_lrv(series, b)
    return OsLrv(omega=est.omega, b=b, p_dim=z.p_dim)


def _icbrt_sq(t: int) -> int:
    # Exact integer floor of t^(2/3), avoiding float pow edge cases.
    b = int(round(t ** (2.0 / 3.0)))
    while (b + 1) ** 3 <= t * t:
        b += 1
    while b ** 3 > t * t:
        b -= 1
    return b


def default_b(p: int, t: int) -> int:
    """Default basis count: min(P * floor(T^(2/3)), T)."""
    if p < 1 or t < 1:
        raise InputError("p and t must be positive")
    return min(p * _icbrt_sq(t), t)


def psd_factors(sigma: np.ndarray, floor_rel: float = EIG_FLOOR_REL):
    """Eigendecomposition-based inverse, inverse square root and square
    root of a symmetric PSD matrix with a relative eigenvalue floor.

    Near-singular matrices trigger a warning and are floored rather than
    rejected; an all-nonpositive spectrum is an error.
    """
    s = np.asarray(sigma, dtype=float)
    s = (s + s.T) / 2.0
    vals, vecs = np.linalg.eigh(s)
    top = vals.max(initial=0.0)
    if top <= 0.0:
        raise NumericalError("covariance matrix is not positive semidefinite")
    floor = floor_rel * top
    if vals.min() < floor:
        warnings.warn(
            "near-singular covariance: eigenvalues floored at "
            f"{floor:.3e}", RuntimeWarning, stacklevel=2,
        )
        vals = np.maximum(vals, floor)
    inv = (vecs / vals) @ vecs.T
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
    sqrt = (vecs * np.sqrt(vals)) @ vecs.T
    return inv, inv_sqrt, sqrt

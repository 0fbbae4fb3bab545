"""Post-clustering selective inference for cluster-center contrasts.

The pairwise statistic is d = sqrt(T * diff' Sigma^-1 diff) for the
contrast diff of two estimated cluster centers.  Validity conditional on
the estimated clustering is obtained by truncating the chi_P reference
distribution to the set of statistic values phi whose induced data
perturbation reproduces every assignment step of the Kmeans trace.

The perturbation moves each observation along a fixed direction:

    z(phi)_it = z_it + delta_i * (phi / d - 1) * w,   w = diff / sum(delta^2),

which fixes the component of the data orthogonal to the contrast, scales
the contrast component linearly in phi, and reproduces z exactly at
phi = d.  Because assignments depend on the data only through unit
time-means, every "unit i stays in its assigned cluster rather than c"
condition is a quadratic inequality in phi, and the truncation set is a
finite union of intervals computable in closed form.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dists import IntervalUnion, truncated_chi_survival
from .exceptions import InputError, NumericalError
from .kmeans import ClusteringTrace, _cluster_means
from .lrv import OsLrv, psd_factors
from .panel import LossPanel

_REL_TOL = 1e-12
_MIN_INTERVAL = 1e-12
_DILATE_TOL = 1e-8
_DEGENERATE_D = 1e-10


@dataclass(frozen=True)
class PairwiseSelection:
    """Everything defining one selective test of a center contrast."""

    delta: np.ndarray
    sum_delta_sq: float
    theta_diff: np.ndarray
    sigma: np.ndarray
    d: float
    j_dir: np.ndarray
    pair: tuple[int, int] | None = None
    center: int | None = None


def _build_selection(z, trace, sigma, delta, theta_diff, pair, center):
    sum_delta_sq = float((delta * delta).sum())
    inv, inv_sqrt, _ = psd_factors(sigma)
    quad = float(theta_diff @ inv @ theta_diff)
    d = math.sqrt(max(z.t * quad, 0.0))
    raw_dir = inv_sqrt @ theta_diff
    norm = float(np.linalg.norm(raw_dir))
    j_dir = raw_dir / norm if norm > 0 else np.zeros_like(raw_dir)
    return PairwiseSelection(
        delta=delta, sum_delta_sq=sum_delta_sq, theta_diff=theta_diff,
        sigma=sigma, d=d, j_dir=j_dir, pair=pair, center=center,
    )


def pairwise_selection(
    z: LossPanel, trace: ClusteringTrace, lrv: OsLrv, k: int, g: int
) -> PairwiseSelection:
    """Contrast of cluster centers k and g from the final clustering."""
    c = trace.clustering
    if k == g:
        raise InputError("pairwise selection needs two distinct clusters")
    if not (1 <= k <= c.k and 1 <= g <= c.k):
        raise InputError(f"cluster indices must lie in 1..{c.k}")
    labels = c.assignments
    delta = (labels == k).astype(float) / c.sizes[k - 1]
    delta -= (labels == g).astype(float) / c.sizes[g - 1]
    theta_diff = trace.centers.theta[k - 1] - trace.centers.theta[g - 1]
    sigma = lrv.contrast(k, g)
    return _build_selection(z, trace, sigma, delta, theta_diff, (k, g), None)


def single_center_selection(
    z: LossPanel, trace: ClusteringTrace, lrv: OsLrv, k: int
) -> PairwiseSelection:
    """Contrast testing whether center k itself is zero."""
    c = trace.clustering
    if not 1 <= k <= c.k:
        raise InputError(f"cluster index must lie in 1..{c.k}")
    delta = (c.assignments == k).astype(float) / c.sizes[k - 1]
    theta_diff = trace.centers.theta[k - 1].copy()
    sigma = (lrv.block(k, k) + lrv.block(k, k).T) / 2.0
    return _build_selection(z, trace, sigma, delta, theta_diff, None, k)


def perturb(z: LossPanel, sel: PairwiseSelection, phi: float) -> LossPanel:
    """Data whose contrast statistic equals phi, other components fixed."""
    if sel.d <= 0:
        raise InputError("perturbation undefined for a degenerate (d = 0) contrast")
    if phi < 0:
        raise InputError("phi must be nonnegative")
    w = sel.theta_diff / sel.sum_delta_sq
    s = phi / sel.d - 1.0
    shifted = z.z + sel.delta[:, None, None] * s * w[None, None, :]
    return LossPanel(units=z.units, times=z.times, z=shifted)


def _quadratic_coefficients(z, trace, sel):
    """Stack the (A, B, C) of every assignment constraint A x^2 + B x + C <= 0."""
    x = z.unit_means()
    t = z.t
    d = sel.d
    delta = sel.delta
    w = sel.theta_diff / sel.sum_delta_sq
    wnorm2 = float(w @ w)
    n = z.n
    k = trace.clustering.k
    rows_a, rows_b, rows_c = [], [], []
    idx = np.arange(n)
    for m in range(1, len(trace.history)):
        prev = trace.history[m - 1]
        new = trace.history[m]
        theta_prev = _cluster_means(x, prev, k)
        delta_bar = np.array([delta[prev == c + 1].mean() for c in range(k)])
        u = x[:, None, :] - theta_prev[None, :, :]
        sq = (u * u).sum(axis=2)
        ip = u @ w
        e = delta[:, None] - delta_bar[None, :]
        a0 = new - 1
        e_a = e[idx, a0]
        ip_a = ip[idx, a0]
        sq_a = sq[idx, a0]
        q2 = (e_a[:, None] ** 2 - e ** 2) * wnorm2 / (d * d)
        q1 = 2.0 * (e_a[:, None] * ip_a[:, None] - e * ip) / d
        q0 = sq_a[:, None] - sq
        coef_a = t * q2
        coef_b = t * (q1 - 2.0 * q2 * d)
        coef_c = t * (q2 * d * d - q1 * d + q0)
        keep = np.ones((n, k), dtype=bool)
        keep[idx, a0] = False
        rows_a.append(coef_a[keep])
        rows_b.append(coef_b[keep])
        rows_c.append(coef_c[keep])
    return np.concatenate(rows_a), np.concatenate(rows_b), np.concatenate(rows_c)


def _solve_constraints(a, b, c, d):
    """Intersect the solution sets of quadratic inequalities over [0, inf).

    Returns (lower, upper, gaps): the running interval [lower, upper] from
    all bounded-solution constraints, and a list of open (g1, g2) gaps cut
    out by concave constraints whose complement splits the line.
    """
    phi_scale = max(d, 1.0)
    mag_a = np.abs(a) * phi_scale * phi_scale
    mag_b = np.abs(b) * phi_scale
    mag_c = np.abs(c)
    scale = np.maximum(np.maximum(mag_a, mag_b), np.maximum(mag_c, 1e-300))
    is_quad = mag_a > _REL_TOL * scale
    is_lin = ~is_quad & (mag_b > _REL_TOL * scale)
    is_const = ~is_quad & ~is_lin

    if np.any(c[is_const] > _REL_TOL * scale[is_const]):
        raise NumericalError("infeasible assignment constraint with no phi dependence")

    lower = 0.0
    upper = math.inf
    gaps: list[tuple[float, float]] = []

    if np.any(is_lin):
        bl = b[is_lin]
        cl = c[is_lin]
        root = -cl / bl
        ups = root[bl > 0]
        los = root[bl < 0]
        if ups.size:
            upper = min(upper, float(ups.min()))
        if los.size:
            lower = max(lower, float(los.max()))

    if np.any(is_quad):
        aq = a[is_quad]
        bq = b[is_quad]
        cq = c[is_quad]
        disc = bq * bq - 4.0 * aq * cq
        sqrt_disc = np.sqrt(np.maximum(disc, 0.0))
        qterm = -0.5 * (bq + np.where(bq >= 0, 1.0, -1.0) * sqrt_disc)
        with np.errstate(divide="ignore", invalid="ignore"):
            r_first = np.where(qterm != 0, qterm / aq, -bq / (2.0 * aq))
            r_second = np.where(qterm != 0, cq / qterm, -bq / (2.0 * aq))
        r1 = np.minimum(r_first, r_second)
        r2 = np.maximum(r_first, r_second)

        convex = aq > 0
        ok = convex & (disc >= 0)
        if np.any(ok):
            lower = max(lower, float(r1[ok].max()))
            upper = min(upper, float(r2[ok].min()))
        grazing = convex & (disc < 0)
        if np.any(grazing):
            # Only roundoff can produce a strictly positive convex
            # constraint: the observed data satisfies it at phi = d.
            value_at_d = aq[grazing] * d * d + bq[grazing] * d + cq[grazing]
            limit = _REL_TOL * scale[is_quad][grazing] + _DILATE_TOL
            if np.any(value_at_d > limit):
                raise NumericalError("convex assignment constraint has no solution")
            vertex = -bq[grazing] / (2.0 * aq[grazing])
            lower = max(lower, float(vertex.max()))
            upper = min(upper, float(vertex.min()))

        concave = (aq < 0) & (disc >= 0)
        for i in np.flatnonzero(concave):
            g1, g2 = float(r1[i]), float(r2[i])
            if g2 <= 0.0:
                continue
            if g1 < 0.0:
                lower = max(lower, g2)
            else:
                gaps.append((g1, g2))
    return lower, upper, gaps


def _assemble(lower, upper, gaps, d):
    if lower > upper:
        pieces: list[tuple[float, float]] = []
    else:
        gaps = sorted(gaps)
        merged: list[list[float]] = []
        for g1, g2 in gaps:
            if merged and g1 <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], g2)
            else:
                merged.append([g1, g2])
        pieces = []
        cursor = lower
        for g1, g2 in merged:
            if g2 <= cursor:
                continue
            if g1 > upper:
                break
            if g1 > cursor:
                pieces.append((cursor, min(g1, upper)))
            cursor = max(cursor, g2)
            if cursor > upper:
                break
        if cursor <= upper:
            pieces.append((cursor, upper))
    kept = [
        (lo, hi) for lo, hi in pieces
        if hi - lo >= _MIN_INTERVAL or lo <= d <= hi
    ]
    return IntervalUnion.from_pairs(kept)


def truncation_set(
    z: LossPanel, trace: ClusteringTrace, sel: PairwiseSelection
) -> IntervalUnion:
    """Statistic values whose perturbed data replay the whole Kmeans trace."""
    if trace.repairs:
        raise NumericalError(
            "trace contains empty-cluster repairs, which are not argmin steps; "
            "re-run the clustering with a different seed"
        )
    if sel.d <= 0:
        raise InputError("truncation set undefined for a degenerate (d = 0) contrast")
    a, b, c = _quadratic_coefficients(z, trace, sel)
    lower, upper, gaps = _solve_constraints(a, b, c, sel.d)
    result = _assemble(lower, upper, gaps, sel.d)
    if not result.contains(sel.d):
        slack = result.distance(sel.d)
        if slack <= _DILATE_TOL:
            warnings.warn(
                f"observed statistic missed the truncation set by {slack:.2e}; "
                "dilating", RuntimeWarning, stacklevel=2,
            )
            result = result.dilated_to_include(sel.d)
        else:
            raise NumericalError(
                "internal consistency failure: observed statistic lies outside "
                "its own truncation set"
            )
    return result


@dataclass(frozen=True)
class SelectiveTestResult:
    """Outcome of one selective center test."""

    p: float
    d: float
    truncation: IntervalUnion | None
    degenerate: bool = False
    pair: tuple[int, int] | None = None
    center: int | None = None


def _selective(z, trace, lrv, sel):
    if trace.repairs:
        raise NumericalError(
            "trace contains empty-cluster repairs, which are not argmin steps; "
            "re-run the clustering with a different seed"
        )
    if sel.d <= _DEGENERATE_D:
        # Exactly-zero contrasts land at the float noise floor, never 0.0.
        return SelectiveTestResult(
            p=1.0, d=sel.d, truncation=None, degenerate=True,
            pair=sel.pair, center=sel.center,
        )
    t = truncation_set(z, trace, sel)
    p = truncated_chi_survival(sel.d, z.p_dim, t)
    return SelectiveTestResult(
        p=p, d=sel.d, truncation=t, pair=sel.pair, center=sel.center,
    )


def selective_p(
    z: LossPanel, trace: ClusteringTrace, lrv: OsLrv, k: int, g: int
) -> SelectiveTestResult:
    """Selective p-value for equality of cluster centers k and g."""
    sel = pairwise_selection(z, trace, lrv, k, g)
    return _selective(z, trace, lrv, sel)


def selective_p_center(
    z: LossPanel, trace: ClusteringTrace, lrv: OsLrv, k: int
) -> SelectiveTestResult:
    """Selective p-value for the null that center k equals zero."""
    sel = single_center_selection(z, trace, lrv, k)
    return _selective(z, trace, lrv, sel)

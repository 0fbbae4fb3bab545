"""Panel Kmeans with full iteration tracing and data-driven choice of K.

The estimator alternates unit-to-cluster assignment and cluster-center
updates, where a unit's distance to a center is summed over its whole time
series.  Because sum_t ||z_it - theta||^2 = T ||zbar_i - theta||^2 + const,
assignments and centers depend on the data only through the N x P matrix
of unit time-means; all hot loops work on that reduction.

The per-iteration assignment history is recorded because the selective
inference step conditions on every intermediate assignment, not just the
final clustering.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError, NumericalError
from .panel import LossPanel


@dataclass(frozen=True)
class Clustering:
    """Cluster labels in 1..k with every cluster non-empty."""

    assignments: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.assignments, dtype=int)
        object.__setattr__(self, "assignments", labels)
        if labels.ndim != 1:
            raise InputError("assignments must be a 1-D label array")
        if labels.min(initial=1) < 1 or labels.max(initial=self.k) > self.k:
            raise InputError(f"labels must lie in 1..{self.k}")
        sizes = np.bincount(labels - 1, minlength=self.k)
        if np.any(sizes == 0):
            raise InputError("every cluster must be non-empty")
        object.__setattr__(self, "sizes", sizes)

    sizes: np.ndarray = field(init=False)

    @property
    def n(self) -> int:
        return self.assignments.shape[0]

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)


@dataclass(frozen=True)
class Centers:
    """K x P cluster centers: within-cluster grand means of z."""

    theta: np.ndarray


@dataclass(frozen=True)
class ClusteringTrace:
    """Assignment history of one Panel Kmeans run.

    history[m] is the label vector after iteration m, with history[0] the
    initial assignment.  Convergence means history[M] == history[M - 1];
    when the iteration cap was hit instead, ``converged`` is False.
    Repairs (forced moves that refill an emptied cluster) are recorded as
    (iteration, unit index, cluster) triples.
    """

    history: tuple
    clustering: Clustering
    centers: Centers
    objective: float
    converged: bool
    repairs: tuple = ()
    init_index: int = 0

    @property
    def m(self) -> int:
        return len(self.history) - 1


def _cluster_means(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    theta = np.empty((k, x.shape[1]))
    for c in range(k):
        members = labels == c + 1
        if not members.any():
            raise NumericalError(f"cluster {c + 1} is empty")
        theta[c] = x[members].mean(axis=0)
    return theta


def _assign(x: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((x[:, None, :] - theta[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1) + 1  # argmin takes the lowest index on ties
    return labels, d2


def _unit_sq_norms(z: np.ndarray) -> float:
    return float((z * z).sum())


def objective(z: LossPanel, c: Clustering) -> float:
    """Within-cluster sum of squared deviations from the cluster-time means."""
    if c.n != z.n:
        raise InputError("clustering does not match the panel")
    theta = _cluster_means(z.unit_means(), c.assignments, c.k)
    dev = z.z - theta[c.assignments - 1][:, None, :]
    return float((dev * dev).sum())


def lloyd_run(z: LossPanel, k: int, initial: np.ndarray, max_iter: int = 100) -> ClusteringTrace:
    """Run the alternating assignment/update iteration from a given start.

    Ties in the assignment argmin go to the lowest cluster index.  If an
    assignment step empties a cluster, the unit currently farthest from
    its own center is moved into the empty cluster and the move is
    recorded; such traces are not eligible for selective inference.
    """
    if k < 2:
        raise InputError("k must be at least 2")
    labels = np.asarray(initial, dtype=int).copy()
    if labels.shape != (z.n,):
        raise InputError("initial labels must have one entry per unit")
    if len(np.unique(labels)) != k or labels.min() < 1 or labels.max() > k:
        raise InputError("initial labels must cover all clusters 1..k")
    x = z.unit_means()
    base = _unit_sq_norms(z.z) - z.t * float((x * x).sum())

    history = [labels.copy()]
    repairs: list[tuple[int, int, int]] = []
    converged = False
    for m in range(1, max_iter + 1):
        theta = _cluster_means(x, history[-1], k)
        labels, d2 = _assign(x, theta)
        counts = np.bincount(labels - 1, minlength=k)
        while np.any(counts == 0):
            empty = int(np.argmin(counts)) + 1
            own = d2[np.arange(z.n), labels - 1]
            movable = counts[labels - 1] >= 2
            if not movable.any():
                raise NumericalError("cannot repair empty cluster: all clusters singletons")
            candidates = np.where(movable, own, -np.inf)
            unit = int(np.argmax(candidates))
            counts[labels[unit] - 1] -= 1
            labels[unit] = empty
            counts[empty - 1] += 1
            repairs.append((m, unit, empty))
        history.append(labels.copy())
        if np.array_equal(history[-1], history[-2]):
            converged = True
            break

    final_labels = history[-1]
    clustering = Clustering(assignments=final_labels, k=k)
    theta = _cluster_means(x, final_labels, k)
    obj = base + z.t * float(((x - theta[final_labels - 1]) ** 2).sum())
    return ClusteringTrace(
        history=tuple(history),
        clustering=clustering,
        centers=Centers(theta=theta),
        objective=obj,
        converged=converged,
        repairs=tuple(repairs),
    )


def _random_initial(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    for _ in range(1000):
        labels = rng.integers(1, k + 1, size=n)
        if len(np.unique(labels)) == k:
            return labels
    # Degenerate n ~ k regime: guarantee coverage, then fill uniformly.
    labels = np.concatenate([
        np.arange(1, k + 1),
        rng.integers(1, k + 1, size=n - k),
    ])
    return rng.permutation(labels)


def fit(
    z: LossPanel,
    k: int,
    n_init: int = 10,
    seed=None,
    max_iter: int = 100,
    extend_until_clean: bool = True,
) -> ClusteringTrace:
    """Best-of-n_init Panel Kmeans, deterministic given the seed.

    The smallest final objective wins, ties to the earliest
    initialization.  Runs whose iteration needed an empty-cluster repair
    are avoided when possible: a repaired trace is not a pure argmin path,
    so it cannot feed the selective truncation-set construction.  With
    ``extend_until_clean`` (the default), extra initializations are drawn,
    up to a cap, when all n_init runs repaired; only if none of those
    converges repair-free is the best repaired trace returned.
    """
    if n_init < 1:
        raise InputError("n_init must be at least 1")
    rng = np.random.default_rng(seed)
    best: ClusteringTrace | None = None
    best_clean: ClusteringTrace | None = None
    draws = 0
    cap = 100 * n_init if extend_until_clean else n_init
    while draws < n_init or (best_clean is None and draws < cap):
        initial = _random_initial(rng, z.n, k)
        trace = lloyd_run(z, k, initial, max_iter=max_iter)
        trace = ClusteringTrace(
            history=trace.history,
            clustering=trace.clustering,
            centers=trace.centers,
            objective=trace.objective,
            converged=trace.converged,
            repairs=trace.repairs,
            init_index=draws,
        )
        draws += 1
        if best is None or trace.objective < best.objective:
            best = trace
        if not trace.repairs and (best_clean is None or trace.objective < best_clean.objective):
            best_clean = trace
    assert best is not None
    return best_clean if best_clean is not None else best


@dataclass(frozen=True)
class KSelection:
    """Outcome of a data-driven choice of the number of clusters."""

    method: str
    selected: int
    table: tuple
    traces: dict


def select_k_ic(
    z: LossPanel,
    k_max: int = 5,
    varsigma: float = 1.5,
    n_init: int = 10,
    seed=None,
    max_iter: int = 100,
) -> KSelection:
    """Choose K in 2..k_max by the log-det residual information criterion.

    IC(K) = log det( (NT)^-1 sum_it V_it V_it' ) + (KP + N) varsigma log(NT)/(NT)
    with V_it the deviation of z_it from its assigned cluster center.
    Ties go to the smaller K.

    A candidate K fails (and is skipped, like one with a singular residual
    covariance) when none of the n_init initializations converges without
    an empty-cluster repair: the data cannot hold K non-degenerate
    clusters from random starts, and the repaired runs' objectives would
    bias the criterion toward a K that selective inference cannot use.
    """
    if not 2 <= k_max <= z.n - 1:
        raise InputError(f"k_max must lie in [2, N-1], got {k_max} with N={z.n}")
    rng = np.random.default_rng(seed)
    nt = z.n * z.t
    penalty_rate = varsigma * math.log(nt) / nt
    rows = []
    traces: dict[int, ClusteringTrace] = {}
    best_k = None
    best_ic = math.inf
    for k in range(2, k_max + 1):
        trace = fit(z, k, n_init=n_init, seed=rng, max_iter=max_iter,
                    extend_until_clean=False)
        if trace.repairs:
            rows.append({"k": k, "ic": None, "objective": trace.objective,
                         "failed": "no repair-free run"})
            continue
        v = z.z - trace.centers.theta[trace.clustering.assignments - 1][:, None, :]
        flat = v.reshape(-1, z.p_dim)
        m = flat.T @ flat / nt
        m = (m + m.T) / 2.0
        sign, logdet = np.linalg.slogdet(m)
        if sign <= 0:
            rows.append({"k": k, "ic": None, "objective": trace.objective,
                         "failed": "singular residual covariance"})
            continue
        ic = float(logdet) + (k * z.p_dim + z.n) * penalty_rate
        traces[k] = trace
        rows.append({"k": k, "ic": ic, "objective": trace.objective, "failed": None})
        if ic < best_ic:
            best_ic = ic
            best_k = k
    if best_k is None:
        raise NumericalError("information criterion failed for every candidate K")
    return KSelection(method="ic", selected=best_k, table=tuple(rows), traces=traces)


def select_k_cv(
    z: LossPanel,
    k_max: int = 5,
    folds: int = 10,
    n_init: int = 10,
    seed=None,
    max_iter: int = 100,
) -> KSelection:
    """Choose K by time-blocked cross-validation.

    Time indices are split into contiguous blocks; for each held-out block
    the clusters are fit on the remaining periods and the block's sum of
    squared deviations from the training centers (memberships fixed) is
    the validation error.  The K with the smallest fold-average error
    wins, ties to the smaller K.
    """
    if folds < 2:
        raise InputError("folds must be at least 2")
    if z.t < folds:
        raise InputError(f"need T >= folds, got T={z.t}, folds={folds}")
    if not 2 <= k_max <= z.n - 1:
        raise InputError(f"k_max must lie in [2, N-1], got {k_max} with N={z.n}")
    rng = np.random.default_rng(seed)
    blocks = np.array_split(np.arange(z.t), folds)
    rows = []
    best_k = None
    best_err = math.inf
    for k in range(2, k_max + 1):
        fold_errors = []
        for block in blocks:
            train_idx = np.setdiff1d(np.arange(z.t), block)
            if train_idx.size < 2:
                raise InputError("training block too short for Panel Kmeans")
            train = LossPanel(
                units=z.units,
                times=tuple(z.times[i] for i in train_idx),
                z=z.z[:, train_idx, :],
            )
            trace = fit(train, k, n_init=n_init, seed=rng, max_iter=max_iter)
            centers = trace.centers.theta[trace.clustering.assignments - 1]
            dev = z.z[:, block, :] - centers[:, None, :]
            fold_errors.append(float((dev * dev).sum()))
        err = float(np.mean(fold_errors))
        rows.append({"k": k, "cv_error": err, "failed": None})
        if err < best_err:
            best_err = err
            best_k = k
    assert best_k is not None
    return KSelection(method="cv", selected=best_k, table=tuple(rows), traces={})

"""Shared test fixtures and independent oracles.

The replay oracle here re-implements the assignment iteration directly
(raw argmin, no repairs) so that truncation-set tests do not depend on
the library's own Lloyd implementation.
"""
from __future__ import annotations

import numpy as np
import pytest

from cepa.panel import LossPanel
from cepa.selective import perturb


def make_panel(rng, n, t, p, unit_shift_scale=0.0):
    z = rng.standard_normal((n, t, p))
    if unit_shift_scale:
        z = z + unit_shift_scale * rng.standard_normal((n, 1, p))
    return LossPanel(units=tuple(range(n)), times=tuple(range(t)), z=z)


def argmin_replay_matches(z, sel, trace, k, phi):
    """Pure argmin replay of every traced assignment step at one phi."""
    zp = perturb(z, sel, phi)
    x = zp.unit_means()
    labels = trace.history[0]
    for m in range(1, len(trace.history)):
        theta = np.empty((k, x.shape[1]))
        for c in range(k):
            members = labels == c + 1
            if not members.any():
                return False
            theta[c] = x[members].mean(axis=0)
        d2 = ((x[:, None, :] - theta[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1) + 1
        if not np.array_equal(labels, trace.history[m]):
            return False
    return True


def argmin_replay_matches_grid(z, sel, trace, k, phis):
    """Vectorized pure-argmin replay over a whole grid of phi values."""
    phis = np.asarray(phis, dtype=float)
    x = z.unit_means()
    w = sel.theta_diff / sel.sum_delta_sq
    s = phis / sel.d - 1.0
    xg = x[None, :, :] + s[:, None, None] * sel.delta[None, :, None] * w[None, None, :]
    g = phis.shape[0]
    labels = np.broadcast_to(trace.history[0], (g, z.n)).copy()
    alive = np.ones(g, dtype=bool)
    for m in range(1, len(trace.history)):
        theta = np.empty((g, k, x.shape[1]))
        for c in range(k):
            members = labels == c + 1
            counts = members.sum(axis=1)
            dead = counts == 0
            alive &= ~dead
            counts = np.maximum(counts, 1)
            theta[:, c, :] = (xg * members[:, :, None]).sum(axis=1) / counts[:, None]
        d2 = ((xg[:, :, None, :] - theta[:, None, :, :]) ** 2).sum(axis=3)
        labels = np.argmin(d2, axis=2) + 1
        alive &= (labels == trace.history[m][None, :]).all(axis=1)
        labels = np.broadcast_to(trace.history[m], (g, z.n)).copy()
    return alive


@pytest.fixture(scope="session")
def rng_factory():
    def make(seed):
        return np.random.default_rng(seed)
    return make

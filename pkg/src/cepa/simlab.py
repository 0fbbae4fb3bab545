"""Monte Carlo laboratory: panel AR(1) forecast-comparison designs.

The target variable follows a cluster-heterogeneous panel AR(1); two
forecasters share the true dynamics but one adds autocorrelated,
cross-sectionally dependent noise while the other omits the intercept.
The noise variance is shifted per cluster so that the expected loss
differential in cluster k equals psi_k exactly, which makes size and
power designs a matter of choosing the psi vector.

Replications are seeded by spawning one child SeedSequence per
replication from the master seed, so results are bit-identical whether
replications run serially or in a process pool.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .epa_tests import (
    DEFAULT_GAMMA,
    DEFAULT_K_MAX,
    DEFAULT_N_INIT,
    DEFAULT_R,
    DEFAULT_VARSIGMA,
    composite_from_trace,
    oepa_test,
    split_sample_test,
    wald_fixed_clusters,
)
from .exceptions import CepaError, ConfigError, NumericalError
from .kmeans import Clustering, select_k_ic
from .panel import LossDifferentialPanel, LossPanel, TestFunctionSpec, apply_test_function

BURN_IN = 100
KNOWN_TESTS = ("predetermined", "naive", "split", "selective", "oepa", "homogeneity")


@dataclass(frozen=True)
class SimConfig:
    """Design of one Monte Carlo experiment."""

    n: int = 80
    t: int = 50
    rho: tuple = (0.1, 0.2, 0.3)
    alpha: float = 1.0
    phi_eps: float = 0.2
    lam: float = 0.2
    psi: tuple = (0.0, 0.0, 0.0)
    conditional: bool = False
    break_at: int | None = None
    reps: int = 200
    seed: int | None = None
    q: float = 0.05
    n_init: int = DEFAULT_N_INIT
    k_max: int = DEFAULT_K_MAX
    varsigma: float = DEFAULT_VARSIGMA
    r: float = DEFAULT_R
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.n % 4 != 0 or self.n < 8:
            raise ConfigError("n must be a multiple of 4 (cluster layout uses quarters)")
        if self.t < 4:
            raise ConfigError("t is too small to run any of the tests")
        if len(self.rho) != 3 or len(self.psi) != 3:
            raise ConfigError("rho and psi must have one entry per latent cluster (3)")
        for psi_vec in self._psi_regimes():
            for rho_k, psi_k in zip(self.rho, psi_vec):
                if self._noise_radicand(rho_k, psi_k) <= 0:
                    raise ConfigError(
                        f"noise scale radicand is nonpositive for rho={rho_k}, psi={psi_k}"
                    )
        if self.break_at is not None and not 0 < self.break_at < self.t:
            raise ConfigError("break_at must be an interior period index")

    def _noise_radicand(self, rho_k: float, psi_k: float) -> float:
        sigma2 = self.alpha ** 2 * (1.0 - rho_k) ** 2 + psi_k
        return sigma2 * (1.0 - self.phi_eps ** 2) - self.lam ** 2

    def _psi_regimes(self):
        regimes = [tuple(self.psi)]
        if self.break_at is not None:
            regimes.append(tuple(-p for p in self.psi))
        return regimes

    def cluster_layout(self) -> np.ndarray:
        """True memberships: first quarter 1, second quarter 2, rest 3."""
        quarter = self.n // 4
        labels = np.full(self.n, 3, dtype=int)
        labels[:quarter] = 1
        labels[quarter:2 * quarter] = 2
        return labels

    def to_dict(self) -> dict:
        return {
            "n": self.n, "t": self.t, "rho": list(self.rho), "alpha": self.alpha,
            "phi_eps": self.phi_eps, "lambda": self.lam, "psi": list(self.psi),
            "conditional": self.conditional, "break_at": self.break_at,
            "reps": self.reps, "seed": self.seed, "q": self.q,
            "n_init": self.n_init, "k_max": self.k_max, "varsigma": self.varsigma,
            "r": self.r, "gamma": self.gamma,
        }


def psi_case1(psi: float) -> tuple:
    """Deviation pattern under which the overall-EPA null also fails."""
    return tuple(psi / 2.0 + psi * c for c in (-1.2, -0.8, 1.0))


def psi_case2(psi: float) -> tuple:
    """Deviation pattern whose size-weighted average is zero (overall EPA holds)."""
    return tuple(psi * c for c in (-1.2, -0.8, 1.0))


def design_config(name: str, *, n=80, t=50, psi=0.25, conditional=False,
                  reps=200, seed=None, q=0.05, **overrides) -> SimConfig:
    """Named experiment designs mirroring the size/power/break studies."""
    if name == "size":
        psi_vec, break_at = (0.0, 0.0, 0.0), None
    elif name == "power-case1":
        psi_vec, break_at = psi_case1(psi), None
    elif name == "power-case2":
        psi_vec, break_at = psi_case2(psi), None
    elif name == "break":
        psi_vec, break_at = psi_case1(psi), t // 2
    else:
        raise ConfigError(f"unknown design {name!r}; use size, power-case1, power-case2, break")
    return SimConfig(n=n, t=t, psi=psi_vec, conditional=conditional,
                     break_at=break_at, reps=reps, seed=seed, q=q, **overrides)


def simulate_panel(cfg: SimConfig, rep_seed) -> tuple[LossDifferentialPanel, dict]:
    """Draw one panel of loss differentials (plus the raw target series
    as the conditioning covariate).

    Both the target and the noise process start from their stationary
    marginals and get a 100-period burn-in.  In conditional mode one extra
    period is generated so that the lagged test function keeps exactly
    cfg.t usable periods.
    """
    rng = np.random.default_rng(rep_seed)
    labels = cfg.cluster_layout()
    rho = np.asarray(cfg.rho)[labels - 1]
    t_raw = cfg.t + (1 if cfg.conditional else 0)
    offset = t_raw - cfg.t
    total = BURN_IN + t_raw

    psi_first = np.asarray(cfg.psi)[labels - 1]
    if cfg.break_at is not None:
        psi_second = -psi_first
        flip_at = BURN_IN + cfg.break_at + offset
    else:
        psi_second = psi_first
        flip_at = total

    def noise_scale(psi_vec):
        sigma2 = cfg.alpha ** 2 * (1.0 - rho) ** 2 + psi_vec
        return np.sqrt(sigma2 * (1.0 - cfg.phi_eps ** 2) - cfg.lam ** 2)

    scale_first = noise_scale(psi_first)
    scale_second = noise_scale(psi_second)

    y = cfg.alpha + rng.standard_normal(cfg.n) / np.sqrt(1.0 - rho ** 2)
    sigma_eps0 = np.sqrt(cfg.alpha ** 2 * (1.0 - rho) ** 2 + psi_first)
    eps = sigma_eps0 * rng.standard_normal(cfg.n)
    f_common = rng.standard_normal(total)
    u_shocks = rng.standard_normal((cfg.n, total))
    xi_shocks = rng.standard_normal((cfg.n, total))

    dl = np.empty((cfg.n, t_raw))
    y_panel = np.empty((cfg.n, t_raw))
    intercept = cfg.alpha * (1.0 - rho)
    for s in range(total):
        scale = scale_first if s < flip_at else scale_second
        eps = cfg.phi_eps * eps + cfg.lam * f_common[s] + scale * xi_shocks[:, s]
        u = u_shocks[:, s]
        y_new = intercept + rho * y + u
        if s >= BURN_IN:
            j = s - BURN_IN
            # e1 = Y - Yhat1 = U - eps ; e2 = Y - Yhat2 = intercept + U
            e1 = u - eps
            e2 = intercept + u
            dl[:, j] = e1 * e1 - e2 * e2
            y_panel[:, j] = y_new
        y = y_new

    times = tuple(range(1, t_raw + 1))
    panel = LossDifferentialPanel(units=tuple(range(1, cfg.n + 1)), times=times, dl=dl)
    return panel, {"y": y_panel}


def moment_panel(cfg: SimConfig, panel: LossDifferentialPanel, covariates: dict) -> LossPanel:
    """Apply the design's conditioning scheme to a simulated panel."""
    if cfg.conditional:
        spec = TestFunctionSpec(kind="lagged-columns", columns={"y": covariates["y"]}, tau=1)
    else:
        spec = TestFunctionSpec(kind="constant")
    return apply_test_function(panel, spec)


def _run_replication(cfg: SimConfig, tests: tuple, rep_seed) -> dict:
    data_ss, fit_ss, split_ss = rep_seed.spawn(3)
    panel, covariates = simulate_panel(cfg, data_ss)
    z = moment_panel(cfg, panel, covariates)
    out: dict[str, dict] = {}

    shared_trace = None
    shared_selection = None
    if any(t in tests for t in ("naive", "selective", "homogeneity")):
        # A winning trace that needed an empty-cluster repair cannot be used
        # for selective inference (the repair is not an argmin step), so
        # retry the whole selection with fresh derived seeds a few times.
        last_error = None
        for attempt_seed in fit_ss.spawn(5):
            try:
                selection = select_k_ic(
                    z, k_max=cfg.k_max, varsigma=cfg.varsigma,
                    n_init=cfg.n_init, seed=np.random.default_rng(attempt_seed),
                )
            except CepaError as exc:
                last_error = exc
                continue
            shared_selection = selection
            shared_trace = selection.traces[selection.selected]
            if not shared_trace.repairs:
                break
        if shared_trace is None:
            for name in ("naive", "selective", "homogeneity"):
                if name in tests:
                    out[name] = {"error": str(last_error)}

    for name in tests:
        if name in out:
            continue
        try:
            if name == "predetermined":
                clustering = Clustering(assignments=cfg.cluster_layout(), k=3)
                report = wald_fixed_clusters(z, clustering, test_name="predetermined")
            elif name == "naive":
                report = wald_fixed_clusters(z, shared_trace.clustering, test_name="naive")
            elif name == "split":
                report = split_sample_test(
                    z, gamma=cfg.gamma, k="ic", n_init=cfg.n_init,
                    seed=np.random.default_rng(split_ss),
                    varsigma=cfg.varsigma, k_max=cfg.k_max,
                )
            elif name == "selective":
                report = composite_from_trace(
                    z, shared_trace, r=cfg.r, b=None, include_oepa=True,
                    test_name="selective-cepa", selection=shared_selection,
                )
            elif name == "homogeneity":
                report = composite_from_trace(
                    z, shared_trace, r=cfg.r, b=None, include_oepa=False,
                    test_name="homogeneity", selection=shared_selection,
                )
            elif name == "oepa":
                report = oepa_test(z)
            else:
                raise ConfigError(f"unknown test {name!r}")
            out[name] = {"p": report.p_value}
        except CepaError as exc:
            out[name] = {"error": str(exc)}
    return out


def _worker(args):
    cfg, tests, rep_seed = args
    import warnings as _warnings

    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore", RuntimeWarning)
        return _run_replication(cfg, tests, rep_seed)


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get("CEPA_THREADS")
        workers = int(env) if env else 1
    return max(1, workers)


def run_experiment(cfg: SimConfig, test_menu, q: float | None = None,
                   workers: int | None = None) -> dict:
    """Rejection-rate table over cfg.reps replications.

    Per-replication seeds are the children of SeedSequence(cfg.seed) in
    replication order, so the table is bit-identical for any worker count.
    Failed replications are excluded per test with a count; a failure rate
    of 1% or more aborts the table.
    """
    tests = tuple(test_menu)
    for name in tests:
        if name not in KNOWN_TESTS:
            raise ConfigError(f"unknown test {name!r}; choose from {KNOWN_TESTS}")
    if cfg.reps < 1:
        raise ConfigError("reps must be at least 1")
    q = cfg.q if q is None else q
    master = np.random.SeedSequence(cfg.seed)
    rep_seeds = master.spawn(cfg.reps)
    workers = resolve_workers(workers)
    jobs = [(cfg, tests, s) for s in rep_seeds]
    if workers == 1 or cfg.reps == 1:
        results = [_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs, chunksize=max(1, cfg.reps // (4 * workers))))

    rows = []
    for name in tests:
        ps = [r[name]["p"] for r in results if "p" in r[name]]
        failures = cfg.reps - len(ps)
        if failures / cfg.reps >= 0.01:
            raise NumericalError(
                f"test {name!r} failed in {failures}/{cfg.reps} replications"
            )
        rejections = sum(1 for p in ps if p <= q)
        rate = rejections / len(ps)
        se = math.sqrt(rate * (1.0 - rate) / len(ps)) if len(ps) > 1 else None
        rows.append({
            "test": name,
            "rejection_rate": rate,
            "mc_se": se,
            "reps_used": len(ps),
            "failures": failures,
        })
    return {"config": cfg.to_dict(), "q": q, "results": rows}

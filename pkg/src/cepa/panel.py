"""Balanced panels of forecast-loss differentials and moment series.

A loss-differential panel holds dl[i, t] for the difference of two
forecasters' losses.  Multiplying by a (lagged) conditioning test function
turns it into the N x T x P moment panel the test statistics operate on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import InputError

LOSS_COLUMNS = ("loss1", "loss2")


def _as_finite_2d(name: str, arr) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.ndim != 2:
        raise InputError(f"{name} must be a 2-D (units x periods) array, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InputError(f"{name} contains non-finite values")
    return out


@dataclass(frozen=True)
class LossDifferentialPanel:
    """Balanced N x T panel of loss differentials."""

    units: tuple
    times: tuple
    dl: np.ndarray

    def __post_init__(self):
        dl = _as_finite_2d("dl", self.dl)
        object.__setattr__(self, "dl", dl)
        n, t = dl.shape
        if n < 2 or t < 2:
            raise InputError(f"panel needs at least 2 units and 2 periods, got N={n}, T={t}")
        if len(self.units) != n or len(self.times) != t:
            raise InputError("unit/time label lengths do not match the data array")
        if len(set(self.units)) != n:
            raise InputError("duplicate unit labels")
        if len(set(self.times)) != t:
            raise InputError("duplicate time labels")

    @property
    def n(self) -> int:
        return self.dl.shape[0]

    @property
    def t(self) -> int:
        return self.dl.shape[1]


@dataclass(frozen=True)
class TestFunctionSpec:
    """Conditioning test function: a constant, or a constant plus lagged covariates."""

    __test__ = False  # not a pytest collectable despite the name

    kind: str = "constant"
    columns: Mapping[str, np.ndarray] = field(default_factory=dict)
    tau: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "lagged-columns"):
            raise InputError(f"unknown test function kind {self.kind!r}")
        if self.kind == "lagged-columns":
            if not self.columns:
                raise InputError("lagged-columns test function needs at least one covariate")
            if self.tau < 1:
                raise InputError("tau must be a positive integer")

    @property
    def p_dim(self) -> int:
        # A leading constant is always included.
        return 1 if self.kind == "constant" else 1 + len(self.columns)


@dataclass(frozen=True)
class LossPanel:
    """Moment panel z[i, t, :] = H_{i,t-tau} * dl[i, t], balanced and finite."""

    units: tuple
    times: tuple
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 3:
            raise InputError(f"z must be N x T x P, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise InputError("z contains non-finite values")
        object.__setattr__(self, "z", z)
        n, t, _ = z.shape
        if n < 2 or t < 2:
            raise InputError(f"panel needs at least 2 units and 2 periods, got N={n}, T={t}")
        if len(self.units) != n or len(self.times) != t:
            raise InputError("unit/time label lengths do not match the data array")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def t(self) -> int:
        return self.z.shape[1]

    @property
    def p_dim(self) -> int:
        return self.z.shape[2]

    def unit_means(self) -> np.ndarray:
        """N x P matrix of per-unit time averages."""
        return self.z.mean(axis=1)


def build_loss_differentials(loss1, loss2, units=None, times=None) -> LossDifferentialPanel:
    """Form dl = loss1 - loss2 from two aligned balanced loss panels."""
    l1 = _as_finite_2d("loss1", loss1)
    l2 = _as_finite_2d("loss2", loss2)
    if l1.shape != l2.shape:
        raise InputError(f"loss panels must have identical shape, got {l1.shape} vs {l2.shape}")
    n, t = l1.shape
    units = tuple(units) if units is not None else tuple(range(n))
    times = tuple(times) if times is not None else tuple(range(t))
    return LossDifferentialPanel(units=units, times=times, dl=l1 - l2)


def apply_test_function(dl: LossDifferentialPanel, h: TestFunctionSpec) -> LossPanel:
    """Multiply the loss differentials by the conditioning test function.

    With kind="constant" the output equals dl reshaped to P = 1.  With
    kind="lagged-columns" every covariate is lagged by tau periods, so the
    first tau periods of the raw panel are consumed and the output keeps
    T - tau periods.
    """
    if h.kind == "constant":
        return LossPanel(units=dl.units, times=dl.times, z=dl.dl[:, :, None].copy())
    if h.tau >= dl.t:
        raise InputError(f"tau={h.tau} leaves no usable periods in a T={dl.t} panel")
    cols = []
    for name, arr in h.columns.items():
        x = _as_finite_2d(f"covariate {name!r}", arr)
        if x.shape != dl.dl.shape:
            raise InputError(
                f"covariate {name!r} shape {x.shape} does not match the panel {dl.dl.shape}"
            )
        cols.append(x)
    tau = h.tau
    d = dl.dl[:, tau:]
    parts = [d[:, :, None]]
    for x in cols:
        parts.append((x[:, :-tau] * d)[:, :, None])
    z = np.concatenate(parts, axis=2)
    return LossPanel(units=dl.units, times=dl.times[tau:], z=z)


@dataclass(frozen=True)
class RawPanel:
    """Parsed CSV contents before the moment transformation."""

    units: tuple
    times: tuple
    loss1: np.ndarray | None = None
    loss2: np.ndarray | None = None
    z: np.ndarray | None = None
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    clusters: np.ndarray | None = None

    @property
    def has_losses(self) -> bool:
        return self.loss1 is not None


def _sorted_labels(values) -> list:
    labels = list(pd.unique(pd.Series(values)))
    try:
        numeric = [float(v) for v in labels]
    except (TypeError, ValueError):
        return sorted(labels, key=str)
    order = np.argsort(numeric, kind="stable")
    return [labels[i] for i in order]


def _pivot(df: pd.DataFrame, col: str, units, times) -> np.ndarray:
    wide = df.pivot(index="unit", columns="time", values=col)
    wide = wide.reindex(index=units, columns=times)
    arr = wide.to_numpy(dtype=float)
    if np.isnan(arr).any():
        raise InputError(f"panel is unbalanced or non-numeric in column {col!r}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"column {col!r} contains non-finite values")
    return arr


def read_panel_csv(path) -> RawPanel:
    """Read the long-format panel CSV contract.

    Header must contain ``unit`` and ``time`` plus either ``loss1,loss2``
    (optionally followed by covariate columns) or prebuilt moment columns
    ``z1..zP``.  An optional ``cluster`` column carries predetermined
    cluster labels, constant within each unit.
    """
    try:
        df = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise InputError(f"input file not found: {path}") from exc
    except Exception as exc:
        raise InputError(f"could not parse CSV {path}: {exc}") from exc
    cols = list(df.columns)
    if "unit" not in cols or "time" not in cols:
        raise InputError("CSV must have 'unit' and 'time' columns")
    if df.duplicated(subset=["unit", "time"]).any():
        raise InputError("duplicate (unit, time) rows in input")
    units = tuple(_sorted_labels(df["unit"]))
    times = tuple(_sorted_labels(df["time"]))

    z_cols = sorted(
        (c for c in cols if c.startswith("z") and c[1:].isdigit()),
        key=lambda c: int(c[1:]),
    )
    cluster = None
    if "cluster" in cols:
        per_unit = df.groupby("unit")["cluster"].nunique()
        if (per_unit > 1).any():
            raise InputError("cluster labels must be constant within each unit")
        mapping = df.drop_duplicates("unit").set_index("unit")["cluster"]
        raw = [mapping[u] for u in units]
        labels = _sorted_labels(raw)
        index = {lab: i + 1 for i, lab in enumerate(labels)}
        cluster = np.array([index[v] for v in raw], dtype=int)

    if all(c in cols for c in LOSS_COLUMNS):
        reserved = {"unit", "time", "cluster", *LOSS_COLUMNS}
        covariate_names = [c for c in cols if c not in reserved]
        loss1 = _pivot(df, "loss1", units, times)
        loss2 = _pivot(df, "loss2", units, times)
        covariates = {c: _pivot(df, c, units, times) for c in covariate_names}
        return RawPanel(
            units=units, times=times, loss1=loss1, loss2=loss2,
            covariates=covariates, clusters=cluster,
        )
    if z_cols:
        expected = [f"z{i}" for i in range(1, len(z_cols) + 1)]
        if z_cols != expected:
            raise InputError(f"moment columns must be named z1..zP, got {z_cols}")
        mats = [_pivot(df, c, units, times) for c in z_cols]
        z = np.stack(mats, axis=2)
        return RawPanel(units=units, times=times, z=z, clusters=cluster)
    raise InputError("CSV must contain either loss1/loss2 columns or z1..zP columns")

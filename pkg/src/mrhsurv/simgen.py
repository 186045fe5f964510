"""Synthetic right-censored survival data and the Nelson-Aalen estimator."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .survdata import Dataset, TimeGrid

__all__ = ["HazardSpec", "CovariateSpec", "SimConfig", "simulate", "StepFunction", "nelson_aalen"]


@dataclass(frozen=True)
class HazardSpec:
    """Baseline hazard of one stratum.

    ``kind="piecewise"``: constant ``rates[i]`` on ``(boundaries[i], boundaries[i+1]]``;
    the hazard is undefined past the last boundary.
    ``kind="weibull"``: ``h(t) = kappa lam (lam t)**(kappa - 1)``.
    """

    kind: str
    boundaries: tuple[float, ...] = ()
    rates: tuple[float, ...] = ()
    kappa: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.kind == "piecewise":
            b = np.asarray(self.boundaries, dtype=float)
            r = np.asarray(self.rates, dtype=float)
            if b.size != r.size + 1 or r.size == 0:
                raise ValueError("piecewise hazard needs len(boundaries) == len(rates) + 1")
            if b[0] != 0 or np.any(np.diff(b) <= 0):
                raise ValueError("boundaries must start at 0 and increase strictly")
            if np.any(r <= 0):
                raise ValueError("rates must be positive")
            object.__setattr__(self, "boundaries", tuple(float(x) for x in b))
            object.__setattr__(self, "rates", tuple(float(x) for x in r))
        elif self.kind == "weibull":
            if not (self.kappa > 0 and self.lam > 0):
                raise ValueError("Weibull parameters must be positive")
        else:
            raise ValueError(f"unknown hazard kind {self.kind!r}")

    @classmethod
    def piecewise(cls, boundaries, rates) -> "HazardSpec":
        return cls("piecewise", tuple(boundaries), tuple(rates))

    @classmethod
    def constant(cls, rate: float, horizon: float = math.inf) -> "HazardSpec":
        if math.isinf(horizon):
            return cls("weibull", kappa=1.0, lam=rate)
        return cls.piecewise([0.0, horizon], [rate])

    @classmethod
    def weibull(cls, kappa: float, lam: float) -> "HazardSpec":
        return cls("weibull", kappa=kappa, lam=lam)

    @property
    def end(self) -> float:
        return self.boundaries[-1] if self.kind == "piecewise" else math.inf

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "weibull":
            return self.kappa * self.lam * (self.lam * t) ** (self.kappa - 1)
        b = np.asarray(self.boundaries)
        j = np.clip(np.searchsorted(b, t, side="left"), 1, len(self.rates))
        return np.asarray(self.rates)[j - 1]

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "weibull":
            return (self.lam * t) ** self.kappa
        b = np.asarray(self.boundaries)
        r = np.asarray(self.rates)
        seg = np.clip(t[..., None] - b[:-1], 0.0, np.diff(b))
        return seg @ r

    def inverse_cumulative(self, y):
        """Smallest ``t`` with cumulative hazard ``y``; ``inf`` past a piecewise end."""
        y = np.asarray(y, dtype=float)
        if self.kind == "weibull":
            return y ** (1.0 / self.kappa) / self.lam
        b = np.asarray(self.boundaries)
        r = np.asarray(self.rates)
        cum = np.concatenate([[0.0], np.cumsum(np.diff(b) * r)])
        j = np.clip(np.searchsorted(cum, y, side="left"), 1, len(r))
        t = b[j - 1] + (y - cum[j - 1]) / r[j - 1]
        return np.where(y > cum[-1], np.inf, t)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CovariateSpec:
    name: str
    kind: str = "binary"
    p: float = 0.5
    mean: float = 0.0
    sd: float = 1.0

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "binary":
            return (rng.random(n) < self.p).astype(float)
        if self.kind == "normal":
            return rng.normal(self.mean, self.sd, size=n)
        raise ValueError(f"unknown covariate kind {self.kind!r}")


@dataclass
class SimConfig:
    """Simulation settings.

    ``n`` is the per-stratum sample size (an int applies to every stratum).
    Censoring time is ``min(c_admin, Exponential(c_rate))``; ``c_rate=0``
    disables random censoring.
    """

    n: int | list[int] = 100
    beta: list[float] = field(default_factory=list)
    covariates: list[CovariateSpec] = field(default_factory=list)
    c_admin: float = math.inf
    c_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        sizes = [self.n] if isinstance(self.n, int) else list(self.n)
        if any(int(s) < 1 for s in sizes):
            raise ValueError("n must be >= 1")
        if not self.c_admin > 0:
            raise ValueError("c_admin must be positive")
        if not self.c_rate >= 0:
            raise ValueError("c_rate must be >= 0")
        if len(self.beta) != len(self.covariates):
            raise ValueError("beta and covariates must have equal length")
        self.covariates = [c if isinstance(c, CovariateSpec) else CovariateSpec(**c) for c in self.covariates]

    def sizes(self, L: int) -> list[int]:
        if isinstance(self.n, int):
            return [self.n] * L
        if len(self.n) != L:
            raise ValueError(f"n lists {len(self.n)} strata but {L} hazards were given")
        return [int(s) for s in self.n]

    def to_json(self) -> str:
        d = asdict(self)
        d["c_admin"] = None if math.isinf(self.c_admin) else self.c_admin
        return json.dumps(d, sort_keys=True)


def simulate(specs: list[HazardSpec], cfg: SimConfig, M: int = 4, horizon: float | None = None) -> Dataset:
    """Draw a dataset by inverting each stratum's cumulative hazard.

    Event time ``T = H_base^{-1}(-log(U) / exp(x'beta))``. Draws that run past a
    piecewise hazard's last boundary are censored there. The grid horizon
    defaults to the administrative censoring time, or the largest observed
    time when that is infinite.
    """
    rng = np.random.default_rng(cfg.seed)
    sizes = cfg.sizes(len(specs))
    beta = np.asarray(cfg.beta, dtype=float)
    times, events, strata, Xs = [], [], [], []
    for ell, (spec, n) in enumerate(zip(specs, sizes)):
        X = np.column_stack([c.draw(n, rng) for c in cfg.covariates]) if cfg.covariates else np.zeros((n, 0))
        target = -np.log(rng.random(n)) * np.exp(-(X @ beta))
        T = spec.inverse_cumulative(target)
        C = np.minimum(rng.exponential(1.0 / cfg.c_rate, size=n), cfg.c_admin) if cfg.c_rate > 0 else np.full(n, cfg.c_admin)
        C = np.minimum(C, spec.end)
        times.append(np.minimum(T, C))
        events.append(T <= C)
        strata.append(np.full(n, ell))
        Xs.append(X)
    time = np.concatenate(times)
    if horizon is None:
        horizon = cfg.c_admin if math.isfinite(cfg.c_admin) else float(time.max())
    return Dataset(
        time=time,
        event=np.concatenate(events),
        stratum=np.concatenate(strata),
        X=np.vstack(Xs),
        stratum_count=len(specs),
        covariate_names=tuple(c.name for c in cfg.covariates),
        grid=TimeGrid.equal(M, horizon),
    )


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function with jumps at ``times``."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        vals = np.concatenate([[0.0], self.values])[idx]
        return float(vals) if np.ndim(vals) == 0 else vals


def nelson_aalen(data: Dataset, stratum: int | None = None) -> StepFunction:
    """Nelson-Aalen cumulative hazard of one stratum (all data if ``None``)."""
    mask = np.ones(data.n, dtype=bool) if stratum is None else data.stratum_mask(stratum)
    t = data.time[mask]
    e = data.event[mask]
    ev_times = np.unique(t[e])
    if ev_times.size == 0:
        return StepFunction(np.zeros(0), np.zeros(0))
    t_sorted = np.sort(t)
    at_risk = t.size - np.searchsorted(t_sorted, ev_times, side="left")
    d = np.bincount(np.searchsorted(ev_times, t[e]), minlength=ev_times.size)
    return StepFunction(ev_times, np.cumsum(d / at_risk))

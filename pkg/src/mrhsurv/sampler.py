"""Metropolis-within-Gibbs sampler for stratified MRH hazards.

One sweep updates, for every stratum in label order: the total hazard ``H``
(exact Gamma draw), the sampled hyperparameters ``a`` and ``lambda``, the
unpruned split fractions level by level, then ``k`` and ``gamma``. It then
updates each shared covariate effect ``beta_s`` in column order.

The likelihood of a stratum, as a function of its tree, only needs per-bin
event counts ``n_j`` and covariate-weighted normalized exposures
``E_j = sum_i exp(x_i'beta) * omega_ij / width_j``:

    loglik = sum_j n_j log(d_j / width_j) - sum_j d_j E_j + (terms free of the tree)

Splits on the same level touch disjoint sets of bins, so they are
conditionally independent and are updated together as one vectorized block
of independent one-dimensional Metropolis steps.

Random-walk scales adapt toward a target acceptance rate during burn-in only
and are frozen afterwards.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .mrhtree import (
    HyperParams,
    MrhTree,
    beta_shapes,
    increments,
    increments_batch,
    log_beta_prior,
    split_levels,
)
from .simgen import nelson_aalen
from .survdata import Dataset, bin_index, exposure_matrix

__all__ = [
    "ModelState",
    "ChainConfig",
    "Chain",
    "ChainLayout",
    "InitializationError",
    "default_priors",
    "initial_state",
    "log_likelihood",
    "subject_loglik",
    "sample_H",
    "sample_R",
    "sample_beta",
    "sample_hypers",
    "run",
    "write_chain",
    "read_chain",
]

MODES = ("fixed", "sampled")


class InitializationError(RuntimeError):
    pass


@dataclass
class ModelState:
    trees: list[MrhTree]
    beta: np.ndarray
    beta_prior_sd: float = 10.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1).copy()
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("beta must be finite")
        if len({t.M for t in self.trees}) > 1:
            raise ValueError("all trees must share the same depth")

    def copy(self) -> "ModelState":
        return ModelState([t.copy() for t in self.trees], self.beta.copy(), self.beta_prior_sd)


@dataclass
class ChainConfig:
    """MCMC run settings.

    ``n_retained`` counts stored draws; a chain runs
    ``burn_in + n_retained * thin`` sweeps.
    """

    n_chains: int = 5
    burn_in: int = 50_000
    n_retained: int = 150_000
    thin: int = 10
    seed: int = 0
    a_mode: str = "fixed"
    lambda_mode: str = "fixed"
    k_mode: str = "fixed"
    gamma_mode: str = "fixed"
    beta_prior_sd: float = 10.0
    scale_R: float = 1.0
    scale_beta: float = 0.1
    scale_lambda: float = 0.5
    scale_k: float = 0.5
    scale_gamma: float = 0.5
    target_accept: float = 0.44
    adapt: bool = True
    permute_scan: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.burn_in < 0 or self.n_retained < 0:
            raise ValueError("burn_in and n_retained must be >= 0")
        for name in ("a_mode", "lambda_mode", "k_mode", "gamma_mode"):
            if getattr(self, name) not in MODES:
                raise ValueError(f"{name} must be one of {MODES}")
        if not self.beta_prior_sd > 0:
            raise ValueError("beta_prior_sd must be positive")

    def config_hash(self) -> str:
        d = asdict(self)
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# likelihood


def subject_loglik(state: ModelState, data: Dataset) -> np.ndarray:
    """Per-subject log-likelihood contributions."""
    grid = data.grid
    eta = data.X @ state.beta
    delta = data.event_in_grid
    out = np.empty(data.n)
    W = exposure_matrix(data.time, grid) / grid.widths
    for ell, tree in enumerate(state.trees):
        mask = data.stratum_mask(ell)
        d = increments(tree)
        cum = W[mask] @ d
        j = np.asarray(bin_index(data.time[mask], grid)) - 1
        with np.errstate(divide="ignore"):
            log_h = np.log(d[j] / grid.widths[j])
        out[mask] = np.where(delta[mask], log_h + eta[mask], 0.0) - np.exp(eta[mask]) * cum
    return out


def log_likelihood(state: ModelState, data: Dataset) -> float:
    """Stratified proportional-hazards log-likelihood of ``data``.

    Observations past the grid horizon count as censored at the horizon.
    """
    return float(np.sum(subject_loglik(state, data)))


# ---------------------------------------------------------------------------
# priors and initial state


def default_priors(data: Dataset, a: int = 10, k: float = 0.5, gamma: float = 0.5) -> list[HyperParams]:
    """Per-stratum priors centred on the Nelson-Aalen total at ``t_J``.

    ``lambda`` is set so that the prior mean ``a * lambda`` of ``H`` equals the
    Nelson-Aalen cumulative hazard at the horizon.
    """
    out = []
    for ell in range(data.stratum_count):
        total = nelson_aalen(data, ell)(data.grid.horizon)
        if not total > 0:
            events, expo = data.bin_counts(ell)
            total = max(events.sum(), 0.5) / max(expo.sum(), 1e-12) * data.grid.horizon
        lam = total / a
        out.append(HyperParams(a=a, lam=lam, k=k, gamma=gamma, mu_a=float(a), mu_lambda=lam, mu_k=k))
    return out


def initial_state(data: Dataset, masks: list[np.ndarray], priors: list[HyperParams], cfg: ChainConfig) -> ModelState:
    trees = []
    M = data.grid.M
    for ell in range(data.stratum_count):
        h = priors[ell].copy()
        if cfg.a_mode == "sampled":
            h.a = max(1, int(round(h.mu_a)))
        if cfg.lambda_mode == "sampled":
            h.lam = h.mu_lambda
        if cfg.k_mode == "sampled":
            h.k = h.mu_k
        if cfg.gamma_mode == "sampled":
            h.gamma = np.full(2**M - 1, h.u / (h.u + h.w))
        events, expo = data.bin_counts(ell)
        tot = expo.sum()
        with np.errstate(over="ignore"):
            H = events.sum() / tot * data.grid.horizon if tot > 0 and events.sum() > 0 else 1.0
        trees.append(MrhTree.flat(M, H, h, masks[ell]))
    state = ModelState(trees, np.zeros(data.z), cfg.beta_prior_sd)
    with np.errstate(over="ignore", invalid="ignore"):
        ll = subject_loglik(state, data)
    bad = np.flatnonzero(~np.isfinite(ll))
    if bad.size:
        i = int(bad[0])
        raise InitializationError(
            f"non-finite log-likelihood at initialization for record {i} "
            f"(time={data.time[i]!r}, event={bool(data.event[i])}, stratum={int(data.stratum[i])})"
        )
    return state


# ---------------------------------------------------------------------------
# sweep machinery


class _Stats:
    """Data summaries reused on every sweep."""

    def __init__(self, data: Dataset):
        grid = data.grid
        self.M = grid.M
        self.J = grid.J
        self.widths = grid.widths
        self.X = np.ascontiguousarray(data.X)
        self.delta = data.event_in_grid.astype(float)
        self.dX = self.X.T @ self.delta
        W = exposure_matrix(data.time, grid) / grid.widths
        self.idx = [np.flatnonzero(data.stratum == ell) for ell in range(data.stratum_count)]
        self.W = [np.ascontiguousarray(W[i]) for i in self.idx]
        self.nbin = []
        self.N = []
        for ell in range(data.stratum_count):
            events, _ = data.bin_counts(ell)
            self.nbin.append(events)
            self.N.append(float(events.sum()))
        self.levels = split_levels(self.M)
        # events per node, node_events[ell][m] has 2**m entries
        self.node_events = [
            {m: nb.reshape(2**m, -1).sum(axis=1) for m in range(self.M + 1)} for nb in self.nbin
        ]


def _logit(x):
    return np.log(x) - np.log1p(-x)


class _Sweeper:
    def __init__(self, stats: _Stats, state: ModelState, cfg: ChainConfig):
        self.s = stats
        self.state = state
        self.cfg = cfg
        L = len(state.trees)
        n_split = stats.J - 1
        self.log_scale = {
            "R": np.full((L, n_split), math.log(cfg.scale_R)),
            "beta": np.full(stats.X.shape[1], math.log(cfg.scale_beta)),
            "lambda": np.full(L, math.log(cfg.scale_lambda)),
            "k": np.full(L, math.log(cfg.scale_k)),
            "gamma": np.full((L, n_split), math.log(cfg.scale_gamma)),
        }
        self.acc = {key: np.zeros_like(v) for key, v in self.log_scale.items()}
        self.acc["a"] = np.zeros(L)
        self.tries = {key: np.zeros_like(v) for key, v in self.acc.items()}
        self.adapting = False
        self.t = 0
        self.eta = stats.X @ state.beta
        self.e = np.exp(self.eta)

    # bookkeeping -----------------------------------------------------------

    def _record(self, key, where, prob, accepted):
        if self.adapting:
            if key not in self.log_scale:
                return
            gain = 1.0 / (self.t + 1) ** 0.6
            self.log_scale[key][where] += gain * (prob - self.cfg.target_accept)
        else:
            self.acc[key][where] += accepted
            self.tries[key][where] += 1

    def E(self, ell: int) -> np.ndarray:
        return self.s.W[ell].T @ self.e[self.s.idx[ell]]

    # blocks ------------------------------------------------------------------

    def draw_H(self, ell, rng, E=None, size=None):
        tree = self.state.trees[ell]
        h = tree.hyper
        E = self.E(ell) if E is None else E
        d = increments(tree)
        rate = 1.0 / h.lam + float(E @ d) / tree.H
        out = rng.gamma(h.a + self.s.N[ell], 1.0 / rate, size=size)
        return float(out) if size is None else out

    def update_splits(self, ell, rng, E, only=None):
        """Update all unpruned splits of one stratum, one level at a time.

        ``A[m][q]`` is the increment-weighted mean of ``E`` inside node ``q`` of
        level ``m``; it only depends on deeper splits, so it is built bottom-up
        before the top-down pass.
        """
        tree = self.state.trees[ell]
        M = tree.M
        free_all = ~tree.pruned if only is None else (~tree.pruned & only)
        levels = [m for m in range(1, M + 1) if free_all[2 ** (m - 1) - 1 : 2**m - 1].any()]
        if not levels:
            return
        R = tree.R
        A = [None] * (M + 1)
        A[M] = E
        for m in range(M - 1, levels[0] - 1, -1):
            r = R[2**m - 1 : 2 ** (m + 1) - 1]
            A[m] = r * A[m + 1][0::2] + (1.0 - r) * A[m + 1][1::2]
        alpha, beta = beta_shapes(tree.hyper, M)
        nodes = np.array([tree.H])
        for m in range(1, levels[-1] + 1):
            lo, hi = 2 ** (m - 1) - 1, 2**m - 1
            r = R[lo:hi]
            if m in levels:
                free = free_all[lo:hi]
                nn = self.s.node_events[ell][m]
                cL = alpha[lo:hi] + nn[0::2]
                cR = beta[lo:hi] + nn[1::2]
                AL, AR = A[m][0::2], A[m][1::2]

                def log_target(x):
                    with np.errstate(divide="ignore", invalid="ignore"):
                        return cL * np.log(x) + cR * np.log1p(-x) - nodes * (x * AL + (1.0 - x) * AR)

                scale = np.exp(self.log_scale["R"][ell, lo:hi])
                r_new = special.expit(_logit(r) + scale * rng.standard_normal(r.size))
                log_ratio = log_target(r_new) - log_target(r)
                log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
                accept = free & (np.log(rng.random(r.size)) < log_ratio)
                R[lo:hi] = r = np.where(accept, r_new, r)
                prob = np.exp(np.minimum(log_ratio, 0.0))
                self._record("R", (ell, np.arange(lo, hi)[free]), prob[free], accept[free])
            nodes = np.column_stack([nodes * r, nodes * (1.0 - r)]).reshape(-1)

    def update_beta(self, s, rng, Hc):
        beta = self.state.beta
        sd = self.state.beta_prior_sd
        step = math.exp(self.log_scale["beta"][s]) * rng.standard_normal()
        new = beta[s] + step
        eta_new = self.eta + self.s.X[:, s] * step
        e_new = np.exp(eta_new)
        log_ratio = step * self.s.dX[s] - float((e_new - self.e) @ Hc) - (new**2 - beta[s] ** 2) / (2 * sd**2)
        accepted = math.log(rng.random()) < log_ratio
        if accepted:
            beta[s] = new
            self.eta = eta_new
            self.e = e_new
        self._record("beta", s, math.exp(min(log_ratio, 0.0)), accepted)

    def update_a(self, ell, rng):
        tree = self.state.trees[ell]
        h = tree.hyper
        prop = h.a + (1 if rng.random() < 0.5 else -1)
        u = rng.random()
        if prop < 1:
            self._record("a", ell, 0.0, False)
            return

        def log_target(a):
            return (
                a * math.log(h.mu_a) - special.gammaln(a + 1)
                + (a - 1) * math.log(tree.H) - a * math.log(h.lam) - special.gammaln(a)
                + log_beta_prior(tree.R, tree.pruned, h, tree.M, a=a)
            )

        log_ratio = log_target(prop) - log_target(h.a)
        accepted = math.log(u) < log_ratio
        if accepted:
            h.a = int(prop)
        self._record("a", ell, math.exp(min(log_ratio, 0.0)), accepted)

    def update_lambda(self, ell, rng):
        tree = self.state.trees[ell]
        h = tree.hyper

        def log_target(lam):
            return -(h.a - 1) * math.log(lam) - tree.H / lam - lam / h.mu_lambda

        new = h.lam * math.exp(math.exp(self.log_scale["lambda"][ell]) * rng.standard_normal())
        log_ratio = log_target(new) - log_target(h.lam)
        accepted = math.log(rng.random()) < log_ratio
        if accepted:
            h.lam = new
        self._record("lambda", ell, math.exp(min(log_ratio, 0.0)), accepted)

    def update_k(self, ell, rng):
        tree = self.state.trees[ell]
        h = tree.hyper
        if tree.pruned.all():
            return

        def log_target(k):
            return log_beta_prior(tree.R, tree.pruned, h, tree.M, k=k) - k / h.mu_k + math.log(k)

        new = h.k * math.exp(math.exp(self.log_scale["k"][ell]) * rng.standard_normal())
        log_ratio = log_target(new) - log_target(h.k)
        accepted = math.log(rng.random()) < log_ratio
        if accepted:
            h.k = new
        self._record("k", ell, math.exp(min(log_ratio, 0.0)), accepted)

    def update_gamma(self, ell, rng):
        tree = self.state.trees[ell]
        h = tree.hyper
        free = ~tree.pruned
        if not free.any():
            return
        g = h.gamma_vector(tree.M).copy()
        scale = 2.0 * h.k ** self.s.levels * h.a
        logR, log1mR = np.log(tree.R), np.log1p(-tree.R)

        def log_target(gv):
            a1, b1 = gv * scale, (1.0 - gv) * scale
            return (a1 * logR + b1 * log1mR - special.betaln(a1, b1)
                    + h.u * np.log(gv) + h.w * np.log1p(-gv))

        new = special.expit(_logit(g) + np.exp(self.log_scale["gamma"][ell]) * rng.standard_normal(g.size))
        log_ratio = log_target(new) - log_target(g)
        log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
        accept = free & (np.log(rng.random(g.size)) < log_ratio)
        h.gamma = np.where(accept, new, g)
        self._record("gamma", (ell, np.flatnonzero(free)), np.exp(np.minimum(log_ratio, 0.0))[free], accept[free])

    def sweep(self, rng):
        cfg = self.cfg
        L = len(self.state.trees)
        order = rng.permutation(L) if cfg.permute_scan else range(L)
        Hc = np.empty(self.s.X.shape[0])
        for ell in order:
            tree = self.state.trees[ell]
            E = self.E(ell)
            tree.H = self.draw_H(ell, rng, E)
            if cfg.a_mode == "sampled":
                self.update_a(ell, rng)
            if cfg.lambda_mode == "sampled":
                self.update_lambda(ell, rng)
            self.update_splits(ell, rng, E)
            if cfg.k_mode == "sampled":
                self.update_k(ell, rng)
            if cfg.gamma_mode == "sampled":
                self.update_gamma(ell, rng)
        for ell, tree in enumerate(self.state.trees):
            Hc[self.s.idx[ell]] = self.s.W[ell] @ increments(tree)
        z = self.s.X.shape[1]
        for s in (rng.permutation(z) if cfg.permute_scan else range(z)):
            self.update_beta(s, rng, Hc)
        self.t += 1

    def acceptance_table(self) -> dict[str, float]:
        out = {}
        for ell in range(len(self.state.trees)):
            for slot in range(self.s.J - 1):
                if self.tries["R"][ell, slot]:
                    m = int(self.s.levels[slot])
                    out[f"R[{ell}][{m},{slot - 2 ** (m - 1) + 1}]"] = float(
                        self.acc["R"][ell, slot] / self.tries["R"][ell, slot])
            for key in ("a", "lambda", "k"):
                if self.tries[key][ell]:
                    out[f"{key}[{ell}]"] = float(self.acc[key][ell] / self.tries[key][ell])
            tries = self.tries["gamma"][ell].sum()
            if tries:
                out[f"gamma[{ell}]"] = float(self.acc["gamma"][ell].sum() / tries)
        for s in range(self.s.X.shape[1]):
            if self.tries["beta"][s]:
                out[f"beta[{s}]"] = float(self.acc["beta"][s] / self.tries["beta"][s])
        return out


def _single_step_sweeper(state: ModelState, data: Dataset, cfg: ChainConfig | None = None) -> _Sweeper:
    cfg = cfg or ChainConfig(n_chains=1, burn_in=0, n_retained=0, beta_prior_sd=state.beta_prior_sd)
    return _Sweeper(_Stats(data), state.copy(), cfg)


def sample_H(stratum: int, state: ModelState, data: Dataset, rng: np.random.Generator,
             size: int | None = None):
    """Exact draw of ``H`` for one stratum from its Gamma full conditional.

    Shape ``a + sum(delta)``, rate ``1/lambda + sum(exp(x'beta) F(T))`` where
    ``F(T) = H(min(T, t_J)) / H`` depends on the splits only. With ``size``,
    returns that many independent draws given the current splits and ``beta``.
    """
    return _single_step_sweeper(state, data).draw_H(stratum, rng, size=size)


def sample_R(stratum: int, split: tuple[int, int], state: ModelState, data: Dataset,
             rng: np.random.Generator, scale: float = 1.0) -> float:
    """One logit-scale random-walk Metropolis update of split ``(m, p)``."""
    m, p = split
    tree = state.trees[stratum]
    if tree.pruned[2 ** (m - 1) - 1 + p]:
        raise ValueError(f"split {split} is pruned")
    sw = _single_step_sweeper(state, data, ChainConfig(n_chains=1, burn_in=0, n_retained=0, scale_R=scale))
    only = np.zeros(tree.R.size, dtype=bool)
    only[2 ** (m - 1) - 1 + p] = True
    sw.update_splits(stratum, rng, sw.E(stratum), only=only)
    return float(sw.state.trees[stratum].R[2 ** (m - 1) - 1 + p])


def sample_beta(s: int, state: ModelState, data: Dataset, rng: np.random.Generator, scale: float = 0.1) -> float:
    """One random-walk Metropolis update of ``beta_s`` pooling all strata."""
    sw = _single_step_sweeper(state, data, ChainConfig(n_chains=1, burn_in=0, n_retained=0,
                                                       scale_beta=scale, beta_prior_sd=state.beta_prior_sd))
    Hc = np.empty(data.n)
    for ell, tree in enumerate(sw.state.trees):
        Hc[sw.s.idx[ell]] = sw.s.W[ell] @ increments(tree)
    sw.update_beta(s, rng, Hc)
    return float(sw.state.beta[s])


def sample_hypers(stratum: int, state: ModelState, rng: np.random.Generator, cfg: ChainConfig,
                  data: Dataset | None = None) -> HyperParams:
    """Update the sampled hyperparameters of one stratum; fixed ones are left alone.

    The hyperparameter conditionals do not involve the data; ``data`` only
    supplies the grid when given.
    """
    tree = state.trees[stratum]
    if data is None:
        from .survdata import TimeGrid

        grid = TimeGrid.equal(tree.M, 1.0)
        data = Dataset([0.5], [False], [0], np.zeros((1, state.beta.size)), 1,
                       tuple(f"x{i}" for i in range(state.beta.size)), grid)
        state = ModelState([tree], state.beta, state.beta_prior_sd)
        stratum_local = 0
    else:
        stratum_local = stratum
    sw = _single_step_sweeper(state, data, cfg)
    if cfg.a_mode == "sampled":
        sw.update_a(stratum_local, rng)
    if cfg.lambda_mode == "sampled":
        sw.update_lambda(stratum_local, rng)
    if cfg.k_mode == "sampled":
        sw.update_k(stratum_local, rng)
    if cfg.gamma_mode == "sampled":
        sw.update_gamma(stratum_local, rng)
    return sw.state.trees[stratum_local].hyper


# ---------------------------------------------------------------------------
# chains


@dataclass
class ChainLayout:
    """How a flat draw record maps back onto the model."""

    L: int
    M: int
    covariate_names: tuple[str, ...]
    pruned: np.ndarray
    priors: list[HyperParams]
    gamma_sampled: bool = False
    stratum_labels: tuple[str, ...] = ()

    @property
    def J(self) -> int:
        return 2**self.M

    def columns(self) -> list[str]:
        cols = [f"H[{ell}]" for ell in range(self.L)]
        for ell in range(self.L):
            for m in range(1, self.M + 1):
                cols += [f"R[{ell}][{m},{p}]" for p in range(2 ** (m - 1))]
        cols += [f"beta[{name}]" for name in self.covariate_names]
        for key in ("a", "lambda", "k"):
            cols += [f"{key}[{ell}]" for ell in range(self.L)]
        if self.gamma_sampled:
            for ell in range(self.L):
                for m in range(1, self.M + 1):
                    cols += [f"gamma[{ell}][{m},{p}]" for p in range(2 ** (m - 1))]
        return cols

    def flatten(self, state: ModelState) -> np.ndarray:
        parts = [np.array([t.H for t in state.trees])]
        parts += [t.R for t in state.trees]
        parts.append(state.beta)
        parts.append(np.array([t.hyper.a for t in state.trees], dtype=float))
        parts.append(np.array([t.hyper.lam for t in state.trees]))
        parts.append(np.array([t.hyper.k for t in state.trees]))
        if self.gamma_sampled:
            parts += [t.hyper.gamma_vector(self.M) for t in state.trees]
        return np.concatenate(parts)

    def slices(self) -> dict[str, slice]:
        L, S, z = self.L, self.J - 1, len(self.covariate_names)
        out = {"H": slice(0, L), "R": slice(L, L + L * S)}
        o = L + L * S
        out["beta"] = slice(o, o + z)
        o += z
        for key in ("a", "lambda", "k"):
            out[key] = slice(o, o + L)
            o += L
        if self.gamma_sampled:
            out["gamma"] = slice(o, o + L * S)
        return out

    def state_from_record(self, row: np.ndarray, beta_prior_sd: float = 10.0) -> ModelState:
        sl = self.slices()
        S = self.J - 1
        R = row[sl["R"]].reshape(self.L, S)
        trees = []
        for ell in range(self.L):
            h = self.priors[ell].copy()
            h.a = int(round(row[sl["a"]][ell]))
            h.lam = float(row[sl["lambda"]][ell])
            h.k = float(row[sl["k"]][ell])
            if self.gamma_sampled:
                h.gamma = row[sl["gamma"]].reshape(self.L, S)[ell]
            trees.append(MrhTree(self.M, float(row[sl["H"]][ell]), R[ell], self.pruned[ell], h))
        return ModelState(trees, row[sl["beta"]], beta_prior_sd)

    def to_dict(self) -> dict:
        priors = []
        for h in self.priors:
            d = asdict(h)
            d["gamma"] = np.asarray(h.gamma).tolist()
            priors.append(d)
        return {
            "L": self.L,
            "M": self.M,
            "covariate_names": list(self.covariate_names),
            "pruned": self.pruned.astype(int).tolist(),
            "priors": priors,
            "gamma_sampled": self.gamma_sampled,
            "stratum_labels": list(self.stratum_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChainLayout":
        return cls(d["L"], d["M"], tuple(d["covariate_names"]), np.array(d["pruned"], dtype=bool),
                   [HyperParams(**p) for p in d["priors"]], d["gamma_sampled"], tuple(d["stratum_labels"]))


@dataclass
class Chain:
    layout: ChainLayout
    draws: np.ndarray
    loglik: np.ndarray
    iterations: np.ndarray
    acceptance: dict[str, float] = field(default_factory=dict)
    seed: tuple[int, int] = (0, 0)
    config_hash: str = ""
    beta_prior_sd: float = 10.0

    @property
    def columns(self) -> list[str]:
        return self.layout.columns()

    def __len__(self) -> int:
        return self.draws.shape[0]

    def block(self, key: str) -> np.ndarray:
        return self.draws[:, self.layout.slices()[key]]

    @property
    def H(self) -> np.ndarray:
        return self.block("H")

    @property
    def R(self) -> np.ndarray:
        return self.block("R").reshape(len(self), self.layout.L, self.layout.J - 1)

    @property
    def beta(self) -> np.ndarray:
        return self.block("beta")

    def increments(self) -> np.ndarray:
        """Per-draw hazard increments, shape ``(draws, L, J)``."""
        return increments_batch(self.H, self.R, self.layout.M)

    def state(self, i: int) -> ModelState:
        return self.layout.state_from_record(self.draws[i], self.beta_prior_sd)


def _run_chain(args) -> Chain:
    data, masks, priors, cfg, chain_id = args
    seq = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)[chain_id]
    rng = np.random.default_rng(seq)
    state = initial_state(data, masks, priors, cfg)
    layout = ChainLayout(data.stratum_count, data.grid.M, data.covariate_names,
                         np.array(masks, dtype=bool).reshape(data.stratum_count, -1),
                         [p.copy() for p in priors], cfg.gamma_mode == "sampled", data.stratum_labels)
    stats = _Stats(data)
    sw = _Sweeper(stats, state, cfg)
    n_cols = len(layout.columns())
    draws = np.empty((cfg.n_retained, n_cols))
    loglik = np.empty(cfg.n_retained)
    iters = np.empty(cfg.n_retained, dtype=np.int64)
    if cfg.n_retained > 0:
        sw.adapting = cfg.adapt
        for _ in range(cfg.burn_in):
            sw.sweep(rng)
        sw.adapting = False
        for i in range(cfg.n_retained):
            for _ in range(cfg.thin):
                sw.sweep(rng)
            draws[i] = layout.flatten(sw.state)
            loglik[i] = log_likelihood(sw.state, data)
            iters[i] = sw.t
    return Chain(layout, draws, loglik, iters, sw.acceptance_table(), (cfg.seed, chain_id),
                 cfg.config_hash(), cfg.beta_prior_sd)


def run(data: Dataset, prune_masks: list[np.ndarray] | None, cfg: ChainConfig,
        priors: list[HyperParams] | None = None) -> list[Chain]:
    """Run ``cfg.n_chains`` independent chains after pruning has been done.

    Chain ``c`` draws from ``SeedSequence(cfg.seed).spawn(n_chains)[c]``, so
    output does not depend on ``cfg.workers``.
    """
    if prune_masks is None:
        prune_masks = [np.zeros(data.grid.J - 1, dtype=bool)] * data.stratum_count
    if len(prune_masks) != data.stratum_count:
        raise ValueError("need one prune mask per stratum")
    priors = priors or default_priors(data)
    jobs = [(data, prune_masks, priors, cfg, c) for c in range(cfg.n_chains)]
    if cfg.workers > 1 and cfg.n_chains > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_run_chain, jobs))
    return [_run_chain(j) for j in jobs]


# ---------------------------------------------------------------------------
# draw files


def _fmt(x: float) -> str:
    return repr(float(x))


def write_chain(chain: Chain, path: str | Path, fmt: str = "csv") -> None:
    """One flat record per retained draw: iteration, parameters, loglik."""
    cols = chain.columns
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", *cols, "loglik"])
        for it, row, ll in zip(chain.iterations, chain.draws, chain.loglik):
            w.writerow([int(it), *(_fmt(v) for v in row), _fmt(ll)])
        text = buf.getvalue()
    elif fmt == "jsonl":
        lines = []
        for it, row, ll in zip(chain.iterations, chain.draws, chain.loglik):
            rec = {"iteration": int(it)}
            rec.update({c: float(v) for c, v in zip(cols, row)})
            rec["loglik"] = float(ll)
            lines.append(json.dumps(rec))
        text = "".join(line + "\n" for line in lines)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")


def read_chain(path: str | Path, layout: ChainLayout, fmt: str | None = None, **meta) -> Chain:
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    cols = layout.columns()
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[1:-1] != cols:
            raise ValueError(f"{path}: column layout does not match")
        arr = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))
    else:
        recs = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
        arr = np.array([[r["iteration"], *(r[c] for c in cols), r["loglik"]] for r in recs]).reshape(len(recs), len(cols) + 2)
    return Chain(layout, arr[:, 1:-1], arr[:, -1], arr[:, 0].astype(np.int64), **meta)

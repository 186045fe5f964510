"""Multi-resolution hazard tree.

A stratum's hazard over ``[0, t_J]`` is parametrized by the total cumulative
hazard ``H`` and one split fraction ``R[m, p]`` per internal node of a dyadic
tree of depth ``M``. Splits are stored flat in breadth-first order: the split
of level ``m`` (1-based) at position ``p`` lives at ``2**(m-1) - 1 + p``.

Priors: ``H ~ Gamma(shape=a, scale=lam)`` and
``R[m, p] ~ Beta(2 gamma k**m a, 2 (1 - gamma) k**m a)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import special

from .survdata import TimeGrid, bin_index

__all__ = [
    "HyperParams",
    "MrhTree",
    "split_index",
    "split_levels",
    "increments",
    "increments_batch",
    "node_totals",
    "cumulative_at",
    "hazard_at",
    "log_prior",
    "log_beta_prior",
    "beta_shapes",
    "sample_prior",
]


def split_index(m: int, p: int) -> int:
    return 2 ** (m - 1) - 1 + p


@lru_cache(maxsize=None)
def _split_levels(M: int) -> np.ndarray:
    out = np.concatenate([np.full(2 ** (m - 1), m) for m in range(1, M + 1)]).astype(int) if M else np.zeros(0, int)
    out.setflags(write=False)
    return out


def split_levels(M: int) -> np.ndarray:
    """Level ``m`` of every flat split slot."""
    return _split_levels(M)


@dataclass
class HyperParams:
    """Prior hyperparameters of one stratum's tree.

    ``a`` must be a positive integer (its hyperprior is a zero-truncated
    Poisson). ``gamma`` holds one prior split centre per split slot; a scalar
    is broadcast. ``mu_*`` and ``(u, w)`` only matter when the corresponding
    hyperparameter is sampled.
    """

    a: int = 10
    lam: float = 1.0
    k: float = 0.5
    gamma: np.ndarray | float = 0.5
    mu_a: float = 10.0
    mu_lambda: float = 1.0
    mu_k: float = 0.5
    u: float = 2.0
    w: float = 2.0

    def __post_init__(self):
        if int(self.a) != self.a or self.a < 1:
            raise ValueError("a must be a positive integer")
        self.a = int(self.a)
        for name in ("lam", "k", "mu_a", "mu_lambda", "mu_k", "u", "w"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        g = np.asarray(self.gamma, dtype=float)
        if np.any((g <= 0) | (g >= 1)):
            raise ValueError("gamma must lie strictly inside (0, 1)")
        self.gamma = g.copy() if g.ndim else float(g)

    def gamma_vector(self, M: int) -> np.ndarray:
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim == 0:
            return np.full(2**M - 1, float(g))
        if g.shape != (2**M - 1,):
            raise ValueError(f"gamma must have {2**M - 1} entries for M={M}")
        return g

    def copy(self) -> "HyperParams":
        return replace(self, gamma=np.array(self.gamma, dtype=float) if np.ndim(self.gamma) else self.gamma)


@dataclass
class MrhTree:
    M: int
    H: float
    R: np.ndarray
    pruned: np.ndarray = None
    hyper: HyperParams = field(default_factory=HyperParams)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float).reshape(-1).copy()
        n_split = 2**self.M - 1
        if self.R.shape != (n_split,):
            raise ValueError(f"M={self.M} needs {n_split} splits, got {self.R.size}")
        if self.pruned is None:
            self.pruned = np.zeros(n_split, dtype=bool)
        self.pruned = np.asarray(self.pruned, dtype=bool).reshape(-1).copy()
        if self.pruned.shape != (n_split,):
            raise ValueError("pruned mask must match the split vector")
        self.R[self.pruned] = 0.5
        if not self.H > 0:
            raise ValueError("H must be positive")
        if np.any((self.R <= 0) | (self.R >= 1)):
            raise ValueError("splits must lie strictly inside (0, 1)")

    @classmethod
    def flat(cls, M: int, H: float, hyper: HyperParams | None = None, pruned=None) -> "MrhTree":
        return cls(M, H, np.full(2**M - 1, 0.5), pruned, hyper or HyperParams())

    @property
    def J(self) -> int:
        return 2**self.M

    def copy(self) -> "MrhTree":
        return MrhTree(self.M, self.H, self.R, self.pruned, self.hyper.copy())

    def to_record(self) -> dict:
        return {
            "M": self.M,
            "H": float(self.H),
            "R": [float(r) for r in self.R],
            "pruned": [bool(p) for p in self.pruned],
        }

    @classmethod
    def from_record(cls, rec: dict, hyper: HyperParams | None = None) -> "MrhTree":
        return cls(rec["M"], rec["H"], rec["R"], rec["pruned"], hyper or HyperParams())


def increments_batch(H, R: np.ndarray, M: int) -> np.ndarray:
    """Leaf increments for stacked trees: ``H`` shape (...,), ``R`` (..., J-1)."""
    H = np.asarray(H, dtype=float)
    R = np.asarray(R, dtype=float)
    d = H[..., None]
    for m in range(1, M + 1):
        r = R[..., 2 ** (m - 1) - 1 : 2**m - 1]
        d = np.stack([d * r, d * (1.0 - r)], axis=-1).reshape(*d.shape[:-1], 2**m)
    return d


@lru_cache(maxsize=None)
def _leaf_paths(M: int) -> tuple[np.ndarray, np.ndarray]:
    """Split slot and left/right flag of every (level, leaf) pair, shape (M, J)."""
    leaves = np.arange(2**M)
    slots = np.empty((M, 2**M), dtype=np.intp)
    left = np.empty((M, 2**M), dtype=bool)
    for m in range(1, M + 1):
        node = leaves >> (M - m)
        slots[m - 1] = 2 ** (m - 1) - 1 + (node >> 1)
        left[m - 1] = (node & 1) == 0
    return slots, left


def increments(tree: MrhTree) -> np.ndarray:
    """Hazard increments ``d_1..d_J`` (integrated hazard per bin)."""
    if tree.M == 0:
        return np.array([float(tree.H)])
    slots, left = _leaf_paths(tree.M)
    r = tree.R[slots]
    return tree.H * np.where(left, r, 1.0 - r).prod(axis=0)


def node_totals(tree: MrhTree) -> list[np.ndarray]:
    """``H_{m,q}`` for every level, built top-down; level 0 is ``[H]``."""
    out = [np.array([tree.H])]
    for m in range(1, tree.M + 1):
        r = tree.R[2 ** (m - 1) - 1 : 2**m - 1]
        parent = out[-1]
        out.append(np.column_stack([parent * r, parent * (1.0 - r)]).reshape(-1))
    return out


def cumulative_at(t, tree: MrhTree, grid: TimeGrid):
    """Cumulative hazard ``H(t)``, linear within bins and equal to ``H`` past ``t_J``."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("cumulative hazard is undefined for negative times")
    d = increments(tree)
    cum = np.concatenate([[0.0], np.cumsum(d)])
    j = np.asarray(bin_index(arr, grid))
    tc = np.minimum(arr, grid.horizon)
    frac = (tc - grid.boundaries[j - 1]) / grid.widths[j - 1]
    out = cum[j - 1] + d[j - 1] * frac
    out = np.where(arr >= grid.horizon, tree.H, out)
    return float(out) if out.ndim == 0 else out


def hazard_at(t, tree: MrhTree, grid: TimeGrid):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(arr >= grid.horizon):
        raise ValueError(f"hazard is only defined on [0, {grid.horizon:g})")
    j = np.asarray(bin_index(arr, grid))
    out = increments(tree)[j - 1] / grid.widths[j - 1]
    return float(out) if out.ndim == 0 else out


def beta_shapes(hyper: HyperParams, M: int, k: float | None = None, a: float | None = None,
                gamma: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    k = hyper.k if k is None else k
    a = hyper.a if a is None else a
    g = hyper.gamma_vector(M) if gamma is None else gamma
    scale = 2.0 * k ** split_levels(M) * a
    return g * scale, (1.0 - g) * scale


def _log_beta_pdf(x, alpha, beta):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (alpha - 1) * np.log(x) + (beta - 1) * np.log1p(-x) - special.betaln(alpha, beta)
    return np.where((x <= 0) | (x >= 1), -np.inf, out)


def log_beta_prior(R: np.ndarray, pruned: np.ndarray, hyper: HyperParams, M: int, **over) -> float:
    """Sum of split log-densities over unpruned splits."""
    alpha, beta = beta_shapes(hyper, M, **over)
    keep = ~np.asarray(pruned, dtype=bool)
    return float(np.sum(_log_beta_pdf(np.asarray(R)[keep], alpha[keep], beta[keep])))


def log_prior(tree: MrhTree) -> float:
    """Gamma log-density of ``H`` plus Beta log-densities of unpruned splits."""
    h = tree.hyper
    lg = (h.a - 1) * np.log(tree.H) - tree.H / h.lam - special.gammaln(h.a) - h.a * np.log(h.lam)
    return float(lg) + log_beta_prior(tree.R, tree.pruned, h, tree.M)


def sample_prior(M: int, hyper: HyperParams, size: int, rng: np.random.Generator):
    """Draw ``size`` trees from the prior; returns ``(H, R)`` arrays."""
    H = rng.gamma(hyper.a, hyper.lam, size=size)
    alpha, beta = beta_shapes(hyper, M)
    R = rng.beta(alpha, beta, size=(size, alpha.size))
    return H, R

"""Pre-sampling pruning of MRH splits.

Each tested split compares the failure counts of its two child time spans
with an exact two-sided binomial test. Under a hazard that is constant over
the parent span, the left-child count given the total is binomial with
success probability equal to the left share of exposure. Splits whose test
does not reject at level ``alpha`` are fixed at 0.5.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .survdata import Dataset

__all__ = ["PruneConfig", "split_pvalues", "prune", "prune_counts", "prune_all", "effective_bins"]


@dataclass(frozen=True)
class PruneConfig:
    alpha: float = 0.05
    levels_from_bottom: int = 0
    use_exposure_null: bool = True

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.levels_from_bottom < 0:
            raise ValueError("levels_from_bottom must be >= 0")

    def validate(self, M: int) -> None:
        if self.levels_from_bottom > M:
            raise ValueError(f"levels_from_bottom={self.levels_from_bottom} exceeds M={M}")


def _child_sums(values: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    halves = values.reshape(2**m, -1).sum(axis=1)
    return halves[0::2], halves[1::2]


def split_pvalues(events: np.ndarray, expo: np.ndarray, M: int, levels_from_bottom: int,
                  use_exposure_null: bool = True) -> np.ndarray:
    """p-value per flat split slot; NaN for untested splits.

    Degenerate splits (no failures, or no exposure on either side) get 1.
    """
    events = np.asarray(events, dtype=float)
    expo = np.asarray(expo, dtype=float)
    out = np.full(2**M - 1, np.nan)
    for m in range(M - levels_from_bottom + 1, M + 1):
        nL, nR = _child_sums(events, m)
        eL, eR = _child_sums(expo, m)
        for p in range(2 ** (m - 1)):
            n_tot = int(round(nL[p] + nR[p]))
            e_tot = eL[p] + eR[p]
            if e_tot <= 0:
                warnings.warn(f"split ({m},{p}) has no exposure in either child; pruned", stacklevel=2)
                pval = 1.0
            elif n_tot == 0:
                pval = 1.0
            else:
                p0 = eL[p] / e_tot if use_exposure_null else 0.5
                if p0 <= 0.0 or p0 >= 1.0:
                    # all exposure on one side: failures can only fall there
                    pval = 1.0
                else:
                    pval = stats.binomtest(int(round(nL[p])), n_tot, p0).pvalue
            out[2 ** (m - 1) - 1 + p] = pval
    return out


def prune_counts(events: np.ndarray, expo: np.ndarray, M: int, cfg: PruneConfig) -> np.ndarray:
    cfg.validate(M)
    pv = split_pvalues(events, expo, M, cfg.levels_from_bottom, cfg.use_exposure_null)
    return ~np.isnan(pv) & (pv >= cfg.alpha)


def prune(data: Dataset, cfg: PruneConfig, stratum: int = 0) -> np.ndarray:
    """Pruned mask (flat, breadth-first) for one stratum of ``data``."""
    events, expo = data.bin_counts(stratum)
    return prune_counts(events, expo, data.grid.M, cfg)


def prune_all(data: Dataset, cfg: PruneConfig | None) -> list[np.ndarray]:
    """One mask per stratum; ``cfg=None`` prunes nothing."""
    n_split = data.grid.J - 1
    if cfg is None or cfg.levels_from_bottom == 0:
        return [np.zeros(n_split, dtype=bool) for _ in range(data.stratum_count)]
    return [prune(data, cfg, s) for s in range(data.stratum_count)]


def effective_bins(mask: np.ndarray, M: int) -> list[tuple[int, int]]:
    """Fused bin spans as half-open 0-based leaf ranges ``(start, stop)``.

    A span is a maximal subtree whose splits are all pruned; its bins share
    one hazard level.
    """
    mask = np.asarray(mask, dtype=bool)
    J = 2**M

    def fully_pruned(m: int, q: int) -> bool:
        # node q at level m (0-based from root) owns splits of all deeper levels below it
        for depth in range(m + 1, M + 1):
            width = 2 ** (depth - m - 1)
            lo = 2 ** (depth - 1) - 1 + q * width
            if not mask[lo : lo + width].all():
                return False
        return True

    spans: list[tuple[int, int]] = []

    def walk(m: int, q: int):
        size = J >> m
        if m == M or fully_pruned(m, q):
            spans.append((q * size, (q + 1) * size))
        else:
            walk(m + 1, 2 * q)
            walk(m + 1, 2 * q + 1)

    walk(0, 0)
    return spans

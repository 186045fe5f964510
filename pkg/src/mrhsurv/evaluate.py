"""Posterior summaries, predictive probabilities, GOF, information criteria and
convergence diagnostics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .mrhtree import cumulative_at
from .sampler import Chain, ModelState, log_likelihood
from .survdata import Dataset

__all__ = [
    "GofUndefinedError",
    "central_interval",
    "log_hr_bins",
    "smooth_bins",
    "posterior_median_state",
    "predictive_failure_prob",
    "survival_probs",
    "gof",
    "InformationCriteria",
    "information_criteria",
    "information_criteria_mle",
    "GewekeResult",
    "geweke",
    "gelman_rubin",
    "FitSummary",
    "summarize",
    "summarize_mle",
    "survival_from_point",
]


class GofUndefinedError(ValueError):
    """No subject is evaluable at the requested time."""


def _pooled(chains: list[Chain] | Chain) -> list[Chain]:
    return [chains] if isinstance(chains, Chain) else list(chains)


def central_interval(samples: np.ndarray, level: float = 0.95, axis: int = 0):
    """Median and central ``level`` interval along ``axis``."""
    q = (1.0 - level) / 2.0
    lo, med, hi = np.quantile(samples, [q, 0.5, 1.0 - q], axis=axis)
    return med, lo, hi


def log_hr_bins(chains, pair: tuple[int, int] = (0, 1), level: float = 0.95):
    """Per-bin log hazard ratio of stratum ``pair[1]`` against ``pair[0]``.

    Returns ``(median, lower, upper)`` arrays of length ``J``.
    """
    d = np.concatenate([c.increments() for c in _pooled(chains)])
    base, other = pair
    alpha = np.log(d[:, other, :]) - np.log(d[:, base, :])
    return central_interval(alpha, level)


def smooth_bins(values: np.ndarray, window: int = 3) -> np.ndarray:
    """Centered moving average; the window shrinks at the ends."""
    values = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    half = window // 2
    out = np.empty_like(values)
    for j in range(values.size):
        lo, hi = max(0, j - half), min(values.size, j + half + 1)
        out[j] = values[lo:hi].mean()
    return out


def posterior_median_state(chains) -> ModelState:
    """Parameterwise posterior median of every stored quantity."""
    chains = _pooled(chains)
    draws = np.concatenate([c.draws for c in chains])
    med = np.median(draws, axis=0)
    return chains[0].layout.state_from_record(med, chains[0].beta_prior_sd)


def predictive_failure_prob(chains, x, stratum: int, t: float, grid) -> np.ndarray:
    """Per-draw probability of failure by ``t`` for covariates ``x``.

    ``1 - exp(-H_stratum(t) * exp(x'beta))`` evaluated on every pooled draw.
    """
    if t > grid.horizon:
        raise ValueError(f"t={t} is beyond the grid horizon {grid.horizon:g}")
    if t < 0:
        raise ValueError("t must be >= 0")
    out = []
    for c in _pooled(chains):
        d = c.increments()[:, stratum, :]
        cum = np.concatenate([np.zeros((d.shape[0], 1)), np.cumsum(d, axis=1)], axis=1)
        j = min(int(np.searchsorted(grid.boundaries, t, side="left")), grid.J)
        j = max(j, 1)
        frac = (t - grid.boundaries[j - 1]) / grid.widths[j - 1]
        Ht = cum[:, j - 1] + d[:, j - 1] * frac
        eta = c.beta @ np.asarray(x, dtype=float) if c.beta.shape[1] else np.zeros(len(c))
        out.append(-np.expm1(-Ht * np.exp(eta)))
    return np.concatenate(out) if out else np.zeros(0)


def survival_probs(state: ModelState, data: Dataset, t: float) -> np.ndarray:
    """``P(T_i > t)`` for every subject under a point-estimate MRH state."""
    out = np.empty(data.n)
    eta = data.X @ state.beta
    for ell, tree in enumerate(state.trees):
        mask = data.stratum_mask(ell)
        out[mask] = np.exp(-cumulative_at(t, tree, data.grid) * np.exp(eta[mask]))
    return out


def gof(t: float, surv_prob: np.ndarray, data: Dataset) -> float:
    """Mean absolute gap between survival-past-``t`` indicators and ``surv_prob``.

    ``surv_prob[i]`` is the model probability that subject ``i`` fails after
    ``t``. Subjects censored before ``t`` are dropped.
    """
    surv_prob = np.asarray(surv_prob, dtype=float)
    if surv_prob.shape != (data.n,):
        raise ValueError("need one probability per subject")
    keep = ~((~data.event) & (data.time < t))
    n_t = int(keep.sum())
    if n_t == 0:
        raise GofUndefinedError(f"every subject is censored before t={t}")
    alive = (data.time > t).astype(float)
    return float(np.abs(alive[keep] - surv_prob[keep]).mean())


@dataclass
class InformationCriteria:
    neg2loglik: float
    n_params: int
    p_d: float | None
    dic: float | None
    bic: float
    aic: float

    def to_dict(self) -> dict:
        return asdict(self)


def free_parameter_count(chains) -> int:
    """Unpruned splits and H per stratum, plus shared covariate effects."""
    layout = _pooled(chains)[0].layout
    return int(layout.L + (~layout.pruned).sum() + len(layout.covariate_names))


def information_criteria(chains, data: Dataset) -> InformationCriteria:
    """DIC/BIC/AIC for MRH chains, plugging in the parameterwise posterior median."""
    chains = _pooled(chains)
    traces = [c.loglik for c in chains]
    if not traces or any(t is None for t in traces) or sum(len(t) for t in traces) == 0:
        raise ValueError("information criteria need a non-empty log-likelihood trace")
    ll = np.concatenate(traces)
    neg2 = -2.0 * log_likelihood(posterior_median_state(chains), data)
    dbar = float(np.mean(-2.0 * ll))
    p_d = dbar - neg2
    p = free_parameter_count(chains)
    return InformationCriteria(neg2, p, p_d, dbar + p_d, neg2 + p * math.log(data.n), neg2 + 2 * p)


def information_criteria_mle(loglik: float, n_params: int, n: int) -> InformationCriteria:
    neg2 = -2.0 * loglik
    return InformationCriteria(neg2, n_params, None, None, neg2 + n_params * math.log(n), neg2 + 2 * n_params)


# ---------------------------------------------------------------------------
# diagnostics


def _spectral_density_at_zero(x: np.ndarray) -> float:
    """Bartlett lag-window estimate of the spectral density at frequency 0."""
    n = x.size
    xc = x - x.mean()
    max_lag = int(np.floor(np.sqrt(n)))
    f = np.fft.rfft(xc, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[: max_lag + 1] / n
    weights = 1.0 - np.arange(1, max_lag + 1) / (max_lag + 1)
    return float(acov[0] + 2.0 * np.sum(weights * acov[1:]))


@dataclass
class GewekeResult:
    z: np.ndarray
    constant: np.ndarray


def geweke(chain, first: float = 0.1, last: float = 0.5) -> GewekeResult:
    """Geweke z-scores comparing the first and last fractions of a chain.

    ``chain`` is a :class:`Chain` or an array of shape ``(n,)`` or ``(n, p)``.
    Constant parameters get ``z = 0`` and are flagged.
    """
    x = chain.draws if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 100:
        raise ValueError("geweke needs at least 100 draws")
    if not (0 < first < 1 and 0 < last < 1 and first + last <= 1):
        raise ValueError("invalid window fractions")
    na, nb = int(first * n), int(last * n)
    z = np.zeros(x.shape[1])
    const = np.zeros(x.shape[1], dtype=bool)
    for i in range(x.shape[1]):
        a, b = x[:na, i], x[n - nb:, i]
        if np.ptp(x[:, i]) == 0:
            const[i] = True
            continue
        var = _spectral_density_at_zero(a) / na + _spectral_density_at_zero(b) / nb
        if var <= 0:
            const[i] = True
            continue
        z[i] = (a.mean() - b.mean()) / math.sqrt(var)
    return GewekeResult(z, const)


def gelman_rubin(chains) -> np.ndarray:
    """Potential scale reduction factor per parameter.

    ``chains`` is a list of :class:`Chain` or an array ``(m, n)`` / ``(m, n, p)``.
    """
    if isinstance(chains, np.ndarray):
        x = chains
    else:
        chains = list(chains)
        x = np.stack([c.draws if isinstance(c, Chain) else np.asarray(c, dtype=float) for c in chains])
    if x.ndim == 2:
        x = x[:, :, None]
    m, n = x.shape[:2]
    if m < 2:
        raise ValueError("gelman_rubin needs at least 2 chains; use geweke for a single chain")
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    B = n * means.var(axis=0, ddof=1)
    V = (n - 1) / n * W + B / n
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(V / W)
    rhat = np.where((W == 0) & (B == 0), 1.0, rhat)
    return rhat


# ---------------------------------------------------------------------------
# summaries


def _table(med, lo, hi) -> list[dict]:
    return [{"median": float(a), "lower": float(b), "upper": float(c)} for a, b, c in zip(med, lo, hi)]


@dataclass
class FitSummary:
    model: str
    grid: dict
    hazard: list[list[dict]]
    log_hr: dict[str, list[dict]]
    beta: dict[str, dict]
    ic: dict
    diagnostics: dict = field(default_factory=dict)
    point: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hazard_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stratum", "bin", "start", "end", "increment_median", "increment_lower",
                    "increment_upper", "rate_median"])
        b = self.grid["boundaries"]
        for ell, rows in enumerate(self.hazard):
            for j, r in enumerate(rows):
                w.writerow([ell, j + 1, repr(b[j]), repr(b[j + 1]), repr(r["median"]), repr(r["lower"]),
                            repr(r["upper"]), repr(r["median"] / (b[j + 1] - b[j]))])
        return buf.getvalue()

    def log_hr_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pair", "bin", "median", "lower", "upper"])
        for pair, rows in self.log_hr.items():
            for j, r in enumerate(rows):
                w.writerow([pair, j + 1, repr(r["median"]), repr(r["lower"]), repr(r["upper"])])
        return buf.getvalue()

    def beta_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["covariate", "median", "lower", "upper", "hazard_ratio"])
        for name, r in self.beta.items():
            w.writerow([name, repr(r["median"]), repr(r["lower"]), repr(r["upper"]), repr(math.exp(r["median"]))])
        return buf.getvalue()

    def ic_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = ["neg2loglik", "n_params", "p_d", "dic", "bic", "aic"]
        w.writerow(["model", *keys])
        w.writerow([self.model, *("" if self.ic.get(k) is None else repr(self.ic[k]) for k in keys)])
        return buf.getvalue()


def summarize(chains: list[Chain], data: Dataset, model: str = "mrh", level: float = 0.95,
              smooth_window: int | None = None) -> FitSummary:
    """Collect hazard, log-HR, covariate, IC and diagnostic tables for MRH chains."""
    chains = _pooled(chains)
    layout = chains[0].layout
    d = np.concatenate([c.increments() for c in chains])
    hazard = [_table(*central_interval(d[:, ell, :], level)) for ell in range(layout.L)]
    log_hr = {}
    for ell in range(layout.L - 1):
        med, lo, hi = log_hr_bins(chains, (ell, ell + 1), level)
        rows = _table(med, lo, hi)
        if smooth_window:
            for r, s in zip(rows, smooth_bins(med, smooth_window)):
                r["smoothed"] = float(s)
        log_hr[f"{ell + 1}:{ell}"] = rows
    beta_draws = np.concatenate([c.beta for c in chains])
    beta = {}
    for i, name in enumerate(layout.covariate_names):
        med, lo, hi = central_interval(beta_draws[:, i], level)
        beta[name] = {"median": float(med), "lower": float(lo), "upper": float(hi)}
    ic = information_criteria(chains, data).to_dict()
    point = posterior_median_state(chains)
    diagnostics = diagnostics_block(chains)
    return FitSummary(
        model=model,
        grid=data.grid.to_dict(),
        hazard=hazard,
        log_hr=log_hr,
        beta=beta,
        ic=ic,
        diagnostics=diagnostics,
        point={
            "trees": [t.to_record() for t in point.trees],
            "beta": [float(b) for b in point.beta],
            "covariate_names": list(layout.covariate_names),
        },
    )


def diagnostics_block(chains: list[Chain]) -> dict:
    cols = chains[0].columns
    moving = [i for i in range(len(cols)) if any(np.ptp(c.draws[:, i]) > 0 for c in chains)]
    out: dict = {"geweke": {}, "rhat": {}}
    if len(chains[0]) >= 100:
        for ci, c in enumerate(chains):
            g = geweke(c.draws[:, moving])
            out["geweke"][str(ci)] = {cols[i]: float(z) for i, z in zip(moving, g.z)}
    if len(chains) >= 2 and len(chains[0]) >= 2:
        r = gelman_rubin([c.draws[:, moving] for c in chains])
        out["rhat"] = {cols[i]: float(v) for i, v in zip(moving, r)}
        out["max_rhat"] = float(np.max(r)) if r.size else 1.0
    return out


def _grid_increments(cum_fn, grid, L: int) -> np.ndarray:
    b = grid.boundaries
    return np.array([np.diff(cum_fn(b, s)) for s in range(L)])


def summarize_mle(fit, data: Dataset, model: str, level: float = 0.95) -> FitSummary:
    """FitSummary for a Weibull or piecewise-exponential MLE.

    Hazard and log-HR rows are point estimates on the data grid (interval
    bounds equal the estimate); covariate rows carry Wald intervals.
    """
    from scipy import stats

    from .classic import PeFit, WeibullNphFit

    L = data.stratum_count
    d = _grid_increments(fit.cumulative, data.grid, L)
    with np.errstate(divide="ignore"):
        hazard = [_table(r, r, r) for r in d]
        log_hr = {f"{ell + 1}:{ell}": _table(*(np.log(d[ell + 1] / d[ell]),) * 3) for ell in range(L - 1)}
    if isinstance(fit, WeibullNphFit):
        se = np.sqrt(np.clip(np.diag(fit.cov)[2 * L:], 0, None))
        point = {"kappa": fit.kappa.tolist(), "lambda": fit.lam.tolist(), "beta": fit.beta.tolist()}
    elif isinstance(fit, PeFit):
        se = np.sqrt(np.clip(np.diag(fit.beta_cov), 0, None)) if fit.beta.size else np.zeros(0)
        point = {"boundaries": [b.tolist() for b in fit.boundaries], "rates": [r.tolist() for r in fit.rates],
                 "beta": fit.beta.tolist(), "j": fit.j, "strategy": fit.strategy}
    else:
        raise TypeError(f"unsupported fit type {type(fit).__name__}")
    q = stats.norm.ppf(0.5 + level / 2)
    beta = {name: {"median": float(b), "lower": float(b - q * s), "upper": float(b + q * s)}
            for name, b, s in zip(data.covariate_names, fit.beta, se)}
    ic = information_criteria_mle(fit.loglik, fit.n_params, data.n).to_dict()
    point["covariate_names"] = list(data.covariate_names)
    return FitSummary(model=model, grid=data.grid.to_dict(), hazard=hazard, log_hr=log_hr, beta=beta, ic=ic,
                      point=point)


def survival_from_point(model: str, point: dict, data: Dataset, t: float) -> np.ndarray:
    """Per-subject ``P(T > t)`` rebuilt from a serialized point estimate."""
    from .classic import PeFit, WeibullNphFit
    from .mrhtree import MrhTree

    beta = np.asarray(point["beta"], dtype=float)
    if model.startswith("weibull"):
        fit = WeibullNphFit(np.asarray(point["kappa"]), np.asarray(point["lambda"]), beta, 0.0, np.zeros((0, 0)))
        return fit.survival(t, data)
    if model.startswith("pe"):
        fit = PeFit("", 0, [np.asarray(b) for b in point["boundaries"]], [np.asarray(r) for r in point["rates"]],
                    beta, 0.0, 0.0, [], [])
        return fit.survival(t, data)
    trees = [MrhTree.from_record(r) for r in point["trees"]]
    return survival_probs(ModelState(trees, beta), data, t)

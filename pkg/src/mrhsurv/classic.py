"""Frequentist comparison models.

* Non-proportional Weibull: stratum-specific shape and rate, shared covariate
  effects, fit by maximum likelihood on log-transformed positive parameters.
* Piecewise exponential with per-stratum bins (equal-width or quantile),
  zero-failure bin merging and AIC selection of the bin count.

Both use the data truncated at the grid horizon (later observations are
treated as censored there), matching what the MRH likelihood sees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .survdata import Dataset

__all__ = [
    "FitError",
    "WeibullFitError",
    "WeibullNphFit",
    "fit_weibull_nph",
    "weibull_loglik",
    "weibull_log_hr",
    "PeFit",
    "fit_pe",
    "fit_pe_bins",
    "pe_bins",
    "merge_zero_bins",
    "pe_log_hr",
]


class FitError(RuntimeError):
    """A model could not be fit to the data."""


class WeibullFitError(FitError):
    def __init__(self, message: str, best: "WeibullNphFit | None" = None):
        super().__init__(message)
        self.best = best


def _truncated(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    return np.minimum(data.time, data.grid.horizon), data.event_in_grid


# ---------------------------------------------------------------------------
# Weibull


@dataclass
class WeibullNphFit:
    """Hazard ``h_l(t) = kappa_l lam_l (lam_l t)**(kappa_l - 1) exp(x'beta)``."""

    kappa: np.ndarray
    lam: np.ndarray
    beta: np.ndarray
    loglik: float
    cov: np.ndarray
    covariate_names: tuple[str, ...] = ()
    grad_norm: float = 0.0
    n_iter: int = 0

    @property
    def n_params(self) -> int:
        return 2 * self.kappa.size + self.beta.size

    def hazard(self, t, stratum: int):
        k, lam = self.kappa[stratum], self.lam[stratum]
        return k * lam * (lam * np.asarray(t, dtype=float)) ** (k - 1)

    def cumulative(self, t, stratum: int):
        return (self.lam[stratum] * np.asarray(t, dtype=float)) ** self.kappa[stratum]

    def survival(self, t: float, data: Dataset) -> np.ndarray:
        """``P(T_i > t)`` for every subject of ``data``."""
        Ht = np.array([self.cumulative(t, s) for s in range(self.kappa.size)])[data.stratum]
        return np.exp(-Ht * np.exp(data.X @ self.beta))

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa.tolist(),
            "lambda": self.lam.tolist(),
            "beta": self.beta.tolist(),
            "loglik": self.loglik,
            "cov": self.cov.tolist(),
            "covariate_names": list(self.covariate_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeibullNphFit":
        return cls(np.array(d["kappa"]), np.array(d["lambda"]), np.array(d["beta"]), d["loglik"],
                   np.array(d["cov"]), tuple(d.get("covariate_names", ())))


def _unpack(theta: np.ndarray, L: int):
    return np.exp(theta[:L]), np.exp(theta[L : 2 * L]), theta[2 * L :]


def _weibull_terms(theta, t, delta, strat, X, L):
    kappa, lam, beta = _unpack(theta, L)
    k_i, lam_i = kappa[strat], lam[strat]
    eta = X @ beta
    pos = t > 0
    log_lt = np.zeros_like(t)
    log_lt[pos] = np.log(lam_i[pos] * t[pos])
    z = np.where(pos, np.exp(k_i * log_lt + eta), 0.0)
    return kappa, lam, k_i, eta, log_lt, z


def weibull_loglik(theta: np.ndarray, data: Dataset) -> float:
    """Log-likelihood at ``theta = (log kappa, log lam, beta)``."""
    t, delta = _truncated(data)
    return _weibull_ll_grad(theta, t, delta, data.stratum, data.X, data.stratum_count)[0]


def _weibull_ll_grad(theta, t, delta, strat, X, L):
    kappa, lam, k_i, eta, log_lt, z = _weibull_terms(theta, t, delta, strat, X, L)
    d = delta.astype(float)
    # log h = log kappa + log lam + (kappa - 1) log(lam t) + eta
    ll = np.sum(d * (np.log(k_i) + np.log(lam[strat]) + (k_i - 1) * log_lt + eta)) - z.sum()
    g_u = d * (1.0 + k_i * log_lt) - z * k_i * log_lt
    g_v = k_i * (d - z)
    grad = np.concatenate([
        np.bincount(strat, g_u, minlength=L),
        np.bincount(strat, g_v, minlength=L),
        X.T @ (d - z),
    ])
    return float(ll), grad


def _num_hessian(grad_fn, theta: np.ndarray) -> np.ndarray:
    """Central differences of an analytic gradient, symmetrized."""
    p = theta.size
    H = np.empty((p, p))
    for i in range(p):
        h = 1e-5 * max(1.0, abs(theta[i]))
        e = np.zeros(p)
        e[i] = h
        H[:, i] = (grad_fn(theta + e) - grad_fn(theta - e)) / (2 * h)
    return 0.5 * (H + H.T)


def fit_weibull_nph(data: Dataset, max_iter: int = 500, gtol: float = 1e-6) -> WeibullNphFit:
    """Maximum-likelihood non-proportional Weibull fit.

    BFGS from five deterministic starts around the stratum-wise exponential
    fit, then Newton polishing of the best optimum. The covariance is the
    inverse of the numerical Hessian on the natural ``(kappa, lam, beta)``
    scale.
    """
    t, delta = _truncated(data)
    L, z = data.stratum_count, data.z
    strat, X = data.stratum, data.X
    for s in range(L):
        if delta[data.stratum_mask(s)].sum() < 2:
            raise FitError(f"stratum {s} has fewer than 2 events; Weibull fit needs at least 2")
    if np.any((t <= 0) & delta):
        raise FitError("an event at time 0 makes the Weibull likelihood unbounded")

    def nll(theta):
        # line searches can probe far-out points where the hazard overflows
        with np.errstate(over="ignore", invalid="ignore"):
            ll, g = _weibull_ll_grad(theta, t, delta, strat, X, L)
        if not np.isfinite(ll) or not np.all(np.isfinite(g)):
            return np.inf, np.zeros_like(theta)
        return -ll, -g

    def grad(theta):
        return _weibull_ll_grad(theta, t, delta, strat, X, L)[1]

    rate0 = np.array([delta[strat == s].sum() / t[strat == s].sum() for s in range(L)])
    starts = [(1.0, 1.0), (0.5, 1.0), (2.0, 1.0), (1.0, 0.5), (1.0, 2.0)]
    best = None
    total_iter = 0
    for k_fac, l_fac in starts:
        theta0 = np.concatenate([np.full(L, math.log(k_fac)), np.log(rate0 * l_fac), np.zeros(z)])
        res = optimize.minimize(nll, theta0, jac=True, method="BFGS",
                                options={"maxiter": max_iter, "gtol": 1e-8})
        total_iter += res.nit
        if np.all(np.isfinite(res.x)) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise WeibullFitError("every optimizer start produced non-finite parameters")
    theta = best.x
    f = best.fun
    for _ in range(50):
        g = grad(theta)
        if np.linalg.norm(g) < gtol * 1e-2:
            break
        H = _num_hessian(grad, theta)
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            break
        s = 1.0
        while s > 1e-8:
            cand = theta + s * step
            fc = nll(cand)[0]
            if np.isfinite(fc) and fc <= f + 1e-12:
                theta, f = cand, fc
                break
            s /= 2
        else:
            break

    g = grad(theta)
    kappa, lam, beta = _unpack(theta, L)
    # covariance on the natural scale via the log-parameter Jacobian
    H_log = _num_hessian(grad, theta)
    jac = np.concatenate([kappa, lam, np.ones(z)])
    try:
        cov_log = np.linalg.inv(-H_log)
    except np.linalg.LinAlgError:
        cov_log = np.full_like(H_log, np.nan)
    cov = jac[:, None] * cov_log * jac[None, :]
    cov = 0.5 * (cov + cov.T)
    fit = WeibullNphFit(kappa, lam, beta.copy(), -float(f), cov, data.covariate_names,
                        float(np.linalg.norm(g)), total_iter)
    if not np.isfinite(fit.grad_norm) or fit.grad_norm >= gtol:
        raise WeibullFitError(
            f"Weibull fit did not converge: gradient norm {fit.grad_norm:.3g} after {total_iter} iterations", fit)
    return fit


def weibull_log_hr(fit: WeibullNphFit, t, pair: tuple[int, int] = (0, 1)):
    """``log(h_1(t) / h_0(t))`` for the baseline hazards of ``pair``."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("log hazard ratio requires t > 0")
    s0, s1 = pair
    k0, l0, k1, l1 = fit.kappa[s0], fit.lam[s0], fit.kappa[s1], fit.lam[s1]
    out = (math.log(k1) + k1 * math.log(l1) + (k1 - 1) * np.log(arr)) - (
        math.log(k0) + k0 * math.log(l0) + (k0 - 1) * np.log(arr))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Piecewise exponential


def _bin_of(t: np.ndarray, b: np.ndarray) -> np.ndarray:
    """0-based bin of ``t`` in left-open bins ``(b[j], b[j+1]]``; 0 maps to bin 0."""
    return np.clip(np.searchsorted(b, t, side="left"), 1, b.size - 1) - 1


def _pe_exposure(t: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.clip(t[:, None] - b[None, :-1], 0.0, np.diff(b)[None, :])


def pe_bins(times: np.ndarray, horizon: float, j: int, strategy: str) -> np.ndarray:
    """Candidate boundaries for ``j`` bins on ``[0, horizon]``.

    Quantile bins use empirical quantiles of all observed times (events and
    censorings). Tied quantiles collapse, so fewer than ``j`` bins can result.
    """
    if strategy == "equal":
        return np.linspace(0.0, horizon, j + 1)
    if strategy == "quantile":
        q = np.quantile(times, np.linspace(0.0, 1.0, j + 1)[1:-1])
        b = np.unique(np.concatenate([[0.0], q[(q > 0) & (q < horizon)], [horizon]]))
        return b
    raise ValueError(f"unknown binning strategy {strategy!r}")


def merge_zero_bins(b: np.ndarray, event_times: np.ndarray) -> np.ndarray:
    """Merge zero-failure bins into their left neighbour (the first bin merges right)."""
    b = np.asarray(b, dtype=float).copy()
    while b.size > 2:
        counts = np.bincount(_bin_of(event_times, b), minlength=b.size - 1)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        j = empty[0]
        # drop the boundary shared with the neighbour that absorbs bin j
        b = np.delete(b, 1 if j == 0 else j)
    return b


@dataclass
class PeFit:
    strategy: str
    j: int
    boundaries: list[np.ndarray]
    rates: list[np.ndarray]
    beta: np.ndarray
    loglik: float
    aic: float
    fisher_info: list[np.ndarray]
    events: list[np.ndarray]
    beta_cov: np.ndarray = None
    covariate_names: tuple[str, ...] = ()
    candidates: dict[int, float] = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return sum(r.size for r in self.rates) + self.beta.size

    def hazard_at(self, t, stratum: int):
        b = self.boundaries[stratum]
        arr = np.asarray(t, dtype=float)
        if np.any(arr < 0) or np.any(arr > b[-1]):
            raise ValueError(f"t must lie in [0, {b[-1]:g}]")
        out = self.rates[stratum][_bin_of(np.atleast_1d(arr), b)]
        return float(out[0]) if arr.ndim == 0 else out

    def cumulative(self, t, stratum: int):
        b = self.boundaries[stratum]
        arr = np.minimum(np.atleast_1d(np.asarray(t, dtype=float)), b[-1])
        out = _pe_exposure(arr, b) @ self.rates[stratum]
        return float(out[0]) if np.ndim(t) == 0 else out

    def survival(self, t: float, data: Dataset) -> np.ndarray:
        Ht = np.array([self.cumulative(t, s) for s in range(len(self.rates))])[data.stratum]
        return np.exp(-Ht * np.exp(data.X @ self.beta))

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "j": self.j,
            "boundaries": [b.tolist() for b in self.boundaries],
            "rates": [r.tolist() for r in self.rates],
            "beta": self.beta.tolist(),
            "loglik": self.loglik,
            "aic": self.aic,
            "covariate_names": list(self.covariate_names),
            "candidates": {str(k): v for k, v in self.candidates.items()},
        }


def fit_pe_bins(data: Dataset, boundaries: list[np.ndarray], tol: float = 1e-8, max_iter: int = 1000):
    """Fit rates and ``beta`` for fixed per-stratum bins.

    Alternates the closed-form rate profile with a Newton step on ``beta``
    until the log-likelihood changes by less than ``tol``.
    Returns ``(rates, beta, loglik, events, beta_cov)``.
    """
    t, delta = _truncated(data)
    L, z = data.stratum_count, data.z
    X = data.X
    idx = [np.flatnonzero(data.stratum_mask(s)) for s in range(L)]
    omega = [_pe_exposure(t[i], boundaries[s]) for s, i in enumerate(idx)]
    D = []
    for s, i in enumerate(idx):
        ev = delta[i]
        D.append(np.bincount(_bin_of(t[i][ev], boundaries[s]), minlength=boundaries[s].size - 1).astype(float))
        if D[-1].sum() == 0:
            raise FitError(f"stratum {s} has no events; piecewise-exponential fit is undefined")
        if np.any(D[-1] == 0):
            raise FitError(f"stratum {s} has a zero-failure bin; merge bins first")
    d = delta.astype(float)

    def rates_for(beta):
        eb = np.exp(X @ beta)
        return [D[s] / (eb[i] @ omega[s]) for s, i in enumerate(idx)], eb

    def cum_each(rates):
        out = np.empty(data.n)
        for s, i in enumerate(idx):
            out[i] = omega[s] @ rates[s]
        return out

    def loglik(rates, beta):
        eta = X @ beta
        return float(sum(D[s] @ np.log(rates[s]) for s in range(L)) + d @ eta - np.exp(eta) @ cum_each(rates))

    beta = np.zeros(z)
    rates, _ = rates_for(beta)
    ll = loglik(rates, beta)
    for _ in range(max_iter):
        if z:
            lam_i = cum_each(rates)
            mu = np.exp(X @ beta) * lam_i
            g = X.T @ (d - mu)
            H = (X * mu[:, None]).T @ X
            step = np.linalg.solve(H, g)
            s = 1.0
            while s > 1e-10:
                cand = beta + s * step
                if loglik(rates, cand) >= loglik(rates, beta) - 1e-12:
                    break
                s /= 2
            beta = beta + s * step
        rates, _ = rates_for(beta)
        new = loglik(rates, beta)
        if abs(new - ll) < tol:
            ll = new
            break
        ll = new
    else:
        raise FitError(f"piecewise-exponential fit did not converge in {max_iter} iterations")
    beta_cov = _pe_beta_cov(X, beta, rates, omega, idx, D)
    return rates, beta, ll, D, beta_cov


def _pe_beta_cov(X, beta, rates, omega, idx, D) -> np.ndarray:
    """Covariance of ``beta`` from the full observed information (rates profiled)."""
    z = X.shape[1]
    if z == 0:
        return np.zeros((0, 0))
    eb = np.exp(X @ beta)
    blocks_r, cross, Ibb = [], [], np.zeros((z, z))
    for s, i in enumerate(idx):
        w = omega[s] * eb[i, None]
        blocks_r.append(D[s] / rates[s] ** 2)
        cross.append(X[i].T @ w)
        mu = w @ rates[s]
        Ibb += (X[i] * mu[:, None]).T @ X[i]
    # Schur complement of the diagonal rate block
    schur = Ibb - sum(c @ np.diag(1.0 / r) @ c.T for c, r in zip(cross, blocks_r))
    try:
        return np.linalg.inv(schur)
    except np.linalg.LinAlgError:
        return np.full((z, z), np.nan)


def fit_pe(data: Dataset, strategy: str = "equal", j_max: int = 20, j_min: int = 2) -> PeFit:
    """AIC-selected piecewise-exponential fit over candidate bin counts ``j_min..j_max``.

    Ties go to the smallest ``j``.
    """
    if j_min < 1 or j_max < j_min:
        raise ValueError("need 1 <= j_min <= j_max")
    if strategy not in ("equal", "quantile"):
        raise ValueError(f"unknown binning strategy {strategy!r}")
    t, delta = _truncated(data)
    L = data.stratum_count
    for s in range(L):
        if not delta[data.stratum_mask(s)].any():
            raise FitError(f"stratum {s} has no events; piecewise-exponential fit is undefined")
    horizon = data.grid.horizon
    best = None
    candidates = {}
    for j in range(j_min, j_max + 1):
        bounds = []
        for s in range(L):
            m = data.stratum_mask(s)
            b = pe_bins(t[m], horizon, j, strategy)
            bounds.append(merge_zero_bins(b, t[m][delta[m]]))
        rates, beta, ll, D, beta_cov = fit_pe_bins(data, bounds)
        n_par = sum(r.size for r in rates) + data.z
        aic = -2.0 * ll + 2.0 * n_par
        candidates[j] = aic
        if best is None or aic < best.aic:
            best = PeFit(strategy, j, bounds, rates, beta, ll, aic,
                         [Ds / r**2 for Ds, r in zip(D, rates)], D, beta_cov, data.covariate_names)
    best.candidates = candidates
    return best


def pe_log_hr(fit: PeFit, t, pair: tuple[int, int] = (0, 1)):
    """``log(lambda_1(t) / lambda_0(t))`` using each stratum's own bins."""
    s0, s1 = pair
    return np.log(fit.hazard_at(t, s1)) - np.log(fit.hazard_at(t, s0))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrhsurv.classic import (
    FitError,
    PeFit,
    WeibullFitError,
    WeibullNphFit,
    fit_pe,
    fit_pe_bins,
    fit_weibull_nph,
    merge_zero_bins,
    pe_bins,
    pe_log_hr,
    weibull_log_hr,
)
from mrhsurv.simgen import CovariateSpec, HazardSpec, SimConfig, simulate
from mrhsurv.survdata import Dataset, TimeGrid


def weibull_loglik_oracle(theta, t, d, s, X, L):
    """Independent log-likelihood in (log kappa, log lam, beta); complex-step safe."""
    kappa = np.exp(theta[:L])[s]
    lam = np.exp(theta[L : 2 * L])[s]
    eta = X @ theta[2 * L :] if X.shape[1] else np.zeros(t.size)
    log_h = np.log(kappa) + np.log(lam) + (kappa - 1) * np.log(lam * t) + eta
    return np.sum(d * log_h) - np.sum((lam * t) ** kappa * np.exp(eta))


def complex_step_grad(f, x, h=1e-30):
    g = np.empty(x.size)
    for i in range(x.size):
        xc = x.astype(complex)
        xc[i] += 1j * h
        g[i] = f(xc).imag / h
    return g


def pe_loglik_oracle(rates, beta, bounds, data):
    """Direct sum of log h(T_i) event terms minus cumulative hazards."""
    t = np.minimum(data.time, data.grid.horizon)
    d = data.event_in_grid
    eta = data.X @ beta
    total = 0.0
    for i in range(data.n):
        b, r = bounds[data.stratum[i]], rates[data.stratum[i]]
        cum = sum(r[j] * max(0.0, min(t[i], b[j + 1]) - b[j]) for j in range(r.size))
        if d[i]:
            j = max(1, int(np.searchsorted(b, t[i], side="left"))) - 1
            total += math.log(r[j]) + eta[i]
        total -= math.exp(eta[i]) * cum
    return total


def _two_strata(specs, n, beta=(), covs=(), seed=0, c_admin=math.inf, c_rate=0.0, M=3, horizon=None):
    cfg = SimConfig(n=n, beta=list(beta), covariates=list(covs), seed=seed, c_admin=c_admin, c_rate=c_rate)
    return simulate(specs, cfg, M=M, horizon=horizon)


class TestWeibull:
    def test_exponential_recovery(self):
        d = _two_strata([HazardSpec.constant(0.5)], 5000, seed=1)
        fit = fit_weibull_nph(d)
        assert fit.kappa[0] == pytest.approx(1.0, abs=0.1)
        assert fit.lam[0] == pytest.approx(0.5, abs=0.05)

    def test_gradient_vanishes(self):
        d = _two_strata([HazardSpec.weibull(1.4, 0.3), HazardSpec.weibull(0.8, 0.5)], [2500, 2500],
                        beta=[0.5, -0.3], covs=[CovariateSpec("a"), CovariateSpec("b", "normal")],
                        seed=2, c_rate=0.1)
        fit = fit_weibull_nph(d)
        theta = np.concatenate([np.log(fit.kappa), np.log(fit.lam), fit.beta])
        t = np.minimum(d.time, d.grid.horizon)
        f = lambda th: weibull_loglik_oracle(th, t, d.event_in_grid, d.stratum, d.X, 2)  # noqa: E731
        g = complex_step_grad(f, theta)
        assert np.linalg.norm(g) < 1e-6
        assert f(theta) == pytest.approx(fit.loglik, rel=1e-12)

    def test_identical_strata_null_effect(self):
        d = _two_strata([HazardSpec.weibull(1.3, 0.4)] * 2, 3000, seed=3, c_rate=0.1)
        fit = fit_weibull_nph(d)
        ts = np.linspace(0.05, d.grid.horizon, 50)
        assert np.max(np.abs(weibull_log_hr(fit, ts))) < 0.1

    def test_grid_search_oracle(self):
        d = _two_strata([HazardSpec.weibull(1.6, 0.7)], 40, seed=4)
        fit = fit_weibull_nph(d)
        t = np.minimum(d.time, d.grid.horizon)
        ks = np.linspace(0.5, 4.0, 701)
        ls = np.linspace(0.1, 2.0, 761)
        K, Lm = np.meshgrid(ks, ls, indexing="ij")
        ll = np.zeros_like(K)
        for ti, di in zip(t, d.event_in_grid):
            ll += di * (np.log(K) + np.log(Lm) + (K - 1) * np.log(Lm * ti)) - (Lm * ti) ** K
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        assert fit.kappa[0] == pytest.approx(ks[i], abs=ks[1] - ks[0])
        assert fit.lam[0] == pytest.approx(ls[j], abs=ls[1] - ls[0])
        assert fit.loglik >= ll.max() - 1e-9

    def test_nested_exponential(self):
        d = _two_strata([HazardSpec.weibull(1.2, 0.5), HazardSpec.constant(0.3)], 500,
                        beta=[0.4], covs=[CovariateSpec("x")], seed=5, c_admin=6.0)
        wb = fit_weibull_nph(d)
        expo = fit_pe(d, "equal", j_max=1, j_min=1)
        assert wb.loglik >= expo.loglik - 1e-9

    def test_covariance_psd(self):
        d = _two_strata([HazardSpec.weibull(1.2, 0.5)] * 2, 800, beta=[0.4], covs=[CovariateSpec("x")], seed=6)
        fit = fit_weibull_nph(d)
        np.testing.assert_allclose(fit.cov, fit.cov.T)
        assert np.linalg.eigvalsh(fit.cov).min() > 0

    def test_needs_events(self):
        d = Dataset([1.0, 2.0, 3.0], [1, 0, 0], [0, 0, 0], np.zeros((3, 0)), 1, (), TimeGrid.equal(1, 3.0))
        with pytest.raises(FitError):
            fit_weibull_nph(d)

    def test_nonconvergence_carries_best(self):
        d = _two_strata([HazardSpec.weibull(1.2, 0.5)], 300, seed=7)
        with pytest.raises(WeibullFitError) as exc:
            fit_weibull_nph(d, gtol=0.0)
        assert exc.value.best is not None and exc.value.best.kappa[0] > 0


class TestWeibullLogHr:
    def _fit(self, k0, l0, k1, l1):
        return WeibullNphFit(np.array([k0, k1]), np.array([l0, l1]), np.zeros(0), 0.0, np.zeros((4, 4)))

    def test_proportional(self):
        f = self._fit(1.7, 0.3, 1.7, 0.9)
        np.testing.assert_allclose(weibull_log_hr(f, np.array([0.1, 1.0, 7.0])), 1.7 * math.log(3.0), rtol=1e-12)

    def test_substitution(self):
        assert weibull_log_hr(self._fit(1.0, 1.0, 2.0, 1.0), 1.0) == pytest.approx(math.log(2.0), rel=1e-15)

    def test_domain(self):
        with pytest.raises(ValueError):
            weibull_log_hr(self._fit(1, 1, 1, 1), 0.0)

    @settings(max_examples=200)
    @given(st.floats(0.2, 5), st.floats(0.05, 5), st.floats(0.2, 5), st.floats(0.05, 5), st.floats(0.01, 20))
    def test_definitional(self, k0, l0, k1, l1, t):
        f = self._fit(k0, l0, k1, l1)
        h = lambda k, lam: k * lam * (lam * t) ** (k - 1)  # noqa: E731
        ref = math.log(h(k1, l1) / h(k0, l0))
        assert weibull_log_hr(f, t) == pytest.approx(ref, rel=1e-12, abs=1e-12)


class TestMerging:
    @settings(max_examples=200)
    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=40), st.integers(1, 12))
    def test_properties(self, events, j):
        ev = np.array(events)
        b = np.linspace(0, 10.0, j + 1)
        merged = merge_zero_bins(b, ev)
        assert merged.size <= b.size
        assert merged[0] == 0.0 and merged[-1] == 10.0
        assert set(merged) <= set(b)
        counts = np.histogram(ev, bins=merged)[0] if merged.size > 2 else [ev.size]
        # histogram is right-open; recount with left-open bins
        idx = np.clip(np.searchsorted(merged, ev, side="left"), 1, merged.size - 1) - 1
        counts = np.bincount(idx, minlength=merged.size - 1)
        assert counts.sum() == ev.size
        assert np.all(counts >= 1)

    def test_leftmost_merges_right(self):
        b = np.array([0.0, 1, 2, 3])
        np.testing.assert_array_equal(merge_zero_bins(b, np.array([1.5, 2.5])), [0, 2, 3])

    def test_inner_merges_left(self):
        b = np.array([0.0, 1, 2, 3])
        np.testing.assert_array_equal(merge_zero_bins(b, np.array([0.5, 2.5])), [0, 2, 3])
        np.testing.assert_array_equal(merge_zero_bins(b, np.array([0.5, 1.5])), [0, 1, 3])

    def test_quantile_bins(self):
        t = np.arange(1, 101, dtype=float)
        np.testing.assert_allclose(pe_bins(t, 100.0, 4, "quantile"), [0, 25.75, 50.5, 75.25, 100])


class TestPe:
    def test_exponential_mle(self):
        d = _two_strata([HazardSpec.constant(0.4), HazardSpec.constant(0.2)], 400, seed=8, c_admin=5.0)
        fit = fit_pe(d, "equal", j_max=1, j_min=1)
        for s in range(2):
            m = d.stratum_mask(s)
            assert fit.rates[s][0] == pytest.approx(d.event[m].sum() / d.time[m].sum(), rel=1e-14)

    def test_loglik_matches_oracle(self):
        d = _two_strata([HazardSpec.constant(0.4), HazardSpec.piecewise([0, 2, 5], [0.1, 0.5])], 150,
                        beta=[0.6], covs=[CovariateSpec("x")], seed=9, c_admin=5.0)
        fit = fit_pe(d, "quantile", j_max=5)
        assert fit.loglik == pytest.approx(pe_loglik_oracle(fit.rates, fit.beta, fit.boundaries, d), rel=1e-12)

    def test_beta_is_mle(self):
        d = _two_strata([HazardSpec.constant(0.4)] * 2, 600, beta=[0.6, -0.2],
                        covs=[CovariateSpec("x"), CovariateSpec("y", "normal")], seed=10, c_admin=5.0)
        fit = fit_pe(d, "equal", j_max=4)
        ll0 = pe_loglik_oracle(fit.rates, fit.beta, fit.boundaries, d)
        for i in range(2):
            for h in (1e-3, -1e-3):
                b = fit.beta.copy()
                b[i] += h
                # profile out the rates at the perturbed beta
                rates = [fit.events[s] / np.array([
                    np.sum(np.exp(d.X[d.stratum == s] @ b) * np.clip(
                        np.minimum(d.time[d.stratum == s], d.grid.horizon)[:, None] - bb[None, :-1], 0, np.diff(bb)
                    )[:, j]) for j in range(bb.size - 1)]) for s, bb in enumerate(fit.boundaries)]
                assert pe_loglik_oracle(rates, b, fit.boundaries, d) <= ll0 + 1e-9

    def test_fisher_information(self):
        d = _two_strata([HazardSpec.constant(0.4), HazardSpec.constant(0.25)], 500,
                        beta=[0.3], covs=[CovariateSpec("x")], seed=11, c_admin=5.0)
        fit = fit_pe(d, "equal", j_max=6)
        for s in range(2):
            for j in range(fit.rates[s].size):
                lam = fit.rates[s][j]
                h = 1e-4 * lam

                def f(x):
                    r = [r.copy() for r in fit.rates]
                    r[s][j] = x
                    return pe_loglik_oracle(r, fit.beta, fit.boundaries, d)

                obs = -(f(lam + h) - 2 * f(lam) + f(lam - h)) / h**2
                assert obs == pytest.approx(fit.fisher_info[s][j], rel=1e-4)

    def test_aic(self):
        d = _two_strata([HazardSpec.constant(0.4)], 300, seed=12, c_admin=4.0)
        fit = fit_pe(d, "equal", j_max=5)
        assert fit.aic == pytest.approx(-2 * fit.loglik + 2 * fit.n_params)
        assert fit.aic == min(fit.candidates.values())
        assert fit.j == min(j for j, a in fit.candidates.items() if a == fit.aic)

    def test_no_zero_bins_after_merge(self):
        d = _two_strata([HazardSpec.constant(0.05), HazardSpec.constant(0.5)], [60, 400], seed=13, c_admin=10.0)
        fit = fit_pe(d, "equal", j_max=16)
        for D in fit.events:
            assert np.all(D >= 1)

    def test_piecewise_recovery(self):
        truth = [0.4, 0.2, 0.1, 0.3]
        d = _two_strata([HazardSpec.piecewise([0, 2, 4, 6, 8], truth)], 5000, seed=14, c_admin=8.0)
        fit = fit_pe(d, "equal", j_max=12)
        mids = np.array([1.0, 3.0, 5.0, 7.0])
        np.testing.assert_allclose(fit.hazard_at(mids, 0), truth, rtol=0.15)

    def test_zero_event_stratum(self):
        d = Dataset([1.0, 2.0, 3.0], [1, 0, 0], [0, 1, 1], np.zeros((3, 0)), 2, (), TimeGrid.equal(1, 3.0))
        with pytest.raises(FitError, match="stratum 1 has no events"):
            fit_pe(d)

    def test_fixed_bins_reject_empty(self):
        d = Dataset([1.0, 2.0], [1, 0], [0, 0], np.zeros((2, 0)), 1, (), TimeGrid.equal(1, 3.0))
        with pytest.raises(FitError):
            fit_pe_bins(d, [np.array([0.0, 1.5, 3.0])])


class TestPeLogHr:
    def _fit(self, r0, r1, b0=(0, 1, 2), b1=(0, 1, 2)):
        return PeFit("equal", 2, [np.array(b0, float), np.array(b1, float)], [np.array(r0, float), np.array(r1, float)],
                     np.zeros(0), 0.0, 0.0, [], [])

    def test_identical(self):
        f = self._fit([1, 3], [1, 3])
        np.testing.assert_array_equal(pe_log_hr(f, np.linspace(0, 2, 9)), 0.0)

    def test_two_bins(self):
        f = self._fit([1, 2], [2, 2])
        assert pe_log_hr(f, 0.5) == pytest.approx(math.log(2))
        assert pe_log_hr(f, 1.5) == 0.0

    def test_beyond(self):
        with pytest.raises(ValueError):
            pe_log_hr(self._fit([1, 2], [2, 2]), 2.5)

    @settings(max_examples=100)
    @given(st.lists(st.floats(0.01, 5), min_size=3, max_size=3), st.lists(st.floats(0.01, 5), min_size=2, max_size=2),
           st.floats(0, 3))
    def test_definitional(self, r0, r1, t):
        f = self._fit(r0, r1, (0, 1, 2, 3), (0, 1.7, 3))
        ref = math.log(f.hazard_at(t, 1) / f.hazard_at(t, 0))
        assert pe_log_hr(f, t) == pytest.approx(ref, rel=1e-12, abs=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrhsurv.simgen import CovariateSpec, HazardSpec, SimConfig, StepFunction, nelson_aalen, simulate
from mrhsurv.survdata import Dataset, TimeGrid


class TestHazardSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            HazardSpec.piecewise([0, 1], [0.5, 0.2])
        with pytest.raises(ValueError):
            HazardSpec.piecewise([0, 2, 1], [0.5, 0.2])
        with pytest.raises(ValueError):
            HazardSpec.piecewise([0, 1], [0.0])
        with pytest.raises(ValueError):
            HazardSpec.weibull(-1.0, 1.0)

    @settings(max_examples=100)
    @given(st.lists(st.floats(0.05, 3.0), min_size=1, max_size=5), st.floats(0.0, 0.999))
    def test_piecewise_inverse(self, rates, u):
        b = np.arange(len(rates) + 1, dtype=float)
        h = HazardSpec.piecewise(b, rates)
        y = u * float(h.cumulative(b[-1]))
        assert float(h.cumulative(h.inverse_cumulative(y))) == pytest.approx(y, rel=1e-10, abs=1e-12)

    def test_piecewise_tail_is_infinite(self):
        h = HazardSpec.piecewise([0, 1], [0.5])
        assert math.isinf(float(h.inverse_cumulative(0.6)))

    def test_weibull_closed_form(self):
        h = HazardSpec.weibull(2.0, 0.5)
        assert float(h.cumulative(3.0)) == pytest.approx(2.25)
        assert float(h.inverse_cumulative(2.25)) == pytest.approx(3.0)
        assert float(h.hazard(3.0)) == pytest.approx(2 * 0.5 * 1.5)


class TestSimulate:
    def test_exponential_mean(self):
        d = simulate([HazardSpec.constant(1.0)], SimConfig(n=50_000, seed=1))
        assert d.event.all()
        assert d.time.mean() == pytest.approx(1.0, abs=0.02)

    def test_rate_ratio(self):
        cfg = SimConfig(n=50_000, beta=[math.log(2)], covariates=[CovariateSpec("x", "binary", 0.5)], seed=2)
        d = simulate([HazardSpec.constant(1.0)], cfg)
        x = d.X[:, 0] == 1
        rate = lambda m: d.event[m].sum() / d.time[m].sum()  # noqa: E731
        assert rate(x) / rate(~x) == pytest.approx(2.0, rel=0.1)

    def test_no_censoring(self):
        d = simulate([HazardSpec.constant(0.2)], SimConfig(n=1000, seed=3, c_admin=1e12))
        assert d.event.all()

    def test_piecewise_tail_censored(self):
        d = simulate([HazardSpec.piecewise([0, 1], [0.1])], SimConfig(n=2000, seed=5))
        assert np.all(d.time <= 1.0)
        assert not d.event[d.time == 1.0].any()
        assert (~d.event).mean() == pytest.approx(math.exp(-0.1), abs=0.03)

    def test_deterministic(self):
        cfg = SimConfig(n=[200, 300], beta=[0.3, -0.2], covariates=[CovariateSpec("a"), CovariateSpec("b", "normal")],
                        c_rate=0.1, c_admin=5.0, seed=11)
        specs = [HazardSpec.constant(0.4), HazardSpec.weibull(1.5, 0.3)]
        assert simulate(specs, cfg) == simulate(specs, cfg)

    def test_censoring_monotone_in_rate(self):
        fracs = [(~simulate([HazardSpec.constant(0.5)], SimConfig(n=5000, seed=7, c_rate=c)).event).mean()
                 for c in (0.0, 0.2, 0.5, 1.0)]
        assert np.all(np.diff(fracs) >= 0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(n=0)
        with pytest.raises(ValueError):
            SimConfig(c_rate=-1)
        with pytest.raises(ValueError):
            SimConfig(beta=[1.0])
        with pytest.raises(ValueError):
            SimConfig(n=[1, 2]).sizes(3)

    def test_config_json(self):
        text = SimConfig(n=5, seed=3).to_json()
        assert '"seed": 3' in text and '"c_admin": null' in text


class TestNelsonAalen:
    def test_single_failure(self):
        d = Dataset([1.0], [True], [0], np.zeros((1, 0)), 1, (), TimeGrid.equal(0, 2.0))
        na = nelson_aalen(d)
        assert na(0.999) == 0.0 and na(1.0) == 1.0

    def test_no_events(self):
        d = Dataset([1.0, 2.0], [False, False], [0, 0], np.zeros((2, 0)), 1, (), TimeGrid.equal(0, 2.0))
        assert nelson_aalen(d)(1.5) == 0.0

    def test_matches_hand_computation(self):
        d = Dataset([1, 2, 2, 3, 4], [1, 1, 0, 1, 0], [0] * 5, np.zeros((5, 0)), 1, (), TimeGrid.equal(0, 4.0))
        na = nelson_aalen(d)
        assert na(2.5) == pytest.approx(1 / 5 + 1 / 4)
        assert na(3.0) == pytest.approx(1 / 5 + 1 / 4 + 1 / 2)

    def test_converges_to_line(self):
        d = simulate([HazardSpec.constant(0.7)], SimConfig(n=50_000, seed=8))
        na = nelson_aalen(d)
        ts = np.linspace(0, 0.9 * d.time.max(), 400)
        ts = ts[ts < np.quantile(d.time, 0.99)]
        assert np.max(np.abs(na(ts) - 0.7 * ts)) < 0.05

    def test_inversion_piecewise(self):
        spec = HazardSpec.piecewise([0, 1, 2, 3], [0.5, 1.5, 0.2])
        d = simulate([spec], SimConfig(n=40_000, seed=12))
        na = nelson_aalen(d)
        ts = np.linspace(0, 2.0, 50)
        assert np.max(np.abs(na(ts) - spec.cumulative(ts))) < 0.05

    def test_step_function(self):
        f = StepFunction(np.array([1.0, 2.0]), np.array([0.5, 0.7]))
        np.testing.assert_allclose(f(np.array([0.0, 1.0, 1.5, 2.0, 9.0])), [0, 0.5, 0.5, 0.7, 0.7])

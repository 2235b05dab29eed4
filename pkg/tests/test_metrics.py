from datetime import date

import numpy as np
import pandas as pd
import pytest

from suncast.errors import ValidationError
from suncast.metrics import (
    aggregate_metrics,
    cumulative_metrics,
    daily_metrics,
    loss_series,
    model_confidence_set,
)


class TestAggregateMetrics:
    def test_perfect_forecast(self):
        m = aggregate_metrics([10.0, 20.0], [10.0, 20.0])
        assert (m.rmse, m.mae, m.smape) == (0.0, 0.0, 0.0)

    def test_hand_computed_fixture(self):
        m = aggregate_metrics([100.0, 200.0], [110.0, 190.0])
        assert m.rmse == pytest.approx(10.0)
        assert m.mae == pytest.approx(10.0)
        assert m.smape == pytest.approx(40.0 / 600.0)

    def test_rmse_at_least_mae(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            y = rng.normal(size=50) * rng.uniform(0.1, 100)
            f = y + rng.normal(size=50)
            m = aggregate_metrics(y, f)
            assert m.rmse >= m.mae - 1e-12

    def test_smape_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            y = rng.uniform(0, 100, size=40)
            f = rng.uniform(0, 100, size=40)
            m = aggregate_metrics(y, f)
            assert 0.0 <= m.smape <= 2.0
            terms = loss_series(y, f)["smape"].to_numpy()
            assert ((terms >= 0) & (terms <= 2)).all()

    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
    def test_scale_equivariance(self, c):
        rng = np.random.default_rng(2)
        y = rng.uniform(1, 100, size=30)
        f = y + rng.normal(size=30)
        base = aggregate_metrics(y, f)
        scaled = aggregate_metrics(c * y, c * f)
        assert scaled.rmse == pytest.approx(c * base.rmse, rel=1e-12)
        assert scaled.mae == pytest.approx(c * base.mae, rel=1e-12)
        assert scaled.smape == pytest.approx(base.smape, rel=1e-12)

    def test_degenerate_smape_flagged(self):
        m = aggregate_metrics([0.0, 0.0], [0.0, 0.0])
        assert m.smape == 0.0
        assert m.smape_undefined

    def test_smape_term_zero_rule(self):
        terms = loss_series([0.0, 1.0], [0.0, 1.0])["smape"]
        assert terms.iloc[0] == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            aggregate_metrics([], [])


class TestDailyCumulative:
    def frame(self):
        return pd.DataFrame(
            {
                "date": [date(2022, 1, 1)] * 2 + [date(2022, 1, 2)] * 2,
                "actual_mw": [100.0, 200.0, 50.0, 70.0],
                "forecast_mw": [110.0, 190.0, 50.0, 90.0],
            }
        )

    def test_perfect_day_zero(self):
        f = self.frame()
        f.loc[:, "forecast_mw"] = f["actual_mw"]
        daily = daily_metrics(f)
        assert (daily["rmse"] == 0).all()
        cum = cumulative_metrics(daily)
        assert (cum["cum_rmse"] == 0).all()

    def test_two_day_hand_computation(self):
        daily = daily_metrics(self.frame())
        assert daily.loc[0, "rmse"] == pytest.approx(10.0)
        assert daily.loc[0, "smape"] == pytest.approx(40.0 / 600.0)
        assert daily.loc[1, "rmse"] == pytest.approx(np.sqrt(200.0))
        assert daily.loc[1, "smape"] == pytest.approx(40.0 / 260.0)

    def test_cumulative_totals(self):
        daily = daily_metrics(self.frame())
        cum = cumulative_metrics(daily)
        assert cum["cum_rmse"].iloc[-1] == pytest.approx(daily["rmse"].sum(), abs=1e-12)
        assert cum["cum_smape"].iloc[-1] == pytest.approx(daily["smape"].sum(), abs=1e-12)


class TestMcs:
    def test_identical_series_all_survive(self):
        rng = np.random.default_rng(3)
        base = rng.uniform(0, 1, size=200)
        losses = {f"m{i}": base.copy() for i in range(4)}
        res = model_confidence_set(losses, seed=1, n_bootstrap=200)
        assert res.members_at(0.90) == set(losses)
        assert res.members_at(0.99) == set(losses)
        assert all(p == 1.0 for p in res.pvalues.values())

    def test_strictly_worse_eliminated_first(self):
        rng = np.random.default_rng(4)
        base = rng.uniform(0, 1, size=300)
        losses = {f"m{i}": base.copy() for i in range(3)}
        losses["bad"] = base + 5.0
        res = model_confidence_set(losses, seed=2, n_bootstrap=300)
        assert res.elimination_order[0] == "bad"
        assert "bad" not in res.members_at(0.90)
        assert res.members_at(0.90) >= {"m0", "m1", "m2"}

    def test_nesting_and_determinism(self):
        rng = np.random.default_rng(5)
        losses = {f"m{i}": rng.uniform(0, 1, size=240) + 0.05 * i for i in range(5)}
        a = model_confidence_set(losses, seed=7, n_bootstrap=400)
        b = model_confidence_set(losses, seed=7, n_bootstrap=400)
        assert a.pvalues == b.pvalues
        assert a.members_at(0.90) <= a.members_at(0.99)
        assert len(a.members_at(0.99)) >= 1

    def test_zero_variance_pair(self):
        rng = np.random.default_rng(6)
        base = rng.uniform(0, 1, size=120)
        losses = {"a": base.copy(), "b": base.copy(), "c": base + 2.0}
        res = model_confidence_set(losses, seed=3, n_bootstrap=200)
        assert res.elimination_order[0] == "c"
        assert res.members_at(0.90) == {"a", "b"}

    def test_requires_two_configurations(self):
        with pytest.raises(ValidationError):
            model_confidence_set({"only": np.zeros(10)})

    def test_shifted_config_excluded_across_seeds(self):
        # scaled-down version of the acceptance simulation
        excluded = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            sigma = 1.0
            losses = {f"m{i}": rng.normal(10, sigma, size=240) for i in range(3)}
            losses["shifted"] = rng.normal(10 + 5 * sigma, sigma, size=240)
            res = model_confidence_set(losses, seed=seed, n_bootstrap=200)
            if "shifted" not in res.members_at(0.90):
                excluded += 1
        assert excluded >= 19

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from drpfolio.data import (
    CovarianceEstimate,
    ScenarioSet,
    WindowPlan,
    load_returns,
    rolling_windows,
    sample_covariance,
    save_returns,
)
from drpfolio.exceptions import (
    DimensionMismatchError,
    DuplicateAssetIdError,
    EmptyDataError,
    MalformedCellError,
    MissingFileError,
    PlanTooLongError,
    TooFewSamplesError,
    ValidationError,
)


class TestScenarioSet:
    def test_basic_shape(self):
        s = ScenarioSet.from_returns([[0.01, 0.02], [0.03, -0.01]])
        assert s.n_periods == 2
        assert s.n_assets == 2
        assert s.asset_ids == ("a0", "a1")

    def test_returns_are_readonly(self):
        s = ScenarioSet.from_returns([[0.01, 0.02]])
        with pytest.raises(ValueError):
            s.returns[0, 0] = 5.0

    def test_rejects_nan_values(self):
        with pytest.raises(ValidationError):
            ScenarioSet.from_returns([[np.nan, 0.0]])

    def test_rejects_duplicate_asset_ids(self):
        with pytest.raises(DuplicateAssetIdError):
            ScenarioSet(np.zeros((2, 2)), ("x", "x"), ("p1", "p2"))

    def test_rejects_id_count_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ScenarioSet(np.zeros((2, 2)), ("x",), ("p1", "p2"))

    def test_rejects_empty(self):
        with pytest.raises((EmptyDataError, DimensionMismatchError)):
            ScenarioSet.from_returns(np.zeros((0, 3)))

    def test_window_slices_rows(self):
        s = ScenarioSet.from_returns(np.arange(12.0).reshape(6, 2) / 100)
        w = s.window(1, 4)
        assert w.n_periods == 3
        assert w.period_ids == ("t1", "t2", "t3")
        np.testing.assert_array_equal(w.returns, s.returns[1:4])

    def test_window_bounds_checked(self):
        s = ScenarioSet.from_returns(np.zeros((3, 1)))
        with pytest.raises(DimensionMismatchError):
            s.window(2, 2)

    def test_mean_returns(self):
        s = ScenarioSet.from_returns([[0.0, 0.1], [0.2, 0.3]])
        np.testing.assert_allclose(s.mean_returns(), [0.1, 0.2])


class TestCovariance:
    def test_two_point_oracle(self):
        # mean 0, ddof=1: ((1)^2 + (-1)^2) / 1 = 2
        cov = sample_covariance(ScenarioSet.from_returns([[1.0], [-1.0]]))
        assert cov.matrix[0, 0] == 2.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        rows = rng.normal(0, 0.05, size=(9, 4))
        cov = sample_covariance(ScenarioSet.from_returns(rows))
        expected = oracles.sample_covariance(rows.tolist())
        np.testing.assert_allclose(cov.matrix, expected, atol=1e-14)

    def test_single_row_rejected(self):
        with pytest.raises(TooFewSamplesError):
            sample_covariance(ScenarioSet.from_returns([[0.1, 0.2]]))

    def test_restrict_takes_principal_submatrix(self):
        rng = np.random.default_rng(5)
        rows = rng.normal(0, 0.05, size=(10, 5))
        cov = sample_covariance(ScenarioSet.from_returns(rows))
        sub = cov.restrict([1, 3])
        np.testing.assert_array_equal(sub, cov.matrix[np.ix_([1, 3], [1, 3])])

    def test_asymmetric_rejected(self):
        with pytest.raises(ValidationError):
            CovarianceEstimate(np.array([[1.0, 0.5], [0.2, 1.0]]), 10)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_permutation_equivariance(self, seed):
        """Reordering assets reorders the covariance the same way."""
        rng = np.random.default_rng(seed)
        rows = rng.normal(0, 0.03, size=(6, 4))
        perm = rng.permutation(4)
        full = sample_covariance(ScenarioSet.from_returns(rows)).matrix
        shuffled = sample_covariance(
            ScenarioSet.from_returns(rows[:, perm])).matrix
        np.testing.assert_allclose(shuffled, full[np.ix_(perm, perm)],
                                   atol=1e-15)


class TestWindows:
    def test_plan_fields_validated(self):
        with pytest.raises(ValidationError):
            WindowPlan(1, 1, 1)          # estimation too short
        with pytest.raises(ValidationError):
            WindowPlan(2, 0, 1)
        with pytest.raises(ValidationError):
            WindowPlan(2, 1, 0)

    def test_offsets_oracle(self):
        # S=10, est=4, hold=2, step=2 -> windows start at 0, 2, 4
        s = ScenarioSet.from_returns(np.zeros((10, 2)) + 0.01)
        wins = rolling_windows(s, WindowPlan(4, 2, 2))
        assert len(wins) == 3
        starts = [w[0].period_ids[0] for w in wins]
        assert starts == ["t0", "t2", "t4"]
        for est, hold in wins:
            assert est.n_periods == 4
            assert hold.n_periods == 2

    def test_plan_longer_than_data(self):
        s = ScenarioSet.from_returns(np.zeros((4, 1)) + 0.01)
        with pytest.raises(PlanTooLongError):
            rolling_windows(s, WindowPlan(4, 2, 1))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(6, 60), st.integers(2, 10), st.integers(1, 6),
           st.integers(1, 8))
    def test_windows_fit_inside_data(self, s_len, est, hold, step):
        s = ScenarioSet.from_returns(np.zeros((s_len, 1)) + 0.001)
        plan = WindowPlan(est, hold, step)
        if plan.span > s_len:
            with pytest.raises(PlanTooLongError):
                rolling_windows(s, plan)
            return
        wins = rolling_windows(s, plan)
        assert wins
        # every window spans est + hold contiguous periods
        for est_set, hold_set in wins:
            first = int(est_set.period_ids[0][1:])
            last = int(hold_set.period_ids[-1][1:])
            assert last - first + 1 == plan.span
            assert last < s_len


class TestCsvRoundTrip:
    def test_save_load_identity(self, tmp_path):
        rng = np.random.default_rng(2)
        s = ScenarioSet.from_returns(rng.normal(0, 0.07, size=(7, 3)))
        path = tmp_path / "r.csv"
        save_returns(s, path)
        back = load_returns(path)
        np.testing.assert_array_equal(back.returns, s.returns)
        assert back.asset_ids == s.asset_ids
        assert back.period_ids == s.period_ids

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_returns(tmp_path / "nope.csv")

    def test_malformed_cell_coordinates(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("period,A,B\np1,0.01,0.02\np2,xyz,0.03\n")
        with pytest.raises(MalformedCellError) as exc:
            load_returns(path)
        assert exc.value.row == 2
        assert exc.value.col == 1

    def test_non_finite_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("period,A\np1,inf\n")
        with pytest.raises(MalformedCellError):
            load_returns(path)

    def test_short_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("period,A,B\np1,0.01\n")
        with pytest.raises(MalformedCellError) as exc:
            load_returns(path)
        assert exc.value.row == 1

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(EmptyDataError):
            load_returns(path)

    def test_duplicate_header_rejected(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text("period,A,A\np1,0.01,0.02\n")
        with pytest.raises(DuplicateAssetIdError):
            load_returns(path)

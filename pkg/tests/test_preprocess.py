import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nidskit import preprocess
from nidskit.preprocess import (EmptyColumnError, EmptyDatasetError,
                                PreprocessConfig, apply_plan, fit_plan,
                                iqr_fences, load_plan, plan_from_text,
                                plan_to_text, quantile, save_plan)
from nidskit.kdd_data import NUMERIC_NAMES

from conftest import make_dataset, make_record_line


def oracle_quantile(values, p):
    """Independent linear-interpolation quantile: h=(n-1)p over sorted data."""
    x = sorted(values)
    h = (len(x) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(x) - 1)
    return x[lo] + (h - lo) * (x[hi] - x[lo])


class TestQuantilesAndFences:
    def test_textbook_column(self):
        col = [1, 2, 3, 4, 5, 6, 7, 8, 9, 100]
        assert quantile(col, 0.25) == pytest.approx(3.25)
        assert quantile(col, 0.75) == pytest.approx(7.75)
        lo, hi = iqr_fences(col, 1.5)
        assert (lo, hi) == pytest.approx((-3.5, 14.5))
        assert 100 > hi  # the extreme value is an outlier

    def test_constant_column(self):
        assert iqr_fences([5, 5, 5, 5], 1.5) == (5.0, 5.0)
        assert iqr_fences([5, 5, 5, 5], 10.0) == (5.0, 5.0)

    def test_single_element(self):
        assert iqr_fences([7], 1.5) == (7.0, 7.0)

    def test_empty_column(self):
        with pytest.raises(EmptyColumnError):
            iqr_fences([], 1.5)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40),
           st.floats(0.0, 1.0))
    @settings(max_examples=150, deadline=None)
    def test_quantile_matches_oracle(self, values, p):
        assert quantile(values, p) == pytest.approx(oracle_quantile(values, p), abs=1e-9)


def dataset_with_column(name, values, **extra):
    return make_dataset([make_record_line(**{name: v}, **extra) for v in values])


class TestFitPlan:
    def test_empty_dataset(self):
        with pytest.raises(EmptyDatasetError):
            fit_plan(make_dataset([]), PreprocessConfig())

    def test_fences_and_quartiles(self):
        ds = dataset_with_column("duration", [1, 2, 3, 4, 5, 6, 7, 8, 9, 100])
        plan = fit_plan(ds, PreprocessConfig())
        s = plan.numeric["duration"]
        assert (s.q1, s.q3) == pytest.approx((3.25, 7.75))
        assert (s.lo_fence, s.hi_fence) == pytest.approx((-3.5, 14.5))
        # scaling stats describe the clipped column
        assert s.max == pytest.approx(14.5)
        assert s.min == pytest.approx(1.0)

    def test_vocabulary_sorted_unique(self, small_dataset):
        plan = fit_plan(small_dataset, PreprocessConfig())
        vocab = plan.categorical["protocol_type"].vocab
        assert list(vocab) == sorted(set(vocab))
        assert set(vocab) == {"icmp", "tcp", "udp"}

    def test_min_le_median_le_max(self, small_dataset):
        plan = fit_plan(small_dataset, PreprocessConfig())
        for name, s in plan.numeric.items():
            assert s.min <= s.median <= s.max, name


class TestApplyPlan:
    def test_minmax_simple(self):
        ds = dataset_with_column("duration", [1, 3, 5])
        plan = fit_plan(ds, PreprocessConfig(scaling_mode="minmax"))
        out = apply_plan(plan, ds)
        col = out.values[:, out.column_names.index("duration")]
        assert col == pytest.approx([0.0, 0.5, 1.0])

    def test_zscore_population_std(self):
        ds = dataset_with_column("duration", [2, 4, 6])
        plan = fit_plan(ds, PreprocessConfig(scaling_mode="zscore"))
        out = apply_plan(plan, ds)
        col = out.values[:, out.column_names.index("duration")]
        expected = (np.array([2.0, 4.0, 6.0]) - 4.0) / math.sqrt(8.0 / 3.0)
        assert col == pytest.approx(expected)
        assert col[0] == pytest.approx(-1.224744871391589)

    def test_constant_column_scales_to_zero(self):
        ds = dataset_with_column("duration", [5, 5, 5])
        for mode in ("minmax", "zscore"):
            plan = fit_plan(ds, PreprocessConfig(scaling_mode=mode))
            out = apply_plan(plan, ds)
            assert np.all(out.values[:, out.column_names.index("duration")] == 0.0)

    def test_unseen_category_is_zero_block(self):
        train = make_dataset([make_record_line(service=s) for s in
                              ("http", "smtp", "ftp")])
        plan = fit_plan(train, PreprocessConfig())
        test = make_dataset([make_record_line(service="newsvc")])
        out = apply_plan(plan, test)
        block = [j for j, n in enumerate(out.column_names) if n.startswith("service=")]
        assert len(block) == 3
        assert np.all(out.values[0, block] == 0.0)

    def test_onehot_blocks_at_most_one_hot(self, small_dataset):
        plan = fit_plan(small_dataset, PreprocessConfig())
        out = apply_plan(plan, small_dataset)
        for prefix in ("protocol_type=", "service=", "flag="):
            block = [j for j, n in enumerate(out.column_names) if n.startswith(prefix)]
            sums = out.values[:, block].sum(axis=1)
            assert np.all((sums == 0.0) | (sums == 1.0))
            assert np.all(np.isin(out.values[:, block], (0.0, 1.0)))

    def test_missing_numeric_imputed_with_median(self):
        train = dataset_with_column("duration", [1, 2, 9])
        plan = fit_plan(train, PreprocessConfig(scaling_mode="minmax"))
        holed = make_dataset([make_record_line(duration="")])
        out = apply_plan(plan, holed)
        col = out.values[0, out.column_names.index("duration")]
        s = plan.numeric["duration"]
        assert s.median == 2.0
        assert col == pytest.approx((2.0 - s.min) / (s.max - s.min))

    def test_missing_categorical_imputed_with_mode(self):
        train = make_dataset([make_record_line(service=s) for s in
                              ("http", "http", "smtp")])
        plan = fit_plan(train, PreprocessConfig())
        holed = make_dataset([make_record_line(service="")])
        out = apply_plan(plan, holed)
        j = out.column_names.index("service=http")
        assert out.values[0, j] == 1.0

    def test_clip_vs_flag(self):
        train = dataset_with_column("duration", [1, 2, 3, 4, 5, 6, 7, 8, 9, 100])
        clip_plan = fit_plan(train, PreprocessConfig(outlier_action="clip"))
        flag_plan = fit_plan(train, PreprocessConfig(outlier_action="flag"))
        clipped = apply_plan(clip_plan, train)
        flagged = apply_plan(flag_plan, train)
        j = clipped.column_names.index("duration")
        assert clipped.values[:, j].max() == pytest.approx(1.0)  # 14.5 -> 1.0
        assert flagged.values[:, j].max() == pytest.approx(1.0)  # 100 -> 1.0 unclipped
        assert clipped.outlier_cells == flagged.outlier_cells > 0
        # under flag, the raw 9 keeps its unsquashed position below 100
        assert flagged.values[8, j] < clipped.values[8, j]

    def test_training_minmax_bounded(self, small_dataset):
        plan = fit_plan(small_dataset, PreprocessConfig(scaling_mode="minmax"))
        out = apply_plan(plan, small_dataset)
        assert out.values.min() >= 0.0 and out.values.max() <= 1.0
        assert np.isfinite(out.values).all()

    def test_refit_on_applied_training_rows_reproduces_minmax(self):
        train = dataset_with_column("duration", [1, 2, 3, 4, 5, 6, 7, 8, 9, 100])
        plan = fit_plan(train, PreprocessConfig())
        s = plan.numeric["duration"]
        clipped = np.clip(train.numeric[:, 0], s.lo_fence, s.hi_fence)
        assert clipped.min() == s.min and clipped.max() == s.max

    def test_clipping_idempotent_through_inverse_scaling(self):
        train = dataset_with_column("duration", [1, 2, 3, 4, 5, 6, 7, 8, 9, 100])
        plan = fit_plan(train, PreprocessConfig())
        out1 = apply_plan(plan, train)
        j = out1.column_names.index("duration")
        s = plan.numeric["duration"]
        # invert the min-max scaling, clip, rescale: must equal pass one
        inverted = out1.values[:, j] * (s.max - s.min) + s.min
        again = (np.clip(inverted, s.lo_fence, s.hi_fence) - s.min) / (s.max - s.min)
        assert again == pytest.approx(out1.values[:, j], abs=1e-12)


class TestPlanSerialization:
    def test_round_trip(self, small_dataset):
        plan = fit_plan(small_dataset, PreprocessConfig(scaling_mode="zscore", iqr_k=2.0))
        text = plan_to_text(plan)
        again = plan_from_text(text)
        assert again.config == plan.config
        assert again.n_rows == plan.n_rows
        for name in NUMERIC_NAMES:
            assert again.numeric[name] == plan.numeric[name]
        assert again.categorical == plan.categorical

    def test_file_round_trip(self, small_dataset, tmp_path):
        plan = fit_plan(small_dataset, PreprocessConfig())
        path = tmp_path / "plan.txt"
        save_plan(plan, path)
        again = load_plan(path)
        assert again.numeric == plan.numeric

    def test_rejects_bad_format(self):
        with pytest.raises(preprocess.PlanFormatError):
            plan_from_text("format = 99\n")
        with pytest.raises(preprocess.PlanFormatError):
            plan_from_text("format = 1\nnot a key value line\n")

    def test_comments_and_blanks_ignored(self, small_dataset):
        plan = fit_plan(small_dataset, PreprocessConfig())
        text = "# a comment\n\n" + plan_to_text(plan)
        assert plan_from_text(text).n_rows == plan.n_rows


class TestConfigValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            PreprocessConfig(scaling_mode="weird")
        with pytest.raises(ValueError):
            PreprocessConfig(iqr_k=0.0)
        with pytest.raises(ValueError):
            PreprocessConfig(outlier_action="drop")

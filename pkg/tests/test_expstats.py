import csv
import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats
from statsmodels.stats.anova import AnovaRM

from encounter.errors import DegenerateInput, EmptyCondition, ParseError, ZeroErrorVariance
from encounter.expstats import (
    ExperimentConfig, ResponseTable, confusion_matrix, f_sf, make_trial_plan, per_subject_rates, read_anova_input,
    read_wide_csv, rm_anova, run_experiment,
)

import oracles

SHAPES = ["sphere", "cube", "pyramid", "edge"]

# n = 4 subjects, k = 3 conditions; sums of squares worked out with exact fractions:
# grand 14/3, SS_total 194/3, SS_cond 158/3, SS_subj 22/3, SS_error 14/3, F = 237/7
FIXTURE = [[3, 5, 7], [2, 4, 9], [4, 4, 8], [1, 3, 6]]

cells = arrays(float, st.tuples(st.integers(2, 8), st.integers(2, 5)),
               elements=st.floats(0, 1, allow_subnormal=False))


class TestTrialPlan:
    def test_balanced(self):
        plan = make_trial_plan(SHAPES, 5, seed=3)
        assert len(plan.trials) == 20
        assert all(plan.kinds.count(s) == 5 for s in SHAPES)
        assert [t.index for t in plan.trials] == list(range(20))

    def test_deterministic(self):
        assert make_trial_plan(SHAPES, 5, 11).kinds == make_trial_plan(SHAPES, 5, 11).kinds

    def test_seeds_differ(self):
        a, b = make_trial_plan(SHAPES, 5, 1).kinds, make_trial_plan(SHAPES, 5, 2).kinds
        assert sorted(a) == sorted(b) and a != b

    def test_invalid(self):
        with pytest.raises(ValueError):
            make_trial_plan(SHAPES, 0, 1)


class TestConfusion:
    def test_all_correct(self):
        rows = [("s1", i, s, s) for i, s in enumerate(SHAPES * 3)]
        cm = confusion_matrix(ResponseTable(rows))
        assert np.array_equal(cm.matrix, np.eye(4))
        assert all(v == 1.0 for v in cm.rates.values())

    def test_uniform_random(self):
        rng = np.random.default_rng(7)
        rows = [("s1", i, SHAPES[i % 4], SHAPES[rng.integers(4)]) for i in range(40000)]
        cm = confusion_matrix(ResponseTable(rows))
        assert np.allclose(cm.matrix, 0.25, atol=0.02)

    def test_single_row(self):
        cm = confusion_matrix(ResponseTable([("s1", 0, "sphere", "pyramid")]), conditions=["sphere"])
        assert cm.matrix.tolist() == [[0, 0, 1, 0]]
        assert cm.rates == {"sphere": 0.0}

    def test_empty_condition(self):
        with pytest.raises(EmptyCondition):
            confusion_matrix(ResponseTable([("s1", 0, "sphere", "pyramid")]))
        with pytest.raises(EmptyCondition):
            confusion_matrix(ResponseTable())

    def test_duplicate_and_unknown(self):
        with pytest.raises(ValueError):
            ResponseTable([("s1", 0, "sphere", "cube"), ("s1", 0, "cube", "cube")])
        with pytest.raises(ValueError):
            ResponseTable([("s1", 0, "torus", "cube")])

    @given(st.lists(st.tuples(st.sampled_from(SHAPES), st.sampled_from(SHAPES)), min_size=4, max_size=80),
           st.randoms())
    def test_rows_sum_and_permutation(self, pairs, rnd):
        pairs = list(SHAPES_PAIRS) + pairs
        rows = [("s", i, p, a) for i, (p, a) in enumerate(pairs)]
        cm = confusion_matrix(ResponseTable(rows))
        assert np.allclose(cm.matrix.sum(axis=1), 1, atol=1e-12)
        rnd.shuffle(rows)
        assert np.array_equal(confusion_matrix(ResponseTable(rows)).matrix, cm.matrix)

    def test_csv(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("subject,trial,presented,answered\nA,0,Sphere,cube\nA,1,cube,cube\n")
        t = ResponseTable.read_csv(path)
        assert len(t) == 2 and t.rows[0].presented == "sphere"
        path.write_text("subject,trial,presented,answered\nA,0,sphere,\n")
        with pytest.raises(ParseError, match="line 2"):
            ResponseTable.read_csv(path)

    def test_per_subject_rates(self):
        rows = []
        for s, correct in (("a", True), ("b", False)):
            for i, shape in enumerate(SHAPES):
                rows.append((s, i, shape, shape if correct else "cube" if shape != "cube" else "edge"))
        subjects, Y = per_subject_rates(ResponseTable(rows))
        assert subjects == ["a", "b"] and Y.tolist() == [[1] * 4, [0] * 4]


SHAPES_PAIRS = [(s, s) for s in SHAPES]


class TestAnova:
    def test_fixture_against_hand_sums(self):
        r = rm_anova(FIXTURE)
        F, ssc, sss, sse, sst = oracles.rm_anova_by_hand(FIXTURE)
        assert abs(r.F - F) / F < 1e-9 and abs(r.F - 237 / 7) / r.F < 1e-12
        for got, want in ((r.ss_conditions, 158 / 3), (r.ss_subjects, 22 / 3), (r.ss_error, 14 / 3),
                          (r.ss_total, 194 / 3)):
            assert got == pytest.approx(want, rel=1e-12)
        assert (r.df1, r.df2) == (2, 6)
        assert np.allclose(r.means, [2.5, 4, 7.5])

    def test_df_for_eight_by_four(self, rng):
        r = rm_anova(rng.random((8, 4)))
        assert (r.df1, r.df2) == (3, 21)

    def test_against_statsmodels(self, rng):
        Y = rng.random((8, 4))
        df = pd.DataFrame([(i, j, Y[i, j]) for i in range(8) for j in range(4)], columns=["s", "c", "y"])
        table = AnovaRM(df, "y", "s", within=["c"]).fit().anova_table
        r = rm_anova(Y)
        assert r.F == pytest.approx(table["F Value"].iloc[0], rel=1e-10)
        assert r.p == pytest.approx(table["Pr > F"].iloc[0], rel=1e-8)

    def test_p_value_from_f_distribution(self):
        for F, d1, d2 in ((8.11, 3, 21), (0.5, 2, 10), (40.0, 5, 7)):
            assert f_sf(F, d1, d2) == pytest.approx(stats.f.sf(F, d1, d2), rel=1e-10)
        assert f_sf(0.0, 3, 21) == 1.0

    def test_reported_statistic_shape(self):
        # a reported F(3,21) = 8.11 has an upper tail of about 8.9e-4
        assert 5e-4 < f_sf(8.11, 3, 21) < 1e-3

    @given(cells, st.floats(-100, 100))
    def test_location_invariance(self, Y, c):
        try:
            r = rm_anova(Y)
        except (DegenerateInput, ZeroErrorVariance):
            return
        if r.ss_error < 1e-6 * r.ss_total:  # nearly exact fits amplify rounding in F
            return
        r2 = rm_anova(Y + c)
        assert abs(r2.F - r.F) <= 1e-9 * max(abs(r.F), 1e-12)

    @given(cells, st.randoms())
    def test_column_permutation(self, Y, rnd):
        try:
            r = rm_anova(Y)
        except (DegenerateInput, ZeroErrorVariance):
            return
        perm = list(range(Y.shape[1]))
        rnd.shuffle(perm)
        assert rm_anova(Y[:, perm]).F == pytest.approx(r.F, rel=1e-9, abs=1e-12)

    @given(cells)
    def test_df_invariant(self, Y):
        try:
            r = rm_anova(Y)
        except (DegenerateInput, ZeroErrorVariance):
            return
        n, k = Y.shape
        assert (r.df1, r.df2) == (k - 1, (k - 1) * (n - 1))
        assert 0 < r.p <= 1

    @given(st.floats(0, 50), st.floats(0, 50), st.integers(1, 6), st.integers(1, 40))
    def test_p_monotone(self, a, b, d1, d2):
        lo, hi = sorted((a, b))
        assert f_sf(hi, d1, d2) <= f_sf(lo, d1, d2)

    def test_all_identical(self):
        with pytest.raises(DegenerateInput):
            rm_anova(np.full((4, 3), 0.5))

    def test_zero_error_variance(self):
        # additive subject + condition effects fit exactly: MS_error = 0
        Y = np.add.outer([0.0, 1.0, 2.0], [0.0, 0.5, 0.25])
        with pytest.raises(ZeroErrorVariance):
            rm_anova(Y)

    def test_subjects_only(self):
        with pytest.raises(DegenerateInput):
            rm_anova(np.add.outer([0.0, 1.0, 2.0], [0.0, 0.0]))

    def test_conditions_equal(self):
        Y = np.array([[1.0, 2.0], [2.0, 1.0], [1.5, 1.5]])
        r = rm_anova(Y)
        assert r.F == 0.0 and r.p == 1.0

    @pytest.mark.parametrize("Y", [[[1, 2]], [[1], [2]], [[1, np.nan], [2, 3]]])
    def test_bad_shape(self, Y):
        with pytest.raises(ValueError):
            rm_anova(Y)


class TestCsvInput:
    def test_wide(self, tmp_path):
        path = tmp_path / "w.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "a", "b", "c"])
            for i, row in enumerate(FIXTURE):
                w.writerow([f"s{i}", *row])
        subjects, conds, Y = read_wide_csv(path)
        assert conds == ["a", "b", "c"] and len(subjects) == 4
        assert rm_anova(Y).F == pytest.approx(237 / 7)

    def test_wide_missing_cell(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("subject,a,b\ns1,1,\n")
        with pytest.raises(ParseError, match="line 2"):
            read_wide_csv(path)

    def test_long_format(self, tmp_path):
        path = tmp_path / "r.csv"
        lines = ["subject,trial,presented,answered"]
        for s in range(3):
            for i, shape in enumerate(SHAPES):
                lines.append(f"s{s},{i},{shape},{shape if (i + s) % 2 else 'cube'}")
        path.write_text("\n".join(lines) + "\n")
        subjects, conds, Y = read_anova_input(path)
        assert conds == SHAPES and Y.shape == (3, 4)


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    return run_experiment(ExperimentConfig(str(out), trials_per_shape=5, seed=4)), out


class TestExperiment:
    def test_outputs(self, experiment):
        res, out = experiment
        assert len(res.traces) == 20 and all(p.exists() for p in res.traces)
        with open(res.responses_csv, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["subject", "trial", "presented", "answered"] and len(rows) == 21
        assert all(r[3] == "" for r in rows[1:])
        assert [r[2] for r in rows[1:]] == res.plan.kinds
        assert json.loads((out / "diagnostics.json").read_text())["trials"]

    def test_every_trial_reaches_contact(self, experiment):
        res, _ = experiment
        assert all(s["contact_ticks"] > 0 for s in res.summaries)

    def test_cube_trials_exact(self, experiment):
        res, _ = experiment
        cube = [s for s in res.summaries if s["kind"] == "cube"]
        assert len(cube) == 5 and all(s["rms_max"] < 1e-9 for s in cube)

    def test_pin_distance_reported(self, experiment):
        d = experiment[0].diagnostics["pin_distance"]
        assert set(d) == {"sphere-pyramid", "sphere-cube", "sphere_closer_to_pyramid"}

    def test_unknown_shape(self, tmp_path):
        with pytest.raises(ValueError):
            run_experiment(ExperimentConfig(str(tmp_path), shapes=("torus",)))

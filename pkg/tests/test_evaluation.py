import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _oracles import (
    bootstrap_oracle,
    iqm_oracle,
    mean_oracle,
    median_oracle,
    og_oracle,
    poi_oracle,
    profile_oracle,
    random_matrix,
)
from plugrl.core import stream
from plugrl.evaluation import (
    EvalError,
    OptimalityGap,
    ScoreMatrix,
    aggregate,
    bootstrap_ci,
    metric_name,
    parse_metric,
    performance_profile,
    prob_improvement,
    report,
)


def test_constant_matrix_metrics():
    m = ScoreMatrix(np.full((3, 2), 0.7))
    for metric in ("mean", "median", "iqm"):
        assert aggregate(m, metric) == 0.7
    assert aggregate(m, OptimalityGap(1.0)) == pytest.approx(0.3)
    assert aggregate(m, "optimality_gap:0.5") == 0.0
    assert bootstrap_ci(m, "iqm", 200) == (0.7, 0.7)


def test_iqm_definition_examples():
    assert aggregate(ScoreMatrix(np.arange(8.0).reshape(2, 4)), "iqm") == 3.5
    assert aggregate(ScoreMatrix([[4.25]]), "iqm") == 4.25


def test_empty_and_invalid_matrix():
    with pytest.raises(EvalError):
        ScoreMatrix(np.zeros((0, 3)))
    with pytest.raises(EvalError, match="non-finite"):
        ScoreMatrix([[1.0, np.nan]])
    with pytest.raises(EvalError):
        ScoreMatrix([[1.0, 2.0]], task_labels=["a", "a"])
    with pytest.raises(EvalError):
        aggregate(np.array([]), "mean")


def test_parse_metric():
    assert parse_metric("IQM") == "iqm"
    assert parse_metric("optimality_gap:0.8") == OptimalityGap(0.8)
    assert metric_name("optimality_gap:0.8") == "optimality_gap:0.8"
    with pytest.raises(EvalError):
        parse_metric("best")
    with pytest.raises(EvalError):
        parse_metric("mean:3")


@pytest.mark.parametrize("seed", range(40))
def test_metrics_exact_vs_definitions(seed):
    raw = random_matrix(seed, ties=seed % 2 == 0)
    m = ScoreMatrix(raw)
    assert aggregate(m, "mean") == mean_oracle(raw)
    assert aggregate(m, "median") == median_oracle(raw)
    assert aggregate(m, "iqm") == iqm_oracle(raw)
    assert aggregate(m, "optimality_gap:0.9") == og_oracle(raw, 0.9)
    taus = np.sort(np.concatenate([raw.ravel(), [-5.0, 5.0, 0.3]]))
    curve = performance_profile({"x": m}, taus)["x"]
    assert [float(v) for v in curve] == [profile_oracle(raw, t) for t in taus]
    other = random_matrix(seed + 1000, c=raw.shape[1], ties=seed % 2 == 0)
    assert prob_improvement(m, ScoreMatrix(other)) == poi_oracle(raw, other)


def test_profile_examples():
    m = ScoreMatrix([[0.1, 0.4], [0.6, 0.9]])
    c = performance_profile({"a": m}, [0.0, 0.5, 0.9, 1.0])["a"]
    assert list(c) == [1.0, 0.5, 0.0, 0.0]
    with pytest.raises(EvalError):
        performance_profile({"a": m}, [])
    with pytest.raises(EvalError):
        performance_profile({"a": m}, [0.5, 0.1])


def test_poi_examples():
    x = ScoreMatrix([[1.0], [2.0]])
    y = ScoreMatrix([[1.0], [3.0]])
    assert prob_improvement(x, y) == 0.375
    assert prob_improvement(x, x) == 0.5
    assert prob_improvement(ScoreMatrix([[5.0], [6.0]]), y) == 1.0


def test_poi_task_mismatch_names_difference():
    a = ScoreMatrix([[1.0, 2.0]], ["pole", "grid"])
    b = ScoreMatrix([[1.0, 2.0]], ["pole", "maze"])
    with pytest.raises(EvalError, match=r"only in X \['grid'\].*only in Y \['maze'\]"):
        prob_improvement(a, b)


def test_poi_aligns_tasks_by_label():
    a = ScoreMatrix([[1.0, 5.0]], ["t1", "t2"])
    b = ScoreMatrix([[4.0, 2.0]], ["t2", "t1"])
    assert prob_improvement(a, b) == 0.5


def test_bootstrap_matches_independent_resampler():
    raw = np.array([[0.1, 0.9], [0.4, 0.3], [0.8, 0.5], [0.2, 0.7], [0.6, 0.05]])
    for metric, fn in (("iqm", iqm_oracle), ("mean", mean_oracle), ("median", median_oracle)):
        lo, hi = bootstrap_ci(ScoreMatrix(raw), metric, reps=2000, confidence=0.95, seed=17)
        olo, ohi = bootstrap_oracle(raw, fn, 2000, 17, 0.95)
        assert (lo, hi) == (olo, ohi)


def test_bootstrap_errors_and_determinism():
    m = ScoreMatrix(random_matrix(3, 4, 3))
    with pytest.raises(EvalError):
        bootstrap_ci(m, "mean", 500, confidence=1.0)
    with pytest.raises(EvalError):
        bootstrap_ci(m, "mean", 50)
    assert bootstrap_ci(m, "mean", 300, seed=2) == bootstrap_ci(m, "mean", 300, seed=2)


@pytest.mark.parametrize("seed", range(10))
def test_point_estimate_inside_interval(seed):
    m = ScoreMatrix(random_matrix(seed, 6, 3))
    for metric in ("mean", "iqm", "median"):
        lo, hi = bootstrap_ci(m, metric, 1000, seed=seed)
        assert lo <= aggregate(m, metric) <= hi


def test_ci_width_shrinks_with_runs():
    widths = {}
    for R in (10, 40):
        ws = []
        for s in range(15):
            data = stream(s, f"width/{R}").standard_normal((R, 2))
            lo, hi = bootstrap_ci(ScoreMatrix(data), "mean", 400, seed=s)
            ws.append(hi - lo)
        widths[R] = np.median(ws)
    ratio = widths[10] / widths[40]
    assert 2 / 1.5 <= ratio <= 2 * 1.5


mats = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=st.floats(-10, 10, width=32))


@settings(max_examples=100, deadline=None)
@given(mats, st.data())
def test_permutation_invariance(raw, data):
    m = ScoreMatrix(raw)
    rows = data.draw(st.permutations(range(raw.shape[0])))
    cols = data.draw(st.permutations(range(raw.shape[1])))
    p = ScoreMatrix(raw[np.ix_(rows, cols)])
    for metric in ("mean", "median", "iqm", "optimality_gap:1.0"):
        assert aggregate(m, metric) == aggregate(p, metric)
    labels = [f"t{j}" for j in range(raw.shape[1])]
    x = ScoreMatrix(raw, labels)
    y = ScoreMatrix(raw[np.ix_(rows, cols)], [labels[j] for j in cols])
    assert prob_improvement(x, ScoreMatrix(raw[::-1], labels)) == prob_improvement(
        y, ScoreMatrix(raw[::-1][np.ix_(rows, cols)], [labels[j] for j in cols])
    )


@settings(max_examples=100, deadline=None)
@given(mats, st.data(), st.floats(0, 5))
def test_iqm_monotone(raw, data, bump):
    r = data.draw(st.integers(0, raw.shape[0] - 1))
    c = data.draw(st.integers(0, raw.shape[1] - 1))
    up = raw.copy()
    up[r, c] += bump
    assert aggregate(ScoreMatrix(up), "iqm") >= aggregate(ScoreMatrix(raw), "iqm")


@settings(max_examples=50, deadline=None)
@given(mats, st.lists(st.floats(-12, 12), min_size=1, max_size=10))
def test_profile_nonincreasing(raw, taus):
    curve = performance_profile({"a": ScoreMatrix(raw)}, sorted(taus))["a"]
    assert np.all(np.diff(curve) <= 0)


def test_csv_round_trip_and_errors():
    m = ScoreMatrix([[0.1, 1 / 3], [2.5, -7.0]], ["a", "b"])
    assert ScoreMatrix.from_csv(m.to_csv()) == m
    with pytest.raises(EvalError, match="line 3"):
        ScoreMatrix.from_csv("a,b\n1,2\n3\n")
    with pytest.raises(EvalError, match="line 2"):
        ScoreMatrix.from_csv("a\nfoo\n")


def test_report_structure():
    ms = {"x": ScoreMatrix(random_matrix(1, 5, 2)), "y": ScoreMatrix(random_matrix(2, 5, 2))}
    rep = report(ms, ("mean", "iqm"), reps=200, taus=[0.0, 0.5], pairwise=True)
    assert len(rep.rows) == 4
    assert rep.metrics_csv().splitlines()[0] == "name,metric,estimate,ci_low,ci_high"
    assert len(rep.profile_csv().splitlines()) == 1 + 2 * 2
    assert rep.poi[0][:2] == ("x", "y")
    assert set(rep.to_dict()) == {"metrics", "profiles", "prob_improvement"}

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildfire_planner.datagen import SyntheticConfig, generate_synthetic
from wildfire_planner.ignition_glm import fit_poisson_arrays, predict_many
from wildfire_planner.uncertainty import (CalibrationSet, Grouping, UncertaintySet, augment, build_bonferroni_set,
                                          build_ci_set, build_grouped_set, build_maxrank_set, contains,
                                          empirical_quantile, mixing_correction, normal_quantile, project_center,
                                          random_grouping, read_calibration_csv, score, write_calibration_csv)

Z_95 = 1.6448536269514722  # standard normal 0.95 quantile, from published tables


def one_group(n):
    return Grouping(np.zeros(n, dtype=int), 1)


def cal_from_residuals(res, center=10.0):
    res = np.asarray(res, dtype=float)
    if res.ndim == 1:
        res = res[:, None]
    u_hat = np.full(res.shape, center)
    return CalibrationSet(u_hat + res, u_hat)


# -- grouping / augmentation / score ---------------------------------------------

def test_random_grouping_forced_and_balanced():
    g = random_grouping(4, 4, seed=0)
    assert sorted(g.assignment.tolist()) == [0, 1, 2, 3]
    sizes = np.bincount(random_grouping(5, 2, seed=1).assignment)
    assert sorted(sizes.tolist()) == [2, 3]


def test_random_grouping_reproducible():
    a, b = random_grouping(25, 5, seed=7), random_grouping(25, 5, seed=7)
    assert np.array_equal(a.assignment, b.assignment)
    assert np.bincount(a.assignment).tolist() == [5] * 5
    assert not np.array_equal(a.assignment, random_grouping(25, 5, seed=8).assignment)


def test_random_grouping_rejects_too_many_groups():
    with pytest.raises(ValueError):
        random_grouping(3, 4, seed=0)


def test_grouping_validation():
    with pytest.raises(ValueError):
        Grouping(np.array([0, 2]), 3)  # group 1 empty
    with pytest.raises(ValueError):
        Grouping(np.array([0, 3]), 2)


def test_augment_examples():
    assert augment(one_group(2), [1, 3]).tolist() == [1, 3, 4]
    assert augment(one_group(2), [0, 0]).tolist() == [0, 0, 0]
    g = Grouping(np.array([0, 0, 1]), 2)
    assert augment(g, [1, 2, 5]).tolist() == [1, 2, 5, 3, 5]
    with pytest.raises(ValueError):
        augment(g, [1, 2])


def test_score_examples():
    g = one_group(2)
    assert score(g, [1, 3], [1, 3]) == 0
    assert score(g, [1, 3], [2, 1]) == 2
    with pytest.raises(ValueError):
        score(g, [1, 3], [1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 20), min_size=3, max_size=3), st.lists(st.floats(0, 20), min_size=3, max_size=3),
       st.floats(0, 5))
def test_score_positive_homogeneity(u, uh, t):
    g = Grouping(np.array([0, 0, 1]), 2)
    assert score(g, np.multiply(t, u), np.multiply(t, uh)) == pytest.approx(t * score(g, u, uh), abs=1e-9)


# -- quantile / correction -------------------------------------------------------

def test_empirical_quantile_examples():
    assert empirical_quantile([1, 2, 3, 4, 5], 0.4) == 3
    assert empirical_quantile([5, 4, 3, 2, 1], 0.99) == 1
    assert all(empirical_quantile([2.5] * 7, a) == 2.5 for a in (0.01, 0.3, 0.9))
    with pytest.raises(ValueError):
        empirical_quantile([], 0.1)


def linear_scan_quantile(scores, alpha):
    s = sorted(scores)
    m = len(s)
    for q in s:
        if sum(v <= q for v in s) / m >= 1 - alpha:
            return q


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.integers(0, 30).map(float), min_size=1, max_size=40), st.floats(0.001, 0.999))
def test_empirical_quantile_matches_linear_scan(scores, alpha):
    assert empirical_quantile(scores, alpha) == linear_scan_quantile(scores, alpha)


def closed_form(gamma, m):
    return 2 * (3 + 8 * gamma) ** (1 / 3) * (3 + math.log(m) / (2 * math.log(2))) ** (2 / 3) / m ** (1 / 3)


def test_mixing_correction_values():
    assert mixing_correction(0, 10**6) == pytest.approx(0.159, abs=5e-4)
    assert mixing_correction(0, 200) > 1
    vals = [mixing_correction(0, m) for m in (10**2, 10**3, 10**4)]
    assert vals[0] > vals[1] > vals[2]
    for g in (0, 1):
        for m in (10**2, 10**3, 10**6):
            assert mixing_correction(g, m) == pytest.approx(closed_form(g, m), abs=1e-12)


# -- set builders ----------------------------------------------------------------

def test_grouped_zero_quantile_collapses_to_forecast():
    cal = CalibrationSet(np.ones((4, 2)), np.ones((4, 2)))
    s = build_grouped_set(cal, one_group(2), [2.0, 3.0], 0.1)
    assert s.L.tolist() == s.U.tolist() == [2.0, 3.0, 5.0]


def test_grouped_quantile_example():
    cal = cal_from_residuals([1, 2, 3, 4, 5])
    s = build_grouped_set(cal, one_group(1), [2.0], 0.4)
    assert s.quantile == 3
    assert s.seg_L[0] == 0 and s.seg_U[0] == 5
    assert s.group_L[0] == 0 and s.group_U[0] == 5


def test_grouped_correction_vacuous_at_small_m():
    rng = np.random.default_rng(0)
    res = rng.normal(0, 2, size=(200, 3))
    cal = cal_from_residuals(res, center=20.0)
    g = Grouping(np.array([0, 0, 1]), 2)
    s = build_grouped_set(cal, g, [20.0] * 3, 0.4, apply_correction=True, gamma_mix=0.0)
    scores = [score(g, cal.u[k], cal.u_hat[k]) for k in range(200)]
    assert s.quantile == max(scores)


def test_bonferroni_examples():
    res = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])
    cal = cal_from_residuals(res)
    b = build_bonferroni_set(cal, [10.0], 0.2)
    g = build_grouped_set(cal, Grouping.none(1), [10.0], 0.2)
    assert g.mode == "box" and np.array_equal(b.L, g.L) and np.array_equal(b.U, g.U)
    perfect = build_bonferroni_set(CalibrationSet(np.ones((5, 2)), np.ones((5, 2))), [1.5, 2.5], 0.1)
    assert perfect.L.tolist() == perfect.U.tolist() == [1.5, 2.5]
    two = build_bonferroni_set(cal_from_residuals(np.column_stack([np.arange(1, 6)] * 2)), [10.0, 10.0], 0.2)
    assert two.U.tolist() == [15.0, 15.0]


def test_maxrank_single_segment_is_split_conformal():
    res = np.array([0.5, 2.0, 1.0, 4.0, 3.0, 0.1, 2.5, 1.7, 0.9])
    m = res.size
    for alpha in (0.1, 0.3, 0.5):
        s = build_maxrank_set(cal_from_residuals(res), [10.0], alpha)
        k = min(math.ceil((1 - alpha) * (m + 1)), m)
        assert s.quantile[0] == pytest.approx(np.sort(res)[k - 1])


def test_maxrank_identical_residuals():
    cal = cal_from_residuals(np.full((6, 3), 1.5))
    for alpha in (0.1, 0.5):
        assert np.all(build_maxrank_set(cal, [10.0] * 3, alpha).quantile == 1.5)


def test_maxrank_anti_ranked_follows_postcondition():
    # s_k = (5, 4, 3, 4, 5) -> sorted (3, 4, 4, 5, 5); r* = ceil(0.6 * 6) = 4 -> 4th smallest s = 5
    res = np.column_stack([np.arange(1, 6), np.arange(5, 0, -1)]).astype(float)
    s = build_maxrank_set(cal_from_residuals(res), [10.0, 10.0], 0.4)
    assert s.quantile.tolist() == [5.0, 5.0]


def test_ci_examples():
    const = build_ci_set(cal_from_residuals(np.full((4, 2), 2.0)), [10.0, 10.0], 0.1)
    assert const.quantile.tolist() == [2.0, 2.0]
    half = build_ci_set(cal_from_residuals(np.array([0.0, 2.0, 1.0])), [10.0], 0.5)
    assert half.quantile[0] == pytest.approx(1.0)
    s = build_ci_set(cal_from_residuals(np.array([0.0, 2.0])), [10.0], 0.05)
    assert s.quantile[0] == pytest.approx(1 + Z_95 * math.sqrt(2), abs=1e-8)
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-9)


# -- containment / invariants ----------------------------------------------------

def test_contains_examples():
    cal = cal_from_residuals(np.array([[1.0, 2.0], [2.0, 1.0]]))
    s = build_grouped_set(cal, one_group(2), [3.0, 4.0], 0.1)
    assert contains(s, [3.0, 4.0])
    g = UncertaintySet(one_group(2), [0, 0, 0], [3, 3, 4])
    assert not contains(g, [3, 3])
    box = UncertaintySet(one_group(2), [0, 0], [3, 3], mode="box")
    assert contains(box, [3, 3])


def test_set_validation():
    with pytest.raises(ValueError):
        UncertaintySet(one_group(2), [0, 2, 0], [1, 1, 4])
    with pytest.raises(ValueError):
        UncertaintySet(one_group(2), [2, 2, 0], [3, 3, 3])  # group cap below segment floors


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_grouped_set_nested_in_its_segment_box(seed):
    rng = np.random.default_rng(seed)
    n = 4
    res = rng.normal(0, 1.5, size=(30, n))
    g = Grouping(np.array([0, 0, 1, 1]), 2)
    s = build_grouped_set(cal_from_residuals(res, 5.0), g, rng.uniform(2, 6, n), 0.2)
    box = UncertaintySet(g, s.seg_L, s.seg_U, mode="box")
    for _ in range(50):
        u = rng.uniform(0, 12, n)
        if contains(s, u):
            assert contains(box, u)


def pipeline(seed, rho, n_test):
    data = generate_synthetic(SyntheticConfig(seed=seed, rho=rho, n_test=n_test))
    model = fit_poisson_arrays(*data.design(data.train))
    n = data.config.n
    cal = CalibrationSet(data.counts[data.cal].astype(float),
                         predict_many(model, data.design(data.cal)[0]).reshape(-1, n))
    tests = [(predict_many(model, data.covariates(t)), data.counts[t].astype(float))
             for t in range(data.test.start, data.test.stop)]
    return data, cal, tests


def test_coverage_monotone_in_alpha():
    data, cal, tests = pipeline(3, 0.4, 200)
    rates = []
    for alpha in (0.3, 0.2, 0.1, 0.05):
        rates.append(np.mean([contains(build_grouped_set(cal, data.grouping, uh, alpha), u) for uh, u in tests]))
    assert all(a <= b for a, b in zip(rates, rates[1:]))


def test_exchangeable_coverage():
    alpha = 0.1
    data, cal, tests = pipeline(12, 0.0, 500)
    rate = np.mean([contains(build_grouped_set(cal, data.grouping, uh, alpha), u) for uh, u in tests])
    assert rate >= 1 - alpha - 3 * math.sqrt(alpha * (1 - alpha) / 500)


def test_project_center():
    box = UncertaintySet(one_group(2), [0, 0], [2, 4], mode="box")
    assert project_center(box).tolist() == [1.0, 2.0]
    tight = UncertaintySet(one_group(2), [0, 0, 0], [2, 4, 1])
    c = project_center(tight)
    assert contains(tight, c, tol=1e-7)
    assert project_center(tight, engine="highs").sum() == pytest.approx(c.sum(), abs=1e-7)


def test_set_json_and_calibration_csv_round_trip(tmp_path):
    cal = cal_from_residuals(np.array([[1.0, -2.0], [0.5, 1.0], [-1.0, 0.0]]))
    s = build_grouped_set(cal, one_group(2), [3.0, 4.0], 0.3)
    path = tmp_path / "set.json"
    s.to_json(path)
    back = UncertaintySet.from_json(path)
    assert back.mode == s.mode and np.array_equal(back.L, s.L) and np.array_equal(back.U, s.U)
    assert np.array_equal(back.grouping.assignment, s.grouping.assignment)
    write_calibration_csv(tmp_path / "cal.csv", cal)
    assert (tmp_path / "cal.csv").read_text().splitlines()[0] == "time,segment,u,u_hat"
    again = read_calibration_csv(tmp_path / "cal.csv")
    assert np.array_equal(again.u, cal.u) and np.array_equal(again.u_hat, cal.u_hat)

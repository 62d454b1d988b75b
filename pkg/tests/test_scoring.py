import dataclasses

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from tendency.bookings import BookingConfig, gen_synthetic_bookings, preprocess
from tendency.features import derive
from tendency.prediction import predict_proba, prepare_splits, train_logistic
from tendency.scoring import (
    RatioTables, ScoreConfig, ScoreRequest, logistic_score, logistic_scores, lpr_ratio_score, rank_candidates,
    read_requests, score_batch,
)

DGH, PGH = "w21z7a", "w21z7b"
RAW = ScoreConfig(smoothing="none")


def _table(keys, rows):
    """rows: list of (key tuple, late, total)."""
    frame = pd.DataFrame([k for k, _, _ in rows], columns=keys)
    frame["total_bookings"] = [t for _, _, t in rows]
    frame["lpr_pct"] = [100.0 * l / t for _, l, t in rows]
    return frame


def _tables(grid_d, grid_p, drivers):
    """drivers: {driver_id: ((late, total) at DGH, (late, total) at PGH)}."""
    return {
        "driverGh": _table(["driverGh"], [((DGH,), *grid_d)]),
        "pickupGh": _table(["pickupGh"], [((PGH,), *grid_p)]),
        "driver_driverGh": _table(["driver_id", "driverGh"], [((d, DGH), *v[0]) for d, v in drivers.items()]),
        "driver_pickupGh": _table(["driver_id", "pickupGh"], [((d, PGH), *v[1]) for d, v in drivers.items()]),
    }


def _req(d="d1"):
    return ScoreRequest(d, DGH, PGH)


def test_equal_lpr_scores_one():
    t = _tables((20, 100), (30, 100), {"d1": ((2, 10), (3, 10))})
    assert lpr_ratio_score(_req(), t, RAW) == pytest.approx(1.0)


def test_raw_formula():
    t = _tables((20, 100), (30, 100), {"d1": ((1, 10), (3, 20))})
    assert lpr_ratio_score(_req(), t, RAW) == pytest.approx(2.0)


def test_laplace_value():
    t = _tables((20, 100), (20, 100), {"d1": ((0, 10), (0, 10))})
    assert lpr_ratio_score(_req(), t) == pytest.approx(2.4706, abs=1e-4)
    assert lpr_ratio_score(_req(), t) == pytest.approx((21 / 102) / (1 / 12))


def test_raw_floor_on_zero_lpr():
    t = _tables((20, 100), (20, 100), {"d1": ((0, 10), (0, 10))})
    assert lpr_ratio_score(_req(), t, RAW) == pytest.approx(20.0 / 0.5)


def test_missing_grid_names_geohash():
    t = _tables((20, 100), (30, 100), {"d1": ((2, 10), (3, 10))})
    with pytest.raises(KeyError, match="zzzzzz"):
        lpr_ratio_score(ScoreRequest("d1", "zzzzzz", PGH), t)
    with pytest.raises(KeyError, match="yyyyyy"):
        lpr_ratio_score(ScoreRequest("d1", DGH, "yyyyyy"), t)


@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 9), st.integers(1, 9), st.integers(2, 3))
def test_scale_invariance(gd, gp, od, op, c):
    base = _tables((gd, 1000), (gp, 1000), {"d1": ((od, 100), (op, 100))})
    scaled = _tables((c * gd, 1000), (c * gp, 1000), {"d1": ((c * od, 100), (c * op, 100))})
    assert lpr_ratio_score(_req(), scaled, RAW) == pytest.approx(lpr_ratio_score(_req(), base, RAW), rel=1e-12)


@given(st.integers(1, 50), st.integers(1, 98))
def test_strictly_decreasing_in_own_lpr(grid_late, own_late):
    def score(k):
        return lpr_ratio_score(_req(), _tables((grid_late, 100), (grid_late, 100), {"d1": ((k, 100), (5, 100))}), RAW)

    assert score(own_late) > score(own_late + 1)


def test_unqualified_driver_takes_best_qualified_score():
    t = _tables((20, 100), (20, 100), {
        "good": ((1, 10), (1, 10)), "fair": ((2, 10), (2, 10)), "new": ((0, 2), (0, 2)),
    })
    cands = [_req("good"), _req("fair"), _req("new")]
    best = lpr_ratio_score(_req("good"), t)
    assert lpr_ratio_score(_req("new"), t, candidates=cands) == best
    ranked = rank_candidates(cands, "ratio", t)
    assert [c.driver_id for c in ranked] == ["good", "new", "fair"]
    assert [c.qualified for c in ranked] == [True, False, True]


def test_no_qualified_candidate_scores_neutral():
    t = _tables((20, 100), (20, 100), {"new": ((0, 2), (0, 2))})
    assert lpr_ratio_score(_req("new"), t) == 1.0
    assert lpr_ratio_score(_req("ghost"), t, candidates=[_req("new")]) == 1.0


def test_min_bookings_boundary():
    t = _tables((20, 100), (20, 100), {"d1": ((1, 5), (1, 5))})
    rt = RatioTables(t)
    assert rank_candidates([_req()], "ratio", t, ratio_tables=rt)[0].qualified
    assert not rank_candidates([_req()], "ratio", t, cfg=ScoreConfig(min_bookings=6))[0].qualified


def test_config_validation():
    with pytest.raises(ValueError):
        ScoreConfig(smoothing="add-one")
    with pytest.raises(ValueError):
        ScoreConfig(min_bookings=-1)
    with pytest.raises(ValueError):
        ScoreConfig(epsilon=0.0)


# ranking

def test_rank_single_and_order():
    t = _tables((20, 100), (30, 100), {"a": ((2, 10), (3, 10)), "b": ((1, 10), (3, 20))})
    assert [c.driver_id for c in rank_candidates([_req("a")], "ratio", t)] == ["a"]
    ranked = rank_candidates([_req("a"), _req("b")], "ratio", t, cfg=RAW)
    assert [(c.driver_id, round(c.score, 9)) for c in ranked] == [("b", 2.0), ("a", 1.0)]


def test_rank_ties_by_driver_id():
    t = _tables((20, 100), (30, 100), {d: ((2, 10), (3, 10)) for d in ["d10", "d2", "d1"]})
    ranked = rank_candidates([_req("d10"), _req("d2"), _req("d1")], "ratio", t)
    assert [c.driver_id for c in ranked] == ["d1", "d10", "d2"]


@given(st.lists(st.tuples(st.integers(0, 10), st.integers(0, 10)), min_size=1, max_size=12))
def test_rank_is_permutation(lates):
    drivers = {f"d{i}": ((a, 10), (b, 10)) for i, (a, b) in enumerate(lates)}
    t = _tables((20, 100), (30, 100), drivers)
    ranked = rank_candidates([_req(d) for d in drivers], "ratio", t)
    assert sorted(c.driver_id for c in ranked) == sorted(drivers)
    assert all(x.score >= y.score for x, y in zip(ranked, ranked[1:]))


def test_rank_errors():
    t = _tables((20, 100), (30, 100), {"a": ((2, 10), (3, 10))})
    with pytest.raises(ValueError):
        rank_candidates([], "ratio", t)
    with pytest.raises(ValueError, match="pickup"):
        rank_candidates([_req("a"), ScoreRequest("a", DGH, "other1")], "ratio", t)
    with pytest.raises(ValueError):
        rank_candidates([_req("a")], "nearest", t)
    with pytest.raises(ValueError):
        rank_candidates([_req("a")], "logistic", t)


# logistic mechanism on a synthetic corpus

@pytest.fixture(scope="module")
def corpus():
    df, truth = gen_synthetic_bookings(BookingConfig(n_bookings=8000), seed=2)
    d = derive(preprocess(df)[0]).reset_index(drop=True)
    train, _, _, tables = prepare_splits(d, seed=2, aggregate_source="all")
    return d, truth, tables, train_logistic(train), train


def _requests_for(d):
    return [ScoreRequest(r.driver_id, r.driverGh, r.pickupGh, r.dow, int(r.hourgroup)) for r in d.itertuples()]


def test_zero_model_scores_half(corpus):
    d, _, tables, model, _ = corpus
    zero = dataclasses.replace(model, bias=0.0, weights=np.zeros_like(model.weights))
    assert logistic_score(_requests_for(d.iloc[:1])[0], zero, tables) == 0.5


def test_logistic_matches_training_row(corpus):
    d, _, tables, model, train = corpus
    rows = d.iloc[train.row_ids[:25]]
    scores = logistic_scores(_requests_for(rows), model, tables)
    np.testing.assert_allclose(scores, 1.0 - predict_proba(model, train.X[:25]), rtol=0, atol=1e-15)
    assert np.all((scores > 0) & (scores < 1))


def test_logistic_feature_mismatch(corpus):
    d, _, tables, model, _ = corpus
    bad = dataclasses.replace(model, feature_names=list(reversed(model.feature_names)))
    with pytest.raises(ValueError, match="feature"):
        logistic_score(_requests_for(d.iloc[:1])[0], bad, tables)


def test_logistic_prefers_skilled_drivers(corpus):
    d, truth, tables, model, _ = corpus
    skill = pd.Series(truth.skill)
    scores = pd.Series(logistic_scores(_requests_for(d), model, tables), index=d["driver_id"])
    per_driver = scores.groupby(level=0).mean()
    top = per_driver[skill[skill >= skill.quantile(0.9)].index].mean()
    bottom = per_driver[skill[skill <= skill.quantile(0.1)].index].mean()
    assert top > bottom


def test_batch_scoring_roundtrip(tmp_path, corpus):
    d, _, tables, model, _ = corpus
    sub = d.iloc[:30]
    path = tmp_path / "req.csv"
    sub[["driver_id", "driverGh", "pickupGh", "dow", "hourgroup"]].to_csv(path, index=False)
    reqs = read_requests(path)
    assert len(reqs) == 30
    out = score_batch(reqs, "logistic", tables, model=model)
    assert list(out.columns) == ["driver_id", "score", "mechanism", "qualified"]
    assert len(out) == 30 and set(out["mechanism"]) == {"logistic"}
    (tmp_path / "bad.csv").write_text("driver_id,driverGh,pickupGh,dow,hourgroup\nd1,a,b,monday,1\n")
    with pytest.raises(ValueError, match="line 2"):
        read_requests(tmp_path / "bad.csv")

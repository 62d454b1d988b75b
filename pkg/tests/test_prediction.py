import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.metrics import mutual_info_score

from conftest import make_bookings
from tendency.bookings import BookingConfig, gen_synthetic_bookings, preprocess
from tendency.features import GROUPINGS, aggregate_all, derive
from tendency.prediction import (
    Evaluation, LabeledDataset, LogisticModel, assemble_dataset, balance_split, confusion, discretize,
    evaluate, feature_names, load_model, loss_and_grad, mrmr_rank, mutual_information, predict_proba,
    prepare_splits, save_model, train_logistic,
)


@pytest.fixture(scope="module")
def derived():
    df, _ = gen_synthetic_bookings(BookingConfig(n_bookings=3000), seed=5)
    return derive(preprocess(df)[0]).reset_index(drop=True)


def _toy(X, y):
    X = np.asarray(X, dtype=float)
    return LabeledDataset([f"f{j}" for j in range(X.shape[1])], X, np.asarray(y, dtype=np.int64))


def _zero_model(p):
    return LogisticModel([f"f{j}" for j in range(p)], 0.0, np.zeros(p), np.zeros(p), np.ones(p), np.zeros(p))


# dataset assembly

def test_feature_layout():
    names = feature_names()
    assert len(names) == 9 + 6 * len(GROUPINGS)
    assert len(set(names)) == len(names)
    assert "driverGh__lpr_pct" in names and "pickupGh__missing" in names


def test_one_row_per_booking(derived):
    ds = assemble_dataset(derived, aggregate_all(derived))
    assert ds.X.shape == (len(derived), len(feature_names()))
    assert np.isfinite(ds.X).all()
    assert ds.y.tolist() == derived["is_late_pickup"].tolist()


def test_all_mode_lpr_matches_recount(derived):
    ds = assemble_dataset(derived, aggregate_all(derived))
    col = ds.feature_names.index("driver_pickupGh__lpr_pct")
    expect = 100.0 * derived.groupby(["driver_id", "pickupGh"])["is_late_pickup"].transform("mean")
    np.testing.assert_allclose(ds.X[:, col], expect.to_numpy(), rtol=1e-12)


def test_missing_lookup_uses_fill_and_flag(derived):
    tables = aggregate_all(derived)
    ds = assemble_dataset(derived, tables)
    fresh = derive(make_bookings([dict(driver_id="newcomer")]))
    one = assemble_dataset(fresh, tables, fill_values=ds.fill_values)
    names = one.feature_names
    assert one.X[0, names.index("driver__missing")] == 1.0
    j = names.index("driver__lpr_pct")
    assert one.X[0, j] == ds.fill_values[j]
    assert ds.fill_values[j] == pytest.approx(ds.X[:, j].mean())


def test_leave_one_out_excludes_own_label():
    rows = [dict(ata_s=1000.0), dict(), dict(), dict()]
    d = derive(make_bookings(rows))
    ds = assemble_dataset(d, aggregate_all(d), exclude_self=True)
    j = ds.feature_names.index("driver__lpr_pct")
    assert ds.X[:, j].tolist() == pytest.approx([0.0, 100 / 3, 100 / 3, 100 / 3])
    assert ds.X[:, ds.feature_names.index("driver__total_bookings")].tolist() == [3.0] * 4


def test_leave_one_out_singleton_is_missing():
    d = derive(make_bookings([dict(driver_id="a"), dict(driver_id="b")]))
    ds = assemble_dataset(d, aggregate_all(d), exclude_self=True)
    assert ds.X[:, ds.feature_names.index("driver__missing")].tolist() == [1.0, 1.0]


# balanced split

def _imbalanced(n_pos=100, n_neg=900):
    y = np.r_[np.ones(n_pos), np.zeros(n_neg)].astype(np.int64)
    return _toy(np.arange(len(y))[:, None], y)


def test_balance_split_sizes():
    tr, te, va = balance_split(_imbalanced(), seed=0)
    assert (len(tr), len(te), len(va)) == (128, 40, 32)
    for part in (tr, te, va):
        assert 0.49 <= part.y.mean() <= 0.51


def test_balance_split_disjoint_and_deterministic():
    a = balance_split(_imbalanced(), seed=4)
    b = balance_split(_imbalanced(), seed=4)
    ids = [set(p.X[:, 0].astype(int)) for p in a]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    for p, q in zip(a, b):
        assert p.X.tolist() == q.X.tolist()
    assert set(range(100)) <= set().union(*ids)


def test_balance_split_needs_both_classes():
    with pytest.raises(ValueError):
        balance_split(_toy(np.zeros((5, 1)), np.ones(5)))


@pytest.mark.parametrize("source", ["all", "train_only"])
def test_prepare_splits(derived, source):
    tr, te, va, tables = prepare_splits(derived, seed=1, aggregate_source=source)
    ids = [set(p.row_ids.tolist()) for p in (tr, te, va)]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    if source == "train_only":
        n = aggregate_all(derived.drop(index=list(ids[1] | ids[2])))["driver"]["total_bookings"].sum()
        assert tables["driver"]["total_bookings"].sum() == n
    np.testing.assert_array_equal(te.fill_values, tr.fill_values)
    with pytest.raises(ValueError):
        prepare_splits(derived, aggregate_source="bogus")


# logistic regression

def test_separable_toy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    X[:, 0] += np.where(y == 1, 0.5, -0.5)
    X[:, 1] += np.where(y == 1, 0.5, -0.5)
    model = train_logistic(_toy(X, y), l2=0.01)
    assert evaluate(model, _toy(X, y)).accuracy == 1.0


def test_noise_gives_small_weights():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(4000, 3))
    y = rng.integers(0, 2, 4000)
    model = train_logistic(_toy(X, y))
    assert np.all(np.abs(model.weights) < 0.05)
    assert abs(evaluate(model, _toy(X, y)).accuracy - 0.5) < 0.05


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(50, 4))
    y = rng.integers(0, 2, 50).astype(float)
    params = rng.normal(size=5)
    _, grad = loss_and_grad(params, Z, y, 1e-2)
    h = 1e-6
    for k in range(5):
        e = np.zeros(5)
        e[k] = h
        fd = (loss_and_grad(params + e, Z, y, 1e-2)[0] - loss_and_grad(params - e, Z, y, 1e-2)[0]) / (2 * h)
        assert abs(fd - grad[k]) / max(abs(grad[k]), 1e-8) < 1e-5


def test_loss_never_increases():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(300, 5))
    y = (X @ rng.normal(size=5) + rng.normal(size=300) > 0).astype(int)
    hist = train_logistic(_toy(X, y)).loss_history
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert hist[0] == pytest.approx(np.log(2))


def test_affine_feature_transform_leaves_predictions():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 3))
    y = (X[:, 0] - X[:, 2] + rng.normal(size=300) > 0).astype(int)
    p1 = predict_proba(train_logistic(_toy(X, y)), X)
    X2 = X * np.array([3.0, 0.01, 250.0]) + np.array([-7.0, 40.0, 1e3])
    p2 = predict_proba(train_logistic(_toy(X2, y)), X2)
    assert np.max(np.abs(p1 - p2)) < 1e-9


def test_constant_feature_is_ignored():
    rng = np.random.default_rng(5)
    X = np.column_stack([rng.normal(size=100), np.full(100, 3.0)])
    y = (X[:, 0] > 0).astype(int)
    model = train_logistic(_toy(X, y))
    assert model.std[1] == 0 and model.weights[1] == 0


def test_predict_proba_values():
    m = _zero_model(3)
    assert predict_proba(m, [1.0, -2.0, 5.0]) == 0.5
    m.weights = np.array([np.log(3.0), 0.0, 0.0])
    assert predict_proba(m, [1.0, 0.0, 0.0]) == pytest.approx(0.75)
    p = predict_proba(m, np.c_[np.linspace(-3, 3, 20), np.zeros((20, 2))])
    assert np.all(np.diff(p) > 0)
    with pytest.raises(ValueError, match="width"):
        predict_proba(m, [1.0, 2.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(-5, 5))
def test_predict_proba_in_unit_interval(xs, w):
    m = _zero_model(1)
    m.weights = np.array([w])
    p = predict_proba(m, np.array(xs)[:, None])
    assert np.all((p > 0) & (p < 1))


def test_evaluate_perfect_and_constant():
    m = _zero_model(1)
    m.weights = np.array([50.0])
    ds = _toy([[1.0], [2.0], [-1.0], [-3.0]], [1, 1, 0, 0])
    assert evaluate(m, ds) == Evaluation(tn=2, fp=0, fn=0, tp=2)
    const = _zero_model(1)
    const.bias = 3.0
    assert evaluate(const, ds).accuracy == 0.5


def test_confusion_hand_tally():
    y_true = [1, 0, 1, 1, 0, 0, 1, 0, 1, 0]
    y_pred = [1, 0, 0, 1, 1, 0, 1, 0, 0, 1]
    e = confusion(y_true, y_pred)
    assert (e.tn, e.fp, e.fn, e.tp) == (3, 2, 2, 3)
    assert e.accuracy == 0.6
    with pytest.raises(ValueError):
        confusion([], [])
    with pytest.raises(ValueError):
        evaluate(_zero_model(1), _toy(np.zeros((0, 1)), []))


def test_model_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 3))
    y = (X[:, 1] > 0).astype(int)
    ds = _toy(X, y)
    ds.fill_values = np.array([0.1, 0.2, 1 / 3])
    m = train_logistic(ds)
    save_model(m, tmp_path / "m.txt")
    back = load_model(tmp_path / "m.txt")
    assert back.feature_names == m.feature_names and back.bias == m.bias
    for a in ("weights", "mean", "std", "fill_values"):
        np.testing.assert_array_equal(getattr(back, a), getattr(m, a))
    (tmp_path / "bad.txt").write_text("bias 1\nfeatures 2\nf0 0 1 0 0\n")
    with pytest.raises(ValueError, match="malformed"):
        load_model(tmp_path / "bad.txt")


# mRmR

@given(st.lists(st.integers(0, 4), min_size=1, max_size=60), st.lists(st.integers(0, 3), min_size=1, max_size=60))
def test_mutual_information_matches_oracle(a, b):
    n = min(len(a), len(b))
    assert mutual_information(a[:n], b[:n]) == pytest.approx(mutual_info_score(a[:n], b[:n]), abs=1e-12)


def test_discretize_ties_share_bins():
    x = np.array([0, 0, 0, 0, 1, 2, 3, 4, 5, 6], dtype=float)
    codes = discretize(x, bins=5)
    assert len(set(codes[:4])) == 1
    assert np.all(np.diff(codes[np.argsort(x, kind="stable")]) >= 0)


def _mrmr_data(n=3000, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    cols = {"noise": rng.normal(size=n), "constant": np.full(n, 2.0), "label_copy": y.astype(float)}
    for k, scale in enumerate([0.6, 0.8, 1.0, 1.3]):
        cols[f"signal{k}"] = y + rng.normal(scale=scale, size=n)
    return y, cols


def _ds(y, cols, names):
    return LabeledDataset(list(names), np.column_stack([cols[c] for c in names]), y)


def test_mrmr_label_copy_first():
    y, cols = _mrmr_data()
    ranking = mrmr_rank(_ds(y, cols, ["noise", "signal0", "label_copy", "signal1"]), top_k=4)
    assert ranking[0][0] == "label_copy"
    assert ranking[0][1] == pytest.approx(mutual_info_score(y, y))


def test_mrmr_duplicate_below_independent():
    y, cols = _mrmr_data()
    cols["dup"] = cols["signal0"].copy()
    names = [n for n, _ in mrmr_rank(_ds(y, cols, ["signal0", "dup", "signal1"]), top_k=3)]
    # both copies have equal relevance; the tie goes to the smaller name
    assert names == ["dup", "signal1", "signal0"]


@pytest.mark.parametrize("seed", range(5))
def test_mrmr_noise_last_among_five(seed):
    # signals share only the label, so their pairwise MI stays below their relevance
    y, cols = _mrmr_data(seed=seed)
    ranking = mrmr_rank(_ds(y, cols, ["noise", "signal0", "signal1", "signal2", "signal3"]), top_k=5)
    assert ranking[-1][0] == "noise"


def test_mrmr_constant_feature():
    y, cols = _mrmr_data()
    ranking = dict(mrmr_rank(_ds(y, cols, ["constant", "signal0"]), top_k=2))
    assert ranking["constant"] == 0.0


def test_mrmr_deterministic_and_bounds():
    y, cols = _mrmr_data(seed=1)
    ds = _ds(y, cols, sorted(cols))
    assert mrmr_rank(ds, top_k=4) == mrmr_rank(ds, top_k=4)
    with pytest.raises(ValueError):
        mrmr_rank(ds, top_k=0)
    with pytest.raises(ValueError):
        mrmr_rank(ds, top_k=len(cols) + 1)

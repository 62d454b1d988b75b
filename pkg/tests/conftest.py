import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dissimilarity(rng, n, distinct=True):
    """Symmetric, zero-diagonal, nonnegative matrix; off-diagonal values distinct when asked."""
    m = n * (n - 1) // 2
    vals = rng.permutation(m) + rng.uniform(0.1, 0.9, size=m) if distinct else rng.integers(1, 4, size=m).astype(float)
    d = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    d[iu] = vals
    return d + d.T


def make_bookings(rows):
    """Small booking frame; each row dict overrides the defaults below."""
    import pandas as pd

    base = dict(
        driver_id="d1", accept_ts="2019-04-01T02:00:00Z", driver_lat=1.30, driver_lon=103.85,
        pickup_lat=1.301, pickup_lon=103.851, eta_s=600.0, ata_s=600.0,
        start_ata_s=10.0, end_ata_s=12.0, dist_km=2.0,
    )
    recs = []
    for i, r in enumerate(rows):
        rec = dict(base, booking_id=f"b{i:05d}", **r)
        recs.append(rec)
    df = pd.DataFrame(recs)
    df["accept_ts"] = pd.to_datetime(df["accept_ts"], utc=True)
    df["pickup_ts"] = df["accept_ts"] + pd.to_timedelta(df["ata_s"].clip(lower=0), unit="s")
    from tendency.bookings import COLUMNS

    return df[COLUMNS]


# acceptance results, filled by test_acceptance.py: criterion -> list of (part, ok, detail)
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}
ACCEPTANCE_TOTAL = 9


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_TOTAL + 1):
        parts = ACCEPTANCE.get(n)
        if not parts:
            terminalreporter.write_line(f"criterion {n}: NOT RUN")
            continue
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAIL'} ({text})" for name, good, text in parts)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itocounter.errors import DomainError
from itocounter.paths import (
    SamplePath,
    SeedSpec,
    TimeGrid,
    bridge_refine,
    bridge_refine_ensemble,
    refine_stream,
    sample_wiener,
    scale_path,
    wiener_ensemble,
)


def test_seed_validation():
    with pytest.raises(DomainError):
        SeedSpec(-1)
    with pytest.raises(DomainError):
        SeedSpec(1 << 64)
    assert SeedSpec(3, 4).with_stream(5) == SeedSpec(3, 5)


def test_grid_validation():
    with pytest.raises(DomainError):
        TimeGrid([0.0, 1.0, 1.0])
    with pytest.raises(DomainError):
        TimeGrid([0.5, 1.0])
    g = TimeGrid.uniform(2.0, 8)
    assert g.n_steps == 8 and len(g) == 9 and g.horizon == 2.0
    assert not g.t.flags.writeable


def test_path_starts_at_zero():
    g = TimeGrid.uniform(1.0, 4)
    with pytest.raises(DomainError):
        SamplePath(g, np.ones(5))


def test_same_seed_same_path():
    g = TimeGrid.uniform(1.0, 64)
    a = sample_wiener(g, SeedSpec(7, 3))
    b = sample_wiener(g, SeedSpec(7, 3))
    c = sample_wiener(g, SeedSpec(7, 4))
    np.testing.assert_array_equal(a.w, b.w)
    assert not np.array_equal(a.w, c.w)


def test_ensemble_matches_single_paths():
    g = TimeGrid.uniform(2.0, 100)
    streams = [0, 5, 2, 99, (1 << 63) + 1]
    ens = wiener_ensemble(g, 11, streams)
    for row, s in zip(ens, streams):
        np.testing.assert_array_equal(row, sample_wiener(g, SeedSpec(11, s)).w)


def test_increment_statistics():
    g = TimeGrid.uniform(2.0, 16)
    w = wiener_ensemble(g, 5, range(20000))
    dw = np.diff(w, axis=1)
    assert abs(dw.mean()) < 4 * np.sqrt(g.dt[0] / dw.size)
    assert np.var(w[:, -1]) == pytest.approx(2.0, rel=0.05)
    # increments are uncorrelated
    assert abs(np.corrcoef(dw[:, 0], dw[:, 1])[0, 1]) < 0.05


def test_bridge_keeps_existing_points():
    g = TimeGrid.uniform(1.0, 32)
    p = sample_wiener(g, SeedSpec(1, 0))
    r = bridge_refine(p, SeedSpec(1, refine_stream(0, 1)))
    assert r.grid.n_steps == 64
    np.testing.assert_array_equal(r.w[::2], p.w)
    np.testing.assert_array_equal(r.t[::2], p.t)


def test_bridge_midpoint_law():
    # variance of a bridge midpoint given both ends is dt / 4
    g = TimeGrid.uniform(1.0, 1)
    n = 100_000
    refined = bridge_refine_ensemble(g, np.zeros((n, 2)), 3, range(n))
    se = 0.25 * np.sqrt(2.0 / (n - 1))
    assert abs(np.var(refined[:, 1], ddof=1) - 0.25) < 3 * se


def test_bridge_refined_path_has_wiener_increments():
    g = TimeGrid.uniform(1.0, 4)
    w = wiener_ensemble(g, 9, range(20000))
    fine = bridge_refine_ensemble(g, w, 9, [refine_stream(s, 1) for s in range(20000)])
    dw = np.diff(fine, axis=1)
    np.testing.assert_allclose(dw.var(axis=0), 0.125, rtol=0.05)


def test_bridge_ensemble_matches_single():
    g = TimeGrid.uniform(1.0, 16)
    streams = [3, 8]
    w = wiener_ensemble(g, 2, streams)
    fine = bridge_refine_ensemble(g, w, 2, [refine_stream(s, 1) for s in streams])
    for row, s in zip(fine, streams):
        single = bridge_refine(sample_wiener(g, SeedSpec(2, s)), SeedSpec(2, refine_stream(s, 1)))
        np.testing.assert_array_equal(row, single.w)


def test_scale_and_csv(tmp_path):
    g = TimeGrid.uniform(1.0, 3)
    p = sample_wiener(g, SeedSpec(0))
    np.testing.assert_array_equal(scale_path(p, 2.0).w, 2.0 * p.w)
    with pytest.raises(DomainError):
        scale_path(p, 0.0)
    out = tmp_path / "p.csv"
    p.to_csv(out)
    rows = out.read_text().splitlines()
    assert rows[0] == "t,w" and len(rows) == 5
    assert float(rows[-1].split(",")[1]) == p.w[-1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, (1 << 64) - 1), st.integers(0, (1 << 32) - 1), st.integers(1, 50))
def test_ensemble_property(root, stream, n):
    g = TimeGrid.uniform(1.0, n)
    row = wiener_ensemble(g, root, [stream])[0]
    np.testing.assert_array_equal(row, sample_wiener(g, SeedSpec(root, stream)).w)

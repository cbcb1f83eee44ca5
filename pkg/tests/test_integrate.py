import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itocounter.integrate import (
    compensated_sum,
    constant,
    ito_lemma_residual,
    ito_lemma_residuals,
    ito_left_sum,
    ito_left_sums,
    pathwise_l1_functional,
    pathwise_l2_functional,
    spatial,
    time_left_sum,
    time_left_sums,
)
from itocounter.paths import SamplePath, SeedSpec, TimeGrid, sample_wiener, wiener_ensemble
from itocounter.transform import h


class TestCompensatedSum:
    def test_cancellation(self):
        assert compensated_sum([1e16, 1.0, -1e16]) == 1.0
        assert compensated_sum([0.1] * 10) == math.fsum([0.1] * 10)

    def test_empty_and_single(self):
        assert compensated_sum([]) == 0.0
        assert compensated_sum([2.5]) == 2.5

    def test_rows_match_one_dimensional(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((5, 1001)) * 10.0 ** rng.integers(-8, 8, (5, 1001))
        rows = compensated_sum(x)
        for i in range(5):
            assert rows[i] == compensated_sum(x[i])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(min_value=-1e12, max_value=1e12, allow_nan=False), max_size=300))
    def test_matches_fsum(self, xs):
        assert compensated_sum(xs) == pytest.approx(math.fsum(xs), rel=1e-15, abs=1e-300)


def _path(n=512, stream=0, horizon=1.0):
    return sample_wiener(TimeGrid.uniform(horizon, n), SeedSpec(17, stream))


def test_ito_sum_of_constant_is_endpoint():
    p = _path()
    r = ito_left_sum(p, constant(1.0))
    assert r.value == pytest.approx(p.w[-1], abs=1e-14)
    assert not r.overflow_flag


def test_ito_sum_of_w_identity():
    # sum w_i dw_i = (w_n^2 - sum dw_i^2) / 2 exactly in real arithmetic
    p = _path()
    r = ito_left_sum(p, spatial(lambda w: w))
    qv = math.fsum(np.diff(p.w) ** 2)
    assert r.value == pytest.approx(0.5 * (p.w[-1] ** 2 - qv), abs=1e-12)


def test_time_sum_is_riemann_sum():
    p = _path()
    r = time_left_sum(p, spatial(np.cos))
    assert r.value == pytest.approx(math.fsum(np.cos(p.w[:-1]) * np.diff(p.t)), rel=1e-15)


def test_l1_l2_functionals():
    p = _path()
    assert pathwise_l2_functional(p, spatial(h)).value > 0
    l1 = pathwise_l1_functional(p, spatial(lambda w: -np.abs(w)))
    assert l1.value == pytest.approx(time_left_sum(p, spatial(np.abs)).value)


def test_overflow_flag_from_range_error():
    g = TimeGrid.uniform(1.0, 3)
    p = SamplePath(g, np.array([0.0, 10.0, 40.0, 0.0]))
    r = ito_left_sum(p, spatial(h))
    assert r.overflow_flag and math.isnan(r.value) and r.bad_index == 2


def test_overflow_flag_from_nonfinite():
    g = TimeGrid.uniform(1.0, 3)
    p = SamplePath(g, np.array([0.0, 1.0, 2.0, 3.0]))
    r = time_left_sum(p, spatial(lambda w: np.where(w > 1.5, np.inf, w)))
    assert r.overflow_flag and r.bad_index == 2


def test_ensemble_matches_single():
    g = TimeGrid.uniform(1.0, 300)
    w = wiener_ensemble(g, 17, range(6))
    w[3, 100] = 50.0
    vals, ok = ito_left_sums(g, w, spatial(h))
    tvals, tok = time_left_sums(g, w, spatial(np.cos))
    for i in range(6):
        p = SamplePath(g, w[i])
        single = ito_left_sum(p, spatial(h))
        assert ok[i] == (not single.overflow_flag)
        if ok[i]:
            assert vals[i] == single.value
        assert tvals[i] == time_left_sum(p, spatial(np.cos)).value
    assert not ok[3] and tok.all()


def test_ito_residual_shrinks_with_resolution(table):
    g = TimeGrid.uniform(1.0, 64)
    from itocounter.paths import bridge_refine, refine_stream

    p = sample_wiener(g, SeedSpec(5, 0))
    coarse = []
    for level in range(1, 7):
        coarse.append(abs(ito_lemma_residual(p, table)))
        p = bridge_refine(p, SeedSpec(5, refine_stream(0, level)))
    assert coarse[-1] < coarse[0]


def test_ito_residual_on_constant_path(table):
    # only the drift term survives on w = 0: -T * h'(0) / 2
    for n in (16, 1024):
        g = TimeGrid.uniform(2.0, n)
        r = ito_lemma_residual(SamplePath(g, np.zeros(n + 1)), table)
        assert r == pytest.approx(-2.0 / math.sqrt(math.pi), rel=1e-14)


def test_ito_residuals_ensemble(table):
    g = TimeGrid.uniform(1.0, 128)
    w = wiener_ensemble(g, 4, range(3))
    rs = ito_lemma_residuals(g, w, table)
    for i in range(3):
        assert rs[i] == ito_lemma_residual(SamplePath(g, w[i]), table)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from avgproc.core import (
    EVENT_BLOCK,
    EventLog,
    EventStream,
    InitialDistribution,
    InvalidDistributionError,
    InvalidVertexError,
    OpinionConfig,
    ReplayError,
    RngStream,
    apply_average,
    sample_initial,
)

# vertices are 0-based throughout the package


def test_apply_average_two_point():
    out = apply_average(OpinionConfig([0.0, 1.0]), 0, 1)
    assert out.opinions.tolist() == [0.5, 0.5]


def test_apply_average_self_pair_is_identity():
    cfg = OpinionConfig([3.0, 7.0, 9.0])
    assert apply_average(cfg, 1, 1).opinions.tolist() == [3.0, 7.0, 9.0]


def test_apply_average_arithmetic():
    # first and third vertices average 1 and 5 to 3
    out = apply_average(OpinionConfig([1.0, 3.0, 5.0]), 0, 2)
    assert out.opinions.tolist() == [3.0, 3.0, 3.0]
    out = apply_average(OpinionConfig([1.0, 3.0, 5.0]), 0, 1)
    assert out.opinions.tolist() == [2.0, 2.0, 5.0]


def test_apply_average_does_not_mutate_input():
    cfg = OpinionConfig([0.0, 1.0])
    apply_average(cfg, 0, 1)
    assert cfg.opinions.tolist() == [0.0, 1.0]


@pytest.mark.parametrize("x,y", [(-1, 0), (0, 3), (5, 5)])
def test_apply_average_rejects_bad_vertex(x, y):
    with pytest.raises(InvalidVertexError):
        apply_average(OpinionConfig([0.0, 1.0, 2.0]), x, y)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=20),
    st.data(),
)
def test_apply_average_sum_and_range(values, data):
    cfg = OpinionConfig(values)
    n = len(values)
    x = data.draw(st.integers(0, n - 1))
    y = data.draw(st.integers(0, n - 1))
    out = apply_average(cfg, x, y)
    ulp = np.spacing(max(abs(v) for v in values) or 1.0)
    assert abs(out.opinions.sum() - cfg.opinions.sum()) <= 2 * ulp + 1e-9 * abs(cfg.opinions).sum()
    assert out.opinions.min() >= cfg.opinions.min()
    assert out.opinions.max() <= cfg.opinions.max()


def test_sample_point_mass():
    cfg = sample_initial(InitialDistribution.point_mass(2.5), 4, RngStream(0))
    assert cfg.opinions.tolist() == [2.5] * 4


def test_sample_bernoulli_deterministic():
    d = InitialDistribution.bernoulli(0.5)
    a = sample_initial(d, 100_000, RngStream(11)).opinions
    b = sample_initial(d, 100_000, RngStream(11)).opinions
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1.0}


def test_sample_linear_2x_mean():
    n = 100_000
    v = sample_initial(InitialDistribution.linear_2x(), n, RngStream(5)).opinions
    assert v.min() >= 0 and v.max() <= 1
    sigma = math.sqrt(1 / 18)
    assert abs(v.mean() - 2 / 3) <= 3 * sigma / math.sqrt(n)


def test_sample_linear_2x_ks():
    # three fresh streams allowed by the flaky-test budget
    pvals = []
    for sid in range(3):
        v = sample_initial(InitialDistribution.linear_2x(), 100_000, RngStream(21, sid)).opinions
        pvals.append(stats.kstest(v, lambda u: np.clip(u, 0, 1) ** 2).pvalue)
        if pvals[-1] >= 0.01:
            break
    assert pvals[-1] >= 0.01, pvals


def test_sample_piecewise_ks():
    d = InitialDistribution.parse("pwl:-1/0,0/1,1/0")
    v = sample_initial(d, 50_000, RngStream(3)).opinions
    assert stats.kstest(v, d.cdf).pvalue >= 0.001


@pytest.mark.parametrize(
    "text,kind",
    [
        ("point:1.0", "point_mass"),
        ("ber:0.3", "bernoulli"),
        ("uniform:-1:1", "uniform"),
        ("linear2x", "linear_2x"),
        ("cauchy:2", "cauchy"),
        ("pwl:0/1,1/1", "piecewise_linear_density"),
    ],
)
def test_parse_roundtrip(text, kind):
    d = InitialDistribution.parse(text)
    assert d.kind == kind
    assert InitialDistribution.parse(d.label) == d


@pytest.mark.parametrize("text", ["ber:1.5", "uniform:1:0", "pwl:0/0,1/0", "pwl:1/1,0/1", "nope", "cauchy:-1", "point:"])
def test_parse_rejects(text):
    with pytest.raises(InvalidDistributionError):
        InitialDistribution.parse(text)


@pytest.mark.parametrize("text", ["uniform:-1:2", "linear2x", "pwl:-1/0,0/3,2/1"])
def test_cdf_properties(text):
    d = InitialDistribution.parse(text)
    lo, hi = d.support
    u = np.linspace(lo - 1, hi + 1, 2001)
    F = d.cdf(u)
    assert np.all(np.diff(F) >= -1e-15)
    assert F[0] == 0.0 and F[-1] == 1.0


def test_moments_of_linear_2x():
    d = InitialDistribution.linear_2x()
    assert d.mean() == pytest.approx(2 / 3, abs=1e-14)
    assert d.variance() == pytest.approx(1 / 18, abs=1e-14)


def test_density_midpoint_at_jumps():
    d = InitialDistribution.uniform(0.0, 1.0)
    assert d.density(np.array([0.0, 0.5, 1.0])).tolist() == [0.5, 1.0, 0.5]


def test_rng_streams_reproducible_and_distinct():
    a = RngStream(4, 1).generator("events").random(5)
    b = RngStream(4, 1).generator("events").random(5)
    c = RngStream(4, 2).generator("events").random(5)
    d = RngStream(4, 1).generator("initial").random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_rng_streams_uncorrelated():
    a = RngStream(9, 0).generator().standard_normal(20_000)
    b = RngStream(9, 1).generator().standard_normal(20_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(20_000)


def test_event_stream_blocks():
    waits, xs, ys = next(EventStream(7, RngStream(1)).blocks())
    assert len(waits) == EVENT_BLOCK
    assert np.all(waits > 0)
    assert xs.min() >= 0 and xs.max() < 7 and ys.max() < 7


def test_event_log_record_covers_horizon():
    log = EventLog.record(50, RngStream(2), 3.0)
    assert log.times[-1] <= 3.0
    assert np.all(np.diff(log.times) > 0)
    # rate N clock: about 150 events
    assert 100 < len(log) < 200


def test_event_log_validation():
    with pytest.raises(ReplayError):
        EventLog(3, [0.1, 0.0], [0, 1], [1, 2], 1.0)
    with pytest.raises(ReplayError):
        EventLog(3, [0.1], [0, 1], [1, 2], 1.0)
    with pytest.raises(InvalidVertexError):
        EventLog(3, [0.1], [3], [0], 1.0)

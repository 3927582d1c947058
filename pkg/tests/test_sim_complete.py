import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from scipy import stats
from scipy.linalg import expm

from avgproc.core import (
    EVENT_BLOCK,
    EventStream,
    InitialDistribution,
    OpinionConfig,
    ReplayError,
    RngStream,
    ScheduleError,
)
from avgproc.sim_complete import (
    MissingSnapshotError,
    expected_xj,
    next_event,
    perturbed_replay,
    replay,
    run,
    run_replicas,
    xj_counts,
)

BER = InitialDistribution.bernoulli(0.5)


def _generator_second_moments(n):
    """Generator on E[w (x) w]: (1/N) sum over ordered pairs of (M_xy (x) M_xy - I)."""
    eye = np.eye(n)
    L = np.zeros((n * n, n * n))
    for x, y in itertools.product(range(n), repeat=2):
        M = eye.copy()
        if x != y:
            M[[x, y]] = 0.0
            M[x, x] = M[x, y] = M[y, x] = M[y, y] = 0.5
        L += np.kron(M, M) - np.eye(n * n)
    return L / n


def _variance_form(n):
    # Var = (1/N) sum w_i^2 - (1/N^2) (sum w_i)^2 as a linear functional of w (x) w
    return (np.eye(n) / n - np.ones((n, n)) / n**2).reshape(-1)


def test_three_vertex_oracle_gives_exponential_variance_decay():
    n = 3
    L = _generator_second_moments(n)
    q = _variance_form(n)
    w0 = np.array([0.0, 1.0, 5.0])
    v0 = q @ np.kron(w0, w0)
    for t in (0.3, 1.0, 2.5):
        vt = q @ expm(t * L) @ np.kron(w0, w0)
        assert vt == pytest.approx(v0 * math.exp(-t), rel=1e-12)


def test_three_vertex_simulation_matches_oracle():
    n, t = 3, 0.7
    L = _generator_second_moments(n)
    q = _variance_form(n)
    w0 = np.array([0.0, 1.0, 5.0])
    target = q @ expm(t * L) @ np.kron(w0, w0)
    init = OpinionConfig(w0)
    v = np.array([np.var(run(None, n, t, [t], RngStream(17, r), initial=init).config.opinions) for r in range(4000)])
    assert abs(v.mean() - target) <= 4 * v.std(ddof=1) / math.sqrt(len(v))


def test_single_vertex_events():
    gen = RngStream(0).generator()
    draws = [next_event(1, gen) for _ in range(2000)]
    assert all(x == 0 and y == 0 for _, x, y in draws)
    w = np.array([d[0] for d in draws])
    assert abs(w.mean() - 1.0) <= 3 / math.sqrt(len(w))


def test_next_event_self_pair_fraction():
    gen = RngStream(1).generator()
    k = 200_000
    same = sum(x == y for _, x, y in (next_event(2, gen) for _ in range(k)))
    assert abs(same / k - 0.5) <= 3 * math.sqrt(0.25 / k)


def test_event_stream_waiting_time_mean():
    n = 10_000
    blocks = EventStream(n, RngStream(2)).blocks()
    w = np.concatenate([next(blocks)[0] for _ in range(1_000_000 // EVENT_BLOCK + 1)])[:1_000_000]
    assert abs(w.mean() - 1 / n) <= 3 * (1 / n) / math.sqrt(len(w))


def test_two_vertices_absorb_at_mean():
    r = run(None, 2, 10.0, None, RngStream(7), initial=OpinionConfig([0.0, 1.0]))
    assert r.config.opinions.tolist() == [0.5, 0.5]


def test_point_mass_stays_put():
    r = run(InitialDistribution.point_mass(1.0), 2, 10.0, [5.0], RngStream(7))
    assert r.config.opinions.tolist() == [1.0, 1.0]


def test_conservation_and_range():
    r = run(BER, 10_000, 1.0, [0.25, 0.5, 1.0], RngStream(3))
    s0 = r.initial.opinions.sum()
    for _, c in r.snapshots:
        assert abs(c.opinions.sum() - s0) <= 1e-9 * abs(s0)
        assert c.opinions.min() >= 0.0 and c.opinions.max() <= 1.0


def test_mean_conservation_continuous_data():
    r = run(InitialDistribution.uniform(-3.0, 1.0), 5_000, 2.0, [0.5, 1.0, 2.0], RngStream(4))
    m0 = r.initial.opinions.mean()
    for _, c in r.snapshots:
        assert abs(c.opinions.mean() - m0) <= 1e-9 * (1 + abs(m0))
        assert r.initial.opinions.min() <= c.opinions.min() <= c.opinions.max() <= r.initial.opinions.max()


def test_xi_accounting():
    r = run(BER, 500, 1.0, [0.5, 1.0], RngStream(5))
    assert int(r.xi.sum()) == 2 * (r.n_events - r.n_self_events) + r.n_self_events
    _, xi_half = r.snapshot(0.5)
    assert np.all(r.xi >= xi_half)


def test_run_is_deterministic():
    a = run(BER, 1000, 1.0, [0.5], RngStream(8, 3))
    b = run(BER, 1000, 1.0, [0.5], RngStream(8, 3))
    assert np.array_equal(a.config.opinions, b.config.opinions)
    assert np.array_equal(a.xi, b.xi)


def test_bad_schedule():
    with pytest.raises(ScheduleError):
        run(BER, 10, 1.0, [1.5], RngStream(0))
    with pytest.raises(ScheduleError):
        run(BER, 10, 1.0, [-0.1], RngStream(0))


def test_xj_at_time_zero_and_missing_snapshot():
    r = run(BER, 100, 1.0, [1.0], RngStream(9))
    s = xj_counts(r, 0.0)
    assert s.counts.tolist() == [100]
    assert int(xj_counts(r, 1.0).counts.sum()) == 100
    with pytest.raises(MissingSnapshotError):
        xj_counts(r, 0.5)


def test_expected_xj_values():
    assert expected_xj(10, 0.0, 0) == 10.0
    assert expected_xj(10, 0.0, 3) == 0.0
    mpmath.mp.dps = 40
    for j in range(5):
        lam = 2 * (1 - mpmath.mpf(1) / (2 * 10**4))
        ref = 10**4 * lam**j / mpmath.factorial(j) * mpmath.e ** (-lam)
        assert expected_xj(10**4, 1.0, j) == pytest.approx(float(ref), rel=1e-13)
    # the j = 0 value evaluates to 10^4 e^{-1.9999}
    assert expected_xj(10**4, 1.0, 0) == pytest.approx(1353.4881744, abs=1e-6)


@pytest.fixture(scope="module")
def replicas_1e4():
    return run_replicas(BER, 10_000, 2.0, [0.5, 1.0, 2.0], 31, 100)


def test_xi_single_vertex_mean(replicas_1e4):
    lam = 2 * (1 - 1 / 20_000)
    xi0 = np.array([r.snapshot(1.0)[1][0] for r in replicas_1e4], dtype=float)
    assert abs(xi0.mean() - lam) <= 3 * xi0.std(ddof=1) / math.sqrt(len(xi0))


def test_xj_replica_means(replicas_1e4):
    for j in range(4):
        c = np.array([xj_counts(r, 1.0).counts[j] for r in replicas_1e4], dtype=float)
        assert abs(c.mean() - expected_xj(10_000, 1.0, j)) <= 3 * c.std(ddof=1) / 10


def test_xi_marginal_chi_square():
    lam = 2 * (1 - 1 / 20_000)
    runs = run_replicas(BER, 10_000, 1.0, [1.0], 41, 400)
    xi = np.array([r.snapshot(1.0)[1][0] for r in runs])
    edges = [0, 1, 2, 3, 4, 5]
    obs = [np.sum(xi == k) for k in edges[:-1]] + [np.sum(xi >= edges[-1])]
    p = [stats.poisson.pmf(k, lam) for k in edges[:-1]]
    p.append(1 - sum(p))
    exp = np.array(p) * len(xi)
    assert stats.chisquare(obs, exp).pvalue >= 0.01


def test_variance_decay(replicas_1e4):
    for t in (0.5, 1.0, 2.0):
        v = np.array([np.var(r.snapshot(t)[0].opinions) / np.var(r.initial.opinions) for r in replicas_1e4])
        assert abs(v.mean() - math.exp(-t)) <= 3 * v.std(ddof=1) / math.sqrt(len(v))


def test_virtual_replay_reproduces_run():
    r = run(InitialDistribution.uniform(0, 1), 300, 2.0, [1.0], RngStream(12))
    log = r.event_log()
    w, xi = replay(r.initial, log, 2.0)
    assert np.array_equal(w, r.config.opinions)
    assert np.array_equal(xi, r.xi)
    w1, _ = replay(r.initial, log, 1.0)
    assert np.array_equal(w1, r.snapshot(1.0)[0].opinions)


def test_event_log_spanning_blocks():
    # a rate-N clock with N = 40_000 fires about 120_000 times by t = 3, i.e. two blocks
    r = run(BER, 40_000, 3.0, None, RngStream(13))
    assert r.n_events > EVENT_BLOCK
    w, _ = replay(r.initial, r.event_log(), 3.0)
    assert np.array_equal(w, r.config.opinions)


def test_perturbed_replay_trivial_cases():
    r = run(InitialDistribution.uniform(0, 1), 50, 1.0, None, RngStream(14))
    o, p, _ = perturbed_replay(r, 3, 0.0, 1.0)
    assert o == p
    # a vertex that never interacts before t = 0.001 keeps its shift exactly
    o, p, j = perturbed_replay(r, 3, 0.25, 1e-9)
    assert j == 0 and p - o == Fraction(0.25)


def test_perturbed_replay_bound_small_batch():
    for s in range(50):
        r = run(InitialDistribution.uniform(0, 1), 100, 1.0, None, RngStream(100 + s))
        x = s % 100
        o, p, j = perturbed_replay(r, x, 0.1, 1.0)
        assert p - o > 0
        assert p - o >= Fraction(0.1) / 2**j
        fo, fp, fj = perturbed_replay(r, x, 0.1, 1.0, exact=False)
        assert fj == j and fo == pytest.approx(float(o), abs=1e-12)


def test_perturbed_replay_errors():
    r = run(BER, 20, 1.0, None, RngStream(15))
    with pytest.raises(ReplayError):
        perturbed_replay(r, 0, 0.1, 2.0)
    log = r.event_log()
    with pytest.raises(ReplayError):
        perturbed_replay(log, 0, 0.1, 1.0, initial=OpinionConfig(np.zeros(21)))
    with pytest.raises(ReplayError):
        perturbed_replay(log, 0, 0.1, 1.0)
    with pytest.raises(ReplayError):
        replay(OpinionConfig(np.zeros(21)), log, 1.0)

import math

import numpy as np
import pytest

from avgproc.core import InitialDistribution, InvalidDistributionError, RngStream
from avgproc.limit_atoms import AtomicMeasure, atomic_rhs, atomic_self_convolve, integrate_atoms
from avgproc.sim_complete import run

BER = InitialDistribution.bernoulli(0.5)


def test_from_atoms_maps_to_unit_interval():
    mu = AtomicMeasure.from_atoms([-1.0, 3.0], [0.25, 0.75], 4)
    assert mu.offset == -1.0 and mu.scale == 4.0
    assert mu.masses[0] == 0.25 and mu.masses[16] == 0.75
    assert mu.values[[0, 8, 16]].tolist() == [-1.0, 1.0, 3.0]
    assert mu.mean() == pytest.approx(2.0)
    with pytest.raises(InvalidDistributionError):
        AtomicMeasure.from_atoms([0.0, 0.3, 1.0], [0.3, 0.3, 0.4], 3)
    with pytest.raises(InvalidDistributionError):
        AtomicMeasure.from_distribution(InitialDistribution.linear_2x(), 4)


def test_self_convolve_point_mass():
    mu = AtomicMeasure.from_atoms([0.0, 1.0], [1.0, 0.0], 3)
    conv = atomic_self_convolve(mu)
    assert conv[0] == pytest.approx(1.0) and np.allclose(conv[1:], 0, atol=1e-15)


def test_self_convolve_bernoulli():
    # sums 0, 1, 2 sit at k / 2^J with k = 0, 2^J, 2^{J+1}
    mu = AtomicMeasure.from_distribution(BER, 1)
    assert np.allclose(atomic_self_convolve(mu), [0.25, 0, 0.5, 0, 0.25], atol=1e-15)
    mu0 = AtomicMeasure.from_distribution(BER, 0)
    assert np.allclose(atomic_self_convolve(mu0, "direct"), [0.25, 0.5, 0.25])


def test_self_convolve_total_mass_squares():
    rng = np.random.default_rng(0)
    m = rng.random(33) * 0.05
    mu = AtomicMeasure(5, m)
    assert atomic_self_convolve(mu).sum() == pytest.approx(m.sum() ** 2, rel=1e-12)
    assert np.allclose(atomic_self_convolve(mu, "fft"), atomic_self_convolve(mu, "direct"), atol=1e-15)


def test_rhs_bernoulli():
    mu = AtomicMeasure.from_distribution(BER, 3)
    r, snap = atomic_rhs(mu)
    assert r[0] == pytest.approx(-0.5)
    assert r.sum() == pytest.approx(0.0, abs=1e-15)
    assert snap == 0.0


def test_rhs_mass_law():
    m = np.full(17, 0.02)
    mu = AtomicMeasure(4, m)
    r, _ = atomic_rhs(mu)
    assert r.sum() == pytest.approx(2 * (m.sum() ** 2 - m.sum()), abs=1e-14)


@pytest.mark.parametrize("k", [0, 3, 8])
def test_point_masses_are_stationary(k):
    m = np.zeros(9)
    m[k] = 1.0
    r, _ = atomic_rhs(AtomicMeasure(3, m))
    assert np.max(np.abs(r)) <= 1e-15


def test_odd_half_sums_split_evenly():
    # atoms at 0 and 1/4 at level 2: the half-sum 1/8 splits between 0 and 1/4
    mu = AtomicMeasure(2, [0.5, 0.5, 0.0, 0.0, 0.0])
    r, snap = atomic_rhs(mu)
    # half#(mu*mu) = {0: 1/4 + 1/4, 1/4: 1/4 + 1/4}
    assert np.allclose(r, [0.0, 0.0, 0.0, 0.0, 0.0], atol=1e-15)
    assert snap == pytest.approx(2 * 0.5)


@pytest.fixture(scope="module")
def bernoulli_traj():
    mu0 = AtomicMeasure.from_distribution(BER, 12)
    return mu0, integrate_atoms(mu0, 1e-3, 2.0, [0.5, 1.0, 2.0])


def test_mass_at_zero(bernoulli_traj):
    _, tr = bernoulli_traj
    mu = next(s for s in tr.snapshots if s.time == 1.0)
    assert mu.masses[0] == pytest.approx(1 / (1 + math.e**2), abs=1e-6)
    for s in tr.snapshots:
        assert s.masses[0] == pytest.approx(1 / (1 + math.exp(2 * s.time)), abs=1e-6)


def test_conservation_and_symmetry(bernoulli_traj):
    mu0, tr = bernoulli_traj
    for s in tr.snapshots:
        assert abs(s.total_mass - 1.0) <= 1e-9
        assert abs(s.mean() - mu0.mean()) <= 1e-9
        assert np.max(np.abs(s.masses - s.masses[::-1])) <= 1e-12
        assert s.masses.min() >= 0


def test_snapped_mass_shrinks_with_level():
    snapped = []
    for J in (8, 9, 10):
        mu0 = AtomicMeasure.from_distribution(BER, J)
        snapped.append(integrate_atoms(mu0, 1e-3, 1.0).snapshots[-1].snapped_mass_total)
    assert snapped[0] > snapped[1] > snapped[2] > 0


def test_snapshot_schedule():
    mu0 = AtomicMeasure.from_distribution(BER, 4)
    tr = integrate_atoms(mu0, 1e-3, 0.0105, [0.005])
    assert [s.time for s in tr.snapshots] == [0.005, 0.0105]
    with pytest.raises(ValueError):
        integrate_atoms(mu0, 1e-2, 0.1)


def test_as_empirical_roundtrip():
    mu = AtomicMeasure.from_atoms([2.0, 4.0], [0.5, 0.5], 2)
    e = mu.as_empirical()
    assert e.values.tolist() == [2.0, 4.0]
    assert e.weights.tolist() == [0.5, 0.5]


@pytest.mark.slow
def test_simulator_agreement_zero_fraction():
    target = 1 / (1 + math.e**2)
    n = 100_000
    r = run(BER, n, 1.0, [1.0], RngStream(77))
    frac = float(np.mean(r.config.opinions == 0.0))
    assert abs(frac - target) <= 3 * math.sqrt(target * (1 - target) / n)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stationkit.errors import DimensionTooSmall, InvalidArgument
from stationkit.hardchain import (
    PHI_SUP,
    ChainOracle,
    ChainPartition,
    chain_gradient,
    chain_potential,
    chain_value,
    concentration_probe,
    embed_chain_vars,
    make_scaled_oracle,
    min_dimension,
    phi,
    phi_prime,
    progress,
    psi,
    psi_prime,
    sample_chain_configs,
    sample_partition,
    scaled_parameters,
    unsquash,
)
from stationkit.oracle import verify_gradient


def test_component_values():
    assert psi(0.5) == 0 and psi_prime(0.5) == 0
    assert psi(1.0) == 1.0
    assert math.isclose(phi(0.0), math.sqrt(2 * math.pi * math.e) / 2, abs_tol=1e-12)
    assert math.isclose(phi_prime(0.0), math.sqrt(math.e))
    assert phi(-40.0) < 1e-300 and math.isclose(phi(40.0), PHI_SUP)
    xs = np.linspace(0.55, 0.6, 7)
    fd = (psi(xs + 1e-7) - psi(xs - 1e-7)) / 2e-7
    assert np.allclose(fd, psi_prime(xs), rtol=1e-5, atol=1e-12)


def test_psi_prime_sup():
    xs = np.linspace(0.5, 3, 200001)
    assert psi_prime(xs).max() <= math.sqrt(54 / math.e)
    assert psi_prime(xs).max() > math.sqrt(54 / math.e) - 1e-6


def test_sample_partition():
    p = sample_partition(6, 2, 0)
    assert p.r == 1 and p.n_parts == 3
    assert sorted(np.concatenate(p.parts).tolist()) == list(range(6))
    assert p == sample_partition(6, 2, 0)
    with pytest.raises(InvalidArgument):
        sample_partition(4, 3, 0)
    with pytest.raises(InvalidArgument):
        sample_partition(4, 2, 0)


def test_partition_outcomes_all_reachable():
    seen = {tuple(tuple(part.tolist()) for part in sample_partition(6, 2, s).parts) for s in range(3000)}
    # 6! / (2!)^3 = 90 ordered partitions into three labelled pairs
    assert len(seen) == 90


def test_partition_json_roundtrip():
    p = sample_partition(12, 3, 5)
    assert ChainPartition.from_json(p.to_json()) == p


def test_values_at_origin():
    o = ChainOracle(sample_partition(40, 4, 1))
    assert math.isclose(chain_value(o, np.zeros(40)), -PHI_SUP / 2, rel_tol=1e-14)
    g = chain_gradient(o, np.zeros(40))
    # only P_1 coordinates feel -Psi(1) Phi'(0) / sqrt(d0)
    expected = np.zeros(40)
    expected[o.partition.parts[0]] = -math.sqrt(math.e) / 2
    assert np.allclose(g, expected)


def test_value_gap_one_sided():
    rng = np.random.default_rng(0)
    r = 4
    X = np.concatenate([sample_chain_configs(r, 10**5, rng), rng.uniform(-6, 6, (10**5, r + 1))])
    assert chain_potential(X).min() >= chain_potential(np.zeros((1, r + 1)))[0] - 12 * r


def test_rho_contracts():
    o = ChainOracle(sample_partition(30, 3, 2))
    x = np.random.default_rng(1).standard_normal((50, 30)) * 300
    y, _ = o.squash(x)
    n = np.linalg.norm(x, axis=1)
    assert np.all(np.linalg.norm(y, axis=1) < np.minimum(n, o.R))
    assert np.all(o.squash(np.zeros((1, 30)))[0] == 0)
    assert np.allclose(unsquash(y, o.R), x)


def test_quadratic_growth():
    o = ChainOracle(sample_partition(30, 3, 2))
    x = np.ones(30)
    assert o.value(1e4 * x) > o.value(1e2 * x) > o.value(x)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(0.1, 50.0))
def test_gradient_matches_fd(seed, scale):
    rng = np.random.default_rng(seed)
    o = ChainOracle(sample_partition(24, 4, seed))
    x = rng.standard_normal((3, 24)) * scale
    assert verify_gradient(o.objective(), x, 1e-6 * max(1.0, scale)) <= 1e-5


def test_scaled_parameters_examples():
    r, sigma, amp = scaled_parameters(0.05, 200, 1.0, 1, 1.0)
    assert r == 43 and math.isclose(sigma, 0.625) and math.isclose(amp, 0.625**2)
    assert scaled_parameters(0.1, 1, 1.0, 1, 1.0)[0] == 0
    with pytest.raises(InvalidArgument):
        make_scaled_oracle(0.1, 1, 1.0, 1, 1.0, 10**6, 0)
    # the initial-gap budget amplitude * 12 r equals 12 / 0.08^2 = 1875 eps^2 r, which
    # the floor with divisor 1857 keeps within 1875 / 1857 of Delta (not within Delta)
    assert math.isclose(amp * 12 * r, 1875 * 0.05**2 * r)
    assert amp * 12 * r <= 200 * 1875 / 1857


def test_dimension_gate():
    need = min_dimension(1)
    c = 16**2 * 230**2 * 4
    assert c * math.log(need) ** 2 <= need and c * math.log(need - 1) ** 2 > need - 1
    with pytest.raises(DimensionTooSmall) as info:
        make_scaled_oracle(0.05, 10, 1.0, 1, 1.0, 4096, 0)
    assert info.value.min_dimension > 10**9


def test_scaled_oracle_without_gate():
    o = make_scaled_oracle(0.05, 10, 1.0, 1, 1.0, 515, 0, enforce_dimension_gate=False)
    assert o.r == 2 and o.partition.d0 == 128
    x = np.random.default_rng(0).standard_normal((5, 515))
    ref = ChainOracle(o.partition)
    assert np.allclose(o.value(x), o.amplitude * ref.value(x / o.sigma))
    # three coordinates sit in no part and never touch the chain
    inert = np.setdiff1d(np.arange(515), np.concatenate(o.partition.parts))
    assert inert.size == 3
    assert np.all(ref.grad_g(np.random.default_rng(1).standard_normal((4, 515)))[:, inert] == 0.0)


def test_progress_examples():
    part = sample_partition(4096, 256, 3)
    o = ChainOracle(part)
    assert progress(o, np.zeros(4096)).index == 0
    x = np.zeros(4096)
    x[part.parts[0]] = math.sqrt(part.d0)
    pv = progress(o, x)
    # X^1 = d0 / sqrt(d0) (times rho's factor); X^2 = 0, so link 2 is also >= 1/2
    assert pv.X[0] > 15 and pv.index == 2


def test_progress_of_placed_configurations():
    part = sample_partition(200, 20, 0)
    o = ChainOracle(part)
    rng = np.random.default_rng(0)
    X = np.array([[1.0, 1.2, 1.3, 1.1, 1.0, 1.4, 1.2, 1.1, 1.3]])
    assert o.progress_index(embed_chain_vars(part, X, rng)).tolist() == [1]
    X[0, 4] = 2.0
    assert o.progress_index(embed_chain_vars(part, X, rng)).tolist() == [6]


def test_concentration_probe_basics():
    res = concentration_probe(256, 16, 2000, [0.0, 0.05, 0.2], seed=1)
    assert res[0].frequency == 1.0
    assert all(r.frequency <= r.bound for r in res[1:])
    uniform = np.full(256, 1 / 16.0)
    assert concentration_probe(256, 16, 100, 1e-9, y=uniform).frequency == 0.0


def test_concentration_trend_in_part_size():
    y = np.abs(np.random.default_rng(0).standard_normal(64))
    y /= np.linalg.norm(y)
    small = concentration_probe(64, 16, 10**4, 0.15, y=y, seed=2)
    large = concentration_probe(64, 32, 10**4, 0.15, y=y, seed=2)
    assert large.frequency < small.frequency


def test_gaussian_points_progress():
    # unit-scale Gaussian points already cross several links; tiny ones cross none
    part = sample_partition(4096, 256, 5)
    o = ChainOracle(part)
    rng = np.random.default_rng(5)
    assert o.progress_index(rng.standard_normal((20, 4096))).min() > 0
    assert np.all(o.progress_index(0.01 * rng.standard_normal((200, 4096))) == 0)

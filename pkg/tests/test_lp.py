import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sns.lp import (
    BesovIndex,
    besov_norm,
    besov_norm_plancherel,
    block_norms,
    dyadic_system,
    freq_project,
    heat_semigroup,
    high_freq_decay,
    log2_plus_ceil,
    lp_block,
    lp_norm,
    smooth_cutoff,
)
from sns.spectral import ContractViolation, SpectralField, TensorField, TorusGrid, random_field


@pytest.fixture(scope="module")
def grid():
    return TorusGrid(64)


def single_mode(grid, k, amp=1.0):
    c = np.zeros((2, grid.n, grid.n), dtype=complex)
    c[0, k[0] % grid.n, k[1] % grid.n] = amp
    return SpectralField(grid, c)


def test_partition_of_unity(grid):
    dy = dyadic_system(grid)
    total = sum(dy.rho(j) for j in dy.blocks)
    assert np.max(np.abs(total - 1.0)) < 1e-13
    assert np.all(dy.weights >= 0)


def test_reconstruction(grid):
    f = random_field(grid, np.random.default_rng(0), 0.0)
    dy = dyadic_system(grid)
    rec = sum(lp_block(f, j, dy).coeffs for j in dy.blocks)
    assert np.max(np.abs(rec - f.coeffs)) < 1e-13


def test_block_supports(grid):
    dy = dyadic_system(grid)
    r = grid.kabs
    for j in range(0, dy.j_max + 1):
        rho = dy.rho(j)
        assert np.all(rho[r < 0.75 * 2 ** j - 1e-9] == 0)
        assert np.all(rho[r > (8.0 / 3.0) * 2 ** j + 1e-9] == 0)
    # |k| = 3 sits entirely in block 1, |k| = 6 entirely in block 2
    assert dy.rho(1)[3, 0] == pytest.approx(1.0, abs=1e-15)
    assert dy.rho(2)[6, 0] == pytest.approx(1.0, abs=1e-15)
    assert all(np.all(dy.rho(j + 1) == 0) for j in range(dy.j_max, dy.j_max + 3))


def test_cutoff_shape():
    assert smooth_cutoff(np.array([0.0, 0.5, 0.75]))[2] == 1.0
    assert smooth_cutoff(np.array([4.0 / 3.0, 2.0])).max() == 0.0
    x = np.linspace(0.75, 4.0 / 3.0, 50)
    assert np.all(np.diff(smooth_cutoff(x)) <= 0)


@pytest.mark.parametrize("k,j", [((3, 0), 1), ((6, 0), 2), ((0, -6), 2), ((12, 0), 3)])
@pytest.mark.parametrize("alpha", [-0.5, 0.0, 1.25])
@pytest.mark.parametrize("p", [1.0, 2.0, 4.0, np.inf])
def test_besov_norm_of_single_mode(grid, k, j, alpha, p):
    """A complex exponential has |e_k(x)| = 1, so every L^p norm is 1."""
    dy = dyadic_system(grid)
    assert dy.rho(j)[k[0] % grid.n, k[1] % grid.n] == pytest.approx(1.0)
    c = 0.7 - 0.2j
    f = single_mode(grid, k, c)
    val = besov_norm(f, BesovIndex(alpha, p, np.inf), dy)
    assert val == pytest.approx(abs(c) * 2.0 ** (j * alpha), rel=1e-12)


def test_plancherel_cross_check(grid):
    f = random_field(grid, np.random.default_rng(5), 1.0, batch=(3,))
    for alpha in (-1.0, 0.0, 0.5):
        a = besov_norm(f, BesovIndex(alpha, 2.0, 2.0), real=True)
        b = besov_norm_plancherel(f, alpha)
        assert np.max(np.abs(a - b) / b) < 1e-10


def test_besov_norm_tensor_and_batch(grid):
    rng = np.random.default_rng(3)
    f = random_field(grid, rng, 1.0, batch=(2,))
    single = [besov_norm(SpectralField(grid, f.coeffs[i]), BesovIndex(0.3, 4, 2)) for i in range(2)]
    both = besov_norm(f, BesovIndex(0.3, 4, 2))
    assert np.allclose(both, single, rtol=1e-12)
    t = TensorField(grid, np.zeros((2, 2, grid.n, grid.n), dtype=complex))
    assert besov_norm(t, BesovIndex(0, 2, 2)) == 0.0


def test_projection_algebra(grid):
    f = random_field(grid, np.random.default_rng(1), 0.0)
    dy = dyadic_system(grid)
    for lam in (1.0, 3.0, 8.0):
        H = freq_project(f, "H_lambda", lam, dy=dy).coeffs
        L = freq_project(f, "L_lambda", lam, dy=dy).coeffs
        assert np.max(np.abs(H + L - f.coeffs)) < 1e-14
        for K in (2 * lam, 4 * lam, 16 * lam):
            HK = freq_project(f, "H_lambda", K, dy=dy)
            nested = freq_project(HK, "H_lambda", lam, dy=dy).coeffs
            assert np.max(np.abs(nested - HK.coeffs)) < 1e-14
            P = freq_project(f, "P_lambda_K", lam, K, dy=dy).coeffs
            assert np.max(np.abs(P - (H - HK.coeffs))) < 1e-14
    assert np.all(freq_project(f, "P_lambda_K", 8.0, 2.0, dy=dy).coeffs == 0)
    with pytest.raises(ContractViolation):
        freq_project(f, "P_lambda_K", 1.0)
    with pytest.raises(ContractViolation):
        freq_project(f, "H_lambda", 0.0)
    with pytest.raises(ContractViolation):
        freq_project(f, "M_lambda", 1.0)


def test_log2_plus_ceil():
    assert [log2_plus_ceil(x) for x in (0.3, 1.0, 1.5, 2.0, 2.01, 4.0, 1000.0)] == [0, 0, 1, 1, 2, 2, 10]


def test_heat_semigroup_modewise(grid):
    f = random_field(grid, np.random.default_rng(2), 0.0)
    g = heat_semigroup(f, 0.01)
    assert np.max(np.abs(g.coeffs - f.coeffs * np.exp(-0.01 * grid.ksq))) < 1e-13
    with pytest.raises(ContractViolation):
        heat_semigroup(f, -1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), s=st.floats(0.05, 5.0), j=st.integers(0, 4))
def test_heat_block_smoothing_in_L2(seed, s, j):
    grid = TorusGrid(32)
    f = random_field(grid, np.random.default_rng(seed), 0.5)
    t = s / 4.0 ** j
    dy = dyadic_system(grid)
    base = block_norms(f, 2.0, dy, blocks=[j])[0]
    smoothed = block_norms(heat_semigroup(f, t), 2.0, dy, blocks=[j])[0]
    assert smoothed <= base * math.exp(-(9.0 / 16.0) * t * 4.0 ** j) * (1 + 1e-12)


def test_high_freq_decay_contracts(grid):
    f = random_field(grid, np.random.default_rng(4), 1.0)
    assert high_freq_decay(f, 1.0, 0.0, 0.1, 2.0) > 0
    assert high_freq_decay(f, 4.0 * grid.n, 0.0, 0.1, 2.0) == 0.0
    with pytest.raises(ContractViolation):
        high_freq_decay(f, 0.5, 0.0, 0.1, 2.0)
    with pytest.raises(ContractViolation):
        high_freq_decay(f, 2.0, 0.0, 0.0, 2.0)
    with pytest.raises(ContractViolation):
        BesovIndex(0.0, 0.5, 1.0)


def test_lp_norm_basic():
    s = np.ones((2, 8, 8))
    assert lp_norm(s, 2.0, 1) == pytest.approx(math.sqrt(2))
    assert lp_norm(s, np.inf, 1) == pytest.approx(math.sqrt(2))
    assert lp_norm(s, 3.0, 1) == pytest.approx(math.sqrt(2))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), a=st.floats(0.1, 10.0))
def test_besov_norm_homogeneous(seed, a):
    grid = TorusGrid(16)
    f = random_field(grid, np.random.default_rng(seed), 0.5)
    idx = BesovIndex(0.5, 3.0, 2.0)
    assert besov_norm(f * a, idx) == pytest.approx(a * besov_norm(f, idx), rel=1e-10)

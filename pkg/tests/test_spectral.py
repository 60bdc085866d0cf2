import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sns.spectral import (
    ContractViolation,
    ResourceError,
    SpectralField,
    TorusGrid,
    basis_field,
    decode_snapshot,
    encode_snapshot,
    inner,
    l2_norm,
    leray_project,
    nonlinear_term,
    random_field,
    read_snapshot,
    sym_tensor,
    to_physical,
    to_spectral,
    write_snapshot,
)


def brute_synthesis(grid, c, m):
    """Direct evaluation of sum_k c_k exp(2 pi i k.x) on the m x m grid."""
    x = np.arange(m) / m
    out = np.zeros(c.shape[:-2] + (m, m), dtype=complex)
    for a, k1 in enumerate(grid.freqs):
        for b, k2 in enumerate(grid.freqs):
            coef = c[..., a, b]
            if np.all(coef == 0):
                continue
            phase = np.exp(2j * np.pi * (k1 * x[:, None] + k2 * x[None, :]))
            out += coef[..., None, None] * phase
    return out


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(1234)


@pytest.mark.parametrize("dealias", ["two_thirds", "none"])
def test_to_phys_matches_direct_sum(dealias, rng):
    grid = TorusGrid(12, dealias)
    f = random_field(grid, rng, 0.5)
    for m in (12, 18, 24):
        fast = grid.to_phys(f.coeffs, m)
        slow = brute_synthesis(grid, f.coeffs, m)
        assert np.max(np.abs(fast - slow)) < 1e-12


def test_real_fast_path_agrees_with_complex(rng):
    grid = TorusGrid(32)
    f = random_field(grid, rng, 1.0, batch=(3,))
    for m in (32, 48, 64):
        a = grid.to_phys(f.coeffs, m, real=True)
        b = grid.to_phys(f.coeffs, m).real
        assert np.max(np.abs(a - b)) < 1e-13


@pytest.mark.parametrize("dealias", ["two_thirds", "none"])
def test_round_trip(dealias, rng):
    grid = TorusGrid(16, dealias)
    f = random_field(grid, rng, 0.0, retained=False) if dealias == "none" else random_field(grid, rng, 0.0)
    back = to_spectral(to_physical(f, 1.5), grid)
    assert np.max(np.abs(back.coeffs - f.coeffs * grid.lattice)) < 1e-13


def test_to_spec_real_and_complex_inputs_agree(rng):
    grid = TorusGrid(16)
    f = random_field(grid, rng, 0.0)
    s = grid.to_phys(f.coeffs, 24)
    assert np.max(np.abs(grid.to_spec(s.real) - grid.to_spec(s))) < 1e-13


def test_leray_idempotent_and_div_free(rng):
    grid = TorusGrid(32)
    c = rng.standard_normal((2, 32, 32)) + 1j * rng.standard_normal((2, 32, 32))
    p1 = grid.leray(c)
    p2 = grid.leray(p1)
    assert np.max(np.abs(p2 - p1)) < 1e-12
    assert np.max(np.abs(grid.div_vector(p1))) < 1e-11
    # orthogonality: the removed part is a gradient
    g = c - p1
    cross = np.abs(grid.k[1] * g[0] - grid.k[0] * g[1])
    assert np.max(cross[grid.ksq > 0]) < 1e-11


def test_heat_is_modewise_exponential(rng):
    grid = TorusGrid(16)
    f = random_field(grid, rng, 0.0)
    t = 0.013
    out = f.coeffs * grid.heat(t)
    expect = f.coeffs * np.exp(-t * (grid.k[0] ** 2 + grid.k[1] ** 2))
    assert np.max(np.abs(out - expect)) < 1e-13


def test_basis_field_properties():
    grid = TorusGrid(16)
    e = basis_field(grid, (2, -3), real=True)
    assert e.div_free and e.mean_free and e.is_real
    s = to_physical(e, 1.0)
    x = np.arange(16) / 16
    phase = 2 * np.pi * (2 * x[:, None] - 3 * x[None, :])
    kp = np.array([-3.0, -2.0]) / np.hypot(2, 3)
    expect = 2 * np.cos(phase)[None] * kp[:, None, None]
    assert np.max(np.abs(s - expect)) < 1e-12
    with pytest.raises(ContractViolation):
        basis_field(grid, (0, 0))


def test_contracts():
    with pytest.raises(ContractViolation):
        TorusGrid(15)
    with pytest.raises(ContractViolation):
        TorusGrid(16, "three_halves")
    with pytest.raises(ContractViolation):
        SpectralField(TorusGrid(8), np.zeros((2, 16, 16)))
    big = TorusGrid(64)
    with pytest.raises(ResourceError):
        big.to_phys(np.broadcast_to(np.zeros((2, 64, 64), dtype=complex), (200, 2, 64, 64)), 1024)


def test_dealiased_product_exact_on_retained_modes(rng):
    """The 2/3-rule product equals the exact convolution restricted to retained modes."""
    grid = TorusGrid(12)
    f = random_field(grid, rng, 0.0)
    g = random_field(grid, rng, 0.0)
    fast = sym_tensor(f, g).coeffs
    fine = TorusGrid(36, "none")
    big = np.zeros((2, 36, 36), dtype=complex)
    bg = np.zeros((2, 36, 36), dtype=complex)
    idx = grid.freqs % 36
    big[:, idx[:, None], idx[None, :]] = f.coeffs
    bg[:, idx[:, None], idx[None, :]] = g.coeffs
    a, b = fine.to_phys(big, 36), fine.to_phys(bg, 36)
    exact = fine.to_spec(fine.sym_outer_phys(a, b).reshape(4, 36, 36)).reshape(2, 2, 36, 36)
    exact = exact[:, :, idx[:, None], idx[None, :]] * grid.retained
    assert np.max(np.abs(fast - exact)) < 1e-12


@pytest.mark.parametrize("dealias", ["two_thirds", "none"])
def test_truncated_euler_conserves_energy_and_enstrophy(dealias, rng):
    grid = TorusGrid(24, dealias)
    u = random_field(grid, rng, 1.0)
    N = nonlinear_term(u)
    energy = inner(u, N)
    enstrophy = inner(SpectralField(grid, u.coeffs * grid.ksq), N)
    scale = float(l2_norm(u)) ** 3
    assert abs(energy) < 1e-12 * scale
    assert abs(enstrophy) < 1e-12 * scale * grid.n ** 2


def test_snapshot_round_trip(tmp_path, rng):
    grid = TorusGrid(16)
    f = random_field(grid, rng, 0.5)
    buf = encode_snapshot(f)
    g, flags, off = decode_snapshot(buf)
    assert g.grid.n == 16 and off == len(buf)
    assert flags == 3  # mean-free and divergence-free
    assert np.array_equal(g.coeffs, f.coeffs)
    write_snapshot(tmp_path / "f.sns", f)
    h = read_snapshot(tmp_path / "f.sns")
    assert np.array_equal(h.coeffs, f.coeffs)
    with pytest.raises(ValueError):
        decode_snapshot(b"XXXX" + buf[4:])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), slope=st.floats(0.0, 2.0), n=st.sampled_from([8, 12, 16]))
def test_random_field_invariants(seed, slope, n):
    grid = TorusGrid(n)
    f = random_field(grid, np.random.default_rng(seed), slope)
    assert f.is_real and f.div_free and f.mean_free
    assert np.all(f.coeffs[..., ~grid.retained] == 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_leray_linear_and_product_symmetric(seed, a, b):
    grid = TorusGrid(8)
    rng = np.random.default_rng(seed)
    f = random_field(grid, rng, 0.0, div_free=False)
    g = random_field(grid, rng, 0.0, div_free=False)
    lhs = leray_project(f * a + g * b).coeffs
    rhs = (leray_project(f) * a + leray_project(g) * b).coeffs
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * (1 + abs(a) + abs(b)) * 10
    t1 = sym_tensor(f, g)
    t2 = sym_tensor(g, f)
    assert np.max(np.abs(t1.coeffs - t2.coeffs)) < 1e-12
    assert t1.is_symmetric

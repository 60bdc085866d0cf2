import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sns.lp import dyadic_system
from sns.paraproduct import (
    bony_complete,
    para_estimate_ratios,
    para_hi,
    para_hi_res,
    para_lo,
    para_lo_bruteforce,
    para_lo_res,
    para_terms,
    resonant,
    resonant_bruteforce,
)
from sns.spectral import ContractViolation, SpectralField, TorusGrid, random_field, sym_tensor


def pair(n, seed, s1=0.5, s2=1.0, dealias="two_thirds"):
    grid = TorusGrid(n, dealias)
    rng = np.random.default_rng(seed)
    return random_field(grid, rng, s1), random_field(grid, rng, s2)


@pytest.mark.parametrize("dealias", ["two_thirds", "none"])
def test_matches_bruteforce(dealias):
    f, g = pair(24, 0, dealias=dealias)
    assert np.max(np.abs(para_lo(f, g).coeffs - para_lo_bruteforce(f, g).coeffs)) < 1e-13
    assert np.max(np.abs(resonant(f, g).coeffs - resonant_bruteforce(f, g).coeffs)) < 1e-13


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), n=st.sampled_from([16, 32, 48]),
       s1=st.floats(-0.5, 2.0), s2=st.floats(-0.5, 2.0))
def test_bony_completeness(seed, n, s1, s2):
    f, g = pair(n, seed, s1, s2)
    nf = np.sqrt(np.sum(np.abs(f.coeffs) ** 2))
    ng = np.sqrt(np.sum(np.abs(g.coeffs) ** 2))
    assert bony_complete(f, g) <= 1e-11 * nf * ng


def test_constant_low_factor():
    """With ``f`` constant only blocks ``j >= 1`` of ``g`` meet ``S_{j-1} f``."""
    grid = TorusGrid(32)
    c = np.zeros((2, 32, 32), dtype=complex)
    c[:, 0, 0] = [0.4, -1.1]
    f = SpectralField(grid, c)
    g = random_field(grid, np.random.default_rng(2), 0.5)
    dy = dyadic_system(grid)
    g_hi = SpectralField(grid, g.coeffs * sum(dy.rho(j) for j in range(1, dy.j_max + 1)))
    assert np.max(np.abs(para_lo(f, g).coeffs - sym_tensor(f, g_hi).coeffs)) < 1e-13


def test_symmetries():
    f, g = pair(32, 4)
    r1, r2 = resonant(f, g).coeffs, resonant(g, f).coeffs
    assert np.max(np.abs(r1 - r2)) < 1e-14
    assert np.max(np.abs(para_hi(f, g).coeffs - para_lo(g, f).coeffs)) < 1e-14
    for t in (para_lo(f, g), resonant(f, g), para_lo_res(f, g), para_hi_res(f, g)):
        assert t.is_symmetric
    lr = para_lo_res(f, g).coeffs
    assert np.max(np.abs(lr - para_lo(f, g).coeffs - r1)) < 1e-14
    hr = para_hi_res(f, g).coeffs
    assert np.max(np.abs(hr - para_hi(f, g).coeffs - r1)) < 1e-14


def test_batched_terms_match_single():
    grid = TorusGrid(16)
    rng = np.random.default_rng(8)
    f = random_field(grid, rng, 0.5, batch=(3,))
    g = random_field(grid, rng, 0.5, batch=(3,))
    batched = para_terms(grid, f.coeffs, g.coeffs, real=True)
    for i in range(3):
        single = para_terms(grid, f.coeffs[i], g.coeffs[i])
        for name in ("lo", "hi", "res"):
            assert np.max(np.abs(batched[name][i] - single[name])) < 1e-13


def test_grid_mismatch():
    f, _ = pair(16, 0)
    _, g = pair(32, 0)
    with pytest.raises(ContractViolation):
        para_lo(f, g)


def test_estimate_ratios_finite_and_gated():
    f, g = pair(32, 5, 1.5, 1.5)
    r = para_estimate_ratios(f, g, 0.5, 0.5)
    assert set(r) == {"para1", "reso"}
    assert all(np.isfinite(v) and v > 0 for v in r.values())
    r2 = para_estimate_ratios(f, g, -0.5, 0.2)
    assert set(r2) == {"para1", "para2"}

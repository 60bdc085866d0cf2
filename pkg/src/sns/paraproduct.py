"""Bony decomposition of the symmetrised product ``f (x)_s g``.

``para_lo(f, g) = sum_j sum_{i <= j-2} Delta_i f (x)_s Delta_j g``
``para_hi(f, g) = para_lo(g, f)``
``resonant(f, g) = sum_{|i-j| <= 1} Delta_i f (x)_s Delta_j g``

All blockwise products are accumulated in physical space on the grid's product
mesh and transformed once, so a paraproduct costs ``O(j_max)`` inverse FFTs.
"""

from __future__ import annotations

import numpy as np

from .lp import BesovIndex, DyadicSystem, besov_norm, dyadic_system, lp_norm
from .spectral import ContractViolation, SpectralField, TensorField, TorusGrid

__all__ = [
    "para_lo",
    "para_hi",
    "resonant",
    "para_lo_res",
    "para_hi_res",
    "bony_complete",
    "para_terms",
    "phys_blocks",
    "para_lo_bruteforce",
    "resonant_bruteforce",
]


def phys_blocks(grid: TorusGrid, dy: DyadicSystem, c: np.ndarray, real: bool = False) -> list:
    """Physical samples of every block ``Delta_j c`` on the product mesh.

    Blocks with no populated mode come back as ``None``; the others are
    transformed in a single batched FFT.
    """
    c = c * grid.retained
    support = np.any(c != 0, axis=tuple(range(c.ndim - 2)))
    live = [b for b, j in enumerate(dy.blocks) if np.any(support & (dy.rho(j) > 0))]
    out = [None] * len(dy.blocks)
    if live:
        stack = np.stack([c * dy.weights[b] for b in live])
        phys = grid.to_phys(stack, grid.product_size, real)
        for i, b in enumerate(live):
            out[b] = phys[i]
    return out


def para_terms(grid: TorusGrid, f: np.ndarray, g: np.ndarray, dy: DyadicSystem | None = None,
               which=("lo", "hi", "res"), f_blocks: list | None = None,
               g_blocks: list | None = None, real: bool = False,
               transform: bool = True) -> dict[str, np.ndarray]:
    """Array-level paraproducts of coefficient arrays ``(..., 2, n, n)``.

    Returns tensor coefficient arrays keyed by ``"lo"`` (f low, g high), ``"hi"``
    (f high, g low) and ``"res"``.  Precomputed :func:`phys_blocks` may be passed
    to share transforms between calls; ``real=True`` declares both inputs
    conjugate-symmetric.  ``transform=False`` returns the physical samples of each
    term on the product mesh (``None`` for an empty term) instead of coefficients.
    """
    dy = dy or dyadic_system(grid)
    fb = f_blocks if f_blocks is not None else phys_blocks(grid, dy, f, real)
    if g_blocks is not None:
        gb = g_blocks
    else:
        gb = fb if g is f else phys_blocks(grid, dy, g, real)
    nb = len(fb)
    acc = {name: None for name in which}

    def add(name, a, b):
        if a is None or b is None:
            return
        t = grid.sym_outer_phys(a, b)
        acc[name] = t if acc[name] is None else acc[name] + t

    def plus(s, x):
        if x is None:
            return s
        return x if s is None else s + x

    # running low-pass sums S_{j-1} = sum_{i <= j-2} Delta_i
    f_low = None
    g_low = None
    for b in range(nb):
        if b >= 2:
            f_low = plus(f_low, fb[b - 2])
            g_low = plus(g_low, gb[b - 2])
            if "lo" in acc:
                add("lo", f_low, gb[b])
            if "hi" in acc:
                add("hi", fb[b], g_low)
        if "res" in acc:
            for a in range(max(0, b - 1), min(nb, b + 2)):
                add("res", fb[a], gb[b])
    if not transform:
        return acc
    shape = np.broadcast_shapes(f.shape, g.shape)[:-3] + (2, 2, grid.n, grid.n)
    out = {}
    for name, t in acc.items():
        out[name] = np.zeros(shape, dtype=complex) if t is None else grid.spec_tensor(t)
    return out


def _check(f, g):
    if f.grid != g.grid:
        raise ContractViolation(f"grid mismatch: {f.grid} vs {g.grid}")


def para_lo(f: SpectralField, g: SpectralField, dy: DyadicSystem | None = None) -> TensorField:
    """High-low paraproduct: low frequencies of ``f`` against high frequencies of ``g``."""
    _check(f, g)
    return TensorField(f.grid, para_terms(f.grid, f.coeffs, g.coeffs, dy, ("lo",))["lo"])


def para_hi(f: SpectralField, g: SpectralField, dy: DyadicSystem | None = None) -> TensorField:
    return para_lo(g, f, dy)


def resonant(f: SpectralField, g: SpectralField, dy: DyadicSystem | None = None) -> TensorField:
    _check(f, g)
    return TensorField(f.grid, para_terms(f.grid, f.coeffs, g.coeffs, dy, ("res",))["res"])


def para_lo_res(f, g, dy=None) -> TensorField:
    """``f para_lo g + f resonant g``."""
    _check(f, g)
    t = para_terms(f.grid, f.coeffs, g.coeffs, dy, ("lo", "res"))
    return TensorField(f.grid, t["lo"] + t["res"])


def para_hi_res(f, g, dy=None) -> TensorField:
    """``f para_hi g + f resonant g``."""
    _check(f, g)
    t = para_terms(f.grid, f.coeffs, g.coeffs, dy, ("hi", "res"))
    return TensorField(f.grid, t["hi"] + t["res"])


def bony_complete(f: SpectralField, g: SpectralField, dy: DyadicSystem | None = None) -> float:
    """L^2 norm of ``lo + res + hi - f (x)_s g``; vanishes up to rounding."""
    _check(f, g)
    grid = f.grid
    t = para_terms(grid, f.coeffs, g.coeffs, dy)
    full = grid.sym_product(f.coeffs, g.coeffs)
    r = t["lo"] + t["res"] + t["hi"] - full
    return np.sqrt(np.sum(np.abs(r) ** 2, axis=(-4, -3, -2, -1)))


# ---------------------------------------------------------------- brute-force oracles
def _pair_sum(f: SpectralField, g: SpectralField, keep) -> TensorField:
    grid = f.grid
    dy = dyadic_system(grid)
    total = np.zeros(f.coeffs.shape[:-3] + (2, 2, grid.n, grid.n), dtype=complex)
    for i in dy.blocks:
        for j in dy.blocks:
            if keep(i, j):
                total += grid.sym_product(f.coeffs * dy.rho(i), g.coeffs * dy.rho(j))
    return TensorField(grid, total)


def para_lo_bruteforce(f: SpectralField, g: SpectralField) -> TensorField:
    """Direct double sum over block pairs with ``i <= j - 2``."""
    return _pair_sum(f, g, lambda i, j: i <= j - 2)


def resonant_bruteforce(f: SpectralField, g: SpectralField) -> TensorField:
    return _pair_sum(f, g, lambda i, j: abs(i - j) <= 1)


# ---------------------------------------------------------------- estimate sweeps
def tensor_lp(t: TensorField, p: float, oversample: float = 2.0) -> float:
    m = int(round(oversample * t.grid.n))
    return lp_norm(t.grid.to_phys(t.coeffs, m), p, 2)


def field_lp(f: SpectralField, p: float, oversample: float = 2.0) -> float:
    m = int(round(oversample * f.grid.n))
    return lp_norm(f.grid.to_phys(f.coeffs, m), p, 1)


def para_estimate_ratios(f: SpectralField, g: SpectralField, alpha: float, beta: float,
                         p1: float = 4.0, p2: float = 4.0, q1: float = np.inf,
                         q2: float = np.inf) -> dict[str, float]:
    """LHS/RHS ratios of the three paraproduct estimates for one pair of fields.

    ``para1``: ``||f lo g||_{B^a_{p,q2}} / (||f||_{L^p1} ||g||_{B^a_{p2,q2}})``
    ``para2`` (needs ``alpha < 0``): ``||f lo g||_{B^{a+b}_{p,q}} / (||f||_{B^a_{p1,q1}} ||g||_{B^b_{p2,q2}})``
    ``reso`` (needs ``alpha + beta > 0``): same with the resonant product.
    Ratios with a vanishing denominator are reported as ``nan``.
    """
    dy = dyadic_system(f.grid)
    p = 1.0 / (1.0 / p1 + 1.0 / p2)
    q = 1.0 / (1.0 / q1 + 1.0 / q2) if not (np.isinf(q1) and np.isinf(q2)) else np.inf
    terms = para_terms(f.grid, f.coeffs, g.coeffs, dy, ("lo", "res"))
    lo = TensorField(f.grid, terms["lo"])
    res = TensorField(f.grid, terms["res"])

    def ratio(num, den):
        return float(num / den) if den > 0 else float("nan")

    out = {}
    out["para1"] = ratio(besov_norm(lo, BesovIndex(alpha, p, q2), dy),
                         field_lp(f, p1) * besov_norm(g, BesovIndex(alpha, p2, q2), dy))
    fa = besov_norm(f, BesovIndex(alpha, p1, q1), dy)
    gb = besov_norm(g, BesovIndex(beta, p2, q2), dy)
    if alpha < 0:
        out["para2"] = ratio(besov_norm(lo, BesovIndex(alpha + beta, p, q), dy), fa * gb)
    if alpha + beta > 0:
        out["reso"] = ratio(besov_norm(res, BesovIndex(alpha + beta, p, q), dy), fa * gb)
    return out

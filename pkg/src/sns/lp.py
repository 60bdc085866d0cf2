"""Dyadic partition of unity, Littlewood-Paley blocks and Besov norms.

The radial cut-off ``chi`` equals 1 on ``|xi| <= 3/4`` and 0 on ``|xi| >= 4/3`` with a
``C^inf`` transition built from ``exp(-1/t)``.  The annulus function is
``rho(xi) = chi(xi/2) - chi(xi)`` and ``rho_j = rho(2^-j .)``, so the blocks telescope.
On the lattice the weights are renormalised pointwise, which makes the partition
of unity exact in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .spectral import ContractViolation, SpectralField, TensorField, TorusGrid

__all__ = [
    "BesovIndex",
    "DyadicSystem",
    "dyadic_system",
    "smooth_cutoff",
    "lp_block",
    "besov_norm",
    "freq_project",
    "heat_semigroup",
    "high_freq_decay",
    "log2_plus_ceil",
    "lp_norm",
]

CHI_INNER = 3.0 / 4.0
CHI_OUTER = 4.0 / 3.0


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C^inf step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def smooth_cutoff(r: np.ndarray) -> np.ndarray:
    """The radial function ``chi``."""
    x = (np.asarray(r, dtype=float) - CHI_INNER) / (CHI_OUTER - CHI_INNER)
    return 1.0 - _smooth_step(x)


def log2_plus_ceil(lam: float) -> int:
    """``ceil(log2^+(lam))`` with ``log2^+ = max(log2, 0)``."""
    if lam <= 1.0:
        return 0
    return int(math.ceil(math.log2(lam) - 1e-12))


@dataclass(frozen=True)
class BesovIndex:
    alpha: float
    p: float
    q: float

    def __post_init__(self):
        if not (self.p >= 1 and self.q >= 1):
            raise ContractViolation(f"Besov integrability indices must be >= 1, got p={self.p}, q={self.q}")


@dataclass(frozen=True)
class DyadicSystem:
    """Precomputed block weights for a grid.

    ``weights[j + 1]`` is ``rho_j`` on the lattice (``weights[0]`` is ``chi``).
    """

    grid: TorusGrid

    @cached_property
    def j_max(self) -> int:
        rmax = float(self.grid.kabs[self.grid.lattice].max())
        # rho_j vanishes once 3/4 * 2^j >= rmax
        j = 0
        while CHI_INNER * 2.0 ** (j + 1) < rmax:
            j += 1
        return j

    @cached_property
    def weights(self) -> np.ndarray:
        r = self.grid.kabs
        js = range(-1, self.j_max + 1)
        w = np.empty((self.j_max + 2,) + r.shape)
        w[0] = smooth_cutoff(r)
        for j in js:
            if j >= 0:
                w[j + 1] = smooth_cutoff(r / 2.0 ** (j + 1)) - smooth_cutoff(r / 2.0 ** j)
        w = np.clip(w, 0.0, None)
        total = w.sum(axis=0)
        w = w / total
        w.flags.writeable = False
        return w

    @property
    def blocks(self) -> range:
        return range(-1, self.j_max + 1)

    def rho(self, j: int) -> np.ndarray:
        j = int(math.ceil(j))
        if j < -1 or j > self.j_max:
            return np.zeros_like(self.grid.ksq)
        return self.weights[j + 1]

    def high_multiplier(self, lam: float) -> np.ndarray:
        """Fourier multiplier of ``H_lambda``: sum of blocks ``j >= ceil(log2^+ lam)``."""
        return _high_multiplier(self, log2_plus_ceil(lam))

    def low_multiplier(self, lam: float) -> np.ndarray:
        return 1.0 - self.high_multiplier(lam)

    def band_multiplier(self, lam: float, K: float) -> np.ndarray:
        """``P_{lambda,K} = 1_{lambda <= K} (H_lambda - H_K)``."""
        if lam > K:
            return np.zeros_like(self.grid.ksq)
        return self.high_multiplier(lam) - self.high_multiplier(K)


@lru_cache(maxsize=256)
def _high_multiplier(dy: DyadicSystem, j0: int) -> np.ndarray:
    if j0 <= -1:
        m = np.ones_like(dy.grid.ksq)
    elif j0 > dy.j_max:
        m = np.zeros_like(dy.grid.ksq)
    else:
        m = dy.weights[j0 + 1:].sum(axis=0)
    m.flags.writeable = False
    return m


@lru_cache(maxsize=64)
def dyadic_system(grid: TorusGrid) -> DyadicSystem:
    return DyadicSystem(grid)


def _coeffs(f):
    return f.coeffs if isinstance(f, (SpectralField, TensorField)) else np.asarray(f)


def _rewrap(f, c):
    if isinstance(f, SpectralField):
        return SpectralField(f.grid, c)
    if isinstance(f, TensorField):
        return TensorField(f.grid, c)
    return c


def lp_block(f, j: float, dy: DyadicSystem | None = None):
    """``Delta_j f`` (real ``j`` rounds up); blocks past ``j_max`` are zero."""
    dy = dy or dyadic_system(f.grid)
    return _rewrap(f, _coeffs(f) * dy.rho(j))


def lp_norm(samples: np.ndarray, p: float, ncomp_axes: int) -> np.ndarray:
    """L^p norm of the pointwise Euclidean magnitude over the unit torus.

    ``samples`` has shape ``(..., comps..., m, m)`` with ``ncomp_axes`` component axes.
    """
    mag2 = np.abs(samples) ** 2
    axes = tuple(range(-2 - ncomp_axes, -2))
    mag2 = mag2.sum(axis=axes)
    if np.isinf(p):
        return np.sqrt(mag2.max(axis=(-2, -1)))
    if p == 2:
        return np.sqrt(mag2.mean(axis=(-2, -1)))
    return (mag2 ** (p / 2.0)).mean(axis=(-2, -1)) ** (1.0 / p)


def _ncomp(c: np.ndarray, f) -> int:
    return 2 if isinstance(f, TensorField) else 1


def block_norms(f, p: float, dy: DyadicSystem | None = None, oversample: float = 2.0,
                multiplier: np.ndarray | None = None, blocks=None, real: bool = False) -> np.ndarray:
    """``||Delta_j f||_{L^p}`` for every block, stacked on a new leading axis.

    ``real=True`` declares ``f`` conjugate-symmetric and uses real transforms.
    """
    grid = f.grid
    dy = dy or dyadic_system(grid)
    c = _coeffs(f)
    if multiplier is not None:
        c = c * multiplier
    nc = _ncomp(c, f)
    m = int(round(oversample * grid.n))
    blocks = list(dy.blocks if blocks is None else blocks)
    stack = np.stack([c * dy.rho(j) for j in blocks])
    if real:
        samples = grid.to_phys(stack, m, real=True)
    else:
        samples = grid.to_phys(stack, m)
    return lp_norm(samples, p, nc)


def _combine(norms: np.ndarray, blocks, alpha: float, q: float) -> np.ndarray:
    js = np.array(list(blocks), dtype=float)
    w = 2.0 ** (js * alpha)
    terms = norms * w.reshape((-1,) + (1,) * (norms.ndim - 1))
    if np.isinf(q):
        return terms.max(axis=0)
    return (terms ** q).sum(axis=0) ** (1.0 / q)


def besov_norm(f, idx: BesovIndex, dy: DyadicSystem | None = None, oversample: float = 2.0,
               real: bool = False):
    """``(sum_j 2^{j alpha q} ||Delta_j f||_{L^p}^q)^{1/q}`` with ``L^p`` by collocation.

    Batched over leading axes of ``f``; returns a float for a single field.
    """
    dy = dy or dyadic_system(f.grid)
    norms = block_norms(f, idx.p, dy, oversample, real=real)
    out = _combine(norms, dy.blocks, idx.alpha, idx.q)
    return float(out) if np.ndim(out) == 0 else out


def besov_norm_plancherel(f: SpectralField, alpha: float, dy: DyadicSystem | None = None):
    """``B^alpha_{2,2}`` norm from the modewise weights ``sum_j 2^{2 j alpha} rho_j(k)^2``."""
    dy = dy or dyadic_system(f.grid)
    js = np.arange(-1, dy.j_max + 1, dtype=float)
    w = np.tensordot(2.0 ** (2 * js * alpha), dy.weights ** 2, axes=1)
    c = _coeffs(f)
    axes = tuple(range(-(_ncomp(c, f) + 2), 0))
    return np.sqrt(np.sum(w * np.abs(c) ** 2, axis=axes))


def freq_project(f, which: str, lam: float, K: float | None = None, dy: DyadicSystem | None = None):
    """``H_lambda``, ``L_lambda`` or ``P_{lambda,K}`` applied to ``f``."""
    dy = dy or dyadic_system(f.grid)
    if lam <= 0:
        raise ContractViolation("lambda must be positive")
    if which == "H_lambda":
        m = dy.high_multiplier(lam)
    elif which == "L_lambda":
        m = dy.low_multiplier(lam)
    elif which == "P_lambda_K":
        if K is None:
            raise ContractViolation("P_lambda_K needs K")
        m = dy.band_multiplier(lam, K)
    else:
        raise ContractViolation(f"unknown projection {which!r}")
    return _rewrap(f, _coeffs(f) * m)


def heat_semigroup(f, t: float):
    """``e^{t Delta} f``: multiply mode ``k`` by ``exp(-t |k|^2)``."""
    if t < 0:
        raise ContractViolation("heat semigroup needs t >= 0")
    return _rewrap(f, _coeffs(f) * f.grid.heat(t))


def high_freq_decay(f, M: float, alpha: float, eps: float, p: float, dy: DyadicSystem | None = None):
    """``||H_M f||_{B^{alpha - eps}_{p,1}}``."""
    if M < 1 or eps <= 0:
        raise ContractViolation("need M >= 1 and eps > 0")
    dy = dy or dyadic_system(f.grid)
    return besov_norm(freq_project(f, "H_lambda", M, dy=dy), BesovIndex(alpha - eps, p, 1), dy)

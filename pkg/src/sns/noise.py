"""Driving noise, exact Ornstein-Uhlenbeck transitions and Wick renormalisation.

The noise is ``xi = sum_k phi_k dB_k e_k`` with complex Brownian motions paired by
``B_{-k} = conj(B_k)``.  Each Fourier mode of the stochastic convolution is an OU
process, so transitions are sampled exactly:

    Xhat(k, t+h) = exp(-|k|^2 h) Xhat(k, t) + eta_k,
    E|eta_k|^2 = |phi_k|^2 (1 - exp(-2|k|^2 h)) / (2|k|^2),  E eta_k^2 = 0.

The basis vector used for mode ``k`` is ``i k_perp/|k|``.  It has unit length and the
extra factor ``i`` makes conjugate-symmetric amplitudes give real fields; it does
not change any second moment.

Random numbers come from Philox streams keyed by ``(seed, purpose)`` with the
counter set from ``(fine step index, trajectory id)``, so any trajectory and step
can be regenerated independently of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .lp import dyadic_system
from .spectral import ContractViolation, SpectralField, TensorField, TorusGrid

__all__ = [
    "NoiseSpectrum",
    "NoiseStream",
    "StochasticConvolution",
    "ou_variance",
    "ou_increment",
    "ou_step",
    "sample_ou",
    "wick_constant",
    "wick_square",
]


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    """Mode amplitudes ``phi_k`` and the split ``xi = xi_1 + xi_2``.

    ``xi_2`` carries the finitely many modes with ``|k| <= split_radius``; ``xi_1``
    carries the rest and must satisfy ``sup |phi_k| <= alpha0`` there.
    """

    grid: TorusGrid
    phi: np.ndarray = field(repr=False)
    alpha0: float
    split_radius: float = 2.0

    def __post_init__(self):
        g = self.grid
        phi = np.array(self.phi, dtype=complex) * g.retained
        phi[0, 0] = 0.0
        if np.max(np.abs(phi - g.conj_reflect(phi))) > 1e-12 * (1 + np.max(np.abs(phi))):
            raise ContractViolation("phi must satisfy phi(-k) = conj(phi(k))")
        high = np.abs(phi[self.mask1])
        if high.size and high.max() > self.alpha0 * (1 + 1e-12):
            raise ContractViolation(f"sup_(|k|>R) |phi_k| = {high.max():.4g} exceeds alpha0 = {self.alpha0}")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)

    @property
    def mask1(self) -> np.ndarray:
        return self.grid.kabs > self.split_radius

    @property
    def mask2(self) -> np.ndarray:
        return (self.grid.kabs <= self.split_radius) & (self.grid.ksq > 0)

    @property
    def phi1(self) -> np.ndarray:
        return self.phi * self.mask1

    @property
    def phi2(self) -> np.ndarray:
        return self.phi * self.mask2

    def part(self, which: str) -> np.ndarray:
        if which in ("xi1", "xi1_only"):
            return self.phi1
        if which == "xi2":
            return self.phi2
        if which == "full":
            return self.phi
        raise ContractViolation(f"unknown noise part {which!r}")

    def scaled(self, a: float) -> "NoiseSpectrum":
        return NoiseSpectrum(self.grid, self.phi * a, self.alpha0 * abs(a), self.split_radius)

    @classmethod
    def constant(cls, grid: TorusGrid, amplitude: float, alpha0: float | None = None,
                 split_radius: float = 2.0) -> "NoiseSpectrum":
        phi = np.full((grid.n, grid.n), float(amplitude), dtype=complex)
        return cls(grid, phi, abs(amplitude) if alpha0 is None else alpha0, split_radius)

    @classmethod
    def band(cls, grid: TorusGrid, low: float, high: float, split_radius: float = 2.0,
             alpha0: float | None = None) -> "NoiseSpectrum":
        """``phi_k = low`` on ``|k| <= R`` and ``high`` beyond."""
        phi = np.where(grid.kabs <= split_radius, low, high).astype(complex)
        return cls(grid, phi, abs(high) if alpha0 is None else alpha0, split_radius)

    @classmethod
    def from_table(cls, grid: TorusGrid, table: dict, default: float, alpha0: float | None = None,
                   split_radius: float = 2.0) -> "NoiseSpectrum":
        """``table`` maps ``(k1, k2)`` to ``phi``; the conjugate entry is filled in."""
        phi = np.full((grid.n, grid.n), default, dtype=complex)
        for (k1, k2), v in table.items():
            phi[k1 % grid.n, k2 % grid.n] = v
            phi[(-k1) % grid.n, (-k2) % grid.n] = np.conj(v)
        if alpha0 is None:
            high = (grid.kabs > split_radius) & grid.retained
            alpha0 = float(np.max(np.abs(phi[high]), initial=0.0))
        return cls(grid, phi, alpha0, split_radius)


@dataclass(frozen=True)
class NoiseStream:
    """Counter-based Gaussian source for one trajectory (or a batch of trajectories).

    ``substeps`` refines the time grid: a step of the caller's size is composed
    exactly from ``substeps`` OU sub-increments, and a run with step ``h/2`` and
    ``substeps/2`` reproduces the same Brownian path.
    """

    seed: int
    trajectory: int | tuple = 0
    purpose: int = 0
    substeps: int = 1

    def _key(self) -> np.ndarray:
        return np.random.SeedSequence(self.seed, spawn_key=(self.purpose,)).generate_state(2, np.uint64)

    @property
    def trajectories(self) -> tuple:
        t = self.trajectory
        return tuple(t) if isinstance(t, (tuple, list, range, np.ndarray)) else (int(t),)

    @property
    def batched(self) -> bool:
        return not isinstance(self.trajectory, (int, np.integer))

    def gaussians(self, grid: TorusGrid, fine_index: int) -> np.ndarray:
        """Conjugate-symmetric complex normals with ``E|Z|^2 = 1``, ``E Z^2 = 0``."""
        key = self._key()
        out = []
        for traj in self.trajectories:
            gen = np.random.Generator(np.random.Philox(key=key, counter=[0, 0, int(fine_index), int(traj)]))
            a = gen.standard_normal((2, grid.n, grid.n))
            z = (a[0] + 1j * a[1]) / np.sqrt(2.0)
            out.append((z + grid.conj_reflect(z)) / np.sqrt(2.0))
        z = np.stack(out)
        return z if self.batched else z[0]


def ou_variance(grid: TorusGrid, h: float) -> np.ndarray:
    """``(1 - exp(-2|k|^2 h)) / (2|k|^2)``, with the limit ``h`` at ``k = 0``; ``h = inf`` allowed."""
    if np.isinf(h):
        return 0.5 * grid.inv_ksq
    return np.where(grid.ksq > 0, -np.expm1(-2.0 * grid.ksq * h) * 0.5 * grid.inv_ksq, h)


def ou_increment(spectrum: NoiseSpectrum, h: float, stream: NoiseStream, step: int,
                 which: str = "full") -> np.ndarray:
    """Exact OU increment over ``[step*h, (step+1)*h]`` as vector coefficients."""
    if not h > 0:
        raise ContractViolation(f"time step must be positive, got {h}")
    grid = spectrum.grid
    phi = spectrum.part(which)
    r = stream.substeps
    hf = h / r
    amp = np.sqrt(ou_variance(grid, hf)) * phi
    decay = grid.heat(hf)
    acc = None
    for i in range(r):
        z = stream.gaussians(grid, step * r + i)
        acc = z * amp if acc is None else acc * decay + z * amp
    return acc[..., None, :, :] * grid.kperp_unit


def sample_ou(spectrum: NoiseSpectrum, t: float, stream: NoiseStream, index: int = 0,
              which: str = "xi1") -> np.ndarray:
    """Exact draw of ``X[t]`` started from 0 (``t = inf`` gives the stationary law)."""
    grid = spectrum.grid
    amp = np.sqrt(ou_variance(grid, t)) * spectrum.part(which)
    z = stream.gaussians(grid, index)
    return (z * amp)[..., None, :, :] * grid.kperp_unit


@dataclass(frozen=True, eq=False)
class StochasticConvolution:
    """Value of ``X~ = X + e^{t Delta} u_r`` at time ``t``.

    ``step`` counts completed steps and feeds the noise counter.
    """

    Xhat: np.ndarray = field(repr=False)
    t: float = 0.0
    step: int = 0
    initial_rough: SpectralField | None = None

    @classmethod
    def start(cls, grid: TorusGrid, initial_rough: SpectralField | None = None, batch: tuple = ()):
        x0 = np.zeros(batch + (2, grid.n, grid.n), dtype=complex)
        if initial_rough is not None:
            x0 = x0 + initial_rough.coeffs
        return cls(x0, 0.0, 0, initial_rough)

    def field(self, grid: TorusGrid) -> SpectralField:
        return SpectralField(grid, self.Xhat)

    def pure(self, grid: TorusGrid) -> np.ndarray:
        """The noise part ``X = X~ - e^{t Delta} u_r``."""
        if self.initial_rough is None:
            return self.Xhat
        return self.Xhat - self.initial_rough.coeffs * grid.heat(self.t)


def ou_step(s: StochasticConvolution, h: float, spectrum: NoiseSpectrum, stream: NoiseStream,
            which: str = "xi1_only", eta: np.ndarray | None = None) -> StochasticConvolution:
    """Advance by one exact OU transition of length ``h``.

    ``which="xi1_only"`` leaves the modes ``|k| <= R`` without forcing.  A
    precomputed increment ``eta`` can be passed to share one noise draw between
    several equations.
    """
    if not h > 0:
        raise ContractViolation(f"time step must be positive, got {h}")
    grid = spectrum.grid
    if eta is None:
        eta = ou_increment(spectrum, h, stream, s.step, "xi1" if which == "xi1_only" else which)
    return replace(s, Xhat=s.Xhat * grid.heat(h) + eta, t=s.t + h, step=s.step + 1)


def wick_constant(spectrum: NoiseSpectrum, t: float, N: float | None = None, which: str = "xi1") -> np.ndarray:
    """``E X_N(x) (x) X_N(x)`` for ``X_N = L_N X``; independent of ``x``.

    ``N=None`` keeps every retained mode.
    """
    if t < 0:
        raise ContractViolation("t must be >= 0")
    grid = spectrum.grid
    s = np.abs(spectrum.part(which)) ** 2 * ou_variance(grid, t)
    if N is not None:
        s = s * dyadic_system(grid).low_multiplier(N) ** 2
    kp = np.stack([grid.k[1], -grid.k[0]])
    w = s * grid.inv_ksq
    return np.einsum("iab,jab,ab->ij", kp, kp, w)


def wick_square(Xhat: np.ndarray, grid: TorusGrid, spectrum: NoiseSpectrum, t: float,
                N: float | None = None) -> np.ndarray:
    """``:X_N^{(x)2}: = X_N (x) X_N - E X_N (x) X_N`` as tensor coefficients."""
    if N is not None:
        Xhat = Xhat * dyadic_system(grid).low_multiplier(N)
    sq = grid.sym_product(Xhat, Xhat)
    sq[..., :, :, 0, 0] -= wick_constant(spectrum, t, N)
    return sq


def wick_square_field(s: StochasticConvolution, N: float | None, spectrum: NoiseSpectrum, t: float | None = None) -> TensorField:
    grid = spectrum.grid
    return TensorField(grid, wick_square(s.Xhat, grid, spectrum, s.t if t is None else t, N))

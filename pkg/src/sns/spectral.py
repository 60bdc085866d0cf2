"""Fourier representation of vector fields on the unit torus.

Conventions used throughout the package:

* A field is stored by its Fourier coefficients ``f(x) = sum_k fhat(k) exp(2 pi i k.x)``
  on the lattice ``k in {-n/2, ..., n/2-1}^2`` in numpy FFT order.  The Nyquist
  row/column ``k_i = -n/2`` is always zero, so the populated lattice is symmetric.
* Derivatives act as ``d_j -> i k_j`` and the Laplacian as ``-|k|^2``.  This is the
  torus of side ``2 pi`` rescaled to unit side; it keeps heat-kernel decay factors
  in the form ``exp(-|k|^2 t)``.
* ``L^p`` norms are taken with respect to the unit-mass measure on the torus, so
  ``||f||_{L^2}^2 = sum_k |fhat(k)|^2``.

Coefficient arrays carry the component axes just before the two lattice axes and
may carry any number of leading batch axes: vectors are ``(..., 2, n, n)`` and
tensors ``(..., 2, 2, n, n)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "TorusGrid",
    "SpectralField",
    "TensorField",
    "ResourceError",
    "ContractViolation",
    "to_physical",
    "to_spectral",
    "leray_project",
    "nonlinear_term",
    "sym_tensor",
    "divergence",
    "grad_sym",
    "inner",
    "l2_norm",
    "basis_field",
    "random_field",
    "write_snapshot",
    "read_snapshot",
    "encode_snapshot",
    "decode_snapshot",
]

# largest number of complex samples a single physical-space transform may allocate
MAX_SAMPLES = 1 << 27

DIV_TOL = 1e-10


class ResourceError(RuntimeError):
    """A transform would exceed the configured memory budget."""


class ContractViolation(ValueError):
    """An operation was called with inputs outside its contract."""


@dataclass(frozen=True)
class TorusGrid:
    """Lattice of retained Fourier modes for an ``n x n`` resolution.

    ``dealias`` selects the retained set used by products: ``"two_thirds"`` keeps
    ``|k_i| < n/3`` and evaluates products on the ``n``-point grid; ``"none"``
    keeps the full lattice and evaluates products on a ``3n/2`` grid.  In both
    cases the truncated product is free of aliasing.
    """

    n: int
    dealias: str = "two_thirds"
    workers: int = 1

    # Delta acts on mode k as multiplication by -|k|^2 (unit torus, analytic convention)
    eigenvalue_convention = "-|k|^2"

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 4 or self.n % 2:
            raise ContractViolation(f"grid size n must be an even integer >= 4, got {self.n!r}")
        if self.dealias not in ("two_thirds", "none"):
            raise ContractViolation(f"unknown dealias rule {self.dealias!r}")

    @cached_property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wave vectors, shape ``(2, n, n)``."""
        k1, k2 = np.meshgrid(self.freqs, self.freqs, indexing="ij")
        return np.stack([k1, k2]).astype(float)

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.k[0] ** 2 + self.k[1] ** 2

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        out = np.zeros_like(self.ksq)
        np.divide(1.0, self.ksq, out=out, where=self.ksq > 0)
        return out

    @cached_property
    def lattice(self) -> np.ndarray:
        """Populated lattice: everything except the Nyquist row and column."""
        f = self.freqs
        ok = f != -self.n // 2
        return ok[:, None] & ok[None, :]

    @cached_property
    def kmax(self) -> int:
        return int(np.ceil(self.n / 3)) - 1 if self.dealias == "two_thirds" else self.n // 2 - 1

    @cached_property
    def retained(self) -> np.ndarray:
        f = np.abs(self.freqs)
        ok = f <= self.kmax
        return (ok[:, None] & ok[None, :]) & self.lattice

    @cached_property
    def product_size(self) -> int:
        return self.n if self.dealias == "two_thirds" else (3 * self.n) // 2

    @cached_property
    def kperp_unit(self) -> np.ndarray:
        """``i k_perp / |k|`` with ``k_perp = (k2, -k1)``; zero at k = 0.

        The factor ``i`` makes a conjugate-symmetric amplitude produce a real field.
        """
        kp = np.stack([self.k[1], -self.k[0]])
        out = np.zeros(kp.shape, dtype=complex)
        nz = self.ksq > 0
        out[:, nz] = 1j * kp[:, nz] / self.kabs[nz]
        return out

    @cached_property
    def neg_index(self) -> np.ndarray:
        """Array index of ``-k`` for each lattice index."""
        return (-np.arange(self.n)) % self.n

    def conj_reflect(self, c: np.ndarray) -> np.ndarray:
        """Return ``conj(c(-k))`` for arrays whose last two axes are the lattice."""
        idx = self.neg_index
        return np.conj(c[..., idx, :][..., :, idx])

    def heat(self, t: float) -> np.ndarray:
        return np.exp(-self.ksq * t)

    # ------------------------------------------------------------------ transforms
    def _pad_index(self, m: int) -> np.ndarray:
        return self.freqs % m

    def to_phys(self, c: np.ndarray, m: int | None = None, real: bool = False) -> np.ndarray:
        """Samples on the ``m x m`` collocation grid ``x = (a, b) / m``.

        With ``real=True`` the coefficients are taken to be conjugate-symmetric and
        a real inverse transform returns real samples at half the cost.
        """
        m = self.n if m is None else int(m)
        if m < self.n:
            raise ContractViolation(f"collocation grid {m} smaller than lattice {self.n}")
        batch = int(np.prod(c.shape[:-2], dtype=np.int64)) if c.ndim > 2 else 1
        if batch * m * m > MAX_SAMPLES:
            raise ResourceError(f"{batch} x {m}^2 samples exceeds budget of {MAX_SAMPLES}")
        h = self.n // 2
        if real:
            # only k2 >= 0 is needed; the lattice's k2 = -n/2 column is zero
            half = np.zeros(c.shape[:-2] + (m, m // 2 + 1), dtype=complex)
            half[..., :h, :h] = c[..., :h, :h]
            half[..., m - h:, :h] = c[..., h:, :h]
            return sfft.irfft2(half, s=(m, m), norm="forward", workers=self.workers)
        if m == self.n:
            pad = c
        else:
            pad = np.zeros(c.shape[:-2] + (m, m), dtype=complex)
            pad[..., :h, :h] = c[..., :h, :h]
            pad[..., :h, m - h:] = c[..., :h, h:]
            pad[..., m - h:, :h] = c[..., h:, :h]
            pad[..., m - h:, m - h:] = c[..., h:, h:]
        return sfft.ifft2(pad, norm="forward", workers=self.workers)

    def to_spec(self, s: np.ndarray) -> np.ndarray:
        """Fourier coefficients on the lattice of samples on an ``m x m`` grid.

        Real input goes through a real forward transform and the negative ``k2``
        half is filled in by conjugate symmetry.
        """
        m = s.shape[-1]
        h = self.n // 2
        out = np.empty(s.shape[:-2] + (self.n, self.n), dtype=complex)
        if np.isrealobj(s):
            half = sfft.rfft2(s, norm="forward", workers=self.workers)
            out[..., :h, :h] = half[..., :h, :h]
            out[..., h:, :h] = half[..., m - h:, :h]
            # k2 < 0 from conj symmetry: fhat(k1, k2) = conj(fhat(-k1, -k2))
            rows = np.take(half[..., 1:h + 1], (-self.freqs) % m, axis=-2)
            out[..., :, h:] = np.conj(rows[..., ::-1])
            return out * self.lattice
        full = sfft.fft2(s, norm="forward", workers=self.workers)
        if m == self.n:
            return full * self.lattice
        out[..., :h, :h] = full[..., :h, :h]
        out[..., :h, h:] = full[..., :h, m - h:]
        out[..., h:, :h] = full[..., m - h:, :h]
        out[..., h:, h:] = full[..., m - h:, m - h:]
        return out * self.lattice

    # ------------------------------------------------------------------ operators
    def leray(self, c: np.ndarray) -> np.ndarray:
        kdotc = self.k[0] * c[..., 0, :, :] + self.k[1] * c[..., 1, :, :]
        proj = kdotc * self.inv_ksq
        out = c - self.k * proj[..., None, :, :]
        out[..., :, 0, 0] = 0.0
        return out

    def div_tensor(self, t: np.ndarray) -> np.ndarray:
        """``div(T)_j = sum_i d_i T_ij``."""
        return 1j * (self.k[0] * t[..., 0, :, :, :] + self.k[1] * t[..., 1, :, :, :])

    def div_vector(self, c: np.ndarray) -> np.ndarray:
        return 1j * (self.k[0] * c[..., 0, :, :] + self.k[1] * c[..., 1, :, :])

    def grad(self, c: np.ndarray) -> np.ndarray:
        """``(grad u)_ij = d_i u_j``, shape ``(..., 2, 2, n, n)``."""
        return 1j * self.k[:, None] * c[..., None, :, :, :]

    def sym_outer_phys(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pointwise ``a (x)_s b`` of physical vector samples ``(..., 2, m, m)``."""
        out = np.empty(a.shape[:-3] + (2, 2) + a.shape[-2:], dtype=np.result_type(a, b))
        out[..., 0, 0, :, :] = a[..., 0, :, :] * b[..., 0, :, :]
        out[..., 1, 1, :, :] = a[..., 1, :, :] * b[..., 1, :, :]
        off = 0.5 * (a[..., 0, :, :] * b[..., 1, :, :] + a[..., 1, :, :] * b[..., 0, :, :])
        out[..., 0, 1, :, :] = off
        out[..., 1, 0, :, :] = off
        return out

    def sym_product(self, a: np.ndarray, b: np.ndarray, real: bool = False) -> np.ndarray:
        """Dealiased ``a (x)_s b`` for coefficient arrays, truncated to the retained set.

        Inputs are restricted to the retained set first, which makes the product
        exact on every retained mode.  ``real=True`` asserts that both inputs are
        conjugate-symmetric and uses real transforms.
        """
        m = self.product_size
        pa = self.to_phys(a * self.retained, m, real)
        pb = pa if b is a else self.to_phys(b * self.retained, m, real)
        return self.spec_tensor(self.sym_outer_phys(pa, pb))

    def spec_tensor(self, t_phys: np.ndarray) -> np.ndarray:
        """Fourier transform of symmetric physical tensor samples, retained modes only."""
        comps = np.stack([t_phys[..., 0, 0, :, :], t_phys[..., 1, 1, :, :], t_phys[..., 0, 1, :, :]], axis=-3)
        c = self.to_spec(comps) * self.retained
        out = np.empty(t_phys.shape[:-4] + (2, 2, self.n, self.n), dtype=complex)
        out[..., 0, 0, :, :] = c[..., 0, :, :]
        out[..., 1, 1, :, :] = c[..., 1, :, :]
        out[..., 0, 1, :, :] = c[..., 2, :, :]
        out[..., 1, 0, :, :] = c[..., 2, :, :]
        return out

    def pdiv(self, t: np.ndarray) -> np.ndarray:
        """``P div(T)`` restricted to the retained set."""
        return self.leray(self.div_tensor(t)) * self.retained


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable R^2-valued field given by its Fourier coefficients.

    ``coeffs`` has shape ``(..., 2, n, n)``; leading axes index an ensemble.
    """

    grid: TorusGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        n = self.grid.n
        if c.ndim < 3 or c.shape[-3:] != (2, n, n):
            raise ContractViolation(f"expected coefficients of shape (..., 2, {n}, {n}), got {c.shape}")
        c = c * self.grid.lattice
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: TorusGrid, batch: tuple = ()) -> "SpectralField":
        return cls(grid, np.zeros(batch + (2, grid.n, grid.n), dtype=complex))

    @property
    def mean_free(self) -> bool:
        return bool(np.all(np.abs(self.coeffs[..., :, 0, 0]) <= DIV_TOL * (1 + self._scale())))

    @property
    def div_free(self) -> bool:
        d = self.grid.div_vector(self.coeffs)
        return bool(np.max(np.abs(d), initial=0.0) <= DIV_TOL * (1 + self._scale() * self.grid.n))

    @property
    def is_real(self) -> bool:
        c = self.coeffs
        return bool(np.max(np.abs(c - self.grid.conj_reflect(c)), initial=0.0) <= 1e-12 * (1 + self._scale()))

    def _scale(self) -> float:
        return float(np.max(np.abs(self.coeffs), initial=0.0))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * a)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)


@dataclass(frozen=True, eq=False)
class TensorField:
    """Immutable 2x2-matrix-valued field, coefficients of shape ``(..., 2, 2, n, n)``."""

    grid: TorusGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        n = self.grid.n
        if c.ndim < 4 or c.shape[-4:] != (2, 2, n, n):
            raise ContractViolation(f"expected coefficients of shape (..., 2, 2, {n}, {n}), got {c.shape}")
        c = c * self.grid.lattice
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def is_symmetric(self) -> bool:
        c = self.coeffs
        return bool(np.array_equal(c[..., 0, 1, :, :], c[..., 1, 0, :, :]))

    def __add__(self, other: "TensorField") -> "TensorField":
        _check_grid(self, other)
        return TensorField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "TensorField") -> "TensorField":
        _check_grid(self, other)
        return TensorField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a) -> "TensorField":
        return TensorField(self.grid, self.coeffs * a)

    __rmul__ = __mul__


def _check_grid(a, b):
    if a.grid != b.grid:
        raise ContractViolation(f"grid mismatch: {a.grid} vs {b.grid}")


def to_physical(f: SpectralField | TensorField, oversample: float = 1.0, real: bool = True) -> np.ndarray:
    """Sample ``f`` on an ``(oversample*n)^2`` collocation grid.

    Returns the real part unless ``real=False``; the imaginary part vanishes for
    conjugate-symmetric coefficients.
    """
    if oversample < 1:
        raise ContractViolation("oversample must be >= 1")
    m = int(round(oversample * f.grid.n))
    s = f.grid.to_phys(f.coeffs, m)
    return s.real.copy() if real else s


def to_spectral(samples: np.ndarray, grid: TorusGrid) -> SpectralField:
    """Inverse of :func:`to_physical` for vector samples ``(..., 2, m, m)`` with ``m >= n``."""
    return SpectralField(grid, grid.to_spec(np.asarray(samples)))


def leray_project(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.grid.leray(f.coeffs))


def sym_tensor(u: SpectralField, v: SpectralField) -> TensorField:
    """Dealiased symmetrised product ``u (x)_s v``."""
    _check_grid(u, v)
    return TensorField(u.grid, u.grid.sym_product(u.coeffs, v.coeffs))


def divergence(t: TensorField) -> SpectralField:
    return SpectralField(t.grid, t.grid.div_tensor(t.coeffs))


def grad_sym(u: SpectralField) -> TensorField:
    g = u.grid.grad(u.coeffs)
    return TensorField(u.grid, 0.5 * (g + np.swapaxes(g, -4, -3)))


def nonlinear_term(u: SpectralField, rule: str | None = None) -> SpectralField:
    """``P div(u (x) u)``.

    ``rule`` is ``"two_thirds"`` or ``"none"``; when it differs from the grid's own
    rule the product is evaluated on a grid of the requested kind.
    """
    grid = u.grid
    if rule is not None and rule != grid.dealias:
        grid = TorusGrid(u.grid.n, rule, u.grid.workers)
    if not u.div_free:
        raise ContractViolation("nonlinear_term requires a divergence-free field")
    c = u.coeffs
    return SpectralField(u.grid, grid.pdiv(grid.sym_product(c, c)))


def inner(f: SpectralField, g: SpectralField):
    """L^2 pairing ``<f, g>`` (Plancherel), batched over leading axes."""
    _check_grid(f, g)
    return np.sum((f.coeffs * np.conj(g.coeffs)).real, axis=(-3, -2, -1))


def l2_norm(f: SpectralField):
    return np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=(-3, -2, -1)))


def basis_field(grid: TorusGrid, k: tuple[int, int], amplitude: complex = 1.0, real: bool = False) -> SpectralField:
    """The mode ``e_k(x) = exp(2 pi i k.x) k_perp/|k_perp|``, ``k_perp = (k2, -k1)``.

    With ``real=True`` the conjugate partner is added so the field is real-valued.
    """
    k1, k2 = k
    if k1 == 0 and k2 == 0:
        raise ContractViolation("e_0 is undefined")
    c = np.zeros((2, grid.n, grid.n), dtype=complex)
    norm = np.hypot(k1, k2)
    c[:, k1 % grid.n, k2 % grid.n] += amplitude * np.array([k2, -k1]) / norm
    if real:
        c[:, (-k1) % grid.n, (-k2) % grid.n] += np.conj(amplitude) * np.array([k2, -k1]) / norm
    return SpectralField(grid, c)


def random_field(grid: TorusGrid, rng: np.random.Generator, slope: float = 0.0, div_free: bool = True,
                 batch: tuple = (), retained: bool = True) -> SpectralField:
    """Real mean-free Gaussian field with ``E|fhat(k)|^2 ~ |k|^(-2 slope)``."""
    shape = batch + (2, grid.n, grid.n)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    z = 0.5 * (z + grid.conj_reflect(z))
    amp = np.zeros_like(grid.ksq)
    nz = grid.ksq > 0
    amp[nz] = grid.kabs[nz] ** (-slope)
    c = z * amp
    if retained:
        c = c * grid.retained
    if div_free:
        c = grid.leray(c)
    return SpectralField(grid, c)


# ---------------------------------------------------------------------- snapshot format
SNAPSHOT_MAGIC = b"SNS2"
SNAPSHOT_VERSION = 1
FLAG_MEAN_FREE = 1
FLAG_DIV_FREE = 2
_HEADER = struct.Struct("<4sHIB")


def encode_snapshot(f: SpectralField) -> bytes:
    """Binary snapshot: magic, u16 version, u32 n, u8 flags, then for each component the
    ``n^2`` coefficients as little-endian (re, im) f64 pairs, row-major over the FFT-ordered
    ``k1`` index then ``k2`` index."""
    if f.coeffs.ndim != 3:
        raise ContractViolation("snapshots hold a single field, not an ensemble")
    flags = (FLAG_MEAN_FREE if f.mean_free else 0) | (FLAG_DIV_FREE if f.div_free else 0)
    head = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, f.grid.n, flags)
    body = np.ascontiguousarray(f.coeffs).astype("<c16").tobytes()
    return head + body


def decode_snapshot(buf: bytes, offset: int = 0, dealias: str = "two_thirds") -> tuple[SpectralField, int, int]:
    """Parse one snapshot at ``offset``; returns ``(field, flags, next_offset)``."""
    if len(buf) - offset < _HEADER.size:
        raise ValueError("truncated snapshot header")
    magic, version, n, flags = _HEADER.unpack_from(buf, offset)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    size = 2 * n * n * 16
    start = offset + _HEADER.size
    if len(buf) < start + size:
        raise ValueError("truncated snapshot body")
    c = np.frombuffer(buf, dtype="<c16", count=2 * n * n, offset=start).reshape(2, n, n)
    return SpectralField(TorusGrid(n, dealias), c.astype(complex)), flags, start + size


def write_snapshot(path, f: SpectralField) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_snapshot(f))


def read_snapshot(path, dealias: str = "two_thirds") -> SpectralField:
    with open(path, "rb") as fh:
        buf = fh.read()
    f, _, end = decode_snapshot(buf, 0, dealias)
    if end != len(buf):
        raise ValueError("trailing bytes after snapshot")
    return f

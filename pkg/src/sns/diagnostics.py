"""Lyapunov functionals, stopping-time bookkeeping and the energy ledger of ``w^L``.

The infimum defining ``V_alpha`` is not constructive.  We search the family
``u_r in {0} U {H_M u}`` over dyadic cuts ``M``, which gives a certified upper
bound: every returned split is feasible and its cost is evaluated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .lp import BesovIndex, besov_norm, besov_norm_plancherel, block_norms, dyadic_system, log2_plus_ceil
from .noise import NoiseSpectrum
from .spectral import ContractViolation, SpectralField

__all__ = [
    "LyapunovConfig",
    "LyapunovResult",
    "lyapunov_V",
    "lyapunov_VN",
    "c_minus_kappa",
    "StoppingMonitor",
    "stopping_monitor",
    "ito_correction",
    "LedgerRow",
    "EnergyLedger",
    "energy_ledger_step",
]

# exponents p in [1, 6] at which the time-integral constraint of V^(N) is checked
VN_P_GRID = tuple(np.linspace(1.0, 6.0, 11))
VN_QUADRATURE = 64


@dataclass(frozen=True)
class LyapunovConfig:
    alpha: float
    kappa: float = 0.01
    candidate_cuts: tuple | None = None   # None: every dyadic M = 2^j that reaches the lattice
    N: int | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ContractViolation("alpha must be positive")
        if self.candidate_cuts is not None:
            for M in self.candidate_cuts:
                if M < 1 or abs(math.log2(M) - round(math.log2(M))) > 1e-12:
                    raise ContractViolation(f"candidate cut {M} is not a dyadic number >= 1")

    def cuts(self, grid) -> tuple:
        if self.candidate_cuts is not None:
            return tuple(self.candidate_cuts)
        dy = dyadic_system(grid)
        return tuple(2.0 ** j for j in range(0, dy.j_max + 1))


@dataclass
class LyapunovResult:
    value: np.ndarray          # V for each field in the batch
    cut: np.ndarray            # chosen M (0 means u_r = 0)
    rough_norm: np.ndarray     # ||u_r||_{C^-kappa}
    smooth_norm: np.ndarray    # ||u - u_r||_{L^2}

    def rough_part(self, u: SpectralField) -> SpectralField:
        dy = dyadic_system(u.grid)
        cuts = np.atleast_1d(self.cut)
        mult = np.stack([dy.high_multiplier(M) if M > 0 else np.zeros_like(u.grid.ksq) for M in cuts])
        c = u.coeffs if u.coeffs.ndim > 3 else u.coeffs[None]
        out = c * mult[:, None]
        return SpectralField(u.grid, out if u.coeffs.ndim > 3 else out[0])


def c_minus_kappa(f, kappa: float, oversample: float = 2.0, real: bool = True):
    """``||f||_{C^{-kappa}} = sup_j 2^{-j kappa} ||Delta_j f||_{L^inf}`` by collocation (real fields)."""
    return besov_norm(f, BesovIndex(-kappa, np.inf, np.inf), oversample=oversample, real=real)


def _l2(c: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(c) ** 2, axis=(-3, -2, -1)))


def _candidate_norms(u: SpectralField, cfg: LyapunovConfig):
    """Yield ``(M, multiplier, ||H_M u||_{C^-kappa})`` for each cut.

    ``Delta_j H_M u = Delta_j u`` for ``j >= J+1`` and vanishes for ``j <= J-2``, so
    only two blocks are recomputed per cut.
    """
    grid = u.grid
    dy = dyadic_system(grid)
    blocks = list(dy.blocks)
    base = block_norms(u, np.inf, dy, real=True)
    wts = 2.0 ** (-cfg.kappa * np.array(blocks, dtype=float))
    wts = wts.reshape((-1,) + (1,) * (base.ndim - 1))
    for M in cfg.cuts(grid):
        J = log2_plus_ceil(M)
        mult = dy.high_multiplier(M)
        norms = base.copy()
        for b, j in enumerate(blocks):
            if j <= J - 2:
                norms[b] = 0.0
        redo = [j for j in (J - 1, J) if j in blocks]
        if redo:
            fresh = block_norms(u, np.inf, dy, multiplier=mult, blocks=redo, real=True)
            for i, j in enumerate(redo):
                norms[blocks.index(j)] = fresh[i]
        yield M, mult, (norms * wts).max(axis=0)


def _search(u: SpectralField, cfg: LyapunovConfig, extra=None) -> LyapunovResult:
    if not u.mean_free:
        raise ContractViolation("Lyapunov functional needs a mean-free field")
    total = _l2(u.coeffs)
    best = np.array(total, dtype=float)
    cut = np.zeros_like(best)
    rough = np.zeros_like(best)
    smooth = np.array(total, dtype=float)
    for M, mult, cn in _candidate_norms(u, cfg):
        s = _l2(u.coeffs * (1.0 - mult))
        val = s + cn
        ok = (cn <= cfg.alpha) & (val < best)
        if extra is not None and np.any(ok):
            ok = ok & extra(M, mult)
        best = np.where(ok, val, best)
        cut = np.where(ok, M, cut)
        rough = np.where(ok, cn, rough)
        smooth = np.where(ok, s, smooth)
    return LyapunovResult(best, cut, rough, smooth)


def lyapunov_V(u: SpectralField, cfg: LyapunovConfig) -> LyapunovResult:
    """Upper bound on ``V_alpha(u) = inf ||u_s|| + ||u_r||_{C^-kappa}`` over ``||u_r||_{C^-kappa} <= alpha``."""
    return _search(u, cfg)


def _heat_integral_ok(u: SpectralField, mult: np.ndarray, alpha: float, N: int) -> np.ndarray:
    """``int_0^1 ||e^{t Delta} u_r||_{B^0_{4,pN}}^{pN} dt <= alpha^{pN}`` for every p on the grid."""
    grid = u.grid
    dy = dyadic_system(grid)
    nodes, weights = np.polynomial.legendre.leggauss(VN_QUADRATURE)
    ts = 0.5 * (nodes + 1.0)
    ws = 0.5 * weights
    c = u.coeffs * mult
    logs = []
    for t in ts:
        a = block_norms(SpectralField(grid, c * grid.heat(t)), 4.0, dy, real=True)
        with np.errstate(divide="ignore"):
            logs.append(np.log(a))
    logs = np.stack(logs)                      # (nodes, blocks, batch...)
    lw = np.log(ws).reshape((-1, 1) + (1,) * (logs.ndim - 2))
    ok = np.ones(logs.shape[2:], dtype=bool)
    for p in VN_P_GRID:
        q = p * N
        val = logsumexp(lw + q * logs, axis=(0, 1))
        ok &= val <= q * math.log(alpha) + 1e-12
    return ok


def lyapunov_VN(u: SpectralField, cfg: LyapunovConfig) -> LyapunovResult:
    """``V^(N)_alpha``: the search of :func:`lyapunov_V` with the two extra rough-part constraints.

    The sandwich ``V <= V^(N) <= ||u||`` is checked on every call.
    """
    if cfg.N is None or cfg.N < 1:
        raise ContractViolation("lyapunov_VN needs an integer N >= 1")
    N = int(cfg.N)
    dy = dyadic_system(u.grid)

    def extra(M, mult):
        ur = SpectralField(u.grid, u.coeffs * mult)
        ok = besov_norm_plancherel(ur, -cfg.kappa / N, dy) <= cfg.alpha
        if np.any(ok):
            ok = ok & _heat_integral_ok(u, mult, cfg.alpha, N)
        return ok

    res = _search(u, cfg, extra)
    base = _search(u, cfg).value
    total = _l2(u.coeffs)
    tol = 1e-12 * (1 + total)
    if np.any(base > res.value + tol) or np.any(res.value > total + tol):
        raise AssertionError("sandwich V <= V^(N) <= ||u|| violated")
    return res


# ------------------------------------------------------------------ stopping time
@dataclass
class StoppingMonitor:
    """First-passage bookkeeping for the three trigger conditions.

    ``T`` holds ``nan`` until a trajectory triggers; ``cause`` is one of ``"w"``,
    ``"X"``, ``"Y"`` (the first listed wins on ties).  ``Tbar`` tracks the first
    time the reference remainder reaches ``2 lambda_+`` (capped at 1).
    """

    w_threshold: np.ndarray
    alpha0: float
    kappa: float = 0.01
    lam_plus: np.ndarray | float = 1.0
    T: np.ndarray = None
    cause: np.ndarray = None
    Tbar: np.ndarray = None

    def __post_init__(self):
        self.w_threshold = np.asarray(self.w_threshold, dtype=float)
        shape = self.w_threshold.shape
        if self.T is None:
            self.T = np.full(shape, np.nan)
        if self.cause is None:
            self.cause = np.full(shape, "", dtype=object)
        if self.Tbar is None:
            self.Tbar = np.full(shape, np.nan)

    @property
    def x_threshold(self) -> float:
        return self.alpha0

    @property
    def y_threshold(self) -> float:
        return self.alpha0 ** 2

    def update(self, t: float, w_norm, x_norm, y_sup, wbar_norm=None) -> np.ndarray:
        """Record triggers at time ``t``; returns the mask of newly triggered entries."""
        fresh = np.isnan(self.T)
        hits = [("w", np.asarray(w_norm) > self.w_threshold),
                ("X", np.asarray(x_norm) > self.x_threshold),
                ("Y", np.asarray(y_sup) > self.y_threshold)]
        new = np.zeros(self.T.shape, dtype=bool)
        for name, hit in hits:
            m = fresh & ~new & np.broadcast_to(hit, self.T.shape)
            self.cause = np.where(m, name, self.cause)
            new |= m
        self.T = np.where(new, t, self.T)
        if wbar_norm is not None:
            hit = (np.asarray(wbar_norm) >= 2 * np.asarray(self.lam_plus)) | (t >= 1.0)
            mb = np.isnan(self.Tbar) & np.broadcast_to(hit, self.Tbar.shape)
            self.Tbar = np.where(mb, min(t, 1.0), self.Tbar)
        return new

    @classmethod
    def never(cls, shape=()) -> "StoppingMonitor":
        return cls(np.full(shape, np.inf), np.inf)


def stopping_monitor(state, monitor: StoppingMonitor, y_oversample: float = 2.0) -> dict:
    """Evaluate the trigger quantities of an ansatz state and update ``monitor``."""
    q = state.monitor_quantities(y_oversample)
    new = monitor.update(state.t, q["w_norm"], q["X_norm"], q["Y_sup"], q.get("wbar_norm"))
    q["new_trigger"] = new
    q["T"] = monitor.T
    q["cause"] = monitor.cause
    return q


# ------------------------------------------------------------------ energy ledger
def ito_correction(spectrum: NoiseSpectrum, lam: float) -> float:
    """Rate of the Ito correction in ``d(1/2 ||w^L||^2)`` for the noise ``L_lambda xi_1 + xi_2``.

    Each mode carries one real direction per conjugate pair, so the rate is
    ``1/2 sum_k |phi_k|^2 m_k^2`` with ``m_k`` the multiplier of ``L_lambda`` on
    ``xi_1`` modes and ``1`` on ``xi_2`` modes (sum over retained ``k != 0``).
    """
    dy = dyadic_system(spectrum.grid)
    m = np.where(spectrum.mask1, dy.low_multiplier(lam), 1.0)
    return 0.5 * float(np.sum(np.abs(spectrum.phi) ** 2 * m ** 2))


LEDGER_TERMS = ("dissipation", "transport", "pair_H", "pair_P", "pair_R", "martingale", "quadratic")


@dataclass
class LedgerRow:
    """One step of the energy balance of ``1/2 ||w^L||^2``.

    ``dissipation = -h ||grad w^L||^2``; ``pair_*`` are ``h <w^L, term>`` for the
    self-transport, the ``w^L (x)_s w^H`` term, the ``w para P X~`` term and the
    remainder ``R``; ``martingale + quadratic`` is the Stratonovich pairing with the
    noise increment and ``ito`` the compensator of ``quadratic``.
    """

    t: float
    h: float
    dissipation: np.ndarray
    transport: np.ndarray
    pair_H: np.ndarray
    pair_P: np.ndarray
    pair_R: np.ndarray
    martingale: np.ndarray
    quadratic: np.ndarray
    ito: float
    realized: np.ndarray = None
    residual: np.ndarray = None

    def total(self) -> np.ndarray:
        return sum(getattr(self, name) for name in LEDGER_TERMS)

    def as_dict(self) -> dict:
        out = {"t": self.t, "h": self.h, "ito": self.ito}
        for name in LEDGER_TERMS + ("realized", "residual"):
            out[name] = getattr(self, name)
        return out


def energy_ledger_step(parts: LedgerRow, realized) -> LedgerRow:
    """Attach the realized increment of ``1/2 ||w^L||^2`` and the closing residual."""
    parts.realized = np.asarray(realized, dtype=float)
    parts.residual = parts.realized - parts.total()
    return parts


@dataclass
class EnergyLedger:
    rows: list = field(default_factory=list)

    def append(self, row: LedgerRow) -> None:
        self.rows.append(row)

    def cumulative(self, name: str) -> np.ndarray:
        return np.cumsum([np.asarray(getattr(r, name)) for r in self.rows], axis=0)

    def column(self, name: str) -> np.ndarray:
        return np.stack([np.asarray(getattr(r, name), dtype=float) for r in self.rows])

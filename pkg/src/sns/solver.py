"""Time integration of the ansatz ``u = X~ + Y + w`` and of two reference solvers.

Ansatz components, all advanced with forcings frozen at the old state:

    X~   exact OU transition driven by xi_1, started from u_r
    Y    (d_t - Delta) Y   = -P div(2 Y (x)_s X~ + :X~^2:)
    w^H  (d_t - Delta) w^H = -2 P div(w para_lo H_K X~)
    w^L  (d_t - Delta) w^L = F_L + L_lambda xi_1 + xi_2
    w    = -L_lambda X~ + w^H + w^L

with ``F_L = -P div(w^L (x) w^L) - 2 P div(w^L (x)_s w^H) - 2 P div(w para_lo P_{lambda,K} X~) + R``
and the remainder ``R = -P div(w^H (x) w^H + 2 w para_hi_res H_lambda X~ + 2 w (x)_s Y + Y (x) Y - (L_lambda X~)^2)``.

Two first-order exponential schemes are available for the drift, per step of size h:

    ``lawson``: c <- e^{h Delta} (c + h F)
    ``etd1``:   c <- e^{h Delta} c + h phi_1(-h |k|^2) F

The Da Prato-Debussche reference ``u = v + X`` is always advanced with ``etd1``.
Running the ansatz with ``etd1`` reproduces it up to rounding (the forcings add up
to the same total), while ``lawson`` gives an independent discretisation whose
distance to the reference shrinks at order h.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .diagnostics import (
    LedgerRow,
    LyapunovConfig,
    StoppingMonitor,
    c_minus_kappa,
    energy_ledger_step,
    ito_correction,
    lyapunov_V,
)
from .lp import DyadicSystem, dyadic_system, lp_norm
from .noise import NoiseSpectrum, NoiseStream, StochasticConvolution, ou_increment, wick_constant
from .paraproduct import para_terms, phys_blocks
from .spectral import ContractViolation, SpectralField, TorusGrid

__all__ = [
    "NumericalBlowUp",
    "AnsatzModel",
    "AnsatzState",
    "InitialSplit",
    "DPDState",
    "make_initial_split",
    "init_ansatz",
    "init_dpd",
    "step_Y",
    "compute_wH",
    "step_wL",
    "step_v_dpd",
    "ansatz_step",
    "dpd_step",
    "galerkin_step",
    "RunReport",
    "run_trajectory",
    "default_step",
]


class NumericalBlowUp(FloatingPointError):
    """Non-finite values appeared; ``payload`` describes where."""

    def __init__(self, message: str, payload: dict | None = None):
        super().__init__(message)
        self.payload = payload or {}


def _check_finite(name: str, c: np.ndarray, t: float, step: int) -> None:
    if not np.all(np.isfinite(c)):
        bad = ~np.isfinite(c)
        raise NumericalBlowUp(f"non-finite values in {name} at t={t:.6g}",
                              {"field": name, "t": t, "step": step, "count": int(bad.sum())})


def _pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched real L^2 pairing of coefficient arrays."""
    return np.sum((a * np.conj(b)).real, axis=(-3, -2, -1))


def _sq(a: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(a) ** 2, axis=(-3, -2, -1))


def default_step(grid: TorusGrid, safety: float = 1.0) -> float:
    """``0.25 / max |k|^2`` over retained modes, times ``safety``."""
    return 0.25 * safety / float(grid.ksq[grid.retained].max())


def _phi1h(grid: TorusGrid, h: float) -> np.ndarray:
    """``h phi_1(-h |k|^2) = (1 - exp(-h |k|^2)) / |k|^2`` (``h`` at ``k = 0``)."""
    return np.where(grid.ksq > 0, -np.expm1(-h * grid.ksq) * grid.inv_ksq, h)


# ---------------------------------------------------------------------- model and states
@dataclass(frozen=True, eq=False)
class AnsatzModel:
    """Immutable ingredients shared by every trajectory of a run."""

    grid: TorusGrid
    spectrum: NoiseSpectrum
    kappa: float = 0.01
    k_max: float | None = None      # clamp for K; default is the Nyquist frequency n/2
    scheme: str = "lawson"

    def __post_init__(self):
        if self.scheme not in ("lawson", "etd1"):
            raise ContractViolation(f"unknown scheme {self.scheme!r}")
        if self.spectrum.grid != self.grid:
            raise ContractViolation("noise spectrum lives on a different grid")

    @cached_property
    def dy(self) -> DyadicSystem:
        return dyadic_system(self.grid)

    @property
    def nyquist(self) -> float:
        return self.grid.n / 2 if self.k_max is None else self.k_max

    def advance(self, c: np.ndarray, F: np.ndarray, h: float) -> np.ndarray:
        g = self.grid
        if self.scheme == "lawson":
            return (c + h * F) * g.heat(h)
        return c * g.heat(h) + F * _phi1h(g, h)

    def multiplier(self, kind: str, values) -> np.ndarray:
        """Stack of ``H`` or ``L`` multipliers, shape ``batch + (1, n, n)``."""
        values = np.asarray(values, dtype=float)
        fn = self.dy.high_multiplier if kind == "H" else self.dy.low_multiplier
        flat = [fn(float(v)) for v in values.ravel()]
        return np.stack(flat).reshape(values.shape + (1,) + self.grid.ksq.shape)


@dataclass
class InitialSplit:
    """``u[0] = u_s + u_r`` with ``||u_r||_{C^-kappa} <= alpha``."""

    u_s: SpectralField
    u_r: SpectralField
    alpha: float
    kappa: float = 0.01

    def __post_init__(self):
        if self.u_s.grid != self.u_r.grid:
            raise ContractViolation("u_s and u_r live on different grids")
        if np.any(self.rough_norm > self.alpha * (1 + 1e-12)):
            raise ContractViolation(f"||u_r||_C^-kappa = {np.max(self.rough_norm):.4g} exceeds {self.alpha}")

    @cached_property
    def rough_norm(self):
        return c_minus_kappa(self.u_r, self.kappa)

    @property
    def u(self) -> SpectralField:
        return self.u_s + self.u_r

    @property
    def lam(self):
        return np.sqrt(_sq(self.u_s.coeffs))


def make_initial_split(grid: TorusGrid, lam: float, rough: float, alpha: float, kappa: float = 0.01,
                       seed: int = 0, rough_cut: float = 4.0, shell: float = 1.0) -> InitialSplit:
    """Deterministic initial data from ``seed``.

    ``u_s`` is a real divergence-free field on the shell ``|k| = shell`` with
    ``||u_s|| = lam``; ``u_r`` is a high-pass Gaussian field rescaled so that
    ``||u_r||_{C^-kappa} = rough``.
    """
    if rough > alpha:
        raise ContractViolation("rough part must satisfy ||u_r||_{C^-kappa} <= alpha")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    z = rng.standard_normal(grid.ksq.shape) + 1j * rng.standard_normal(grid.ksq.shape)
    z = 0.5 * (z + grid.conj_reflect(z)) * (np.abs(grid.kabs - shell) < 1e-9)
    c = z[None] * grid.kperp_unit
    norm = math.sqrt(float(_sq(c)))
    u_s = SpectralField(grid, c * (lam / norm) if norm > 0 and lam > 0 else np.zeros_like(c))
    u_r = SpectralField.zeros(grid)
    if rough > 0:
        z = rng.standard_normal(grid.ksq.shape) + 1j * rng.standard_normal(grid.ksq.shape)
        z = 0.5 * (z + grid.conj_reflect(z)) * np.sqrt(0.5 * grid.inv_ksq)
        c = z[None] * grid.kperp_unit * dyadic_system(grid).high_multiplier(rough_cut) * grid.retained
        f = SpectralField(grid, c)
        u_r = f * (rough / c_minus_kappa(f, kappa))
    return InitialSplit(u_s, u_r, alpha, kappa)


@dataclass
class AnsatzState:
    """Mutable state of one trajectory or a batch of trajectories.

    Fields are coefficient arrays (``(..., 2, n, n)``); ``lam`` is fixed at the
    start and ``K`` is refreshed after every step from the new ``w``.
    """

    model: AnsatzModel
    X: StochasticConvolution
    Y: np.ndarray
    w: np.ndarray
    wH: np.ndarray
    wL: np.ndarray
    lam: np.ndarray
    K: np.ndarray
    saturated: np.ndarray
    stream: NoiseStream
    R_term: np.ndarray | None = None

    @property
    def t(self) -> float:
        return self.X.t

    @property
    def step_index(self) -> int:
        return self.X.step

    @property
    def lam_plus(self) -> np.ndarray:
        return np.maximum(self.lam, 1.0)

    def field(self, name: str) -> SpectralField:
        c = self.X.Xhat if name == "X" else getattr(self, name)
        return SpectralField(self.model.grid, c)

    @property
    def u(self) -> np.ndarray:
        return self.X.Xhat + self.Y + self.w

    def decomposition_gap(self) -> np.ndarray:
        """``||w - (-L_lambda X~ + w^H + w^L)||`` (bookkeeping check)."""
        L = self.model.multiplier("L", self.lam)
        return np.sqrt(_sq(self.w - (-L * self.X.Xhat + self.wH + self.wL)))

    def monitor_quantities(self, oversample: float = 2.0) -> dict:
        g = self.model.grid
        m = int(round(oversample * g.n))
        Xpure = SpectralField(g, self.X.pure(g))
        return {
            "w_norm": np.sqrt(_sq(self.w)),
            "X_norm": np.asarray(c_minus_kappa(Xpure, self.model.kappa, oversample)),
            "Y_sup": lp_norm(g.to_phys(self.Y, m).real, np.inf, 1),
        }


def _update_K(model: AnsatzModel, w: np.ndarray, lam_plus: np.ndarray):
    """``K = lambda_+ v ||w||_{L^12}^100 / lambda_+^99`` in log space, clamped at the Nyquist frequency."""
    g = model.grid
    w12 = lp_norm(g.to_phys(w, 2 * g.n).real, 12.0, 1)
    with np.errstate(divide="ignore"):
        logK = np.maximum(np.log(lam_plus), 100.0 * np.log(w12) - 99.0 * np.log(lam_plus))
    cap = math.log(max(model.nyquist, 1.0))
    saturated = logK > cap
    K = np.exp(np.minimum(logK, max(cap, float(np.max(np.log(lam_plus))))))
    K = np.maximum(K, lam_plus)
    return K, saturated


def init_ansatz(model: AnsatzModel, split: InitialSplit, stream: NoiseStream) -> AnsatzState:
    g = model.grid
    u_s = split.u_s.coeffs * g.retained
    u_r = split.u_r.coeffs * g.retained
    batch = u_s.shape[:-3]
    if stream.batched and not batch:
        batch = (len(stream.trajectories),)
        u_s = np.broadcast_to(u_s, batch + u_s.shape).copy()
        u_r = np.broadcast_to(u_r, batch + u_r.shape).copy()
    lam = np.sqrt(_sq(u_s))
    X = StochasticConvolution(u_r.copy(), 0.0, 0, SpectralField(g, u_r))
    L = model.multiplier("L", lam)
    w = u_s.copy()
    wL = w + L * u_r
    zero = np.zeros_like(w)
    K, sat = _update_K(model, w, np.maximum(lam, 1.0))
    return AnsatzState(model, X, zero.copy(), w, zero.copy(), wL, lam, K, sat, stream)


# ---------------------------------------------------------------------- component steps
def _cache(state) -> dict:
    """Per-state cache of physical samples; a stepped state is a new object with a fresh cache."""
    return state.__dict__.setdefault("_cache", {})


def _phys(state: AnsatzState, name: str, c: np.ndarray | None = None) -> np.ndarray:
    """Real samples of a component on the product mesh."""
    cache = _cache(state)
    if name not in cache:
        g = state.model.grid
        src = c if c is not None else (state.X.Xhat if name == "X" else getattr(state, name))
        cache[name] = g.to_phys(src * g.retained, g.product_size, real=True)
    return cache[name]


def _zero_tensor(p: np.ndarray) -> np.ndarray:
    return np.zeros(p.shape[:-3] + (2, 2) + p.shape[-2:])


def _forcing_Y(state: AnsatzState) -> np.ndarray:
    g = state.model.grid
    pX, pY = _phys(state, "X"), _phys(state, "Y")
    T = g.spec_tensor(2.0 * g.sym_outer_phys(pY, pX) + g.sym_outer_phys(pX, pX))
    # the Wick constant only touches the mean mode, which P div annihilates;
    # subtracting it keeps the tensor equal to the renormalised square
    T[..., :, :, 0, 0] -= wick_constant(state.model.spectrum, state.t)
    return -g.pdiv(T)


def step_Y(state: AnsatzState, h: float) -> SpectralField:
    """``Y`` at ``t + h`` from the state at ``t``."""
    F = _forcing_Y(state)
    _check_finite("Y forcing", F, state.t, state.step_index)
    return SpectralField(state.model.grid, state.model.advance(state.Y, F, h))


def _w_blocks(state: AnsatzState) -> list:
    """Block samples of ``w`` shared by the three paraproducts of a step."""
    cache = _cache(state)
    if "w_blocks" not in cache:
        cache["w_blocks"] = phys_blocks(state.model.grid, state.model.dy, state.w, real=True)
    return cache["w_blocks"]


def _forcing_wH(state: AnsatzState) -> np.ndarray:
    model = state.model
    g = model.grid
    HK = model.multiplier("H", state.K) * state.X.Xhat
    lo = para_terms(g, state.w, HK, model.dy, ("lo",), f_blocks=_w_blocks(state), real=True)["lo"]
    return -2.0 * g.pdiv(lo)


def compute_wH(state: AnsatzState, h: float) -> SpectralField:
    """``w^H`` at ``t + h``; uses the ``K`` stored in ``state``."""
    F = _forcing_wH(state)
    _check_finite("wH forcing", F, state.t, state.step_index)
    return SpectralField(state.model.grid, state.model.advance(state.wH, F, h))


def _wL_terms(state: AnsatzState) -> dict:
    """The four drift pieces of the ``w^L`` equation, each already Leray-projected."""
    model = state.model
    g = model.grid
    dy = model.dy
    Xt = state.X.Xhat
    lam = np.asarray(state.lam)
    H_lam = model.multiplier("H", lam)
    L_lam = 1.0 - H_lam
    below = (lam <= np.asarray(state.K))[..., None, None, None]
    band = np.where(below, H_lam - model.multiplier("H", state.K), 0.0)
    w = state.w
    wb = _w_blocks(state)
    lo_P = para_terms(g, w, band * Xt, dy, ("lo",), f_blocks=wb, real=True, transform=False)["lo"]
    hr = para_terms(g, w, H_lam * Xt, dy, ("hi", "res"), f_blocks=wb, real=True, transform=False)
    pw, pwL, pwH, pY = (_phys(state, k) for k in ("w", "wL", "wH", "Y"))
    pLX = g.to_phys(L_lam * Xt * g.retained, g.product_size, real=True)
    outer = g.sym_outer_phys
    R = outer(pwH, pwH) + 2.0 * outer(pw, pY) + outer(pY, pY) - outer(pLX, pLX)
    for part in (hr["hi"], hr["res"]):
        if part is not None:
            R = R + 2.0 * part
    if lo_P is None:
        lo_P = _zero_tensor(pw)
    stack = np.stack([outer(pwL, pwL), outer(pwL, pwH), lo_P, R])
    T = g.pdiv(g.spec_tensor(stack))
    return {"self": -T[0], "H": -2.0 * T[1], "P": -2.0 * T[2], "R": -T[3], "L_lam": L_lam}


def _wL_update(state: AnsatzState, h: float, eta: np.ndarray, ledger: bool):
    model = state.model
    g = model.grid
    terms = _wL_terms(state)
    F = terms["self"] + terms["H"] + terms["P"] + terms["R"]
    _check_finite("wL forcing", F, state.t, state.step_index)
    spec = model.spectrum
    eta_L = eta * np.where(spec.mask1, terms["L_lam"], spec.mask2.astype(float))
    drift = model.advance(state.wL, F, h)
    new = drift + eta_L
    row = None
    if ledger:
        wL = state.wL
        row = LedgerRow(
            t=state.t, h=h,
            dissipation=-h * _sq(wL * g.kabs),
            transport=h * _pair(wL, terms["self"]),
            pair_H=h * _pair(wL, terms["H"]),
            pair_P=h * _pair(wL, terms["P"]),
            pair_R=h * _pair(wL, terms["R"]),
            martingale=_pair(drift, eta_L),
            quadratic=0.5 * _sq(eta_L),
            ito=h * ito_correction(spec, float(np.max(state.lam))),
        )
        row = energy_ledger_step(row, 0.5 * (_sq(new) - _sq(wL)))
    return new, terms["R"], row


def step_wL(state: AnsatzState, h: float, eta: np.ndarray | None = None) -> SpectralField:
    """``w^L`` at ``t + h``.  ``eta`` is the full-noise OU increment of the step; by
    default it is drawn from the state's stream at the current counter, which is the
    same draw :func:`ansatz_step` shares with ``X~``."""
    if eta is None:
        eta = ou_increment(state.model.spectrum, h, state.stream, state.step_index, "full")
    new, _, _ = _wL_update(state, h, eta, False)
    return SpectralField(state.model.grid, new)


def ansatz_step(state: AnsatzState, h: float, ledger: bool = False):
    """Advance every component by ``h``; returns ``(new_state, ledger_row_or_None)``."""
    model = state.model
    g = model.grid
    spec = model.spectrum
    eta = ou_increment(spec, h, state.stream, state.step_index, "full")
    eta1 = eta * spec.mask1
    Y_new = model.advance(state.Y, _forcing_Y(state), h)
    wH_new = model.advance(state.wH, _forcing_wH(state), h)
    wL_new, R, row = _wL_update(state, h, eta, ledger)
    X_new = replace(state.X, Xhat=state.X.Xhat * g.heat(h) + eta1, t=state.t + h, step=state.step_index + 1)
    L = model.multiplier("L", state.lam)
    w_new = -L * X_new.Xhat + wH_new + wL_new
    for name, c in (("Y", Y_new), ("wH", wH_new), ("wL", wL_new)):
        _check_finite(name, c, state.t, state.step_index)
    K, sat = _update_K(model, w_new, state.lam_plus)
    new = replace(state, X=X_new, Y=Y_new, w=w_new, wH=wH_new, wL=wL_new, K=K,
                  saturated=sat, R_term=R)
    return new, row


# ---------------------------------------------------------------------- Da Prato-Debussche reference
@dataclass
class DPDState:
    """``u = v + X`` with ``X`` the OU process of ``xi_1`` started from 0."""

    grid: TorusGrid
    spectrum: NoiseSpectrum
    X: StochasticConvolution
    v: np.ndarray
    stream: NoiseStream

    @property
    def t(self) -> float:
        return self.X.t

    @property
    def u(self) -> np.ndarray:
        return self.v + self.X.Xhat


def init_dpd(grid: TorusGrid, spectrum: NoiseSpectrum, u0: np.ndarray, stream: NoiseStream) -> DPDState:
    u0 = np.asarray(u0, dtype=complex) * grid.retained
    if stream.batched and u0.ndim == 3:
        u0 = np.broadcast_to(u0, (len(stream.trajectories),) + u0.shape).copy()
    X = StochasticConvolution(np.zeros_like(u0), 0.0, 0, None)
    return DPDState(grid, spectrum, X, u0.copy(), stream)


def _dpd_forcing(grid: TorusGrid, v: np.ndarray, X: np.ndarray) -> np.ndarray:
    # (v + X)^2 and v^2 + 2 v (x)_s X + X^2 coincide; the Wick constant is killed by P div
    u = grid.to_phys((v + X) * grid.retained, grid.product_size, real=True)
    return -grid.pdiv(grid.spec_tensor(grid.sym_outer_phys(u, u)))


def step_v_dpd(v: SpectralField, state: DPDState, h: float, eta2: np.ndarray | None = None) -> SpectralField:
    """Exponential-Euler step of ``d_t v = Delta v - P div(v^2 + 2 v (x)_s X + :X^2:) + xi_2``."""
    g = state.grid
    if eta2 is None:
        eta2 = ou_increment(state.spectrum, h, state.stream, state.X.step, "full") * state.spectrum.mask2
    F = _dpd_forcing(g, v.coeffs, state.X.Xhat)
    _check_finite("v forcing", F, state.t, state.X.step)
    return SpectralField(g, v.coeffs * g.heat(h) + F * _phi1h(g, h) + eta2)


def dpd_step(state: DPDState, h: float) -> DPDState:
    g = state.grid
    spec = state.spectrum
    eta = ou_increment(spec, h, state.stream, state.X.step, "full")
    F = _dpd_forcing(g, state.v, state.X.Xhat)
    v = state.v * g.heat(h) + F * _phi1h(g, h) + eta * spec.mask2
    _check_finite("v", v, state.t, state.X.step)
    X = replace(state.X, Xhat=state.X.Xhat * g.heat(h) + eta * spec.mask1, t=state.t + h, step=state.X.step + 1)
    return replace(state, X=X, v=v)


# ---------------------------------------------------------------------- sharp Galerkin reference
def _sharp_mask(grid: TorusGrid, sharp_N: int | None) -> np.ndarray:
    if sharp_N is None or sharp_N <= 0:
        return grid.retained
    if sharp_N > grid.kmax:
        raise ContractViolation(f"sharp_N={sharp_N} exceeds the retained range |k_i| <= {grid.kmax}")
    f = np.abs(grid.freqs)
    ok = f <= sharp_N
    return ok[:, None] & ok[None, :] & grid.lattice


def _euler_rhs(grid: TorusGrid, u: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return -grid.pdiv(grid.sym_product(u, u, real=True)) * mask


def galerkin_step(u: SpectralField, spectrum: NoiseSpectrum, h: float, sharp_N: int | None,
                  stream: NoiseStream | None = None, step: int = 0, scheme: str = "etd1",
                  nonlinear: bool = True, viscosity: bool = True, noise: bool = True,
                  tol: float = 1e-15, max_iter: int = 200) -> SpectralField:
    """One step of the sharp-truncated equation ``d_t u = Delta u - P div(u (x) u) + xi``.

    ``scheme="etd1"``: ``u <- e^{h Delta} u + h phi_1 F(u) + eta``.
    ``scheme="split"``: exact OU half step, implicit-midpoint step of the truncated
    Euler flow (conserves energy and enstrophy up to ``tol``), exact OU half step.
    """
    g = u.grid
    mask = _sharp_mask(g, sharp_N)
    c = u.coeffs * mask
    if noise and stream is None:
        raise ContractViolation("galerkin_step with noise needs a NoiseStream")
    heat = g.heat(h) if viscosity else 1.0
    if scheme == "etd1":
        F = _euler_rhs(g, c, mask) if nonlinear else 0.0
        lin = _phi1h(g, h) if viscosity else h
        out = c * heat + F * lin
        if noise:
            out = out + _galerkin_noise(spectrum, h, stream, step, viscosity) * mask
    elif scheme == "split":
        half = g.heat(h / 2) if viscosity else 1.0
        if noise:
            c = c * half + _galerkin_noise(spectrum, h / 2, stream, 2 * step, viscosity) * mask
        elif viscosity:
            c = c * half
        if nonlinear:
            c = _midpoint(g, c, h, mask, tol, max_iter)
        out = c * half
        if noise:
            out = out + _galerkin_noise(spectrum, h / 2, stream, 2 * step + 1, viscosity) * mask
    else:
        raise ContractViolation(f"unknown scheme {scheme!r}")
    _check_finite("galerkin u", out, float("nan"), step)
    return SpectralField(g, out)


def _galerkin_noise(spectrum, h, stream, step, viscosity):
    if viscosity:
        return ou_increment(spectrum, h, stream, step, "full")
    g = spectrum.grid
    z = stream.gaussians(g, step) * spectrum.phi * math.sqrt(h)
    return z[..., None, :, :] * g.kperp_unit


def _midpoint(g: TorusGrid, c: np.ndarray, h: float, mask: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Solve ``c1 = c + h F((c + c1)/2)`` by fixed-point iteration."""
    scale = float(np.sqrt(np.max(_sq(c)))) + 1e-300
    c1 = c + h * _euler_rhs(g, c, mask)
    for _ in range(max_iter):
        nxt = c + h * _euler_rhs(g, 0.5 * (c + c1), mask)
        err = float(np.sqrt(np.max(_sq(nxt - c1))))
        c1 = nxt
        if err <= tol * scale:
            return c1
    raise NumericalBlowUp("implicit midpoint iteration did not converge",
                          {"residual": err, "scale": scale, "h": h})


# ---------------------------------------------------------------------- orchestration
@dataclass
class RunReport:
    """Per-step rows, terminal status and provenance of a run."""

    rows: list = field(default_factory=list)
    status: str = "running"
    provenance: dict = field(default_factory=dict)
    T: np.ndarray | None = None
    cause: np.ndarray | None = None
    Tbar: np.ndarray | None = None
    lam: np.ndarray | None = None
    w_threshold: np.ndarray | None = None
    saturated_steps: int = 0

    COLUMNS = ("traj", "t", "w_norm", "wL_norm", "grad_wL_norm", "X_norm", "Y_sup", "K", "saturated",
               "dissipation", "transport", "pair_H", "pair_P", "pair_R", "martingale", "quadratic",
               "ito", "residual")

    def column(self, name: str, traj: int | None = None) -> np.ndarray:
        rows = self.rows if traj is None else [r for r in self.rows if r["traj"] == traj]
        return np.array([r[name] for r in rows])


def code_version() -> str:
    from . import __version__
    return __version__


def run_trajectory(config, seed: int | None = None, trajectories=None, checkpoint_dir: str | None = None,
                   resume: str | None = None, with_dpd: bool | None = None, ledger: bool = True):
    """Run the ansatz (and optionally the reference solver) on a shared time grid.

    The stopping monitor is evaluated every ``config.monitor_every`` steps; the run
    continues past ``T`` and only records it.  Returns ``(report, state, dpd_state)``.
    """
    from .io import load_checkpoint, save_checkpoint

    seed = config.seed if seed is None else seed
    grid = config.grid()
    spectrum = config.spectrum(grid)
    model = AnsatzModel(grid, spectrum, config.kappa, config.k_max or None, "lawson")
    trajectories = tuple(range(config.ensemble)) if trajectories is None else trajectories
    stream = NoiseStream(seed, tuple(trajectories), purpose=1, substeps=config.substeps)
    with_dpd = config.run_dpd if with_dpd is None else with_dpd
    h = config.h
    nsteps = int(round(config.t_end / h))

    split = make_initial_split(grid, config.lam0, config.rough_fraction * 2 * config.alpha0,
                               2 * config.alpha0, config.kappa, seed, config.rough_cut)
    report = RunReport(provenance={"config_hash": config.config_hash(), "seed": seed,
                                   "code_version": code_version(), "trajectories": list(trajectories)})
    if resume is not None:
        ck = load_checkpoint(resume, grid)
        state, dpd, monitor = _restore(ck, model, stream, with_dpd)
        report.provenance["resumed_from"] = str(resume)
    else:
        state = init_ansatz(model, split, stream)
        dpd = init_dpd(grid, spectrum, split.u.coeffs, stream) if with_dpd else None
        V0 = lyapunov_V(SpectralField(grid, state.u), LyapunovConfig(config.alpha0, config.kappa)).value
        monitor = StoppingMonitor(np.maximum(2 * V0, 2.0), config.alpha0, config.kappa, state.lam_plus)
    report.lam = state.lam
    report.w_threshold = monitor.w_threshold

    def record(row_ledger):
        q = stopping_monitor_quantities(state, dpd)
        monitor.update(state.t, q["w_norm"], q["X_norm"], q["Y_sup"], q.get("wbar_norm"))
        wL_norm = np.sqrt(_sq(state.wL))
        grad = np.sqrt(_sq(state.wL * grid.kabs))
        for i, traj in enumerate(trajectories):
            row = {"traj": traj, "t": state.t, "w_norm": _at(q["w_norm"], i), "wL_norm": _at(wL_norm, i),
                   "grad_wL_norm": _at(grad, i), "X_norm": _at(q["X_norm"], i), "Y_sup": _at(q["Y_sup"], i),
                   "K": _at(state.K, i), "saturated": bool(_at(state.saturated, i))}
            if row_ledger is not None:
                for name in ("dissipation", "transport", "pair_H", "pair_P", "pair_R", "martingale",
                             "quadratic", "residual"):
                    row[name] = _at(getattr(row_ledger, name), i)
                row["ito"] = row_ledger.ito
            report.rows.append(row)

    if resume is None:
        record(None)
    start = state.step_index
    # overflow on the way to inf/nan is reported through NumericalBlowUp instead
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(start, nsteps):
            state, row = ansatz_step(state, h, ledger=ledger)
            if dpd is not None:
                dpd = dpd_step(dpd, h)
            report.saturated_steps += int(np.sum(state.saturated))
            if (s + 1) % max(config.monitor_every, 1) == 0 or s + 1 == nsteps:
                if (s + 1) % max(config.report_every, 1) == 0 or s + 1 == nsteps:
                    record(row)
                else:
                    q = stopping_monitor_quantities(state, dpd)
                    monitor.update(state.t, q["w_norm"], q["X_norm"], q["Y_sup"], q.get("wbar_norm"))
            if checkpoint_dir and config.checkpoint_every and (s + 1) % config.checkpoint_every == 0:
                path = os.path.join(checkpoint_dir, f"checkpoint_{s + 1:08d}.snsc")
                save_checkpoint(path, state, dpd, monitor, seed, config.config_hash())
    report.T, report.cause, report.Tbar = monitor.T, monitor.cause, monitor.Tbar
    report.status = "completed"
    return report, state, dpd


def _at(a, i):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a[i].item()


def stopping_monitor_quantities(state: AnsatzState, dpd: DPDState | None) -> dict:
    q = state.monitor_quantities()
    if dpd is not None:
        # the reference remainder v = u - X stands in for the auxiliary remainder
        q["wbar_norm"] = np.sqrt(_sq(dpd.v))
    return q


def _restore(ck: dict, model: AnsatzModel, stream: NoiseStream, with_dpd: bool):
    g = model.grid
    head = ck["header"]
    f = ck["fields"]
    X = StochasticConvolution(f["X"], head["t"], head["step"], SpectralField(g, f["u_r"]))
    lam = np.asarray(head["lam"])
    state = AnsatzState(model, X, f["Y"], f["w"], f["wH"], f["wL"], lam, np.asarray(head["K"]),
                        np.asarray(head["saturated"]), stream)
    dpd = None
    if with_dpd and "v" in f:
        dX = StochasticConvolution(f["X_dpd"], head["t"], head["step"], None)
        dpd = DPDState(g, model.spectrum, dX, f["v"], stream)
    mon = head["monitor"]
    monitor = StoppingMonitor(np.asarray(mon["w_threshold"]), mon["alpha0"], mon["kappa"], state.lam_plus,
                              np.asarray(mon["T"], dtype=float), np.asarray(mon["cause"], dtype=object),
                              np.asarray(mon["Tbar"], dtype=float))
    return state, dpd, monitor

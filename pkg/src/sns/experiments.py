"""Ensemble experiments built on the solvers: invariant-measure statistics, Lyapunov
decay, coupled mixing runs, stopping-time tails and energy-ledger averages."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .diagnostics import LyapunovConfig, StoppingMonitor, ito_correction, lyapunov_V
from .noise import NoiseSpectrum, NoiseStream
from .solver import (
    AnsatzModel,
    _sharp_mask,
    ansatz_step,
    dpd_step,
    galerkin_step,
    init_ansatz,
    init_dpd,
    make_initial_split,
)
from .spectral import SpectralField, TorusGrid

__all__ = [
    "InvariantResult",
    "invariant_stats",
    "DecayResult",
    "lyapunov_decay_experiment",
    "MixingResult",
    "mixing_diagnostic",
    "stopping_time_samples",
    "tail_slope",
    "ledger_ensemble",
]


def _half_plane(grid: TorusGrid, mask: np.ndarray) -> np.ndarray:
    """One representative of each pair ``{k, -k}`` inside ``mask`` (``k != 0``)."""
    k1, k2 = grid.k
    rep = (k1 > 0) | ((k1 == 0) & (k2 > 0))
    return mask & rep


# ---------------------------------------------------------------------- invariant measure
@dataclass
class InvariantResult:
    rows: list                 # dicts with k1, k2, estimate, stderr, theory, z
    frac_within: float
    n_samples: int
    V_samples: np.ndarray
    tail_fit: dict
    state: np.ndarray = field(repr=False, default=None)
    sums: dict = field(repr=False, default=None)

    COLUMNS = ("k1", "k2", "estimate", "stderr", "theory", "z")


def invariant_stats(grid: TorusGrid, spectrum: NoiseSpectrum, h: float, t_end: float, burn_in: float,
                    seed: int, n_traj: int = 8, sharp_N: int | None = None, scheme: str = "split",
                    sample_every: int = 10, n_batches: int = 10, nonlinear: bool = True,
                    alpha0: float | None = None, kappa: float = 0.01, resume: dict | None = None,
                    v_every: int = 20) -> InvariantResult:
    """Per-mode stationary second moments from a long sharp-Galerkin run.

    Time averages over ``[burn_in, burn_in + t_end]`` are split into ``n_batches``
    consecutive batches per trajectory; the standard error comes from the spread
    of batch means.  The theoretical value is ``|phi_k|^2 / (2 |k|^2)``, the
    stationary variance of the linear system, which the energy- and enstrophy-
    conserving truncated nonlinearity leaves invariant when ``|phi_k|`` is constant.
    ``resume`` (the ``sums`` of an earlier result) extends its statistics.
    """
    mask = _sharp_mask(grid, sharp_N)
    rep = _half_plane(grid, mask)
    stream = NoiseStream(seed, tuple(range(n_traj)), purpose=3)
    n_burn = int(round(burn_in / h))
    n_run = int(round(t_end / h))
    per_batch = max(1, n_run // n_batches)
    alpha0 = spectrum.alpha0 if alpha0 is None else alpha0
    if resume is None:
        u = np.zeros((n_traj, 2, grid.n, grid.n), dtype=complex)
        step = 0
        batch_sums, batch_counts, V = [], [], []
        for step in range(n_burn):
            u = galerkin_step(SpectralField(grid, u), spectrum, h, sharp_N, stream, step, scheme,
                              nonlinear=nonlinear).coeffs
        step = n_burn
    else:
        u = np.array(resume["state"])
        step = int(resume["step"])
        batch_sums = list(resume["batch_sums"])
        batch_counts = list(resume["batch_counts"])
        V = list(resume["V"])
    acc = np.zeros((n_traj,) + grid.ksq.shape)
    cnt = 0
    vcfg = LyapunovConfig(2 * alpha0 if alpha0 > 0 else 1.0, kappa)
    for i in range(n_run):
        u = galerkin_step(SpectralField(grid, u), spectrum, h, sharp_N, stream, step, scheme,
                          nonlinear=nonlinear).coeffs
        step += 1
        if (i + 1) % sample_every == 0:
            acc += np.sum(np.abs(u) ** 2, axis=-3)
            cnt += 1
        if (i + 1) % (sample_every * v_every) == 0:
            V.extend(np.atleast_1d(lyapunov_V(SpectralField(grid, u), vcfg).value).tolist())
        if (i + 1) % per_batch == 0 and cnt:
            batch_sums.append(acc / cnt)
            batch_counts.append(cnt)
            acc[:] = 0.0
            cnt = 0
    means = np.concatenate([b[None] for b in batch_sums])       # (batches, traj, n, n)
    means = means.reshape((-1,) + grid.ksq.shape)
    est = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / math.sqrt(means.shape[0])
    theory = np.abs(spectrum.phi) ** 2 * 0.5 * grid.inv_ksq
    rows = []
    zs = []
    for a, b in zip(*np.nonzero(rep)):
        z = (est[a, b] - theory[a, b]) / se[a, b] if se[a, b] > 0 else 0.0
        zs.append(z)
        rows.append({"k1": int(grid.k[0, a, b]), "k2": int(grid.k[1, a, b]), "estimate": float(est[a, b]),
                     "stderr": float(se[a, b]), "theory": float(theory[a, b]), "z": float(z)})
    zs = np.abs(np.array(zs))
    Varr = np.array(V)
    sums = {"state": u, "step": step, "batch_sums": batch_sums, "batch_counts": batch_counts, "V": V}
    return InvariantResult(rows, float(np.mean(zs <= 3.0)), int(means.shape[0]), Varr, tail_fit(Varr),
                           u, sums)


def tail_fit(samples: np.ndarray) -> dict:
    """Stretched-exponential fit ``log P(V >= x) ~ -c sqrt(x) + b`` and a log-log convexity flag.

    Reported only: the constants of the tail bound are unknown.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 10:
        return {"n": int(x.size)}
    surv = 1.0 - np.arange(x.size) / x.size
    sel = (x > np.quantile(x, 0.5)) & (surv > 5.0 / x.size)
    out = {"n": int(x.size)}
    if sel.sum() >= 5:
        slope, intercept = np.polyfit(np.sqrt(x[sel]), np.log(surv[sel]), 1)
        out.update(stretched_rate=float(-slope), intercept=float(intercept))
        lx, ly = np.log(x[sel]), np.log(surv[sel])
        c2 = np.polyfit(lx, ly, 2)[0]
        out["loglog_curvature"] = float(c2)
        out["faster_than_polynomial"] = bool(c2 < 0)
    return out


# ---------------------------------------------------------------------- Lyapunov decay
@dataclass
class DecayResult:
    times: np.ndarray
    curves: dict               # lambda -> (mean, stderr) arrays over times
    gamma: float
    C: float
    plateau: float
    final: dict                # lambda -> (mean, se) of the tail average
    common_plateau: bool
    decreasing: bool
    fits: dict = field(default_factory=dict)

    def passed(self) -> bool:
        return self.common_plateau and self.decreasing and self.gamma > 0


def _shell_data(grid: TorusGrid, lam: float, n_traj: int, seed: int) -> np.ndarray:
    split = make_initial_split(grid, lam, 0.0, 1.0, seed=seed)
    return np.broadcast_to(split.u_s.coeffs, (n_traj,) + split.u_s.coeffs.shape).copy()


def lyapunov_decay_experiment(grid: TorusGrid, spectrum: NoiseSpectrum, lambdas=(1.0, 4.0, 16.0),
                              h: float = 2e-3, t_end: float = 4.0, n_traj: int = 16, seed: int = 0,
                              n_samples: int = 40, alpha0: float | None = None, kappa: float = 0.01,
                              tail_fraction: float = 0.25) -> DecayResult:
    """Monte Carlo estimate of ``t -> E V_{2 alpha0}(u[t])`` from several initial magnitudes.

    All starting points share the noise (common random numbers).  The curves are
    fitted jointly to ``A_lambda exp(-gamma t) + B``; the plateau comparison uses the
    average over the last ``tail_fraction`` of the sampled times with a standard
    error computed across trajectories.
    """
    alpha0 = spectrum.alpha0 if alpha0 is None else alpha0
    vcfg = LyapunovConfig(2 * alpha0, kappa)
    nsteps = int(round(t_end / h))
    every = max(1, nsteps // n_samples)
    stream = NoiseStream(seed, tuple(range(n_traj)), purpose=4)
    curves, raw = {}, {}
    times = None
    for lam in lambdas:
        d = init_dpd(grid, spectrum, _shell_data(grid, lam, n_traj, seed), stream)
        ts, vals = [0.0], [lyapunov_V(SpectralField(grid, d.u), vcfg).value]
        for s in range(nsteps):
            d = dpd_step(d, h)
            if (s + 1) % every == 0:
                ts.append(d.t)
                vals.append(lyapunov_V(SpectralField(grid, d.u), vcfg).value)
        vals = np.array(vals)                   # (times, traj)
        raw[lam] = vals
        curves[lam] = (vals.mean(axis=1), vals.std(axis=1, ddof=1) / math.sqrt(n_traj))
        times = np.array(ts)
    tail = times >= times[-1] * (1 - tail_fraction)
    final = {}
    for lam, vals in raw.items():
        per_traj = vals[tail].mean(axis=0)
        final[lam] = (float(per_traj.mean()), float(per_traj.std(ddof=1) / math.sqrt(n_traj)))
    # common plateau: pairwise differences of the tail averages within 2 combined SE;
    # common random numbers make the paired difference the right statistic
    lams = list(lambdas)
    common = True
    for i in range(len(lams)):
        for j in range(i + 1, len(lams)):
            diff = raw[lams[i]][tail].mean(axis=0) - raw[lams[j]][tail].mean(axis=0)
            se = diff.std(ddof=1) / math.sqrt(n_traj)
            a, b = final[lams[i]], final[lams[j]]
            se_unpaired = math.hypot(a[1], b[1])
            if abs(diff.mean()) > 2 * max(se, se_unpaired, 1e-300):
                common = False
    # decreasing: each curve ends below where it started (lambda large enough to be above plateau)
    decreasing = all(curves[lam][0][-1] < curves[lam][0][0] for lam in lams if lam > 2 * alpha0 + 1)
    gamma, C, plateau, fits = _fit_decay(times, curves)
    return DecayResult(times, curves, gamma, C, plateau, final, common, decreasing, fits)


def _fit_decay(times: np.ndarray, curves: dict):
    lams = list(curves)
    t = np.concatenate([times] * len(lams))
    y = np.concatenate([curves[l][0] for l in lams])
    which = np.repeat(np.arange(len(lams)), times.size)

    def model(_, gamma, B, *A):
        return np.array(A)[which] * np.exp(-gamma * t) + B

    A0 = [max(curves[l][0][0] - curves[l][0][-1], 1e-6) for l in lams]
    p0 = [1.0, float(np.mean([curves[l][0][-1] for l in lams]))] + A0
    try:
        popt, _ = optimize.curve_fit(model, t, y, p0=p0, maxfev=20000)
    except RuntimeError:
        return float("nan"), float("nan"), float("nan"), {}
    gamma, B = float(popt[0]), float(popt[1])
    A = dict(zip(lams, map(float, popt[2:])))
    C = max(max(abs(a) for a in A.values()) / max(lams), B)
    return gamma, float(C), B, {"A": A}


# ---------------------------------------------------------------------- mixing
@dataclass
class MixingResult:
    times: np.ndarray
    quantiles: np.ndarray      # (times, 3): 10%, 50%, 90% of ||u1 - u2||
    wasserstein: np.ndarray    # energy-spectrum W1 distance between the two ensembles
    spearman: float
    decreasing: bool


def _energy_shell(grid: TorusGrid, u: np.ndarray, shells: int = 4) -> np.ndarray:
    """Energy in the first ``shells`` integer shells, per trajectory (the observable)."""
    e = np.sum(np.abs(u) ** 2, axis=-3)
    r = np.rint(grid.kabs).astype(int)
    return np.stack([e[..., r == s].sum(axis=-1) for s in range(1, shells + 1)], axis=-1)


def mixing_diagnostic(grid: TorusGrid, spectrum: NoiseSpectrum, u1: np.ndarray, u2: np.ndarray,
                      h: float, t_end: float, n_traj: int = 32, seed: int = 0,
                      n_samples: int = 20) -> MixingResult:
    """Synchronously coupled ensembles from two initial conditions.

    Reports quantiles of ``||u1[t] - u2[t]||`` and a Wasserstein-1 distance between
    the ensembles' low-shell energy distributions, a labelled proxy for total
    variation.  The trend statistic is Spearman's rho of the median gap against time.
    """
    stream = NoiseStream(seed, tuple(range(n_traj)), purpose=5)
    a = init_dpd(grid, spectrum, np.broadcast_to(u1, (n_traj,) + np.shape(u1)[-3:]).copy(), stream)
    b = init_dpd(grid, spectrum, np.broadcast_to(u2, (n_traj,) + np.shape(u2)[-3:]).copy(), stream)
    nsteps = int(round(t_end / h))
    every = max(1, nsteps // n_samples)
    ts, qs, ws = [], [], []

    def sample():
        gap = np.sqrt(np.sum(np.abs(a.u - b.u) ** 2, axis=(-3, -2, -1)))
        ts.append(a.t)
        qs.append(np.quantile(gap, [0.1, 0.5, 0.9]))
        ea, eb = _energy_shell(grid, a.u), _energy_shell(grid, b.u)
        ws.append(sum(stats.wasserstein_distance(ea[:, s], eb[:, s]) for s in range(ea.shape[1])))

    sample()
    for s in range(nsteps):
        a = dpd_step(a, h)
        b = dpd_step(b, h)
        if (s + 1) % every == 0:
            sample()
    ts, qs, ws = np.array(ts), np.array(qs), np.array(ws)
    med = qs[:, 1]
    if np.all(med == med[0]):
        rho = 0.0
    else:
        rho = float(stats.spearmanr(ts, med).statistic)
    return MixingResult(ts, qs, ws, rho, bool(rho < -0.8 or np.all(med == 0)))


# ---------------------------------------------------------------------- stopping time
def stopping_time_samples(grid: TorusGrid, spectrum: NoiseSpectrum, h: float, t_max: float, n_traj: int,
                          seed: int = 0, lam: float = 0.0, kappa: float = 0.01, monitor_every: int = 1,
                          alpha0: float | None = None, X_only: bool = False) -> np.ndarray:
    """First trigger times of the stopping rule (``inf`` if not triggered before ``t_max``).

    With ``X_only=True`` only the stochastic convolution is advanced, which is all
    the ``X`` trigger needs and is much cheaper.
    """
    from .diagnostics import c_minus_kappa

    alpha0 = spectrum.alpha0 if alpha0 is None else alpha0
    stream = NoiseStream(seed, tuple(range(n_traj)), purpose=6)
    nsteps = int(round(t_max / h))
    if X_only:
        from .noise import ou_increment
        X = np.zeros((n_traj, 2, grid.n, grid.n), dtype=complex)
        T = np.full(n_traj, np.inf)
        for s in range(nsteps):
            X = X * grid.heat(h) + ou_increment(spectrum, h, stream, s, "xi1")
            if (s + 1) % monitor_every == 0:
                hit = (c_minus_kappa(SpectralField(grid, X), kappa) > alpha0) & np.isinf(T)
                T[hit] = (s + 1) * h
        return T
    model = AnsatzModel(grid, spectrum, kappa)
    split = make_initial_split(grid, lam, 0.0, 2 * alpha0, kappa, seed)
    state = init_ansatz(model, split, stream)
    V0 = lyapunov_V(SpectralField(grid, state.u), LyapunovConfig(alpha0, kappa)).value
    mon = StoppingMonitor(np.maximum(2 * V0, 2.0) * np.ones(n_traj), alpha0, kappa)
    for s in range(nsteps):
        state, _ = ansatz_step(state, h)
        if (s + 1) % monitor_every == 0:
            q = state.monitor_quantities()
            mon.update(state.t, q["w_norm"], q["X_norm"], q["Y_sup"])
            if not np.any(np.isnan(mon.T)):
                break
    return np.where(np.isnan(mon.T), np.inf, mon.T)


def tail_slope(T: np.ndarray, n_points: int = 6, k: int = 50) -> dict:
    """Exponent ``s`` in ``P(T < a) ~ a^s`` over the smallest observable decade of ``T``.

    The lower-tail Hill estimator with the ``k``-th smallest event ``b`` as the
    threshold: ``s = (k - 1) / sum_{i<k} log(b / T_(i))``, the maximum-likelihood
    estimate for a pure power law below ``b`` (standard error ``s / sqrt(k)``).
    A least-squares line through the empirical CDF is less stable because its
    first point sits on a random order statistic.  ``a`` and ``P`` give the
    empirical CDF on ``[b/10, b]``.
    """
    T = np.sort(np.asarray(T, dtype=float))
    finite = T[np.isfinite(T) & (T > 0)]
    if finite.size < 5:
        return {"slope": float("nan"), "n_events": int(finite.size)}
    k = min(k, finite.size)
    b = finite[k - 1]
    logs = np.log(b / finite[:k - 1])
    slope = float((k - 1) / logs.sum()) if logs.sum() > 0 else float("nan")
    a = np.geomspace(b / 10.0, b, n_points)
    P = np.array([np.mean(T < x) for x in a])
    ecdf_monotone = bool(np.all(np.diff(P) >= 0))
    return {"slope": slope, "slope_se": slope / math.sqrt(k), "a": a.tolist(), "P": P.tolist(),
            "n_events": int(finite.size), "k": int(k), "ecdf_monotone": ecdf_monotone}


# ---------------------------------------------------------------------- energy ledger
def ledger_ensemble(grid: TorusGrid, spectrum: NoiseSpectrum, h: float, n_steps: int, n_traj: int,
                    seed: int = 0, lam: float = 1.0, rough: float = 0.0, kappa: float = 0.01) -> dict:
    """Run a batch of ansatz trajectories and summarise the ledger entries."""
    model = AnsatzModel(grid, spectrum, kappa)
    alpha = 2 * spectrum.alpha0 if spectrum.alpha0 > 0 else 1.0
    split = make_initial_split(grid, lam, rough * alpha, alpha, kappa, seed)
    stream = NoiseStream(seed, tuple(range(n_traj)), purpose=7)
    state = init_ansatz(model, split, stream)
    rows = []
    for _ in range(n_steps):
        state, row = ansatz_step(state, h, ledger=True)
        rows.append(row)
    mart = np.sum([r.martingale for r in rows], axis=0)
    quad = np.sum([r.quadratic for r in rows], axis=0)
    diss = np.array([r.dissipation for r in rows])
    resid = np.sum([r.residual for r in rows], axis=0)
    mean = float(mart.mean())
    se = float(mart.std(ddof=1) / math.sqrt(n_traj))
    return {
        "martingale_mean": mean, "martingale_se": se, "martingale_z": mean / se if se > 0 else 0.0,
        "quadratic_mean": float(quad.mean()), "ito_total": float(sum(r.ito for r in rows)),
        "ito_rate": ito_correction(spectrum, float(np.max(state.lam))),
        "dissipation_max": float(diss.max()), "residual_mean": float(resid.mean()),
        "residual_abs_max": float(np.abs(resid).max()), "saturated_steps": 0,
    }

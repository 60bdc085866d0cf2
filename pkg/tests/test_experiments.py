import numpy as np
import pytest

from sns.experiments import (
    invariant_stats,
    ledger_ensemble,
    lyapunov_decay_experiment,
    mixing_diagnostic,
    stopping_time_samples,
    tail_fit,
    tail_slope,
)
from sns.noise import NoiseSpectrum
from sns.solver import make_initial_split
from sns.spectral import TorusGrid


def test_mixing_identical_starts_never_separate():
    grid = TorusGrid(16)
    spec = NoiseSpectrum.band(grid, 1.0, 0.05, 2.0, 0.05)
    u = make_initial_split(grid, 2.0, 0.0, 0.1, seed=0).u.coeffs
    res = mixing_diagnostic(grid, spec, u, u, 5e-3, 0.1, n_traj=4, n_samples=5)
    assert np.all(res.quantiles == 0) and np.all(res.wasserstein == 0)
    assert res.decreasing and res.spearman == 0.0


def test_mixing_gap_shrinks():
    grid = TorusGrid(16)
    spec = NoiseSpectrum.band(grid, 1.0, 0.05, 2.0, 0.05)
    u1 = make_initial_split(grid, 1.0, 0.0, 0.1, seed=0).u.coeffs
    u2 = make_initial_split(grid, 8.0, 0.0, 0.1, seed=1).u.coeffs
    res = mixing_diagnostic(grid, spec, u1, u2, 5e-3, 1.0, n_traj=4, n_samples=10)
    med = res.quantiles[:, 1]
    assert med[-1] < 0.5 * med[0]
    assert res.decreasing


def test_invariant_stats_linear_rows():
    grid = TorusGrid(8, "none")
    spec = NoiseSpectrum.constant(grid, 1.0, 1.0, 0.0)
    res = invariant_stats(grid, spec, 0.01, 2.0, 0.5, seed=0, n_traj=2, nonlinear=False, sample_every=2,
                          n_batches=4)
    # one row per conjugate pair of retained nonzero modes
    assert len(res.rows) == (int(np.sum(grid.retained)) - 1) // 2
    for r in res.rows:
        assert r["theory"] == pytest.approx(1.0 / (2 * (r["k1"] ** 2 + r["k2"] ** 2)))
        assert r["stderr"] > 0
    assert res.n_samples == 2 * 4
    assert 0.0 <= res.frac_within <= 1.0


def test_invariant_resume_extends_batches():
    grid = TorusGrid(8, "none")
    spec = NoiseSpectrum.constant(grid, 1.0, 1.0, 0.0)
    kw = dict(n_traj=2, sample_every=2, n_batches=2)
    first = invariant_stats(grid, spec, 0.01, 0.4, 0.1, 0, **kw)
    second = invariant_stats(grid, spec, 0.01, 0.4, 0.1, 0, resume=first.sums, **kw)
    assert len(second.sums["batch_sums"]) == 2 * len(first.sums["batch_sums"])
    assert second.sums["step"] == first.sums["step"] + 40


def test_tail_helpers_on_known_laws():
    rng = np.random.default_rng(0)
    T = rng.uniform(0, 1, 20000)
    out = tail_slope(T)
    assert abs(out["slope"] - 1.0) <= 3 * out["slope_se"]
    assert abs(tail_slope(T ** 4)["slope"] - 0.25) <= 3 * 0.25 / np.sqrt(50)
    assert out["ecdf_monotone"]
    assert np.isnan(tail_slope(np.full(10, np.inf))["slope"])
    fit = tail_fit(rng.exponential(1.0, 5000) ** 2)
    # P(V >= x) = exp(-sqrt(x)) exactly
    assert fit["stretched_rate"] == pytest.approx(1.0, abs=0.15)
    assert tail_fit(np.ones(3)) == {"n": 3}


def test_stopping_time_x_only():
    grid = TorusGrid(16)
    spec = NoiseSpectrum.constant(grid, 1.0, 1.0, 0.0)
    T = stopping_time_samples(grid, spec, 1e-3, 0.05, 8, alpha0=0.3, X_only=True)
    assert T.shape == (8,)
    assert np.all((T > 0) & (T <= 0.05) | np.isinf(T))
    never = stopping_time_samples(grid, spec, 1e-3, 0.01, 4, alpha0=1e6, X_only=True)
    assert np.all(np.isinf(never))


def test_stopping_time_full_ansatz():
    grid = TorusGrid(16)
    spec = NoiseSpectrum.constant(grid, 0.05, 0.05, 2.0)
    T = stopping_time_samples(grid, spec, 1e-3, 0.01, 2, lam=1.0)
    assert T.shape == (2,)


def test_decay_experiment_small():
    grid = TorusGrid(16)
    spec = NoiseSpectrum.band(grid, 1.0, 0.05, 2.0, 0.05)
    res = lyapunov_decay_experiment(grid, spec, (1.0, 8.0), h=5e-3, t_end=0.5, n_traj=4, n_samples=5)
    assert set(res.curves) == {1.0, 8.0}
    m, se = res.curves[8.0]
    assert m.shape == res.times.shape == se.shape
    assert m[-1] < m[0]
    assert res.decreasing


def test_ledger_ensemble_keys():
    grid = TorusGrid(16)
    spec = NoiseSpectrum.constant(grid, 0.05, 0.05, 2.0)
    out = ledger_ensemble(grid, spec, 1e-3, 3, 4)
    assert out["dissipation_max"] <= 0
    assert np.isfinite(out["martingale_z"])
    assert out["ito_total"] == pytest.approx(3e-3 * out["ito_rate"])

"""Suites in quick mode: every suite runs end to end and reports the CSV columns."""

import math

import numpy as np
import pytest

from sns.noise import NoiseSpectrum
from sns.spectral import TorusGrid, random_field
from sns.suites import (
    COLUMNS,
    SUITES,
    SuiteRow,
    ito_oracle,
    loglog_slope,
    restrict,
    run_suite,
    suite_passed,
    wick_differences,
)


@pytest.fixture(scope="module")
def quick_rows():
    return {name: run_suite(name, seed=0, quick=True) for name in SUITES}


def test_all_suites_report_rows(quick_rows):
    for name, rows in quick_rows.items():
        assert rows, name
        for r in rows:
            d = r.as_dict()
            assert tuple(d) == COLUMNS
            assert d["pass"] in ("", 0, 1)
            assert all(not isinstance(v, np.generic) for v in d.values())


@pytest.mark.parametrize("name", ["paraproducts", "heatflow", "moments331", "concentration441",
                                  "suptime444", "ledger"])
def test_quick_suite_passes(quick_rows, name):
    failing = [r.as_dict() for r in quick_rows[name] if r.passed is False]
    assert suite_passed(quick_rows[name]), failing


def test_quick_wick_reports_monotone_fraction(quick_rows):
    rows = quick_rows["wick"]
    summary = [r for r in rows if r.lemma == "wick_monotone_fraction"]
    assert len(summary) == 1
    assert 0.0 <= summary[0].estimate <= 1.0
    assert [r.N for r in rows if r.lemma == "wick_cauchy"] == [4, 8, 16]


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_suite("nope")


def test_suite_passed_ignores_report_only_rows():
    rows = [SuiteRow("a", passed=True), SuiteRow("b"), SuiteRow("c", passed=None)]
    assert suite_passed(rows)
    assert not suite_passed(rows + [SuiteRow("d", passed=False)])


def test_loglog_slope_exact_power():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert loglog_slope(x, 3 * x ** -1.5) == pytest.approx(-1.5)
    assert loglog_slope(x, x ** 2, base=2) == pytest.approx(2.0)
    assert math.isnan(loglog_slope([1.0], [1.0]))


def test_restrict_keeps_common_modes():
    big = TorusGrid(64)
    small = TorusGrid(32)
    f = random_field(big, np.random.default_rng(0), 1.0)
    g = restrict(f.coeffs, small)
    assert g.is_real and g.div_free
    for k in [(1, 2), (-5, 7), (10, -10)]:
        assert np.array_equal(g.coeffs[:, k[0] % 32, k[1] % 32], f.coeffs[:, k[0] % 64, k[1] % 64])
    assert np.all(g.coeffs[..., ~small.retained] == 0)


def test_ito_oracle_simple_case():
    grid = TorusGrid(8)
    spec = NoiseSpectrum.constant(grid, 1.0, 1.0, 100.0)
    assert ito_oracle(spec, 1.0) == pytest.approx(0.5 * (np.sum(grid.retained) - 1))


def test_wick_differences_shape_and_reproducible():
    grid = TorusGrid(48, "none")
    spec = NoiseSpectrum.constant(grid, 1.0, 1.0, 0.0)
    a = wick_differences(grid, spec, (4, 8), 0.01, seed=3, paths=2)
    b = wick_differences(grid, spec, (4, 8), 0.01, seed=3, paths=2)
    assert a.shape == (2, 2) and np.all(a > 0)
    assert np.array_equal(a, b)

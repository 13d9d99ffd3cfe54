"""Acceptance suite: one test per criterion, each reporting PASS / FAIL / SKIP.

Criteria 1-6 need the published 1992-2018 election files. Point
``LEANSIM_DATA`` at a directory holding ``elections.csv`` and
``state_meta.csv`` (and optionally ``overrides.csv``; the bundled manifest is
used otherwise). Without it those criteria are skipped and reported as such.
"""

import contextlib
import dataclasses
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_RESULTS, published_data_dir
from leansim import bayes, election_data as ed, regression as rg, simulate as sim, stats_core as sc
from leansim.rng import RngStream
from test_stats_core import SW_FIXTURES, adjugate_inverse, phi_by_quadrature, random_spd


@contextlib.contextmanager
def criterion(number, title):
    notes = []
    try:
        yield notes
    except pytest.skip.Exception as exc:
        ACCEPTANCE_RESULTS.append((number, title, "SKIP", str(exc.msg)))
        raise
    except BaseException as exc:
        message = " ".join(str(exc).splitlines()[:1])[:200]
        if not notes or not notes[-1].startswith(message):
            notes.append(message)
        ACCEPTANCE_RESULTS.append((number, title, "FAIL", "; ".join(notes)))
        raise
    ACCEPTANCE_RESULTS.append((number, title, "PASS", "; ".join(notes)))


def check(notes, ok, text):
    notes.append(text)
    assert ok, text


# ---------------------------------------------------------------------------
# published dataset
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def published():
    root = published_data_dir()
    if root is None:
        pytest.skip("published dataset not provided (set LEANSIM_DATA)")
    manifest_path = root / "overrides.csv"
    if not manifest_path.is_file():
        manifest_path = ed.default_manifest_path()
    records = ed.load_elections(root / "elections.csv")
    dataset = ed.build_dataset(records, ed.load_manifest(manifest_path))
    meta = ed.load_meta(root / "state_meta.csv")
    return {"records": records, "dataset": dataset, "meta": meta, "ec": {m.state: m.ec_votes for m in meta}}


@pytest.fixture(scope="module")
def published_fits(published):
    return rg.fit_all(published["dataset"])


def _load(request, *names):
    """Fixture values, resolved inside the criterion so a skip gets reported."""
    return [request.getfixturevalue(n) for n in names]


def test_criterion_1_point_estimates(request):
    with criterion(1, "point estimates") as notes:
        (published,) = _load(request, "published")
        start = time.perf_counter()
        fits = rg.fit_all(published["dataset"])
        elapsed = time.perf_counter() - start
        expected = [
            ("WY", "alpha_hat", -1.05, 0.01),
            ("HI", "alpha_hat", 0.967, 0.01),
            ("WI", "alpha_hat", 0.0, 0.01),
            ("NE", "beta_hat", 1.819, 0.005),
            ("LA", "beta_hat", -0.249, 0.005),
            ("ND", "gamma_hat", -0.136, 0.005),
            ("VT", "gamma_hat", 0.037, 0.005),
        ]
        failures = []
        for state, attr, target, tol in expected:
            got = getattr(fits[state], attr)
            notes.append(f"{state} {attr[:-4]}={got:.4f}")
            if abs(got - target) > tol:
                failures.append(f"{state} {attr} {got:.4f} vs {target}")
        check(notes, not failures, "all within tolerance" if not failures else ", ".join(failures))
        check(notes, elapsed < 1.0, f"fit time {elapsed:.3f}s")


def test_criterion_2_diagnostics(request):
    with criterion(2, "residual diagnostics") as notes:
        published, published_fits = _load(request, "published", "published_fits")
        diag = rg.diagnose(published_fits)
        sep = rg.fit_separate_model(ed.race_observations(list(published["dataset"].records)))
        notes.append(f"uniformity p={diag.uniformity_pvalue:.3f}")
        notes.append(f"separate-model failures={sep.count_below_0_05}")
        notes.append(f"pooled p={diag.pooled_sw_pvalue:.3g}")
        assert abs(diag.uniformity_pvalue - 0.63) <= 0.05
        assert abs(sep.count_below_0_05 - 21) <= 2
        assert diag.pooled_sw_pvalue < 0.01


def test_criterion_3_dataset_shape(request):
    with criterion(3, "dataset shape") as notes:
        (published,) = _load(request, "published")
        ds = published["dataset"]
        missing = ds.missing_cells()
        notes.append(f"{len(ds.observations)} observations, missing {missing}")
        assert len(ds.observations) == 695
        assert sorted(missing) == [("LA", 1994), ("MA", 2002), ("VT", 2002), ("WV", 1998), ("WV", 2018)]


def test_criterion_4_simulations(request):
    with criterion(4, "scenario simulations") as notes:
        published, published_fits = _load(request, "published", "published_fits")
        ec, records = published["ec"], published["records"]
        runs = [
            ("2012 even", lambda: sim.backtest(published_fits, ec, 2012, "even", 10_000, 2020), 0.28, 0.03),
            ("2016 even", lambda: sim.backtest(published_fits, ec, 2016, "even", 10_000, 2020), 0.31, 0.03),
            ("2020 even", lambda: sim.simulate_ec(published_fits, ec, sim.preset("even"), 10_000, 2020), 0.37, 0.03),
            ("2012 actual", lambda: sim.backtest(published_fits, ec, 2012, "actual", 10_000, 2020, records), 0.82, 0.04),
            ("2016 actual", lambda: sim.backtest(published_fits, ec, 2016, "actual", 10_000, 2020, records), 0.61, 0.04),
            ("2020 pv2016", lambda: sim.simulate_ec(published_fits, ec, sim.preset("pv2016"), 10_000, 2020), 0.66, 0.04),
            ("2020 pv2008", lambda: sim.simulate_ec(published_fits, ec, sim.preset("pv2008"), 10_000, 2020), 0.99, 0.01),
            ("2020 pv2004", lambda: sim.simulate_ec(published_fits, ec, sim.preset("pv2004"), 10_000, 2020), 0.13, 0.03),
        ]
        failures = []
        for label, fn, target, tol in runs:
            start = time.perf_counter()
            p = fn().distribution.dem_win_probability
            elapsed = time.perf_counter() - start
            notes.append(f"{label} {p:.3f} ({elapsed:.1f}s)")
            if abs(p - target) > tol or elapsed >= 30:
                failures.append(label)
        check(notes, not failures, f"out of tolerance: {failures}" if failures else "all within tolerance")


def test_criterion_5_importance(request):
    with criterion(5, "importance top three") as notes:
        published, published_fits = _load(request, "published", "published_fits")
        table = {
            "even": [("PA", 68), ("NC", 55), ("WI", 36)],
            "pv2016": [("NC", 73), ("PA", 55), ("FL", 40)],
            "pv2008": [("OH", 93), ("PA", 63), ("IN", 21)],
            "pv2004": [("PA", 64), ("MI", 44), ("NC", 32)],
        }
        failures = []
        for name, expected in table.items():
            top = sim.importance(published_fits, sim.preset(name), published["ec"])[:3]
            notes.append(f"{name}: " + " ".join(f"{s}({v:.0f})" for s, v in top))
            if [s for s, _ in top] != [s for s, _ in expected]:
                failures.append(f"{name} order")
            failures += [f"{name} {s}" for (s, v), (_, ref) in zip(top, expected) if abs(v - ref) > 0.15 * ref]
        check(notes, not failures, f"mismatches: {failures}" if failures else "order and values match")


def test_criterion_6_descriptive(request):
    with criterion(6, "size effect and Cook PVI") as notes:
        published, published_fits = _load(request, "published", "published_fits")
        size = rg.size_effect(published_fits, published["meta"])
        pvi = rg.pvi_comparison(published_fits, published["meta"])
        notes.append(f"size {size.r1990:.3f}/{size.r2000:.3f}/{size.r2010:.3f}, pvi r={pvi.correlation:.3f}")
        for got, ref in zip(size, (-0.65, -0.67, -0.68)):
            assert abs(got - ref) <= 0.03
        assert abs(pvi.correlation - 0.98) <= 0.01


# ---------------------------------------------------------------------------
# property criteria, no dataset needed
# ---------------------------------------------------------------------------


def _coverage_fits(count, seed):
    rng = np.random.default_rng(seed)
    fits, truth = {}, []
    for i in range(count):
        n = int(rng.integers(10, 15))
        t = np.sort(rng.choice(np.arange(-14, 0), n, replace=False)).astype(float)
        x = rng.normal(0, 0.06, n)
        theta = np.array([rng.normal(0, 0.4), rng.uniform(0.3, 1.8), rng.normal(0, 0.02)])
        sigma = rng.uniform(0.03, 0.2)
        design = np.column_stack([np.ones(n), x, t])
        y = design @ theta + rng.normal(0, sigma, n)
        res = sc.ols3(design, y)
        key = f"{i:05d}"
        fits[key] = rg.StateFit(key, *res.theta_hat, res.sigma2_hat, res.xtx_inv, n, res.residuals)
        truth.append(theta)
    return fits, np.array(truth)


def test_criterion_7_posterior():
    with criterion(7, "posterior correctness") as notes:
        start = time.perf_counter()
        datasets, draws_each = 10_000, 400
        fits, truth = _coverage_fits(datasets, seed=77)
        fields = ("alpha", "beta", "gamma")
        samples = {f: np.empty((draws_each, datasets)) for f in fields}
        for lo in range(0, draws_each, 100):
            arr = bayes.sample_posterior_arrays(fits, 7, np.arange(lo, lo + 100))
            for f in fields:
                samples[f][lo : lo + 100] = arr[f]
        for i, f in enumerate(fields):
            q_lo, q_hi = np.quantile(samples[f], [0.05, 0.95], axis=0)
            cov = float(np.mean((q_lo <= truth[:, i]) & (truth[:, i] <= q_hi)))
            check(notes, abs(cov - 0.90) <= 0.02, f"{f} coverage {cov:.4f}")
        del samples

        y_design = np.column_stack([np.ones(14), 0.06 * np.sin(np.arange(14) * 1.7), np.arange(-14, 0.0)])
        y = y_design @ [0.2, 0.9, 0.01] + np.random.default_rng(1).normal(0, 0.1, 14)
        fit = rg.fit_state(y_design, y, "OH")
        arr = bayes.sample_posterior_arrays({"OH": fit}, 11, np.arange(100_000))
        for i, f in enumerate(fields):
            se = math.sqrt(fit.sigma2_hat * 11 / 9 * fit.xtx_inv[i, i] / 100_000)
            z = abs(arr[f].mean() - fit.theta_hat[i]) / se
            check(notes, z < 3, f"{f} mean {z:.2f} SE from estimate")
        ratio = arr["sigma2"].mean() / (fit.sigma2_hat * 11 / 9)
        check(notes, abs(ratio - 1) <= 0.02, f"sigma2 mean ratio {ratio:.4f}")
        for i, f in enumerate(fields):
            ref = stats.t(df=11, loc=fit.theta_hat[i], scale=math.sqrt(fit.sigma2_hat * fit.xtx_inv[i, i]))
            p = stats.kstest(arr[f][:10_000, 0], ref.cdf).pvalue
            check(notes, p > 0.001, f"{f} t KS p={p:.3f}")
        elapsed = time.perf_counter() - start
        check(notes, elapsed < 120, f"{elapsed:.1f}s")


def test_criterion_8_numerics():
    with criterion(8, "numerical kernels") as notes:
        grid = np.linspace(-8, 8, 10_000)
        err = max(abs(float(sc.std_normal_cdf(u)) - phi_by_quadrature(u)) for u in grid)
        check(notes, err <= 1e-12, f"normal cdf max error {err:.1e}")

        rng = np.random.default_rng(12)
        worst = 0.0
        for _ in range(1000):
            a = random_spd(rng)
            low = sc.cholesky3(a)
            worst = max(worst, np.abs(low @ low.T - a).max() / np.abs(a).max())
        check(notes, worst <= 1e-10, f"Cholesky relative residual {worst:.1e}")

        worst = 0.0
        for seed in range(200):
            r = np.random.default_rng(seed)
            n = int(r.integers(4, 30))
            design = np.column_stack([np.ones(n), r.normal(0, 0.1, n), np.arange(-n, 0.0)])
            y = r.normal(size=n)
            theta = adjugate_inverse(design.T @ design) @ (design.T @ y)
            worst = max(worst, np.abs(sc.ols3(design, y).theta_hat - theta).max() / max(1.0, np.abs(theta).max()))
        check(notes, worst <= 1e-10, f"OLS vs adjugate {worst:.1e}")

        worst = 0.0
        for sample, w_ref, p_ref in SW_FIXTURES.values():
            w, p = sc.shapiro_wilk(sample)
            worst = max(worst, abs(w - w_ref), abs(p - p_ref))
        check(notes, worst <= 1e-3, f"Shapiro-Wilk fixture deviation {worst:.1e}")

        z = sc.sample_std_normal(RngStream(1, 0), size=1_000_000)
        check(notes, abs(z.mean()) < 0.004 and abs(z.var() - 1) < 0.005, "normal moments")
        p = stats.kstest(z[:10_000], sc.std_normal_cdf).pvalue
        check(notes, p > 0.001, f"normal KS p={p:.3f}")
        for dof in (3, 11, 32, 33, 40):
            draws = sc.sample_scaled_inv_chi_squared(RngStream(6, dof), dof, 2.5, size=10_000)
            p = stats.kstest(draws, stats.invgamma(dof / 2, scale=dof * 1.25).cdf).pvalue
            check(notes, p > 0.001, f"inv-chi2({dof}) KS p={p:.3f}")
        mean = sc.sample_scaled_inv_chi_squared(RngStream(4, 0), 11, 1.0, size=1_000_000).mean()
        check(notes, abs(mean - 11 / 9) <= 0.01, f"inv-chi2(11) mean {mean:.4f}")
        big = sc.sample_scaled_inv_chi_squared(RngStream(3, 0), 1_000_000, 4.0)
        check(notes, abs(big - 4) <= 0.03, f"inv-chi2(1e6, 4) draw {big:.4f}")
        cov = np.array([[4.0, 1.2, 0.8], [1.2, 2.0, 0.5], [0.8, 0.5, 1.0]])
        x = sc.sample_mvn3(RngStream(21), np.zeros(3), cov, size=100_000)
        rel = np.abs(np.cov(x, rowvar=False) - cov).max() / 0.5
        check(notes, np.all(np.abs(x.mean(axis=0)) < 3 * np.sqrt(np.diag(cov) / 1e5)) and rel < 0.05, "MVN moments")


def test_criterion_9_simulation_engine(fits):
    with criterion(9, "simulation engine") as notes:
        ec = ed.EC_VOTES_2010
        for n in (1, 1999, 2000, 2001, 10_000):
            res = sim.simulate_ec(fits, ec, sim.preset("even"), n, seed=5)
            assert res.distribution.histogram.sum() == n
        notes.append("histogram mass exact")

        one = sim.simulate_ec(fits, ec, sim.preset("pv2016"), 10_000, seed=2020, workers=1)
        eight = sim.simulate_ec(fits, ec, sim.preset("pv2016"), 10_000, seed=2020, workers=8)
        same = (
            one.distribution.histogram.tobytes() == eight.distribution.histogram.tobytes()
            and one.win_frequency == eight.win_frequency
        )
        check(notes, same, "1 vs 8 workers byte-identical")

        d, n = 0.01, 1_000_000
        scenario = sim.preset("even")
        up = {s: dataclasses.replace(f, alpha_hat=f.alpha_hat + d / 2) for s, f in fits.items()}
        down = {s: dataclasses.replace(f, alpha_hat=f.alpha_hat - d / 2) for s, f in fits.items()}
        hi = sim.simulate_ec(up, ec, scenario, n, seed=9, workers=4, parameter_uncertainty=False)
        lo = sim.simulate_ec(down, ec, scenario, n, seed=9, workers=4, parameter_uncertainty=False)
        ranked = sim.importance(fits, scenario, ec)
        worst = 0.0
        for state, value in ranked[:10]:
            fd = (hi.win_frequency[state] - lo.win_frequency[state]) * ec[state] / d
            worst = max(worst, abs(fd / value - 1))
        check(notes, worst <= 0.05, f"finite-difference importance, top 10 states, worst rel. error {worst:.3f}")

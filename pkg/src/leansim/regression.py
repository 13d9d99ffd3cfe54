"""Per-state regressions of state lean on national lean and year index."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import stats_core
from .election_data import Dataset, NationalLean, RaceObservation, StateMeta, StateYearObservation
from .errors import DataError, FitError, StatTestError

logger = logging.getLogger(__name__)

RESULTS_HEADER = ["state", "alpha", "beta", "gamma", "sigma", "n", "sw_pvalue"]


@dataclass(frozen=True, eq=False)
class StateFit:
    """Least-squares fit ``y = alpha + beta * x + gamma * t + noise`` for one state."""

    state: str
    alpha_hat: float
    beta_hat: float
    gamma_hat: float
    sigma2_hat: float
    xtx_inv: np.ndarray
    n: int
    residuals: np.ndarray
    sw_pvalue: float = math.nan

    @property
    def theta_hat(self) -> np.ndarray:
        return np.array([self.alpha_hat, self.beta_hat, self.gamma_hat])

    @property
    def sigma_hat(self) -> float:
        return math.sqrt(self.sigma2_hat)

    def center(self, x: float, t: int) -> float:
        """Point prediction of the state log ratio."""
        return self.alpha_hat + self.beta_hat * x + self.gamma_hat * t


def build_design(
    observations: list[StateYearObservation], national: list[NationalLean]
) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``(1, x_t, t)`` and responses ``y``, ordered by ``t``."""
    lean = {n.t: n.x for n in national}
    rows = sorted(observations, key=lambda o: o.t)
    missing = [o.t for o in rows if o.t not in lean]
    if missing:
        raise DataError(f"no national lean for t = {missing}")
    design = np.array([[1.0, lean[o.t], float(o.t)] for o in rows]).reshape(-1, 3)
    response = np.array([o.y for o in rows], dtype=float)
    return design, response


def fit_state(design, response, state: str) -> StateFit:
    res = stats_core.ols3(design, response, label=state)
    scale = float(np.abs(np.asarray(response, dtype=float)).max(initial=0.0))
    try:
        # residuals at rounding level carry no shape information
        if np.abs(res.residuals).max() <= 1e-12 * max(scale, 1e-300):
            raise StatTestError("residuals are rounding noise")
        _, p = stats_core.shapiro_wilk(res.residuals)
    except StatTestError:
        logger.warning("%s: residuals degenerate, no Shapiro-Wilk p-value", state)
        p = math.nan
    a, b, g = (float(v) for v in res.theta_hat)
    return StateFit(state, a, b, g, res.sigma2_hat, res.xtx_inv, len(res.residuals), res.residuals, p)


def _fit_many(groups: dict[str, tuple[np.ndarray, np.ndarray]]) -> dict[str, StateFit]:
    fits = {}
    failures = []
    for state in sorted(groups):
        try:
            fits[state] = fit_state(*groups[state], state)
        except FitError as exc:
            failures.append(f"{state}: {exc}")
    if failures:
        raise FitError("could not fit " + "; ".join(failures))
    return fits


def fit_all(dataset: Dataset) -> dict[str, StateFit]:
    """Fit every state in ``dataset``; keys are sorted state codes."""
    national = list(dataset.national)
    return _fit_many({s: build_design(obs, national) for s, obs in dataset.by_state().items()})


class Diagnostics(NamedTuple):
    sw_pvalues: dict[str, float]
    uniformity_pvalue: float
    count_below_0_05: int
    pooled_sw_pvalue: float


def diagnose(fits: dict[str, StateFit], bins: int = 20) -> Diagnostics:
    """Residual normality per state, uniformity of those p-values, pooled test."""
    pvalues = {s: f.sw_pvalue for s, f in fits.items()}
    finite = [p for p in pvalues.values() if math.isfinite(p)]
    pooled = np.concatenate([f.residuals for f in fits.values()])
    try:
        pooled_p = stats_core.shapiro_wilk(pooled)[1] if 4 <= pooled.size <= 5000 else math.nan
    except StatTestError:
        pooled_p = math.nan
    return Diagnostics(
        pvalues,
        stats_core.chi2_uniformity_pvalue(finite, bins),
        sum(p < 0.05 for p in finite),
        pooled_p,
    )


class SeparateModelResult(NamedTuple):
    fits: dict[str, StateFit]
    sw_pvalues: dict[str, float]
    count_below_0_05: int


def fit_separate_model(observations: list[RaceObservation]) -> SeparateModelResult:
    """Fit on individual races instead of state-year means."""
    rows = {}
    for obs in sorted(observations, key=lambda o: (o.state, o.t, o.race.value)):
        rows.setdefault(obs.state, []).append((1.0, obs.x, float(obs.t), obs.y))
    groups = {}
    for state, data in rows.items():
        arr = np.array(data)
        groups[state] = (arr[:, :3], arr[:, 3])
    fits = _fit_many(groups)
    pvalues = {s: f.sw_pvalue for s, f in fits.items()}
    return SeparateModelResult(fits, pvalues, sum(p < 0.05 for p in pvalues.values() if math.isfinite(p)))


def _meta_for(fits: dict[str, StateFit], meta: list[StateMeta]) -> list[StateMeta]:
    by_state = {m.state: m for m in meta}
    missing = sorted(set(fits) - set(by_state))
    if missing:
        raise DataError(f"no state metadata for {', '.join(missing)}")
    return [by_state[s] for s in sorted(fits)]


class SizeEffect(NamedTuple):
    r1990: float
    r2000: float
    r2010: float


def size_effect(fits: dict[str, StateFit], meta: list[StateMeta]) -> SizeEffect:
    """Correlations of log residual sd with log census population."""
    rows = _meta_for(fits, meta)
    log_sigma = [math.log(fits[m.state].sigma_hat) for m in rows]
    return SizeEffect(
        *(
            stats_core.pearson_correlation(log_sigma, [math.log(getattr(m, col)) for m in rows])
            for col in ("pop1990", "pop2000", "pop2010")
        )
    )


class PviComparison(NamedTuple):
    correlation: float
    slope: float
    intercept: float


def pvi_comparison(fits: dict[str, StateFit], meta: list[StateMeta]) -> PviComparison:
    """Regress fitted lean on the Cook index (positive = Democratic)."""
    rows = _meta_for(fits, meta)
    pvi = np.array([m.cook_pvi for m in rows])
    alpha = np.array([fits[m.state].alpha_hat for m in rows])
    r = stats_core.pearson_correlation(pvi, alpha)
    dp = pvi - pvi.mean()
    slope = float(dp @ (alpha - alpha.mean()) / (dp @ dp))
    return PviComparison(r, slope, float(alpha.mean() - slope * pvi.mean()))


def superlatives(fits: dict[str, StateFit]) -> dict[str, tuple[str, float]]:
    """Extreme states by each fitted parameter."""
    f = list(fits.values())

    def pick(attr, fn, key=None):
        best = fn(f, key=key or (lambda s: getattr(s, attr)))
        return best.state, getattr(best, attr)

    return {
        "reddest": pick("alpha_hat", min),
        "bluest": pick("alpha_hat", max),
        "most_neutral": pick("alpha_hat", min, key=lambda s: abs(s.alpha_hat)),
        "fastest_blueing": pick("gamma_hat", max),
        "fastest_reddening": pick("gamma_hat", min),
        "slowest_change": pick("gamma_hat", min, key=lambda s: abs(s.gamma_hat)),
        "most_elastic": pick("beta_hat", max),
        "least_elastic": pick("beta_hat", min, key=lambda s: abs(s.beta_hat)),
        "highest_sigma": pick("sigma_hat", max),
        "lowest_sigma": pick("sigma_hat", min),
    }


def write_results(path, fits: dict[str, StateFit]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for state in sorted(fits):
            f = fits[state]
            w.writerow(
                [state]
                + [f"{v:.6f}" for v in (f.alpha_hat, f.beta_hat, f.gamma_hat, f.sigma_hat)]
                + [f.n, f"{f.sw_pvalue:.6f}"]
            )


def read_results(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            {k: (v if k == "state" else int(v) if k == "n" else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]

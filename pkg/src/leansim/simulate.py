"""Electoral College Monte Carlo under fixed national popular-vote scenarios."""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import stats_core
from .bayes import PosteriorParams, draw_cells
from .election_data import NATIONAL, ElectionRecord, Race, year_to_t
from .errors import DataError, DegeneratePosteriorError, DomainError
from .regression import StateFit
from .rng import StreamArray, stream_index

TOTAL_EC = 538
WIN_THRESHOLD = 269
DC_EC_VOTES = 3
REPLICATION_CHUNK = 2000

# name -> (dem %, rep %)
PRESETS = {
    "even": (50.0, 50.0),
    "pv2016": (48.2, 46.1),
    "pv2008": (52.9, 45.7),
    "pv2004": (48.3, 50.7),
}


@dataclass(frozen=True)
class Scenario:
    label: str
    T: int
    dem_share: float
    rep_share: float

    def __post_init__(self):
        if not (self.dem_share > 0 and self.rep_share > 0):
            raise DomainError(f"scenario {self.label}: shares must be positive")
        if not math.isfinite(self.x):
            raise DomainError(f"scenario {self.label}: national lean is not finite")

    @property
    def x(self) -> float:
        return math.log(self.dem_share / self.rep_share)

    @property
    def is_even(self) -> bool:
        return self.dem_share == self.rep_share


def preset(name: str, year: int = 2020) -> Scenario:
    if name not in PRESETS:
        raise DomainError(f"unknown scenario preset {name!r}; choose from {', '.join(PRESETS)}")
    dem, rep = PRESETS[name]
    return Scenario(f"{year} {name}", year_to_t(year), dem, rep)


def custom(dem: float, rep: float, year: int = 2020, label: str | None = None) -> Scenario:
    return Scenario(label or f"{year} custom {dem:g}/{rep:g}", year_to_t(year), dem, rep)


def actual(records: list[ElectionRecord], year: int) -> Scenario:
    """Scenario using the national presidential result of ``year``."""
    for rec in records:
        if rec.state == NATIONAL and rec.race is Race.PRESIDENT and rec.year == year:
            total = rec.dem + rec.rep
            return Scenario(f"{year} actual", year_to_t(year), 100 * rec.dem / total, 100 * rec.rep / total)
    raise DataError(f"no national presidential record for {year}")


def analytic_win_prob(params, scenario: Scenario) -> float:
    """Democratic win probability for ``params = (alpha, beta, gamma, sigma)``."""
    alpha, beta, gamma, sigma = params
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return stats_core.std_normal_cdf((alpha + beta * scenario.x + gamma * scenario.T) / sigma)


@dataclass(eq=False)
class ECDistribution:
    """Histogram of Democratic EC votes over replications (index = votes)."""

    histogram: np.ndarray
    replications: int
    seed: int
    label: str = ""

    @property
    def dem_win_probability(self) -> float:
        return float(self.histogram[WIN_THRESHOLD + 1 :].sum()) / self.replications

    @property
    def mean_votes(self) -> float:
        return float(np.arange(self.histogram.size) @ self.histogram) / self.replications


@dataclass(eq=False)
class SimulationResult:
    distribution: ECDistribution
    win_frequency: dict[str, float]
    mean_analytic_prob: dict[str, float]
    scenario: Scenario = field(repr=False, default=None)


def _ec_array(states: list[str], ec_votes: dict[str, int]) -> np.ndarray:
    missing = [s for s in states if s not in ec_votes]
    if missing:
        raise DataError(f"no EC votes for {', '.join(missing)}")
    ec = np.array([ec_votes[s] for s in states], dtype=np.int64)
    if ec.sum() + DC_EC_VOTES > TOTAL_EC:
        raise DataError(f"EC votes sum to {ec.sum() + DC_EC_VOTES}, above {TOTAL_EC}")
    return ec


def _posterior_params(fits: dict[str, StateFit], states: list[str]) -> list[PosteriorParams]:
    params = []
    bad = []
    for s in states:
        try:
            params.append(PosteriorParams.from_fit(fits[s]))
        except DegeneratePosteriorError as exc:
            bad.append(str(exc))
    if bad:
        raise DegeneratePosteriorError("; ".join(bad))
    return params


def _run_chunk(reps, states, params, points, ec, scenario, seed, uncertainty, literal):
    k = len(states)
    ordinal = np.tile(np.arange(k), reps.size)
    streams = StreamArray(seed, stream_index(np.repeat(reps, k), ordinal))
    cells = np.arange(len(streams))
    if uncertainty:
        a, b, g, s2 = draw_cells(streams, cells, params, ordinal, literal)
        sigma = np.sqrt(s2)
    else:
        a, b, g, sigma = (points[:, j][ordinal] for j in range(4))
    p = stats_core.std_normal_cdf((a + b * scenario.x + g * scenario.T) / sigma)
    wins = (streams.uniforms(cells) < p).reshape(reps.size, k)
    votes = wins.astype(np.int64) @ ec + DC_EC_VOTES
    return (
        np.bincount(votes, minlength=TOTAL_EC + 1),
        wins.sum(axis=0),
        p.reshape(reps.size, k).sum(axis=0),
    )


def simulate_ec(
    fits: dict[str, StateFit],
    ec_votes: dict[str, int],
    scenario: Scenario,
    n: int,
    seed: int,
    workers: int = 1,
    parameter_uncertainty: bool = True,
    literal: bool = False,
) -> SimulationResult:
    """Simulate ``n`` elections.

    Each replication draws fresh posterior parameters for every state (unless
    ``parameter_uncertainty`` is off, in which case point estimates are used),
    flips each state with its conditional win probability, and adds DC's
    three votes to the Democratic total. Output does not depend on ``workers``.
    """
    if n < 1:
        raise DomainError(f"need at least one replication, got {n}")
    states = sorted(fits)
    ec = _ec_array(states, ec_votes)
    params = _posterior_params(fits, states) if parameter_uncertainty else None
    points = np.array([[f.alpha_hat, f.beta_hat, f.gamma_hat, f.sigma_hat] for f in (fits[s] for s in states)])
    if not parameter_uncertainty and not np.all(points[:, 3] > 0):
        raise DomainError("point-estimate simulation needs positive sigma for every state")
    chunks = [np.arange(lo, min(lo + REPLICATION_CHUNK, n)) for lo in range(0, n, REPLICATION_CHUNK)]

    def work(reps):
        return _run_chunk(reps, states, params, points, ec, scenario, seed, parameter_uncertainty, literal)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]

    hist = np.zeros(TOTAL_EC + 1, dtype=np.int64)
    win_counts = np.zeros(len(states), dtype=np.int64)
    p_sums = np.zeros(len(states))
    for h, w, p in parts:
        hist += h
        win_counts += w
        p_sums += p
    dist = ECDistribution(hist, n, seed, scenario.label)
    return SimulationResult(
        dist,
        {s: float(win_counts[j]) / n for j, s in enumerate(states)},
        {s: float(p_sums[j]) / n for j, s in enumerate(states)},
        scenario,
    )


def backtest(
    fits: dict[str, StateFit],
    ec_votes: dict[str, int],
    year: int,
    pv: str,
    n: int,
    seed: int,
    records: list[ElectionRecord] | None = None,
    workers: int = 1,
) -> SimulationResult:
    """Re-run a past presidential year with even or actual national vote."""
    if year not in (2012, 2016):
        raise DomainError(f"backtests cover 2012 and 2016, got {year}")
    if pv == "even":
        scenario = preset("even", year)
    elif pv == "actual":
        if records is None:
            raise DataError("actual-PV backtest needs the national election records")
        scenario = actual(records, year)
    else:
        raise DomainError(f"pv must be 'even' or 'actual', got {pv!r}")
    return simulate_ec(fits, ec_votes, scenario, n, seed, workers)


class Tier(enum.Enum):
    SOLID_D = "SolidD"
    LEAN_D = "LeanD"
    SWING = "Swing"
    LEAN_R = "LeanR"
    SOLID_R = "SolidR"


def classify(win_prob: float) -> Tier:
    """Five-tier rating; the 0.9/0.7/0.3/0.1 boundaries go to the inner tier."""
    if not 0.0 <= win_prob <= 1.0:
        raise DomainError(f"probability out of range: {win_prob}")
    if win_prob > 0.9:
        return Tier.SOLID_D
    if win_prob > 0.7:
        return Tier.LEAN_D
    if win_prob >= 0.3:
        return Tier.SWING
    if win_prob >= 0.1:
        return Tier.LEAN_R
    return Tier.SOLID_R


def importance(fits: dict[str, StateFit], scenario: Scenario, ec_votes: dict[str, int]) -> list[tuple[str, float]]:
    """Expected Democratic EC-vote gain per unit of added lean, at point estimates."""
    out = []
    for state in sorted(fits):
        f = fits[state]
        if state not in ec_votes:
            raise DataError(f"no EC votes for {state}")
        out.append(
            (state, stats_core.normal_density_scaled(f.center(scenario.x, scenario.T), f.sigma_hat) * ec_votes[state])
        )
    return sorted(out, key=lambda item: (-item[1], item[0]))


@dataclass(frozen=True)
class BiasCheck:
    interval: tuple[float, float]
    biased: bool
    direction: str | None  # "Republican", "Democratic", or None


def bias_check(dem_win_probability: float, n: int, z: float = 1.96) -> BiasCheck:
    """Is an even-vote win probability outside the fair-coin band?"""
    lo, hi = stats_core.binomial_interval(0.5, n, z)
    if dem_win_probability < lo:
        return BiasCheck((lo, hi), True, "Republican")
    if dem_win_probability > hi:
        return BiasCheck((lo, hi), True, "Democratic")
    return BiasCheck((lo, hi), False, None)


@dataclass(frozen=True)
class StateReport:
    state: str
    win_prob: float
    tier: Tier
    importance: float


def state_reports(result: SimulationResult, fits: dict[str, StateFit], ec_votes: dict[str, int]) -> list[StateReport]:
    imp = dict(importance(fits, result.scenario, ec_votes))
    return [
        StateReport(s, p, classify(p), imp[s]) for s, p in sorted(result.win_frequency.items())
    ]


# ----------------------------------------------------------------------------
# Output files
# ----------------------------------------------------------------------------


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_state_probs(path, runs: list[SimulationResult]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["state", "scenario", "win_prob", "tier"])
        for run in runs:
            for state, p in sorted(run.win_frequency.items()):
                w.writerow([state, run.scenario.label, f"{p:.6f}", classify(p).value])


def write_importance(path, rows: list[tuple[str, list[tuple[str, float]]]]) -> None:
    """``rows`` pairs a scenario label with its ranked importance list."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["state", "scenario", "importance", "rank"])
        for label, ranked in rows:
            for rank, (state, value) in enumerate(ranked, start=1):
                w.writerow([state, label, f"{value:.6f}", rank])


def write_histograms(path, runs: list[SimulationResult]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["scenario", "dem_ec_votes", "count"])
        for run in runs:
            for votes, count in enumerate(run.distribution.histogram):
                w.writerow([run.scenario.label, votes, int(count)])


def histogram_svg(dist: ECDistribution, width: int = 640, height: int = 320) -> str:
    """Bar chart of the EC distribution with a marker at 269 votes."""
    pad = 30
    plot_w = width - 2 * pad
    plot_h = height - 2 * pad
    top = max(int(dist.histogram.max()), 1)
    bar_w = plot_w / (TOTAL_EC + 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="{pad - 10}" font-family="sans-serif" font-size="12">'
        f"{_escape(dist.label)}: P(Dem win) = {dist.dem_win_probability:.4f}, N = {dist.replications}</text>",
    ]
    for votes, count in enumerate(dist.histogram):
        if count:
            h = plot_h * int(count) / top
            parts.append(
                f'<rect x="{pad + votes * bar_w:.2f}" y="{pad + plot_h - h:.2f}" '
                f'width="{bar_w:.2f}" height="{h:.2f}" fill="steelblue"/>'
            )
    x269 = pad + (WIN_THRESHOLD + 0.5) * bar_w
    parts.append(f'<line x1="{x269:.2f}" y1="{pad}" x2="{x269:.2f}" y2="{pad + plot_h}" stroke="red"/>')
    parts.append(
        f'<line x1="{pad}" y1="{pad + plot_h}" x2="{pad + plot_w}" y2="{pad + plot_h}" stroke="black"/>'
    )
    for tick in (0, 100, 200, 269, 300, 400, 538):
        tx = pad + (tick + 0.5) * bar_w
        parts.append(
            f'<text x="{tx:.2f}" y="{pad + plot_h + 14}" font-family="sans-serif" font-size="10" '
            f'text-anchor="middle">{tick}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")

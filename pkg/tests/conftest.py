import csv
import math
import os
from pathlib import Path

import numpy as np
import pytest

from leansim import election_data as ed
from leansim.election_data import ElectionRecord, Race, Unit

YEARS = list(range(1992, 2019, 2))


def synthetic_truth(seed=7):
    """Per-state (alpha, beta, gamma, sigma) drawn once from a fixed generator."""
    rng = np.random.default_rng(seed)
    truth = {}
    for state in sorted(ed.STATES):
        truth[state] = (
            float(rng.normal(0.0, 0.35)),
            float(rng.uniform(0.5, 1.5)),
            float(rng.normal(0.0, 0.02)),
            float(rng.uniform(0.04, 0.15)),
        )
    return truth


def synthetic_records(seed=7, truth=None):
    """Election records whose state-year means follow the regression model exactly
    in distribution, with national House and President results equal per year."""
    truth = truth or synthetic_truth(seed)
    rng = np.random.default_rng(seed + 1000)
    national = {y: float(rng.normal(0.0, 0.06)) for y in YEARS}
    records = []
    for year, x in national.items():
        records.append(ElectionRecord(ed.NATIONAL, year, Race.HOUSE, 5e7 * math.exp(x / 2), 5e7 * math.exp(-x / 2)))
        if (year - 1992) % 4 == 0:
            records.append(
                ElectionRecord(ed.NATIONAL, year, Race.PRESIDENT, 6e7 * math.exp(x / 2), 6e7 * math.exp(-x / 2))
            )
    for i, (state, (a, b, g, s)) in enumerate(sorted(truth.items())):
        for year, x in national.items():
            t = ed.year_to_t(year)
            races = [Race.HOUSE]
            if (year - 1992) % 4 == 0:
                races.append(Race.PRESIDENT)
            if (year // 2 + i) % 3:
                races.append(Race.SENATE)
            mean = a + b * x + g * t + s * float(rng.standard_normal())
            dev = rng.normal(0.0, 0.05, len(races))
            dev -= dev.mean()
            for race, d in zip(races, dev):
                y = mean + float(d)
                records.append(ElectionRecord(state, year, race, 1e6 * math.exp(y / 2), 1e6 * math.exp(-y / 2)))
    return records


def write_elections(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "year", "race", "dem", "rep", "unit"])
        for r in records:
            w.writerow([r.state, r.year, r.race.value, repr(r.dem), repr(r.rep), r.unit.value])


def write_meta(path, seed=7, truth=None):
    truth = truth or synthetic_truth(seed)
    rng = np.random.default_rng(seed + 2000)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "ec_votes", "pop1990", "pop2000", "pop2010", "cook_pvi"])
        for state in sorted(ed.STATES):
            ec = ed.EC_VOTES_2010[state]
            pop = 7e5 * ec * float(rng.uniform(0.8, 1.2))
            pvi = 40 * truth[state][0] + float(rng.normal(0, 1))
            w.writerow([state, ec, round(pop * 0.8), round(pop * 0.9), round(pop), f"{pvi:.1f}"])


@pytest.fixture(scope="session")
def truth():
    return synthetic_truth()


@pytest.fixture(scope="session")
def records(truth):
    return synthetic_records(truth=truth)


@pytest.fixture(scope="session")
def dataset(records):
    return ed.build_dataset(records)


@pytest.fixture(scope="session")
def fits(dataset):
    from leansim.regression import fit_all

    return fit_all(dataset)


@pytest.fixture
def data_files(tmp_path, records, truth):
    elections = tmp_path / "elections.csv"
    meta = tmp_path / "state_meta.csv"
    write_elections(elections, records)
    write_meta(meta, truth=truth)
    return {"elections": elections, "meta": meta, "out": tmp_path / "out"}


def published_data_dir():
    """Directory holding the published dataset as elections.csv, state_meta.csv,
    overrides.csv; taken from $LEANSIM_DATA."""
    raw = os.environ.get("LEANSIM_DATA")
    if not raw:
        return None
    path = Path(raw)
    return path if (path / "elections.csv").is_file() else None


# (criterion, status, detail) rows filled in by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number} [{status}] {title}: {detail}")

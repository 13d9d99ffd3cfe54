"""Election results ingestion and the aggregated regression dataset.

Input files are plain CSV (see README for schemas). Historical special cases
(runoffs, uncontested races, independents caucusing with Democrats) are not
coded here: they live in an override manifest that drops or rewrites
individual records before aggregation.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import DataError

logger = logging.getLogger(__name__)

FIRST_YEAR = 1992
LAST_YEAR = 2018
REFERENCE_YEAR = 2020
NATIONAL = "US"

STATES = {
    "AL": "Alabama", "AK": "Alaska", "AZ": "Arizona", "AR": "Arkansas",
    "CA": "California", "CO": "Colorado", "CT": "Connecticut", "DE": "Delaware",
    "FL": "Florida", "GA": "Georgia", "HI": "Hawaii", "ID": "Idaho",
    "IL": "Illinois", "IN": "Indiana", "IA": "Iowa", "KS": "Kansas",
    "KY": "Kentucky", "LA": "Louisiana", "ME": "Maine", "MD": "Maryland",
    "MA": "Massachusetts", "MI": "Michigan", "MN": "Minnesota", "MS": "Mississippi",
    "MO": "Missouri", "MT": "Montana", "NE": "Nebraska", "NV": "Nevada",
    "NH": "New Hampshire", "NJ": "New Jersey", "NM": "New Mexico", "NY": "New York",
    "NC": "North Carolina", "ND": "North Dakota", "OH": "Ohio", "OK": "Oklahoma",
    "OR": "Oregon", "PA": "Pennsylvania", "RI": "Rhode Island", "SC": "South Carolina",
    "SD": "South Dakota", "TN": "Tennessee", "TX": "Texas", "UT": "Utah",
    "VT": "Vermont", "VA": "Virginia", "WA": "Washington", "WV": "West Virginia",
    "WI": "Wisconsin", "WY": "Wyoming",
}  # fmt: skip

# Apportionment in force for the 2012-2020 presidential elections.
EC_VOTES_2010 = {
    "AL": 9, "AK": 3, "AZ": 11, "AR": 6, "CA": 55, "CO": 9, "CT": 7, "DE": 3,
    "FL": 29, "GA": 16, "HI": 4, "ID": 4, "IL": 20, "IN": 11, "IA": 6, "KS": 6,
    "KY": 8, "LA": 8, "ME": 4, "MD": 10, "MA": 11, "MI": 16, "MN": 10, "MS": 6,
    "MO": 10, "MT": 3, "NE": 5, "NV": 6, "NH": 4, "NJ": 14, "NM": 5, "NY": 29,
    "NC": 15, "ND": 3, "OH": 18, "OK": 7, "OR": 7, "PA": 20, "RI": 4, "SC": 9,
    "SD": 3, "TN": 11, "TX": 38, "UT": 6, "VT": 3, "VA": 13, "WA": 12, "WV": 5,
    "WI": 10, "WY": 3,
}  # fmt: skip

STATE_EC_TOTAL = 535  # 538 less the three votes of DC


class Race(enum.Enum):
    HOUSE = "HOUSE"
    SENATE = "SENATE"
    PRESIDENT = "PRESIDENT"


class Unit(enum.Enum):
    COUNTS = "COUNTS"
    SHARES = "SHARES"


class Action(enum.Enum):
    EXCLUDE = "EXCLUDE"
    REPLACE = "REPLACE"


def _check_year(year: int) -> None:
    if year % 2 or not FIRST_YEAR <= year <= LAST_YEAR:
        raise DataError(f"year must be even and within {FIRST_YEAR}-{LAST_YEAR}, got {year}")


def _check_state(state: str, allow_national: bool = True) -> None:
    if state in STATES or (allow_national and state == NATIONAL):
        return
    raise DataError(f"unknown state code {state!r}")


@dataclass(frozen=True)
class ElectionRecord:
    """One statewide (or national, state ``US``) two-party result."""

    state: str
    year: int
    race: Race
    dem: float
    rep: float
    unit: Unit = Unit.COUNTS

    def __post_init__(self):
        _check_state(self.state)
        _check_year(self.year)
        if not (math.isfinite(self.dem) and math.isfinite(self.rep)):
            raise DataError(f"{self.label}: non-finite vote total")
        if self.dem < 0 or self.rep < 0:
            raise DataError(f"{self.label}: negative vote total")
        if self.unit is Unit.SHARES and self.dem + self.rep > 1.0 + 1e-12:
            raise DataError(f"{self.label}: vote shares sum above 1")

    @property
    def key(self) -> tuple[str, int, Race]:
        return self.state, self.year, self.race

    @property
    def label(self) -> str:
        return f"{self.state} {self.year} {self.race.value}"

    def log_ratio(self) -> float:
        return log_ratio(self.dem, self.rep, self.label)


@dataclass(frozen=True)
class OverrideRule:
    state: str
    year: int
    race: Race
    action: Action
    dem: float | None = None
    rep: float | None = None
    reason: str = ""

    @property
    def key(self) -> tuple[str, int, Race]:
        return self.state, self.year, self.race


@dataclass(frozen=True)
class OverrideManifest:
    rules: tuple[OverrideRule, ...] = ()

    def __post_init__(self):
        seen = set()
        for rule in self.rules:
            _check_state(rule.state)
            _check_year(rule.year)
            if rule.key in seen:
                raise DataError(f"duplicate override for {rule.state} {rule.year} {rule.race.value}")
            seen.add(rule.key)
            if rule.action is Action.REPLACE:
                if rule.dem is None or rule.rep is None:
                    raise DataError(f"REPLACE rule for {rule.key} needs dem and rep")
                if rule.dem < 0 or rule.rep < 0:
                    raise DataError(f"REPLACE rule for {rule.key} has negative votes")

    def __len__(self) -> int:
        return len(self.rules)


@dataclass(frozen=True)
class AppliedRule:
    rule: OverrideRule
    matched: bool
    message: str


@dataclass(frozen=True)
class StateYearObservation:
    state: str
    t: int
    y: float
    races_included: int


@dataclass(frozen=True)
class NationalLean:
    t: int
    x: float


@dataclass(frozen=True)
class RaceObservation:
    """One un-aggregated race: state log ratio ``y`` against national ``x``."""

    state: str
    t: int
    race: Race
    y: float
    x: float


@dataclass(frozen=True)
class StateMeta:
    state: str
    ec_votes: int
    pop1990: float
    pop2000: float
    pop2010: float
    cook_pvi: float


def log_ratio(dem: float, rep: float, label: str = "record") -> float:
    """Natural log of the Democratic to Republican vote ratio."""
    if not (dem > 0 and rep > 0):
        raise DataError(f"{label}: log ratio needs positive votes, got dem={dem} rep={rep}")
    return math.log(dem) - math.log(rep)


def year_to_t(year: int) -> int:
    """Year index relative to 2020 in two-year steps (1992 -> -14)."""
    if year % 2 or year < FIRST_YEAR:
        raise DataError(f"expected an even year from {FIRST_YEAR}, got {year}")
    return (year - REFERENCE_YEAR) // 2


def t_to_year(t: int) -> int:
    return REFERENCE_YEAR + 2 * t


def apply_overrides(
    records: list[ElectionRecord], manifest: OverrideManifest
) -> tuple[list[ElectionRecord], list[AppliedRule]]:
    """Drop or rewrite records per ``manifest``; returns the records and a log."""
    rules = {rule.key: rule for rule in manifest.rules}
    used = set()
    out = []
    log = []
    for rec in records:
        rule = rules.get(rec.key)
        if rule is None:
            out.append(rec)
            continue
        used.add(rule.key)
        if rule.action is Action.EXCLUDE:
            log.append(AppliedRule(rule, True, f"excluded {rec.label}"))
        else:
            new = replace(rec, dem=float(rule.dem), rep=float(rule.rep))
            out.append(new)
            log.append(
                AppliedRule(rule, True, f"replaced {rec.label}: {rec.dem:g}/{rec.rep:g} -> {new.dem:g}/{new.rep:g}")
            )
    for rule in manifest.rules:
        if rule.key not in used:
            msg = f"override {rule.state} {rule.year} {rule.race.value} matched no record"
            logger.warning(msg)
            log.append(AppliedRule(rule, False, msg))
    return out, log


def aggregate_state_year(records: list[ElectionRecord]) -> list[StateYearObservation]:
    """Mean log ratio per (state, year) over the races held that year."""
    groups = defaultdict(list)
    for rec in records:
        if rec.state == NATIONAL:
            continue
        groups[rec.state, rec.year].append(rec.log_ratio())
    return [
        StateYearObservation(state, year_to_t(year), sum(logs) / len(logs), len(logs))
        for (state, year), logs in sorted(groups.items())
    ]


def _national_logs(records: list[ElectionRecord]) -> dict[tuple[int, Race], float]:
    return {(r.year, r.race): r.log_ratio() for r in records if r.state == NATIONAL}


def national_lean(records: list[ElectionRecord]) -> list[NationalLean]:
    """National lean per even year: House log ratio, averaged with the
    presidential one in presidential years."""
    logs = _national_logs(records)
    out = []
    for year in range(FIRST_YEAR, LAST_YEAR + 1, 2):
        if (year, Race.HOUSE) not in logs:
            raise DataError(f"missing national House record for {year}")
        values = [logs[year, Race.HOUSE]]
        if (year - FIRST_YEAR) % 4 == 0:
            if (year, Race.PRESIDENT) not in logs:
                raise DataError(f"missing national President record for {year}")
            values.append(logs[year, Race.PRESIDENT])
        out.append(NationalLean(year_to_t(year), sum(values) / len(values)))
    return out


def race_observations(records: list[ElectionRecord]) -> list[RaceObservation]:
    """Per-race observations; Senate races are benchmarked on the national House vote."""
    logs = _national_logs(records)
    out = []
    for rec in records:
        if rec.state == NATIONAL:
            continue
        bench = Race.HOUSE if rec.race is Race.SENATE else rec.race
        if (rec.year, bench) not in logs:
            raise DataError(f"missing national {bench.value} record for {rec.year}")
        out.append(RaceObservation(rec.state, year_to_t(rec.year), rec.race, rec.log_ratio(), logs[rec.year, bench]))
    out.sort(key=lambda o: (o.state, o.t, o.race.value))
    return out


# ----------------------------------------------------------------------------
# CSV loaders
# ----------------------------------------------------------------------------


def _read_rows(path, columns: list[str]):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {', '.join(missing)}")
        reader.fieldnames = header
        for rowno, row in enumerate(reader, start=2):
            yield rowno, {k: (v or "").strip() for k, v in row.items() if k is not None}


def _field(path, rowno: int, parse, raw: str, name: str):
    try:
        return parse(raw)
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path} row {rowno}: bad {name} {raw!r}") from exc


def _number(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError(raw)
    return value


def load_elections(path) -> list[ElectionRecord]:
    columns = ["state", "year", "race", "dem", "rep", "unit"]
    out = []
    seen = set()
    for rowno, row in _read_rows(path, columns):
        try:
            rec = ElectionRecord(
                state=row["state"].upper(),
                year=_field(path, rowno, int, row["year"], "year"),
                race=_field(path, rowno, lambda s: Race(s.upper()), row["race"], "race"),
                dem=_field(path, rowno, _number, row["dem"], "dem"),
                rep=_field(path, rowno, _number, row["rep"], "rep"),
                unit=_field(path, rowno, lambda s: Unit(s.upper()), row["unit"], "unit"),
            )
        except DataError as exc:
            if str(exc).startswith(str(path)):
                raise
            raise DataError(f"{path} row {rowno}: {exc}") from exc
        if rec.key in seen:
            raise DataError(f"{path} row {rowno}: duplicate record {rec.label}")
        seen.add(rec.key)
        out.append(rec)
    return out


def load_meta(path) -> list[StateMeta]:
    columns = ["state", "ec_votes", "pop1990", "pop2000", "pop2010", "cook_pvi"]
    out = []
    for rowno, row in _read_rows(path, columns):
        state = row["state"].upper()
        try:
            _check_state(state, allow_national=False)
        except DataError as exc:
            raise DataError(f"{path} row {rowno}: {exc}") from exc
        ec = _field(path, rowno, int, row["ec_votes"], "ec_votes")
        if ec < 3:
            raise DataError(f"{path} row {rowno}: ec_votes must be at least 3, got {ec}")
        pops = [_field(path, rowno, _number, row[c], c) for c in ("pop1990", "pop2000", "pop2010")]
        if min(pops) <= 0:
            raise DataError(f"{path} row {rowno}: populations must be positive")
        pvi = _field(path, rowno, _number, row["cook_pvi"], "cook_pvi")
        out.append(StateMeta(state, ec, *pops, pvi))
    states = [m.state for m in out]
    if len(set(states)) != len(states):
        raise DataError(f"{path}: duplicate state rows")
    if set(states) == set(STATES):
        total = sum(m.ec_votes for m in out)
        if total != STATE_EC_TOTAL:
            raise DataError(f"{path}: EC votes sum to {total}, expected {STATE_EC_TOTAL}")
    return sorted(out, key=lambda m: m.state)


def load_manifest(path) -> OverrideManifest:
    columns = ["state", "year", "race", "action", "dem", "rep", "reason"]
    rules = []
    for rowno, row in _read_rows(path, columns):
        action = _field(path, rowno, lambda s: Action(s.upper()), row["action"], "action")
        votes = {}
        for name in ("dem", "rep"):
            raw = row[name]
            if action is Action.REPLACE:
                votes[name] = _field(path, rowno, _number, raw, name)
            elif raw:
                raise DataError(f"{path} row {rowno}: {name} must be blank for EXCLUDE")
            else:
                votes[name] = None
        rule = OverrideRule(
            state=row["state"].upper(),
            year=_field(path, rowno, int, row["year"], "year"),
            race=_field(path, rowno, lambda s: Race(s.upper()), row["race"], "race"),
            action=action,
            reason=row["reason"],
            **votes,
        )
        try:
            _check_state(rule.state)
            _check_year(rule.year)
        except DataError as exc:
            raise DataError(f"{path} row {rowno}: {exc}") from exc
        rules.append(rule)
    return OverrideManifest(tuple(rules))


def default_manifest_path() -> Path:
    """Exclusion rules for the 1992-2018 races, shipped with the package."""
    return Path(__file__).with_name("data") / "overrides.csv"


@dataclass(frozen=True)
class Dataset:
    """Regression-ready data for all states."""

    observations: tuple[StateYearObservation, ...]
    national: tuple[NationalLean, ...]
    records: tuple[ElectionRecord, ...]
    override_log: tuple[AppliedRule, ...] = ()

    def by_state(self) -> dict[str, list[StateYearObservation]]:
        out = defaultdict(list)
        for obs in self.observations:
            out[obs.state].append(obs)
        return dict(sorted(out.items()))

    def missing_cells(self) -> list[tuple[str, int]]:
        present = {(o.state, o.t) for o in self.observations}
        states = sorted({o.state for o in self.observations})
        return [(s, t_to_year(n.t)) for s in states for n in self.national if (s, n.t) not in present]


def build_dataset(records: list[ElectionRecord], manifest: OverrideManifest | None = None) -> Dataset:
    log = []
    if manifest is not None:
        records, log = apply_overrides(records, manifest)
    return Dataset(
        tuple(aggregate_state_year(records)),
        tuple(national_lean(records)),
        tuple(records),
        tuple(log),
    )

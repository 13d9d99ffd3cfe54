"""Command-line front end: ``leansim fit | simulate | report``."""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import bayes, election_data, regression, simulate
from .election_data import Dataset
from .errors import DataError, LeanSimError

log = logging.getLogger("leansim")

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2
DEFAULT_SCENARIOS = ("even", "pv2016", "pv2008", "pv2004")


@dataclass
class RunConfig:
    elections: Path
    meta: Path | None
    overrides: Path | None
    out: Path
    scenarios: list[str] = field(default_factory=list)
    dem: float | None = None
    rep: float | None = None
    year: int = 2020
    sims: int = 10000
    seed: int = 2020
    z: float = 1.96
    workers: int = 1
    separate_model: bool = False
    dump_draws: bool = False
    literal_covariance: bool = False


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {raw}")
    return value


def _positive_float(raw: str) -> float:
    value = float(raw)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {raw}")
    return value


def _seed(raw: str) -> int:
    value = int(raw)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--elections", type=Path, required=True, help="elections.csv")
    common.add_argument("--meta", type=Path, help="state_meta.csv")
    common.add_argument(
        "--overrides",
        default="default",
        help="overrides.csv; 'default' uses the bundled exclusion list, 'none' disables",
    )
    common.add_argument("--out", type=Path, default=None, help="output directory (default $LEANSIM_OUT or .)")
    common.add_argument("--seed", type=_seed, default=2020)
    common.add_argument("--sims", type=_positive_int, default=10000, help="Monte Carlo replications")
    common.add_argument("--workers", type=_positive_int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="leansim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[common], help="fit per-state regressions")
    fit.add_argument("--separate-model", action="store_true", help="also fit on individual races")

    for name, text in (("simulate", "simulate Electoral College outcomes"), ("report", "write a text summary")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument(
            "--scenario",
            action="append",
            choices=[*simulate.PRESETS, "custom", "actual"],
            help="repeatable; default: the four presets",
        )
        p.add_argument("--dem", type=_positive_float, help="Democratic %% for --scenario custom")
        p.add_argument("--rep", type=_positive_float, help="Republican %% for --scenario custom")
        p.add_argument("--year", type=int, default=2020)
        p.add_argument("--z", type=_positive_float, default=1.96, help="z for the bias check")
        p.add_argument("--dump-draws", action="store_true", help="write posteriorDraws.csv")
        p.add_argument(
            "--literal-covariance",
            action="store_true",
            help="scale the coefficient covariance by the fitted rather than the drawn variance",
        )
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {"default": election_data.default_manifest_path(), "none": None}.get(args.overrides)
    if overrides is None and args.overrides != "none":
        overrides = Path(args.overrides)
    out = args.out or Path(os.environ.get("LEANSIM_OUT", "."))
    cfg = RunConfig(
        elections=args.elections,
        meta=args.meta,
        overrides=overrides,
        out=out,
        seed=args.seed,
        sims=args.sims,
        workers=args.workers,
        separate_model=getattr(args, "separate_model", False),
    )
    if args.command != "fit":
        cfg.scenarios = args.scenario or list(DEFAULT_SCENARIOS)
        cfg.dem, cfg.rep, cfg.year, cfg.z = args.dem, args.rep, args.year, args.z
        cfg.dump_draws = args.dump_draws
        cfg.literal_covariance = args.literal_covariance
    return cfg


# ----------------------------------------------------------------------------
# Shared steps
# ----------------------------------------------------------------------------


def load_dataset(cfg: RunConfig) -> Dataset:
    records = election_data.load_elections(cfg.elections)
    manifest = election_data.load_manifest(cfg.overrides) if cfg.overrides else None
    return election_data.build_dataset(records, manifest)


def load_ec_votes(cfg: RunConfig) -> dict[str, int]:
    if cfg.meta is None:
        return dict(election_data.EC_VOTES_2010)
    return {m.state: m.ec_votes for m in election_data.load_meta(cfg.meta)}


def build_scenarios(cfg: RunConfig, dataset: Dataset) -> list[simulate.Scenario]:
    out = []
    for name in cfg.scenarios:
        if name == "custom":
            if cfg.dem is None or cfg.rep is None:
                raise DataError("--scenario custom needs --dem and --rep")
            out.append(simulate.custom(cfg.dem, cfg.rep, cfg.year))
        elif name == "actual":
            out.append(simulate.actual(list(dataset.records), cfg.year))
        else:
            out.append(simulate.preset(name, cfg.year))
    return out


def _ensure_out(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", label).strip("_")


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------


def cmd_fit(cfg: RunConfig) -> int:
    dataset = load_dataset(cfg)
    fits = regression.fit_all(dataset)
    diag = regression.diagnose(fits)
    out = _ensure_out(cfg)
    regression.write_results(out / "regressionResults.csv", fits)
    sup = regression.superlatives(fits)
    print(
        f"fitted {len(fits)} states on {len(dataset.observations)} state-years; "
        f"residual normality uniformity p = {diag.uniformity_pvalue:.4f}; "
        f"{diag.count_below_0_05} states with Shapiro-Wilk p < 0.05; "
        f"pooled residual p = {diag.pooled_sw_pvalue:.4g}"
    )
    print(
        f"reddest: {sup['reddest'][0]} (alpha = {sup['reddest'][1]:.4f}); "
        f"bluest: {sup['bluest'][0]} (alpha = {sup['bluest'][1]:.4f})"
    )
    if cfg.separate_model:
        sep = regression.fit_separate_model(election_data.race_observations(list(dataset.records)))
        print(f"separate-race model: {sep.count_below_0_05} of {len(sep.fits)} states with Shapiro-Wilk p < 0.05")
    return EXIT_OK


def _run_scenarios(cfg, fits, ec_votes, scenarios):
    runs = []
    for scenario in scenarios:
        runs.append(
            simulate.simulate_ec(
                fits, ec_votes, scenario, cfg.sims, cfg.seed, cfg.workers, literal=cfg.literal_covariance
            )
        )
    return runs


def cmd_simulate(cfg: RunConfig) -> int:
    dataset = load_dataset(cfg)
    ec_votes = load_ec_votes(cfg)
    scenarios = build_scenarios(cfg, dataset)
    fits = regression.fit_all(dataset)
    runs = _run_scenarios(cfg, fits, ec_votes, scenarios)
    out = _ensure_out(cfg)
    simulate.write_state_probs(out / "stateProb.csv", runs)
    simulate.write_importance(
        out / "importance.csv", [(s.label, simulate.importance(fits, s, ec_votes)) for s in scenarios]
    )
    simulate.write_histograms(out / "ecHistogram.csv", runs)
    for run in runs:
        (out / f"ecHistogram_{_slug(run.scenario.label)}.svg").write_text(
            simulate.histogram_svg(run.distribution), encoding="utf-8"
        )
    if cfg.dump_draws:
        bayes.write_draws(
            out / "posteriorDraws.csv",
            bayes.sample_posterior_batch(fits, cfg.seed, cfg.sims, cfg.literal_covariance),
        )
    for run in runs:
        p = run.distribution.dem_win_probability
        line = f"{run.scenario.label}: P(Democratic EC win) = {p:.4f}"
        if run.scenario.is_even:
            line += "; " + _bias_text(p, cfg.sims, cfg.z)
        print(line)
    return EXIT_OK


def _bias_text(p: float, n: int, z: float) -> str:
    parts = []
    for zz in dict.fromkeys((z, 1.28)):
        check = simulate.bias_check(p, n, zz)
        lo, hi = check.interval
        verdict = f"biased toward {check.direction}s" if check.biased else "not biased"
        parts.append(f"z={zz:g} interval [{lo:.4f}, {hi:.4f}] -> {verdict}")
    return "; ".join(parts)


def cmd_report(cfg: RunConfig) -> int:
    if cfg.meta is None:
        raise DataError("report needs --meta (populations and Cook PVI)")
    dataset = load_dataset(cfg)
    meta = election_data.load_meta(cfg.meta)
    ec_votes = {m.state: m.ec_votes for m in meta}
    fits = regression.fit_all(dataset)
    diag = regression.diagnose(fits)
    size = regression.size_effect(fits, meta)
    pvi = regression.pvi_comparison(fits, meta)
    sup = regression.superlatives(fits)
    scenarios = build_scenarios(cfg, dataset)
    runs = _run_scenarios(cfg, fits, ec_votes, scenarios)

    lines = ["Partisan lean report", "", f"states fitted: {len(fits)}; state-year observations: {len(dataset.observations)}"]
    missing = ", ".join(f"{s} {y}" for s, y in dataset.missing_cells()) or "none"
    lines.append(f"missing state-years: {missing}")
    lines += ["", "Fitted extremes"]
    for key, (state, value) in sup.items():
        lines.append(f"  {key.replace('_', ' ')}: {election_data.STATES[state]} ({value:.4f})")
    lines += [
        "",
        "Diagnostics",
        f"  Shapiro-Wilk p < 0.05: {diag.count_below_0_05} states",
        f"  uniformity of p-values (20 bins): p = {diag.uniformity_pvalue:.4f}",
        f"  pooled residuals Shapiro-Wilk: p = {diag.pooled_sw_pvalue:.4g}",
        "",
        "Size effect: corr(log sigma, log population)",
        f"  1990: {size.r1990:.4f}  2000: {size.r2000:.4f}  2010: {size.r2010:.4f}",
        "",
        "Comparison with Cook PVI",
        f"  correlation {pvi.correlation:.4f}, slope {pvi.slope:.6f}, intercept {pvi.intercept:.6f}",
        "",
        f"Simulations (N = {cfg.sims}, seed = {cfg.seed})",
    ]
    for run in runs:
        p = run.distribution.dem_win_probability
        lines.append(f"  {run.scenario.label}: P(Democratic EC win) = {p:.4f}")
        if run.scenario.is_even:
            lines.append(f"    {_bias_text(p, cfg.sims, cfg.z)}")
        top = simulate.importance(fits, run.scenario, ec_votes)[:3]
        lines.append("    most important: " + ", ".join(f"{s} ({v:.1f})" for s, v in top))
        tiers = {}
        for state, prob in sorted(run.win_frequency.items()):
            tiers.setdefault(simulate.classify(prob).value, []).append(state)
        for tier in simulate.Tier:
            lines.append(f"    {tier.value}: {' '.join(tiers.get(tier.value, [])) or '-'}")
    text = "\n".join(lines) + "\n"
    path = _ensure_out(cfg) / "report.txt"
    path.write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    cfg = config_from_args(args)
    try:
        return COMMANDS[args.command](cfg)
    except DataError as exc:
        print(f"leansim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LeanSimError, OSError) as exc:
        print(f"leansim: error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())

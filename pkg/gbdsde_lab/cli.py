"""Command line entry point: ``python -m gbdsde_lab <command>``."""

from __future__ import annotations

import argparse
import asyncio
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import colorlog

from .approx_ladder import cauchy_diagnostics, minimality_check
from .comparison_lab import ComparisonReport
from .config import coerce_threads, load_config
from .const import (
    DIRECTION_MAX,
    DIRECTION_MIN,
    EXIT_INAPPLICABLE,
    EXIT_OK,
    EXIT_VIOLATION,
    LADDER_ORDER_TOL,
    LOGGER,
    ORTHONORMAL_TOL,
    PICARD_AGREEMENT_TOL,
    REPRESENTATION_TOL,
    SIGMA_BAND,
    VERDICT_INAPPLICABLE,
    VERDICT_PASSED,
    VERDICT_STRICT,
    VERDICT_VIOLATION,
)
from .coordinator import LabCoordinator
from .exceptions import ConfigInvalid, GbdsdeLabError
from .export import (
    FORMAT_CSV,
    FORMATS,
    RunManifest,
    solution_columns,
    solution_records,
    write_ensemble_csv,
    write_json,
    write_table,
)
from .path_engine import empirical_bracket, jump_count_gof
from .solver import apriori_bound, norms, ode_reference

if TYPE_CHECKING:
    from collections.abc import Callable

    from .approx_ladder import LadderResult

COMMAND_BASIS = "basis"
COMMAND_SIMULATE = "simulate"
COMMAND_SOLVE = "solve"
COMMAND_LADDER = "ladder"
COMMAND_COMPARE = "compare"
COMMAND_REPORT = "report"

LOG_FORMAT = "%(log_color)s%(levelname)-8s%(reset)s %(name)s: %(message)s"


@dataclass(slots=True)
class CommandOutcome:
    """Files written, verdicts reached and the JSON summary of one command."""

    files: list[Path] = field(default_factory=list)
    verdicts: dict[str, str] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)

    def merge(self, name: str, other: CommandOutcome) -> None:
        """Fold another command's outcome in under ``name``."""
        self.files.extend(other.files)
        self.verdicts.update({f"{name}.{key}": v for key, v in other.verdicts.items()})
        self.summary[name] = other.summary

    @property
    def exit_code(self) -> int:
        """1 on any violation, 2 when something was inapplicable, 0 otherwise."""
        verdicts = set(self.verdicts.values())
        if VERDICT_VIOLATION in verdicts:
            return EXIT_VIOLATION
        if VERDICT_INAPPLICABLE in verdicts:
            return EXIT_INAPPLICABLE
        return EXIT_OK


def cmd_basis(coordinator: LabCoordinator, out: Path, fmt: str) -> CommandOutcome:
    """Report the orthonormal basis and its re-integrated Gram residual."""
    basis = coordinator.basis
    residual = basis.gram_residual()
    records = [
        {"index": i + 1, "power": k, "coefficient": float(basis.coeffs[i, k])}
        for i in range(basis.m)
        for k in range(i + 1)
    ]
    for i in range(basis.m):
        terms = " + ".join(
            f"{basis.coeffs[i, k]:.6g} x^{k}" for k in range(i + 1)
        )
        LOGGER.info("q_%d(x) = %s", i + 1, terms)
    summary = {
        "measure": coordinator.config.measure.as_records(),
        "moments": coordinator.moments.moments,
        "coefficients": basis.coeffs,
        "gram_residual": residual,
    }
    outcome = CommandOutcome(summary=summary)
    outcome.files.append(write_table(out, "basis", records, fmt))
    outcome.files.append(write_json(out / "basis_report.json", summary))
    outcome.verdicts["orthonormal"] = (
        VERDICT_PASSED if residual < ORTHONORMAL_TOL else VERDICT_VIOLATION
    )
    return outcome


def cmd_simulate(coordinator: LabCoordinator, out: Path, _fmt: str) -> CommandOutcome:
    """Simulate the path ensemble and check the bracket identity."""
    config = coordinator.config
    ensemble = asyncio.run(coordinator.async_simulate())
    horizon = config.grid.horizon
    outcome = CommandOutcome()
    brackets = []
    for i, j in config.simulate.brackets:
        mean, stderr = empirical_bracket(ensemble, i, j)
        target = horizon if i == j else 0.0
        sigmas = abs(mean - target) / stderr if stderr > 0.0 else 0.0
        verdict = VERDICT_PASSED if sigmas <= SIGMA_BAND else VERDICT_VIOLATION
        outcome.verdicts[f"bracket_{i}_{j}"] = verdict
        brackets.append(
            {
                "i": i,
                "j": j,
                "mean_over_t": mean / horizon,
                "stderr_over_t": stderr / horizon,
                "target_over_t": target / horizon,
                "sigmas": sigmas,
            }
        )
        LOGGER.info(
            "[H%d, H%d]_T / T = %.5f +- %.5f (%.2f sigma)",
            i,
            j,
            mean / horizon,
            stderr / horizon,
            sigmas,
        )
    gof = []
    for atom in range(config.measure.m):
        statistic, pvalue = jump_count_gof(ensemble, config.measure, atom)
        gof.append({"atom": atom + 1, "statistic": statistic, "pvalue": pvalue})
    outcome.summary = {"paths": ensemble.size, "brackets": brackets, "jump_counts": gof}
    if config.simulate.write_csv:
        outcome.files.append(write_ensemble_csv(out / "ensemble.csv", ensemble))
    outcome.files.append(write_json(out / "simulate_report.json", outcome.summary))
    return outcome


def cmd_solve(coordinator: LabCoordinator, out: Path, fmt: str) -> CommandOutcome:
    """Solve on every Brownian path and report norms, sweep and Picard agreement."""
    config = coordinator.config
    section = config.solve
    solutions = asyncio.run(coordinator.async_solve(section.driver, section.terminal))
    report = norms(solutions, mu=section.mu, lam=section.lam, seed=config.seed)
    driver = section.driver.driver()
    bound = apriori_bound(
        driver,
        section.terminal.terminal(),
        solutions[0].lattice,
        solutions[0].clock,
        [s.bpath.terminal for s in solutions],
    )
    outcome = CommandOutcome()
    outcome.summary = {
        "driver": driver.name,
        "terminal": section.terminal.name,
        "y0": [s.y0 for s in solutions],
        "max_residual": max(s.max_residual for s in solutions),
        "damped_steps": sum(s.damped_steps for s in solutions),
        "norms": report.as_dict(),
        "apriori": {"mu": bound.mu, "lambda": bound.lam, "data": bound.data, "bound": bound.bound},
    }
    outcome.verdicts["solve"] = VERDICT_PASSED
    if section.sweep:
        sweep = _sweep(coordinator)
        outcome.summary["sweep"] = sweep
        outcome.files.append(write_table(out, "sweep", sweep, fmt))
    if section.picard:
        if driver.lipschitz:
            picard = asyncio.run(coordinator.async_picard(section.driver, section.terminal))
            worst = max(row["distance"] for row in picard)
            outcome.summary["picard"] = picard
            outcome.verdicts["picard"] = (
                VERDICT_PASSED if worst <= PICARD_AGREEMENT_TOL else VERDICT_VIOLATION
            )
            LOGGER.info("Picard vs direct: max E_m distance %.3e", worst)
        else:
            outcome.verdicts["picard"] = VERDICT_INAPPLICABLE
    records = solution_records(solutions)
    outcome.files.append(
        write_table(out, "solution", records, fmt, solution_columns(solutions[0].lattice.m))
    )
    outcome.files.append(write_json(out / "norms.json", outcome.summary))
    return outcome


def cmd_ladder(coordinator: LabCoordinator, out: Path, fmt: str) -> CommandOutcome:
    """Run the approximation ladder in the configured direction(s)."""
    results = asyncio.run(coordinator.async_ladder())
    outcome = CommandOutcome()
    by_direction = {}
    for result in results:
        name = f"ladder_{result.direction}"
        summary = result.summary()
        if len(result.rungs) >= 3:  # noqa: PLR2004
            table = cauchy_diagnostics(result)
            summary["cauchy_constant"] = table.constant
            summary["cauchy_bounded"] = table.bounded
            outcome.verdicts[f"{name}_cauchy"] = (
                VERDICT_PASSED if table.bounded else VERDICT_VIOLATION
            )
            outcome.files.append(write_table(out, f"{name}_cauchy", table.as_records(), fmt))
        outcome.files.append(write_table(out, name, result.as_records(), fmt))
        outcome.summary[result.direction] = summary
        outcome.verdicts[name] = VERDICT_PASSED if result.monotone else VERDICT_INAPPLICABLE
        by_direction[result.direction] = result
    _add_ode_reference(coordinator, outcome, by_direction)
    if DIRECTION_MIN in by_direction and DIRECTION_MAX in by_direction:
        lower = by_direction[DIRECTION_MIN]
        upper = by_direction[DIRECTION_MAX]
        gap = minimality_check(lower, upper.rungs[-1].solution)
        outcome.summary["bracket_gap"] = gap
        outcome.verdicts["bracket"] = (
            VERDICT_PASSED if gap >= -LADDER_ORDER_TOL else VERDICT_VIOLATION
        )
    outcome.files.append(write_json(out / "ladder_report.json", outcome.summary))
    return outcome


def cmd_compare(coordinator: LabCoordinator, out: Path, _fmt: str) -> CommandOutcome:
    """Compare the two configured problems on every Brownian path."""
    reports = asyncio.run(coordinator.async_compare())
    outcome = CommandOutcome()
    verdict = _combined_verdict(reports)
    outcome.verdicts["comparison"] = verdict
    applicable = [r for r in reports if r.verdict != VERDICT_INAPPLICABLE]
    if applicable:
        worst = max(r.representation_residual for r in applicable)
        outcome.verdicts["representation"] = (
            VERDICT_PASSED if worst <= REPRESENTATION_TOL else VERDICT_VIOLATION
        )
    outcome.summary = {
        "verdict": verdict,
        "min_gap": min(r.min_gap for r in reports),
        "paths": [r.as_dict() for r in reports],
    }
    outcome.files.append(write_json(out / "compare_report.json", outcome.summary))
    return outcome


def cmd_report(coordinator: LabCoordinator, out: Path, fmt: str) -> CommandOutcome:
    """Run every section and write one summary."""
    outcome = CommandOutcome()
    for name, command in SECTIONS.items():
        LOGGER.info("Running %s", name)
        outcome.merge(name, command(coordinator, out, fmt))
    outcome.files.append(
        write_json(out / "report.json", {"sections": outcome.summary, "verdicts": outcome.verdicts})
    )
    return outcome


SECTIONS: dict[str, Callable[[LabCoordinator, Path, str], CommandOutcome]] = {
    COMMAND_BASIS: cmd_basis,
    COMMAND_SIMULATE: cmd_simulate,
    COMMAND_SOLVE: cmd_solve,
    COMMAND_LADDER: cmd_ladder,
    COMMAND_COMPARE: cmd_compare,
}

COMMANDS = {**SECTIONS, COMMAND_REPORT: cmd_report}


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser."""
    parser = argparse.ArgumentParser(
        prog="gbdsde_lab",
        description="Backward doubly stochastic equations with jumps: numerical lab",
    )
    parser.add_argument("command", choices=list(COMMANDS), help="Experiment to run")
    parser.add_argument("--config", type=Path, help="Experiment YAML file")
    parser.add_argument("--seed", type=int, help="Override the master seed")
    parser.add_argument("--out", type=Path, default=Path("results"), help="Output directory")
    parser.add_argument("--threads", type=int, help="Worker threads")
    parser.add_argument("--format", choices=FORMATS, default=FORMAT_CSV, help="Table format")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def setup_logging(*, verbose: bool = False) -> None:
    """Install one colored stream handler on the package logger."""
    for handler in list(LOGGER.handlers):
        if isinstance(handler.formatter, colorlog.ColoredFormatter):
            LOGGER.removeHandler(handler)
    handler = colorlog.StreamHandler()
    handler.setFormatter(colorlog.ColoredFormatter(LOG_FORMAT))
    LOGGER.addHandler(handler)
    LOGGER.setLevel(logging.DEBUG if verbose else logging.INFO)


def main(argv: list[str] | None = None) -> int:
    """Run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(verbose=args.verbose)
    try:
        config = load_config(args.config).with_seed(args.seed)
    except ConfigInvalid as err:
        LOGGER.error("Invalid config at %s: %s", err.location, err)  # noqa: TRY400
        return EXIT_VIOLATION

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    coordinator = LabCoordinator(config, threads=coerce_threads(args.threads))
    manifest = RunManifest(
        command=args.command,
        config_hash=config.config_hash,
        seed=config.seed,
        brownian_paths=list(range(config.brownian_paths)),
    )
    LOGGER.info("Running %s (config %s, seed %d)", args.command, config.config_hash[:12], config.seed)
    started = time.perf_counter()
    try:
        outcome = COMMANDS[args.command](coordinator, out, args.format)
    except GbdsdeLabError as err:
        LOGGER.error("%s failed: %s", args.command, err)  # noqa: TRY400
        manifest.verdicts[args.command] = VERDICT_VIOLATION
        manifest.wall_clock = time.perf_counter() - started
        manifest.write(out)
        return EXIT_VIOLATION
    manifest.wall_clock = time.perf_counter() - started
    manifest.verdicts = dict(outcome.verdicts)
    manifest.add_files(outcome.files)
    manifest.write(out)
    LOGGER.info("Verdicts: %s", outcome.verdicts)
    return outcome.exit_code


def _sweep(coordinator: LabCoordinator) -> list[dict[str, Any]]:
    """Y_0 on path 0 for every sweep size, with successive differences and their ratios."""
    section = coordinator.config.solve
    rows: list[dict[str, Any]] = []
    for steps in section.sweep:
        solutions = asyncio.run(
            coordinator.async_solve(section.driver, section.terminal, steps=steps)
        )
        row: dict[str, Any] = {"steps": steps, "y0": solutions[0].y0, "diff": None, "ratio": None}
        if rows:
            row["diff"] = abs(row["y0"] - rows[-1]["y0"])
            previous = rows[-1]["diff"]
            if previous:
                row["ratio"] = row["diff"] / previous
        rows.append(row)
    return rows


def _add_ode_reference(
    coordinator: LabCoordinator, outcome: CommandOutcome, by_direction: dict[str, LadderResult]
) -> None:
    section = coordinator.config.ladder
    driver = section.driver.driver()
    if not driver.deterministic or section.terminal.name != "constant" or not by_direction:
        return
    first = next(iter(by_direction.values())).rungs[0].solution
    reference = ode_reference(driver, float(first.y[-1][0]), first.clock)
    outcome.summary["ode_reference"] = reference
    for direction, result in by_direction.items():
        outcome.summary[direction]["ode_gap"] = float(result.y0_values[-1] - reference)


def _combined_verdict(reports: list[ComparisonReport]) -> str:
    verdicts = [r.verdict for r in reports]
    if VERDICT_INAPPLICABLE in verdicts:
        return VERDICT_INAPPLICABLE
    if all(v == VERDICT_STRICT for v in verdicts):
        return VERDICT_STRICT
    return VERDICT_PASSED

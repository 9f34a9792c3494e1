"""YAML experiment configuration for gbdsde_lab."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import voluptuous as vol
import yaml

from .const import (
    CLOCK_PROFILES,
    CONF_BOX_RADIUS,
    CONF_BRACKETS,
    CONF_BROWNIAN_PATHS,
    CONF_CLOCK,
    CONF_COMPARE,
    CONF_COND_MAX,
    CONF_DIRECTION,
    CONF_DRIVER,
    CONF_DRIVER_1,
    CONF_DRIVER_2,
    CONF_FIXED_POINT_TOL,
    CONF_GRID,
    CONF_GRID_SPACING,
    CONF_HORIZON,
    CONF_INTENSITY,
    CONF_KAPPA,
    CONF_LADDER,
    CONF_LAMBDA,
    CONF_MAX_ITERATIONS,
    CONF_MAX_NODES,
    CONF_MAX_RADIUS,
    CONF_MEASURE,
    CONF_MU,
    CONF_NAME,
    CONF_ORDER_TOL,
    CONF_PARAMS,
    CONF_PATHS,
    CONF_PICARD,
    CONF_PICARD_MAX_ITERATIONS,
    CONF_PICARD_TOL,
    CONF_POWER,
    CONF_PROFILE,
    CONF_RUNGS,
    CONF_SEED,
    CONF_SIMULATE,
    CONF_SIZE,
    CONF_SOLVE,
    CONF_STEPS,
    CONF_STOP_TOL,
    CONF_SWEEP,
    CONF_TABLE,
    CONF_TERMINAL,
    CONF_TERMINAL_1,
    CONF_TERMINAL_2,
    CONF_TOLERANCES,
    CONF_WEIGHTS,
    CONF_WRITE_CSV,
    DEFAULT_BOX_RADIUS,
    DEFAULT_BROWNIAN_PATHS,
    DEFAULT_COMPARE_DRIVER,
    DEFAULT_COMPARE_TERMINAL,
    DEFAULT_COND_MAX,
    DEFAULT_FIXED_POINT_TOL,
    DEFAULT_HORIZON,
    DEFAULT_LADDER_DRIVER,
    DEFAULT_LADDER_TERMINAL,
    DEFAULT_LADDER_XI,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_MAX_NODES,
    DEFAULT_MEASURE,
    DEFAULT_ORDER_TOL,
    DEFAULT_PICARD_MAX_ITERATIONS,
    DEFAULT_PICARD_TOL,
    DEFAULT_SEED,
    DEFAULT_SIM_PATHS,
    DEFAULT_SOLVE_DRIVER,
    DEFAULT_SOLVE_TERMINAL,
    DEFAULT_STEPS,
    DEFAULT_THREADS,
    DIRECTION_BOTH,
    DIRECTION_MAX,
    DIRECTION_MIN,
    DOMAIN,
    LOGGER,
    MAX_SIM_PATHS,
    MAX_STEPS,
    MAX_THREADS,
    MIN_ENSEMBLE,
    PROFILE_LINEAR,
)
from .drivers import DriverSpec, TerminalSpec, make_driver, make_terminal
from .exceptions import (
    ClockProfileError,
    ConfigInvalid,
    DriverError,
    GridError,
    InvalidMeasureError,
    NearSingularError,
)
from .levy_basis import JumpMeasure, teugels_basis
from .time_utils import (
    ClockProfile,
    TimeGrid,
    clock_values,
    normalize_clock_table,
    parse_clock_profile,
)

if TYPE_CHECKING:
    from collections.abc import Mapping


def _ensure_mapping(value: Any) -> dict[str, Any]:
    """Treat an empty YAML section as an empty mapping."""
    if value is None:
        return {}
    if not isinstance(value, dict):
        msg = "expected a mapping"
        raise vol.Invalid(msg)
    return value


def _named(value: Any) -> dict[str, Any]:
    """Accept ``name`` or ``{name: ..., params: {...}}``."""
    if isinstance(value, str):
        return {CONF_NAME: value, CONF_PARAMS: {}}
    return _ensure_mapping(value)


def _section(schema: vol.Schema) -> vol.All:
    return vol.All(_ensure_mapping, schema)


POSITIVE_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0.0, min_included=False))
NONNEGATIVE_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0.0))

PARAMS_SCHEMA = vol.Schema(
    {str: vol.Any(vol.Coerce(float), [vol.Coerce(float)])}
)


def named_schema(default_name: str, default_params: Mapping[str, Any] | None = None) -> vol.All:
    """Schema for a driver or terminal selection with its defaults."""
    return vol.All(
        _named,
        vol.Schema(
            {
                vol.Optional(CONF_NAME, default=default_name): str,
                vol.Optional(
                    CONF_PARAMS, default=dict(default_params or {})
                ): vol.All(_ensure_mapping, PARAMS_SCHEMA),
            }
        ),
    )


ATOM_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_SIZE): vol.Coerce(float),
        vol.Required(CONF_INTENSITY): POSITIVE_FLOAT,
    }
)

GRID_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_HORIZON, default=DEFAULT_HORIZON): POSITIVE_FLOAT,
        vol.Optional(CONF_STEPS, default=DEFAULT_STEPS): vol.All(
            vol.Coerce(int), vol.Range(min=1, max=MAX_STEPS)
        ),
    }
)

CLOCK_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_PROFILE, default=PROFILE_LINEAR): vol.In(CLOCK_PROFILES),
        vol.Optional(CONF_KAPPA, default=1.0): NONNEGATIVE_FLOAT,
        vol.Optional(CONF_POWER, default=1.0): vol.Coerce(float),
        vol.Optional(CONF_TABLE, default=[]): vol.All(
            [vol.All([vol.Coerce(float)], vol.Length(min=2, max=2))],
            normalize_clock_table,
        ),
    }
)

TOLERANCES_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_FIXED_POINT_TOL, default=DEFAULT_FIXED_POINT_TOL): POSITIVE_FLOAT,
        vol.Optional(CONF_MAX_ITERATIONS, default=DEFAULT_MAX_ITERATIONS): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_PICARD_TOL, default=DEFAULT_PICARD_TOL): POSITIVE_FLOAT,
        vol.Optional(
            CONF_PICARD_MAX_ITERATIONS, default=DEFAULT_PICARD_MAX_ITERATIONS
        ): vol.All(vol.Coerce(int), vol.Range(min=1)),
        vol.Optional(CONF_COND_MAX, default=DEFAULT_COND_MAX): POSITIVE_FLOAT,
        vol.Optional(CONF_MAX_NODES, default=DEFAULT_MAX_NODES): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_ORDER_TOL, default=DEFAULT_ORDER_TOL): NONNEGATIVE_FLOAT,
    }
)

SIMULATE_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_PATHS, default=DEFAULT_SIM_PATHS): vol.All(
            vol.Coerce(int), vol.Clamp(min=MIN_ENSEMBLE, max=MAX_SIM_PATHS)
        ),
        vol.Optional(CONF_BRACKETS, default=[]): [
            vol.All([vol.Coerce(int)], vol.Length(min=2, max=2))
        ],
        vol.Optional(CONF_WRITE_CSV, default=True): bool,
    }
)

SOLVE_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_DRIVER, default={}): named_schema(DEFAULT_SOLVE_DRIVER),
        vol.Optional(CONF_TERMINAL, default={}): named_schema(
            DEFAULT_SOLVE_TERMINAL, {"c": 1.0}
        ),
        vol.Optional(CONF_PICARD, default=False): bool,
        vol.Optional(CONF_SWEEP, default=[]): [
            vol.All(vol.Coerce(int), vol.Range(min=1, max=MAX_STEPS))
        ],
        vol.Optional(CONF_WEIGHTS, default={}): _section(
            vol.Schema(
                {
                    vol.Optional(CONF_MU, default=0.0): vol.Coerce(float),
                    vol.Optional(CONF_LAMBDA, default=0.0): vol.Coerce(float),
                }
            )
        ),
    }
)

LADDER_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_DRIVER, default={}): named_schema(DEFAULT_LADDER_DRIVER),
        vol.Optional(CONF_TERMINAL, default={}): named_schema(
            DEFAULT_LADDER_TERMINAL, {"c": DEFAULT_LADDER_XI}
        ),
        vol.Optional(CONF_RUNGS): vol.All([POSITIVE_FLOAT], vol.Length(min=1)),
        vol.Optional(CONF_DIRECTION, default=DIRECTION_MIN): vol.In(
            [DIRECTION_MIN, DIRECTION_MAX, DIRECTION_BOTH]
        ),
        vol.Optional(CONF_STOP_TOL): POSITIVE_FLOAT,
        vol.Optional(CONF_BOX_RADIUS, default=DEFAULT_BOX_RADIUS): POSITIVE_FLOAT,
        vol.Optional(CONF_GRID_SPACING): POSITIVE_FLOAT,
        vol.Optional(CONF_MAX_RADIUS): POSITIVE_FLOAT,
    }
)

COMPARE_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_DRIVER_1, default={}): named_schema(
            DEFAULT_COMPARE_DRIVER, {"a": -1.0, "c": 0.5}
        ),
        vol.Optional(CONF_DRIVER_2, default={}): named_schema(
            DEFAULT_COMPARE_DRIVER, {"a": -1.0}
        ),
        vol.Optional(CONF_TERMINAL_1, default={}): named_schema(
            DEFAULT_COMPARE_TERMINAL, {"c": 1.0}
        ),
        vol.Optional(CONF_TERMINAL_2, default={}): named_schema(
            DEFAULT_COMPARE_TERMINAL, {"c": 0.5}
        ),
    }
)

LAB_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_MEASURE, default=list(DEFAULT_MEASURE)): vol.All(
            [ATOM_SCHEMA], vol.Length(min=1)
        ),
        vol.Optional(CONF_GRID, default={}): _section(GRID_SCHEMA),
        vol.Optional(CONF_CLOCK, default={}): _section(CLOCK_SCHEMA),
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): vol.All(
            vol.Coerce(int), vol.Range(min=0, max=2**64 - 1)
        ),
        vol.Optional(CONF_BROWNIAN_PATHS, default=DEFAULT_BROWNIAN_PATHS): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_TOLERANCES, default={}): _section(TOLERANCES_SCHEMA),
        vol.Optional(CONF_SIMULATE, default={}): _section(SIMULATE_SCHEMA),
        vol.Optional(CONF_SOLVE, default={}): _section(SOLVE_SCHEMA),
        vol.Optional(CONF_LADDER, default={}): _section(LADDER_SCHEMA),
        vol.Optional(CONF_COMPARE, default={}): _section(COMPARE_SCHEMA),
    }
)

CONFIG_SCHEMA = vol.Schema(
    {vol.Required(DOMAIN): vol.All(_ensure_mapping, LAB_SCHEMA)},
    extra=vol.ALLOW_EXTRA,
)


@dataclass(frozen=True, slots=True)
class NamedSelection:
    """A built-in driver or terminal chosen by name, with its parameters."""

    name: str
    params: dict[str, Any] = field(default_factory=dict)

    def driver(self) -> DriverSpec:
        """Build the selected driver."""
        return make_driver(self.name, self.params)

    def terminal(self) -> TerminalSpec:
        """Build the selected terminal value."""
        return make_terminal(self.name, self.params)


@dataclass(frozen=True, slots=True)
class Tolerances:
    """Numerical tolerances shared by every subcommand."""

    fixed_point_tol: float = DEFAULT_FIXED_POINT_TOL
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    picard_tol: float = DEFAULT_PICARD_TOL
    picard_max_iterations: int = DEFAULT_PICARD_MAX_ITERATIONS
    cond_max: float = DEFAULT_COND_MAX
    max_nodes: int = DEFAULT_MAX_NODES
    order_tol: float = DEFAULT_ORDER_TOL

    def solver_options(self) -> dict[str, Any]:
        """Keyword arguments for ``solve_backward``."""
        return {"tol": self.fixed_point_tol, "max_iterations": self.max_iterations}


@dataclass(frozen=True, slots=True)
class SimulateSection:
    """Path simulation settings."""

    paths: int
    brackets: tuple[tuple[int, int], ...]
    write_csv: bool


@dataclass(frozen=True, slots=True)
class SolveSection:
    """Solver settings."""

    driver: NamedSelection
    terminal: NamedSelection
    picard: bool
    sweep: tuple[int, ...]
    mu: float
    lam: float


@dataclass(frozen=True, slots=True)
class LadderSection:
    """Approximation ladder settings."""

    driver: NamedSelection
    terminal: NamedSelection
    rungs: tuple[float, ...] | None
    direction: str
    stop_tol: float | None
    box_radius: float
    grid_spacing: float | None
    max_radius: float | None


@dataclass(frozen=True, slots=True)
class CompareSection:
    """Comparison experiment settings."""

    driver1: NamedSelection
    driver2: NamedSelection
    terminal1: NamedSelection
    terminal2: NamedSelection


@dataclass(frozen=True, slots=True, eq=False)
class ExperimentConfig:
    """Validated, immutable experiment configuration."""

    measure: JumpMeasure
    grid: TimeGrid
    clock: ClockProfile
    seed: int
    brownian_paths: int
    tolerances: Tolerances
    simulate: SimulateSection
    solve: SolveSection
    ladder: LadderSection
    compare: CompareSection
    document: dict[str, Any]

    @property
    def canonical_json(self) -> str:
        """Sorted, whitespace-free JSON of the validated document."""
        return json.dumps(self.document, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON."""
        return hashlib.sha256(self.canonical_json.encode("utf-8")).hexdigest()

    def with_seed(self, seed: int | None) -> ExperimentConfig:
        """Return the config with the master seed replaced."""
        if seed is None:
            return self
        document = copy.deepcopy(self.document)
        document[CONF_SEED] = seed
        return parse_config({DOMAIN: document})


def coerce_threads(value: int | None) -> int:
    """
    Coerce a value to a valid worker count.

    :param value: The value to coerce.
    :type value: int | None
    :return: The coerced value.
    :rtype: int
    """
    try:
        coerced = int(value) if value is not None else DEFAULT_THREADS
    except (TypeError, ValueError):
        coerced = DEFAULT_THREADS
    return max(1, min(coerced, MAX_THREADS))


def load_config(path: str | Path | None) -> ExperimentConfig:
    """
    Read, validate and cross-check an experiment file.

    ``None`` yields the default experiment.
    """
    if path is None:
        return parse_config({DOMAIN: {}})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        msg = f"Cannot read config file: {err}"
        raise ConfigInvalid(msg, str(path)) from err
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as err:
        msg = f"Invalid YAML: {err}"
        raise ConfigInvalid(msg, str(path)) from err
    LOGGER.debug("Loaded experiment config from %s", path)
    return parse_config(document)


def parse_config(document: Any) -> ExperimentConfig:
    """Validate a parsed YAML document and check module preconditions."""
    try:
        validated = CONFIG_SCHEMA(_ensure_mapping(document))
    except vol.Invalid as err:
        location = ".".join(str(part) for part in err.path) or DOMAIN
        raise ConfigInvalid(err.error_message, location) from err
    return _build(validated[DOMAIN])


def _build(conf: dict[str, Any]) -> ExperimentConfig:  # noqa: PLR0915
    measure = _checked(
        lambda: JumpMeasure.from_records(conf[CONF_MEASURE]), CONF_MEASURE
    )
    tolerances = Tolerances(**conf[CONF_TOLERANCES])
    _checked(lambda: teugels_basis(measure, tolerances.cond_max), CONF_MEASURE)
    grid_conf = conf[CONF_GRID]
    grid = _checked(
        lambda: TimeGrid(grid_conf[CONF_HORIZON], grid_conf[CONF_STEPS]), CONF_GRID
    )
    _check_steps(measure, grid.horizon, grid.steps, CONF_GRID, CONF_STEPS)
    clock = _checked(lambda: parse_clock_profile(conf[CONF_CLOCK]), CONF_CLOCK)
    _checked(lambda: clock_values(clock, grid), CONF_CLOCK)

    sim_conf = conf[CONF_SIMULATE]
    brackets = tuple((int(i), int(j)) for i, j in sim_conf[CONF_BRACKETS])
    for i, j in brackets:
        if not (1 <= i <= measure.m and 1 <= j <= measure.m):
            msg = f"bracket ({i}, {j}) outside 1..{measure.m}"
            raise ConfigInvalid(msg, _where(CONF_SIMULATE, CONF_BRACKETS))
    simulate = SimulateSection(
        paths=sim_conf[CONF_PATHS],
        brackets=brackets or ((1, 1),),
        write_csv=sim_conf[CONF_WRITE_CSV],
    )

    solve_conf = conf[CONF_SOLVE]
    solve = SolveSection(
        driver=_selection(solve_conf[CONF_DRIVER], CONF_SOLVE, CONF_DRIVER, driver=True),
        terminal=_selection(solve_conf[CONF_TERMINAL], CONF_SOLVE, CONF_TERMINAL),
        picard=solve_conf[CONF_PICARD],
        sweep=tuple(solve_conf[CONF_SWEEP]),
        mu=solve_conf[CONF_WEIGHTS][CONF_MU],
        lam=solve_conf[CONF_WEIGHTS][CONF_LAMBDA],
    )
    for steps in solve.sweep:
        _check_steps(measure, grid.horizon, steps, CONF_SOLVE, CONF_SWEEP)

    ladder_conf = conf[CONF_LADDER]
    ladder = LadderSection(
        driver=_selection(ladder_conf[CONF_DRIVER], CONF_LADDER, CONF_DRIVER, driver=True),
        terminal=_selection(ladder_conf[CONF_TERMINAL], CONF_LADDER, CONF_TERMINAL),
        rungs=tuple(ladder_conf[CONF_RUNGS]) if CONF_RUNGS in ladder_conf else None,
        direction=ladder_conf[CONF_DIRECTION],
        stop_tol=ladder_conf.get(CONF_STOP_TOL),
        box_radius=ladder_conf[CONF_BOX_RADIUS],
        grid_spacing=ladder_conf.get(CONF_GRID_SPACING),
        max_radius=ladder_conf.get(CONF_MAX_RADIUS),
    )
    if ladder.rungs is not None:
        _check_rungs(ladder.rungs, ladder.driver.driver().lipschitz_k)

    compare_conf = conf[CONF_COMPARE]
    compare = CompareSection(
        driver1=_selection(compare_conf[CONF_DRIVER_1], CONF_COMPARE, CONF_DRIVER_1, driver=True),
        driver2=_selection(compare_conf[CONF_DRIVER_2], CONF_COMPARE, CONF_DRIVER_2, driver=True),
        terminal1=_selection(compare_conf[CONF_TERMINAL_1], CONF_COMPARE, CONF_TERMINAL_1),
        terminal2=_selection(compare_conf[CONF_TERMINAL_2], CONF_COMPARE, CONF_TERMINAL_2),
    )

    document = copy.deepcopy(conf)
    document[CONF_CLOCK][CONF_TABLE] = [list(row) for row in document[CONF_CLOCK][CONF_TABLE]]
    return ExperimentConfig(
        measure=measure,
        grid=grid,
        clock=clock,
        seed=conf[CONF_SEED],
        brownian_paths=conf[CONF_BROWNIAN_PATHS],
        tolerances=tolerances,
        simulate=simulate,
        solve=solve,
        ladder=ladder,
        compare=compare,
        document=document,
    )


def _where(*parts: str) -> str:
    return ".".join((DOMAIN, *parts))


def _checked(build: Any, *location: str) -> Any:
    """Run ``build`` and report module precondition failures at ``location``."""
    try:
        return build()
    except (
        InvalidMeasureError,
        NearSingularError,
        GridError,
        ClockProfileError,
        DriverError,
    ) as err:
        raise ConfigInvalid(str(err), _where(*location)) from err


def _check_steps(
    measure: JumpMeasure, horizon: float, steps: int, *location: str
) -> None:
    """Branch probabilities need total intensity times dt below one."""
    mass = measure.total_intensity * horizon / steps
    if mass >= 1.0:
        min_steps = int(measure.total_intensity * horizon) + 1
        msg = (
            f"total intensity times dt is {mass:.4g} >= 1 for N={steps}; "
            f"use at least {min_steps} steps"
        )
        raise ConfigInvalid(msg, _where(*location))


def _check_rungs(rungs: tuple[float, ...], lipschitz_k: float) -> None:
    location = _where(CONF_LADDER, CONF_RUNGS)
    if rungs[0] < lipschitz_k:
        msg = f"first rung {rungs[0]} is below the growth constant K={lipschitz_k}"
        raise ConfigInvalid(msg, location)
    for previous, current in zip(rungs, rungs[1:], strict=False):
        if current <= previous:
            msg = f"rungs must be strictly increasing, got {previous} then {current}"
            raise ConfigInvalid(msg, location)


def _selection(
    conf: dict[str, Any], section: str, key: str, *, driver: bool = False
) -> NamedSelection:
    selection = NamedSelection(name=conf[CONF_NAME], params=dict(conf[CONF_PARAMS]))
    build = selection.driver if driver else selection.terminal
    _checked(build, section, key, CONF_NAME)
    return selection

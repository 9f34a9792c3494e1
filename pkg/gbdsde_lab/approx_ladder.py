"""Inf/sup-convolution Lipschitz approximations and the monotone ladder of solutions."""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import ceil
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np

from .comparison_lab import check_jump_condition, difference_quotients
from .const import (
    CAUCHY_ATOL,
    CAUCHY_SLACK,
    DEFAULT_BOX_RADIUS,
    DEFAULT_GRID_SPACING_FACTOR,
    DEFAULT_LADDER_STOP_TOL,
    DEFAULT_MAX_RADIUS_FACTOR,
    DIRECTION_MAX,
    DIRECTION_MIN,
    LADDER_ORDER_TOL,
    LOCAL_SEARCH_LEVELS,
    LOGGER,
)
from .exceptions import ApproximationError, ComparisonViolation
from .solver import apriori_bound, norms, solve_backward

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .drivers import DriverSpec, TerminalSpec
    from .lattice import JumpLattice
    from .path_engine import BrownianPath
    from .solver import AprioriBound, Solution
    from .time_utils import ClockA

DIRECTIONS = (DIRECTION_MIN, DIRECTION_MAX)


class ConvolutionValue(NamedTuple):
    """Approximation value with its grid-truncation error bar."""

    value: float
    error_bound: float


@dataclass(frozen=True, slots=True)
class SearchGrid:
    """Rational search lattice k * spacing inside [-radius, radius]^dim."""

    radius: float
    spacing: float
    dim: int = 1

    def __post_init__(self) -> None:
        """Validate radius and spacing."""
        if self.spacing <= 0.0 or self.radius <= 0.0:
            msg = f"Search grid needs positive radius and spacing, got {self}"
            raise ApproximationError(msg)
        if self.dim < 1:
            msg = f"Search grid dimension must be positive, got {self.dim}"
            raise ApproximationError(msg)

    @property
    def axis(self) -> np.ndarray:
        """Grid points along one axis, always containing 0."""
        half = int(np.floor(self.radius / self.spacing))
        return np.arange(-half, half + 1) * self.spacing

    def points(self) -> np.ndarray:
        """All grid points, shape (count, dim)."""
        axis = self.axis
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, slots=True)
class LipschitzApprox:
    """Penalty n >= K with the search grid used to evaluate phi_n."""

    n: float
    grid: SearchGrid
    lipschitz_k: float
    direction: str = DIRECTION_MIN

    def __post_init__(self) -> None:
        """Validate penalty and direction."""
        if self.n < self.lipschitz_k:
            msg = f"Penalty n = {self.n} is below K = {self.lipschitz_k}"
            raise ApproximationError(msg)
        if self.direction not in DIRECTIONS:
            msg = f"Unknown direction {self.direction!r}"
            raise ApproximationError(msg)

    @property
    def error_bound(self) -> float:
        """Grid-truncation error bar (n + K) delta."""
        return (self.n + self.lipschitz_k) * self.grid.spacing


@dataclass(frozen=True, slots=True)
class ContinuousDriver:
    """A continuous driver with its evaluation box [-R, R]^{1+m}."""

    base: DriverSpec
    box_radius: float = DEFAULT_BOX_RADIUS

    @property
    def lipschitz_k(self) -> float:
        """Linear-growth constant K."""
        return self.base.lipschitz_k

    def sup_on_box(self, m: int, horizon: float, samples: int = 64) -> float:
        """Growth-bound estimate of sup |f| and sup |h| on the box."""
        times = np.linspace(0.0, horizon, samples)
        growth = max(
            max(self.base.f_growth(t) for t in times),
            max(self.base.h_growth(t) for t in times),
        )
        return growth + self.lipschitz_k * self.box_radius * (1.0 + np.sqrt(m))


@dataclass(frozen=True, slots=True, eq=False)
class LadderRung:
    """One rung n of the ladder and its gaps to the previous rung."""

    n: float
    solution: Solution
    em_norm: float
    sup_gap: float | None = None
    y_gap: float | None = None
    z_gap: float | None = None
    order_gap: float | None = None
    jump_condition_min: float | None = None

    @property
    def y0(self) -> float:
        """Y^n at time zero."""
        return self.solution.y0

    def as_record(self, bound: float) -> dict[str, Any]:
        """Return the CSV row of this rung."""
        return {
            "n": self.n,
            "y0": self.y0,
            "sup_gap": self.sup_gap,
            "y_gap": self.y_gap,
            "z_gap": self.z_gap,
            "em_norm": self.em_norm,
            "norm_bound": bound,
        }


@dataclass(frozen=True, slots=True, eq=False)
class LadderResult:
    """The ladder of solutions with its verdicts."""

    direction: str
    rungs: tuple[LadderRung, ...]
    bound: AprioriBound
    monotone: bool
    converged: bool
    error_bars: tuple[float, ...]

    @property
    def y0_values(self) -> np.ndarray:
        """Y^n_0 per rung."""
        return np.array([rung.y0 for rung in self.rungs])

    @property
    def sup_gaps(self) -> np.ndarray:
        """Sup-gaps at t = 0 between successive rungs."""
        return np.array([rung.sup_gap for rung in self.rungs[1:]], dtype=float)

    @property
    def within_bound(self) -> bool:
        """True when no rung's E_m norm exceeds the a-priori constant."""
        return all(rung.em_norm <= self.bound.bound for rung in self.rungs)

    def as_records(self) -> list[dict[str, Any]]:
        """Return CSV rows, one per rung."""
        return [rung.as_record(self.bound.bound) for rung in self.rungs]

    def summary(self) -> dict[str, Any]:
        """Return the JSON summary."""
        norms_ = [rung.em_norm for rung in self.rungs]
        return {
            "direction": self.direction,
            "rungs": [rung.n for rung in self.rungs],
            "y0": self.y0_values.tolist(),
            "monotone": self.monotone,
            "converged": self.converged,
            "final_gap": float(self.sup_gaps[-1]) if len(self.rungs) > 1 else None,
            "norm_bound": self.bound.bound,
            "within_bound": self.within_bound,
            "norm_ratio": max(norms_) / min(norms_) if min(norms_) > 0 else None,
        }


@dataclass(frozen=True, slots=True)
class CauchyRow:
    """Gaps between rung n and the next rung."""

    n: float
    y_gap: float
    z_gap: float
    ratio: float | None

    @classmethod
    def from_gaps(cls, n: float, y_gap: float, z_gap: float) -> CauchyRow:
        """Build a row, with ratio Z-gap / sqrt(Y-gap) when the Y-gap is positive."""
        ratio = z_gap / np.sqrt(y_gap) if y_gap > 0.0 else None
        return cls(n=n, y_gap=y_gap, z_gap=z_gap, ratio=ratio)


@dataclass(frozen=True, slots=True)
class CauchyTable:
    """Successive-gap table with the constant C' fitted on its early rows."""

    rows: tuple[CauchyRow, ...]
    constant: float
    bounded: bool
    fitted_rows: int

    @classmethod
    def fit(cls, rows: Sequence[CauchyRow]) -> CauchyTable:
        """
        Fit C' on the first half of the rows and check the rest against it.

        A later row passes when Z-gap <= CAUCHY_SLACK * C' * sqrt(Y-gap),
        up to CAUCHY_ATOL. Growing Z-gaps over shrinking Y-gaps fail.
        """
        if len(rows) < 2:  # noqa: PLR2004
            msg = f"Cauchy fit needs at least 2 rows, got {len(rows)}"
            raise ApproximationError(msg)
        fitted = max(1, len(rows) // 2)
        ratios = [row.ratio for row in rows[:fitted] if row.ratio is not None]
        constant = float(max(ratios)) if ratios else 0.0
        bounded = all(
            row.z_gap <= CAUCHY_SLACK * constant * np.sqrt(max(row.y_gap, 0.0)) + CAUCHY_ATOL
            for row in rows[fitted:]
        )
        if not bounded:
            LOGGER.warning(
                "Z-gaps outgrow C' = %.3g fitted on the first %d rungs", constant, fitted
            )
        return cls(rows=tuple(rows), constant=constant, bounded=bounded, fitted_rows=fitted)

    def as_records(self) -> list[dict[str, Any]]:
        """Return CSV rows."""
        return [
            {"n": r.n, "y_gap": r.y_gap, "z_gap": r.z_gap, "ratio": r.ratio}
            for r in self.rows
        ]


def search_grid(  # noqa: PLR0913
    sup_phi: float,
    box_radius: float,
    n: float,
    lipschitz_k: float,
    dim: int = 1,
    spacing: float | None = None,
    max_radius: float | None = None,
) -> SearchGrid:
    """
    Search grid whose radius keeps the minimizer interior.

    The radius is R + sup|phi| / (n - K), capped at ``max_radius``
    (default 4R); a capped radius is logged.
    """
    if n < lipschitz_k:
        msg = f"Penalty n = {n} is below K = {lipschitz_k}"
        raise ApproximationError(msg)
    cap = DEFAULT_MAX_RADIUS_FACTOR * box_radius if max_radius is None else max_radius
    wanted = box_radius + sup_phi / (n - lipschitz_k) if n > lipschitz_k else np.inf
    radius = min(wanted, cap)
    if wanted > cap:
        LOGGER.warning(
            "Search radius for n=%g capped at %.3g (wanted %.3g)", n, cap, wanted
        )
    step = DEFAULT_GRID_SPACING_FACTOR * box_radius if spacing is None else spacing
    return SearchGrid(radius=radius, spacing=step, dim=dim)


def inf_convolution(
    phi: Callable[[np.ndarray], np.ndarray],
    n: float,
    x: float | np.ndarray,
    grid: SearchGrid,
    lipschitz_k: float = 0.0,
) -> ConvolutionValue:
    """
    Evaluate phi_n(x) = inf_y {phi(y) + n |x - y|_1} over the grid and x itself.

    ``phi`` maps points of shape (count, dim) to values of shape (count,).
    """
    return _convolution(phi, n, x, grid, lipschitz_k, DIRECTION_MIN)


def sup_convolution(
    phi: Callable[[np.ndarray], np.ndarray],
    n: float,
    x: float | np.ndarray,
    grid: SearchGrid,
    lipschitz_k: float = 0.0,
) -> ConvolutionValue:
    """Evaluate phi^n(x) = sup_y {phi(y) - n |x - y|_1} over the grid and x itself."""
    return _convolution(phi, n, x, grid, lipschitz_k, DIRECTION_MAX)


def envelope_1d(
    values: np.ndarray, points: np.ndarray, n: float, x: np.ndarray, direction: str
) -> np.ndarray:
    """
    Evaluate min_j values_j + n |x - points_j| (or the sup mirror) at many x.

    ``points`` must be sorted. Prefix and suffix minima give O(G + X log G).
    """
    sign = 1.0 if direction == DIRECTION_MIN else -1.0
    v = sign * values
    left = np.minimum.accumulate(v - n * points)
    right = np.minimum.accumulate((v + n * points)[::-1])[::-1]
    x = np.asarray(x, dtype=float)
    idx = np.searchsorted(points, x, side="right")
    best = np.full(x.shape, np.inf)
    has_left = idx > 0
    best[has_left] = left[idx[has_left] - 1] + n * x[has_left]
    has_right = idx < points.shape[0]
    best[has_right] = np.minimum(best[has_right], right[idx[has_right]] - n * x[has_right])
    return sign * best


def convolve_1d(  # noqa: PLR0913
    phi: Callable[[np.ndarray], np.ndarray],
    n: float,
    y: np.ndarray,
    grid: SearchGrid,
    direction: str,
    grid_values: np.ndarray | None = None,
) -> np.ndarray:
    """
    Evaluate the n-convolution of a scalar phi at many points y.

    Candidates are y itself, the grid axis, and y +- spacing * 2^-j for
    j = 1..LOCAL_SEARCH_LEVELS. The local offsets catch minimizers closer
    to y than one grid spacing, as for sqrt-type cusps at large n.
    ``grid_values`` may carry phi on the grid axis when already known.
    """
    y = np.asarray(y, dtype=float)
    axis = grid.axis
    values = np.asarray(phi(axis), dtype=float) if grid_values is None else grid_values
    pick = np.minimum if direction == DIRECTION_MIN else np.maximum
    best = pick(
        np.asarray(phi(y), dtype=float), envelope_1d(values, axis, n, y, direction)
    )
    return pick(best, _local_search(phi, n, y, grid.spacing, direction))


def _local_search(
    phi: Callable[[np.ndarray], np.ndarray],
    n: float,
    y: np.ndarray,
    spacing: float,
    direction: str,
) -> np.ndarray:
    sign = 1.0 if direction == DIRECTION_MIN else -1.0
    best = np.full(y.shape, np.inf)
    for offset in spacing * 0.5 ** np.arange(1, LOCAL_SEARCH_LEVELS + 1):
        for shifted in (y - offset, y + offset):
            candidate = sign * np.asarray(phi(shifted), dtype=float) + n * offset
            best = np.minimum(best, candidate)
    return sign * best


def approximate_driver(
    driver: ContinuousDriver,
    approx: LipschitzApprox,
    m: int,
) -> DriverSpec:
    """
    Return the Lipschitz driver with f and h replaced by their n-convolutions in y.

    Since f is K-Lipschitz in z and n >= K, the infimum over z is attained
    at z itself, so only y is searched. g is kept.
    """
    base = driver.base
    points = approx.grid.axis
    n = approx.n
    direction = approx.direction
    pick = np.minimum if direction == DIRECTION_MIN else np.maximum
    cache: dict[float, np.ndarray] = {}
    zeros = np.zeros((points.shape[0], m))

    def f(t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        def phi(u: np.ndarray) -> np.ndarray:
            return base.f(t, u, z)

        if base.z_free:
            values = cache.get(t)
            if values is None:
                values = np.asarray(base.f(t, points, zeros), dtype=float)
                cache[t] = values
            return convolve_1d(phi, n, y, approx.grid, direction, grid_values=values)
        count = y.shape[0]
        grid_y = np.tile(points, count)
        grid_z = np.repeat(z, points.shape[0], axis=0)
        values = np.asarray(base.f(t, grid_y, grid_z), dtype=float).reshape(count, -1)
        penalty = n * np.abs(y[:, None] - points[None, :])
        if direction == DIRECTION_MIN:
            searched = np.min(values + penalty, axis=1)
        else:
            searched = np.max(values - penalty, axis=1)
        best = pick(phi(y), searched)
        return pick(best, _local_search(phi, n, y, approx.grid.spacing, direction))

    h_cache: dict[float, np.ndarray] = {}

    def h(t: float, y: np.ndarray) -> np.ndarray:
        values = h_cache.get(t)
        if values is None:
            values = np.asarray(base.h(t, points), dtype=float)
            h_cache[t] = values
        return convolve_1d(
            lambda u: base.h(t, u), n, y, approx.grid, direction, grid_values=values
        )

    tag = "inf" if direction == DIRECTION_MIN else "sup"
    return replace(
        base,
        name=f"{base.name}_{tag}{n:g}",
        f=f,
        h=h,
        lipschitz_k=max(n, base.lipschitz_k),
        lipschitz=True,
        alpha=0.5,
    )


def default_rungs(lipschitz_k: float, count: int = 7) -> list[float]:
    """Geometric schedule ceil(K), 2 ceil(K), 4 ceil(K), ..."""
    first = max(1, ceil(lipschitz_k))
    return [float(first * 2**i) for i in range(count)]


def run_ladder(  # noqa: PLR0913
    driver: ContinuousDriver,
    terminal: TerminalSpec,
    lattice: JumpLattice,
    bpath: BrownianPath,
    clock: ClockA,
    rungs: Sequence[float] | None = None,
    direction: str = DIRECTION_MIN,
    stop_tol: float | None = None,
    spacing: float | None = None,
    max_radius: float | None = None,
    solver_options: dict[str, Any] | None = None,
) -> LadderResult:
    """
    Solve the equation for every rung n with the n-convolutions of f and h.

    One lattice, Brownian path, clock and terminal serve every rung. The
    ladder must be nondecreasing node-wise for ``min`` (nonincreasing for
    ``max``) whenever the jump condition holds between successive rungs;
    otherwise ComparisonViolation is raised. With ``stop_tol`` the ladder
    stops once the sup-gap at t = 0 drops below it.
    """
    schedule = list(rungs) if rungs is not None else default_rungs(driver.lipschitz_k)
    _validate_schedule(schedule, driver.lipschitz_k, direction)
    options = solver_options or {}
    sup_phi = driver.sup_on_box(lattice.m, lattice.grid.horizon)
    bound = apriori_bound(driver.base, terminal, lattice, clock, [bpath.terminal])
    sign = 1.0 if direction == DIRECTION_MIN else -1.0

    results: list[LadderRung] = []
    error_bars: list[float] = []
    previous: tuple[DriverSpec, Solution] | None = None
    monotone = True
    converged = False
    for n in schedule:
        grid = search_grid(
            sup_phi,
            driver.box_radius,
            n,
            driver.lipschitz_k,
            spacing=spacing,
            max_radius=max_radius,
        )
        approx = LipschitzApprox(
            n=n, grid=grid, lipschitz_k=driver.lipschitz_k, direction=direction
        )
        approx_driver = approximate_driver(driver, approx, lattice.m)
        solution = solve_backward(lattice, approx_driver, terminal, bpath, clock, **options)
        em_norm = norms([solution], mu=bound.mu, lam=bound.lam).em_norm
        error_bars.append(approx.error_bound)
        if previous is None:
            results.append(LadderRung(n=n, solution=solution, em_norm=em_norm))
        else:
            prev_driver, prev_solution = previous
            rung = _measure_rung(
                n, solution, prev_solution, approx_driver, prev_driver, sign, em_norm
            )
            monotone = monotone and rung.order_gap >= -LADDER_ORDER_TOL
            results.append(rung)
            LOGGER.debug(
                "Rung n=%g: Y_0=%.10g, sup gap %.3e", n, solution.y0, rung.sup_gap
            )
            if stop_tol is not None and rung.sup_gap < stop_tol:
                converged = True
                break
        previous = (approx_driver, solution)
    if stop_tol is None and len(results) > 1:
        converged = bool(results[-1].sup_gap < DEFAULT_LADDER_STOP_TOL)
    LOGGER.info(
        "Ladder %s for %s: %d rungs, Y_0 %s, monotone=%s",
        direction,
        driver.base.name,
        len(results),
        [round(r.y0, 8) for r in results],
        monotone,
    )
    return LadderResult(
        direction=direction,
        rungs=tuple(results),
        bound=bound,
        monotone=monotone,
        converged=converged,
        error_bars=tuple(error_bars),
    )


def cauchy_diagnostics(result: LadderResult) -> CauchyTable:
    """
    Tabulate E int |Y^n - Y^{n+1}|^2 (ds + dA) and E int |Z^n - Z^{n+1}|^2 ds.

    C' is the largest Z-gap / sqrt(Y-gap) ratio over the early rungs; the
    later rungs must stay under it (see CauchyTable.fit).
    """
    if len(result.rungs) < 3:  # noqa: PLR2004
        msg = f"Cauchy diagnostics need at least 3 rungs, got {len(result.rungs)}"
        raise ApproximationError(msg)
    rows = [
        CauchyRow.from_gaps(previous.n, rung.y_gap, rung.z_gap)
        for previous, rung in zip(result.rungs, result.rungs[1:], strict=False)
    ]
    return CauchyTable.fit(rows)


def minimality_check(result: LadderResult, other: Solution) -> float:
    """
    Min over rungs and nodes of Y* - Y^n (min ladder) or Y^n - Y* (max ladder).

    Nonnegative when ``other`` lies above every rung of a min ladder.
    """
    sign = 1.0 if result.direction == DIRECTION_MIN else -1.0
    worst = np.inf
    for rung in result.rungs:
        for k, values in enumerate(rung.solution.y):
            worst = min(worst, float(np.min(sign * (other.y[k] - values))))
    return worst


def _convolution(  # noqa: PLR0913
    phi: Callable[[np.ndarray], np.ndarray],
    n: float,
    x: float | np.ndarray,
    grid: SearchGrid,
    lipschitz_k: float,
    direction: str,
) -> ConvolutionValue:
    if n < lipschitz_k:
        msg = f"Penalty n = {n} is below K = {lipschitz_k}"
        raise ApproximationError(msg)
    point = np.atleast_1d(np.asarray(x, dtype=float))
    if point.shape[0] != grid.dim:
        msg = f"Point has dimension {point.shape[0]}, grid has {grid.dim}"
        raise ApproximationError(msg)
    error_bound = (n + lipschitz_k) * grid.spacing
    if grid.dim == 1:
        value = convolve_1d(
            lambda u: np.asarray(phi(u[:, None]), dtype=float), n, point, grid, direction
        )
        return ConvolutionValue(value=float(value[0]), error_bound=error_bound)
    direct = float(np.asarray(phi(point[None, :]), dtype=float)[0])
    candidates = grid.points()
    values = np.asarray(phi(candidates), dtype=float)
    distance = np.abs(candidates - point[None, :]).sum(axis=1)
    if direction == DIRECTION_MIN:
        value = min(direct, float(np.min(values + n * distance)))
    else:
        value = max(direct, float(np.max(values - n * distance)))
    return ConvolutionValue(value=value, error_bound=error_bound)


def _validate_schedule(schedule: Sequence[float], lipschitz_k: float, direction: str) -> None:
    if direction not in DIRECTIONS:
        msg = f"Unknown direction {direction!r}"
        raise ApproximationError(msg)
    if not schedule:
        msg = "Rung schedule is empty"
        raise ApproximationError(msg)
    if any(b <= a for a, b in zip(schedule, schedule[1:], strict=False)):
        msg = f"Rung schedule must be increasing, got {list(schedule)}"
        raise ApproximationError(msg)
    if schedule[0] < lipschitz_k:
        msg = f"Rung n = {schedule[0]} is below K = {lipschitz_k}"
        raise ApproximationError(msg)


def _measure_rung(  # noqa: PLR0913
    n: float,
    solution: Solution,
    prev_solution: Solution,
    approx_driver: DriverSpec,
    prev_driver: DriverSpec,
    sign: float,
    em_norm: float,
) -> LadderRung:
    lattice = solution.lattice
    grid = lattice.grid
    d_clock = solution.clock.increments
    y_gap = 0.0
    z_gap = 0.0
    for k in range(grid.steps):
        probs = lattice.node_probabilities[k]
        dy2 = float(probs @ (solution.y[k] - prev_solution.y[k]) ** 2)
        dz2 = float(probs @ np.sum((solution.z[k] - prev_solution.z[k]) ** 2, axis=1))
        y_gap += dy2 * (grid.dt + d_clock[k])
        z_gap += dz2 * grid.dt

    if sign > 0:
        upper, lower = (approx_driver, solution), (prev_driver, prev_solution)
    else:
        upper, lower = (prev_driver, prev_solution), (approx_driver, solution)
    coeffs = difference_quotients(upper[0], lower[0], upper[1], lower[1])
    jump_ok, jump_min = check_jump_condition(coeffs, lattice)

    order_gap = np.inf
    where = (0, 0)
    for k in range(grid.steps + 1):
        diff = sign * (solution.y[k] - prev_solution.y[k])
        node = int(np.argmin(diff))
        if diff[node] < order_gap:
            order_gap = float(diff[node])
            where = (k, node)
    if order_gap < -LADDER_ORDER_TOL:
        if jump_ok:
            msg = (
                f"Ladder order broken between rungs at n={n}: gap {order_gap:.3e} "
                f"at step {where[0]}, node {where[1]}"
            )
            raise ComparisonViolation(msg, step=where[0], node=where[1], gap=order_gap)
        LOGGER.warning(
            "Ladder order broken at n=%g but the jump condition fails (min %.3e)",
            n,
            jump_min,
        )
    return LadderRung(
        n=n,
        solution=solution,
        em_norm=em_norm,
        sup_gap=abs(solution.y0 - prev_solution.y0),
        y_gap=y_gap,
        z_gap=z_gap,
        order_gap=order_gap,
        jump_condition_min=jump_min,
    )

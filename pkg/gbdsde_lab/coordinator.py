"""Worker-pool coordinator for gbdsde_lab experiments."""

from __future__ import annotations

import asyncio
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from typing import TYPE_CHECKING, Any, TypeVar

import async_timeout
import numpy as np

from .approx_ladder import ContinuousDriver, LadderResult, run_ladder
from .comparison_lab import ComparisonReport, compare
from .const import (
    DEFAULT_THREADS,
    DIRECTION_BOTH,
    DIRECTION_MAX,
    DIRECTION_MIN,
    JOB_TIMEOUT,
    LOGGER,
)
from .drivers import verify_declared_constants
from .exceptions import ExperimentFailed
from .lattice import JumpLattice, build_lattice
from .levy_basis import OrthoBasis, PowerMomentTable, power_moments, teugels_basis
from .path_engine import (
    BrownianPath,
    PathEnsemble,
    merge_ensembles,
    simulate_brownian,
    simulate_ensemble,
)
from .solver import Solution, em_distance, picard_solve, solve_backward
from .time_utils import ClockA, TimeGrid, clock_values

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .config import ExperimentConfig, NamedSelection
    from .drivers import DriverSpec

_T = TypeVar("_T")


class LabCoordinator:
    """
    Coordinator running experiment jobs on a thread pool.

    Jobs are independent per Brownian path or per path batch. They run
    concurrently and their results come back in job order, so every
    reduction sees the same sequence regardless of scheduling.

    Attributes
    ----------
    config : ExperimentConfig
        The validated experiment.
    threads : int
        Worker count.
    timeout : float
        Seconds allowed for one batch of jobs.

    """

    def __init__(
        self,
        config: ExperimentConfig,
        threads: int = DEFAULT_THREADS,
        timeout: float = JOB_TIMEOUT,
    ) -> None:
        """
        Initialize the coordinator.

        Parameters
        ----------
        config : ExperimentConfig
            The validated experiment.
        threads : int
            Worker count.
        timeout : float
            Seconds allowed for one batch of jobs.

        """
        self.config = config
        self.threads = threads
        self.timeout = timeout
        self._basis: OrthoBasis | None = None
        self._moments: PowerMomentTable | None = None
        self._lattices: dict[int, JumpLattice] = {}

    @property
    def basis(self) -> OrthoBasis:
        """Orthonormal basis of the configured measure."""
        if self._basis is None:
            self._basis = teugels_basis(
                self.config.measure, self.config.tolerances.cond_max
            )
        return self._basis

    @property
    def moments(self) -> PowerMomentTable:
        """Power moments up to order 2m."""
        if self._moments is None:
            self._moments = power_moments(self.config.measure, 2 * self.config.measure.m)
        return self._moments

    def grid(self, steps: int | None = None) -> TimeGrid:
        """The configured grid, optionally with another step count."""
        if steps is None:
            return self.config.grid
        return TimeGrid(self.config.grid.horizon, steps)

    def clock(self, grid: TimeGrid | None = None) -> ClockA:
        """Clock values on ``grid``."""
        return clock_values(self.config.clock, grid or self.config.grid)

    def lattice(self, grid: TimeGrid | None = None) -> JumpLattice:
        """The jump lattice on ``grid``, built once per step count."""
        grid = grid or self.config.grid
        if grid.steps not in self._lattices:
            self._lattices[grid.steps] = build_lattice(
                self.config.measure,
                self.basis,
                grid,
                max_nodes=self.config.tolerances.max_nodes,
            )
        return self._lattices[grid.steps]

    def checked_driver(self, selection: NamedSelection) -> DriverSpec:
        """Build the selected driver and spot-check its declared constants."""
        driver = selection.driver()
        verify_declared_constants(
            driver,
            self.config.measure.m,
            self.config.grid.horizon,
            self.config.ladder.box_radius,
            np.random.default_rng(self.config.seed),
        )
        return driver

    def brownian_paths(self, grid: TimeGrid | None = None) -> list[BrownianPath]:
        """One Brownian path per configured path index."""
        grid = grid or self.config.grid
        return [
            simulate_brownian(grid, self.config.seed, index)
            for index in range(self.config.brownian_paths)
        ]

    async def async_run_jobs(
        self, jobs: Sequence[Callable[[], _T]], what: str
    ) -> list[_T]:
        """
        Run blocking jobs on the pool and return their results in job order.

        Any failure, including the batch timeout, is raised as
        ExperimentFailed chained to the cause.
        """
        LOGGER.debug("Running %d %s jobs on %d threads", len(jobs), what, self.threads)
        loop = asyncio.get_running_loop()
        executor = ThreadPoolExecutor(max_workers=self.threads)
        try:
            async with async_timeout.timeout(self.timeout):
                futures = [loop.run_in_executor(executor, job) for job in jobs]
                return list(await asyncio.gather(*futures))
        except Exception as err:
            LOGGER.exception("A %s job failed", what)
            msg = f"Error running {what} jobs: {err}"
            raise ExperimentFailed(msg) from err
        finally:
            executor.shutdown(wait=False, cancel_futures=True)

    async def async_simulate(self, n_paths: int | None = None) -> PathEnsemble:
        """Simulate the path ensemble in one batch per worker."""
        n_paths = n_paths or self.config.simulate.paths
        clock = self.clock()
        bounds = np.linspace(0, n_paths, min(self.threads, n_paths) + 1).astype(int)
        jobs = [
            partial(
                simulate_ensemble,
                self.config.measure,
                self.basis,
                self.moments,
                clock,
                self.config.seed,
                int(stop - start),
                int(start),
            )
            for start, stop in zip(bounds, bounds[1:], strict=False)
            if stop > start
        ]
        parts = await self.async_run_jobs(jobs, "simulation")
        return merge_ensembles(parts)

    async def async_solve(
        self, driver: NamedSelection, terminal: NamedSelection, steps: int | None = None
    ) -> list[Solution]:
        """Solve on the shared lattice, one job per Brownian path."""
        grid = self.grid(steps)
        lattice = self.lattice(grid)
        clock = self.clock(grid)
        driver_spec = self.checked_driver(driver)
        terminal_spec = terminal.terminal()
        jobs = [
            partial(
                solve_backward,
                lattice,
                driver_spec,
                terminal_spec,
                bpath,
                clock,
                **self.config.tolerances.solver_options(),
            )
            for bpath in self.brownian_paths(grid)
        ]
        return await self.async_run_jobs(jobs, "solve")

    async def async_picard(
        self, driver: NamedSelection, terminal: NamedSelection
    ) -> list[dict[str, Any]]:
        """Compare Picard iteration with the direct scheme on every Brownian path."""
        lattice = self.lattice()
        clock = self.clock()
        driver_spec = self.checked_driver(driver)
        terminal_spec = terminal.terminal()
        tolerances = self.config.tolerances

        def job(bpath: BrownianPath) -> dict[str, Any]:
            direct = solve_backward(
                lattice, driver_spec, terminal_spec, bpath, clock, **tolerances.solver_options()
            )
            iterated, history = picard_solve(
                lattice,
                driver_spec,
                terminal_spec,
                bpath,
                clock,
                max_iters=tolerances.picard_max_iterations,
                tol=tolerances.picard_tol,
            )
            return {
                "iterations": len(history),
                "distance": em_distance(direct, iterated),
                "y0_direct": direct.y0,
                "y0_picard": iterated.y0,
            }

        return await self.async_run_jobs(
            [partial(job, bpath) for bpath in self.brownian_paths()], "picard"
        )

    async def async_ladder(self) -> list[LadderResult]:
        """Run the configured ladder on Brownian path 0, one job per direction."""
        section = self.config.ladder
        directions = (
            [DIRECTION_MIN, DIRECTION_MAX]
            if section.direction == DIRECTION_BOTH
            else [section.direction]
        )
        driver = ContinuousDriver(
            self.checked_driver(section.driver), box_radius=section.box_radius
        )
        terminal = section.terminal.terminal()
        lattice = self.lattice()
        clock = self.clock()
        bpath = self.brownian_paths()[0]
        jobs = [
            partial(
                run_ladder,
                driver,
                terminal,
                lattice,
                bpath,
                clock,
                rungs=section.rungs,
                direction=direction,
                stop_tol=section.stop_tol,
                spacing=section.grid_spacing,
                max_radius=section.max_radius,
                solver_options=self.config.tolerances.solver_options(),
            )
            for direction in directions
        ]
        return await self.async_run_jobs(jobs, "ladder")

    async def async_compare(self) -> list[ComparisonReport]:
        """Solve both configured problems and compare them on every Brownian path."""
        section = self.config.compare
        lattice = self.lattice()
        clock = self.clock()
        driver1 = self.checked_driver(section.driver1)
        driver2 = self.checked_driver(section.driver2)
        terminal1 = section.terminal1.terminal()
        terminal2 = section.terminal2.terminal()
        tolerances = self.config.tolerances

        def job(bpath: BrownianPath) -> ComparisonReport:
            sol1 = solve_backward(
                lattice, driver1, terminal1, bpath, clock, **tolerances.solver_options()
            )
            sol2 = solve_backward(
                lattice, driver2, terminal2, bpath, clock, **tolerances.solver_options()
            )
            return compare(sol1, sol2, driver1, driver2, tol=tolerances.order_tol)

        return await self.async_run_jobs(
            [partial(job, bpath) for bpath in self.brownian_paths()], "compare"
        )

"""Tests for the lab coordinator."""

from __future__ import annotations

import time
from typing import Any

import numpy as np
import pytest

from gbdsde_lab.config import ExperimentConfig, parse_config
from gbdsde_lab.const import (
    DIRECTION_MAX,
    DIRECTION_MIN,
    DOMAIN,
    PICARD_AGREEMENT_TOL,
    VERDICT_STRICT,
)
from gbdsde_lab.coordinator import LabCoordinator
from gbdsde_lab.drivers import DRIVERS, DriverSpec
from gbdsde_lab.exceptions import DriverError, ExperimentFailed
from gbdsde_lab.path_engine import simulate_brownian


def _config(**sections: Any) -> ExperimentConfig:
    return parse_config({DOMAIN: {"grid": {"steps": 10}, **sections}})


@pytest.fixture
def config() -> ExperimentConfig:
    """Small default experiment."""
    return _config(simulate={"paths": 300})


async def test_simulation_ignores_thread_count(config: ExperimentConfig) -> None:
    """Batches split by worker count merge to the same ensemble."""
    single = await LabCoordinator(config, threads=1).async_simulate()
    pooled = await LabCoordinator(config, threads=3).async_simulate()

    assert single.size == pooled.size == 300
    np.testing.assert_array_equal(single.counts, pooled.counts)
    np.testing.assert_array_equal(single.brownian, pooled.brownian)
    np.testing.assert_array_equal(single.increments.teugels, pooled.increments.teugels)


async def test_solutions_come_back_in_path_order(config: ExperimentConfig) -> None:
    """Solution i is solved against Brownian path i."""
    coordinator = LabCoordinator(config, threads=3)

    solutions = await coordinator.async_solve(config.solve.driver, config.solve.terminal)

    assert len(solutions) == config.brownian_paths
    for index, solution in enumerate(solutions):
        expected = simulate_brownian(config.grid, config.seed, index)
        np.testing.assert_array_equal(solution.bpath.increments, expected.increments)
        assert solution.lattice is coordinator.lattice()


async def test_sweep_builds_one_lattice_per_grid(config: ExperimentConfig) -> None:
    """Other step counts get their own cached lattice."""
    coordinator = LabCoordinator(config)

    solutions = await coordinator.async_solve(
        config.solve.driver, config.solve.terminal, steps=20
    )

    assert solutions[0].lattice.grid.steps == 20
    assert coordinator.lattice(coordinator.grid(20)) is solutions[0].lattice
    assert coordinator.lattice() is not solutions[0].lattice


async def test_picard_agrees_on_every_path() -> None:
    """Each Brownian path reports a Picard distance below the agreement tolerance."""
    config = _config(solve={"driver": {"name": "lipschitz_mix", "params": {"theta": [0.2, -0.1]}}})
    coordinator = LabCoordinator(config, threads=2)

    rows = await coordinator.async_picard(config.solve.driver, config.solve.terminal)

    assert len(rows) == config.brownian_paths
    assert all(row["distance"] < PICARD_AGREEMENT_TOL for row in rows)


async def test_default_comparison_is_strict(config: ExperimentConfig) -> None:
    """The default ordered pair compares strictly on every path."""
    reports = await LabCoordinator(config).async_compare()

    assert [report.verdict for report in reports] == [VERDICT_STRICT] * config.brownian_paths


async def test_ladder_runs_both_directions() -> None:
    """Direction both runs the min and the max ladder."""
    config = _config(ladder={"direction": "both", "rungs": [1, 2, 4]})

    results = await LabCoordinator(config, threads=2).async_ladder()

    assert [result.direction for result in results] == [DIRECTION_MIN, DIRECTION_MAX]
    assert all(result.monotone for result in results)
    assert results[0].y0_values[-1] <= results[1].y0_values[-1] + 1e-9


async def test_failing_job_is_wrapped(
    config: ExperimentConfig, caplog: pytest.LogCaptureFixture
) -> None:
    """A job exception surfaces as ExperimentFailed chained to the cause."""

    def broken() -> None:
        msg = "boom"
        raise ValueError(msg)

    with pytest.raises(ExperimentFailed) as excinfo:
        await LabCoordinator(config).async_run_jobs([broken], "test")

    assert isinstance(excinfo.value.__cause__, ValueError)
    assert "A test job failed" in caplog.text


async def test_timeout_is_wrapped(config: ExperimentConfig) -> None:
    """A batch running past the timeout fails the experiment."""
    coordinator = LabCoordinator(config, timeout=0.05)

    with pytest.raises(ExperimentFailed):
        await coordinator.async_run_jobs([lambda: time.sleep(0.5)], "slow")


async def test_drivers_are_spot_checked_before_solving(
    config: ExperimentConfig, monkeypatch: pytest.MonkeyPatch
) -> None:
    """A driver breaking its declared growth bound fails before any job runs."""
    monkeypatch.setitem(
        DRIVERS,
        "linear",
        lambda _params: DriverSpec(name="loose", f=lambda _t, y, _z: 3.0 * y, z_free=True),
    )
    coordinator = LabCoordinator(config)

    with pytest.raises(DriverError, match="growth"):
        await coordinator.async_solve(config.solve.driver, config.solve.terminal)

"""Tests for time grid and clock helpers."""

from __future__ import annotations

import numpy as np
import pytest

from gbdsde_lab.const import PROFILE_LINEAR, PROFILE_POWER, PROFILE_TABLE
from gbdsde_lab.exceptions import ClockProfileError, GridError
from gbdsde_lab.time_utils import (
    ClockProfile,
    TimeGrid,
    clock_values,
    normalize_clock_table,
    parse_clock_profile,
)


def test_grid_times_end_at_horizon() -> None:
    """The last grid point is exactly T."""
    grid = TimeGrid(0.7, 3)

    assert grid.dt == pytest.approx(0.7 / 3)
    assert grid.times[0] == 0.0
    assert grid.times[-1] == 0.7
    assert grid.refined().steps == 6


@pytest.mark.parametrize(("horizon", "steps"), [(0.0, 10), (-1.0, 10), (1.0, 0), (1.0, 2.5)])
def test_grid_rejects_invalid(horizon: float, steps: float) -> None:
    """Horizon must be positive and steps a positive integer."""
    with pytest.raises(GridError):
        TimeGrid(horizon, steps)


def test_require_same() -> None:
    """Different grids are reported."""
    TimeGrid(1.0, 4).require_same(TimeGrid(1.0, 4), "path")
    with pytest.raises(GridError, match="path"):
        TimeGrid(1.0, 4).require_same(TimeGrid(1.0, 8), "path")


def test_linear_and_power_clocks() -> None:
    """Linear and power profiles evaluate in closed form."""
    grid = TimeGrid(1.0, 4)

    linear = clock_values(ClockProfile(PROFILE_LINEAR, kappa=2.0), grid)
    power = clock_values(ClockProfile(PROFILE_POWER, power=2.0), grid)

    np.testing.assert_allclose(linear.values, 2.0 * grid.times)
    np.testing.assert_allclose(power.values, grid.times**2)
    assert power.terminal == pytest.approx(1.0)
    assert np.all(power.increments >= 0.0)


def test_table_clock_interpolates() -> None:
    """Table clocks interpolate linearly between knots."""
    profile = ClockProfile(PROFILE_TABLE, table=((0.0, 0.0), (0.5, 1.0), (1.0, 1.0)))

    clock = clock_values(profile, TimeGrid(1.0, 4))

    np.testing.assert_allclose(clock.values, [0.0, 0.5, 1.0, 1.0, 1.0])


def test_clock_rates() -> None:
    """A'(t) is kappa, p t^(p - 1) or the right slope of the table segment."""
    power = ClockProfile(PROFILE_POWER, power=2.0)
    table = ClockProfile(PROFILE_TABLE, table=((0.0, 0.0), (0.5, 1.0), (1.0, 1.0)))

    assert ClockProfile(PROFILE_LINEAR, kappa=2.0).rate(0.3) == 2.0
    assert ClockProfile(PROFILE_POWER, power=1.0).rate(0.0) == 1.0
    assert power.rate(0.0) == 0.0
    assert power.rate(0.5) == pytest.approx(1.0)
    assert table.rate(0.25) == pytest.approx(2.0)
    assert table.rate(0.5) == 0.0
    assert table.rate(1.0) == 0.0



def test_table_must_cover_horizon() -> None:
    """A table ending before T cannot serve the grid."""
    profile = ClockProfile(PROFILE_TABLE, table=((0.0, 0.0), (0.5, 1.0)))

    with pytest.raises(ClockProfileError, match="ends"):
        clock_values(profile, TimeGrid(1.0, 4))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": PROFILE_LINEAR, "kappa": -1.0},
        {"kind": PROFILE_POWER, "power": 0.5},
        {"kind": PROFILE_TABLE, "table": ((0.0, 0.0),)},
        {"kind": PROFILE_TABLE, "table": ((0.1, 0.0), (1.0, 1.0))},
        {"kind": PROFILE_TABLE, "table": ((0.0, 0.0), (0.5, 1.0), (1.0, 0.5))},
        {"kind": PROFILE_TABLE, "table": ((0.0, 0.0), (0.0, 1.0))},
        {"kind": "cubic"},
    ],
)
def test_invalid_profiles(kwargs: dict) -> None:
    """Negative slopes, short or decreasing tables and unknown kinds fail."""
    with pytest.raises(ClockProfileError):
        ClockProfile(**kwargs)


def test_parse_clock_profile() -> None:
    """Config mappings become profiles; tables are sorted."""
    assert parse_clock_profile(None) == ClockProfile()

    profile = parse_clock_profile(
        {"profile": PROFILE_TABLE, "table": [[1.0, 2.0], [0.0, 0.0]]}
    )

    assert profile.table == ((0.0, 0.0), (1.0, 2.0))
    assert profile.as_dict() == {"profile": PROFILE_TABLE, "table": [[0.0, 0.0], [1.0, 2.0]]}


def test_normalize_clock_table_handles_empty() -> None:
    """Empty input normalizes to an empty table."""
    assert normalize_clock_table(None) == []
    assert normalize_clock_table([["1", 2]]) == [(1.0, 2.0)]

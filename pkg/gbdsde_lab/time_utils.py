"""Time grid and clock helpers for gbdsde_lab."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from .const import (
    CONF_KAPPA,
    CONF_POWER,
    CONF_PROFILE,
    CONF_TABLE,
    PROFILE_LINEAR,
    PROFILE_POWER,
    PROFILE_TABLE,
)
from .exceptions import ClockProfileError, GridError

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping


@dataclass(frozen=True, slots=True)
class TimeGrid:
    """Uniform grid t_k = k T / N on [0, T]."""

    horizon: float
    steps: int

    def __post_init__(self) -> None:
        """Validate horizon and step count."""
        if not np.isfinite(self.horizon) or self.horizon <= 0.0:
            msg = f"Horizon must be positive, got {self.horizon}"
            raise GridError(msg)
        if int(self.steps) != self.steps or self.steps < 1:
            msg = f"Steps must be a positive integer, got {self.steps}"
            raise GridError(msg)

    @property
    def dt(self) -> float:
        """Step size."""
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        """Grid points t_0 = 0 < ... < t_N = T."""
        times = np.arange(self.steps + 1, dtype=float) * self.dt
        times[-1] = self.horizon
        return times

    def refined(self, factor: int = 2) -> TimeGrid:
        """Return the grid with ``factor`` times as many steps."""
        return TimeGrid(self.horizon, self.steps * factor)

    def require_same(self, other: TimeGrid, what: str) -> None:
        """Raise GridError when ``other`` differs from this grid."""
        if other != self:
            msg = f"{what} lives on {other}, expected {self}"
            raise GridError(msg)


@dataclass(frozen=True, slots=True)
class ClockProfile:
    """Deterministic continuous nondecreasing clock A with A_0 = 0."""

    kind: str = PROFILE_LINEAR
    kappa: float = 1.0
    power: float = 1.0
    table: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self) -> None:
        """Validate the profile parameters."""
        if self.kind == PROFILE_LINEAR:
            if self.kappa < 0.0:
                msg = f"Linear clock needs kappa >= 0, got {self.kappa}"
                raise ClockProfileError(msg)
        elif self.kind == PROFILE_POWER:
            if self.power < 1.0:
                msg = f"Power clock needs p >= 1, got {self.power}"
                raise ClockProfileError(msg)
        elif self.kind == PROFILE_TABLE:
            _validate_table(self.table)
        else:
            msg = f"Unknown clock profile {self.kind!r}"
            raise ClockProfileError(msg)

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        """Return A at the given times."""
        times = np.asarray(times, dtype=float)
        if self.kind == PROFILE_LINEAR:
            return self.kappa * times
        if self.kind == PROFILE_POWER:
            return times**self.power
        knots = np.array([t for t, _ in self.table])
        values = np.array([a for _, a in self.table])
        if times.size and times.max() > knots[-1] * (1 + 1e-12):
            msg = f"Clock table ends at t={knots[-1]}, grid needs t={times.max()}"
            raise ClockProfileError(msg)
        return np.interp(times, knots, values)

    def rate(self, t: float) -> float:
        """Right derivative A'(t); table clocks use the slope of the segment holding t."""
        if self.kind == PROFILE_LINEAR:
            return self.kappa
        if self.kind == PROFILE_POWER:
            return self.power * t ** (self.power - 1.0)
        knots = np.array([t for t, _ in self.table])
        values = np.array([a for _, a in self.table])
        segment = int(np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 2))
        return float(
            (values[segment + 1] - values[segment]) / (knots[segment + 1] - knots[segment])
        )

    def as_dict(self) -> dict[str, Any]:
        """Return a config-shaped representation."""
        if self.kind == PROFILE_LINEAR:
            return {CONF_PROFILE: self.kind, CONF_KAPPA: self.kappa}
        if self.kind == PROFILE_POWER:
            return {CONF_PROFILE: self.kind, CONF_POWER: self.power}
        return {CONF_PROFILE: self.kind, CONF_TABLE: [list(row) for row in self.table]}


@dataclass(frozen=True, slots=True, eq=False)
class ClockA:
    """Clock values A_{t_k} on a grid."""

    grid: TimeGrid
    profile: ClockProfile
    values: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        """Delta A_k = A_{t_{k+1}} - A_{t_k}."""
        return np.diff(self.values)

    @property
    def terminal(self) -> float:
        """A_T."""
        return float(self.values[-1])


def clock_values(profile: ClockProfile, grid: TimeGrid) -> ClockA:
    """
    Evaluate a clock profile on a grid.

    :param profile: The clock profile.
    :type profile: ClockProfile
    :param grid: The time grid.
    :type grid: TimeGrid
    :return: Clock values with A_0 = 0.
    :rtype: ClockA
    """
    values = profile.evaluate(grid.times)
    values[0] = 0.0
    if np.any(np.diff(values) < 0.0):
        msg = "Clock values decrease on the grid"
        raise ClockProfileError(msg)
    return ClockA(grid=grid, profile=profile, values=values)


def normalize_clock_table(
    value: Iterable[Iterable[float]] | None,
) -> list[tuple[float, float]]:
    """Normalize table rows to sorted (t, A) float pairs."""
    if not value:
        return []
    rows: list[tuple[float, float]] = []
    for row in value:
        t, a = (float(item) for item in row)
        rows.append((t, a))
    rows.sort(key=lambda item: item[0])
    return rows


def parse_clock_profile(conf: Mapping[str, Any] | None) -> ClockProfile:
    """Build a ClockProfile from a config mapping."""
    if not conf:
        return ClockProfile()
    kind = conf.get(CONF_PROFILE, PROFILE_LINEAR)
    return ClockProfile(
        kind=kind,
        kappa=float(conf.get(CONF_KAPPA, 1.0)),
        power=float(conf.get(CONF_POWER, 1.0)),
        table=tuple(normalize_clock_table(conf.get(CONF_TABLE))),
    )


def _validate_table(table: tuple[tuple[float, float], ...]) -> None:
    if len(table) < 2:  # noqa: PLR2004
        msg = "Clock table needs at least two rows"
        raise ClockProfileError(msg)
    knots = np.array([t for t, _ in table])
    values = np.array([a for _, a in table])
    if knots[0] != 0.0 or values[0] != 0.0:
        msg = "Clock table must start at (0, 0)"
        raise ClockProfileError(msg)
    if np.any(np.diff(knots) <= 0.0):
        msg = "Clock table times must be strictly increasing"
        raise ClockProfileError(msg)
    if np.any(np.diff(values) < 0.0):
        dip = int(np.argmax(np.diff(values) < 0.0)) + 1
        msg = f"Clock table decreases at t={knots[dip]}"
        raise ClockProfileError(msg)

"""Test configuration for gbdsde_lab."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import pytest

from gbdsde_lab.const import DEFAULT_SEED
from gbdsde_lab.lattice import JumpLattice, build_lattice
from gbdsde_lab.levy_basis import JumpMeasure, OrthoBasis, teugels_basis
from gbdsde_lab.path_engine import BrownianPath, simulate_brownian
from gbdsde_lab.time_utils import ClockA, ClockProfile, TimeGrid, clock_values

if TYPE_CHECKING:
    from collections.abc import Callable


@dataclass(frozen=True, slots=True, eq=False)
class LabSetup:
    """Everything a solve needs on one grid."""

    measure: JumpMeasure
    basis: OrthoBasis
    lattice: JumpLattice
    clock: ClockA
    bpath: BrownianPath


def make_setup(
    measure: JumpMeasure,
    steps: int,
    horizon: float = 1.0,
    profile: ClockProfile | None = None,
    seed: int = DEFAULT_SEED,
    path_index: int = 0,
) -> LabSetup:
    """Build basis, lattice, clock and Brownian path for ``measure``."""
    grid = TimeGrid(horizon, steps)
    basis = teugels_basis(measure)
    return LabSetup(
        measure=measure,
        basis=basis,
        lattice=build_lattice(measure, basis, grid),
        clock=clock_values(profile or ClockProfile(), grid),
        bpath=simulate_brownian(grid, seed, path_index),
    )


@pytest.fixture
def single_atom() -> JumpMeasure:
    """One upward jump of size 1 at rate 1."""
    return JumpMeasure.from_pairs([(1.0, 1.0)])


@pytest.fixture
def two_atoms() -> JumpMeasure:
    """The default two-atom measure."""
    return JumpMeasure.from_pairs([(1.0, 1.0), (-0.5, 0.5)])


@pytest.fixture
def symmetric_pair() -> JumpMeasure:
    """Jumps of +-1 at rate 1/2 each, so q_1 = 1 and q_2 = x."""
    return JumpMeasure.from_pairs([(1.0, 0.5), (-1.0, 0.5)])


@pytest.fixture
def setup_factory() -> Callable[..., LabSetup]:
    """Return the setup builder."""
    return make_setup

"""Tests for Levy, Brownian and Teugels path simulation."""

from __future__ import annotations

import numpy as np
import pytest

from gbdsde_lab.const import SIGMA_BAND
from gbdsde_lab.exceptions import BasisIndexError, GridError
from gbdsde_lab.levy_basis import JumpMeasure, power_moments, teugels_basis
from gbdsde_lab.path_engine import (
    STREAM_BROWNIAN,
    STREAM_LEVY,
    PathEnsemble,
    empirical_bracket,
    increment_means,
    jump_count_gof,
    merge_ensembles,
    path_rng,
    power_increments,
    simulate_brownian,
    simulate_ensemble,
    simulate_levy,
    teugels_increments,
)
from gbdsde_lab.time_utils import ClockProfile, TimeGrid, clock_values

SEED = 7


def _ensemble(measure: JumpMeasure, paths: int, start: int = 0, steps: int = 20) -> PathEnsemble:
    grid = TimeGrid(1.0, steps)
    return simulate_ensemble(
        measure,
        teugels_basis(measure),
        power_moments(measure, 2 * measure.m),
        clock_values(ClockProfile(), grid),
        SEED,
        paths,
        start,
    )


def test_streams_are_reproducible_and_distinct() -> None:
    """Same (seed, index, stream) gives the same draws; other streams differ."""
    first = path_rng(SEED, 3, STREAM_LEVY).random(4)
    again = path_rng(SEED, 3, STREAM_LEVY).random(4)
    other = path_rng(SEED, 3, STREAM_BROWNIAN).random(4)

    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)


def test_levy_paths_depend_on_index(two_atoms: JumpMeasure) -> None:
    """Paths repeat per index and differ between indices."""
    grid = TimeGrid(1.0, 200)

    path = simulate_levy(two_atoms, grid, SEED, 0)

    np.testing.assert_array_equal(path.counts, simulate_levy(two_atoms, grid, SEED, 0).counts)
    assert not np.array_equal(path.counts, simulate_levy(two_atoms, grid, SEED, 1).counts)
    assert path.values[0] == 0.0
    assert path.values[-1] == pytest.approx(path.counts.sum(axis=0) @ two_atoms.sizes)
    busiest = int(np.argmax(path.counts.sum(axis=1)))
    assert len(path.marks(busiest)) == path.counts[busiest].sum()
    assert path.jump_count == path.counts.sum()


def test_brownian_path() -> None:
    """B starts at zero and its terminal value sums the increments."""
    path = simulate_brownian(TimeGrid(2.0, 50), SEED)

    assert path.increments.shape == (50,)
    assert path.values[0] == 0.0
    assert path.terminal == pytest.approx(path.values[-1])


def test_power_increments_are_compensated(two_atoms: JumpMeasure) -> None:
    """A step without jumps carries -dt times the moments."""
    grid = TimeGrid(1.0, 10)
    moments = power_moments(two_atoms, 4)
    path = simulate_levy(two_atoms, grid, SEED)

    raw = power_increments(path, moments, grid)

    quiet = np.flatnonzero(path.counts.sum(axis=1) == 0)
    assert quiet.size > 0
    np.testing.assert_allclose(raw[quiet[0]], -grid.dt * moments.moments[:2])
    with pytest.raises(GridError):
        power_increments(path, moments, TimeGrid(1.0, 20))


def test_teugels_increments_check_width(two_atoms: JumpMeasure) -> None:
    """The raw increments must carry one column per basis polynomial."""
    basis = teugels_basis(two_atoms)

    with pytest.raises(BasisIndexError):
        teugels_increments(np.zeros((4, 3)), basis)


def test_bracket_identity(two_atoms: JumpMeasure) -> None:
    """[H_i, H_j]_T averages to delta_ij T within the sigma band."""
    ensemble = _ensemble(two_atoms, 100_000)

    for i, j in ((1, 1), (1, 2), (2, 2)):
        mean, stderr = empirical_bracket(ensemble, i, j)
        target = 1.0 if i == j else 0.0
        assert abs(mean - target) <= SIGMA_BAND * stderr


def test_increments_have_zero_mean(two_atoms: JumpMeasure) -> None:
    """Every Delta H is centered."""
    ensemble = _ensemble(two_atoms, 5_000)

    mean, stderr = increment_means(ensemble)

    assert mean.shape == (20, 2)
    assert np.all(np.abs(mean) <= SIGMA_BAND * stderr)


def test_jump_counts_are_poisson(two_atoms: JumpMeasure) -> None:
    """Per-path jump counts pass a chi-square test against Poisson(lambda T)."""
    ensemble = _ensemble(two_atoms, 5_000)

    for atom in range(two_atoms.m):
        statistic, pvalue = jump_count_gof(ensemble, two_atoms, atom)
        assert statistic >= 0.0
        assert pvalue > 1e-4


def test_batches_merge_to_one_ensemble(two_atoms: JumpMeasure) -> None:
    """Simulating in batches reproduces the single-batch ensemble."""
    whole = _ensemble(two_atoms, 200)
    merged = merge_ensembles([_ensemble(two_atoms, 120), _ensemble(two_atoms, 80, start=120)])

    assert merged.size == 200
    np.testing.assert_array_equal(whole.counts, merged.counts)
    np.testing.assert_array_equal(whole.brownian, merged.brownian)
    np.testing.assert_array_equal(whole.increments.teugels, merged.increments.teugels)


def test_bracket_argument_checks(two_atoms: JumpMeasure) -> None:
    """Small ensembles and out-of-range indices are rejected."""
    with pytest.raises(GridError):
        empirical_bracket(_ensemble(two_atoms, 50), 1, 1)
    ensemble = _ensemble(two_atoms, 100)
    with pytest.raises(BasisIndexError):
        empirical_bracket(ensemble, 1, 3)


def test_bracket_up_to_time(single_atom: JumpMeasure) -> None:
    """Brackets can be read at an intermediate time."""
    ensemble = _ensemble(single_atom, 20_000)

    mean, stderr = empirical_bracket(ensemble, 1, 1, t=0.5)

    assert abs(mean - 0.5) <= SIGMA_BAND * stderr

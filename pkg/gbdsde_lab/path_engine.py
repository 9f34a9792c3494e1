"""Monte Carlo paths of the Levy process, the backward Brownian motion and the Teugels increments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import stats

from .const import LOGGER, MIN_ENSEMBLE
from .exceptions import BasisIndexError, GridError

if TYPE_CHECKING:
    from .levy_basis import JumpMeasure, OrthoBasis, PowerMomentTable
    from .time_utils import ClockA, TimeGrid

STREAM_LEVY = 0
STREAM_BROWNIAN = 1
STREAM_LATTICE = 2


def path_rng(seed: int, path_index: int, stream: int) -> np.random.Generator:
    """Return the generator for (master seed, path index, stream)."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(path_index, stream))
    return np.random.default_rng(sequence)


@dataclass(frozen=True, slots=True, eq=False)
class LevyPath:
    """
    Per-step jump marks of a pure-jump Levy path.

    ``counts[k, j]`` is the number of jumps of size ``sizes[j]`` in step k.
    """

    grid: TimeGrid
    sizes: np.ndarray
    counts: np.ndarray

    @property
    def values(self) -> np.ndarray:
        """L at the grid points, L_0 = 0."""
        return np.concatenate(([0.0], np.cumsum(self.counts @ self.sizes)))

    def marks(self, step: int) -> list[float]:
        """Return the multiset of jump sizes in ``step``."""
        return [
            float(size)
            for size, count in zip(self.sizes, self.counts[step], strict=True)
            for _ in range(int(count))
        ]

    @property
    def jump_count(self) -> int:
        """Total number of jumps on the path."""
        return int(self.counts.sum())


@dataclass(frozen=True, slots=True, eq=False)
class BrownianPath:
    """Forward increments of the Brownian motion on a grid."""

    grid: TimeGrid
    increments: np.ndarray

    @property
    def values(self) -> np.ndarray:
        """B at the grid points, B_0 = 0."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    @property
    def terminal(self) -> float:
        """B_T."""
        return float(self.increments.sum())


@dataclass(frozen=True, slots=True, eq=False)
class TeugelsIncrements:
    """Raw compensated power increments and their orthonormal combinations."""

    raw: np.ndarray
    teugels: np.ndarray

    @property
    def m(self) -> int:
        """Number of Teugels martingales."""
        return int(self.teugels.shape[-1])


@dataclass(frozen=True, slots=True, eq=False)
class PathEnsemble:
    """Independent realizations stacked along the first axis."""

    grid: TimeGrid
    sizes: np.ndarray
    counts: np.ndarray
    brownian: np.ndarray
    increments: TeugelsIncrements
    clock: ClockA

    @property
    def size(self) -> int:
        """Number of paths."""
        return int(self.counts.shape[0])


def simulate_levy(
    measure: JumpMeasure, grid: TimeGrid, seed: int, path_index: int = 0
) -> LevyPath:
    """
    Draw Poisson(lambda_k dt) jumps of size a_k in every step.

    :param measure: The jump measure.
    :type measure: JumpMeasure
    :param grid: The time grid.
    :type grid: TimeGrid
    :param seed: Master seed.
    :type seed: int
    :param path_index: Index of the path within an ensemble.
    :type path_index: int
    :return: The jump marks of one path.
    :rtype: LevyPath
    """
    rng = path_rng(seed, path_index, STREAM_LEVY)
    rates = measure.intensities * grid.dt
    counts = rng.poisson(rates, size=(grid.steps, measure.m))
    return LevyPath(grid=grid, sizes=measure.sizes, counts=counts)


def simulate_brownian(grid: TimeGrid, seed: int, path_index: int = 0) -> BrownianPath:
    """Draw independent Normal(0, dt) increments."""
    rng = path_rng(seed, path_index, STREAM_BROWNIAN)
    increments = rng.normal(0.0, np.sqrt(grid.dt), size=grid.steps)
    return BrownianPath(grid=grid, increments=increments)


def power_increments(
    path: LevyPath, moments: PowerMomentTable, grid: TimeGrid
) -> np.ndarray:
    """
    Return compensated power-jump increments Delta T^{(i)}_k, i = 1..m.

    Works on a single path (counts of shape (N, m)) or on stacked counts.
    """
    grid.require_same(path.grid, "Levy path")
    return _power_increments(path.counts, path.sizes, moments, grid.dt)


def teugels_increments(raw: np.ndarray, basis: OrthoBasis) -> TeugelsIncrements:
    """Combine raw increments into Delta H^{(i)} = sum_{j<=i} c_{i,j} Delta T^{(j)}."""
    if raw.shape[-1] != basis.m:
        msg = f"Raw increments carry {raw.shape[-1]} powers, basis has {basis.m}"
        raise BasisIndexError(msg)
    return TeugelsIncrements(raw=raw, teugels=raw @ basis.coeffs.T)


def simulate_ensemble(  # noqa: PLR0913
    measure: JumpMeasure,
    basis: OrthoBasis,
    moments: PowerMomentTable,
    clock: ClockA,
    seed: int,
    n_paths: int,
    start_index: int = 0,
) -> PathEnsemble:
    """Simulate ``n_paths`` independent paths with one stream per path index."""
    grid = clock.grid
    counts = np.empty((n_paths, grid.steps, measure.m), dtype=np.int64)
    brownian = np.empty((n_paths, grid.steps))
    for offset in range(n_paths):
        index = start_index + offset
        counts[offset] = simulate_levy(measure, grid, seed, index).counts
        brownian[offset] = simulate_brownian(grid, seed, index).increments
    raw = _power_increments(counts, measure.sizes, moments, grid.dt)
    LOGGER.debug(
        "Simulated %d paths (indices %d..%d) on %d steps",
        n_paths,
        start_index,
        start_index + n_paths - 1,
        grid.steps,
    )
    return PathEnsemble(
        grid=grid,
        sizes=measure.sizes,
        counts=counts,
        brownian=brownian,
        increments=teugels_increments(raw, basis),
        clock=clock,
    )


def merge_ensembles(parts: list[PathEnsemble]) -> PathEnsemble:
    """Concatenate ensembles simulated in batches, in the given order."""
    first = parts[0]
    return PathEnsemble(
        grid=first.grid,
        sizes=first.sizes,
        counts=np.concatenate([p.counts for p in parts]),
        brownian=np.concatenate([p.brownian for p in parts]),
        increments=TeugelsIncrements(
            raw=np.concatenate([p.increments.raw for p in parts]),
            teugels=np.concatenate([p.increments.teugels for p in parts]),
        ),
        clock=first.clock,
    )


def empirical_bracket(
    ensemble: PathEnsemble, i: int, j: int, t: float | None = None
) -> tuple[float, float]:
    """
    Estimate [H^{(i)}, H^{(j)}]_t by its ensemble mean and standard error.

    Steps whose right endpoint lies at or before ``t`` are summed.
    """
    if ensemble.size < MIN_ENSEMBLE:
        msg = f"Bracket estimation needs at least {MIN_ENSEMBLE} paths"
        raise GridError(msg)
    m = ensemble.increments.m
    if not (1 <= i <= m and 1 <= j <= m):
        msg = f"Bracket indices ({i}, {j}) outside 1..{m}"
        raise BasisIndexError(msg)
    horizon = ensemble.grid.horizon if t is None else t
    included = ensemble.grid.times[1:] <= horizon * (1 + 1e-12)
    dh = ensemble.increments.teugels
    products = dh[:, included, i - 1] * dh[:, included, j - 1]
    per_path = products.sum(axis=1)
    return _mean_and_stderr(per_path)


def increment_means(ensemble: PathEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Return the ensemble mean of every Delta H^{(i)}_k and its standard error."""
    dh = ensemble.increments.teugels
    mean = dh.mean(axis=0)
    stderr = dh.std(axis=0, ddof=1) / np.sqrt(ensemble.size)
    return mean, stderr


def jump_count_gof(
    ensemble: PathEnsemble, measure: JumpMeasure, atom: int
) -> tuple[float, float]:
    """
    Chi-square goodness of fit of the per-path jump counts of one atom to Poisson(lambda T).

    Returns (statistic, p-value); cells with expected count below 5 are pooled.
    """
    totals = ensemble.counts[:, :, atom].sum(axis=1)
    mean = measure.intensities[atom] * ensemble.grid.horizon
    top = int(stats.poisson.ppf(1 - 1e-6, mean)) + 1
    observed = np.bincount(np.minimum(totals, top), minlength=top + 1).astype(float)
    probs = stats.poisson.pmf(np.arange(top + 1), mean)
    probs[-1] = stats.poisson.sf(top - 1, mean)
    expected = probs * ensemble.size
    observed, expected = _pool_cells(observed, expected)
    expected *= observed.sum() / expected.sum()
    result = stats.chisquare(observed, expected)
    return float(result.statistic), float(result.pvalue)


def _power_increments(
    counts: np.ndarray, sizes: np.ndarray, moments: PowerMomentTable, dt: float
) -> np.ndarray:
    m = sizes.shape[0]
    if moments.max_order < m:
        msg = f"Moment table of order {moments.max_order} cannot serve m={m}"
        raise BasisIndexError(msg)
    powers = sizes[:, None] ** np.arange(1, m + 1)[None, :]
    return counts @ powers - dt * moments.moments[:m]


def _mean_and_stderr(samples: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / np.sqrt(samples.shape[0]))
    return mean, stderr


def _pool_cells(
    observed: np.ndarray, expected: np.ndarray, minimum: float = 5.0
) -> tuple[np.ndarray, np.ndarray]:
    pooled_obs: list[float] = []
    pooled_exp: list[float] = []
    acc_obs = acc_exp = 0.0
    for obs, exp in zip(observed, expected, strict=True):
        acc_obs += obs
        acc_exp += exp
        if acc_exp >= minimum:
            pooled_obs.append(acc_obs)
            pooled_exp.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if acc_exp > 0.0 and pooled_exp:
        pooled_obs[-1] += acc_obs
        pooled_exp[-1] += acc_exp
    elif acc_exp > 0.0:
        pooled_obs.append(acc_obs)
        pooled_exp.append(acc_exp)
    return np.array(pooled_obs), np.array(pooled_exp)

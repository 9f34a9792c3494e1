"""Recombining jump lattice carrying the discrete Teugels increments."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, floor
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg, stats

from .const import DEFAULT_MAX_NODES, DEFAULT_TRUNCATION_TOL, LOGGER
from .exceptions import LatticeError
from .levy_basis import power_moments

if TYPE_CHECKING:
    from .levy_basis import JumpMeasure, OrthoBasis
    from .time_utils import TimeGrid

DEFAULT_MAX_STRINGS = 4096


@dataclass(frozen=True, slots=True, eq=False)
class BranchStrings:
    """
    Explicit branch strings below one lattice node.

    ``branches[s, d]`` is the branch taken at depth d, ``nodes[s, d]`` the node
    index at step ``start + d``. ``weights`` sum to one: path probabilities when
    the strings are exhaustive, uniform weights when they are sampled.
    """

    start: int
    branches: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    exhaustive: bool

    @property
    def depth(self) -> int:
        """Number of steps covered by each string."""
        return int(self.branches.shape[1])


@dataclass(frozen=True, slots=True, eq=False)
class JumpLattice:
    """
    Recombining lattice over per-atom jump counts.

    Branch 0 is "no jump", branch j >= 1 is one jump of size a_j. A node at
    step k is the vector of jump counts so far; ``children[k][node, branch]``
    is the index of the successor node at step k + 1. When ``max_jumps`` is
    set, jumps beyond that total are absorbed and ``truncated_mass`` bounds
    the probability of the affected paths.
    """

    grid: TimeGrid
    sizes: np.ndarray
    probabilities: np.ndarray
    raw: np.ndarray
    increments: np.ndarray
    transform: np.ndarray
    states: tuple[np.ndarray, ...]
    children: tuple[np.ndarray, ...]
    node_probabilities: tuple[np.ndarray, ...]
    max_jumps: int | None = None
    truncated_mass: float = 0.0

    @property
    def m(self) -> int:
        """Number of jump atoms."""
        return int(self.sizes.shape[0])

    @property
    def steps(self) -> int:
        """Number of time steps."""
        return self.grid.steps

    @property
    def node_count(self) -> int:
        """Total number of nodes over all steps."""
        return sum(int(s.shape[0]) for s in self.states)

    @property
    def truncated(self) -> bool:
        """True when jumps beyond ``max_jumps`` are absorbed."""
        return self.max_jumps is not None

    def width(self, step: int) -> int:
        """Number of nodes at ``step``."""
        return int(self.states[step].shape[0])

    def levy_values(self, step: int) -> np.ndarray:
        """L_{t_k} at every node of ``step``."""
        return self.states[step] @ self.sizes

    def child_values(self, values_next: np.ndarray, step: int) -> np.ndarray:
        """Gather node values of step k + 1 per (node, branch) of step k."""
        return values_next[self.children[step]]

    def expectation(self, values_next: np.ndarray, step: int) -> np.ndarray:
        """E[V_{k+1} | node] for every node of step k."""
        return self.child_values(values_next, step) @ self.probabilities

    def projection(self, values_next: np.ndarray, step: int) -> np.ndarray:
        """Z_k = E[V_{k+1} e | node] / dt, shape (nodes, m)."""
        weighted = self.child_values(values_next, step) * self.probabilities
        return weighted @ self.increments / self.grid.dt

    def moment_residual(self) -> float:
        """Max deviation of E[e] from 0 and of E[e e^T] from dt I."""
        mean = self.probabilities @ self.increments
        second = self.increments.T @ (self.probabilities[:, None] * self.increments)
        target = self.grid.dt * np.eye(self.m)
        return float(max(np.max(np.abs(mean)), np.max(np.abs(second - target))))

    def node_index(self, step: int, counts: np.ndarray) -> int:
        """Return the index of the node with the given jump counts."""
        keys = _keys(self.states[step], self.steps)
        key = _keys(np.asarray(counts, dtype=np.int64)[None, :], self.steps)[0]
        position = int(np.searchsorted(keys, key))
        if position >= keys.shape[0] or keys[position] != key:
            msg = f"No node with counts {list(counts)} at step {step}"
            raise LatticeError(msg)
        return position

    def branch_strings(
        self,
        start: int,
        node: int,
        rng: np.random.Generator | None = None,
        max_strings: int = DEFAULT_MAX_STRINGS,
    ) -> BranchStrings:
        """
        Enumerate (or sample) branch strings from ``node`` at ``start`` to the horizon.

        Strings are enumerated when (m + 1)^depth <= ``max_strings``, otherwise
        ``max_strings`` strings are drawn with the branch probabilities from
        ``rng``.
        """
        depth = self.steps - start
        branch_count = self.m + 1
        if depth == 0:
            branches = np.zeros((1, 0), dtype=np.int64)
            weights = np.ones(1)
            exhaustive = True
        elif branch_count**depth <= max_strings:
            grids = np.indices((branch_count,) * depth).reshape(depth, -1).T
            branches = grids.astype(np.int64)
            weights = np.prod(self.probabilities[branches], axis=1)
            exhaustive = True
        else:
            if rng is None:
                msg = (
                    f"{branch_count}^{depth} strings exceed {max_strings}; "
                    "sampling needs a generator"
                )
                raise LatticeError(msg)
            branches = rng.choice(
                branch_count, size=(max_strings, depth), p=self.probabilities
            )
            weights = np.full(max_strings, 1.0 / max_strings)
            exhaustive = False
        nodes = np.empty((branches.shape[0], depth + 1), dtype=np.int64)
        nodes[:, 0] = node
        for d in range(depth):
            nodes[:, d + 1] = self.children[start + d][nodes[:, d], branches[:, d]]
        return BranchStrings(
            start=start,
            branches=branches,
            nodes=nodes,
            weights=weights,
            exhaustive=exhaustive,
        )


def build_lattice(  # noqa: PLR0913
    measure: JumpMeasure,
    basis: OrthoBasis,
    grid: TimeGrid,
    max_nodes: int = DEFAULT_MAX_NODES,
    max_jumps: int | None = None,
    truncation_tol: float = DEFAULT_TRUNCATION_TOL,
) -> JumpLattice:
    """
    Build the jump lattice for a measure, its basis and a grid.

    :param measure: The jump measure.
    :type measure: JumpMeasure
    :param basis: Orthonormal basis of the measure.
    :type basis: OrthoBasis
    :param grid: The time grid.
    :type grid: TimeGrid
    :param max_nodes: Node cap summed over all steps.
    :type max_nodes: int
    :param max_jumps: Force truncation at this total jump count.
    :type max_jumps: int | None
    :param truncation_tol: Target tail mass when the cap forces truncation.
    :type truncation_tol: float
    :return: The lattice.
    :rtype: JumpLattice
    """
    if basis.m != measure.m:
        msg = f"Basis has {basis.m} polynomials, measure has {measure.m} atoms"
        raise LatticeError(msg)
    dt = grid.dt
    total = measure.total_intensity
    if total * dt >= 1.0:
        min_steps = floor(total * grid.horizon) + 1
        msg = (
            f"Branch probabilities overflow: sum(lambda) * dt = {total * dt:.4g} >= 1; "
            f"use at least N = {min_steps} steps"
        )
        raise LatticeError(msg, min_steps=min_steps)

    m = measure.m
    probabilities = np.concatenate(([1.0 - total * dt], measure.intensities * dt))
    moments = power_moments(measure, m)
    powers = measure.sizes[:, None] ** np.arange(1, m + 1)[None, :]
    raw_powers = np.vstack((np.zeros((1, m)), powers)) - dt * moments.moments[None, :]
    raw = raw_powers @ basis.coeffs.T
    increments, transform = _reorthonormalize(raw, probabilities, dt)

    jump_cap = _jump_cap(grid, m, total * dt, max_nodes, max_jumps, truncation_tol)
    states, children = _recombining_states(grid.steps, m, jump_cap)
    node_probs = _node_probabilities(states, children, probabilities)
    truncated_mass = 0.0
    if jump_cap is not None:
        truncated_mass = float(stats.binom.sf(jump_cap, grid.steps, total * dt))
        LOGGER.warning(
            "Lattice truncated at %d jumps; neglected path mass %.3e",
            jump_cap,
            truncated_mass,
        )
    lattice = JumpLattice(
        grid=grid,
        sizes=measure.sizes,
        probabilities=probabilities,
        raw=raw,
        increments=increments,
        transform=transform,
        states=tuple(states),
        children=tuple(children),
        node_probabilities=tuple(node_probs),
        max_jumps=jump_cap,
        truncated_mass=truncated_mass,
    )
    LOGGER.debug(
        "Built lattice: N=%d, m=%d, %d nodes, moment residual %.2e",
        grid.steps,
        m,
        lattice.node_count,
        lattice.moment_residual(),
    )
    return lattice


def exact_node_count(steps: int, m: int) -> int:
    """Nodes of the untruncated lattice summed over steps 0..N."""
    return comb(steps + m + 1, m + 1)


def _reorthonormalize(
    raw: np.ndarray, probabilities: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    transform = np.eye(raw.shape[1])
    increments = raw
    for _ in range(2):
        increments = increments - probabilities @ increments
        second = increments.T @ (probabilities[:, None] * increments) / dt
        second = 0.5 * (second + second.T)
        try:
            lower = linalg.cholesky(second, lower=True)
        except linalg.LinAlgError as err:
            msg = "Branch increments are linearly dependent"
            raise LatticeError(msg) from err
        step = linalg.solve_triangular(lower, np.eye(raw.shape[1]), lower=True)
        transform = step @ transform
        increments = raw @ transform.T
    increments = increments - probabilities @ increments
    return increments, transform


def _jump_cap(  # noqa: PLR0913
    grid: TimeGrid,
    m: int,
    rate: float,
    max_nodes: int,
    max_jumps: int | None,
    truncation_tol: float,
) -> int | None:
    if max_jumps is not None:
        if max_jumps < 1:
            msg = f"max_jumps must be at least 1, got {max_jumps}"
            raise LatticeError(msg)
        return max_jumps if max_jumps < grid.steps else None
    if exact_node_count(grid.steps, m) <= max_nodes:
        return None
    cap = int(stats.binom.isf(truncation_tol, grid.steps, rate)) + 1
    while cap > 1 and _truncated_node_count(grid.steps, m, cap) > max_nodes:
        cap -= 1
    if _truncated_node_count(grid.steps, m, cap) > max_nodes:
        msg = f"Even one absorbed jump exceeds the node cap {max_nodes}"
        raise LatticeError(msg)
    return min(cap, grid.steps - 1)


def _truncated_node_count(steps: int, m: int, cap: int) -> int:
    return sum(comb(min(k, cap) + m, m) for k in range(steps + 1))


def _keys(states: np.ndarray, steps: int) -> np.ndarray:
    radix = (steps + 1) ** np.arange(states.shape[1], dtype=np.int64)
    return states.astype(np.int64) @ radix


def _recombining_states(
    steps: int, m: int, cap: int | None
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    unit = np.eye(m, dtype=np.int64)
    states = [np.zeros((1, m), dtype=np.int64)]
    children: list[np.ndarray] = []
    for _ in range(steps):
        current = states[-1]
        totals = current.sum(axis=1)
        absorbed = np.zeros_like(totals, dtype=bool) if cap is None else totals >= cap
        successors = [current]
        for j in range(m):
            moved = current + unit[j]
            successors.append(np.where(absorbed[:, None], current, moved))
        candidates = np.concatenate(successors)
        keys = _keys(candidates, steps)
        unique_keys, first = np.unique(keys, return_index=True)
        states.append(candidates[first])
        child = np.stack(
            [np.searchsorted(unique_keys, _keys(s, steps)) for s in successors], axis=1
        )
        children.append(child)
    return states, children


def _node_probabilities(
    states: list[np.ndarray], children: list[np.ndarray], probabilities: np.ndarray
) -> list[np.ndarray]:
    result = [np.ones(1)]
    for step, child in enumerate(children):
        nxt = np.zeros(states[step + 1].shape[0])
        mass = result[-1][:, None] * probabilities[None, :]
        np.add.at(nxt, child.ravel(), mass.ravel())
        result.append(nxt)
    return result

"""Backward solution of the discrete equation on the jump lattice."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.integrate import solve_ivp

from .const import (
    DEFAULT_DAMPING,
    DEFAULT_FIXED_POINT_TOL,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_PICARD_MAX_ITERATIONS,
    DEFAULT_PICARD_TOL,
    DEFAULT_SEED,
    DEFAULT_SUP_SAMPLES,
    LOGGER,
    NON_CONTRACTION_STREAK,
    ODE_ATOL,
    ODE_RTOL,
)
from .exceptions import DriverError, FixedPointError, GridError, NonContractionError
from .path_engine import STREAM_LATTICE, path_rng

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .drivers import DriverSpec, TerminalSpec
    from .lattice import JumpLattice
    from .path_engine import BrownianPath
    from .time_utils import ClockA

APRIORI_FACTOR = 12.0


@dataclass(frozen=True, slots=True, eq=False)
class Solution:
    """
    Node-wise solution (Y, Z) on one lattice for one Brownian path.

    ``y[k]`` has one entry per node of step k (k = 0..N); ``z[k]`` has shape
    (nodes, m) for k = 0..N-1.
    """

    lattice: JumpLattice
    y: tuple[np.ndarray, ...]
    z: tuple[np.ndarray, ...]
    bpath: BrownianPath
    clock: ClockA
    driver_name: str = ""
    terminal_name: str = ""
    max_residual: float = 0.0
    damped_steps: int = 0

    @property
    def y0(self) -> float:
        """Y at time zero."""
        return float(self.y[0][0])

    @property
    def z0(self) -> np.ndarray:
        """Z at time zero."""
        return self.z[0][0]


@dataclass(frozen=True, slots=True)
class NormReport:
    """Squared norms of (Y, Z) averaged over Brownian paths."""

    sup_norm: float
    m2_norm: float
    a2_norm: float
    em_norm: float
    mu: float = 0.0
    lam: float = 0.0

    def as_dict(self) -> dict[str, Any]:
        """Return the JSON-ready field mapping."""
        return asdict(self)


@dataclass(frozen=True, slots=True)
class AprioriBound:
    """Data-only bound for the E_m norm with the weight exponents it uses."""

    mu: float
    lam: float
    data: float
    bound: float


def solve_backward(  # noqa: PLR0913
    lattice: JumpLattice,
    driver: DriverSpec,
    terminal: TerminalSpec,
    bpath: BrownianPath,
    clock: ClockA,
    tol: float = DEFAULT_FIXED_POINT_TOL,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    damping: float = DEFAULT_DAMPING,
) -> Solution:
    """
    Solve the implicit scheme backward from the terminal layer.

    At every node of step k, Z_k = E[Y_{k+1} e] / dt and Y_k solves
    Y_k = E[Y_{k+1}] + f(t_k, Y_k, Z_k) dt + h(t_k, Y_k) dA_k + g(t_k, Y_k) dB_k.
    The Brownian increment of step k is known at t_k.

    :param lattice: The jump lattice.
    :type lattice: JumpLattice
    :param driver: Coefficients f, h, g.
    :type driver: DriverSpec
    :param terminal: Terminal value.
    :type terminal: TerminalSpec
    :param bpath: The conditioning Brownian path.
    :type bpath: BrownianPath
    :param clock: Clock values on the grid.
    :type clock: ClockA
    :param tol: Absolute fixed-point tolerance.
    :type tol: float
    :param max_iterations: Iteration cap per step.
    :type max_iterations: int
    :param damping: Relaxation weight used once plain iteration stops contracting.
    :type damping: float
    :return: The solution.
    :rtype: Solution
    """
    _require_shared_grid(lattice, bpath, clock)
    grid = lattice.grid
    times = grid.times
    d_clock = clock.increments
    d_brownian = bpath.increments
    y: list[np.ndarray] = [np.empty(0)] * (grid.steps + 1)
    z: list[np.ndarray] = [np.empty((0, lattice.m))] * grid.steps
    y[-1] = terminal.evaluate(lattice, clock, bpath.terminal)
    worst = 0.0
    damped = 0
    for k in range(grid.steps - 1, -1, -1):
        expected = lattice.expectation(y[k + 1], k)
        z[k] = lattice.projection(y[k + 1], k)
        y[k], residual, was_damped = _implicit_step(
            driver,
            times[k],
            expected,
            z[k],
            (grid.dt, d_clock[k], d_brownian[k]),
            step=k,
            tol=tol,
            max_iterations=max_iterations,
            damping=damping,
        )
        worst = max(worst, residual)
        damped += was_damped
    if damped:
        LOGGER.warning(
            "Damping engaged on %d of %d steps for driver %s",
            damped,
            grid.steps,
            driver.name,
        )
    LOGGER.debug(
        "Solved %s/%s on N=%d: Y_0=%.12g, max residual %.2e",
        driver.name,
        terminal.name,
        grid.steps,
        y[0][0],
        worst,
    )
    return Solution(
        lattice=lattice,
        y=tuple(y),
        z=tuple(z),
        bpath=bpath,
        clock=clock,
        driver_name=driver.name,
        terminal_name=terminal.name,
        max_residual=worst,
        damped_steps=damped,
    )


def picard_solve(  # noqa: PLR0913
    lattice: JumpLattice,
    driver: DriverSpec,
    terminal: TerminalSpec,
    bpath: BrownianPath,
    clock: ClockA,
    max_iters: int = DEFAULT_PICARD_MAX_ITERATIONS,
    tol: float = DEFAULT_PICARD_TOL,
) -> tuple[Solution, list[float]]:
    """
    Iterate the scheme with (Y, Z) frozen inside f, h and g.

    The first iterate is the conditional expectation of xi. The history
    holds the E_m distance between successive iterates.
    """
    if not driver.lipschitz:
        msg = f"Picard iteration needs a Lipschitz driver, {driver.name} is not"
        raise DriverError(msg)
    _require_shared_grid(lattice, bpath, clock)
    grid = lattice.grid
    times = grid.times
    d_clock = clock.increments
    d_brownian = bpath.increments
    xi = terminal.evaluate(lattice, clock, bpath.terminal)
    y_prev, z_prev = _propagate(lattice, xi)
    history: list[float] = []
    streak = 0
    for iteration in range(1, max_iters + 1):
        y_new: list[np.ndarray] = [np.empty(0)] * (grid.steps + 1)
        z_new: list[np.ndarray] = [np.empty((0, lattice.m))] * grid.steps
        y_new[-1] = xi
        for k in range(grid.steps - 1, -1, -1):
            frozen_y = y_prev[k]
            frozen_z = z_prev[k]
            z_new[k] = lattice.projection(y_new[k + 1], k)
            y_new[k] = (
                lattice.expectation(y_new[k + 1], k)
                + driver.f_value(times[k], frozen_y, frozen_z) * grid.dt
                + driver.h_value(times[k], frozen_y) * d_clock[k]
                + driver.g_value(times[k], frozen_y, frozen_z) * d_brownian[k]
            )
        distance = _em_distance(lattice, clock, y_new, z_new, y_prev, z_prev)
        if history and distance > history[-1]:
            streak += 1
        else:
            streak = 0
        history.append(distance)
        y_prev, z_prev = y_new, z_new
        LOGGER.debug("Picard iteration %d: distance %.3e", iteration, distance)
        if distance <= tol:
            break
        if streak >= NON_CONTRACTION_STREAK:
            msg = (
                f"Picard distances grew {streak} times in a row "
                f"(last {distance:.3e}) for driver {driver.name}"
            )
            raise NonContractionError(msg)
    else:
        msg = f"Picard iteration did not reach {tol:.1e} in {max_iters} iterations"
        raise NonContractionError(msg)
    solution = Solution(
        lattice=lattice,
        y=tuple(y_prev),
        z=tuple(z_prev),
        bpath=bpath,
        clock=clock,
        driver_name=driver.name,
        terminal_name=terminal.name,
    )
    return solution, history


def em_distance(first: Solution, second: Solution) -> float:
    """E_m distance of two solutions on one lattice, sup taken over step-wise means."""
    return _em_distance(
        first.lattice, first.clock, list(first.y), list(first.z), list(second.y), list(second.z)
    )


def projection_residual(solution: Solution) -> float:
    """
    Max |E[(Y_{k+1} - E[Y_{k+1}] - sum_i Z^i e^i) e^j]| over steps, nodes and j.
    """
    lattice = solution.lattice
    worst = 0.0
    for k in range(lattice.steps):
        children = lattice.child_values(solution.y[k + 1], k)
        expected = children @ lattice.probabilities
        fitted = solution.z[k] @ lattice.increments.T
        error = children - expected[:, None] - fitted
        moment = (error * lattice.probabilities) @ lattice.increments
        worst = max(worst, float(np.max(np.abs(moment))))
    return worst


def norms(
    solutions: Sequence[Solution],
    mu: float = 0.0,
    lam: float = 0.0,
    seed: int = DEFAULT_SEED,
    samples: int = DEFAULT_SUP_SAMPLES,
) -> NormReport:
    """
    Average the squared norms of (Y, Z) over an ensemble of Brownian paths.

    The A^2 and M^2 parts are exact lattice sums. The sup part follows branch
    strings from the root, enumerated when few enough and sampled otherwise.
    Weights exp(mu t + lam A_t) apply when ``mu`` or ``lam`` is nonzero.
    """
    if not solutions:
        msg = "Norms need at least one solution"
        raise GridError(msg)
    sup_parts, m2_parts, a2_parts = [], [], []
    for index, solution in enumerate(solutions):
        lattice = solution.lattice
        grid = lattice.grid
        weight = np.exp(mu * grid.times + lam * solution.clock.values)
        d_clock = solution.clock.increments
        a2 = 0.0
        m2 = 0.0
        for k in range(grid.steps):
            probs = lattice.node_probabilities[k]
            a2 += weight[k] * d_clock[k] * float(probs @ solution.y[k] ** 2)
            m2 += weight[k] * grid.dt * float(probs @ np.sum(solution.z[k] ** 2, axis=1))
        strings = lattice.branch_strings(
            0, 0, rng=path_rng(seed, index, STREAM_LATTICE), max_strings=samples
        )
        along = np.column_stack(
            [solution.y[k][strings.nodes[:, k]] for k in range(grid.steps + 1)]
        )
        sup = float(strings.weights @ np.max(weight[None, :] * along**2, axis=1))
        sup_parts.append(sup)
        m2_parts.append(m2)
        a2_parts.append(a2)
    sup_norm = float(np.mean(sup_parts))
    m2_norm = float(np.mean(m2_parts))
    a2_norm = float(np.mean(a2_parts))
    return NormReport(
        sup_norm=sup_norm,
        m2_norm=m2_norm,
        a2_norm=a2_norm,
        em_norm=sup_norm + a2_norm + m2_norm,
        mu=mu,
        lam=lam,
    )


def apriori_weights(lipschitz_k: float) -> tuple[float, float]:
    """Weight exponents (mu, lam) absorbing the K-terms of the energy estimate."""
    lam = 1.0 + 2.0 * lipschitz_k
    mu = 1.0 + 2.0 * lipschitz_k + 4.0 * lipschitz_k**2
    return mu, lam


def apriori_bound(
    driver: DriverSpec,
    terminal: TerminalSpec,
    lattice: JumpLattice,
    clock: ClockA,
    brownian_terminals: Sequence[float],
) -> AprioriBound:
    """
    Bound the E_m norm of any solution from (xi, f_t, g_t, h_t) alone.

    The data integral is E[e^{mu T + lam A_T} xi^2 + int e^{mu s + lam A_s}
    (f_s^2 + g_s^2) ds + int e^{mu s + lam A_s} h_s^2 dA_s].
    """
    mu, lam = apriori_weights(driver.lipschitz_k)
    grid = lattice.grid
    times = grid.times
    weight = np.exp(mu * times + lam * clock.values)
    terminal_part = float(
        np.mean(
            [
                np.exp(mu * grid.horizon)
                * terminal.weighted_integrability(lattice, clock, b_t, lam)
                for b_t in brownian_terminals
            ]
        )
    )
    running = 0.0
    for k in range(grid.steps):
        t = times[k]
        running += weight[k] * (driver.f_growth(t) ** 2 + driver.g_growth(t) ** 2) * grid.dt
        running += weight[k] * driver.h_growth(t) ** 2 * clock.increments[k]
    data = terminal_part + running
    return AprioriBound(mu=mu, lam=lam, data=data, bound=APRIORI_FACTOR * data)


def ode_reference(
    driver: DriverSpec,
    xi: float,
    clock: ClockA,
    rtol: float = ODE_RTOL,
    atol: float = ODE_ATOL,
) -> float:
    """
    Y_0 of the continuous-time equation when it reduces to an ODE.

    With f free of z, g = 0 and a constant xi, Z vanishes and
    dY/dt = -f(t, Y, 0) - h(t, Y) A'(t) backward from Y_T = xi.
    """
    if not driver.deterministic:
        msg = f"Driver {driver.name} depends on z or carries a g term; no ODE reference"
        raise DriverError(msg)
    zeros = np.zeros((1, 1))

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        f = driver.f_value(t, y, zeros)
        h = driver.h_value(t, y)
        return -f - h * clock.profile.rate(t)

    horizon = clock.grid.horizon
    result = solve_ivp(
        rhs, (horizon, 0.0), [float(xi)], method="DOP853", rtol=rtol, atol=atol
    )
    if not result.success:
        msg = f"ODE reference for {driver.name} failed: {result.message}"
        raise GridError(msg)
    y0 = float(result.y[0, -1])
    LOGGER.debug("ODE reference for %s from xi=%g: Y_0=%.10g", driver.name, xi, y0)
    return y0


def _require_shared_grid(lattice: JumpLattice, bpath: BrownianPath, clock: ClockA) -> None:
    lattice.grid.require_same(bpath.grid, "Brownian path")
    lattice.grid.require_same(clock.grid, "Clock")


def _implicit_step(  # noqa: PLR0913
    driver: DriverSpec,
    t: float,
    expected: np.ndarray,
    z: np.ndarray,
    increments: tuple[float, float, float],
    *,
    step: int,
    tol: float,
    max_iterations: int,
    damping: float,
) -> tuple[np.ndarray, float, bool]:
    dt, d_clock, d_brownian = increments

    def update(y: np.ndarray) -> np.ndarray:
        return (
            expected
            + driver.f_value(t, y, z) * dt
            + driver.h_value(t, y) * d_clock
            + driver.g_value(t, y, z) * d_brownian
        )

    y = expected.copy()
    relax = 1.0
    previous = np.inf
    for _ in range(max_iterations):
        gap = update(y) - y
        residual = float(np.max(np.abs(gap))) if gap.size else 0.0
        if residual <= tol:
            return y, residual, relax < 1.0
        if residual >= previous and relax == 1.0:
            relax = damping
        previous = residual
        y = y + relax * gap
    node = int(np.argmax(np.abs(update(y) - y)))
    msg = (
        f"Fixed point did not converge at step {step}, node {node} "
        f"after {max_iterations} iterations (residual {residual:.3e})"
    )
    raise FixedPointError(msg, step=step, node=node, residual=residual)


def _propagate(
    lattice: JumpLattice, xi: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    y: list[np.ndarray] = [np.empty(0)] * (lattice.steps + 1)
    z: list[np.ndarray] = [np.empty((0, lattice.m))] * lattice.steps
    y[-1] = xi
    for k in range(lattice.steps - 1, -1, -1):
        y[k] = lattice.expectation(y[k + 1], k)
        z[k] = lattice.projection(y[k + 1], k)
    return y, z


def _em_distance(  # noqa: PLR0913
    lattice: JumpLattice,
    clock: ClockA,
    y_a: list[np.ndarray],
    z_a: list[np.ndarray],
    y_b: list[np.ndarray],
    z_b: list[np.ndarray],
) -> float:
    sup = 0.0
    total = 0.0
    d_clock = clock.increments
    for k in range(lattice.steps + 1):
        probs = lattice.node_probabilities[k]
        dy2 = float(probs @ (y_a[k] - y_b[k]) ** 2)
        sup = max(sup, dy2)
        if k < lattice.steps:
            dz2 = float(probs @ np.sum((z_a[k] - z_b[k]) ** 2, axis=1))
            total += dy2 * d_clock[k] + dz2 * lattice.grid.dt
    return float(np.sqrt(sup + total))

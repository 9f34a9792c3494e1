"""
Linearization of two solutions and the checks behind the comparison verdict.

Everything here is a deterministic function of solved lattices: difference
quotients, the jump-positivity condition, the Doleans-Dade exponential along
branch strings, the conditional-expectation representation of Y1 - Y2 and
the node-wise ordering verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from .const import (
    DEFAULT_ORDER_TOL,
    GAMMA_EXPONENTIAL,
    GAMMA_SCHEME,
    LOGGER,
    VERDICT_INAPPLICABLE,
    VERDICT_PASSED,
    VERDICT_STRICT,
)
from .exceptions import ComparisonViolation, GridError
from .lattice import DEFAULT_MAX_STRINGS

if TYPE_CHECKING:
    from .drivers import DriverSpec
    from .lattice import BranchStrings, JumpLattice
    from .path_engine import BrownianPath
    from .solver import Solution
    from .time_utils import ClockA

GAMMA_CONVENTIONS = (GAMMA_EXPONENTIAL, GAMMA_SCHEME)


@dataclass(frozen=True, slots=True, eq=False)
class LinearizedCoeffs:
    """
    Difference quotients and data gaps per (step, node), steps 0..N-1.

    ``beta[k]`` has shape (nodes, m). ``xi_gap`` lives on the terminal layer.
    """

    a: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]
    c: tuple[np.ndarray, ...]
    beta: tuple[np.ndarray, ...]
    f_gap: tuple[np.ndarray, ...]
    h_gap: tuple[np.ndarray, ...]
    g_gap: tuple[np.ndarray, ...]
    xi_gap: np.ndarray

    @property
    def steps(self) -> int:
        """Number of linearized steps."""
        return len(self.a)


@dataclass(frozen=True, slots=True, eq=False)
class GammaFactors:
    """Per-step multipliers of Gamma: continuous part per node, jump part per branch."""

    convention: str
    continuous: tuple[np.ndarray, ...]
    jump: tuple[np.ndarray, ...]

    def step_factor(self, step: int) -> np.ndarray:
        """1 + dX for every (node, branch) of ``step``."""
        return self.continuous[step][:, None] * self.jump[step]


@dataclass(frozen=True, slots=True, eq=False)
class GammaPath:
    """Gamma_{s, t} along branch strings started at one node of step s."""

    strings: BranchStrings
    values: np.ndarray
    dx: np.ndarray
    factors: GammaFactors

    @property
    def start(self) -> int:
        """Start step s."""
        return self.strings.start

    @property
    def positive(self) -> bool:
        """True when every Gamma value is strictly positive."""
        return bool(np.all(self.values > 0.0))


@dataclass(frozen=True, slots=True)
class OrderedData:
    """Spot-checked ordering certificates of the two data sets."""

    xi_gap_min: float
    f_gap_min: float
    h_gap_min: float
    g_gap_max: float
    clock_moves: bool

    def ordered(self, tol: float = DEFAULT_ORDER_TOL) -> bool:
        """xi1 >= xi2, f1 >= f2, h1 >= h2 and g1 = g2 on the lattice."""
        return (
            self.xi_gap_min >= -tol
            and self.f_gap_min >= -tol
            and self.h_gap_min >= -tol
            and self.g_gap_max <= tol
        )

    @property
    def strict_terminal(self) -> bool:
        """xi1 > xi2 at every terminal node."""
        return self.xi_gap_min > 0.0

    @property
    def strict_driver(self) -> bool:
        """f1 > f2 everywhere, or h1 > h2 everywhere with a moving clock."""
        return self.f_gap_min > 0.0 or (self.h_gap_min > 0.0 and self.clock_moves)


@dataclass(frozen=True, slots=True)
class ComparisonReport:
    """Outcome of one comparison experiment."""

    min_gap: float
    jump_condition_min: float
    step_condition_min: float
    representation_residual: float
    strict: bool
    verdict: str
    reason: str = ""

    def as_dict(self) -> dict[str, Any]:
        """Return the JSON-ready mapping."""
        return {
            "min_gap": self.min_gap,
            "jump_condition_min": self.jump_condition_min,
            "step_condition_min": self.step_condition_min,
            "representation_residual": self.representation_residual,
            "strict": self.strict,
            "verdict": self.verdict,
            "reason": self.reason,
        }


def difference_quotients(
    driver1: DriverSpec, driver2: DriverSpec, sol1: Solution, sol2: Solution
) -> LinearizedCoeffs:
    """
    Linearize f1(Y1, Z1) - f2(Y2, Z2) along the interpolation chain.

    a, b, c are the y-quotients of f1, h1, g1; beta^i is the quotient of f1
    at Y2 between the chain vectors that swap the first i - 1 and i
    coordinates of Z1 for those of Z2. Quotients are 0 where the
    denominator vanishes.
    """
    _require_same_lattice(sol1, sol2)
    lattice = sol1.lattice
    times = lattice.grid.times
    a, b, c, beta = [], [], [], []
    f_gap, h_gap, g_gap = [], [], []
    for k in range(lattice.steps):
        t = times[k]
        y1, y2 = sol1.y[k], sol2.y[k]
        z1, z2 = sol1.z[k], sol2.z[k]
        dy = y1 - y2
        a.append(_quotient(driver1.f_value(t, y1, z1) - driver1.f_value(t, y2, z1), dy))
        b.append(_quotient(driver1.h_value(t, y1) - driver1.h_value(t, y2), dy))
        c.append(_quotient(driver1.g_value(t, y1, z1) - driver1.g_value(t, y2, z1), dy))
        chain = z1.copy()
        quotients = np.zeros_like(z1)
        previous = driver1.f_value(t, y2, chain)
        for i in range(lattice.m):
            chain = chain.copy()
            chain[:, i] = z2[:, i]
            current = driver1.f_value(t, y2, chain)
            quotients[:, i] = _quotient(previous - current, z1[:, i] - z2[:, i])
            previous = current
        beta.append(quotients)
        f_gap.append(driver1.f_value(t, y2, z2) - driver2.f_value(t, y2, z2))
        h_gap.append(driver1.h_value(t, y2) - driver2.h_value(t, y2))
        g_gap.append(driver1.g_value(t, y2, z2) - driver2.g_value(t, y2, z2))
    return LinearizedCoeffs(
        a=tuple(a),
        b=tuple(b),
        c=tuple(c),
        beta=tuple(beta),
        f_gap=tuple(f_gap),
        h_gap=tuple(h_gap),
        g_gap=tuple(g_gap),
        xi_gap=sol1.y[-1] - sol2.y[-1],
    )


def telescoping_residual(
    coeffs: LinearizedCoeffs,
    driver1: DriverSpec,
    driver2: DriverSpec,
    sol1: Solution,
    sol2: Solution,
) -> float:
    """Max |a dY + beta . dZ + f_gap - (f1(Y1, Z1) - f2(Y2, Z2))| over all nodes."""
    times = sol1.lattice.grid.times
    worst = 0.0
    for k in range(coeffs.steps):
        t = times[k]
        linear = (
            coeffs.a[k] * (sol1.y[k] - sol2.y[k])
            + np.sum(coeffs.beta[k] * (sol1.z[k] - sol2.z[k]), axis=1)
            + coeffs.f_gap[k]
        )
        direct = driver1.f_value(t, sol1.y[k], sol1.z[k]) - driver2.f_value(
            t, sol2.y[k], sol2.z[k]
        )
        worst = max(worst, float(np.max(np.abs(linear - direct))))
    return worst


def check_jump_condition(
    coeffs: LinearizedCoeffs, lattice: JumpLattice
) -> tuple[bool, float]:
    """Return (min > 0, min) of 1 + sum_i beta^i e^i over every step, node and branch."""
    minimum = np.inf
    for k in range(coeffs.steps):
        values = 1.0 + coeffs.beta[k] @ lattice.increments.T
        minimum = min(minimum, float(values.min()))
    return minimum > 0.0, minimum


def step_condition(
    coeffs: LinearizedCoeffs, lattice: JumpLattice, clock: ClockA, bpath: BrownianPath
) -> float:
    """Min of 1 - a dt - b dA - c dB, the denominator of the implicit step."""
    dt = lattice.grid.dt
    minimum = np.inf
    for k in range(coeffs.steps):
        denominator = (
            1.0
            - coeffs.a[k] * dt
            - coeffs.b[k] * clock.increments[k]
            - coeffs.c[k] * bpath.increments[k]
        )
        minimum = min(minimum, float(denominator.min()))
    return minimum


def gamma_factors(
    coeffs: LinearizedCoeffs,
    lattice: JumpLattice,
    clock: ClockA,
    bpath: BrownianPath,
    convention: str = GAMMA_EXPONENTIAL,
) -> GammaFactors:
    """
    Per-step multipliers of Gamma in the chosen convention.

    ``exponential``: exp((a - c^2/2) dt + b dA + c dB) times
    (1 + beta . e) exp(-beta . e) per branch.
    ``scheme``: 1 / (1 - a dt - b dA - c dB) times (1 + beta . e), the exact
    multiplier of the implicit step.
    """
    if convention not in GAMMA_CONVENTIONS:
        msg = f"Unknown Gamma convention {convention!r}"
        raise GridError(msg)
    dt = lattice.grid.dt
    continuous, jump = [], []
    for k in range(coeffs.steps):
        drift = coeffs.a[k] * dt + coeffs.b[k] * clock.increments[k]
        noise = coeffs.c[k] * bpath.increments[k]
        exposure = coeffs.beta[k] @ lattice.increments.T
        if convention == GAMMA_EXPONENTIAL:
            continuous.append(np.exp(drift - 0.5 * coeffs.c[k] ** 2 * dt + noise))
            jump.append((1.0 + exposure) * np.exp(-exposure))
        else:
            continuous.append(1.0 / (1.0 - drift - noise))
            jump.append(1.0 + exposure)
    return GammaFactors(convention=convention, continuous=tuple(continuous), jump=tuple(jump))


def doleans_exponential(  # noqa: PLR0913
    coeffs: LinearizedCoeffs,
    lattice: JumpLattice,
    clock: ClockA,
    bpath: BrownianPath,
    s: int = 0,
    node: int = 0,
    convention: str = GAMMA_EXPONENTIAL,
    rng: np.random.Generator | None = None,
    max_strings: int = DEFAULT_MAX_STRINGS,
) -> GammaPath:
    """
    Gamma_{s, t} along branch strings from ``node`` at step ``s``.

    Values come from the closed form, accumulated in log space with the
    sign tracked separately. Gamma_{s, s} = 1.
    """
    factors = gamma_factors(coeffs, lattice, clock, bpath, convention)
    strings = lattice.branch_strings(s, node, rng=rng, max_strings=max_strings)
    per_step = _factors_along(factors, strings)
    with np.errstate(divide="ignore"):
        log_abs = np.cumsum(np.log(np.abs(per_step)), axis=1)
    sign = np.cumprod(np.sign(per_step), axis=1)
    values = np.ones((per_step.shape[0], per_step.shape[1] + 1))
    values[:, 1:] = sign * np.exp(log_abs)
    if not np.all(values > 0.0):
        LOGGER.warning("Gamma is not positive on every branch string from step %d", s)
    return GammaPath(strings=strings, values=values, dx=per_step - 1.0, factors=factors)


def gamma_recursion_check(  # noqa: PLR0913
    coeffs: LinearizedCoeffs,
    lattice: JumpLattice,
    clock: ClockA,
    bpath: BrownianPath,
    s: int = 0,
    node: int = 0,
    convention: str = GAMMA_EXPONENTIAL,
    rng: np.random.Generator | None = None,
) -> float:
    """Max |Gamma_recursion - Gamma_closed| with Gamma_{k+1} = Gamma_k (1 + dX_k)."""
    path = doleans_exponential(
        coeffs, lattice, clock, bpath, s=s, node=node, convention=convention, rng=rng
    )
    recursion = np.ones_like(path.values)
    for d in range(path.dx.shape[1]):
        recursion[:, d + 1] = recursion[:, d] * (1.0 + path.dx[:, d])
    return float(np.max(np.abs(recursion - path.values)))


def representation_check(
    sol1: Solution,
    sol2: Solution,
    coeffs: LinearizedCoeffs,
    gamma: GammaFactors,
) -> float:
    """
    Max node-wise |Y1 - Y2 - E[Gamma xi_gap + sum Gamma (f_gap dt + h_gap dA + g_gap dB) | node]|.

    The conditional expectation is the exact backward branch sum; it closes
    identically only for the ``scheme`` convention.
    """
    _require_same_lattice(sol1, sol2)
    if gamma.convention != GAMMA_SCHEME:
        LOGGER.warning(
            "Representation with %s Gamma is only first-order accurate", gamma.convention
        )
    lattice = sol1.lattice
    expected = _represented(lattice, sol1.clock, sol1.bpath, coeffs, gamma)
    worst = 0.0
    for k in range(lattice.steps + 1):
        gap = sol1.y[k] - sol2.y[k]
        worst = max(worst, float(np.max(np.abs(gap - expected[k]))))
    return worst


def gamma_representation(
    path: GammaPath,
    coeffs: LinearizedCoeffs,
    lattice: JumpLattice,
    clock: ClockA,
    bpath: BrownianPath,
) -> float:
    """
    Evaluate E[Gamma_{s,T} xi_gap + sum_j Gamma_{s,j} D_j (f_gap dt + h_gap dA + g_gap dB)]
    as a weighted sum over the explicit branch strings of ``path``.
    """
    strings = path.strings
    dt = lattice.grid.dt
    total = path.values[:, -1] * coeffs.xi_gap[strings.nodes[:, -1]]
    for d in range(strings.depth):
        k = strings.start + d
        nodes = strings.nodes[:, d]
        source = (
            coeffs.f_gap[k][nodes] * dt
            + coeffs.h_gap[k][nodes] * clock.increments[k]
            + coeffs.g_gap[k][nodes] * bpath.increments[k]
        )
        total = total + path.values[:, d] * path.factors.continuous[k][nodes] * source
    return float(strings.weights @ total)


def ordered_data(coeffs: LinearizedCoeffs, clock: ClockA) -> OrderedData:
    """Spot-check the data ordering on every lattice node."""
    return OrderedData(
        xi_gap_min=float(coeffs.xi_gap.min()),
        f_gap_min=min(float(v.min()) for v in coeffs.f_gap),
        h_gap_min=min(float(v.min()) for v in coeffs.h_gap),
        g_gap_max=max(float(np.abs(v).max()) for v in coeffs.g_gap),
        clock_moves=bool(np.all(clock.increments > 0.0)),
    )


def compare(
    sol1: Solution,
    sol2: Solution,
    driver1: DriverSpec,
    driver2: DriverSpec,
    tol: float = DEFAULT_ORDER_TOL,
) -> ComparisonReport:
    """
    Verify Y1 >= Y2 node-wise for ordered data.

    The check is declared inapplicable when the data are not ordered, the
    jump condition fails, the implicit-step denominator is not positive or g
    depends on z. Otherwise an ordering failure raises ComparisonViolation.
    """
    lattice = sol1.lattice
    coeffs = difference_quotients(driver1, driver2, sol1, sol2)
    certificate = ordered_data(coeffs, sol1.clock)
    jump_ok, jump_min = check_jump_condition(coeffs, lattice)
    step_min = step_condition(coeffs, lattice, sol1.clock, sol1.bpath)
    residual = representation_check(
        sol1,
        sol2,
        coeffs,
        gamma_factors(coeffs, lattice, sol1.clock, sol1.bpath, GAMMA_SCHEME),
    )
    gaps = [sol1.y[k] - sol2.y[k] for k in range(lattice.steps + 1)]
    min_gap = min(float(g.min()) for g in gaps)

    reason = ""
    if not certificate.ordered(tol):
        reason = "data are not ordered"
    elif driver1.g_uses_z or driver2.g_uses_z:
        reason = "g depends on z"
    elif not jump_ok:
        reason = f"jump condition fails (min {jump_min:.3e})"
    elif step_min <= 0.0:
        reason = f"implicit step denominator not positive (min {step_min:.3e})"
    if reason:
        LOGGER.warning("Comparison %s vs %s inapplicable: %s", driver1.name, driver2.name, reason)
        return ComparisonReport(
            min_gap=min_gap,
            jump_condition_min=jump_min,
            step_condition_min=step_min,
            representation_residual=residual,
            strict=False,
            verdict=VERDICT_INAPPLICABLE,
            reason=reason,
        )

    step, node, gap = _worst_gap(gaps, lattice.steps + 1)
    if gap < -tol:
        msg = f"Y1 < Y2 by {-gap:.3e} at step {step}, node {node} with ordered data"
        raise ComparisonViolation(msg, step=step, node=node, gap=gap)
    strict = False
    if certificate.strict_terminal or certificate.strict_driver:
        span = lattice.steps + 1 if certificate.strict_terminal else lattice.steps
        step, node, gap = _worst_gap(gaps, span)
        if gap <= 0.0:
            msg = f"Strict ordering fails at step {step}, node {node} (gap {gap:.3e})"
            raise ComparisonViolation(msg, step=step, node=node, gap=gap)
        strict = True
    verdict = VERDICT_STRICT if strict else VERDICT_PASSED
    LOGGER.info(
        "Comparison %s vs %s: %s, min gap %.3e", driver1.name, driver2.name, verdict, min_gap
    )
    return ComparisonReport(
        min_gap=min_gap,
        jump_condition_min=jump_min,
        step_condition_min=step_min,
        representation_residual=residual,
        strict=strict,
        verdict=verdict,
    )


def _quotient(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    out = np.zeros_like(numerator, dtype=float)
    np.divide(numerator, denominator, out=out, where=denominator != 0.0)
    return out


def _require_same_lattice(sol1: Solution, sol2: Solution) -> None:
    if sol1.lattice is not sol2.lattice:
        msg = "Both solutions must live on the same lattice"
        raise GridError(msg)
    if not np.array_equal(sol1.bpath.increments, sol2.bpath.increments):
        msg = "Both solutions must share the Brownian path"
        raise GridError(msg)
    if not np.array_equal(sol1.clock.values, sol2.clock.values):
        msg = "Both solutions must share the clock"
        raise GridError(msg)


def _factors_along(factors: GammaFactors, strings: BranchStrings) -> np.ndarray:
    per_step = np.empty((strings.nodes.shape[0], strings.depth))
    for d in range(strings.depth):
        k = strings.start + d
        nodes = strings.nodes[:, d]
        per_step[:, d] = factors.continuous[k][nodes] * factors.jump[k][
            nodes, strings.branches[:, d]
        ]
    return per_step


def _represented(
    lattice: JumpLattice,
    clock: ClockA,
    bpath: BrownianPath,
    coeffs: LinearizedCoeffs,
    gamma: GammaFactors,
) -> list[np.ndarray]:
    dt = lattice.grid.dt
    values: list[np.ndarray] = [np.empty(0)] * (lattice.steps + 1)
    values[-1] = coeffs.xi_gap
    for k in range(lattice.steps - 1, -1, -1):
        children = lattice.child_values(values[k + 1], k)
        jump_part = (children * gamma.jump[k]) @ lattice.probabilities
        source = (
            coeffs.f_gap[k] * dt
            + coeffs.h_gap[k] * clock.increments[k]
            + coeffs.g_gap[k] * bpath.increments[k]
        )
        values[k] = gamma.continuous[k] * (jump_part + source)
    return values


def _worst_gap(gaps: list[np.ndarray], span: int) -> tuple[int, int, float]:
    best = (0, 0, np.inf)
    for k in range(span):
        node = int(np.argmin(gaps[k]))
        if gaps[k][node] < best[2]:
            best = (k, node, float(gaps[k][node]))
    return best

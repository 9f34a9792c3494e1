"""Driver and terminal specifications plus the named built-ins used by experiments."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any

import numpy as np

from .const import DRIVER_CHECK_TOL, LOGGER
from .exceptions import DriverError

if TYPE_CHECKING:
    from collections.abc import Callable, Mapping

    from .lattice import JumpLattice
    from .time_utils import ClockA, ClockProfile

    DriverF = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    DriverY = Callable[[float, np.ndarray], np.ndarray]
    GrowthFn = Callable[[float], float]
    TerminalFn = Callable[["TerminalState"], np.ndarray]

SPOT_CHECK_SAMPLES = 512


def _zero_f(_t: float, y: np.ndarray, _z: np.ndarray) -> np.ndarray:
    return np.zeros_like(y)


def _zero_y(_t: float, y: np.ndarray) -> np.ndarray:
    return np.zeros_like(y)


def _one(_t: float) -> float:
    return 1.0


@dataclass(frozen=True, slots=True)
class DriverSpec:
    """
    Coefficients f, h, g of the backward equation with their declared constants.

    All callables act on node vectors: ``y`` has shape (n,), ``z`` shape (n, m).
    ``g`` takes ``z`` only when ``g_uses_z`` is set.
    """

    name: str
    f: DriverF = _zero_f
    h: DriverY = _zero_y
    g: Callable[..., np.ndarray] = _zero_y
    f_growth: GrowthFn = _one
    h_growth: GrowthFn = _one
    g_growth: GrowthFn = _one
    lipschitz_k: float = 1.0
    alpha: float = 0.5
    beta1: float = 0.0
    beta2: float = -1.0
    lipschitz: bool = True
    z_free: bool = False
    g_uses_z: bool = False

    def __post_init__(self) -> None:
        """Validate the declared constants."""
        if self.lipschitz_k <= 0.0:
            msg = f"Driver {self.name}: K must be positive, got {self.lipschitz_k}"
            raise DriverError(msg)
        if self.lipschitz and not 0.0 < self.alpha < 1.0:
            msg = f"Driver {self.name}: alpha must lie in (0, 1), got {self.alpha}"
            raise DriverError(msg)

    @property
    def deterministic(self) -> bool:
        """True when f ignores z and g vanishes, so a constant xi gives an ODE in Y."""
        return self.z_free and self.g is _zero_y

    def f_value(self, t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Evaluate f and reject non-finite output."""
        return _finite(self.f(t, y, z), self.name, "f")

    def h_value(self, t: float, y: np.ndarray) -> np.ndarray:
        """Evaluate h and reject non-finite output."""
        return _finite(self.h(t, y), self.name, "h")

    def g_value(self, t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Evaluate g and reject non-finite output."""
        value = self.g(t, y, z) if self.g_uses_z else self.g(t, y)
        return _finite(value, self.name, "g")

    def check_growth(
        self, m: int, horizon: float, radius: float, rng: np.random.Generator
    ) -> float:
        """
        Spot-check |f| <= f_t + K(|y| + |z|) on random points of the box.

        Returns the largest observed excess (<= 0 when the bound holds).
        """
        t, y, z = _sample_box(m, horizon, radius, rng)
        excess = -np.inf
        for k in range(t.shape[0]):
            value = np.abs(self.f_value(t[k], y[k : k + 1], z[k : k + 1]))[0]
            bound = self.f_growth(t[k]) + self.lipschitz_k * (
                abs(y[k]) + np.linalg.norm(z[k])
            )
            excess = max(excess, float(value - bound))
        return excess

    def check_lipschitz(
        self, m: int, horizon: float, radius: float, rng: np.random.Generator
    ) -> float:
        """
        Spot-check the Lipschitz constant K of f in (y, z) on sampled pairs.

        Returns the largest observed difference quotient divided by K.
        """
        t, y1, z1 = _sample_box(m, horizon, radius, rng)
        _, y2, z2 = _sample_box(m, horizon, radius, rng)
        worst = 0.0
        for k in range(t.shape[0]):
            f1 = self.f_value(t[k], y1[k : k + 1], z1[k : k + 1])[0]
            f2 = self.f_value(t[k], y2[k : k + 1], z2[k : k + 1])[0]
            distance = abs(y1[k] - y2[k]) + np.linalg.norm(z1[k] - z2[k])
            if distance > 0.0:
                worst = max(worst, abs(f1 - f2) / distance)
        return worst / self.lipschitz_k

    def monotonicity_constants(
        self, m: int, horizon: float, radius: float, rng: np.random.Generator
    ) -> tuple[float, float]:
        """
        Estimate the one-sided constants of f and h in y on sampled pairs.

        Returns the largest (y - y')(f(y) - f(y'))/|y - y'|^2 and the same for h.
        The declared ``beta1``, ``beta2`` are not enforced.
        """
        t, y1, z = _sample_box(m, horizon, radius, rng)
        _, y2, _ = _sample_box(m, horizon, radius, rng)
        diff = y1 - y2
        keep = diff != 0.0
        f_quot = np.empty(t.shape[0])
        h_quot = np.empty(t.shape[0])
        for k in range(t.shape[0]):
            f1 = self.f_value(t[k], y1[k : k + 1], z[k : k + 1])[0]
            f2 = self.f_value(t[k], y2[k : k + 1], z[k : k + 1])[0]
            h1 = self.h_value(t[k], y1[k : k + 1])[0]
            h2 = self.h_value(t[k], y2[k : k + 1])[0]
            f_quot[k] = (f1 - f2) / diff[k] if keep[k] else -np.inf
            h_quot[k] = (h1 - h2) / diff[k] if keep[k] else -np.inf
        return float(f_quot.max()), float(h_quot.max())


@dataclass(frozen=True, slots=True, eq=False)
class TerminalState:
    """Terminal lattice state handed to terminal functions."""

    counts: np.ndarray
    levy: np.ndarray
    clock: float
    brownian: float


@dataclass(frozen=True, slots=True)
class TerminalSpec:
    """Terminal value xi as a function of the terminal lattice state."""

    name: str
    xi: TerminalFn

    def evaluate(self, lattice: JumpLattice, clock: ClockA, brownian: float) -> np.ndarray:
        """Return xi at every terminal node."""
        state = TerminalState(
            counts=lattice.states[-1],
            levy=lattice.levy_values(lattice.steps),
            clock=clock.terminal,
            brownian=brownian,
        )
        values = np.asarray(self.xi(state), dtype=float)
        values = np.broadcast_to(values, state.levy.shape).copy()
        return _finite(values, self.name, "xi")

    def weighted_integrability(
        self, lattice: JumpLattice, clock: ClockA, brownian: float, lam: float
    ) -> float:
        """E[exp(lam A_T) xi^2] over the terminal nodes."""
        values = self.evaluate(lattice, clock, brownian)
        weights = lattice.node_probabilities[-1]
        return float(np.exp(lam * clock.terminal) * (weights @ values**2))


def exponential_transform(
    driver: DriverSpec, terminal: TerminalSpec, lam: float, profile: ClockProfile
) -> tuple[DriverSpec, TerminalSpec]:
    """
    Return the data of (exp(lam A_t) Y_t, exp(lam A_t) Z_t).

    The new h carries the extra -lam * y term, shifting the h monotonicity
    constant by -lam.
    """

    def weight(t: float) -> float:
        return float(np.exp(lam * profile.evaluate(np.array([t]))[0]))

    def f(t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        w = weight(t)
        return w * driver.f(t, y / w, z / w)

    def h(t: float, y: np.ndarray) -> np.ndarray:
        w = weight(t)
        return w * driver.h(t, y / w) - lam * y

    def g(t: float, y: np.ndarray, *rest: np.ndarray) -> np.ndarray:
        w = weight(t)
        if driver.g_uses_z:
            return w * driver.g(t, y / w, rest[0] / w)
        return w * driver.g(t, y / w)

    def xi(state: TerminalState) -> np.ndarray:
        return np.exp(lam * state.clock) * terminal.xi(state)

    transformed = replace(
        driver,
        name=f"{driver.name}_exp{lam:g}",
        f=f,
        h=h,
        g=g,
        beta2=driver.beta2 - lam,
    )
    return transformed, TerminalSpec(name=f"{terminal.name}_exp{lam:g}", xi=xi)


def shifted(driver: DriverSpec, f_shift: float = 0.0, h_shift: float = 0.0) -> DriverSpec:
    """Return the driver with constants added to f and h."""

    def f(t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return driver.f(t, y, z) + f_shift

    def h(t: float, y: np.ndarray) -> np.ndarray:
        return driver.h(t, y) + h_shift

    return replace(
        driver,
        name=f"{driver.name}+{f_shift:g}",
        f=f,
        h=h,
        f_growth=lambda t: driver.f_growth(t) + abs(f_shift),
        h_growth=lambda t: driver.h_growth(t) + abs(h_shift),
    )


def zero_driver(_params: Mapping[str, Any] | None = None) -> DriverSpec:
    """f = g = h = 0."""
    return DriverSpec(name="zero", z_free=True)


def linear_driver(params: Mapping[str, Any] | None = None) -> DriverSpec:
    """f(t, y, z) = -r y."""
    r = float((params or {}).get("r", 1.0))
    return DriverSpec(
        name="linear",
        f=lambda _t, y, _z: -r * y,
        lipschitz_k=max(abs(r), 1e-12),
        beta1=-r,
        z_free=True,
    )


def clock_decay_driver(params: Mapping[str, Any] | None = None) -> DriverSpec:
    """h(t, y) = -q y, f = g = 0."""
    q = float((params or {}).get("q", 1.0))
    return DriverSpec(
        name="clock_decay",
        h=lambda _t, y: -q * y,
        lipschitz_k=max(abs(q), 1e-12),
        beta2=-q,
        z_free=True,
    )


def constant_g_driver(params: Mapping[str, Any] | None = None) -> DriverSpec:
    """g = c, f = h = 0."""
    c = float((params or {}).get("c", 1.0))
    return DriverSpec(
        name="constant_g",
        g=lambda _t, y: np.full_like(y, c),
        g_growth=lambda _t: max(abs(c), 1.0),
        z_free=True,
    )


def affine_driver(params: Mapping[str, Any] | None = None) -> DriverSpec:
    """f = a y + theta . z + c, h = b y + d, g = s y."""
    params = params or {}
    a = float(params.get("a", 0.0))
    theta = np.asarray(params.get("theta", [0.0]), dtype=float)
    c = float(params.get("c", 0.0))
    b = float(params.get("b", 0.0))
    d = float(params.get("d", 0.0))
    s = float(params.get("s", 0.0))

    def f(_t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return a * y + _dot(z, theta) + c

    return DriverSpec(
        name="affine",
        f=f,
        h=lambda _t, y: b * y + d,
        g=lambda _t, y: s * y,
        f_growth=lambda _t: max(abs(c), 1.0),
        h_growth=lambda _t: max(abs(d), 1.0),
        lipschitz_k=max(abs(a), float(np.abs(theta).sum()), abs(b), abs(s), 1e-12),
        beta1=a,
        beta2=b,
        z_free=not np.any(theta),
    )


def lipschitz_mix_driver(params: Mapping[str, Any] | None = None) -> DriverSpec:
    """Smooth nonlinear Lipschitz driver: f = -r y + s sin(y) + theta . tanh(z)."""
    params = params or {}
    r = float(params.get("r", 0.5))
    s = float(params.get("s", 0.3))
    theta = np.asarray(params.get("theta", [0.2]), dtype=float)
    q = float(params.get("q", 0.2))
    sigma = float(params.get("sigma", 0.1))

    def f(_t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return -r * y + s * np.sin(y) + _dot(np.tanh(z), theta)

    return DriverSpec(
        name="lipschitz_mix",
        f=f,
        h=lambda _t, y: -q * np.tanh(y),
        g=lambda _t, y: sigma * np.sin(y),
        lipschitz_k=max(abs(r) + abs(s), float(np.abs(theta).sum()), abs(q), abs(sigma)),
        beta1=-r + abs(s),
        z_free=not np.any(theta),
    )


def sqrt_capped_driver(_params: Mapping[str, Any] | None = None) -> DriverSpec:
    """f(y) = sqrt(min(|y|, 1)), continuous but not Lipschitz at 0."""
    return DriverSpec(
        name="sqrt_capped",
        f=lambda _t, y, _z: np.sqrt(np.minimum(np.abs(y), 1.0)),
        lipschitz=False,
        z_free=True,
    )


def sqrt_abs_driver(_params: Mapping[str, Any] | None = None) -> DriverSpec:
    """f(y) = sqrt(|y|); with xi = 0 the solution is not unique."""
    return DriverSpec(
        name="sqrt_abs",
        f=lambda _t, y, _z: np.sqrt(np.abs(y)),
        lipschitz=False,
        z_free=True,
    )


def constant_terminal(params: Mapping[str, Any] | None = None) -> TerminalSpec:
    """xi = c."""
    c = float((params or {}).get("c", 1.0))
    return TerminalSpec(name="constant", xi=lambda state: np.full_like(state.levy, c))


def affine_terminal(params: Mapping[str, Any] | None = None) -> TerminalSpec:
    """xi = c + l L_T + b B_T + a A_T."""
    params = params or {}
    c = float(params.get("c", 0.0))
    l_coef = float(params.get("l", 1.0))
    b = float(params.get("b", 0.0))
    a = float(params.get("a", 0.0))
    return TerminalSpec(
        name="affine",
        xi=lambda state: c + l_coef * state.levy + b * state.brownian + a * state.clock,
    )


def cosine_terminal(params: Mapping[str, Any] | None = None) -> TerminalSpec:
    """xi = c + amplitude * cos(w L_T)."""
    params = params or {}
    c = float(params.get("c", 0.0))
    amplitude = float(params.get("amplitude", 1.0))
    w = float(params.get("w", 1.0))
    return TerminalSpec(
        name="cosine", xi=lambda state: c + amplitude * np.cos(w * state.levy)
    )


DRIVERS: dict[str, Callable[[Mapping[str, Any] | None], DriverSpec]] = {
    "zero": zero_driver,
    "linear": linear_driver,
    "clock_decay": clock_decay_driver,
    "constant_g": constant_g_driver,
    "affine": affine_driver,
    "lipschitz_mix": lipschitz_mix_driver,
    "sqrt_capped": sqrt_capped_driver,
    "sqrt_abs": sqrt_abs_driver,
}

TERMINALS: dict[str, Callable[[Mapping[str, Any] | None], TerminalSpec]] = {
    "constant": constant_terminal,
    "affine": affine_terminal,
    "cosine": cosine_terminal,
}


def make_driver(name: str, params: Mapping[str, Any] | None = None) -> DriverSpec:
    """Build a named driver."""
    try:
        builder = DRIVERS[name]
    except KeyError as err:
        msg = f"Unknown driver {name!r}; known: {', '.join(sorted(DRIVERS))}"
        raise DriverError(msg) from err
    LOGGER.debug("Building driver %s with %s", name, params)
    return builder(params)


def make_terminal(name: str, params: Mapping[str, Any] | None = None) -> TerminalSpec:
    """Build a named terminal value."""
    try:
        builder = TERMINALS[name]
    except KeyError as err:
        msg = f"Unknown terminal {name!r}; known: {', '.join(sorted(TERMINALS))}"
        raise DriverError(msg) from err
    return builder(params)


def verify_declared_constants(
    driver: DriverSpec, m: int, horizon: float, radius: float, rng: np.random.Generator
) -> None:
    """
    Spot-check the declared growth bound and, for Lipschitz drivers, K.

    Raises DriverError when f exceeds f_t + K(|y| + |z|) or a difference
    quotient exceeds K on the sampled box.
    """
    excess = driver.check_growth(m, horizon, radius, rng)
    if excess > DRIVER_CHECK_TOL:
        msg = f"Driver {driver.name}: f exceeds its declared growth bound by {excess:.3g}"
        raise DriverError(msg)
    ratio = driver.check_lipschitz(m, horizon, radius, rng) if driver.lipschitz else 0.0
    if ratio > 1.0 + DRIVER_CHECK_TOL:
        msg = (
            f"Driver {driver.name}: observed Lipschitz constant is {ratio:.3g} K "
            f"with K = {driver.lipschitz_k}"
        )
        raise DriverError(msg)
    LOGGER.debug(
        "Driver %s: growth excess %.3g, Lipschitz ratio %.3g on radius %g",
        driver.name,
        excess,
        ratio,
        radius,
    )


def _dot(z: np.ndarray, theta: np.ndarray) -> np.ndarray:
    width = min(z.shape[1], theta.shape[0])
    return z[:, :width] @ theta[:width]


def _finite(values: np.ndarray, name: str, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        msg = f"Driver {name}: {what} returned non-finite values"
        raise DriverError(msg)
    return values


def _sample_box(
    m: int, horizon: float, radius: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = rng.uniform(0.0, horizon, SPOT_CHECK_SAMPLES)
    y = rng.uniform(-radius, radius, SPOT_CHECK_SAMPLES)
    z = rng.uniform(-radius, radius, (SPOT_CHECK_SAMPLES, m))
    return t, y, z

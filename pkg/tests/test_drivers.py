"""Tests for driver and terminal specifications."""

from __future__ import annotations

import numpy as np
import pytest

from gbdsde_lab.drivers import (
    DRIVERS,
    DriverSpec,
    exponential_transform,
    make_driver,
    make_terminal,
    shifted,
    verify_declared_constants,
)
from gbdsde_lab.exceptions import DriverError
from gbdsde_lab.lattice import build_lattice
from gbdsde_lab.levy_basis import JumpMeasure, teugels_basis
from gbdsde_lab.time_utils import ClockProfile, TimeGrid, clock_values


@pytest.fixture
def rng() -> np.random.Generator:
    """Deterministic generator for spot checks."""
    return np.random.default_rng(11)


def test_unknown_names() -> None:
    """Unknown drivers and terminals raise DriverError."""
    with pytest.raises(DriverError, match="known"):
        make_driver("quadratic")
    with pytest.raises(DriverError):
        make_terminal("step")


def test_declared_constants_are_validated() -> None:
    """K must be positive and alpha inside (0, 1) for Lipschitz drivers."""
    with pytest.raises(DriverError):
        DriverSpec(name="bad", lipschitz_k=0.0)
    with pytest.raises(DriverError):
        DriverSpec(name="bad", alpha=1.0)
    DriverSpec(name="fine", alpha=1.0, lipschitz=False)


def test_non_finite_output_is_rejected() -> None:
    """NaN from a driver is reported by name."""
    driver = DriverSpec(name="nan", f=lambda _t, y, _z: np.full_like(y, np.nan))

    with pytest.raises(DriverError, match="nan: f"):
        driver.f_value(0.0, np.zeros(2), np.zeros((2, 1)))


@pytest.mark.parametrize("name", sorted(DRIVERS))
def test_builtin_growth_bounds(name: str, rng: np.random.Generator) -> None:
    """Every built-in respects |f| <= f_t + K(|y| + |z|) on the box."""
    driver = make_driver(name)

    assert driver.check_growth(2, 1.0, 3.0, rng) <= 1e-12


@pytest.mark.parametrize("name", ["linear", "affine", "lipschitz_mix"])
def test_lipschitz_constants(name: str, rng: np.random.Generator) -> None:
    """Observed difference quotients stay below the declared K."""
    params = {"theta": [0.3, -0.2]} if name != "linear" else {"r": 2.0}
    driver = make_driver(name, params)

    assert driver.check_lipschitz(2, 1.0, 3.0, rng) <= 1.0 + 1e-12


def test_declared_constants_are_spot_checked(rng: np.random.Generator) -> None:
    """Built-ins pass; a loose growth bound or an understated K is rejected."""
    loose = DriverSpec(name="loose", f=lambda _t, y, _z: 3.0 * y, z_free=True)
    steep = DriverSpec(
        name="steep",
        f=lambda _t, y, _z: 2.0 * np.tanh(y),
        f_growth=lambda _t: 2.0,
        z_free=True,
    )

    for name in sorted(DRIVERS):
        verify_declared_constants(make_driver(name), 2, 1.0, 2.0, rng)
    with pytest.raises(DriverError, match="growth"):
        verify_declared_constants(loose, 2, 1.0, 2.0, rng)
    with pytest.raises(DriverError, match="Lipschitz"):
        verify_declared_constants(steep, 2, 1.0, 2.0, rng)



def test_monotonicity_constants(rng: np.random.Generator) -> None:
    """A linear f and h have exact one-sided constants."""
    driver = make_driver("affine", {"a": -0.7, "b": 0.4})

    beta1, beta2 = driver.monotonicity_constants(1, 1.0, 2.0, rng)

    assert beta1 == pytest.approx(-0.7)
    assert beta2 == pytest.approx(0.4)


def test_sqrt_drivers_are_not_lipschitz() -> None:
    """The continuous examples opt out of the Lipschitz checks."""
    for name in ("sqrt_capped", "sqrt_abs"):
        driver = make_driver(name)
        assert not driver.lipschitz
        assert driver.z_free
    capped = make_driver("sqrt_capped")
    values = capped.f_value(0.0, np.array([0.25, 4.0, -1.0]), np.zeros((3, 1)))
    np.testing.assert_allclose(values, [0.5, 1.0, 1.0])


def test_g_may_depend_on_z() -> None:
    """g receives z only when the flag is set."""
    driver = DriverSpec(name="gz", g=lambda _t, _y, z: 2.0 * z[:, 0], g_uses_z=True)

    values = driver.g_value(0.0, np.zeros(2), np.array([[1.0], [3.0]]))

    np.testing.assert_allclose(values, [2.0, 6.0])


def test_shifted_adds_constants() -> None:
    """Shifts move f and h and their growth functions."""
    driver = shifted(make_driver("linear"), f_shift=0.5, h_shift=-0.25)
    y = np.array([1.0, 2.0])

    np.testing.assert_allclose(driver.f_value(0.0, y, np.zeros((2, 1))), [-0.5, -1.5])
    np.testing.assert_allclose(driver.h_value(0.0, y), [-0.25, -0.25])
    assert driver.f_growth(0.0) == pytest.approx(1.5)


def test_exponential_transform_shifts_h() -> None:
    """The transformed h gains -lam y and beta2 drops by lam."""
    driver = make_driver("clock_decay", {"q": 0.5})
    terminal = make_terminal("constant", {"c": 2.0})
    profile = ClockProfile(kappa=1.0)

    new_driver, new_terminal = exponential_transform(driver, terminal, 0.3, profile)

    assert new_driver.beta2 == pytest.approx(driver.beta2 - 0.3)
    y = np.array([1.0])
    np.testing.assert_allclose(new_driver.h_value(0.0, y), [-0.5 - 0.3])
    grid = TimeGrid(1.0, 4)
    measure = JumpMeasure.from_pairs([(1.0, 1.0)])
    lattice = build_lattice(measure, teugels_basis(measure), grid)
    xi = new_terminal.evaluate(lattice, clock_values(profile, grid), 0.0)
    np.testing.assert_allclose(xi, 2.0 * np.exp(0.3))


def test_terminals_on_lattice() -> None:
    """Terminal values are evaluated per terminal node."""
    grid = TimeGrid(1.0, 5)
    measure = JumpMeasure.from_pairs([(1.0, 1.0)])
    lattice = build_lattice(measure, teugels_basis(measure), grid)
    clock = clock_values(ClockProfile(kappa=2.0), grid)

    affine = make_terminal("affine", {"c": 1.0, "l": 2.0, "b": 3.0, "a": 0.5})
    cosine = make_terminal("cosine", {"c": 1.0, "amplitude": 0.5, "w": np.pi})
    constant = make_terminal("constant", {"c": 0.25})

    levy = lattice.levy_values(5)
    np.testing.assert_allclose(
        affine.evaluate(lattice, clock, 0.1), 1.0 + 2.0 * levy + 0.3 + 1.0
    )
    np.testing.assert_allclose(
        cosine.evaluate(lattice, clock, 0.0), 1.0 + 0.5 * np.cos(np.pi * levy)
    )
    np.testing.assert_allclose(constant.evaluate(lattice, clock, 0.0), 0.25)
    weighted = constant.weighted_integrability(lattice, clock, 0.0, 1.0)
    assert weighted == pytest.approx(np.exp(2.0) * 0.0625)

"""Tests for the comparison checks, the Gamma factors and the representation."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
import pytest

from gbdsde_lab.comparison_lab import (
    check_jump_condition,
    compare,
    difference_quotients,
    doleans_exponential,
    gamma_factors,
    gamma_recursion_check,
    gamma_representation,
    representation_check,
    step_condition,
    telescoping_residual,
)
from gbdsde_lab.const import (
    GAMMA_EXPONENTIAL,
    GAMMA_SCHEME,
    VERDICT_INAPPLICABLE,
    VERDICT_PASSED,
    VERDICT_STRICT,
)
from gbdsde_lab.drivers import DriverSpec, make_driver, make_terminal
from gbdsde_lab.exceptions import ComparisonViolation, GridError
from gbdsde_lab.solver import Solution, solve_backward

if TYPE_CHECKING:
    from collections.abc import Callable

    from gbdsde_lab.drivers import TerminalSpec
    from gbdsde_lab.levy_basis import JumpMeasure

    from .conftest import LabSetup


def _solve(setup: LabSetup, driver: DriverSpec, terminal: TerminalSpec) -> Solution:
    return solve_backward(setup.lattice, driver, terminal, setup.bpath, setup.clock)


def _random_affine(rng: np.random.Generator, m: int) -> dict[str, float | list[float]]:
    return {
        "a": float(rng.uniform(-1.0, 1.0)),
        "theta": rng.uniform(-0.4, 0.4, m).tolist(),
        "c": float(rng.uniform(-0.5, 0.5)),
        "b": float(rng.uniform(-0.5, 0.5)),
        "d": float(rng.uniform(-0.5, 0.5)),
        "s": float(rng.uniform(-0.3, 0.3)),
    }


def _random_mix(rng: np.random.Generator, m: int) -> dict[str, float | list[float]]:
    return {
        "r": float(rng.uniform(0.0, 1.0)),
        "s": float(rng.uniform(-0.5, 0.5)),
        "theta": rng.uniform(-0.4, 0.4, m).tolist(),
        "q": float(rng.uniform(-0.3, 0.3)),
        "sigma": 0.2,
    }


@pytest.mark.parametrize("scenario", range(10))
@pytest.mark.parametrize("convention", [GAMMA_EXPONENTIAL, GAMMA_SCHEME])
def test_gamma_recursion_matches_closed_form(
    setup_factory: Callable[..., LabSetup],
    two_atoms: JumpMeasure,
    scenario: int,
    convention: str,
) -> None:
    """Gamma from the closed form satisfies Gamma_{k+1} = Gamma_k (1 + dX_k)."""
    rng = np.random.default_rng(100 + scenario)
    setup = setup_factory(two_atoms, 50, path_index=scenario)
    driver1 = make_driver("affine", _random_affine(rng, 2))
    driver2 = make_driver("affine", _random_affine(rng, 2))
    terminal1 = make_terminal("cosine", {"c": 1.0, "amplitude": 0.5})
    terminal2 = make_terminal("affine", {"c": 0.2, "l": 0.3})
    sol1 = _solve(setup, driver1, terminal1)
    sol2 = _solve(setup, driver2, terminal2)
    coeffs = difference_quotients(driver1, driver2, sol1, sol2)

    residual = gamma_recursion_check(
        coeffs,
        setup.lattice,
        setup.clock,
        setup.bpath,
        convention=convention,
        rng=np.random.default_rng(scenario),
    )

    assert residual <= 1e-12


@pytest.mark.parametrize("scenario", range(10))
def test_representation_is_exact_for_scheme_gamma(
    setup_factory: Callable[..., LabSetup], two_atoms: JumpMeasure, scenario: int
) -> None:
    """Y1 - Y2 equals its Gamma representation node by node."""
    rng = np.random.default_rng(200 + scenario)
    setup = setup_factory(two_atoms, 40, path_index=scenario)
    driver1 = make_driver("lipschitz_mix", _random_mix(rng, 2))
    driver2 = make_driver("lipschitz_mix", _random_mix(rng, 2))
    terminal1 = make_terminal("cosine", {"c": 1.0, "amplitude": 0.5, "w": 1.3})
    terminal2 = make_terminal("cosine", {"c": -0.5, "amplitude": 0.3})
    sol1 = _solve(setup, driver1, terminal1)
    sol2 = _solve(setup, driver2, terminal2)
    coeffs = difference_quotients(driver1, driver2, sol1, sol2)

    factors = gamma_factors(coeffs, setup.lattice, setup.clock, setup.bpath, GAMMA_SCHEME)

    assert representation_check(sol1, sol2, coeffs, factors) <= 1e-9
    assert telescoping_residual(coeffs, driver1, driver2, sol1, sol2) <= 1e-12


def test_string_representation_matches_root_gap(
    setup_factory: Callable[..., LabSetup], two_atoms: JumpMeasure
) -> None:
    """Exhaustive branch strings reproduce Y1_0 - Y2_0."""
    setup = setup_factory(two_atoms, 6)
    driver1 = make_driver("lipschitz_mix", {"theta": [0.3, 0.1]})
    driver2 = make_driver("affine", {"a": -0.5, "theta": [0.1, 0.0], "c": 0.2})
    terminal = make_terminal("cosine")
    sol1 = _solve(setup, driver1, terminal)
    sol2 = _solve(setup, driver2, make_terminal("constant", {"c": 0.1}))
    coeffs = difference_quotients(driver1, driver2, sol1, sol2)

    path = doleans_exponential(
        coeffs, setup.lattice, setup.clock, setup.bpath, convention=GAMMA_SCHEME
    )

    assert path.strings.exhaustive
    represented = gamma_representation(path, coeffs, setup.lattice, setup.clock, setup.bpath)
    assert represented == pytest.approx(sol1.y0 - sol2.y0, abs=1e-10)


def test_exponential_gamma_is_not_exact(
    setup_factory: Callable[..., LabSetup],
    two_atoms: JumpMeasure,
    caplog: pytest.LogCaptureFixture,
) -> None:
    """The continuous-time Gamma only approximates the discrete representation."""
    caplog.set_level(logging.WARNING)
    setup = setup_factory(two_atoms, 20)
    driver1 = make_driver("affine", {"a": -1.0, "c": 0.5})
    driver2 = make_driver("affine", {"a": -1.0})
    terminal = make_terminal("constant", {"c": 1.0})
    sol1 = _solve(setup, driver1, terminal)
    sol2 = _solve(setup, driver2, terminal)
    coeffs = difference_quotients(driver1, driver2, sol1, sol2)
    factors = gamma_factors(coeffs, setup.lattice, setup.clock, setup.bpath, GAMMA_EXPONENTIAL)

    residual = representation_check(sol1, sol2, coeffs, factors)

    assert 1e-9 < residual < 5e-2
    assert "first-order" in caplog.text


@pytest.mark.parametrize("scenario", range(20))
def test_ordered_data_give_ordered_solutions(
    setup_factory: Callable[..., LabSetup], two_atoms: JumpMeasure, scenario: int
) -> None:
    """Ordered, z-free data give Y1 >= Y2 everywhere, strictly when xi is strict."""
    rng = np.random.default_rng(300 + scenario)
    setup = setup_factory(two_atoms, 30, path_index=scenario)
    a = float(rng.uniform(-1.0, 1.0))
    b = float(rng.uniform(-0.5, 0.5))
    s = float(rng.uniform(-0.3, 0.3))
    c2 = float(rng.uniform(-0.5, 0.5))
    d2 = float(rng.uniform(-0.5, 0.5))
    driver1 = make_driver(
        "affine", {"a": a, "b": b, "s": s, "c": c2 + rng.uniform(0, 0.5), "d": d2 + 0.1}
    )
    driver2 = make_driver("affine", {"a": a, "b": b, "s": s, "c": c2, "d": d2})
    l_coef = float(rng.uniform(-1.0, 1.0))
    terminal1 = make_terminal("affine", {"c": 0.3, "l": l_coef})
    terminal2 = make_terminal("affine", {"c": 0.0, "l": l_coef})

    report = compare(
        _solve(setup, driver1, terminal1), _solve(setup, driver2, terminal2), driver1, driver2
    )

    assert report.verdict == VERDICT_STRICT
    assert report.strict
    assert report.min_gap > 0.0
    assert report.jump_condition_min == pytest.approx(1.0)
    assert report.step_condition_min > 0.0
    assert report.representation_residual <= 1e-9


def test_equal_data_pass_without_strictness(
    setup_factory: Callable[..., LabSetup], two_atoms: JumpMeasure
) -> None:
    """Identical problems are ordered but not strictly."""
    setup = setup_factory(two_atoms, 10)
    driver = make_driver("affine", {"a": -0.5, "theta": [0.2, 0.1]})
    terminal = make_terminal("cosine")
    sol = _solve(setup, driver, terminal)

    report = compare(sol, _solve(setup, driver, terminal), driver, driver)

    assert report.verdict == VERDICT_PASSED
    assert report.min_gap == pytest.approx(0.0, abs=1e-12)


def test_adversarial_beta_is_inapplicable(
    setup_factory: Callable[..., LabSetup], single_atom: JumpMeasure
) -> None:
    """A strongly negative beta breaks the jump condition and voids the verdict."""
    setup = setup_factory(single_atom, 10)
    driver1 = make_driver("affine", {"theta": [-5.0]})
    driver2 = make_driver("affine", {"theta": [-5.0], "c": -0.1})
    sol1 = _solve(setup, driver1, make_terminal("affine", {"c": 1.0, "l": 2.0}))
    sol2 = _solve(setup, driver2, make_terminal("affine", {"c": 0.0, "l": 1.0}))

    report = compare(sol1, sol2, driver1, driver2)

    assert report.verdict == VERDICT_INAPPLICABLE
    assert "jump condition" in report.reason
    assert report.jump_condition_min < 0.0
    coeffs = difference_quotients(driver1, driver2, sol1, sol2)
    ok, minimum = check_jump_condition(coeffs, setup.lattice)
    assert not ok
    assert minimum == pytest.approx(report.jump_condition_min)
    path = doleans_exponential(coeffs, setup.lattice, setup.clock, setup.bpath)
    assert path.strings.exhaustive
    assert not path.positive


def test_unordered_data_are_inapplicable(
    setup_factory: Callable[..., LabSetup], two_atoms: JumpMeasure
) -> None:
    """xi1 < xi2 somewhere voids the verdict."""
    setup = setup_factory(two_atoms, 10)
    driver = make_driver("linear")
    sol1 = _solve(setup, driver, make_terminal("constant", {"c": 0.0}))
    sol2 = _solve(setup, driver, make_terminal("constant", {"c": 1.0}))

    report = compare(sol1, sol2, driver, driver)

    assert report.verdict == VERDICT_INAPPLICABLE
    assert report.reason == "data are not ordered"


def test_g_depending_on_z_is_inapplicable(
    setup_factory: Callable[..., LabSetup], two_atoms: JumpMeasure
) -> None:
    """The comparison does not cover g(t, y, z)."""
    setup = setup_factory(two_atoms, 10)
    driver = DriverSpec(name="gz", g=lambda _t, _y, z: 0.1 * z[:, 0], g_uses_z=True)
    sol1 = _solve(setup, driver, make_terminal("constant", {"c": 1.0}))
    sol2 = _solve(setup, driver, make_terminal("constant", {"c": 0.5}))

    report = compare(sol1, sol2, driver, driver)

    assert report.verdict == VERDICT_INAPPLICABLE
    assert report.reason == "g depends on z"


def test_reversed_solutions_raise_violation(
    setup_factory: Callable[..., LabSetup], two_atoms: JumpMeasure
) -> None:
    """Ordered data with Y1 < Y2 is a comparison violation."""
    setup = setup_factory(two_atoms, 10)
    driver1 = make_driver("affine", {"a": -1.0, "c": 0.5})
    driver2 = make_driver("affine", {"a": -1.0})
    terminal = make_terminal("constant", {"c": 1.0})
    upper = _solve(setup, driver1, terminal)
    lower = _solve(setup, driver2, terminal)

    with pytest.raises(ComparisonViolation) as excinfo:
        compare(lower, upper, driver1, driver2)

    assert excinfo.value.gap < 0.0
    assert excinfo.value.step < 10


def test_step_condition_value(
    setup_factory: Callable[..., LabSetup], single_atom: JumpMeasure
) -> None:
    """For affine f the step condition is 1 - a dt."""
    setup = setup_factory(single_atom, 10)
    driver1 = make_driver("affine", {"a": 2.0, "c": 0.5})
    driver2 = make_driver("affine", {"a": 2.0})
    terminal = make_terminal("constant", {"c": 1.0})
    sol1 = _solve(setup, driver1, terminal)
    sol2 = _solve(setup, driver2, terminal)
    coeffs = difference_quotients(driver1, driver2, sol1, sol2)

    value = step_condition(coeffs, setup.lattice, setup.clock, setup.bpath)

    assert value == pytest.approx(1.0 - 2.0 * 0.1)


def test_solutions_must_share_lattice(
    setup_factory: Callable[..., LabSetup], single_atom: JumpMeasure
) -> None:
    """Solutions from different lattices cannot be compared."""
    driver = make_driver("zero")
    terminal = make_terminal("constant")
    sol1 = _solve(setup_factory(single_atom, 10), driver, terminal)
    sol2 = _solve(setup_factory(single_atom, 10), driver, terminal)

    with pytest.raises(GridError):
        difference_quotients(driver, driver, sol1, sol2)


def test_unknown_gamma_convention(
    setup_factory: Callable[..., LabSetup], single_atom: JumpMeasure
) -> None:
    """Only the two conventions exist."""
    setup = setup_factory(single_atom, 5)
    driver = make_driver("zero")
    sol = _solve(setup, driver, make_terminal("constant"))
    coeffs = difference_quotients(driver, driver, sol, sol)

    with pytest.raises(GridError):
        gamma_factors(coeffs, setup.lattice, setup.clock, setup.bpath, "ito")


def test_gamma_starts_at_one_on_the_horizon(
    setup_factory: Callable[..., LabSetup], single_atom: JumpMeasure
) -> None:
    """Gamma_{s, s} = 1."""
    setup = setup_factory(single_atom, 5)
    driver = make_driver("linear")
    sol = _solve(setup, driver, make_terminal("cosine"))
    coeffs = difference_quotients(driver, driver, sol, sol)

    path = doleans_exponential(coeffs, setup.lattice, setup.clock, setup.bpath, s=5)

    assert path.values.tolist() == [[1.0]]
    assert path.start == 5

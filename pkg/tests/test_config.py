"""Tests for experiment config loading and validation."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Any

import pytest

from gbdsde_lab.config import coerce_threads, load_config, parse_config
from gbdsde_lab.const import DEFAULT_SEED, DEFAULT_STEPS, DOMAIN, MIN_ENSEMBLE
from gbdsde_lab.exceptions import ConfigInvalid

if TYPE_CHECKING:
    from collections.abc import Mapping

EXAMPLE = Path(__file__).parent.parent / "config" / "experiment.yaml"


def _lab(conf: Mapping[str, Any]) -> dict[str, Any]:
    return {DOMAIN: dict(conf)}


def test_defaults() -> None:
    """An empty config yields the default experiment."""
    config = load_config(None)

    assert config.measure.m == 2
    assert config.grid.steps == DEFAULT_STEPS
    assert config.seed == DEFAULT_SEED
    assert config.simulate.brackets == ((1, 1),)
    assert config.solve.driver.name == "linear"
    assert config.ladder.rungs is None
    assert config.compare.driver1.params == {"a": -1.0, "c": 0.5}
    assert config.tolerances.solver_options() == {"tol": 1e-12, "max_iterations": 200}


def test_hash_is_stable_and_tracks_seed() -> None:
    """Equal documents hash equally; a new seed changes the hash."""
    first = load_config(None)
    second = parse_config(_lab({}))

    assert len(first.config_hash) == 64
    assert first.config_hash == second.config_hash
    reseeded = first.with_seed(5)
    assert reseeded.seed == 5
    assert reseeded.config_hash != first.config_hash
    assert first.with_seed(None) is first


def test_example_file_loads() -> None:
    """The shipped example experiment is valid."""
    config = load_config(EXAMPLE)

    assert config.solve.driver.name == "lipschitz_mix"
    assert config.solve.sweep == (20, 40, 80)
    assert config.ladder.direction == "both"
    assert config.ladder.rungs == (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    assert config.simulate.brackets == ((1, 1), (1, 2), (2, 2))


def test_string_selection() -> None:
    """A bare name selects a driver with default parameters."""
    config = parse_config(_lab({"solve": {"driver": "affine"}}))

    assert config.solve.driver.name == "affine"
    assert config.solve.driver.params == {}


def test_paths_are_clamped() -> None:
    """Ensembles smaller than the minimum are raised to it."""
    config = parse_config(_lab({"simulate": {"paths": 5}}))

    assert config.simulate.paths == MIN_ENSEMBLE


@pytest.mark.parametrize(
    ("document", "location"),
    [
        ({}, "gbdsde_lab"),
        (_lab({"grid": {"steps": "abc"}}), "gbdsde_lab.grid.steps"),
        (_lab({"measure": [{"size": 0.0, "intensity": 1.0}]}), "gbdsde_lab.measure"),
        (
            _lab(
                {
                    "measure": [
                        {"size": 1.0, "intensity": 1.0},
                        {"size": 1.0, "intensity": 0.5},
                    ]
                }
            ),
            "gbdsde_lab.measure",
        ),
        (_lab({"solve": {"driver": "quadratic"}}), "gbdsde_lab.solve.driver.name"),
        (_lab({"solve": {"sweep": [1]}}), "gbdsde_lab.solve.sweep"),
        (_lab({"ladder": {"rungs": [0.5, 1.0]}}), "gbdsde_lab.ladder.rungs"),
        (_lab({"ladder": {"rungs": [2.0, 2.0]}}), "gbdsde_lab.ladder.rungs"),
        (_lab({"simulate": {"brackets": [[1, 3]]}}), "gbdsde_lab.simulate.brackets"),
        (
            _lab({"clock": {"profile": "table", "table": [[0.5, 0.0], [1.0, 1.0]]}}),
            "gbdsde_lab.clock",
        ),
        (
            _lab({"clock": {"profile": "table", "table": [[0.0, 0.0], [0.5, 1.0]]}}),
            "gbdsde_lab.clock",
        ),
    ],
)
def test_invalid_configs(document: dict[str, Any], location: str) -> None:
    """Invalid documents name the failing location."""
    with pytest.raises(ConfigInvalid) as excinfo:
        parse_config(document)

    assert excinfo.value.location == location


def test_too_few_steps_names_the_minimum() -> None:
    """sum(lambda) T = 30 needs at least 31 steps."""
    document = _lab(
        {"measure": [{"size": 1.0, "intensity": 30.0}], "grid": {"steps": 20}}
    )

    with pytest.raises(ConfigInvalid, match="31 steps") as excinfo:
        parse_config(document)

    assert excinfo.value.location == "gbdsde_lab.grid.steps"


def test_invalid_yaml(tmp_path: Path) -> None:
    """Malformed YAML is reported against the file."""
    path = tmp_path / "broken.yaml"
    path.write_text("gbdsde_lab: [unclosed\n", encoding="utf-8")

    with pytest.raises(ConfigInvalid, match="Invalid YAML") as excinfo:
        load_config(path)

    assert excinfo.value.location == str(path)


def test_missing_file(tmp_path: Path) -> None:
    """An unreadable file is a config error."""
    with pytest.raises(ConfigInvalid, match="Cannot read"):
        load_config(tmp_path / "missing.yaml")


@pytest.mark.parametrize(
    ("value", "expected"),
    [(None, 4), (1, 1), (8, 8), (0, 1), (-3, 1), (1000, 64), ("x", 4), ("12", 12)],
)
def test_coerce_threads(value: Any, expected: int) -> None:
    """Worker counts fall back to the default and are clamped to 1..64."""
    assert coerce_threads(value) == expected

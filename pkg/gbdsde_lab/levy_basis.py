"""Power moments and the orthonormal polynomial basis behind the Teugels martingales."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import linalg

from .const import DEFAULT_COND_MAX, LOGGER
from .exceptions import BasisIndexError, InvalidMeasureError, NearSingularError

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping


@dataclass(frozen=True, slots=True)
class JumpAtom:
    """One jump size of the Levy measure with its intensity per unit time."""

    size: float
    intensity: float


@dataclass(frozen=True, slots=True)
class JumpMeasure:
    """
    Pure-jump Levy measure with finitely many atoms.

    The continuous Gaussian part is fixed to zero, so the measure is fully
    described by its atoms.
    """

    atoms: tuple[JumpAtom, ...]

    def __post_init__(self) -> None:
        """Validate the atom invariants."""
        if not self.atoms:
            msg = "A jump measure needs at least one atom"
            raise InvalidMeasureError(msg)
        sizes = [atom.size for atom in self.atoms]
        for atom in self.atoms:
            if not np.isfinite(atom.size) or atom.size == 0.0:
                msg = f"Jump sizes must be finite and nonzero, got {atom.size}"
                raise InvalidMeasureError(msg)
            if not np.isfinite(atom.intensity) or atom.intensity <= 0.0:
                msg = f"Intensities must be finite and positive, got {atom.intensity}"
                raise InvalidMeasureError(msg)
        if len(set(sizes)) != len(sizes):
            msg = f"Jump sizes must be pairwise distinct, got {sizes}"
            raise InvalidMeasureError(msg)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> JumpMeasure:
        """Build a measure from (size, intensity) pairs."""
        return cls(tuple(JumpAtom(float(a), float(lam)) for a, lam in pairs))

    @classmethod
    def from_records(cls, records: Iterable[Mapping[str, Any]]) -> JumpMeasure:
        """Build a measure from config records with ``size`` and ``intensity``."""
        return cls.from_pairs((rec["size"], rec["intensity"]) for rec in records)

    @property
    def m(self) -> int:
        """Number of distinct jump sizes."""
        return len(self.atoms)

    @property
    def sizes(self) -> np.ndarray:
        """Jump sizes a_k."""
        return np.array([atom.size for atom in self.atoms], dtype=float)

    @property
    def intensities(self) -> np.ndarray:
        """Intensities lambda_k."""
        return np.array([atom.intensity for atom in self.atoms], dtype=float)

    @property
    def total_intensity(self) -> float:
        """Total jump intensity of the measure."""
        return float(self.intensities.sum())

    def scaled(self, factor: float) -> JumpMeasure:
        """Return the measure with every intensity multiplied by ``factor``."""
        return JumpMeasure(
            tuple(JumpAtom(atom.size, atom.intensity * factor) for atom in self.atoms)
        )

    def as_records(self) -> list[dict[str, float]]:
        """Return the measure as config records."""
        return [{"size": a.size, "intensity": a.intensity} for a in self.atoms]


@dataclass(frozen=True, slots=True, eq=False)
class PowerMomentTable:
    """E[L_1^{(i)}] for i = 1..max_order, stored at position i - 1."""

    moments: np.ndarray

    @property
    def max_order(self) -> int:
        """Highest tabulated power."""
        return int(self.moments.shape[0])

    def order(self, i: int) -> float:
        """Return E[L_1^{(i)}]."""
        if not 1 <= i <= self.max_order:
            msg = f"Moment order {i} outside 1..{self.max_order}"
            raise BasisIndexError(msg)
        return float(self.moments[i - 1])


@dataclass(frozen=True, slots=True, eq=False)
class OrthoBasis:
    """
    Orthonormal polynomials q_i(x) = sum_k c_{i,k} x^{k-1} against x^2 nu(dx).

    ``coeffs[i - 1, k - 1]`` holds c_{i,k}; the matrix is lower triangular
    with a positive diagonal.
    """

    coeffs: np.ndarray
    measure_weights: tuple[tuple[float, float], ...] = field(default=())

    @property
    def m(self) -> int:
        """Number of basis polynomials."""
        return int(self.coeffs.shape[0])

    def q(self, i: int, x: float | np.ndarray) -> float | np.ndarray:
        """Evaluate q_i at ``x``."""
        return eval_q(self, i, x)

    def gram_residual(self) -> float:
        """Max deviation of the re-integrated inner products from the identity."""
        if not self.measure_weights:
            msg = "Basis was built without measure weights"
            raise InvalidMeasureError(msg)
        points = np.array([p for p, _ in self.measure_weights])
        weights = np.array([w for _, w in self.measure_weights])
        values = _evaluate_all(self.coeffs, points)
        inner = values.T @ (weights[:, None] * values)
        return float(np.max(np.abs(inner - np.eye(self.m))))


def power_moments(measure: JumpMeasure, max_order: int) -> PowerMomentTable:
    """
    Tabulate E[L_1^{(i)}] = sum_k lambda_k a_k^i for i = 1..max_order.

    :param measure: The jump measure.
    :type measure: JumpMeasure
    :param max_order: Highest power to tabulate, at least 1.
    :type max_order: int
    :return: The moment table.
    :rtype: PowerMomentTable
    """
    if max_order < 1:
        msg = f"max_order must be at least 1, got {max_order}"
        raise InvalidMeasureError(msg)
    if max_order < 2 * measure.m:
        LOGGER.debug(
            "Moment table of order %d is shorter than 2m = %d", max_order, 2 * measure.m
        )
    powers = np.arange(1, max_order + 1)
    table = measure.sizes[None, :] ** powers[:, None]
    return PowerMomentTable(moments=table @ measure.intensities)


def gram_matrix(
    measure: JumpMeasure, cond_max: float = DEFAULT_COND_MAX
) -> np.ndarray:
    """
    Return G[j, k] = integral of x^{j+k} against mu(dx) = x^2 nu(dx), j, k = 0..m-1.

    Raises NearSingularError when the condition number exceeds ``cond_max``.
    """
    points, weights = _support(measure)
    vander = np.vander(points, measure.m, increasing=True)
    gram = vander.T @ (weights[:, None] * vander)
    gram = 0.5 * (gram + gram.T)
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > cond_max:
        msg = (
            f"Gram matrix condition number {condition:.3e} exceeds {cond_max:.1e}; "
            "jump sizes are too close together"
        )
        raise NearSingularError(msg, condition)
    return gram


def orthonormalize(
    gram: np.ndarray,
    measure_weights: Iterable[tuple[float, float]] = (),
) -> OrthoBasis:
    """
    Orthonormalize 1, x, ..., x^{m-1} given their Gram matrix.

    The coefficients are the inverse of the lower Cholesky factor, so the
    leading coefficients are positive. One refinement pass re-factors the
    residual inner-product matrix; when ``measure_weights`` is given the
    residual is re-integrated at the atoms.

    Parameters
    ----------
    gram : np.ndarray
        Symmetric positive definite Gram matrix.
    measure_weights : Iterable[tuple[float, float]]
        Optional (point, weight) pairs of the discrete measure.

    Returns
    -------
    OrthoBasis
        Lower-triangular coefficients and the measure weights.

    """
    gram = np.asarray(gram, dtype=float)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:  # noqa: PLR2004
        msg = f"Gram matrix must be square, got shape {gram.shape}"
        raise InvalidMeasureError(msg)
    if not np.allclose(gram, gram.T, rtol=1e-12, atol=0.0):
        msg = "Gram matrix must be symmetric"
        raise InvalidMeasureError(msg)
    weights = tuple((float(p), float(w)) for p, w in measure_weights)
    coeffs = _inverse_cholesky(gram)

    if weights:
        points = np.array([p for p, _ in weights])
        mass = np.array([w for _, w in weights])
        values = _evaluate_all(coeffs, points)
        residual = values.T @ (mass[:, None] * values)
    else:
        residual = coeffs @ gram @ coeffs.T
    residual = 0.5 * (residual + residual.T)
    coeffs = np.tril(_inverse_cholesky(residual) @ coeffs)
    return OrthoBasis(coeffs=coeffs, measure_weights=weights)


def teugels_basis(
    measure: JumpMeasure, cond_max: float = DEFAULT_COND_MAX
) -> OrthoBasis:
    """Build the orthonormal basis for a measure in one call."""
    points, weights = _support(measure)
    basis = orthonormalize(
        gram_matrix(measure, cond_max), measure_weights=zip(points, weights, strict=True)
    )
    LOGGER.debug(
        "Built Teugels basis for m=%d, diagonal %s", basis.m, np.diag(basis.coeffs)
    )
    return basis


def eval_q(basis: OrthoBasis, i: int, x: float | np.ndarray) -> float | np.ndarray:
    """Evaluate q_i(x) by Horner's rule; ``i`` is 1-based."""
    if not 1 <= i <= basis.m:
        msg = f"Polynomial index {i} outside 1..{basis.m}"
        raise BasisIndexError(msg)
    coefficients = basis.coeffs[i - 1, :i]
    result = np.polynomial.polynomial.polyval(x, coefficients)
    return float(result) if np.ndim(result) == 0 else result


def _support(measure: JumpMeasure) -> tuple[np.ndarray, np.ndarray]:
    sizes = measure.sizes
    return sizes, sizes**2 * measure.intensities


def _evaluate_all(coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Return values[r, i] = q_{i+1}(points[r])."""
    vander = np.vander(points, coeffs.shape[0], increasing=True)
    return vander @ coeffs.T


def _inverse_cholesky(matrix: np.ndarray) -> np.ndarray:
    try:
        lower = linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError as err:
        msg = "Gram matrix is not positive definite"
        raise InvalidMeasureError(msg) from err
    identity = np.eye(matrix.shape[0])
    return linalg.solve_triangular(lower, identity, lower=True)

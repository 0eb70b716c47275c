"""Sensor pixel-integration sampling and its inversion.

A sensor pixel integrates the band-limited image over its unit square,
while the ideal samples are point values at pixel centers. Expanding the
image in its Whittaker-Shannon series turns the pixel integral into a
separable linear map::

    sensed = R @ ideal @ R,     R[m, i] = integral of sinc(x - i) over |x - m| < 1/2

``R`` is symmetric Toeplitz with lag profile
``R(d) = (Si(pi (d + 1/2)) - Si(pi (d - 1/2))) / pi``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .grid import ScalarField

__all__ = [
    "SamplingMatrix",
    "SamplingError",
    "BorderWarning",
    "sine_integral",
    "r_lag_profile",
    "build_r_matrix",
    "sampling_matrix_from_values",
    "sensor_sample",
    "correct_sampling",
    "border_energy_fraction",
]

CONDITION_LIMIT = 1e12


class SamplingError(ValueError):
    pass


class BorderWarning(UserWarning):
    """The image carries non-negligible flux near its border."""


def sine_integral(z):
    """``Si(z)``, the integral of ``sin(t)/t`` from 0 to ``z``."""
    si, _ = scipy.special.sici(z)
    return si


def r_lag_profile(max_lag: int) -> np.ndarray:
    """``R(d)`` for ``d = 0 .. max_lag``."""
    d = np.arange(max_lag + 1, dtype=np.float64)
    return (sine_integral(np.pi * (d + 0.5)) - sine_integral(np.pi * (d - 0.5))) / np.pi


@dataclass(frozen=True)
class SamplingMatrix:
    """Symmetric Toeplitz sampling matrix of order ``size`` with a cached LU."""

    size: int
    values: np.ndarray = field(repr=False)
    condition: float = field(repr=False)
    _lu: tuple = field(repr=False, compare=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(self._lu, rhs)


def build_r_matrix(size: int) -> SamplingMatrix:
    size = int(size)
    if size < 1:
        raise ValueError("size must be >= 1")
    return sampling_matrix_from_values(scipy.linalg.toeplitz(r_lag_profile(size - 1)))


def sampling_matrix_from_values(values) -> SamplingMatrix:
    """Factor a square sampling matrix, e.g. one loaded from a cache."""
    values = np.array(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"sampling matrix must be square, got {values.shape}")
    values.setflags(write=False)
    size = values.shape[0]
    lu = scipy.linalg.lu_factor(values)
    # 1-norm condition estimate from the LU factors; avoids an O(N^3) SVD
    rcond, _ = scipy.linalg.lapack.dgecon(lu[0], np.abs(values).sum(axis=0).max(), norm="1")
    cond = 1.0 / rcond if rcond > 0 else np.inf
    return SamplingMatrix(size, values, cond, lu)


def _pair(R, shape):
    """Row and column matrices for an image of ``shape``."""
    if isinstance(R, SamplingMatrix):
        R_rows = R_cols = R
    else:
        R_rows, R_cols = R
    if (R_rows.size, R_cols.size) != tuple(shape):
        raise SamplingError(
            f"image is {shape[1]}x{shape[0]} but R is "
            f"{R_cols.size} (cols) x {R_rows.size} (rows)")
    return R_rows, R_cols


def border_energy_fraction(field: ScalarField, ring: int = 2) -> float:
    """Fraction of total absolute flux in the outer ``ring`` pixels."""
    data = np.abs(field.data)
    total = data.sum()
    if total == 0:
        return 0.0
    inner = data[ring:-ring, ring:-ring].sum() if min(data.shape) > 2 * ring else 0.0
    return float((total - inner) / total)


def _check_border(field, ring, limit):
    frac = border_energy_fraction(field, ring)
    if frac > limit:
        warnings.warn(f"outer {ring}-pixel ring holds {frac:.3g} of the flux; "
                      "sampling correction assumes a border-quiet image",
                      BorderWarning, stacklevel=3)


def sensor_sample(ideal: ScalarField, R, *, border_ring: int = 2,
                  border_limit: float = 1e-6) -> ScalarField:
    """Pixel-integrated image ``R_rows @ I @ R_cols`` from impulse samples ``I``.

    ``R`` is one :class:`SamplingMatrix` for square images or a
    ``(R_rows, R_cols)`` pair.
    """
    R_rows, R_cols = _pair(R, ideal.shape)
    _check_border(ideal, border_ring, border_limit)
    return ScalarField(R_rows.values @ ideal.data @ R_cols.values)


def correct_sampling(sensed: ScalarField, R, *, border_ring: int = 2,
                     border_limit: float = 1e-6) -> ScalarField:
    """Recover impulse samples ``R^-1 @ sensed @ R^-1`` by two linear solves."""
    R_rows, R_cols = _pair(R, sensed.shape)
    for mat in {id(R_rows): R_rows, id(R_cols): R_cols}.values():
        if not np.isfinite(mat.condition) or mat.condition > CONDITION_LIMIT:
            raise SamplingError(
                f"sampling matrix of order {mat.size} is ill-conditioned "
                f"(cond={mat.condition:.3g})")
    _check_border(sensed, border_ring, border_limit)
    left = R_rows.solve(sensed.data)
    # R is symmetric, so X @ R^-1 = (R^-1 @ X.T).T
    return ScalarField(R_cols.solve(left.T).T)

"""
Truncated power series about 0 and coefficient recovery by circle sampling.

.. doctest::

    >>> one_plus = TruncatedSeries([1.0, 1.0, 0.0, 0.0, 0.0])
    >>> one_minus = TruncatedSeries([1.0, -1.0, 0.0, 0.0, 0.0])
    >>> ser_mul(one_plus, one_minus).coeffs.tolist()
    [1.0, 0.0, -1.0, 0.0, 0.0]
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Any
from typing import Callable
from typing import Optional
from typing import Tuple
from typing import Union

import numpy as np
import numpy.typing as npt
from numpy.polynomial import polynomial

from ._kernels import kahan_convolve
from .artifacts import render_csv
from .errors import ModelError

__all__ = [
    "TruncatedSeries",
    "CauchyExtraction",
    "AliasWarning",
    "InvalidSampling",
    "ser_mul",
    "ser_eval",
    "ser_eval_circle",
    "cauchy_extract",
    "coefficients_from_samples",
    "sampling_size",
]

LOGGER = logging.getLogger(__name__)

ALIAS_THRESHOLD = 1e-12

Evaluator = Callable[[npt.NDArray[np.complex128]], npt.ArrayLike]


class AliasWarning(UserWarning):
    """Wrap-around of high-order content into the extracted coefficients."""


class InvalidSampling(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class TruncatedSeries:
    """
    Coefficients ``a_0..a_N`` of a power series, exact modulo ``s**(N+1)``.

    The coefficient array is copied on construction and read-only.
    """

    coeffs: npt.NDArray[Any]

    def __post_init__(self) -> None:
        array = np.array(self.coeffs, copy=True)
        if array.ndim != 1 or array.shape[0] == 0:
            raise ModelError("a truncated series needs a non-empty one-dimensional coefficient array")
        if not np.iscomplexobj(array):
            array = array.astype(np.float64)
        array.setflags(write=False)
        object.__setattr__(self, "coeffs", array)

    @classmethod
    def constant(cls, value: complex, order: int) -> "TruncatedSeries":
        coeffs = np.zeros(order + 1, dtype=np.result_type(value, np.float64))
        coeffs[0] = value
        return cls(coeffs)

    @classmethod
    def unit(cls, order: int) -> "TruncatedSeries":
        return cls.constant(1.0, order)

    @classmethod
    def monomial(cls, power: int, order: int) -> "TruncatedSeries":
        coeffs = np.zeros(order + 1)
        if power <= order:
            coeffs[power] = 1.0
        return cls(coeffs)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def __getitem__(self, index: Any) -> Any:
        return self.coeffs[index]

    def __call__(self, s: npt.ArrayLike) -> Any:
        return ser_eval(self, s)[0]

    def _aligned(self, other: "TruncatedSeries") -> Tuple[np.ndarray, np.ndarray]:
        n = min(self.order, other.order) + 1
        return self.coeffs[:n], other.coeffs[:n]

    def __add__(self, other: Union["TruncatedSeries", complex]) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            left, right = self._aligned(other)
            return TruncatedSeries(left + right)
        shifted = np.array(self.coeffs, dtype=np.result_type(self.coeffs, other))
        shifted[0] += other
        return TruncatedSeries(shifted)

    __radd__ = __add__

    def __neg__(self) -> "TruncatedSeries":
        return TruncatedSeries(-self.coeffs)

    def __sub__(self, other: Union["TruncatedSeries", complex]) -> "TruncatedSeries":
        return self + (-other)

    def __mul__(self, other: Union["TruncatedSeries", complex]) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            return ser_mul(self, other)
        return TruncatedSeries(self.coeffs * other)

    __rmul__ = __mul__

    def derivative(self) -> "TruncatedSeries":
        """``A'`` truncated at order ``N - 1``."""
        if self.order == 0:
            return TruncatedSeries(np.zeros(1, dtype=self.coeffs.dtype))
        return TruncatedSeries(polynomial.polyder(self.coeffs))

    def truncate(self, order: int) -> "TruncatedSeries":
        return TruncatedSeries(self.coeffs[: order + 1])

    def to_csv(self) -> bytes:
        """CSV bytes with columns ``n, value`` (``n, real, imag`` when complex)."""
        index = np.arange(self.coeffs.shape[0], dtype=np.int64)
        if np.iscomplexobj(self.coeffs):
            return render_csv([("n", index), ("real", self.coeffs.real), ("imag", self.coeffs.imag)])
        return render_csv([("n", index), ("value", self.coeffs)])


@dataclass(frozen=True, eq=False)
class CauchyExtraction:
    """
    Coefficients recovered from circle samples.

    ``imag_residue`` is the largest imaginary part of the recovered
    coefficients relative to the largest modulus; for real-coefficient
    inputs it measures how far the samples are from conjugate symmetry.
    """

    coeffs: npt.NDArray[Any]
    radius: float
    samples: int
    imag_residue: float
    alias_level: float


def ser_mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """
    Cauchy product truncated at the smaller of the two orders.

    Every coefficient is a compensated sum in a fixed order, so the result
    does not depend on how the work is split across threads.
    """
    left, right = a._aligned(b)
    return TruncatedSeries(kahan_convolve(left, right, left.shape[0]))


def ser_eval(a: TruncatedSeries, s: npt.ArrayLike) -> Tuple[Any, Any]:
    """
    Horner evaluation with a heuristic tail flag.

    :param a: the series
    :param s: evaluation point(s), real or complex
    :return: the value(s) and ``|a_N| |s|**(N+1) / (1 - |s|)``, infinite for ``|s| >= 1``
    """
    value = polynomial.polyval(s, a.coeffs)
    radius = np.abs(s)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        bound = np.where(
            radius < 1.0,
            abs(a.coeffs[-1]) * radius ** (a.order + 1) / (1.0 - radius),
            np.inf,
        )
    if np.ndim(bound) == 0:
        bound = float(bound)
    return value, bound


def _check_sampling(radius: float, samples: int) -> None:
    if not 0.0 < radius < 1.0:
        raise InvalidSampling(f"sampling radius must lie in (0, 1), got {radius!r}")
    if samples < 2 or samples & (samples - 1):
        raise InvalidSampling(f"sample count must be a power of two, got {samples!r}")


def sampling_size(max_index: int, oversampling: int = 8) -> int:
    """Smallest power of two that is at least ``oversampling * max_index``."""
    return 1 << max(1, math.ceil(math.log2(max(2, oversampling * max(1, max_index)))))


def circle_nodes(radius: float, samples: int, half: bool = False) -> npt.NDArray[np.complex128]:
    """``radius * exp(2 pi i j / samples)``, for ``j <= samples/2`` when ``half``."""
    count = samples // 2 + 1 if half else samples
    angles = 2.0 * np.pi * np.arange(count) / samples
    return radius * np.exp(1j * angles)


def mirror_half_samples(half_values: npt.ArrayLike, samples: int) -> npt.NDArray[np.complex128]:
    """Complete samples taken on ``j = 0..M/2`` using ``F(conj s) = conj F(s)``."""
    half_values = np.asarray(half_values, dtype=np.complex128)
    full = np.empty(samples, dtype=np.complex128)
    full[: samples // 2 + 1] = half_values
    full[samples // 2 + 1 :] = np.conj(half_values[1 : samples // 2][::-1])
    return full


def ser_eval_circle(a: TruncatedSeries, radius: float, samples: int) -> npt.NDArray[np.complex128]:
    """
    Values of ``a`` at the ``samples`` equispaced points of the circle of ``radius``.

    One inverse FFT of the scaled coefficients; coefficients beyond the
    sample count are folded, which is exact for a polynomial.
    """
    _check_sampling(radius, samples)
    powers = np.exp(np.arange(a.coeffs.shape[0]) * math.log(radius))
    scaled = a.coeffs * powers
    if scaled.shape[0] > samples:
        padded = np.zeros(-(-scaled.shape[0] // samples) * samples, dtype=scaled.dtype)
        padded[: scaled.shape[0]] = scaled
        folded = padded.reshape(-1, samples).sum(axis=0)
    else:
        folded = np.zeros(samples, dtype=scaled.dtype)
        folded[: scaled.shape[0]] = scaled
    return samples * np.fft.ifft(folded)


def coefficients_from_samples(
    values: npt.ArrayLike,
    radius: float,
    max_index: Optional[int] = None,
    real: bool = True,
) -> CauchyExtraction:
    """
    The discrete Cauchy integral over precomputed circle samples.

    :param values: samples at ``radius * exp(2 pi i j / M)``, ``j = 0..M-1``
    :param radius: the sampling radius
    :param max_index: last coefficient to return, below ``M``
    :param real: drop the imaginary part of the result
    :return: the extraction with its diagnostics
    """
    values = np.asarray(values, dtype=np.complex128)
    samples = values.shape[0]
    _check_sampling(radius, samples)
    if max_index is None:
        max_index = samples // 8
    if not 0 <= max_index < samples:
        raise InvalidSampling(f"coefficient index {max_index} needs more than {samples} samples")

    raw = np.fft.fft(values) / samples
    peak = float(np.max(np.abs(raw)))
    alias_level = float(abs(raw[-1]) / peak) if peak > 0.0 else 0.0
    if alias_level > ALIAS_THRESHOLD:
        warnings.warn(
            f"top sampled coefficient is {alias_level:.3e} of the largest, extracted coefficients are aliased",
            AliasWarning,
            stacklevel=2,
        )
    index = np.arange(max_index + 1)
    coeffs = raw[: max_index + 1] * np.exp(-index * math.log(radius))
    scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    imag_residue = float(np.max(np.abs(coeffs.imag)) / scale) if scale > 0.0 else 0.0
    LOGGER.debug(
        "extracted %d coefficients at r=%.6g from %d samples, imaginary residue %.3e",
        max_index + 1,
        radius,
        samples,
        imag_residue,
    )
    return CauchyExtraction(
        coeffs=coeffs.real.copy() if real else coeffs,
        radius=radius,
        samples=samples,
        imag_residue=imag_residue,
        alias_level=alias_level,
    )


def cauchy_extract(
    evaluator: Evaluator,
    radius: float,
    samples: int,
    max_index: Optional[int] = None,
    real: bool = True,
) -> CauchyExtraction:
    """
    Recover Taylor coefficients of an analytic function from circle samples.

    ``evaluator`` receives the whole array of nodes and must return the
    values at those nodes. With ``real`` the function is assumed to have
    real coefficients: only the upper half circle is sampled and the rest
    follows by conjugate symmetry; the imaginary parts left on the real
    axis are folded into the residue diagnostic.

    .. doctest::

        >>> extraction = cauchy_extract(lambda s: s ** 2, 0.5, 16, max_index=4)
        >>> [round(float(v), 12) + 0.0 for v in extraction.coeffs]
        [0.0, 0.0, 1.0, 0.0, 0.0]

    :param evaluator: vectorized function of complex nodes
    :param radius: sampling radius, inside the disk of analyticity
    :param samples: power-of-two sample count ``M``
    :param max_index: last coefficient to return (default ``M // 8``)
    :param real: real-coefficient path
    :return: the extraction
    """
    _check_sampling(radius, samples)
    if real:
        nodes = circle_nodes(radius, samples, half=True)
        half_values = np.asarray(evaluator(nodes), dtype=np.complex128)
        axis_imag = max(abs(half_values[0].imag), abs(half_values[-1].imag))
        extraction = coefficients_from_samples(mirror_half_samples(half_values, samples), radius, max_index, True)
        scale = float(np.max(np.abs(half_values))) or 1.0
        return CauchyExtraction(
            coeffs=extraction.coeffs,
            radius=radius,
            samples=samples,
            imag_residue=max(extraction.imag_residue, axis_imag / scale),
            alias_level=extraction.alias_level,
        )
    nodes = circle_nodes(radius, samples)
    values = np.asarray(evaluator(nodes), dtype=np.complex128)
    return coefficients_from_samples(values, radius, max_index, False)

"""Reproduction laws and the drift-derived constants of the model.

A law is a finite distribution of the number of children ``L`` with
``P(L = 1) = 0`` and mean strictly above one.

.. doctest::

    >>> law = make_offspring_law({2: 1.0})
    >>> law.m, law.delta, law.q_prime, law.V
    (1.0, 1, 0.0, 2.0)
    >>> float(law.pgf(0.5))
    0.25
    >>> rescale(4.0, 3.0, 1.0)
    (1.5, 2.0)
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from functools import reduce
from typing import Iterable
from typing import List
from typing import Mapping
from typing import Optional
from typing import Tuple
from typing import Union

import numpy as np
import numpy.typing as npt
from numpy.polynomial import polynomial
from scipy import optimize

from .errors import ModelError

__all__ = [
    "OffspringLaw",
    "DriftParams",
    "Regime",
    "make_offspring_law",
    "pgf",
    "drift_params",
    "expected_absorbed",
    "rescale",
    "rescale_distance",
    "rescale_rates",
    "rescale_constants",
    "law_entries",
    "NegativeMass",
    "SumNotOne",
    "OneChildMass",
    "NotSupercritical",
    "InvalidSupport",
    "NonPositiveScale",
    "UndefinedRegime",
]

LOGGER = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12
CRITICAL_TOLERANCE = 1e-12
FIXED_POINT_XTOL = 1e-14

LawInput = Union[Mapping[int, float], Iterable[Tuple[int, float]]]


class NegativeMass(ModelError):
    pass


class SumNotOne(ModelError):
    pass


class OneChildMass(ModelError):
    pass


class NotSupercritical(ModelError):
    pass


class InvalidSupport(ModelError):
    pass


class NonPositiveScale(ModelError):
    pass


class UndefinedRegime(ModelError):
    pass


class Regime(str, Enum):
    CRITICAL = "critical"
    SUBCRITICAL_SPEED = "subcritical_speed"
    SUPERCRITICAL_SPEED = "supercritical_speed"
    NEGATIVE_DRIFT = "negative_drift"


@dataclass(frozen=True)
class OffspringLaw:
    """
    A validated reproduction law.

    ``probs`` holds the ``(k, p_k)`` pairs with ``p_k > 0`` in increasing
    ``k``. The derived fields are the mean excess ``m = E[L] - 1``, the
    critical drift ``c0 = sqrt(2m)``, the span ``delta`` of ``L - 1``, the
    smallest fixed point ``q_prime`` of the generating function in ``[0, 1)``
    and the factorial moment ``V = E[L(L-1)]``.
    """

    probs: Tuple[Tuple[int, float], ...]
    m: float
    c0: float
    delta: int
    q_prime: float
    V: float

    @cached_property
    def coefficients(self) -> npt.NDArray[np.float64]:
        """Dense coefficient vector ``f_0, ..., f_kmax`` of the pgf."""
        top = self.probs[-1][0]
        coeffs = np.zeros(top + 1)
        for k, p in self.probs:
            coeffs[k] = p
        coeffs.setflags(write=False)
        return coeffs

    @cached_property
    def near_one_coefficients(self) -> npt.NDArray[np.float64]:
        """
        Coefficients of ``h(s) = (1 - s) - f(1 - s)`` as a polynomial in s.

        The constant term is exactly zero; evaluating ``h`` through these
        coefficients keeps full relative precision for ``s`` close to 0.
        """
        top = max(self.probs[-1][0], 1)
        coeffs = np.zeros(top + 1)
        coeffs[1] = -1.0
        for j in range(1, top + 1):
            acc = math.fsum(p * math.comb(k, j) for k, p in self.probs if k >= j)
            coeffs[j] -= (-1.0) ** j * acc
        coeffs.setflags(write=False)
        return coeffs

    @property
    def p0(self) -> float:
        return float(self.coefficients[0])

    def pgf(self, s: npt.ArrayLike) -> npt.ArrayLike:
        return polynomial.polyval(s, self.coefficients)

    def pgf_derivative(self, s: npt.ArrayLike, order: int = 1) -> npt.ArrayLike:
        return polynomial.polyval(s, polynomial.polyder(self.coefficients, order))

    def reaction(self, s: npt.ArrayLike) -> npt.ArrayLike:
        """``s - f(s)``, the forcing term of the generator equation."""
        return np.asarray(s) - self.pgf(s)

    def gap_near_one(self, s: npt.ArrayLike) -> npt.ArrayLike:
        """``(1 - s) - f(1 - s)`` without cancellation for small ``s``."""
        return polynomial.polyval(s, self.near_one_coefficients)

    def gap_near_one_derivative(self, s: npt.ArrayLike) -> npt.ArrayLike:
        return polynomial.polyval(s, polynomial.polyder(self.near_one_coefficients))

    def entries(self) -> List[Tuple[int, float]]:
        return [(k, p) for k, p in self.probs]


@dataclass(frozen=True)
class DriftParams:
    """
    Roots of ``lambda**2 - 2*c*lambda + c0**2`` and the regime of drift ``c``.

    The lambda fields and ``rho`` are ``None`` when ``|c| < c0``; ``d`` is
    only defined for ``c >= c0``.
    """

    c: float
    c0: float
    regime: Regime
    rho: Optional[float] = None
    lambda_minus: Optional[float] = None
    lambda_plus: Optional[float] = None
    d: Optional[float] = None

    @property
    def extinction_certain(self) -> bool:
        return self.regime in (Regime.CRITICAL, Regime.SUBCRITICAL_SPEED)

    @property
    def is_critical(self) -> bool:
        return self.regime is Regime.CRITICAL


def _normalize_input(probs: LawInput) -> List[Tuple[int, float]]:
    items = list(probs.items()) if isinstance(probs, Mapping) else list(probs)
    pairs: List[Tuple[int, float]] = []
    seen = set()
    for k, p in items:
        if isinstance(k, bool) or int(k) != k or k < 0:
            raise InvalidSupport(f"offspring numbers must be non-negative integers, got {k!r}")
        k = int(k)
        if k in seen:
            raise InvalidSupport(f"offspring number {k} given twice")
        seen.add(k)
        pairs.append((k, float(p)))
    if not pairs:
        raise InvalidSupport("empty offspring law")
    return sorted(pairs)


def _fixed_point(coeffs: npt.NDArray[np.float64]) -> float:
    """Smallest root of ``f(s) = s`` in ``[0, 1)``; bisection then Newton."""
    if coeffs[0] == 0.0:
        return 0.0

    def gap(s: float) -> float:
        return float(polynomial.polyval(s, coeffs)) - s

    def gap_prime(s: float) -> float:
        return float(polynomial.polyval(s, polynomial.polyder(coeffs))) - 1.0

    upper = 1.0 - 1e-9
    root = optimize.bisect(gap, 0.0, upper, xtol=FIXED_POINT_XTOL)
    polished = optimize.newton(gap, root, fprime=gap_prime, tol=1e-16, maxiter=3, disp=False)
    if 0.0 < polished < upper and abs(gap(polished)) <= abs(gap(root)):
        root = polished
    LOGGER.debug("fixed point of the offspring pgf: %.16g", root)
    return float(root)


def make_offspring_law(probs: LawInput) -> OffspringLaw:
    """
    Validate a finite reproduction law and compute its derived constants.

    :param probs: mapping ``k -> p_k`` or an iterable of ``(k, p_k)`` pairs
    :return: the validated law, renormalized to total mass one
    :raises NegativeMass: if a probability is negative
    :raises OneChildMass: if ``p_1`` is not exactly zero
    :raises SumNotOne: if the masses do not sum to one within 1e-12
    :raises NotSupercritical: if ``E[L] <= 1``
    """
    pairs = _normalize_input(probs)
    for k, p in pairs:
        if not math.isfinite(p) or p < 0.0:
            raise NegativeMass(f"probability of {k} offspring is {p!r}")
        if k == 1 and p != 0.0:
            raise OneChildMass(f"offspring mass at 1 must be zero, got {p!r}")
    total = math.fsum(p for _, p in pairs)
    if abs(total - 1.0) > PROBABILITY_TOLERANCE:
        raise SumNotOne(f"offspring probabilities sum to {total!r}")
    kept = tuple((k, p / total) for k, p in pairs if p > 0.0)

    m = math.fsum(k * p for k, p in kept) - 1.0
    if m <= 0.0:
        raise NotSupercritical(f"mean offspring number {m + 1.0!r} does not exceed one")
    V = math.fsum(k * (k - 1) * p for k, p in kept)
    delta = reduce(math.gcd, (abs(k - 1) for k, _ in kept))

    coeffs = np.zeros(kept[-1][0] + 1)
    for k, p in kept:
        coeffs[k] = p
    q_prime = _fixed_point(coeffs)
    return OffspringLaw(probs=kept, m=m, c0=math.sqrt(2.0 * m), delta=delta, q_prime=q_prime, V=V)


def pgf(law: OffspringLaw, s: npt.ArrayLike) -> npt.ArrayLike:
    """``f(s) = sum_k p_k s**k``; accepts complex scalars and arrays."""
    return law.pgf(s)


def drift_params(law: OffspringLaw, c: float) -> DriftParams:
    """
    Classify drift ``c`` and compute the roots ``lambda_c <= lambda_bar_c``.

    Drifts within a relative 1e-12 of ``c0`` are treated as critical.

    :param law: the reproduction law
    :param c: drift towards the barrier
    :return: the drift parameters
    """
    c0 = law.c0
    c = float(c)
    if abs(c - c0) <= CRITICAL_TOLERANCE * max(1.0, c0):
        return DriftParams(c=c, c0=c0, regime=Regime.CRITICAL, rho=0.0, lambda_minus=c0, lambda_plus=c0, d=1.0)
    if c > c0:
        rho = math.sqrt((c - c0) * (c + c0))
        lam_plus = c + rho
        lam_minus = c0 * c0 / lam_plus
        return DriftParams(
            c=c,
            c0=c0,
            regime=Regime.SUBCRITICAL_SPEED,
            rho=rho,
            lambda_minus=lam_minus,
            lambda_plus=lam_plus,
            d=lam_plus / lam_minus,
        )
    if c <= -c0:
        rho = math.sqrt(max((c - c0) * (c + c0), 0.0))
        lam_minus = c - rho
        return DriftParams(
            c=c,
            c0=c0,
            regime=Regime.NEGATIVE_DRIFT,
            rho=rho,
            lambda_minus=lam_minus,
            lambda_plus=c0 * c0 / lam_minus,
        )
    return DriftParams(c=c, c0=c0, regime=Regime.SUPERCRITICAL_SPEED)


def expected_absorbed(law: OffspringLaw, c: float, x: float) -> float:
    """``E[Z_x] = exp(lambda_c x)``, valid whenever ``|c| >= c0``."""
    params = drift_params(law, c)
    if params.lambda_minus is None:
        raise UndefinedRegime(f"no finite mean for drift {c!r} below the critical drift {law.c0!r}")
    return math.exp(params.lambda_minus * x)


def rescale(beta: float, c: float, sigma: float) -> Tuple[float, float]:
    """
    Map a model with branching rate ``beta`` and diffusion ``sigma`` to the unit model.

    :return: the unit-model drift ``c/(sigma sqrt(beta))`` and the rate factor ``sqrt(beta)/sigma``
    """
    if not beta > 0.0 or not sigma > 0.0:
        raise NonPositiveScale(f"beta and sigma must be positive, got beta={beta!r}, sigma={sigma!r}")
    root = math.sqrt(beta)
    return c / (sigma * root), root / sigma


def rescale_distance(x: float, beta: float, sigma: float) -> float:
    """Barrier distance of the unit model that has the same absorbed count as ``x``."""
    _, factor = rescale(beta, 0.0, sigma)
    return x * factor


def rescale_rates(values: npt.ArrayLike, rate_factor: float) -> npt.NDArray[np.float64]:
    """Rates (or tail constants) of the rescaled model from unit-model values."""
    if not rate_factor > 0.0:
        raise NonPositiveScale(f"rate factor must be positive, got {rate_factor!r}")
    return np.asarray(values, dtype=float) * rate_factor


def rescale_constants(params: DriftParams, sigma: float) -> Tuple[float, Optional[float], Optional[float]]:
    """``c0``, ``lambda_c`` and ``lambda_bar_c`` of the model with diffusion ``sigma``, from unit-model values."""
    if not sigma > 0.0:
        raise NonPositiveScale(f"sigma must be positive, got {sigma!r}")
    scale = sigma * sigma

    def scaled(value: Optional[float]) -> Optional[float]:
        return None if value is None else value / scale

    return params.c0 / scale, scaled(params.lambda_minus), scaled(params.lambda_plus)


def law_entries(law: OffspringLaw) -> List[Tuple[int, float]]:
    return law.entries()

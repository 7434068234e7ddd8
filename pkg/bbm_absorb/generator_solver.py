"""
The infinitesimal generating function ``a(s)`` of the absorbed-count process.

``a`` solves ``a'(s) a(s) = 2 c a(s) + 2 (s - f(s))`` with ``a(q') = a(1) = 0``
on the extinction side ``c >= c0``. Its Taylor coefficients are the jump
rates ``q_n = a_n`` (``n != 1``) and ``a_1 = -alpha``.

Without mass at zero offspring, ``a(0) = 0`` and the coefficients follow
from a stable recursion (:func:`solve_a_zero_intercept`). Otherwise the
free value ``a(0)`` is found by shooting on the ODE and the coefficients are
extracted from samples of ``a`` on a circle (:func:`solve_a_shooting`).
"""
import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any
from typing import Dict
from typing import Optional
from typing import Tuple

import numpy as np
import numpy.typing as npt
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial
from scipy import optimize
from scipy.integrate import solve_ivp

from ._kernels import generator_recursion
from .artifacts import render_csv
from .errors import ModelError
from .errors import NumericalError
from .offspring_law import OffspringLaw
from .offspring_law import drift_params
from .series_engine import TruncatedSeries
from .series_engine import circle_nodes
from .series_engine import coefficients_from_samples
from .series_engine import mirror_half_samples
from .series_engine import sampling_size
from .series_engine import ser_mul

__all__ = [
    "GeneratorSeries",
    "solve_a",
    "solve_a_zero_intercept",
    "solve_a_shooting",
    "local_series_at_fixed_point",
    "ode_residual",
    "PreconditionP0",
    "DriftBelowCritical",
    "BracketNotFound",
    "NoConvergence",
    "DEFAULT_ORDER",
    "MAX_ORDER",
]

LOGGER = logging.getLogger(__name__)

DEFAULT_ORDER = 20_000
MAX_ORDER = 200_000
DEFAULT_SHOOTING_ORDER = 2_048
SHOOTING_SCAN = (1e-6, 10.0)
SHOOTING_SCAN_POINTS = 57
LOCAL_SERIES_ORDER = 80
ODE_RTOL = 1e-13
NEWTON_STEPS = 3


class PreconditionP0(ModelError):
    pass


class DriftBelowCritical(ModelError):
    pass


class BracketNotFound(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class GeneratorSeries:
    """
    Truncated Taylor series of ``a`` about 0 together with its provenance.

    :param series: the coefficients ``a_0..a_N``
    :param alpha: total jump rate ``-a_1``
    :param q_smallest_zero: the zero of ``a`` in ``[0, 1)``, equal to the law's ``q_prime``
    :param law: the reproduction law
    :param c: the drift
    :param method: ``"zero_intercept"`` or ``"shooting"``
    """

    series: TruncatedSeries
    alpha: float
    q_smallest_zero: float
    law: OffspringLaw
    c: float
    method: str

    @property
    def coeffs(self) -> npt.NDArray[np.float64]:
        return self.series.coeffs

    @property
    def order(self) -> int:
        return self.series.order

    @property
    def q_rates(self) -> npt.NDArray[np.float64]:
        """Jump rates ``q_n``; the entry at ``n = 1`` is set to zero."""
        rates = np.array(self.series.coeffs, copy=True)
        if rates.shape[0] > 1:
            rates[1] = 0.0
        return rates

    @cached_property
    def residual(self) -> float:
        return ode_residual(self)

    def __call__(self, s: npt.ArrayLike) -> Any:
        return polynomial.polyval(s, self.series.coeffs)

    def derivative_at(self, s: npt.ArrayLike, order: int = 1) -> Any:
        return polynomial.polyval(s, polynomial.polyder(self.series.coeffs, order))

    def second_derivative_at(self, s: npt.ArrayLike) -> Any:
        return self.derivative_at(s, 2)

    def header(self) -> Dict[str, Any]:
        return {
            "law": self.law.entries(),
            "c": self.c,
            "N": self.order,
            "alpha": self.alpha,
            "method": self.method,
            "residual": self.residual,
        }

    def to_csv(self) -> bytes:
        index = np.arange(self.order + 1, dtype=np.int64)
        return render_csv([("n", index), ("q_n", self.q_rates)])

    def header_json(self) -> str:
        return json.dumps(self.header(), sort_keys=True)


def _require_extinction_side(law: OffspringLaw, c: float) -> None:
    params = drift_params(law, c)
    if not params.extinction_certain:
        raise DriftBelowCritical(
            f"drift {c!r} is below the critical drift {law.c0!r}: no solution with a(1) = 0 exists"
        )


def _check_order(order: int) -> None:
    if not 1 <= order <= MAX_ORDER:
        raise ModelError(f"series order must lie in [1, {MAX_ORDER}], got {order!r}")


def _negative_root(c: float, g1: float) -> float:
    """``c - sqrt(c**2 + 2 g1)`` written without cancellation."""
    return -2.0 * g1 / (c + math.sqrt(c * c + 2.0 * g1))


def _reaction_coefficients(law: OffspringLaw, order: int) -> npt.NDArray[np.float64]:
    """Taylor coefficients of ``s - f(s)`` about 0, padded to ``order``."""
    g = np.zeros(max(order, law.coefficients.shape[0] - 1) + 1)
    g[: law.coefficients.shape[0]] -= law.coefficients
    g[1] += 1.0
    return g[: order + 1]


def solve_a_zero_intercept(law: OffspringLaw, c: float, N: int = DEFAULT_ORDER) -> GeneratorSeries:
    """
    Coefficients of ``a`` when ``p_0 = 0``.

    ``a_0 = 0``, ``a_1`` is the negative root of ``a_1**2 - 2 c a_1 - 2 = 0``
    and every further coefficient follows from matching powers of ``s`` in
    the generator ODE.

    :param law: reproduction law without mass at zero
    :param c: drift, at least ``c0``
    :param N: order of the truncated series
    :raises PreconditionP0: if ``p_0 != 0``
    :raises DriftBelowCritical: if ``c < c0``
    """
    if law.p0 != 0.0:
        raise PreconditionP0("the zero-intercept recursion needs p_0 = 0; use solve_a_shooting")
    _require_extinction_side(law, c)
    _check_order(N)
    forcing = _reaction_coefficients(law, N)
    slope = _negative_root(c, forcing[1])
    coeffs = generator_recursion(forcing, c, slope, N)
    LOGGER.debug("zero-intercept recursion to order %d: a_1=%.16g", N, slope)
    return GeneratorSeries(
        series=TruncatedSeries(coeffs),
        alpha=-slope,
        q_smallest_zero=0.0,
        law=law,
        c=float(c),
        method="zero_intercept",
    )


def local_series_at_fixed_point(law: OffspringLaw, c: float, order: int = LOCAL_SERIES_ORDER) -> TruncatedSeries:
    """
    Taylor series of ``a`` about its zero ``q'``, in powers of ``s - q'``.

    The slope at ``q'`` is the negative root of
    ``b**2 - 2 c b - 2 (1 - f'(q')) = 0``; the recursion is the
    zero-intercept one with the law re-expanded about ``q'``.
    """
    q = law.q_prime
    shifted = Polynomial(law.coefficients)(Polynomial([q, 1.0])).coef
    forcing = np.zeros(max(order, shifted.shape[0] - 1) + 1)
    forcing[: shifted.shape[0]] -= shifted
    forcing[0] = 0.0
    forcing[1] += 1.0
    slope = _negative_root(c, forcing[1])
    return TruncatedSeries(generator_recursion(forcing[: order + 1], c, slope, order))


def _generator_rhs(law: OffspringLaw, c: float) -> Any:
    def rhs(s: float, y: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        a, sensitivity = y
        reaction = s - float(law.pgf(s))
        return np.array([2.0 * c + 2.0 * reaction / a, -2.0 * reaction / (a * a) * sensitivity])

    return rhs


def _hits_zero(s: float, y: npt.NDArray[np.float64]) -> float:
    return y[0]


_hits_zero.terminal = True  # type: ignore[attr-defined]
_hits_zero.direction = -1  # type: ignore[attr-defined]


class _ShootingProblem:
    """Mismatch between the ODE solution started at ``a(0) = a0`` and the local series at ``q'``."""

    def __init__(self, law: OffspringLaw, c: float) -> None:
        self.law = law
        self.c = c
        q = law.q_prime
        self.step = min(q / 2.0, (1.0 - q) / 4.0)
        self.match_point = q - self.step
        local = local_series_at_fixed_point(law, c)
        self.target = float(local(-self.step))
        self.rhs = _generator_rhs(law, c)

    def integrate(self, a0: float) -> Tuple[float, float, bool]:
        solution = solve_ivp(
            self.rhs,
            (0.0, self.match_point),
            [a0, 1.0],
            method="DOP853",
            rtol=ODE_RTOL,
            atol=1e-300,
            events=_hits_zero,
        )
        if solution.status == 1 or solution.status == -1:
            return -1.0 - (self.match_point - float(solution.t[-1])), 0.0, False
        a_end, sensitivity = solution.y[:, -1]
        return float(a_end) - self.target, float(sensitivity), True

    def mismatch(self, a0: float) -> float:
        return self.integrate(a0)[0]

    def bracket(self) -> Tuple[float, float]:
        grid = np.geomspace(SHOOTING_SCAN[0], SHOOTING_SCAN[1], SHOOTING_SCAN_POINTS)
        previous: Optional[float] = None
        for a0 in grid:
            value = self.mismatch(float(a0))
            LOGGER.debug("shooting scan a0=%.6g mismatch=%.6g", a0, value)
            if value == 0.0:
                return float(a0), float(a0)
            if value > 0.0:
                if previous is None:
                    break
                return previous, float(a0)
            previous = float(a0)
        raise BracketNotFound(
            f"no sign change of the shooting mismatch for a(0) in [{SHOOTING_SCAN[0]}, {SHOOTING_SCAN[1]}]"
        )

    def solve(self) -> float:
        lo, hi = self.bracket()
        if lo == hi:
            return lo
        try:
            a0 = optimize.bisect(self.mismatch, lo, hi, xtol=1e-14, rtol=4.0 * np.finfo(float).eps, maxiter=200)
        except (RuntimeError, ValueError) as e:
            raise NoConvergence(str(e)) from e
        best = abs(self.mismatch(a0))
        for _ in range(NEWTON_STEPS):
            value, sensitivity, regular = self.integrate(a0)
            if not regular or sensitivity == 0.0:
                break
            candidate = a0 - value / sensitivity
            if not lo <= candidate <= hi:
                break
            trial = abs(self.mismatch(candidate))
            if trial >= best:
                break
            a0, best = candidate, trial
        LOGGER.debug("shooting converged: a0=%.16g, mismatch %.3e", a0, best)
        return float(a0)


class _CirclePath:
    """
    Samples of ``a`` on a circle, obtained by continuing the ODE from ``s = 0``.

    The path runs along the negative real axis to ``-r`` and then along the
    upper half circle to ``r``; the lower half follows by symmetry.
    """

    def __init__(self, law: OffspringLaw, c: float, a0: float) -> None:
        self.law = law
        self.c = c
        self.a0 = a0

    def _on_axis(self, radius: float) -> float:
        rhs = _generator_rhs(self.law, self.c)
        solution = solve_ivp(
            lambda s, y: rhs(s, np.array([y[0], 0.0]))[:1],
            (0.0, -radius),
            [self.a0],
            method="DOP853",
            rtol=ODE_RTOL,
            atol=1e-300,
        )
        if not solution.success:
            raise NoConvergence(f"generator ODE failed on the negative axis: {solution.message}")
        return float(solution.y[0, -1])

    def half_samples(self, radius: float, samples: int) -> npt.NDArray[np.complex128]:
        start = self._on_axis(radius)
        law, c = self.law, self.c

        def rhs(theta: float, y: npt.NDArray[np.complex128]) -> npt.NDArray[np.complex128]:
            s = radius * np.exp(1j * theta)
            return 1j * s * (2.0 * c + 2.0 * (s - law.pgf(s)) / y)

        angles = 2.0 * np.pi * np.arange(samples // 2, -1, -1) / samples
        solution = solve_ivp(
            rhs,
            (math.pi, 0.0),
            np.array([start + 0j]),
            method="DOP853",
            t_eval=angles,
            rtol=ODE_RTOL,
            atol=1e-18,
        )
        if not solution.success:
            raise NoConvergence(f"generator ODE failed on the sampling circle: {solution.message}")
        values = solution.y[0][::-1].copy()
        values[0] = values[0].real
        values[-1] = start
        return values


def solve_a_shooting(law: OffspringLaw, c: float, N: int = DEFAULT_SHOOTING_ORDER) -> GeneratorSeries:
    """
    Coefficients of ``a`` when ``p_0 > 0``.

    The value ``a(0) > 0`` is the unique start for which the ODE solution
    reaches the regular zero at ``q'``: the mismatch against the local
    series at ``q'`` is scanned geometrically over ``[1e-6, 10]``, bisected
    and polished with Newton steps driven by the forward sensitivity. The
    coefficients are then recovered from samples of ``a`` on the circle of
    radius ``1 - 4/N``.

    :param law: reproduction law with ``p_0 > 0``
    :param c: drift, at least ``c0``
    :param N: order of the truncated series
    :raises PreconditionP0: if ``p_0 = 0``
    :raises DriftBelowCritical: if ``c < c0``
    :raises BracketNotFound: if the scan finds no sign change
    :raises NoConvergence: if bisection or the circle continuation fails
    """
    if law.p0 == 0.0:
        raise PreconditionP0("shooting needs p_0 > 0; use solve_a_zero_intercept")
    _require_extinction_side(law, c)
    _check_order(N)
    a0 = _ShootingProblem(law, c).solve()

    radius = 1.0 - 4.0 / max(N, 8)
    samples = sampling_size(N)
    half = _CirclePath(law, c, a0).half_samples(radius, samples)
    extraction = coefficients_from_samples(mirror_half_samples(half, samples), radius, N, real=True)
    coeffs = extraction.coeffs
    coeffs[0] = a0
    slope_from_intercept = 2.0 * c - 2.0 * law.p0 / a0
    LOGGER.debug(
        "shooting: a0=%.16g, a1=%.16g (intercept relation gives %.16g)",
        a0,
        coeffs[1],
        slope_from_intercept,
    )
    return GeneratorSeries(
        series=TruncatedSeries(coeffs),
        alpha=-float(coeffs[1]),
        q_smallest_zero=law.q_prime,
        law=law,
        c=float(c),
        method="shooting",
    )


def solve_a(law: OffspringLaw, c: float, N: Optional[int] = None) -> GeneratorSeries:
    """Dispatch on ``p_0``: recursion when it vanishes, shooting otherwise."""
    if law.p0 == 0.0:
        return solve_a_zero_intercept(law, c, DEFAULT_ORDER if N is None else N)
    return solve_a_shooting(law, c, DEFAULT_SHOOTING_ORDER if N is None else N)


def ode_residual(gen: GeneratorSeries, law: Optional[OffspringLaw] = None, c: Optional[float] = None) -> float:
    """
    Largest coefficient of ``a' a - 2 c a - 2 (s - f(s))`` over orders ``0..N-1``.

    :return: the residual normalized by ``max |a_n|``
    """
    law = gen.law if law is None else law
    c = gen.c if c is None else c
    series = gen.series
    if series.order < 1:
        return 0.0
    product = ser_mul(series.derivative(), series).coeffs
    order = product.shape[0]
    forcing = _reaction_coefficients(law, order - 1)
    residual = product - 2.0 * c * series.coeffs[:order] - 2.0 * forcing
    scale = float(np.max(np.abs(series.coeffs)))
    return float(np.max(np.abs(residual)) / scale) if scale > 0.0 else 0.0

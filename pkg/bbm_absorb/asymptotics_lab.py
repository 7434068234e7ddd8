"""
Asymptotic formulas for the absorbed count and diagnostics against computed data.

The tail and density laws are evaluated as plain formulas; the unknown
constant of the density law is fitted from the coefficients of ``a``. The
two-barrier moments are exact and serve as Monte Carlo oracles.

.. doctest::

    >>> from bbm_absorb.offspring_law import make_offspring_law
    >>> law = make_offspring_law({2: 1.0})
    >>> round(theorem_rhs("tail_rates", 100, 0.0, law, law.c0), 7)
    0.0006668
    >>> round(two_barrier_mean(law, 1.5, -1.0, 1.0, 0.0), 5)
    0.09894
"""
import cmath
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Any
from typing import Dict
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np
import numpy.typing as npt
from scipy import integrate
from scipy import optimize

from .bbm_simulator import EmpiricalDist
from .errors import ModelError
from .errors import NumericalError
from .fkpp_wave import F_from_wave
from .fkpp_wave import F_second_derivative_from_wave
from .fkpp_wave import WaveSolution
from .fkpp_wave import a_from_wave
from .fkpp_wave import a_second_derivative_from_wave
from .generator_solver import GeneratorSeries
from .gw_process import AbsorptionDistribution
from .offspring_law import DriftParams
from .offspring_law import OffspringLaw
from .offspring_law import Regime
from .offspring_law import drift_params

__all__ = [
    "AsymptoticFit",
    "RatioDiagnostic",
    "CurvatureReport",
    "LogProfile",
    "TailBoundReport",
    "theorem_rhs",
    "fit_constant",
    "ratio_diagnostic",
    "ratio_target",
    "curvature_check",
    "f_curvature_check",
    "critical_log_profile",
    "tail_lower_bound_check",
    "tail_sum_check",
    "singular_expansion",
    "two_barrier_mean",
    "two_barrier_second_moment",
    "two_barrier_scaled_mean",
    "two_barrier_scaled_second_moment",
    "paley_zygmund_bound",
    "RegimeMismatch",
    "MissingConstant",
    "WindowTooShort",
    "DivisionBySmall",
    "StepTooSmall",
    "InsufficientData",
]

LOGGER = logging.getLogger(__name__)

KINDS = ("tail_rates", "tail_prob", "density_rates", "density_prob")
SMALL_DIVISOR = 1e-300
CANCELLATION_GUARD = 1e3 * np.finfo(float).eps
MIN_WINDOW_POINTS = 10
SLOPE_ALARM = 0.5
RECOMMENDED_REPLICAS = 100_000

QSeries = Union[GeneratorSeries, npt.ArrayLike]


class RegimeMismatch(ModelError):
    pass


class MissingConstant(ModelError):
    pass


class WindowTooShort(ModelError):
    pass


class DivisionBySmall(NumericalError):
    pass


class StepTooSmall(NumericalError):
    pass


class InsufficientData(ModelError):
    pass


@dataclass(frozen=True)
class AsymptoticFit:
    """
    Power-law fit ``q_{delta n + 1} ~ constant * n**exponent`` over the lattice window ``(n_lo, n_hi)``.
    """

    exponent_hat: float
    constant_hat: float
    window: Tuple[int, int]
    drift_diag: float
    method: str = "loglog+richardson"

    def as_dict(self) -> Dict[str, Any]:
        return {
            "exponent_hat": self.exponent_hat,
            "constant_hat": self.constant_hat,
            "window": list(self.window),
            "drift_diag": self.drift_diag,
            "method": self.method,
        }


@dataclass(frozen=True, eq=False)
class RatioDiagnostic:
    ns: npt.NDArray[np.int64]
    ratios: npt.NDArray[np.float64]
    target: float

    def relative_error(self) -> npt.NDArray[np.float64]:
        return np.abs(self.ratios / self.target - 1.0)

    def at(self, n: int) -> float:
        """Ratio at lattice index ``n``."""
        where = np.flatnonzero(self.ns == n)
        if where.size == 0:
            raise ModelError(f"lattice index {n} not in the diagnostic")
        return float(self.ratios[where[0]])


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    s: npt.NDArray[np.float64]
    ratio: npt.NDArray[np.float64]
    expansion_defect: npt.NDArray[np.float64]
    method: str


@dataclass(frozen=True)
class LogProfile:
    """
    Closed-form critical profile ``a(1 - s) = -c0 s (1 - G(s))`` with
    ``1/G + log G = log(1/s) + C``.

    It solves the generator equation with the quadratic part of the
    reaction removed, so it captures every logarithmic order of the
    singular behaviour and deviates from ``a`` by a relative ``O(s)``.
    """

    c0: float
    C: float

    def G(self, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty(s.shape)
        for i, value in enumerate(s):
            level = math.log(1.0 / value) + self.C
            if level <= 1.0:
                raise ModelError(f"s={value!r} is too large for the logarithmic profile")
            # solved for t = log G, where exp(-t) + t is decreasing
            t = optimize.brentq(
                lambda t: math.exp(-t) + t - level, -math.log(2.0 * level), -math.log(level), xtol=1e-15
            )
            out[i] = math.exp(t)
        return out

    def a(self, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """``a(1 - s)``."""
        s = np.asarray(s, dtype=float)
        return -self.c0 * s * (1.0 - self.G(s))

    def curvature_ratio(self, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """``a''(1 - s) s log(1/s)**2 / c0`` on the profile, ``G**2 L**2 / (1 - G)**3``."""
        s = np.asarray(s, dtype=float)
        g = self.G(s)
        return g * g * np.log(1.0 / s) ** 2 / (1.0 - g) ** 3

    def _slope(self, s: npt.NDArray[np.float64], g: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        return g / (1.0 - g)

    def _w(self, x: float, s: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        """``w = 1 - F_x(1 - s)``, from ``w G(w) = exp(c0 x) s G(s)``."""
        target = math.exp(self.c0 * x) * s * self.G(s)
        out = np.empty(s.shape)
        for i, value in enumerate(target):
            out[i] = optimize.brentq(lambda w: w * float(self.G(w)[0]) - value, value, min(1e-2, 1e3 * value))
        return out

    def F(self, x: float, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """``F_x(1 - s)`` on the profile."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return 1.0 - self._w(x, s)

    def F_second_derivative(self, x: float, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """``F_x''(1 - s) = -w''(s)``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        w = self._w(x, s)
        g_s, g_w = self.G(s), self.G(w)
        slope_s, slope_w = self._slope(s, g_s), self._slope(w, g_w)
        bend_s = g_s * g_s / ((1.0 - g_s) ** 3 * s)
        bend_w = g_w * g_w / ((1.0 - g_w) ** 3 * w)
        scale = math.exp(self.c0 * x)
        dw = scale * slope_s / slope_w
        return -scale * (bend_s * slope_w - slope_s * bend_w * dw) / slope_w**2

    def F_curvature_ratio(self, x: float, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return self.F_second_derivative(x, s) * s * np.log(1.0 / s) ** 2 / (self.c0 * x * math.exp(self.c0 * x))


@dataclass(frozen=True, eq=False)
class TailBoundReport:
    """
    Windowed ``n**d P(Z > n)``: the minimum of the point estimates, its
    simultaneous lower confidence bound and the log-log slope of the statistic.
    """

    ns: npt.NDArray[np.int64]
    statistic: npt.NDArray[np.float64]
    minimum: float
    lower_bound: float
    slope: float

    @property
    def positive(self) -> bool:
        return self.lower_bound > 0.0

    @property
    def slope_fires(self) -> bool:
        return abs(self.slope) > SLOPE_ALARM


def _params(law: OffspringLaw, c: float) -> DriftParams:
    return drift_params(law, c)


def _require_critical(params: DriftParams, what: str) -> None:
    if not params.is_critical:
        raise RegimeMismatch(f"{what} needs the critical drift, got regime {params.regime.value}")


def _require_subcritical(params: DriftParams, what: str) -> None:
    if params.regime is not Regime.SUBCRITICAL_SPEED:
        raise RegimeMismatch(f"{what} needs a drift above critical, got regime {params.regime.value}")


def _log_weight(n: float) -> float:
    return n * math.log(n) ** 2


def theorem_rhs(
    kind: str, n: float, x: float, law: OffspringLaw, c: float, K: Optional[float] = None
) -> float:
    """
    Right-hand side of the tail and density asymptotics.

    ``tail_rates``: ``c0 / (n log(n)**2)``; ``tail_prob``: the same times
    ``x exp(c0 x)`` (critical drift only). ``density_rates``: ``c0 / (delta
    n**2 log(n)**2)`` at critical drift and ``K / n**(d+1)`` above it;
    ``density_prob`` multiplies by ``x exp(c0 x)``, respectively
    ``(exp(lambda_bar x) - exp(lambda x)) / (lambda_bar - lambda)``.

    :param K: fitted constant, required for the density kinds above critical drift
    :raises RegimeMismatch: for tail kinds away from the critical drift
    :raises MissingConstant: if ``K`` is needed but not given
    """
    if kind not in KINDS:
        raise ModelError(f"unknown kind {kind!r}; expected one of {KINDS}")
    if n < 2:
        raise ModelError(f"n must be at least 2, got {n!r}")
    params = _params(law, c)
    critical = params.is_critical
    if kind.startswith("tail"):
        _require_critical(params, kind)
    elif not critical:
        _require_subcritical(params, kind)
        if K is None:
            raise MissingConstant(f"{kind} above the critical drift needs the fitted constant K")

    if kind == "tail_rates":
        return law.c0 / _log_weight(n)
    if kind == "tail_prob":
        return law.c0 / _log_weight(n) * x * math.exp(law.c0 * x)
    if critical:
        value = law.c0 / (law.delta * n * _log_weight(n))
    else:
        value = K / n ** (params.d + 1.0)  # type: ignore[operator]
    if kind == "density_prob":
        value *= ratio_target(law, c, x)
    return value


def ratio_target(law: OffspringLaw, c: float, x: float) -> float:
    """Limit of ``P(Z_x = delta n + 1) / q_{delta n + 1}``: ``x exp(c0 x)`` at critical drift."""
    params = _params(law, c)
    if params.is_critical:
        return x * math.exp(law.c0 * x)
    _require_subcritical(params, "the ratio limit")
    lo, hi = params.lambda_minus, params.lambda_plus
    return (math.exp(hi * x) - math.exp(lo * x)) / (hi - lo)  # type: ignore[operator]


def _rates(q_series: QSeries) -> npt.NDArray[np.float64]:
    if isinstance(q_series, GeneratorSeries):
        return q_series.q_rates
    return np.asarray(q_series, dtype=float)


def _lattice(length: int, delta: int) -> npt.NDArray[np.int64]:
    """Lattice indices ``n >= 1`` with ``delta n + 1 < length``."""
    return np.arange(1, (length - 2) // delta + 1, dtype=np.int64)


def fit_constant(
    q_series: QSeries, law: OffspringLaw, c: float, window: Optional[Tuple[int, int]] = None
) -> AsymptoticFit:
    """
    Fit ``q_{delta n + 1} ~ K n**-(d+1)`` over the last decade of lattice indices.

    The exponent is the least-squares log-log slope. The constant is the
    median over the window of the Richardson combination
    ``2 g(2n) - g(n)`` of ``g(n) = q_{delta n + 1} n**(d+1)``, which removes
    a ``1/n`` correction. ``drift_diag`` is ``|g(n_hi) - g(n_lo)| / K``.

    :param window: lattice window ``(n_lo, n_hi)``, default the last decade
    :raises WindowTooShort: with fewer than 10 lattice points in the window
    """
    params = _params(law, c)
    _require_subcritical(params, "fit_constant")
    rates = _rates(q_series)
    ns = _lattice(rates.shape[0], law.delta)
    if ns.size == 0:
        raise WindowTooShort("no coefficients on the lattice")
    n_hi = int(ns[-1]) if window is None else int(window[1])
    n_lo = max(1, n_hi // 10) if window is None else int(window[0])
    if not n_lo < n_hi or n_hi > ns[-1] or n_hi - n_lo + 1 < MIN_WINDOW_POINTS or n_lo < 2:
        raise WindowTooShort(f"window ({n_lo}, {n_hi}) is too short for a fit")
    n = np.arange(n_lo, n_hi + 1)
    q = rates[law.delta * n + 1]
    if np.any(q <= 0.0):
        raise ModelError("non-positive coefficients in the fitting window")
    exponent_hat = float(np.polyfit(np.log(n), np.log(q), 1)[0])
    power = float(params.d) + 1.0  # type: ignore[arg-type]
    g = q * n.astype(float) ** power
    halves = n[2 * n <= n_hi]
    if halves.size:
        scaled = g[halves - n_lo]
        doubled = g[2 * halves - n_lo]
        constant_hat = float(np.median(2.0 * doubled - scaled))
    else:
        constant_hat = float(np.median(g))
    drift_diag = float(abs(g[-1] - g[0]) / abs(constant_hat))
    LOGGER.info(
        "fit over lattice window [%d, %d]: exponent %.5f (theory %.5f), K %.8g, drift %.3e",
        n_lo,
        n_hi,
        exponent_hat,
        -power,
        constant_hat,
        drift_diag,
    )
    return AsymptoticFit(
        exponent_hat=exponent_hat, constant_hat=constant_hat, window=(n_lo, n_hi), drift_diag=drift_diag
    )


def ratio_diagnostic(
    dist: AbsorptionDistribution,
    q_series: QSeries,
    x: float,
    law: OffspringLaw,
    c: float,
    ns: Optional[Sequence[int]] = None,
) -> RatioDiagnostic:
    """
    ``r_n = P(Z_x = delta n + 1) / q_{delta n + 1}`` and its parameter-free limit.

    :param ns: lattice indices, default every index both inputs cover
    :raises DivisionBySmall: if a denominator is below 1e-300 in magnitude
    """
    if abs(dist.x - x) > 1e-12 * max(1.0, abs(x)):
        raise ModelError(f"distribution was computed at x={dist.x!r}, not {x!r}")
    rates = _rates(q_series)
    length = min(dist.probs.shape[0], rates.shape[0])
    lattice = _lattice(length, law.delta) if ns is None else np.asarray(ns, dtype=np.int64)
    index = law.delta * lattice + 1
    if np.any(index >= length):
        raise ModelError("requested lattice indices beyond the available coefficients")
    denominators = rates[index]
    if np.any(np.abs(denominators) < SMALL_DIVISOR):
        raise DivisionBySmall("a jump rate in the window is below 1e-300")
    return RatioDiagnostic(ns=lattice, ratios=dist.probs[index] / denominators, target=ratio_target(law, c, x))


def _wave_of(source: Any) -> WaveSolution:
    if isinstance(source, WaveSolution):
        return source
    wave = getattr(source, "wave", None)
    if wave is None:
        raise ModelError("the curvature checks need a travelling-wave oracle")
    return wave


def _second_difference(func: Any, s: float) -> float:
    h = s / 100.0
    centre = float(func(s))
    value = (float(func(s + h)) - 2.0 * centre + float(func(s - h))) / (h * h)
    if abs(value) * h * h < CANCELLATION_GUARD * abs(centre):
        raise StepTooSmall(f"second difference at s={s!r} is below the rounding level")
    return value


def curvature_check(
    a_eval_near_1: Any, s_grid: Sequence[float], method: str = "analytic"
) -> CurvatureReport:
    """
    ``a''(1 - s) s log(1/s)**2 / c0`` and the defect of the three-term expansion.

    The defect is ``[a(1 - s) - (-c0 s + c0 s/L - c0 s log(L)/L**2)] / (s/L**2)``
    with ``L = log(1/s)``. With ``method="difference"`` the second derivative
    comes from central differences with step ``s/100``.

    :raises RegimeMismatch: away from the critical drift
    :raises StepTooSmall: if the second difference drowns in rounding
    """
    wave = _wave_of(a_eval_near_1)
    params = _params(wave.law, wave.c)
    _require_critical(params, "curvature_check")
    c0 = wave.law.c0
    s = np.asarray(s_grid, dtype=float)
    if method == "analytic":
        second = a_second_derivative_from_wave(wave, s)
    elif method == "difference":
        second = np.array([_second_difference(lambda u: a_from_wave(wave, u), value) for value in s])
    else:
        raise ModelError(f"unknown method {method!r}")
    L = np.log(1.0 / s)
    three_term = -c0 * s + c0 * s / L - c0 * s * np.log(L) / L**2
    defect = (a_from_wave(wave, s) - three_term) / (s / L**2)
    return CurvatureReport(s=s, ratio=second * s * L**2 / c0, expansion_defect=defect, method=method)


def f_curvature_check(
    wave: WaveSolution, x: float, s_grid: Sequence[float], method: str = "analytic"
) -> CurvatureReport:
    """
    ``F_x''(1 - s) s log(1/s)**2 / (c0 x exp(c0 x))``, the semigroup analogue of :func:`curvature_check`.

    The defect column holds the two-term expansion defect of ``F_x(1 - s)``
    scaled by ``s / log(1/s)**2``.
    """
    params = _params(wave.law, wave.c)
    _require_critical(params, "f_curvature_check")
    c0 = wave.law.c0
    s = np.asarray(s_grid, dtype=float)
    if method == "analytic":
        second = F_second_derivative_from_wave(wave, x, s)
    elif method == "difference":
        second = np.array([_second_difference(lambda u: F_from_wave(wave, x, u), value) for value in s])
    else:
        raise ModelError(f"unknown method {method!r}")
    L = np.log(1.0 / s)
    scale = c0 * x * math.exp(c0 * x)
    expansion = 1.0 - math.exp(c0 * x) * s + scale * (s / L - s * np.log(L) / L**2)
    defect = (F_from_wave(wave, x, s) - expansion) / (s / L**2)
    return CurvatureReport(s=s, ratio=second * s * L**2 / scale, expansion_defect=defect, method=method)


def critical_log_profile(wave: WaveSolution, s_fit: float = 1e-4) -> LogProfile:
    """Fit the constant of the logarithmic profile to the wave at ``s_fit``."""
    params = _params(wave.law, wave.c)
    _require_critical(params, "critical_log_profile")
    c0 = wave.law.c0
    g = 1.0 + float(a_from_wave(wave, s_fit)) / (c0 * s_fit)
    if not 0.0 < g < 1.0:
        raise NumericalError(f"wave value at s={s_fit!r} is outside the profile family")
    C = 1.0 / g + math.log(g) - math.log(1.0 / s_fit)
    LOGGER.debug("logarithmic profile constant C=%.10g fitted at s=%.3g", C, s_fit)
    return LogProfile(c0=c0, C=C)


def tail_lower_bound_check(
    emp: EmpiricalDist,
    d: float,
    window: Tuple[int, int] = (10, 1000),
    points: int = 25,
    confidence: float = 0.95,
) -> TailBoundReport:
    """
    ``min_n n**d P(Z > n)`` over ``window`` with a simultaneous lower confidence bound.

    Wilson lower limits at Bonferroni-adjusted level are scaled by ``n**d``.
    The log-log slope of ``n**d P(Z > n)`` is reported; a clearly non-zero
    slope means ``d`` does not describe the tail.

    :raises InsufficientData: if no replica exceeds the top of the window
    """
    if emp.replicas < RECOMMENDED_REPLICAS:
        LOGGER.warning("tail bound from %d replicas; at least %d recommended", emp.replicas, RECOMMENDED_REPLICAS)
    lo, hi = window
    if emp.observed == 0 or emp.tail_count(hi) == 0:
        raise InsufficientData(f"no observed count exceeds {hi}")
    ns = np.unique(np.geomspace(lo, hi, points).round().astype(np.int64))
    level = 1.0 - (1.0 - confidence) / ns.shape[0]
    estimates = np.array([emp.tail_probability(int(n)) for n in ns])
    lower = np.array([emp.tail_interval(int(n), level)[0] for n in ns])
    weights = ns.astype(float) ** d
    statistic = weights * estimates
    slope = float(np.polyfit(np.log(ns), np.log(statistic), 1)[0])
    return TailBoundReport(
        ns=ns,
        statistic=statistic,
        minimum=float(np.min(statistic)),
        lower_bound=float(np.min(weights * lower)),
        slope=slope,
    )


def tail_sum_check(
    q_series: QSeries, law: OffspringLaw, c: float, ns: Sequence[int]
) -> npt.NDArray[np.float64]:
    """
    ``n log(n)**2 sum_{k > n} q_k / c0`` at each ``n``; tends to 1 at critical drift.

    The tail is taken as ``alpha - sum_{k <= n, k != 1} q_k``, so it does not
    depend on where the series was truncated. The approach to 1 is slow, with
    a ``log log n / log n`` correction.
    """
    _require_critical(_params(law, c), "tail_sum_check")
    if isinstance(q_series, GeneratorSeries):
        alpha = q_series.alpha
        rates = q_series.q_rates
    else:
        rates = np.array(q_series, dtype=float, copy=True)
        if rates.shape[0] < 2:
            raise ModelError("the series needs the coefficient a_1")
        alpha = -float(rates[1])
        rates[1] = 0.0
    heads = np.cumsum(rates)
    out = []
    for n in ns:
        if not 2 <= n < rates.shape[0]:
            raise ModelError(f"n={n} outside the available coefficients")
        out.append(_log_weight(n) * (alpha - heads[n]) / law.c0)
    return np.array(out)


def singular_expansion(
    law: OffspringLaw,
    c: float,
    x: float,
    s: npt.ArrayLike,
    K: Optional[float] = None,
    P: Optional[Sequence[float]] = None,
) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """
    Leading singular forms of ``a(1 - s)`` and ``F_x(1 - s)``.

    At critical drift the three-term logarithmic forms are returned. Above
    it ``a(1 - s) = -lambda s + P(s) + K s**d`` (``K s**d log s`` for integer
    ``d``) and ``F_x`` has the same shape with ``exp(lambda x) s`` and
    ``K_x = K (exp(lambda_bar x) - exp(lambda x)) / (lambda_bar - lambda)``.

    :param P: coefficients ``c_2, c_3, ...`` of the polynomial part of ``a``; not carried over to ``F_x``
    """
    params = _params(law, c)
    s = np.asarray(s, dtype=float)
    if params.is_critical:
        c0 = law.c0
        L = np.log(1.0 / s)
        correction = s / L - s * np.log(L) / L**2
        return -c0 * s + c0 * correction, 1.0 - math.exp(c0 * x) * s + c0 * x * math.exp(c0 * x) * correction
    _require_subcritical(params, "singular_expansion")
    if K is None:
        raise MissingConstant("the singular expansion above critical drift needs K")
    d, lam = float(params.d), float(params.lambda_minus)  # type: ignore[arg-type]
    singular = s**d * np.log(s) if abs(d - round(d)) < 1e-12 else s**d
    polynomial_part = sum(coeff * s ** (k + 2) for k, coeff in enumerate(P or ()))
    K_x = K * ratio_target(law, c, x)
    return -lam * s + polynomial_part + K * singular, 1.0 - math.exp(lam * x) * s + K_x * singular


def _rho(law: OffspringLaw, c: float) -> complex:
    return cmath.sqrt(c * c - law.c0 * law.c0)


def two_barrier_mean(law: OffspringLaw, c: float, a: float, b: float, y: float) -> float:
    """``E^y[Z_{a,b}] = exp(c(a - y)) sinh((b - y) rho) / sinh((b - a) rho)`` for ``|c| >= c0``."""
    if not a < y < b:
        raise ModelError(f"need a < y < b, got a={a!r}, y={y!r}, b={b!r}")
    if abs(c) < law.c0:
        raise RegimeMismatch(f"two-barrier moments need |c| >= c0, got c={c!r}")
    rho = _rho(law, c).real
    if rho == 0.0:
        return math.exp(c * (a - y)) * (b - y) / (b - a)
    return math.exp(c * (a - y)) * math.sinh((b - y) * rho) / math.sinh((b - a) * rho)


def two_barrier_second_moment(law: OffspringLaw, c: float, a: float, b: float, y: float) -> float:
    """
    ``E^y[Z_{a,b}**2]`` for ``|c| > c0``; the two integrals are evaluated by adaptive quadrature.
    """
    mean = two_barrier_mean(law, c, a, b, y)
    rho = _rho(law, c).real
    if rho == 0.0:
        raise RegimeMismatch("the second moment formula needs |c| > c0")

    def inner(r: float) -> float:
        return math.exp(c * (a - r)) * math.sinh((b - r) * rho) ** 2 * math.sinh((r - a) * rho)

    def outer(r: float) -> float:
        return math.exp(c * (a - r)) * math.sinh((b - r) * rho) ** 3

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            below, _ = integrate.quad(inner, a, y, epsabs=0.0, epsrel=1e-12)
            above, _ = integrate.quad(outer, y, b, epsabs=0.0, epsrel=1e-12)
        except integrate.IntegrationWarning as e:
            raise NumericalError(f"two-barrier quadrature failed: {e}") from e
    prefactor = 2.0 * law.V * math.exp(c * (a - y)) / (rho * math.sinh((b - a) * rho) ** 3)
    return prefactor * (math.sinh((b - y) * rho) * below + math.sinh((y - a) * rho) * above) + mean


def two_barrier_scaled_mean(law: OffspringLaw, c: float, a: float, b: float, y: float = 0.0) -> float:
    """``exp(-(c + rho) a) E^y[Z_{a,b}]``, which converges as ``a -> -inf``."""
    rho = _rho(law, c).real
    return math.exp(-(c + rho) * a) * two_barrier_mean(law, c, a, b, y)


def two_barrier_scaled_second_moment(law: OffspringLaw, c: float, a: float, b: float, y: float = 0.0) -> float:
    """
    ``E^y[Z_{a,b}**2]`` divided by its growth in ``a``: ``exp((c + rho) a)``
    for ``c > c0`` and ``exp(2 (c + rho) a)`` for ``c < -c0``.
    """
    rho = _rho(law, c).real
    power = 1.0 if c > 0.0 else 2.0
    return math.exp(-power * (c + rho) * a) * two_barrier_second_moment(law, c, a, b, y)


def paley_zygmund_bound(mean: float, second_moment: float, theta: float) -> float:
    """Lower bound ``(1 - theta)**2 E[Z]**2 / E[Z**2]`` on ``P(Z > theta E[Z])``."""
    if not 0.0 <= theta <= 1.0:
        raise ModelError(f"theta must lie in [0, 1], got {theta!r}")
    if not second_moment > 0.0:
        raise ModelError("the second moment must be positive")
    return (1.0 - theta) ** 2 * mean * mean / second_moment

"""
The continuous-time Galton-Watson process ``(Z_x)`` of absorbed counts.

``F_x(s) = E[s**Z_x]`` satisfies the backward equation ``dF/dx = a(F)`` and
the forward equation ``dF/dx = a(s) dF/ds``. This module evolves ``F``,
extracts ``P(Z_x = n)`` from circle samples of ``F`` and checks the integral
identities that tie ``F`` to ``a``.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Dict
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np
import numpy.typing as npt
from scipy import integrate
from scipy import special
from scipy.integrate import solve_ivp

from .artifacts import render_csv
from .errors import ModelError
from .errors import NumericalError
from .fkpp_wave import WaveSolution
from .fkpp_wave import a_derivative_from_wave
from .fkpp_wave import a_from_wave
from .generator_solver import GeneratorSeries
from .offspring_law import DriftParams
from .offspring_law import OffspringLaw
from .offspring_law import Regime
from .offspring_law import drift_params
from .series_engine import InvalidSampling
from .series_engine import circle_nodes
from .series_engine import coefficients_from_samples
from .series_engine import mirror_half_samples
from .series_engine import sampling_size
from .series_engine import ser_eval_circle

__all__ = [
    "GeneratorEvaluator",
    "AbsorptionDistribution",
    "IdentityReport",
    "evolve_F",
    "distribution",
    "verify_identities",
    "semigroup_defect",
    "forward_equation_residual",
    "ToleranceFailure",
    "DomainEscape",
    "QuadratureFailure",
    "RegimeRejected",
]

LOGGER = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
SERIES_RADIUS = 0.9
DOMAIN_SLACK = 1e-9
FIXED_POINT_EXCLUSION = 1e-3
TAIL_WINDOW = 0.1


class ToleranceFailure(NumericalError):
    pass


class DomainEscape(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class RegimeRejected(ModelError):
    pass


class GeneratorEvaluator:
    """
    Evaluates ``a`` from the best available representation.

    Complex arguments and real arguments up to ``switch`` go to the power
    series. Real arguments above ``switch`` go to the travelling wave, which
    stays accurate next to the singular point ``s = 1``; below the solved
    tail of the wave ``a(s)`` is continued by ``-lambda_c (1 - s)``.
    """

    def __init__(
        self,
        gen: Optional[GeneratorSeries] = None,
        wave: Optional[WaveSolution] = None,
        switch: float = SERIES_RADIUS,
    ) -> None:
        if gen is None and wave is None:
            raise ModelError("an evaluator needs a generator series, a wave or both")
        if gen is not None and wave is not None and (gen.law != wave.law or gen.c != wave.c):
            raise ModelError("series and wave were computed for different models")
        source: Union[GeneratorSeries, WaveSolution] = gen if gen is not None else wave  # type: ignore[assignment]
        self.gen = gen
        self.wave = wave
        self.switch = switch
        self.law: OffspringLaw = source.law
        self.c: float = source.c
        self.params: DriftParams = drift_params(self.law, self.c)

    @classmethod
    def of(cls, source: Union["GeneratorEvaluator", GeneratorSeries, WaveSolution]) -> "GeneratorEvaluator":
        if isinstance(source, GeneratorEvaluator):
            return source
        if isinstance(source, GeneratorSeries):
            return cls(gen=source)
        return cls(wave=source)

    @property
    def q_prime(self) -> float:
        return self.law.q_prime

    @property
    def series(self) -> GeneratorSeries:
        if self.gen is None:
            raise ModelError("this evaluator has no power series of a")
        return self.gen

    def _wave_mask(self, s: npt.NDArray[Any]) -> npt.NDArray[np.bool_]:
        if self.wave is None or np.iscomplexobj(s):
            return np.zeros(s.shape, dtype=bool)
        mask = s > self.q_prime if self.gen is None else s > self.switch
        return mask & (1.0 - s < self.wave.top)

    def _split(self, s: npt.ArrayLike) -> Any:
        values = np.atleast_1d(np.asarray(s))
        mask = self._wave_mask(values)
        if self.gen is None and not np.all(mask):
            raise ModelError("a wave-only evaluator needs real arguments in (q', 1]")
        return values, mask

    def __call__(self, s: npt.ArrayLike) -> Any:
        values, mask = self._split(s)
        out = np.zeros(values.shape, dtype=np.result_type(values, np.float64))
        if np.any(~mask):
            out[~mask] = self.series(values[~mask])
        if np.any(mask):
            u = 1.0 - values[mask]
            lo = self.wave.s_range[0]  # type: ignore[union-attr]
            inside = u >= lo
            part = -self.params.lambda_minus * u  # type: ignore[operator]
            part[inside] = a_from_wave(self.wave, u[inside])  # type: ignore[arg-type]
            out[mask] = part
        return out[0] if np.ndim(s) == 0 else out

    def derivative(self, s: npt.ArrayLike) -> Any:
        values, mask = self._split(s)
        out = np.zeros(values.shape, dtype=np.result_type(values, np.float64))
        if np.any(~mask):
            out[~mask] = self.series.derivative_at(values[~mask])
        if np.any(mask):
            u = 1.0 - values[mask]
            inside = u >= self.wave.s_range[0]  # type: ignore[union-attr]
            part = np.full(u.shape, float(self.params.lambda_minus))  # type: ignore[arg-type]
            part[inside] = a_derivative_from_wave(self.wave, u[inside])  # type: ignore[arg-type]
            out[mask] = part
        return out[0] if np.ndim(s) == 0 else out


@dataclass(frozen=True, eq=False)
class AbsorptionDistribution:
    """
    ``P(Z_x = n)`` for ``n = 0..N`` recovered from circle samples of ``F_x``.

    ``mass_defect`` is the probability beyond ``N``; ``mean`` includes a
    tail correction (``tail_correction``) for the truncated part.
    """

    x: float
    probs: npt.NDArray[np.float64]
    mass_defect: float
    mean: float
    radius: float = 0.0
    samples: int = 0
    tail_correction: float = 0.0
    imag_residue: float = 0.0
    delta: int = 1
    method: str = "paired"
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.probs.shape[0] - 1

    @property
    def span_defect(self) -> float:
        """Largest ``|P(Z_x = n)|`` over ``n`` off the lattice ``1 + delta Z``."""
        index = np.arange(self.probs.shape[0])
        off = (index - 1) % self.delta != 0
        return float(np.max(np.abs(self.probs[off]))) if np.any(off) else 0.0

    def metadata(self) -> Dict[str, Any]:
        return {
            "x": self.x,
            "r": self.radius,
            "N": self.N,
            "M": self.samples,
            "mass_defect": self.mass_defect,
            "mean": self.mean,
            "tail_correction": self.tail_correction,
            "imag_residue": self.imag_residue,
            "method": self.method,
        }

    def to_csv(self) -> bytes:
        index = np.arange(self.probs.shape[0], dtype=np.int64)
        return render_csv([("n", index), ("P(Z_x=n)", self.probs)])


@dataclass(frozen=True)
class IdentityReport:
    """Residuals of the integral identities on a grid of real starting points."""

    x: float
    s_used: tuple
    s_excluded: tuple
    integral_residual: float
    exponential_defect: float

    def as_dict(self) -> Dict[str, Any]:
        return {
            "x": self.x,
            "s_used": list(self.s_used),
            "s_excluded": list(self.s_excluded),
            "integral_residual": self.integral_residual,
            "exponential_defect": self.exponential_defect,
        }


def _paired_flow(law: OffspringLaw, c: float) -> Any:
    def rhs(x: float, y: npt.NDArray[Any]) -> npt.NDArray[Any]:
        half = y.shape[0] // 2
        F, A = y[:half], y[half:]
        return np.concatenate([A, 2.0 * c * A + 2.0 * (F - law.pgf(F))])

    return rhs


def _integrate(rhs: Any, x: float, y0: npt.NDArray[Any], tol: float) -> npt.NDArray[Any]:
    solution = solve_ivp(rhs, (0.0, x), y0, method="DOP853", rtol=tol, atol=1e-3 * tol)
    if not solution.success:
        raise ToleranceFailure(f"integration of F failed: {solution.message}")
    LOGGER.debug("F integrated to x=%.6g in %d steps", x, solution.t.shape[0] - 1)
    return solution.y


def _evolve_paired(
    law: OffspringLaw, c: float, x: float, s0: npt.NDArray[Any], a0: npt.NDArray[Any], tol: float
) -> npt.NDArray[Any]:
    """
    Integrate ``F' = A, A' = 2 c A + 2 (F - f(F))`` from ``(s0, a(s0))``.

    ``A = a(F)`` is invariant under this flow, so ``a`` is only needed at the
    starting points.
    """
    dtype = np.result_type(s0, a0, np.float64)
    path = _integrate(_paired_flow(law, c), x, np.concatenate([s0, a0]).astype(dtype), tol)
    return path[: s0.shape[0]]


def evolve_F(
    a_eval: Union[GeneratorEvaluator, GeneratorSeries, WaveSolution],
    x: float,
    s0: npt.ArrayLike,
    method: str = "backward",
    tol: float = DEFAULT_TOL,
) -> Any:
    """
    ``F_x(s0)`` from the backward equation ``dF/dx = a(F)``, ``F_0 = s0``.

    :param a_eval: evaluator of ``a`` (or a series or wave to build one from)
    :param x: barrier distance, non-negative
    :param s0: starting point(s) in the closed unit disk, not 1
    :param method: ``"backward"`` or ``"paired"``
    :param tol: relative tolerance of the adaptive integrator
    :raises ToleranceFailure: if the integrator fails
    :raises DomainEscape: if ``|F|`` exceeds ``1 + 1e-9``
    """
    evaluator = GeneratorEvaluator.of(a_eval)
    if x < 0.0:
        raise ModelError(f"barrier distance must be non-negative, got {x!r}")
    start = np.atleast_1d(np.asarray(s0))
    start = start.astype(np.result_type(start, np.float64))
    if np.any(np.abs(start) > 1.0 + DOMAIN_SLACK) or np.any(start == 1.0):
        raise ModelError("starting points must lie in the closed unit disk minus 1")
    if x == 0.0:
        return s0

    result = start.copy()
    moving = ~((start.imag == 0.0) & (start.real == evaluator.q_prime))
    if np.any(moving):
        if method == "backward":
            path = _integrate(lambda _, y: evaluator(y), x, start[moving], tol)
        elif method == "paired":
            path = _evolve_paired(
                evaluator.law, evaluator.c, x, start[moving], np.atleast_1d(evaluator(start[moving])), tol
            )
        else:
            raise ModelError(f"unknown method {method!r}")
        if np.any(np.abs(path) > 1.0 + DOMAIN_SLACK):
            raise DomainEscape(f"|F| reached {float(np.max(np.abs(path))):.12g}; a is inconsistent")
        result[moving] = path[:, -1]
    return result[0] if np.ndim(s0) == 0 else result


def _mean_tail(probs: npt.NDArray[np.float64], params: DriftParams, delta: int) -> float:
    """
    Expected contribution of ``n > N`` to the mean.

    The exponent is the one known for the regime: ``P(Z_x = n) ~ C n**-(d+1)``
    with speed above critical and ``~ C / (n log n)**2`` at critical speed;
    ``C`` is the median of the scaled probabilities over the last tenth of
    the lattice indices.
    """
    N = probs.shape[0] - 1
    index = np.arange(probs.shape[0])
    window = (index >= max(2, int((1.0 - TAIL_WINDOW) * N))) & ((index - 1) % delta == 0)
    if N < 20 or not np.any(window):
        return 0.0
    n = index[window].astype(float)
    if params.regime is Regime.CRITICAL:
        constant = float(np.median(probs[window] * n * n * np.log(n) ** 2))
        return max(0.0, constant / delta / math.log(N + 0.5))
    exponent = float(params.d) + 1.0  # type: ignore[arg-type]
    constant = float(np.median(probs[window] * n**exponent))
    return max(0.0, constant / delta * float(special.zeta(exponent - 1.0, N + 1.0)))


def distribution(
    a_eval: Union[GeneratorEvaluator, GeneratorSeries],
    x: float,
    N: int,
    r: Optional[float] = None,
    samples: Optional[int] = None,
    method: str = "paired",
    tol: float = DEFAULT_TOL,
) -> AbsorptionDistribution:
    """
    ``P(Z_x = n)`` for ``n <= N`` by Cauchy extraction of ``F_x`` on a circle.

    ``F_x`` is evolved on the upper half of the ``M``-point circle of radius
    ``r`` in one vectorized integration; the lower half follows by conjugate
    symmetry. With ``method="paired"`` the starting slopes ``a(s)`` come
    from one FFT of the series.

    :param a_eval: evaluator holding the power series of ``a``
    :param x: barrier distance
    :param N: last probability index
    :param r: sampling radius, default ``1 - 4/N``
    :param samples: power-of-two ``M`` with ``N < M/8``, default the smallest such
    :raises RegimeRejected: below the critical drift, where ``Z_x`` may be infinite
    """
    evaluator = GeneratorEvaluator.of(a_eval)
    params = evaluator.params
    if not params.extinction_certain:
        raise RegimeRejected(f"regime {params.regime.value}: Z_x is infinite with positive probability")
    if N < 1:
        raise InvalidSampling(f"N must be positive, got {N!r}")
    radius = 1.0 - 4.0 / max(N, 8) if r is None else float(r)
    M = sampling_size(N + 1) if samples is None else int(samples)
    if 8 * N >= M:
        raise InvalidSampling(f"N={N} needs more than {M} samples (N < M/8)")

    nodes = circle_nodes(radius, M, half=True)
    nodes[0], nodes[-1] = radius, -radius
    if x == 0.0:
        values = nodes
    elif method == "paired":
        a0 = ser_eval_circle(evaluator.series.series, radius, M)[: M // 2 + 1]
        a0[0], a0[-1] = a0[0].real, a0[-1].real
        values = _evolve_paired(evaluator.law, evaluator.c, x, nodes, a0, tol)[:, -1]
    else:
        values = evolve_F(evaluator, x, nodes, method=method, tol=tol)
    axis_imag = max(abs(values[0].imag), abs(values[-1].imag))
    values[0], values[-1] = values[0].real, values[-1].real

    extraction = coefficients_from_samples(mirror_half_samples(values, M), radius, N, real=True)
    probs = extraction.coeffs
    total = math.fsum(probs)
    tail = _mean_tail(probs, params, evaluator.law.delta)
    mean = math.fsum(np.arange(N + 1) * probs) + tail
    LOGGER.info(
        "distribution at x=%.6g: N=%d, r=%.8g, M=%d, mass defect %.3e, mean %.10g (tail %.3e)",
        x,
        N,
        radius,
        M,
        1.0 - total,
        mean,
        tail,
    )
    return AbsorptionDistribution(
        x=float(x),
        probs=probs,
        mass_defect=1.0 - total,
        mean=mean,
        radius=radius,
        samples=M,
        tail_correction=tail,
        imag_residue=max(extraction.imag_residue, axis_imag),
        delta=evaluator.law.delta,
        method=method,
    )


def _quad(func: Any, lo: float, hi: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(func, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)
        except integrate.IntegrationWarning as e:
            raise QuadratureFailure(f"quadrature on [{lo!r}, {hi!r}] failed: {e}") from e
    return float(value)


def verify_identities(
    source: Union[GeneratorEvaluator, GeneratorSeries, WaveSolution],
    x: float,
    s_grid: Sequence[float],
) -> IdentityReport:
    """
    Check ``int_s^{F_x(s)} dr / a(r) = x`` and the exponential identity.

    With ``f*(r) = lambda_c / a(r) + 1/(1 - r)`` the second identity reads
    ``1 - F_x(s) = exp(lambda_c x) (1 - s) exp(-int_s^{F_x(s)} f*(r) dr)``.
    Points within 1e-3 of ``q'`` are excluded since ``1/a`` is not
    integrable there.

    :return: the largest absolute residual of the first identity and the
        largest relative defect of the second
    """
    evaluator = GeneratorEvaluator.of(source)
    lam = evaluator.params.lambda_minus
    if lam is None or not evaluator.params.extinction_certain:
        raise RegimeRejected(f"identities need c >= c0, got regime {evaluator.params.regime.value}")
    q = evaluator.q_prime
    used, excluded = [], []
    integral_residual = 0.0
    exponential_defect = 0.0
    for s in s_grid:
        s = float(s)
        if not q < s < 1.0:
            raise ModelError(f"grid point {s!r} outside ({q!r}, 1)")
        if s - q < FIXED_POINT_EXCLUSION:
            LOGGER.warning("excluding s=%.6g within %.0e of the fixed point", s, FIXED_POINT_EXCLUSION)
            excluded.append(s)
            continue
        F = float(evolve_F(evaluator, x, s))

        def inverse(r: float) -> float:
            return 1.0 / float(evaluator(r))

        def f_star(r: float) -> float:
            return lam / float(evaluator(r)) + 1.0 / (1.0 - r)

        integral = _quad(inverse, s, F)
        exponent = _quad(f_star, s, F)
        predicted = math.exp(lam * x) * (1.0 - s) * math.exp(-exponent)
        integral_residual = max(integral_residual, abs(integral - x))
        exponential_defect = max(exponential_defect, abs(predicted / (1.0 - F) - 1.0))
        used.append(s)
    LOGGER.info(
        "identities at x=%.6g: integral residual %.3e, exponential defect %.3e over %d points",
        x,
        integral_residual,
        exponential_defect,
        len(used),
    )
    return IdentityReport(
        x=float(x),
        s_used=tuple(used),
        s_excluded=tuple(excluded),
        integral_residual=integral_residual,
        exponential_defect=exponential_defect,
    )


def semigroup_defect(
    a_eval: Union[GeneratorEvaluator, GeneratorSeries],
    x: float,
    y: float,
    s_points: npt.ArrayLike,
    tol: float = DEFAULT_TOL,
) -> float:
    """``max |F_{x+y}(s) - F_x(F_y(s))|`` over ``s_points``."""
    evaluator = GeneratorEvaluator.of(a_eval)
    s = np.asarray(s_points)
    direct = evolve_F(evaluator, x + y, s, tol=tol)
    composed = evolve_F(evaluator, x, evolve_F(evaluator, y, s, tol=tol), tol=tol)
    return float(np.max(np.abs(direct - composed)))


def forward_equation_residual(
    a_eval: Union[GeneratorEvaluator, GeneratorSeries],
    xs: npt.ArrayLike,
    ss: npt.ArrayLike,
    step: float = 1e-4,
) -> float:
    """
    ``max |dF/dx - a(s) dF/ds|`` over the grid ``xs`` by ``ss``.

    Both derivatives are central differences of :func:`evolve_F` with the
    same ``step``.
    """
    evaluator = GeneratorEvaluator.of(a_eval)
    worst = 0.0
    for x in np.atleast_1d(np.asarray(xs, dtype=float)):
        if x <= step:
            raise ModelError(f"x must exceed the difference step {step!r}")
        for s in np.atleast_1d(np.asarray(ss)):
            d_dx = (evolve_F(evaluator, x + step, s) - evolve_F(evaluator, x - step, s)) / (2.0 * step)
            d_ds = (evolve_F(evaluator, x, s + step) - evolve_F(evaluator, x, s - step)) / (2.0 * step)
            worst = max(worst, float(abs(d_dx - evaluator(s) * d_ds)))
    return worst

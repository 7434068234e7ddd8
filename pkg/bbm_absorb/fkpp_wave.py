"""
The monotone travelling wave of the FKPP equation as an oracle for ``a`` and ``F_x``.

The wave ``phi`` solves ``phi''/2 + c phi' = f(1 - phi) - (1 - phi)`` with
``phi(-inf) = 1 - q'`` and ``phi(+inf) = 0``. It yields

* ``a(1 - s) = phi'(phi^{-1}(s))`` and
* ``F_x(1 - s) = 1 - phi(phi^{-1}(s) - x)``,

which stay accurate arbitrarily close to ``s = 0`` where the power series
of ``a`` converges too slowly.

The wave leaves the saddle ``(1 - q', 0)`` along its one-dimensional
unstable manifold. It is integrated forward from a point on that manifold
into the tail, stopping once ``phi`` falls below ``eps_tail``; the
translation is fixed by ``phi(0) = (1 - q')/2``.
"""
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Optional
from typing import Tuple

import numpy as np
import numpy.typing as npt
from scipy import optimize
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from .artifacts import render_csv
from .errors import ModelError
from .errors import NumericalError
from .offspring_law import OffspringLaw
from .offspring_law import Regime
from .offspring_law import drift_params

__all__ = [
    "WaveSolution",
    "solve_wave",
    "a_from_wave",
    "a_derivative_from_wave",
    "a_second_derivative_from_wave",
    "F_from_wave",
    "F_derivative_from_wave",
    "F_second_derivative_from_wave",
    "wave_residual",
    "TailAnsatzInvalid",
    "Blowup",
    "OutOfRange",
    "WaveRegimeError",
]

LOGGER = logging.getLogger(__name__)

DEFAULT_X_MAX = 40.0
DEFAULT_EPS_TAIL = 1e-12
DEFAULT_TOL = 1e-12
SADDLE_OFFSET = 1e-7
MAX_SPAN = 1e4
NEWTON_POLISH = 4


class TailAnsatzInvalid(NumericalError):
    pass


class Blowup(NumericalError):
    pass


class OutOfRange(ModelError):
    pass


class WaveRegimeError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class WaveSolution:
    """
    Sampled travelling wave with its dense interpolant.

    ``xs`` is ascending, ``phi`` strictly decreasing and ``dphi`` negative.
    ``K_hat`` is the slope of ``phi(x) exp(c0 x)`` in the tail and only set
    for the critical drift; it depends on the translation convention.
    """

    xs: npt.NDArray[np.float64]
    phi: npt.NDArray[np.float64]
    dphi: npt.NDArray[np.float64]
    c: float
    law: OffspringLaw
    K_hat: Optional[float] = None
    shift: float = 0.0
    dense: Any = field(default=None, repr=False, compare=False)
    inverse_guess: Any = field(default=None, repr=False, compare=False)

    @property
    def top(self) -> float:
        return 1.0 - self.law.q_prime

    @property
    def s_range(self) -> Tuple[float, float]:
        """Range of ``phi`` covered by the stored grid."""
        return float(self.phi[-1]), float(self.phi[0])

    def state(self, x: npt.ArrayLike) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
        """``phi`` and ``phi'`` at ``x`` from the solver's dense output."""
        x = np.asarray(x, dtype=float)
        values = self.dense(x + self.shift)
        return values[0], values[1]

    def second_derivative(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
        phi, dphi = self.state(x)
        return _wave_acceleration(self.law, self.c, phi, dphi)

    def third_derivative(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
        phi, dphi = self.state(x)
        ddphi = _wave_acceleration(self.law, self.c, phi, dphi)
        return -2.0 * self.law.gap_near_one_derivative(phi) * dphi - 2.0 * self.c * ddphi

    def inverse(self, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """
        ``phi^{-1}(s)``: monotone cubic interpolation of ``x`` against
        ``log phi`` for the first guess, then Newton steps on the dense output.
        """
        s = np.asarray(s, dtype=float)
        lo, hi = self.s_range
        if np.any(s < lo) or np.any(s > hi):
            raise OutOfRange(f"s outside the solved range [{lo:.3e}, {hi:.6g}]")
        log_s = np.log(s)
        x = np.clip(self.inverse_guess(-log_s), self.xs[0], self.xs[-1])
        for _ in range(NEWTON_POLISH):
            phi, dphi = self.state(x)
            x = np.clip(x - (np.log(phi) - log_s) * phi / dphi, self.xs[0], self.xs[-1])
        return x

    def to_csv(self) -> bytes:
        return render_csv([("x", self.xs), ("phi", self.phi), ("dphi", self.dphi)])


def _wave_acceleration(
    law: OffspringLaw, c: float, phi: npt.ArrayLike, dphi: npt.ArrayLike
) -> npt.NDArray[np.float64]:
    """``phi''`` from the wave ODE, with the reaction term taken from the expansion about 1."""
    return -2.0 * law.gap_near_one(phi) - 2.0 * c * np.asarray(dphi)


def _refined_grid(dense: Any, times: npt.NDArray[np.float64], spacing: float) -> npt.NDArray[np.float64]:
    """Insert points so that ``phi`` changes by less than ``spacing`` per interval."""
    values = dense(times)[0]
    pieces = [times[:1]]
    for left, right, jump in zip(times[:-1], times[1:], np.abs(np.diff(values))):
        count = max(1, int(math.ceil(jump / spacing)))
        pieces.append(np.linspace(left, right, count + 1)[1:])
    return np.concatenate(pieces)


def _tail_constant(xs: npt.NDArray[np.float64], phi: npt.NDArray[np.float64], c0: float) -> float:
    """Slope of ``phi(x) exp(c0 x) = K x + K'`` over the last third of the tail."""
    start = xs[0] + 2.0 * (xs[-1] - xs[0]) / 3.0
    mask = xs >= start
    slope, _ = np.polyfit(xs[mask], phi[mask] * np.exp(c0 * xs[mask]), 1)
    return float(slope)


def solve_wave(
    law: OffspringLaw,
    c: float,
    X_max: float = DEFAULT_X_MAX,
    eps_tail: float = DEFAULT_EPS_TAIL,
    tol: float = DEFAULT_TOL,
) -> WaveSolution:
    """
    Solve for the travelling wave at drift ``c >= c0``.

    :param law: reproduction law
    :param c: drift, at least ``c0``
    :param X_max: largest stored abscissa after normalization
    :param eps_tail: integration stops once ``phi`` drops below this value
    :param tol: relative tolerance of the embedded Runge-Kutta pair
    :raises WaveRegimeError: for ``c < c0``
    :raises Blowup: if the integrator fails
    :raises TailAnsatzInvalid: if ``phi`` is not strictly decreasing
    """
    params = drift_params(law, c)
    if not params.extinction_certain:
        raise WaveRegimeError(f"no monotone wave for drift {c!r} below the critical drift {law.c0!r}")
    top = 1.0 - law.q_prime
    unstable = -c + math.sqrt(c * c + 2.0 * (1.0 - float(law.pgf_derivative(law.q_prime))))
    offset = SADDLE_OFFSET * top

    def rhs(x: float, y: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        return np.array([y[1], _wave_acceleration(law, c, y[0], y[1])])

    def reached_tail(x: float, y: npt.NDArray[np.float64]) -> float:
        return y[0] - eps_tail

    reached_tail.terminal = True  # type: ignore[attr-defined]

    solution = solve_ivp(
        rhs,
        (0.0, MAX_SPAN),
        [top - offset, -unstable * offset],
        method="DOP853",
        rtol=tol,
        atol=1e-6 * tol * eps_tail,
        dense_output=True,
        events=reached_tail,
    )
    if solution.status == -1:
        raise Blowup(f"wave integration failed: {solution.message}")
    if np.any(solution.y[1] >= 0.0) or np.any(np.diff(solution.y[0]) >= 0.0):
        raise TailAnsatzInvalid("wave is not strictly decreasing; the drift is too small for a monotone front")

    dense = solution.sol
    half = top / 2.0
    shift = optimize.brentq(lambda x: dense(x)[0] - half, solution.t[0], solution.t[-1], xtol=1e-15)
    end = min(float(solution.t[-1]), shift + X_max)
    times = solution.t[solution.t <= end]
    if times[-1] < end:
        times = np.append(times, end)
    grid = _refined_grid(dense, times, 1e-3 * top)
    phi, dphi = dense(grid)
    xs = grid - shift

    if params.regime is Regime.SUBCRITICAL_SPEED:
        rate = -dphi[-1] / phi[-1]
        LOGGER.debug("wave tail log-slope %.10g vs lambda_c %.10g", rate, params.lambda_minus)
    K_hat = _tail_constant(xs, phi, law.c0) if params.is_critical else None
    order = np.argsort(-phi)
    inverse_guess = PchipInterpolator(-np.log(phi[order]), xs[order])
    LOGGER.info("wave solved: %d grid points on [%.3f, %.3f], phi_min=%.3e", xs.shape[0], xs[0], xs[-1], phi[-1])
    return WaveSolution(
        xs=xs,
        phi=phi,
        dphi=dphi,
        c=float(c),
        law=law,
        K_hat=K_hat,
        shift=float(shift),
        dense=dense,
        inverse_guess=inverse_guess,
    )


def a_from_wave(wave: WaveSolution, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """``a(1 - s) = phi'(phi^{-1}(s))`` for ``s`` in the solved range."""
    return wave.state(wave.inverse(s))[1]


def a_derivative_from_wave(wave: WaveSolution, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """``a'(1 - s) = -phi''/phi'`` at ``phi^{-1}(s)``."""
    x = wave.inverse(s)
    _, dphi = wave.state(x)
    return -wave.second_derivative(x) / dphi


def a_second_derivative_from_wave(wave: WaveSolution, s: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """``a''(1 - s) = (phi''' phi' - phi''**2) / phi'**3`` at ``phi^{-1}(s)``."""
    x = wave.inverse(s)
    _, dphi = wave.state(x)
    ddphi = wave.second_derivative(x)
    return (wave.third_derivative(x) * dphi - ddphi * ddphi) / dphi**3


def _translated(wave: WaveSolution, x: float, s: npt.ArrayLike) -> Tuple[npt.NDArray[np.float64], Any]:
    if x < 0.0:
        raise OutOfRange(f"barrier distance must be non-negative, got {x!r}")
    xi = wave.inverse(s)
    moved = xi - x
    if np.any(moved < wave.xs[0]):
        raise OutOfRange(f"translation by {x!r} leaves the solved grid")
    return xi, moved


def F_from_wave(wave: WaveSolution, x: float, s: npt.ArrayLike) -> Any:
    """``F_x(1 - s) = 1 - phi(phi^{-1}(s) - x)``; equal to ``1 - s`` at ``x = 0``."""
    if x == 0.0:
        return 1.0 - np.asarray(s, dtype=float)
    _, moved = _translated(wave, x, s)
    return 1.0 - wave.state(moved)[0]


def F_derivative_from_wave(wave: WaveSolution, x: float, s: npt.ArrayLike) -> Any:
    """``F_x'(1 - s) = phi'(xi - x) / phi'(xi)`` with ``xi = phi^{-1}(s)``."""
    xi, moved = _translated(wave, x, s)
    return wave.state(moved)[1] / wave.state(xi)[1]


def F_second_derivative_from_wave(wave: WaveSolution, x: float, s: npt.ArrayLike) -> Any:
    """``F_x''(1 - s)`` from first and second wave derivatives at ``xi`` and ``xi - x``."""
    xi, moved = _translated(wave, x, s)
    d_here, d_there = wave.state(xi)[1], wave.state(moved)[1]
    dd_here, dd_there = wave.second_derivative(xi), wave.second_derivative(moved)
    return (d_there * dd_here - dd_there * d_here) / d_here**3


def wave_residual(wave: WaveSolution, refine: int = 4, step: float = 2e-3) -> float:
    """
    Relative residual of the wave ODE by second divided differences.

    The stored grid is subdivided ``refine`` times; at each interior point
    ``phi''`` from central differences of the dense output with a fixed
    ``step`` is compared with the ODE right-hand side.
    """
    xs = np.linspace(wave.xs[0] + step, wave.xs[-1] - step, refine * wave.xs.shape[0])
    phi_minus, _ = wave.state(xs - step)
    phi_mid, dphi_mid = wave.state(xs)
    phi_plus, _ = wave.state(xs + step)
    difference = (phi_plus - 2.0 * phi_mid + phi_minus) / (step * step)
    exact = _wave_acceleration(wave.law, wave.c, phi_mid, dphi_mid)
    return float(np.max(np.abs(difference - exact)) / np.max(np.abs(exact)))

"""Compiled inner loops for the series arithmetic.

numba is optional at import time. Without it the kernels fall back to plain
numpy dot products, which are fast but not compensated.
"""
import logging
from typing import Any
from typing import Callable

import numpy as np
import numpy.typing as npt

try:  # pragma: nocover
    import numba as nb

    HAVE_NUMBA = True
except Exception:  # pragma: nocover
    nb = None
    HAVE_NUMBA = False

__all__ = ["HAVE_NUMBA", "kahan_convolve", "generator_recursion"]

LOGGER = logging.getLogger(__name__)


def _njit(*args: Any, **kwargs: Any) -> Callable[..., Any]:
    if HAVE_NUMBA:
        return nb.njit(*args, **kwargs)

    def wrap(func: Callable[..., Any]) -> Callable[..., Any]:  # pragma: nocover
        return func

    return wrap


if HAVE_NUMBA:  # pragma: nocover
    prange = nb.prange
else:  # pragma: nocover
    prange = range


@_njit(nogil=True, parallel=True, cache=False)
def _kahan_convolve_compiled(a: np.ndarray, b: np.ndarray, n_out: int) -> np.ndarray:  # pragma: nocover
    out = np.zeros(n_out, dtype=a.dtype)
    for n in prange(n_out):
        acc = a[0] * b[0] * 0.0
        comp = acc
        lo = max(0, n - b.shape[0] + 1)
        hi = min(n, a.shape[0] - 1)
        for j in range(lo, hi + 1):
            y = a[j] * b[n - j] - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
        out[n] = acc
    return out


@_njit(nogil=True, cache=False)
def _generator_recursion_compiled(
    forcing: np.ndarray, drift: float, slope: float, out: np.ndarray
) -> None:  # pragma: nocover
    n_max = out.shape[0] - 1
    denominator_base = 2.0 * drift
    for n in range(2, n_max + 1):
        acc = 0.0
        comp = 0.0
        for i in range(2, n // 2 + 1):
            y = out[i] * out[n + 1 - i] - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
        acc = 2.0 * acc
        if n % 2 == 1:
            acc += out[(n + 1) // 2] * out[(n + 1) // 2]
        weighted = 0.5 * (n + 1) * acc
        out[n] = (2.0 * forcing[n] - weighted) / ((n + 1) * slope - denominator_base)


def kahan_convolve(a: npt.NDArray[Any], b: npt.NDArray[Any], n_out: int) -> npt.NDArray[Any]:
    """First ``n_out`` coefficients of the Cauchy product of ``a`` and ``b``."""
    if HAVE_NUMBA:
        dtype = np.result_type(a, b)
        return _kahan_convolve_compiled(np.ascontiguousarray(a, dtype), np.ascontiguousarray(b, dtype), n_out)
    full = np.convolve(a, b)
    out = np.zeros(n_out, dtype=full.dtype)
    out[: min(n_out, full.shape[0])] = full[:n_out]
    return out


def generator_recursion(forcing: npt.NDArray[np.float64], drift: float, slope: float, order: int) -> np.ndarray:
    """
    Coefficients ``b_0..b_order`` of the solution of ``b' b = 2 drift b + 2 g`` with ``b(0) = 0``.

    ``forcing`` holds the Taylor coefficients ``g_n`` of ``g`` (with
    ``g_0 = 0``) and ``slope`` is the chosen root ``b_1``. Matching the
    coefficient of ``s**n`` gives
    ``b_n = (2 g_n - (n+1)/2 * sum_{i=2}^{n-1} b_i b_{n+1-i}) / ((n+1) b_1 - 2 drift)``;
    the symmetric sum is accumulated over half the range.

    :param forcing: coefficients ``g_0..g_order`` (shorter arrays are zero padded)
    :param drift: the drift ``c``
    :param slope: ``b_1``, negative
    :param order: last coefficient index
    :return: the coefficient array
    """
    g = np.zeros(order + 1)
    g[: min(order + 1, forcing.shape[0])] = forcing[: order + 1]
    out = np.zeros(order + 1)
    if order >= 1:
        out[1] = slope
    if HAVE_NUMBA:
        _generator_recursion_compiled(g, float(drift), float(slope), out)
        return out
    LOGGER.warning("numba unavailable, generator recursion runs without compensated summation")
    for n in range(2, order + 1):
        symmetric = np.dot(out[2:n], out[n - 1 : 1 : -1])
        out[n] = (2.0 * g[n] - 0.5 * (n + 1) * symmetric) / ((n + 1) * slope - 2.0 * drift)
    return out

"""Adaptive Simpson quadrature for scalar integrands."""

from __future__ import annotations

import math
from typing import Callable


class QuadratureError(RuntimeError):
    pass


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 50) -> float:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Uses the classical Richardson-corrected recursion; raises
    :class:`QuadratureError` if the depth limit is hit before the local error
    estimate drops below its share of ``tol``.
    """
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth)
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _recurse(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    if depth <= 0:
        raise QuadratureError(f"adaptive Simpson did not converge on [{a}, {b}]")
    if not math.isfinite(delta):
        raise QuadratureError("non-finite integrand value")
    return (_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

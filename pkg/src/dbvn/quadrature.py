"""Adaptive Simpson quadrature.

Used only as an independent check on the closed-form delay integrals, so it
is deliberately plain and shares no code with :mod:`dbvn.fluid`.
"""
import math

from .errors import QuadratureFailure


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=60):
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Raises
    ------
    QuadratureFailure
        If an interval has to be split more than ``max_depth`` times.
    """
    if b == a:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    return _recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _recurse(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
    right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    if depth <= 0 or not math.isfinite(err):
        raise QuadratureFailure(
            f"adaptive Simpson did not reach tol={tol:g} on [{a:g}, {b:g}]")
    return (_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))

"""Quadrature, bracketing root search and the special functions used across the package."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special


class CovertKitError(Exception):
    """Base class for all package errors."""


class DomainError(CovertKitError, ValueError):
    """An argument lies outside the domain of the requested function."""


class NonConvergenceError(CovertKitError, ArithmeticError):
    """An iterative method exhausted its budget before meeting its tolerance."""


class BracketError(CovertKitError, ValueError):
    """The supplied interval does not bracket a sign change."""


MAX_PANELS = 2**20


@dataclass(frozen=True)
class QuadratureSpec:
    lower: float
    upper: float
    panels: int = 16
    rel_tol: float = 1e-10

    def __post_init__(self):
        if not self.lower < self.upper:
            raise DomainError(f"lower={self.lower} must be below upper={self.upper}")
        if self.panels < 2 or self.panels % 2:
            raise DomainError(f"panels must be even and >= 2, got {self.panels}")
        if not 0.0 < self.rel_tol < 1.0:
            raise DomainError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")


@dataclass(frozen=True)
class RootBracket:
    lo: float
    hi: float
    abs_tol: float = 1e-12

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"lo={self.lo} must be below hi={self.hi}")
        if self.abs_tol <= 0:
            raise DomainError("abs_tol must be positive")


@dataclass(frozen=True)
class SeriesControl:
    max_terms: int = 500
    term_rel_tol: float = 1e-14

    def __post_init__(self):
        if self.max_terms < 1:
            raise DomainError("max_terms must be >= 1")
        if not 0.0 < self.term_rel_tol < 1.0:
            raise DomainError("term_rel_tol must lie in (0, 1)")


def erf(x):
    """Error function; accepts scalars or arrays."""
    return special.erf(x)


def lower_incomplete_gamma_regularized(a: float, x):
    """P(a, x) = gamma(a, x) / Gamma(a)."""
    if not a > 0:
        raise DomainError(f"shape a must be positive, got {a}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(np.isnan(x_arr)):
        raise DomainError("x must be non-negative")
    return special.gammainc(a, x)


def upper_incomplete_gamma_regularized(a: float, x):
    """Q(a, x) = 1 - P(a, x), evaluated without the subtraction."""
    if not a > 0:
        raise DomainError(f"shape a must be positive, got {a}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(np.isnan(x_arr)):
        raise DomainError("x must be non-negative")
    return special.gammaincc(a, x)


def _is_nonpositive_integer(v: float) -> bool:
    return v <= 0 and float(v).is_integer()


def _hyp1f1_series(a: float, b: float, z: np.ndarray, ctrl: SeriesControl) -> np.ndarray:
    # Neumaier-compensated summation of t_{k+1} = t_k (a+k) z / ((b+k)(k+1)).
    total = np.ones_like(z)
    comp = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(ctrl.max_terms):
        term = term * (a + k) * z / ((b + k) * (k + 1))
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - t) + term, (term - t) + total)
        total = t
        if not np.any(term):
            return total + comp
        if np.all(np.abs(term) <= ctrl.term_rel_tol * np.abs(total + comp)):
            return total + comp
    raise NonConvergenceError(
        f"1F1({a}, {b}, z) series did not reach {ctrl.term_rel_tol:g} in {ctrl.max_terms} terms"
    )


def _kummer_direct(a: float, b: float, z: np.ndarray, ctrl: SeriesControl) -> np.ndarray:
    if _is_nonpositive_integer(a):
        # Terminating polynomial: the recurrence produces an exact zero after -a terms.
        return _hyp1f1_series(a, b, z, SeriesControl(max(ctrl.max_terms, int(-a) + 2), ctrl.term_rel_tol))
    return _hyp1f1_series(a, b, z, ctrl)


def _kummer_transformed(a: float, b: float, z: np.ndarray, ctrl: SeriesControl) -> np.ndarray:
    return np.exp(z) * _kummer_direct(b - a, b, -z, ctrl)


def kummer_1f1(a: float, b: float, z, ctrl: SeriesControl | None = None, method: str = "auto"):
    """Confluent hypergeometric function 1F1(a; b; z) for real arguments.

    ``method`` is ``"auto"``, ``"direct"`` (power series) or ``"kummer"``
    (the transformation 1F1(a,b,z) = e^z 1F1(b-a,b,-z)).  In auto mode the
    transformation is used for z > 30 when it yields a terminating or
    sign-stable series, and for negative z when that removes alternation.
    """
    if _is_nonpositive_integer(b):
        raise DomainError(f"1F1 undefined for b={b} (non-positive integer)")
    ctrl = ctrl or SeriesControl()
    scalar = np.ndim(z) == 0
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if method == "direct":
        out = _kummer_direct(a, b, z_arr, ctrl)
    elif method == "kummer":
        out = _kummer_transformed(a, b, z_arr, ctrl)
    elif method == "auto":
        out = np.empty_like(z_arr)
        c = b - a
        # transformed series has same-sign terms when c is a non-positive integer (z>0) or c >= 0 (z<0)
        use_t = np.zeros(z_arr.shape, dtype=bool)
        if _is_nonpositive_integer(c):
            use_t |= z_arr > 30.0
        if c >= 0 and not _is_nonpositive_integer(a):
            use_t |= z_arr < 0.0
        if np.any(use_t):
            out[use_t] = _kummer_transformed(a, b, z_arr[use_t], ctrl)
        if np.any(~use_t):
            out[~use_t] = _kummer_direct(a, b, z_arr[~use_t], ctrl)
    else:
        raise DomainError(f"unknown method {method!r}")
    return float(out[0]) if scalar else out


def _simpson(values: np.ndarray, h: float) -> np.ndarray:
    return h / 3.0 * (values[0] + values[-1] + 4.0 * values[1:-1:2].sum(axis=0) + 2.0 * values[2:-1:2].sum(axis=0))


def integrate(f: Callable[[np.ndarray], np.ndarray], spec: QuadratureSpec, max_panels: int = MAX_PANELS):
    """Composite Simpson rule refined by panel doubling.

    ``f`` must be vectorised: called with a 1-D array of abscissae it returns
    either an array of the same length or a 2-D array whose first axis runs
    along the abscissae (several integrands at once).  Refinement stops when
    successive estimates differ by less than ``rel_tol`` relative to the
    largest estimate.
    """
    n = spec.panels
    x = np.linspace(spec.lower, spec.upper, n + 1)
    vals = np.asarray(f(x), dtype=float)
    est = _simpson(vals, (spec.upper - spec.lower) / n)
    while True:
        if 2 * n > max_panels:
            raise NonConvergenceError(
                f"Simpson refinement exceeded {max_panels} panels on [{spec.lower}, {spec.upper}]"
            )
        h = (spec.upper - spec.lower) / (2 * n)
        mid = spec.lower + h * (2 * np.arange(n) + 1)
        new = np.asarray(f(mid), dtype=float)
        merged = np.empty((2 * n + 1,) + vals.shape[1:])
        merged[0::2] = vals
        merged[1::2] = new
        vals, n = merged, 2 * n
        refined = _simpson(vals, h)
        scale = np.max(np.abs(refined))
        if np.max(np.abs(refined - est)) <= spec.rel_tol * scale or scale == 0.0:
            return float(refined) if np.ndim(refined) == 0 else refined
        est = refined


def find_root(f: Callable[[float], float], bracket: RootBracket, max_iter: int = 400) -> float:
    """Bisection on a bracketing interval."""
    f_lo, f_hi = f(bracket.lo), f(bracket.hi)
    if f_lo == 0.0:
        return bracket.lo
    if f_hi == 0.0:
        return bracket.hi
    if math.copysign(1.0, f_lo) == math.copysign(1.0, f_hi):
        raise BracketError(
            f"no sign change on [{bracket.lo}, {bracket.hi}]: f(lo)={f_lo:g}, f(hi)={f_hi:g}"
        )
    try:
        return optimize.bisect(f, bracket.lo, bracket.hi, xtol=bracket.abs_tol, maxiter=max_iter)
    except RuntimeError as exc:
        raise NonConvergenceError(str(exc)) from exc

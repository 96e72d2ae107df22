"""Channel outputs under the two hypotheses: p0(y), p1(y) and Bob's p(z).

The skew-normal output density is evaluated from its erf-Maclaurin series,

    p1(y) = N(v; 0, S) * [1 + (4 a m / pi) * sum_k c_k(z) t^(k-1)],

with v = y - mu, S = omega^2 + s^2, a = theta / (omega sqrt 2),
m = v omega^2 / S, t = theta^2 s^2 / S, z = omega^2 v^2 / (2 s^2 S) and

    c_k(z) = (-1)^(k+1) Gamma(k + 1/2) / ((2k - 1) Gamma(k)) * e^-z 1F1(k + 1/2; 3/2; z).

The k-series has radius of convergence t < 1.  For t > 1/2 it is summed
after an Euler transformation in u = t / (1 + t), which converges for
every real theta.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .distributions import (
    DEFAULT_POINTS,
    MASS_TOL,
    GaussianSpec,
    SignalDistribution,
    SkewNormalSpec,
    TabulatedPdf,
    TruncationError,
    mean_and_std,
    moments,
    pdf_eval,
    tabulate,
)
from .numerics import (
    DomainError,
    NonConvergenceError,
    QuadratureSpec,
    SeriesControl,
    integrate,
    kummer_1f1,
)

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
NEGATIVE_CLAMP = 1e-12
ROUNDOFF_LIMIT = 1e-12
DIRECT_SUM_MAX_T = 0.5
HALF_WIDTH_SD = 10.0
_Y_CHUNK = 256
SIMPSON_MAX_PANELS = 2**14
LATTICE_STEPS_PER_SCALE = 40


class SeriesNonConvergenceError(NonConvergenceError):
    """The skew-normal output series could not be summed to its tolerance.

    Fall back to :func:`output_pdf_quadrature` for this operating point.
    """


@dataclass(frozen=True)
class ChannelSpec:
    sigma_b2: float = 1.0
    sigma_w2: float = 1.0

    def __post_init__(self):
        if not (self.sigma_b2 > 0 and self.sigma_w2 > 0):
            raise DomainError("noise powers must be strictly positive")

    @classmethod
    def from_db(cls, sigma_b_db: float, sigma_w_db: float) -> "ChannelSpec":
        return cls(10.0 ** (sigma_b_db / 10.0), 10.0 ** (sigma_w_db / 10.0))


@dataclass(frozen=True, eq=False)
class HypothesisPair:
    p0: TabulatedPdf
    p1: TabulatedPdf
    Py: float
    method: str = "closed-form"

    def __post_init__(self):
        if not self.p0.same_grid(self.p1):
            raise DomainError("p0 and p1 must share one grid")

    @property
    def y(self) -> np.ndarray:
        return self.p0.x

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "p0", "p1"])
        for yi, a, b in zip(self.y, self.p0.densities, self.p1.densities):
            w.writerow([f"{yi:.17g}", f"{a:.17g}", f"{b:.17g}"])
        return buf.getvalue()


# --------------------------------------------------------------------------
# skew-normal output series


def _series_geometry(spec: SkewNormalSpec, noise_var: float, y):
    v = np.asarray(y, dtype=float) - spec.location
    w2 = spec.scale**2
    S = w2 + noise_var
    t = spec.shape**2 * noise_var / S
    z = w2 * v * v / (2.0 * noise_var * S)
    am = spec.shape * spec.scale * v / (math.sqrt(2.0) * S)
    lead = np.exp(-0.5 * v * v / S) / math.sqrt(2.0 * math.pi * S)
    return v, S, t, z, am, lead


def _direct_coefficient(k: int, z: np.ndarray, ctrl: SeriesControl) -> np.ndarray:
    # e^-z 1F1(k+1/2; 3/2; z) == 1F1(1-k; 3/2; -z), a terminating positive-term polynomial
    ratio = math.exp(special.gammaln(k + 0.5) - special.gammaln(k)) / (2 * k - 1)
    sign = 1.0 if k % 2 else -1.0
    return sign * ratio * kummer_1f1(1 - k, 1.5, -z, ctrl)


class _Accumulator:
    """Running partial sums with per-point retirement.

    A point retires after two consecutive terms fall below the relative
    floor.  The roundoff bound 8 eps |scale| sum |terms| only grows, so the
    sum is abandoned as soon as it crosses the limit.
    """

    def __init__(self, n: int, scale: np.ndarray | None, tol: float):
        self.total = np.zeros(n)
        self.absolute = np.zeros(n)
        self.calm = np.zeros(n, dtype=int)
        self.active = np.arange(n)
        self.scale = None if scale is None else np.abs(scale)
        self.tol = tol

    def add(self, term: np.ndarray, abs_term: np.ndarray) -> np.ndarray | None:
        """Accumulate terms for the active points; return the keep-mask (None when all retired)."""
        if not np.all(np.isfinite(term)):
            raise SeriesNonConvergenceError("output series term overflowed")
        idx = self.active
        self.total[idx] += term
        self.absolute[idx] += abs_term
        if self.scale is not None:
            bound = 8.0 * EPS * float(np.max(self.scale[idx] * self.absolute[idx]))
            if bound > ROUNDOFF_LIMIT:
                raise SeriesNonConvergenceError(
                    f"output series roundoff estimate {bound:.3g} exceeds {ROUNDOFF_LIMIT:g}"
                )
        small = np.abs(term) <= self.tol * np.abs(self.total[idx])
        self.calm[idx] = np.where(small, self.calm[idx] + 1, 0)
        keep = self.calm[idx] < 2
        if not keep.any():
            return None
        self.active = idx[keep]
        return keep


def _sum_direct(t: float, z: np.ndarray, ctrl: SeriesControl, scale: np.ndarray | None = None):
    acc = _Accumulator(z.size, scale, ctrl.term_rel_tol)
    za = z
    power = 1.0
    for k in range(1, ctrl.max_terms + 1):
        term = _direct_coefficient(k, za, ctrl) * power
        keep = acc.add(term, np.abs(term))
        if keep is None:
            return acc.total, acc.absolute, k
        za = za[keep]
        power *= t
        if power == 0.0:
            return acc.total, acc.absolute, k
    raise SeriesNonConvergenceError(
        f"output series did not reach {ctrl.term_rel_tol:g} within {ctrl.max_terms} terms (t={t:.4g})"
    )


@lru_cache(maxsize=4)
def _sqrt_one_minus_coeffs(n: int) -> np.ndarray:
    s = np.empty(n + 1)
    s[0] = 1.0
    for m in range(1, n + 1):
        s[m] = s[m - 1] * (m - 1.5) / m
    return s


def _sum_euler(t: float, z: np.ndarray, ctrl: SeriesControl, scale: np.ndarray | None = None):
    """Sum f = sum_n d_n(z) u^n with u = t / (1 + t).

    d_n is the n-th binomial transform of the c_k, i.e. the coefficient of
    u^n after substituting t = u / (1 - u).  Written through its generating
    function it is (sqrt(pi)/2) * sum_i s_(n-i) (-z)^i / (i! (2i+1)) with s_j
    the Taylor coefficients of sqrt(1 - u).
    """
    u = t / (1.0 + t)
    n_max = ctrl.max_terms - 1
    s = _sqrt_one_minus_coeffs(n_max)
    s_abs = np.abs(s)
    half_sqrt_pi = 0.5 * math.sqrt(math.pi)
    acc = _Accumulator(z.size, scale, ctrl.term_rel_tol)
    za = z
    g = np.empty((n_max + 1, z.size))
    g[0] = 1.0
    power = np.ones_like(z)
    un = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_max + 1):
            if n:
                power = power * (-za) / n
                g[n] = power / (2 * n + 1)
            d = half_sqrt_pi * (s[n::-1] @ g[: n + 1])
            dabs = half_sqrt_pi * (s_abs[n::-1] @ (np.abs(g[: n + 1])))
            keep = acc.add(d * un, dabs * un)
            if keep is None:
                return acc.total, acc.absolute, n + 1
            if not keep.all():
                za, power = za[keep], power[keep]
                g = np.ascontiguousarray(g[:, keep])
            un *= u
    raise SeriesNonConvergenceError(
        f"Euler-transformed output series did not reach {ctrl.term_rel_tol:g} within "
        f"{ctrl.max_terms} terms (u={u:.4g})"
    )


@dataclass(frozen=True)
class SeriesEvaluation:
    values: np.ndarray
    terms: int
    roundoff: float
    method: str


def evaluate_skew_series(
    spec: SkewNormalSpec, noise_var: float, y, ctrl: SeriesControl | None = None, method: str = "auto"
) -> SeriesEvaluation:
    """Sum the output series at the points ``y`` and report diagnostics.

    ``method`` selects ``"direct"`` partial sums, ``"euler"`` or ``"auto"``
    (direct for t <= 1/2).  Raises :class:`SeriesNonConvergenceError` when
    the term floor is not reached or when the estimated roundoff of the
    alternating sum exceeds 1e-12 in absolute density.
    """
    if not noise_var > 0:
        raise DomainError("noise_var must be positive")
    ctrl = ctrl or SeriesControl()
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    v, S, t, z, am, lead = _series_geometry(spec, noise_var, y_arr)
    if spec.shape == 0.0:
        return SeriesEvaluation(lead, 0, 0.0, "gaussian")
    if method == "auto":
        method = "direct" if t <= DIRECT_SUM_MAX_T else "euler"
    scale = lead * (4.0 / math.pi) * am
    if method == "direct":
        if t >= 1.0:
            raise SeriesNonConvergenceError(f"direct output series diverges for t={t:.4g} >= 1")
        f, f_abs, terms = _sum_direct(t, z, ctrl, scale)
    elif method == "euler":
        f, f_abs, terms = _sum_euler(t, z, ctrl, scale)
    else:
        raise DomainError(f"unknown method {method!r}")
    values = lead + scale * f
    roundoff = float(np.max(np.abs(scale) * f_abs) * 8.0 * EPS) if f.size else 0.0
    if not np.isfinite(roundoff) or roundoff > ROUNDOFF_LIMIT:
        raise SeriesNonConvergenceError(
            f"output series roundoff estimate {roundoff:.3g} exceeds {ROUNDOFF_LIMIT:g}"
        )
    if np.any(values < -NEGATIVE_CLAMP):
        raise SeriesNonConvergenceError(f"output series produced density {values.min():.3g} < 0")
    return SeriesEvaluation(np.maximum(values, 0.0), terms, roundoff, method)


def output_pdf_skew_series(spec: SkewNormalSpec, noise_var: float, y, ctrl: SeriesControl | None = None):
    """Density of x + n at ``y`` for skew-normal x and n ~ N(0, noise_var)."""
    res = evaluate_skew_series(spec, noise_var, y, ctrl)
    return float(res.values[0]) if np.ndim(y) == 0 else res.values


def skew_output_closure(spec: SkewNormalSpec, noise_var: float, y):
    """Cross-check density: x + n is skew-normal with scale sqrt(omega^2 + s^2).

    The shrunk shape is theta * omega / sqrt(omega^2 + s^2 + theta^2 s^2).
    Only used as an independent oracle.
    """
    S = spec.scale**2 + noise_var
    shape = spec.shape * spec.scale / math.sqrt(S + spec.shape**2 * noise_var)
    return pdf_eval(SkewNormalSpec(spec.location, math.sqrt(S), shape), y)


# --------------------------------------------------------------------------
# quadrature convolution


def input_window(input: SignalDistribution) -> QuadratureSpec:
    """Simpson window of +-12 sd around the input mean."""
    mean, sd = mean_and_std(input)
    return QuadratureSpec(mean - 12.0 * sd, mean + 12.0 * sd, panels=16, rel_tol=1e-10)


def _convolve_native(input: TabulatedPdf, noise_var: float, y: np.ndarray) -> np.ndarray:
    # the input is only known at its nodes: Simpson (or trapezoid) on the native grid
    x = input.x
    p = input.densities
    kern = np.exp(-0.5 * (y[None, :] - x[:, None]) ** 2 / noise_var) / math.sqrt(2.0 * math.pi * noise_var)
    vals = kern * p[:, None]
    if x.size % 2:
        h = input.dx
        return h / 3.0 * (vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum(0) + 2.0 * vals[2:-1:2].sum(0))
    return np.trapezoid(vals, dx=input.dx, axis=0)


def _convolve_simpson(input, noise_var: float, y: np.ndarray, quad: QuadratureSpec) -> np.ndarray:
    norm = 1.0 / math.sqrt(2.0 * math.pi * noise_var)

    def integrand(x):
        return norm * np.exp(-0.5 * (y[None, :] - x[:, None]) ** 2 / noise_var) * pdf_eval(input, x)[:, None]

    return integrate(integrand, quad, max_panels=SIMPSON_MAX_PANELS)


def _feature_scale(input: SignalDistribution, noise_var: float) -> float:
    _, sd = mean_and_std(input)
    scale = min(sd, math.sqrt(noise_var))
    if isinstance(input, SkewNormalSpec) and abs(input.shape) > 1:
        # the erf factor switches over a width of about scale / |shape|
        scale = min(scale, input.scale / abs(input.shape))
    return scale


def _convolve_lattice(input, noise_var: float, lower: float, upper: float, points: int) -> np.ndarray:
    """Trapezoid rule on a uniform lattice that contains every output node.

    The integrand p(x) N(y - x; 0, s^2) is smooth and decays like a Gaussian,
    so the trapezoid rule with a step well below its narrowest feature is
    accurate to rounding.  The sum is a direct discrete convolution of
    non-negative terms, which keeps relative accuracy in the tails.
    """
    dx = (upper - lower) / (points - 1)
    r = max(1, math.ceil(dx / (_feature_scale(input, noise_var) / LATTICE_STEPS_PER_SCALE)))
    h = dx / r
    mean, sd = mean_and_std(input)
    k0 = math.floor((mean - 12.0 * sd - lower) / h)
    k1 = math.ceil((mean + 12.0 * sd - lower) / h)
    f = pdf_eval(input, lower + h * np.arange(k0, k1 + 1))
    K = math.ceil(12.0 * math.sqrt(noise_var) / h)
    u = h * np.arange(-K, K + 1)
    g = np.exp(-0.5 * u * u / noise_var) / math.sqrt(2.0 * math.pi * noise_var)
    full = np.convolve(f, g) * h
    # full[n] sits at y = lower + (k0 + n - K) h; output node m sits at lower + m r h
    n = r * np.arange(points) - k0 + K
    valid = (n >= 0) & (n < full.size)
    out = np.zeros(points)
    out[valid] = full[n[valid]]
    return out


def _grid_for(input: SignalDistribution, noise_var: float, half_width_sd: float = HALF_WIDTH_SD):
    mean, second = moments(input)
    sd = math.sqrt(second - mean * mean + noise_var)
    return mean - half_width_sd * sd, mean + half_width_sd * sd


def _finalise(dens: np.ndarray, lower: float, upper: float, logs=None) -> TabulatedPdf:
    dx = (upper - lower) / (dens.size - 1)
    mass = float(np.trapezoid(dens, dx=dx))
    if abs(mass - 1.0) > MASS_TOL:
        raise TruncationError(f"output density has mass {mass:.9g} before renormalisation")
    logs = None if logs is None else logs - math.log(mass)
    return TabulatedPdf(x0=float(lower), dx=dx, densities=dens / mass, log_densities=logs)


def output_pdf_quadrature(
    input: SignalDistribution,
    noise_var: float,
    lower: float | None = None,
    upper: float | None = None,
    points: int = DEFAULT_POINTS,
    quad: QuadratureSpec | None = None,
) -> TabulatedPdf:
    """Tabulate the density of x + n, n ~ N(0, noise_var), by direct quadrature of the convolution.

    Tabulated inputs are integrated on their own nodes.  Analytic inputs use
    a fine-lattice trapezoid rule, or refined composite Simpson over the
    window ``quad`` when one is given.
    """
    if not noise_var > 0:
        raise DomainError("noise_var must be positive")
    if lower is None or upper is None:
        lo, hi = _grid_for(input, noise_var)
        lower = lo if lower is None else lower
        upper = hi if upper is None else upper
    y = np.linspace(lower, upper, points)
    if isinstance(input, TabulatedPdf):
        dens = np.concatenate([_convolve_native(input, noise_var, y[i : i + _Y_CHUNK])
                               for i in range(0, points, _Y_CHUNK)])
    elif quad is not None:
        dens = np.concatenate([_convolve_simpson(input, noise_var, y[i : i + _Y_CHUNK], quad)
                               for i in range(0, points, _Y_CHUNK)])
    else:
        dens = _convolve_lattice(input, noise_var, lower, upper, points)
    return _finalise(dens, lower, upper)


def output_pdf(
    input: SignalDistribution,
    noise_var: float,
    lower: float | None = None,
    upper: float | None = None,
    points: int = DEFAULT_POINTS,
    ctrl: SeriesControl | None = None,
) -> tuple[TabulatedPdf, str]:
    """Best available output density and the route used to obtain it.

    Gaussian inputs use the closed form, skew-normal inputs the series with
    quadrature fallback, tabulated inputs quadrature.
    """
    if lower is None or upper is None:
        lo, hi = _grid_for(input, noise_var)
        lower = lo if lower is None else lower
        upper = hi if upper is None else upper
    if isinstance(input, GaussianSpec):
        out = GaussianSpec(input.mean, input.variance + noise_var)
        return tabulate(out, lower, upper, points), "closed-form"
    y = np.linspace(lower, upper, points)
    if isinstance(input, SkewNormalSpec):
        try:
            res = evaluate_skew_series(input, noise_var, y, ctrl)
        except SeriesNonConvergenceError as exc:
            logger.info("skew-normal series fallback to quadrature (theta=%g): %s", input.shape, exc)
            return output_pdf_quadrature(input, noise_var, lower, upper, points), "quadrature-fallback"
        with np.errstate(divide="ignore"):
            logs = np.log(res.values)
        return _finalise(res.values, lower, upper, logs), "series"
    return output_pdf_quadrature(input, noise_var, lower, upper, points), "quadrature"


def hypothesis_pair(
    input: SignalDistribution,
    channel: ChannelSpec,
    points: int = DEFAULT_POINTS,
    half_width_sd: float = HALF_WIDTH_SD,
    ctrl: SeriesControl | None = None,
) -> HypothesisPair:
    """Warden-side densities on one shared grid covering +-10 sd of the wider law."""
    mean, second = moments(input)
    if abs(mean) > 1e-9 * max(1.0, math.sqrt(second)):
        raise DomainError(f"input must have zero mean, got {mean:g}")
    Py = second + channel.sigma_w2
    half = half_width_sd * math.sqrt(max(Py, channel.sigma_w2))
    p0 = tabulate(GaussianSpec(0.0, channel.sigma_w2), -half, half, points)
    p1, method = output_pdf(input, channel.sigma_w2, -half, half, points, ctrl)
    return HypothesisPair(p0=p0, p1=p1, Py=Py, method=method)

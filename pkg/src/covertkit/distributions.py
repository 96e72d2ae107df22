"""Input-signal laws p(x): Gaussian, skew-normal and tabulated densities."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special

from .numerics import DomainError, QuadratureSpec

SQRT_2PI = math.sqrt(2.0 * math.pi)
MASS_TOL = 1e-6
MIN_POINTS = 64
DEFAULT_POINTS = 2**13 + 1
DEFAULT_HALF_WIDTH_SD = 10.0


class TruncationError(DomainError):
    """A tabulation window leaves more probability mass outside than allowed."""


@dataclass(frozen=True)
class GaussianSpec:
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError(f"variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class SkewNormalSpec:
    """Skew-normal law with location, scale and shape; ``delta`` is derived."""

    location: float
    scale: float
    shape: float
    delta: float = field(init=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "delta", self.shape / math.sqrt(1.0 + self.shape * self.shape))

    @classmethod
    def from_power(cls, theta: float, Px: float) -> "SkewNormalSpec":
        """Zero-mean skew-normal with second moment ``Px`` and shape ``theta``."""
        omega, mu = skew_params_from_power(theta, Px)
        return cls(location=mu, scale=omega, shape=theta)


@dataclass(frozen=True, eq=False)
class TabulatedPdf:
    """A density sampled on the uniform grid x0, x0+dx, ...

    ``log_densities`` is optional; when present it carries the logarithm of
    each density value with full range so that divergence integrands stay
    finite where the densities themselves underflow.
    """

    x0: float
    dx: float
    densities: np.ndarray
    log_densities: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.densities, dtype=float)
        object.__setattr__(self, "densities", d)
        if self.log_densities is not None:
            ld = np.asarray(self.log_densities, dtype=float)
            if ld.shape != d.shape:
                raise DomainError("log_densities must match densities in shape")
            object.__setattr__(self, "log_densities", ld)
        if not self.dx > 0:
            raise DomainError("dx must be positive")
        if d.ndim != 1 or d.size < MIN_POINTS:
            raise DomainError(f"need at least {MIN_POINTS} grid points, got {d.size}")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise DomainError("densities must be finite and non-negative")
        mass = self.mass()
        if abs(mass - 1.0) > MASS_TOL:
            raise DomainError(f"trapezoid mass {mass:.9g} is not within {MASS_TOL:g} of 1")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.densities.size)

    @property
    def upper(self) -> float:
        return self.x0 + self.dx * (self.densities.size - 1)

    def mass(self) -> float:
        return float(np.trapezoid(self.densities, dx=self.dx))

    def logs(self) -> np.ndarray:
        """Log-densities, -inf where the density is exactly zero."""
        if self.log_densities is not None:
            return self.log_densities
        with np.errstate(divide="ignore"):
            return np.log(self.densities)

    def same_grid(self, other: "TabulatedPdf") -> bool:
        return (
            self.densities.size == other.densities.size
            and math.isclose(self.x0, other.x0, rel_tol=0, abs_tol=1e-12 * max(1.0, abs(self.x0)))
            and math.isclose(self.dx, other.dx, rel_tol=1e-12)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "density"])
        for xi, di in zip(self.x, self.densities):
            w.writerow([f"{xi:.17g}", f"{di:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TabulatedPdf":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if rows[0] != ["x", "density"]:
            raise DomainError(f"unexpected header {rows[0]}")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        x = data[:, 0]
        dx = (x[-1] - x[0]) / (x.size - 1)
        if not np.allclose(np.diff(x), dx, rtol=1e-9, atol=0):
            raise DomainError("grid is not uniform")
        return cls(x0=float(x[0]), dx=float(dx), densities=data[:, 1])


SignalDistribution = Union[GaussianSpec, SkewNormalSpec, TabulatedPdf]


def _gauss_log_pdf(x, mean, variance):
    return -0.5 * (x - mean) ** 2 / variance - 0.5 * math.log(2.0 * math.pi * variance)


def log_pdf(dist: SignalDistribution, x):
    """Natural log of the density; finite far into the tails for analytic laws."""
    x = np.asarray(x, dtype=float)
    if isinstance(dist, GaussianSpec):
        return _gauss_log_pdf(x, dist.mean, dist.variance)
    if isinstance(dist, SkewNormalSpec):
        u = (x - dist.location) / dist.scale
        # 1 + erf(theta u / sqrt 2) = 2 Phi(theta u)
        return _gauss_log_pdf(u, 0.0, 1.0) - math.log(dist.scale) + math.log(2.0) + special.log_ndtr(dist.shape * u)
    with np.errstate(divide="ignore"):
        return np.log(pdf_eval(dist, x))


def pdf_eval(dist: SignalDistribution, x):
    """Density at ``x`` (scalar or array)."""
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if isinstance(dist, GaussianSpec):
        out = np.exp(-0.5 * (x - dist.mean) ** 2 / dist.variance) / math.sqrt(2.0 * math.pi * dist.variance)
    elif isinstance(dist, SkewNormalSpec):
        u = (x - dist.location) / dist.scale
        # 2 Phi(theta u) rather than 1 + erf(.), which cancels in the left tail
        out = np.exp(-0.5 * u * u) / (dist.scale * SQRT_2PI) * (2.0 * special.ndtr(dist.shape * u))
    elif isinstance(dist, TabulatedPdf):
        out = np.interp(x, dist.x, dist.densities, left=0.0, right=0.0)
    else:
        raise TypeError(f"unsupported distribution {type(dist).__name__}")
    return float(out) if scalar else out


def skew_params_from_power(theta: float, Px: float) -> tuple[float, float]:
    """Scale and location giving a zero-mean skew-normal with second moment ``Px``.

    Uses the positive scale root and the signed delta, so the mean vanishes
    for either sign of ``theta``.
    """
    if not Px > 0:
        raise DomainError(f"Px must be positive, got {Px}")
    delta = theta / math.sqrt(1.0 + theta * theta)
    omega = math.sqrt(Px / (1.0 - 2.0 * delta * delta / math.pi))
    mu = -omega * delta * math.sqrt(2.0 / math.pi)
    return omega, mu


def mean_and_std(dist: SignalDistribution) -> tuple[float, float]:
    mean, second = moments(dist)
    return mean, math.sqrt(max(second - mean * mean, 0.0))


def moments(dist: SignalDistribution, spec: QuadratureSpec | None = None) -> tuple[float, float]:
    """(mean, second moment).

    Closed forms for the analytic laws.  Tabulated densities are integrated
    with the trapezoid rule on their own grid; ``spec`` is accepted for
    interface symmetry and ignored because refining a piecewise-linear
    interpolant adds no information.
    """
    if isinstance(dist, GaussianSpec):
        return dist.mean, dist.variance + dist.mean**2
    if isinstance(dist, SkewNormalSpec):
        mean = dist.location + dist.scale * dist.delta * math.sqrt(2.0 / math.pi)
        var = dist.scale**2 * (1.0 - 2.0 * dist.delta**2 / math.pi)
        return mean, var + mean * mean
    if isinstance(dist, TabulatedPdf):
        x, d = dist.x, dist.densities
        mass = np.trapezoid(d, dx=dist.dx)
        return float(np.trapezoid(x * d, dx=dist.dx) / mass), float(np.trapezoid(x * x * d, dx=dist.dx) / mass)
    raise TypeError(f"unsupported distribution {type(dist).__name__}")


def sample(dist: SignalDistribution, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """Draw ``n`` variates; ``seed`` may be an integer or an explicit Generator."""
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(dist, GaussianSpec):
        return dist.mean + math.sqrt(dist.variance) * rng.standard_normal(n)
    if isinstance(dist, SkewNormalSpec):
        u0 = rng.standard_normal(n)
        u1 = rng.standard_normal(n)
        d = dist.delta
        return dist.location + dist.scale * (d * np.abs(u0) + math.sqrt(1.0 - d * d) * u1)
    if isinstance(dist, TabulatedPdf):
        x, p = dist.x, dist.densities
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * dist.dx)])
        u = rng.random(n) * cdf[-1]
        # invert the piecewise-quadratic cdf cell by cell
        idx = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, x.size - 2)
        p0, p1 = p[idx], p[idx + 1]
        slope = (p1 - p0) / dist.dx
        r = u - cdf[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            quad = (-p0 + np.sqrt(np.maximum(p0 * p0 + 2.0 * slope * r, 0.0))) / slope
            lin = np.where(p0 > 0, r / p0, 0.0)
        step = np.where(np.abs(slope) > 1e-300, quad, lin)
        return x[idx] + np.clip(np.nan_to_num(step), 0.0, dist.dx)
    raise TypeError(f"unsupported distribution {type(dist).__name__}")


def default_window(dist: SignalDistribution, half_width_sd: float = DEFAULT_HALF_WIDTH_SD) -> tuple[float, float]:
    mean, sd = mean_and_std(dist)
    return mean - half_width_sd * sd, mean + half_width_sd * sd


def tabulate(
    dist: SignalDistribution,
    lower: float | None = None,
    upper: float | None = None,
    points: int = DEFAULT_POINTS,
) -> TabulatedPdf:
    """Sample ``dist`` on a uniform grid and renormalise to unit trapezoid mass."""
    if points < MIN_POINTS:
        raise DomainError(f"points must be >= {MIN_POINTS}")
    if lower is None or upper is None:
        lo, hi = default_window(dist)
        lower = lo if lower is None else lower
        upper = hi if upper is None else upper
    if not lower < upper:
        raise DomainError("lower must be below upper")
    x = np.linspace(lower, upper, points)
    dx = (upper - lower) / (points - 1)
    logs = log_pdf(dist, x)
    dens = np.exp(logs)
    mass = float(np.trapezoid(dens, dx=dx))
    if abs(mass - 1.0) > MASS_TOL:
        raise TruncationError(
            f"window [{lower:g}, {upper:g}] holds mass {mass:.9g}; tail mass exceeds {MASS_TOL:g}"
        )
    return TabulatedPdf(x0=float(lower), dx=dx, densities=dens / mass, log_densities=logs - math.log(mass))

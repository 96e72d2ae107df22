"""Divergences, total variation, entropy and mutual information (all in nats)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import DEFAULT_POINTS, GaussianSpec, SignalDistribution, TabulatedPdf, moments
from .numerics import DomainError, SeriesControl

DENSITY_FLOOR = 1e-300
LOG_FLOOR = math.log(DENSITY_FLOOR)


class GridMismatchError(DomainError):
    """Two tabulated densities do not share a grid."""


@dataclass(frozen=True)
class DivergenceReport:
    kl_forward: float
    kl_reverse: float
    total_variation: float

    @property
    def pinsker_forward(self) -> float:
        return math.sqrt(max(self.kl_forward, 0.0) / 2.0)

    @property
    def pinsker_reverse(self) -> float:
        return math.sqrt(max(self.kl_reverse, 0.0) / 2.0)

    CSV_HEADER = ("Px", "sigma_w2", "kl_forward", "kl_reverse", "tv", "pinsker_fwd", "pinsker_rev")

    def csv_row(self, Px: float, sigma_w2: float) -> list[str]:
        vals = (Px, sigma_w2, self.kl_forward, self.kl_reverse, self.total_variation,
                self.pinsker_forward, self.pinsker_reverse)
        return [f"{v:.17g}" for v in vals]


def _check_grid(p: TabulatedPdf, q: TabulatedPdf):
    if not p.same_grid(q):
        raise GridMismatchError("densities are tabulated on different grids")


def kl_divergence(p: TabulatedPdf, q: TabulatedPdf) -> float:
    """D(p || q) by the trapezoid rule on the shared grid.

    0 log(0/q) counts as 0.  Stored log-densities are used when present, so
    tails where a density underflows still contribute their exact log ratio;
    wherever log q is unavailable or -inf, q is floored at 1e-300.
    """
    _check_grid(p, q)
    lq = q.logs()
    lq = np.where(np.isfinite(lq), lq, LOG_FLOOR)
    live = p.densities > 0
    integrand = np.zeros_like(p.densities)
    integrand[live] = p.densities[live] * (p.logs()[live] - lq[live])
    return float(np.trapezoid(integrand, dx=p.dx))


def kl_gaussian_forward(Px: float, sigma_w2: float) -> float:
    """D(p1 || p0) for Gaussian signalling: (r - log(1 + r)) / 2, r = Px / sigma_w2."""
    if Px < 0:
        raise DomainError(f"Px must be non-negative, got {Px}")
    r = Px / sigma_w2
    return 0.5 * (r - math.log1p(r))


def kl_gaussian_reverse(Px: float, sigma_w2: float) -> float:
    """D(p0 || p1) for Gaussian signalling."""
    if Px < 0:
        raise DomainError(f"Px must be non-negative, got {Px}")
    r = Px / sigma_w2
    return 0.5 * (math.log1p(r) - r / (1.0 + r))


def kl_gap(Px: float, sigma_w2: float) -> float:
    """D(p1 || p0) - D(p0 || p1); non-negative and increasing in Px."""
    if Px < 0:
        raise DomainError(f"Px must be non-negative, got {Px}")
    r = Px / sigma_w2
    return 0.5 * (r + r / (1.0 + r)) - math.log1p(r)


def _cubic_cell_coeffs(g: np.ndarray, i: np.ndarray):
    # cubic through g[i-1], g[i], g[i+1], g[i+2] in local coordinate tau (g[i] at 0)
    A, B, C, D = g[i - 1], g[i], g[i + 1], g[i + 2]
    return (
        B,
        -A / 3.0 - B / 2.0 + C - D / 6.0,
        A / 2.0 - B + C / 2.0,
        -A / 6.0 + B / 2.0 - C / 2.0 + D / 6.0,
    )


def _cubic_integral(c, lo, hi):
    a0, a1, a2, a3 = c
    return (a0 * (hi - lo) + a1 * (hi**2 - lo**2) / 2.0 + a2 * (hi**3 - lo**3) / 3.0
            + a3 * (hi**4 - lo**4) / 4.0)


def _abs_integral(g: np.ndarray, dx: float) -> float:
    """Integral of |g| for smooth g sampled on a uniform grid.

    Interior cells use the four-point cubic rule; cells where g changes sign
    are split at the root of the local cubic so the kink of |g| does not
    degrade the order.  The two edge cells use the trapezoid rule.
    """
    n = g.size
    if n < 4:
        return float(np.trapezoid(np.abs(g), dx=dx))
    edge = 0.5 * (abs(g[0]) + abs(g[1])) + 0.5 * (abs(g[-2]) + abs(g[-1]))
    i = np.arange(1, n - 2)
    coeffs = _cubic_cell_coeffs(g, i)
    full = _cubic_integral(coeffs, 0.0, 1.0)
    total = np.abs(full)
    cross = np.nonzero(g[i] * g[i + 1] < 0)[0]
    if cross.size:
        c = tuple(a[cross] for a in coeffs)
        gi, gj = g[i[cross]], g[i[cross] + 1]
        tau = gi / (gi - gj)
        for _ in range(3):
            val = c[0] + tau * (c[1] + tau * (c[2] + tau * c[3]))
            der = c[1] + tau * (2.0 * c[2] + tau * 3.0 * c[3])
            step = np.where(der != 0, val / np.where(der != 0, der, 1.0), 0.0)
            tau = np.clip(tau - step, 0.0, 1.0)
        total[cross] = np.abs(_cubic_integral(c, 0.0, tau)) + np.abs(_cubic_integral(c, tau, 1.0))
    return float((total.sum() + edge) * dx)


def total_variation(p: TabulatedPdf, q: TabulatedPdf) -> float:
    """V_T(p, q) = (1/2) * integral of |p - q|, clipped to [0, 1]."""
    _check_grid(p, q)
    tv = 0.5 * _abs_integral(p.densities - q.densities, p.dx)
    return min(max(tv, 0.0), 1.0)


def differential_entropy(p: TabulatedPdf) -> float:
    """h(p) = -integral p log p (nats), with 0 log 0 = 0."""
    live = p.densities > 0
    integrand = np.zeros_like(p.densities)
    integrand[live] = -p.densities[live] * p.logs()[live]
    return float(np.trapezoid(integrand, dx=p.dx))


def gaussian_entropy(variance: float) -> float:
    return 0.5 * math.log(2.0 * math.pi * math.e * variance)


def gaussian_capacity(Px: float, sigma_b2: float) -> float:
    """log(1 + Px / sigma_b2) in nats."""
    if Px < 0:
        raise DomainError(f"Px must be non-negative, got {Px}")
    return math.log1p(Px / sigma_b2)


def gaussian_mutual_information(Px: float, sigma_b2: float) -> float:
    """h(z) - h(n_b) for real Gaussian input: (1/2) log(1 + Px / sigma_b2)."""
    if Px < 0:
        raise DomainError(f"Px must be non-negative, got {Px}")
    return 0.5 * math.log1p(Px / sigma_b2)


def mutual_information_from_output(pz: TabulatedPdf, sigma_b2: float) -> float:
    return differential_entropy(pz) - gaussian_entropy(sigma_b2)


def mutual_information(
    input: SignalDistribution,
    sigma_b2: float,
    points: int = DEFAULT_POINTS,
    ctrl: SeriesControl | None = None,
) -> float:
    """I(x; z) = h(z) - h(n_b) for z = x + n_b, n_b ~ N(0, sigma_b2)."""
    if not sigma_b2 > 0:
        raise DomainError("sigma_b2 must be positive")
    if isinstance(input, GaussianSpec):
        _, second = moments(input)
        return gaussian_mutual_information(second, sigma_b2)
    from .channel import output_pdf

    pz, _ = output_pdf(input, sigma_b2, points=points, ctrl=ctrl)
    return mutual_information_from_output(pz, sigma_b2)


def blocklength_scale(per_symbol: float, N: int) -> float:
    """Divergence or information over N i.i.d. channel uses."""
    if N < 1:
        raise DomainError("N must be >= 1")
    return N * per_symbol


def divergence_report(p0: TabulatedPdf, p1: TabulatedPdf) -> DivergenceReport:
    return DivergenceReport(
        kl_forward=kl_divergence(p1, p0),
        kl_reverse=kl_divergence(p0, p1),
        total_variation=total_variation(p0, p1),
    )

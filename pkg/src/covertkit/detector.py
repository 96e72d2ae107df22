"""Energy detector for Gaussian signalling: closed-form operating point and Monte Carlo check.

Both hypotheses are zero-mean Gaussians (variance sigma_w2 under H0 and
Px + sigma_w2 under H1), so with equal priors the likelihood-ratio test
reduces to comparing y^2 against a threshold.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import HypothesisPair
from .infotheory import total_variation
from .numerics import DomainError, lower_incomplete_gamma_regularized, upper_incomplete_gamma_regularized

MIN_SAMPLES = 10_000
DEFAULT_SAMPLES = 1_000_000
CHUNK = 1 << 20
THREADS_ENV = "COVERTKIT_THREADS"


@dataclass(frozen=True)
class DetectorReport:
    threshold: float
    alpha: float
    beta: float
    xi: float

    CSV_HEADER = ("threshold", "alpha", "beta", "xi")

    def csv_row(self) -> list[str]:
        return [f"{v:.17g}" for v in (self.threshold, self.alpha, self.beta, self.xi)]


@dataclass(frozen=True)
class MonteCarloReport:
    alpha_hat: float
    beta_hat: float
    xi_hat: float
    n: int
    seed: int
    std_err: float

    CSV_HEADER = ("alpha_hat", "beta_hat", "xi_hat", "n", "seed", "std_err")

    def csv_row(self) -> list[str]:
        return [f"{self.alpha_hat:.17g}", f"{self.beta_hat:.17g}", f"{self.xi_hat:.17g}",
                str(self.n), str(self.seed), f"{self.std_err:.17g}"]


def _check(Px: float, sigma_w2: float):
    if not sigma_w2 > 0:
        raise DomainError(f"sigma_w2 must be positive, got {sigma_w2}")
    if not Px > 0:
        raise DomainError(f"Px must be positive (hypotheses coincide at Px = 0), got {Px}")


def optimal_threshold(Px: float, sigma_w2: float) -> float:
    """Threshold on y^2 where the two zero-mean Gaussian likelihoods cross."""
    _check(Px, sigma_w2)
    r = Px / sigma_w2
    # sigma_w2 (1 + r) log(1 + r) / r, written to stay accurate as r -> 0
    return sigma_w2 * (1.0 + r) * math.log1p(r) / r


def error_rates_closed(Px: float, sigma_w2: float) -> DetectorReport:
    phi = optimal_threshold(Px, sigma_w2)
    alpha = float(upper_incomplete_gamma_regularized(0.5, phi / (2.0 * sigma_w2)))
    beta = float(lower_incomplete_gamma_regularized(0.5, phi / (2.0 * (Px + sigma_w2))))
    return DetectorReport(threshold=phi, alpha=alpha, beta=beta, xi=alpha + beta)


def energy_cdf_null(e, sigma_w2: float):
    """Pr(y^2 <= e) under H0."""
    e = np.maximum(np.asarray(e, dtype=float), 0.0)
    return lower_incomplete_gamma_regularized(0.5, e / (2.0 * sigma_w2))


def energy_cdf_alt(e, Px: float, sigma_w2: float):
    """Pr(y^2 <= e) under H1 with Gaussian signalling."""
    e = np.maximum(np.asarray(e, dtype=float), 0.0)
    return lower_incomplete_gamma_regularized(0.5, e / (2.0 * (Px + sigma_w2)))


def min_error_prob_tv(pair: HypothesisPair) -> float:
    """Minimum detection error 1 - V_T(p0, p1), valid for any signalling law."""
    return 1.0 - total_variation(pair.p0, pair.p1)


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, n)


def _chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(n, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _count_chunk(args):
    ss, size, sx, sw, phi = args
    # each chunk owns a child stream; null and alternative draws never share one
    null_ss, alt_ss = ss.spawn(2)
    y0 = sw * np.random.default_rng(null_ss).standard_normal(size)
    alt = np.random.default_rng(alt_ss)
    y1 = sx * alt.standard_normal(size) + sw * alt.standard_normal(size)
    return int(np.count_nonzero(y0 * y0 > phi)), int(np.count_nonzero(y1 * y1 <= phi))


def simulate_detector(Px: float, sigma_w2: float, n: int = DEFAULT_SAMPLES, seed: int = 0,
                      workers: int | None = None) -> MonteCarloReport:
    """Empirical alpha, beta of the y^2 radiometer with ``n`` draws per hypothesis.

    Draws are split into fixed-size chunks, each seeded from a child of
    SeedSequence(seed), so the report does not depend on the worker count.
    """
    _check(Px, sigma_w2)
    if n < MIN_SAMPLES:
        raise DomainError(f"n must be >= {MIN_SAMPLES}, got {n}")
    phi = optimal_threshold(Px, sigma_w2)
    sx, sw = math.sqrt(Px), math.sqrt(sigma_w2)
    sizes = _chunk_sizes(n)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(ss, size, sx, sw, phi) for ss, size in zip(children, sizes)]
    nw = min(worker_count(workers), len(jobs))
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as ex:
            counts = list(ex.map(_count_chunk, jobs))
    else:
        counts = [_count_chunk(j) for j in jobs]
    false_alarms = sum(c[0] for c in counts)
    misses = sum(c[1] for c in counts)
    a, b = false_alarms / n, misses / n
    se = math.sqrt(a * (1.0 - a) / n + b * (1.0 - b) / n)
    return MonteCarloReport(alpha_hat=a, beta_hat=b, xi_hat=a + b, n=n, seed=seed, std_err=se)

"""Covert power limits under the three detectability constraints, and theta-sweep frontiers."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .channel import ChannelSpec, hypothesis_pair
from .detector import error_rates_closed, worker_count
from .distributions import SkewNormalSpec
from .infotheory import (
    differential_entropy,
    gaussian_entropy,
    gaussian_mutual_information,
    kl_divergence,
    kl_gaussian_forward,
    kl_gaussian_reverse,
    mutual_information,
    total_variation,
)
from .numerics import BracketError, CovertKitError, DomainError, RootBracket, SeriesControl, find_root

logger = logging.getLogger(__name__)

POWER_CAP_FACTOR = 1e4
# sweeps evaluate hundreds of densities; 4097 nodes keep every divergence well inside tolerance
SWEEP_POINTS = 2**12 + 1
MATCH_REL_TOL = 1e-4


class ConstraintKind(enum.Enum):
    TOTAL_VARIATION = "tv"
    KL_FORWARD = "kl_forward"
    KL_REVERSE = "kl_reverse"


@dataclass(frozen=True)
class CovertnessConstraint:
    """KL kinds bound the divergence by 2 eps^2; the TV kind requires xi* >= 1 - eps."""

    kind: ConstraintKind
    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def bound(self) -> float:
        if self.kind is ConstraintKind.TOTAL_VARIATION:
            return 1.0 - self.epsilon
        return 2.0 * self.epsilon**2


class PowerCapError(CovertKitError):
    """The constraint is still slack at the largest power searched."""


def _solve_power(g, epsilon: float, sigma_w2: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not sigma_w2 > 0:
        raise DomainError(f"sigma_w2 must be positive, got {sigma_w2}")
    cap = POWER_CAP_FACTOR * sigma_w2
    if g(cap) < 0:
        raise PowerCapError(f"constraint not active below the search cap Px = {cap:g}")
    try:
        return find_root(g, RootBracket(0.0, cap, abs_tol=1e-15 * sigma_w2))
    except BracketError as exc:  # pragma: no cover - g(0) < 0 <= g(cap) by construction
        raise PowerCapError(str(exc)) from exc


def max_power_kl_forward(epsilon: float, sigma_w2: float) -> float:
    """Largest Px with D(p1 || p0) <= 2 eps^2 under Gaussian signalling."""
    target = 2.0 * epsilon**2
    return _solve_power(lambda P: kl_gaussian_forward(P, sigma_w2) - target, epsilon, sigma_w2)


def max_power_kl_reverse(epsilon: float, sigma_w2: float) -> float:
    """Largest Px with D(p0 || p1) <= 2 eps^2 under Gaussian signalling."""
    target = 2.0 * epsilon**2
    return _solve_power(lambda P: kl_gaussian_reverse(P, sigma_w2) - target, epsilon, sigma_w2)


def _xi_star(P: float, sigma_w2: float) -> float:
    return 1.0 if P <= 0 else error_rates_closed(P, sigma_w2).xi


def max_power_tv(epsilon: float, sigma_w2: float) -> float:
    """Largest Px keeping the warden's minimum error xi* at or above 1 - eps."""
    target = 1.0 - epsilon
    return _solve_power(lambda P: target - _xi_star(P, sigma_w2), epsilon, sigma_w2)


def max_power(constraint: CovertnessConstraint, sigma_w2: float) -> float:
    solver = {
        ConstraintKind.TOTAL_VARIATION: max_power_tv,
        ConstraintKind.KL_FORWARD: max_power_kl_forward,
        ConstraintKind.KL_REVERSE: max_power_kl_reverse,
    }[constraint.kind]
    return solver(constraint.epsilon, sigma_w2)


@dataclass(frozen=True)
class FrontierPoint:
    theta: float | None
    Px: float
    kl_forward: float
    kl_reverse: float
    tv: float
    mutual_info: float
    method: str = ""
    error: str | None = None

    CSV_HEADER = ("theta", "Px", "kl_forward", "kl_reverse", "tv", "mutual_info_nats")

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_cells(self) -> list[str]:
        theta = "" if self.theta is None else f"{self.theta:.17g}"
        return [theta] + [_cell(v) for v in (self.Px, self.kl_forward, self.kl_reverse, self.tv, self.mutual_info)]


def _cell(v: float) -> str:
    return "" if v is None or not math.isfinite(v) else f"{v:.17g}"


def gaussian_point(Px: float, channel: ChannelSpec) -> FrontierPoint:
    """Closed-form benchmark row for Gaussian signalling at power ``Px``."""
    tv = 1.0 - _xi_star(Px, channel.sigma_w2)
    return FrontierPoint(
        theta=None,
        Px=Px,
        kl_forward=kl_gaussian_forward(Px, channel.sigma_w2),
        kl_reverse=kl_gaussian_reverse(Px, channel.sigma_w2),
        tv=tv,
        mutual_info=gaussian_mutual_information(Px, channel.sigma_b2),
        method="closed-form",
    )


def skew_point(theta: float, Px: float, channel: ChannelSpec, points: int = SWEEP_POINTS,
               ctrl: SeriesControl | None = None) -> FrontierPoint:
    spec = SkewNormalSpec.from_power(theta, Px)
    pair = hypothesis_pair(spec, channel, points=points, ctrl=ctrl)
    if channel.sigma_b2 == channel.sigma_w2:
        # the receiver sees the same output law as the warden under H1
        mi = differential_entropy(pair.p1) - gaussian_entropy(channel.sigma_b2)
    else:
        mi = mutual_information(spec, channel.sigma_b2, points=points, ctrl=ctrl)
    return FrontierPoint(
        theta=theta,
        Px=Px,
        kl_forward=kl_divergence(pair.p1, pair.p0),
        kl_reverse=kl_divergence(pair.p0, pair.p1),
        tv=total_variation(pair.p0, pair.p1),
        mutual_info=mi,
        method=pair.method,
    )


def _safe_point(args) -> FrontierPoint:
    theta, Px, channel, points, ctrl = args
    try:
        return skew_point(theta, Px, channel, points, ctrl)
    except (CovertKitError, ArithmeticError, ValueError) as exc:
        logger.warning("theta=%g failed: %s", theta, exc)
        nan = float("nan")
        return FrontierPoint(theta, Px, nan, nan, nan, nan, method="", error=f"{type(exc).__name__}: {exc}")


def theta_sweep(Px: float, channel: ChannelSpec, theta_grid: Sequence[float], points: int = SWEEP_POINTS,
                ctrl: SeriesControl | None = None, workers: int | None = None) -> list[FrontierPoint]:
    """Divergences and mutual information of the zero-mean skew-normal input at each theta.

    Failures at individual points are recorded in the row and the sweep continues.
    Output order follows ``theta_grid``.
    """
    if not Px > 0:
        raise DomainError(f"Px must be positive, got {Px}")
    grid = [float(t) for t in theta_grid]
    if not all(math.isfinite(t) for t in grid):
        raise DomainError("theta grid must be finite")
    jobs = [(t, Px, channel, points, ctrl) for t in grid]
    nw = min(worker_count(workers), max(len(jobs), 1))
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as ex:
            return list(ex.map(_safe_point, jobs))
    return [_safe_point(j) for j in jobs]


def theta_grid(theta_min: float = -4.0, theta_max: float = 4.0, step: float = 0.05) -> np.ndarray:
    """Inclusive grid theta_min, theta_min + step, ... <= theta_max (rounded to kill drift)."""
    if not step > 0:
        raise DomainError("theta step must be positive")
    if theta_max < theta_min:
        return np.empty(0)
    n = int(math.floor((theta_max - theta_min) / step + 1e-9)) + 1
    return np.round(theta_min + step * np.arange(n), 12)


def default_gaussian_grid(Px: float, points: int = 3001) -> np.ndarray:
    return np.linspace(0.5 * Px, 2.0 * Px, points)


@dataclass(frozen=True)
class ComparisonRow:
    point: FrontierPoint
    matched_gaussian_Px: float = float("nan")
    delta_mi: float = float("nan")
    note: str = ""

    CSV_HEADER = FrontierPoint.CSV_HEADER + ("matched_gaussian_Px", "delta_mi")

    @property
    def matched(self) -> bool:
        return math.isfinite(self.matched_gaussian_Px)

    def csv_cells(self) -> list[str]:
        return self.point.csv_cells() + [_cell(self.matched_gaussian_Px), _cell(self.delta_mi)]


@dataclass
class Comparison:
    rows: list[ComparisonRow]
    gaussian: list[FrontierPoint]
    match_on: str
    notes: list[str] = field(default_factory=list)

    def best(self) -> ComparisonRow | None:
        matched = [r for r in self.rows if r.matched]
        return max(matched, key=lambda r: r.delta_mi) if matched else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ComparisonRow.CSV_HEADER)
        for r in self.rows:
            w.writerow(r.csv_cells())
        return buf.getvalue()


def _measure(point: FrontierPoint, match_on: str) -> float:
    return {"kl_reverse": point.kl_reverse, "tv": point.tv}[match_on]


def frontier_compare(theta_points: Sequence[FrontierPoint], gaussian_px_grid: Sequence[float], channel: ChannelSpec,
                     match_on: str = "kl_reverse", rel_tol: float = MATCH_REL_TOL) -> Comparison:
    """Match each skew-normal point to the Gaussian power with the same divergence.

    The Gaussian power is interpolated linearly on ``gaussian_px_grid`` and then
    accepted only if the closed-form measure at that power agrees with the
    skew-normal value to ``rel_tol``.  ``delta_mi`` is the skew-normal mutual
    information minus the matched Gaussian's; positive values mean the
    skew-normal input carries more information at equal detectability.
    """
    if match_on not in ("kl_reverse", "tv"):
        raise DomainError(f"match_on must be 'kl_reverse' or 'tv', got {match_on!r}")
    if not theta_points or len(gaussian_px_grid) == 0:
        raise DomainError("frontier_compare needs non-empty inputs")
    grid = np.sort(np.asarray(gaussian_px_grid, dtype=float))
    if np.any(grid < 0):
        raise DomainError("Gaussian power grid must be non-negative")
    gauss = [gaussian_point(float(P), channel) for P in grid]
    m = np.array([_measure(g, match_on) for g in gauss])

    def closed_measure(P: float) -> float:
        return _measure(gaussian_point(P, channel), match_on)

    rows = []
    for pt in theta_points:
        if not pt.ok:
            rows.append(ComparisonRow(pt, note=pt.error or "failed"))
            continue
        target = _measure(pt, match_on)
        lo, hi = m[0], m[-1]
        if not (lo * (1 - rel_tol) <= target <= hi * (1 + rel_tol)):
            rows.append(ComparisonRow(pt, note="outside Gaussian grid"))
            continue
        Pg = float(np.interp(target, m, grid))
        got = closed_measure(Pg)
        if abs(got - target) > rel_tol * abs(target):
            rows.append(ComparisonRow(pt, note="no match within tolerance"))
            continue
        dmi = pt.mutual_info - gaussian_mutual_information(Pg, channel.sigma_b2)
        rows.append(ComparisonRow(pt, matched_gaussian_Px=Pg, delta_mi=dmi))
    return Comparison(rows=rows, gaussian=gauss, match_on=match_on)


@dataclass(frozen=True)
class ThetaOptimum:
    theta: float
    point: FrontierPoint
    evaluations: int


def optimize_theta(Px: float, channel: ChannelSpec, theta_max: float = 4.0, points: int = SWEEP_POINTS,
                   ctrl: SeriesControl | None = None, xatol: float = 1e-4) -> ThetaOptimum:
    """Minimise kl_reverse over theta in [0, theta_max] (extension: theta is otherwise swept, not tuned).

    The objective is even in theta, so the search covers theta >= 0 only.
    """
    if not theta_max > 0:
        raise DomainError("theta_max must be positive")
    cache: dict[float, FrontierPoint] = {}

    def objective(theta: float) -> float:
        if theta not in cache:
            cache[theta] = skew_point(theta, Px, channel, points, ctrl)
        return cache[theta].kl_reverse

    res = optimize.minimize_scalar(objective, bounds=(0.0, theta_max), method="bounded",
                                   options={"xatol": xatol})
    theta = float(res.x)
    return ThetaOptimum(theta=theta, point=cache.get(theta) or skew_point(theta, Px, channel, points, ctrl),
                        evaluations=len(cache))

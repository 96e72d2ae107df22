"""Invariant suite behind ``covertkit verify``.

Each check returns a :class:`CheckResult` with the measured worst-case
quantity and the tolerance it was held to.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .channel import (
    ChannelSpec,
    SeriesNonConvergenceError,
    evaluate_skew_series,
    hypothesis_pair,
    output_pdf_quadrature,
)
from .covert import (
    default_gaussian_grid,
    frontier_compare,
    max_power_kl_forward,
    max_power_kl_reverse,
    max_power_tv,
    theta_grid,
    theta_sweep,
)
from .detector import energy_cdf_alt, energy_cdf_null, error_rates_closed, simulate_detector
from .distributions import GaussianSpec, SkewNormalSpec, TabulatedPdf, log_pdf
from .infotheory import (
    divergence_report,
    gaussian_capacity,
    gaussian_mutual_information,
    kl_divergence,
    kl_gap,
    kl_gaussian_forward,
    kl_gaussian_reverse,
)
from .numerics import SeriesControl

GRID_1D = np.linspace(0.1, 10.0, 10)
SERIES_THETAS = (0.5, 1.0, 2.0)
MC_POINTS = ((1.0, 1.0), (4.0, 1.0), (1.0, 4.0))
TABLE_EPS = (0.05, 0.1, 0.2)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def as_dict(self) -> dict:
        d = asdict(self)
        d["measured"] = float(self.measured) if math.isfinite(self.measured) else None
        return d


@dataclass(frozen=True)
class VerifyOptions:
    seed: int = 2024
    samples: int = 10_000_000
    sigma_mc: float = 3.0
    perturbations: int = 50
    theta_step: float = 0.25
    break_series: bool = False

    @classmethod
    def quick(cls, seed: int = 2024, break_series: bool = False) -> "VerifyOptions":
        return cls(seed=seed, samples=1_000_000, sigma_mc=4.0, perturbations=10, theta_step=0.5,
                   break_series=break_series)


@dataclass
class VerifyReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {"passed": self.passed, "failed": self.failed, "checks": [c.as_dict() for c in self.checks]}


def _grid_pairs():
    for P in GRID_1D:
        for s in GRID_1D:
            yield float(P), float(s), hypothesis_pair(GaussianSpec(0.0, float(P)), ChannelSpec(float(s), float(s)))


def check_grid_identities() -> list[CheckResult]:
    """Closed-form vs quadrature KL, xi* = 1 - V_T, Pinsker and the xi* bound chain on the 10x10 grid."""
    kl_err = tv_err = pinsker = chain = -math.inf
    for P, s, pair in _grid_pairs():
        rep = divergence_report(pair.p0, pair.p1)
        kl_err = max(kl_err, abs(rep.kl_forward - kl_gaussian_forward(P, s)),
                     abs(rep.kl_reverse - kl_gaussian_reverse(P, s)))
        xi = error_rates_closed(P, s).xi
        tv_err = max(tv_err, abs(xi - (1.0 - rep.total_variation)))
        pinsker = max(pinsker, rep.total_variation - min(rep.pinsker_forward, rep.pinsker_reverse))
        lb_rev = 1.0 - math.sqrt(kl_gaussian_reverse(P, s) / 2.0)
        lb_fwd = 1.0 - math.sqrt(kl_gaussian_forward(P, s) / 2.0)
        chain = max(chain, lb_rev - xi, lb_fwd - lb_rev)
    return [
        CheckResult("kl_closed_form_vs_quadrature", kl_err <= 1e-7, kl_err, 1e-7),
        CheckResult("xi_equals_one_minus_tv", tv_err <= 1e-6, tv_err, 1e-6),
        CheckResult("pinsker_both_directions", pinsker <= 1e-9, pinsker, 1e-9, "max of V_T - sqrt(D/2)"),
        CheckResult("xi_lower_bound_chain", chain <= 1e-9, chain, 1e-9,
                    "max violation of xi* >= 1-sqrt(D01/2) >= 1-sqrt(D10/2)"),
    ]


def check_kl_gap() -> CheckResult:
    P = np.linspace(0.1, 100.0, 1000)
    gaps = np.array([kl_gap(float(p), 1.0) for p in P])
    worst_neg = float(-gaps.min())
    rises = np.diff(gaps)
    ok = worst_neg <= 1e-12 and bool(np.all(rises > 0))
    return CheckResult("kl_gap_nonnegative_increasing", ok, worst_neg, 1e-12,
                       f"min increment {rises.min():.3g}")


def perturbed_gaussian(rng: np.random.Generator, Py: float):
    """Log-density of N(0, Py) plus a random Gaussian bump, renormalised and rescaled to second moment Py."""
    sd = math.sqrt(Py)
    c = rng.uniform(-3.0, 3.0) * sd
    w = rng.uniform(0.1, 1.0) * sd
    peak = 1.0 / math.sqrt(2.0 * math.pi * Py)
    a = rng.uniform(0.0, 0.1) * peak
    bump_mass = a * math.sqrt(2.0 * math.pi) * w
    Z = 1.0 + bump_mass
    m2 = (Py + bump_mass * (c * c + w * w)) / Z
    s = math.sqrt(Py / m2)

    def logq(x):
        u = np.asarray(x) / s
        base = log_pdf(GaussianSpec(0.0, Py), u)
        bump = np.log(a) - 0.5 * ((u - c) / w) ** 2
        return np.logaddexp(base, bump) - math.log(Z) - math.log(s)

    return logq


def check_gaussian_minimality(count: int, seed: int, Px: float = 1.0, sigma_w2: float = 1.0) -> CheckResult:
    Py = Px + sigma_w2
    half = 14.0 * math.sqrt(Py)
    x = np.linspace(-half, half, 2**14 + 1)
    dx = x[1] - x[0]
    p0_logs = log_pdf(GaussianSpec(0.0, sigma_w2), x)
    p0 = TabulatedPdf(x[0], dx, np.exp(p0_logs), p0_logs)
    ref = kl_gaussian_forward(Px, sigma_w2)
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(count):
        logs = perturbed_gaussian(rng, Py)(x)
        q = TabulatedPdf(x[0], dx, np.exp(logs), logs)
        worst = min(worst, kl_divergence(q, p0) - ref)
    return CheckResult("gaussian_minimises_forward_kl", worst >= -1e-9, worst, 1e-9,
                       f"{count} variance-preserving perturbations; min excess over Gaussian value")


def check_series(break_series: bool = False) -> CheckResult:
    y = np.linspace(-8.0, 8.0, 1601)
    worst = 0.0
    mass_err = 0.0
    notes = []
    for theta in SERIES_THETAS:
        spec = SkewNormalSpec.from_power(theta, 1.0)
        ctrl = None
        if break_series:
            needed = evaluate_skew_series(spec, 1.0, y).terms
            ctrl = SeriesControl(max_terms=max(1, needed // 2))
        try:
            res = evaluate_skew_series(spec, 1.0, y, ctrl)
        except SeriesNonConvergenceError as exc:
            return CheckResult("series_vs_quadrature", False, math.inf, 1e-6, f"theta={theta}: {exc}")
        quad = output_pdf_quadrature(spec, 1.0, -8.0, 8.0, y.size)
        worst = max(worst, float(np.max(np.abs(res.values - quad.densities))))
        # mass over +-10 output standard deviations
        wide = np.linspace(-14.2, 14.2, 2841)
        mass = float(np.trapezoid(evaluate_skew_series(spec, 1.0, wide, ctrl).values, wide))
        mass_err = max(mass_err, abs(mass - 1.0))
        notes.append(f"theta={theta}: {res.method}, {res.terms} terms")
    ok = worst <= 1e-6 and mass_err <= 1e-6
    return CheckResult("series_vs_quadrature", ok, worst, 1e-6, f"mass error {mass_err:.2e}; " + "; ".join(notes))


def check_monte_carlo(samples: int, seed: int, sigmas: float) -> CheckResult:
    worst = 0.0
    parts = []
    for i, (P, s) in enumerate(MC_POINTS):
        closed = error_rates_closed(P, s)
        mc = simulate_detector(P, s, samples, seed + i)
        z = abs(mc.xi_hat - closed.xi) / mc.std_err
        worst = max(worst, z)
        parts.append(f"({P:g},{s:g}): {mc.xi_hat:.6f} vs {closed.xi:.6f}")
    return CheckResult("monte_carlo_vs_closed_form", worst <= sigmas, worst, sigmas,
                       "standard errors; " + "; ".join(parts))


def check_energy_cdf(seed: int, n: int = 1_000_000, Px: float = 1.0, sigma_w2: float = 1.0) -> CheckResult:
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    y0 = math.sqrt(sigma_w2) * rng.standard_normal(n)
    y1 = math.sqrt(Px) * rng.standard_normal(n) + math.sqrt(sigma_w2) * rng.standard_normal(n)
    ks0 = stats.kstest(y0 * y0, lambda e: energy_cdf_null(e, sigma_w2)).statistic
    ks1 = stats.kstest(y1 * y1, lambda e: energy_cdf_alt(e, Px, sigma_w2)).statistic
    worst = float(max(ks0, ks1))
    return CheckResult("energy_cdf_ks", worst < 0.002, worst, 0.002, f"n={n} per hypothesis")


def check_power_table() -> list[CheckResult]:
    order_ok = True
    residual = 0.0
    for eps in TABLE_EPS:
        pf, pr, pt = max_power_kl_forward(eps, 1.0), max_power_kl_reverse(eps, 1.0), max_power_tv(eps, 1.0)
        cf, cr, ct = (gaussian_capacity(p, 1.0) for p in (pf, pr, pt))
        order_ok &= pt > pr > pf and ct > cr > cf
        residual = max(residual, abs(kl_gaussian_forward(pf, 1.0) - 2 * eps**2),
                       abs(kl_gaussian_reverse(pr, 1.0) - 2 * eps**2),
                       abs(error_rates_closed(pt, 1.0).xi - (1 - eps)))
    return [
        CheckResult("power_limit_ordering", order_ok, float(order_ok), 1.0, "tv > kl_reverse > kl_forward"),
        CheckResult("power_limit_root_residual", residual <= 1e-8, residual, 1e-8),
    ]


def check_counterexample(theta_step: float) -> list[CheckResult]:
    ch = ChannelSpec(1.0, 1.0)
    pts = [p for p in theta_sweep(1.0, ch, theta_grid(-4.0, 4.0, theta_step)) if p.ok]
    gauss_rev = kl_gaussian_reverse(1.0, 1.0)
    margin = gauss_rev - min(p.kl_reverse for p in pts)
    out = [CheckResult("skew_normal_lower_reverse_kl", margin >= 1e-4, margin, 1e-4,
                       "Gaussian kl_reverse minus sweep minimum")]
    for match in ("kl_reverse", "tv"):
        best = frontier_compare(pts, default_gaussian_grid(1.0), ch, match).best()
        dmi = best.delta_mi if best else -math.inf
        out.append(CheckResult(f"skew_normal_beats_gaussian_at_equal_{match}", dmi >= 1e-5, dmi, 1e-5,
                               f"theta={best.point.theta:g}" if best else "no matched rows"))
    excess = max(p.mutual_info for p in pts) - gaussian_mutual_information(1.0, 1.0)
    out.append(CheckResult("gaussian_maximises_mutual_information", excess <= 1e-7, excess, 1e-7))
    return out


def run(opts: VerifyOptions, progress: Callable[[str], None] | None = None) -> VerifyReport:
    report = VerifyReport()
    steps = [
        ("grid identities", check_grid_identities),
        ("kl gap", lambda: [check_kl_gap()]),
        ("gaussian minimality", lambda: [check_gaussian_minimality(opts.perturbations, opts.seed)]),
        ("series", lambda: [check_series(opts.break_series)]),
        ("monte carlo", lambda: [check_monte_carlo(opts.samples, opts.seed, opts.sigma_mc)]),
        ("energy cdf", lambda: [check_energy_cdf(opts.seed)]),
        ("power table", check_power_table),
        ("counterexample", lambda: check_counterexample(opts.theta_step)),
    ]
    for label, fn in steps:
        if progress:
            progress(label)
        report.checks.extend(fn())
    return report

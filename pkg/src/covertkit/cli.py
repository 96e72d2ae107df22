"""Command-line entry point: figure reproduction, comparison suites and single-point calculators."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .channel import ChannelSpec, hypothesis_pair
from .covert import (
    SWEEP_POINTS,
    PowerCapError,
    frontier_compare,
    max_power_kl_forward,
    max_power_kl_reverse,
    max_power_tv,
    optimize_theta,
    theta_grid,
    theta_sweep,
)
from .detector import DEFAULT_SAMPLES, MIN_SAMPLES, error_rates_closed, simulate_detector
from .distributions import GaussianSpec, SkewNormalSpec
from .infotheory import (
    divergence_report,
    gaussian_capacity,
    gaussian_mutual_information,
    kl_gaussian_forward,
    kl_gaussian_reverse,
    mutual_information,
)
from .numerics import CovertKitError

log = logging.getLogger("covertkit")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
NATS_PER_BIT = math.log(2.0)


class UsageError(Exception):
    pass


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class RunConfig:
    sigma_b_db: float = 0.0
    sigma_w_db: float = 0.0
    px_db: float = 0.0
    epsilon: float = 0.1
    theta_min: float = -4.0
    theta_max: float = 4.0
    theta_step: float = 0.05
    samples: int = DEFAULT_SAMPLES
    seed: int = 2024
    quad_points: int = SWEEP_POINTS
    out_dir: str = "."
    format: str = "csv"
    no_plots: bool = False
    bits: bool = False
    quick: bool = False
    break_series: bool = False
    optimize_theta: bool = False
    sigma_w_db_list: list[float] = field(default_factory=lambda: [-5.0, 0.0, 5.0])
    px_db_min: float = -20.0
    px_db_max: float = 20.0
    px_points: int = 81
    eps_min: float = 0.01
    eps_max: float = 0.3
    eps_steps: int = 30
    theta: float | None = None

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise UsageError(f"--epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.theta_step > 0:
            raise UsageError("--theta-step must be positive")
        if not (0.0 < self.eps_min <= self.eps_max < 1.0) or self.eps_steps < 1:
            raise UsageError("epsilon grid must satisfy 0 < eps-min <= eps-max < 1 with eps-steps >= 1")
        if self.samples < MIN_SAMPLES:
            raise UsageError(f"--samples must be >= {MIN_SAMPLES}, got {self.samples}")
        if self.quad_points < 64:
            raise UsageError("--quad-points must be >= 64")
        if self.format not in ("csv", "json"):
            raise UsageError("--format must be csv or json")
        if self.px_points < 2 or self.px_db_max <= self.px_db_min:
            raise UsageError("Px grid needs px-points >= 2 and px-db-max > px-db-min")

    @property
    def sigma_b2(self) -> float:
        return db_to_linear(self.sigma_b_db)

    @property
    def sigma_w2(self) -> float:
        return db_to_linear(self.sigma_w_db)

    @property
    def Px(self) -> float:
        return db_to_linear(self.px_db)

    @property
    def channel(self) -> ChannelSpec:
        return ChannelSpec(self.sigma_b2, self.sigma_w2)

    def thetas(self) -> np.ndarray:
        grid = theta_grid(self.theta_min, self.theta_max, self.theta_step)
        if grid.size == 0:
            raise UsageError(f"empty theta grid [{self.theta_min}, {self.theta_max}]")
        return grid

    def eps_grid(self) -> np.ndarray:
        return np.linspace(self.eps_min, self.eps_max, self.eps_steps)

    def header(self) -> str:
        return f"# covertkit {__version__} config=" + json.dumps(asdict(self), sort_keys=True)

    def info(self, nats: float) -> float:
        """Display conversion of an information value."""
        return nats / NATS_PER_BIT if self.bits else nats


# --------------------------------------------------------------------------
# output helpers


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(v)
    v = float(v)
    return f"{v:.17g}" if math.isfinite(v) else ""


def _table_bytes(cfg: RunConfig, header: Sequence[str], rows: Sequence[Sequence], extra: Sequence[str] = ()) -> bytes:
    if cfg.format == "json":
        doc = {
            "tool": f"covertkit {__version__}",
            "config": asdict(cfg),
            "notes": list(extra),
            "columns": list(header),
            "rows": [[None if _cell(v) == "" else (v if isinstance(v, str) else float(v)) for v in r] for r in rows],
        }
        return (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode()
    buf = io.StringIO()
    buf.write(cfg.header() + "\n")
    for line in extra:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue().encode()


def _write_table(cfg: RunConfig, stem: str, header, rows, extra=()) -> Path:
    path = Path(cfg.out_dir) / f"{stem}.{cfg.format}"
    _atomic_write(path, _table_bytes(cfg, header, rows, extra))
    return path


def _write_svg(cfg: RunConfig, stem: str, svg: bytes) -> Path | None:
    if cfg.no_plots:
        return None
    path = Path(cfg.out_dir) / f"{stem}.svg"
    _atomic_write(path, svg)
    return path


def _write_diagnostics(cfg: RunConfig, stem: str, entries: list[dict]) -> Path:
    path = Path(cfg.out_dir) / f"{stem}_diagnostics.json"
    _atomic_write(path, (json.dumps({"errors": entries}, indent=1, sort_keys=True) + "\n").encode())
    return path


def _emit(cfg: RunConfig, record: dict):
    """Print a single-point result to stdout."""
    if cfg.format == "json":
        print(json.dumps(record, sort_keys=True))
        return
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(list(record))
    w.writerow([_cell(v) for v in record.values()])


# --------------------------------------------------------------------------
# figures


def _sweep(cfg: RunConfig):
    pts = theta_sweep(cfg.Px, cfg.channel, cfg.thetas(), points=cfg.quad_points)
    errors = [{"theta": p.theta, "error": p.error} for p in pts if not p.ok]
    return pts, errors


def cmd_fig2(cfg: RunConfig) -> int:
    from .plotting import fig2_svg

    pts, errors = _sweep(cfg)
    ch = cfg.channel
    g_rev = kl_gaussian_reverse(cfg.Px, ch.sigma_w2)
    g_mi = gaussian_mutual_information(cfg.Px, ch.sigma_b2)
    extra = [f"gaussian_reference kl_reverse={g_rev:.17g} mutual_info_nats={g_mi:.17g}"]
    rows = [[p.theta, p.Px, p.kl_forward, p.kl_reverse, p.tv, p.mutual_info] for p in pts]
    _write_table(cfg, "fig2", pts[0].CSV_HEADER, rows, extra)
    _write_diagnostics(cfg, "fig2", errors)
    ok = [p for p in pts if p.ok]
    _write_svg(cfg, "fig2", fig2_svg([p.theta for p in ok], [p.kl_reverse for p in ok],
                                     [cfg.info(p.mutual_info) for p in ok], g_rev, cfg.info(g_mi), cfg.bits))
    if ok:
        best = min(ok, key=lambda p: p.kl_reverse)
        print(f"fig2: {len(pts)} theta points, {len(errors)} failed; min kl_reverse {best.kl_reverse:.6f} "
              f"at theta={best.theta:g} (Gaussian {g_rev:.6f})")
    if cfg.optimize_theta:
        opt = optimize_theta(cfg.Px, ch, theta_max=max(abs(cfg.theta_min), abs(cfg.theta_max)),
                             points=cfg.quad_points)
        print(f"optimize-theta (extension): theta={opt.theta:.6f} kl_reverse={opt.point.kl_reverse:.9f} "
              f"mutual_info={cfg.info(opt.point.mutual_info):.9f}")
    return EXIT_OK


def _frontier(cfg: RunConfig, stem: str, match_on: str, xlabel: str) -> int:
    from .plotting import frontier_svg

    pts, errors = _sweep(cfg)
    ch = cfg.channel
    cmp = frontier_compare(pts, np.linspace(0.5 * cfg.Px, 2.0 * cfg.Px, 3001), ch, match_on)
    rows = [[r.point.theta, r.point.Px, r.point.kl_forward, r.point.kl_reverse, r.point.tv, r.point.mutual_info,
             r.matched_gaussian_Px, r.delta_mi] for r in cmp.rows]
    _write_table(cfg, stem, cmp.rows[0].CSV_HEADER, rows, [f"matched on {match_on}"])
    g_rows = [[g.Px, g.kl_forward, g.kl_reverse, g.tv, g.mutual_info] for g in cmp.gaussian[::10]]
    _write_table(cfg, f"{stem}_gaussian", ("Px", "kl_forward", "kl_reverse", "tv", "mutual_info_nats"), g_rows)
    _write_diagnostics(cfg, stem, errors + [{"theta": r.point.theta, "error": r.note}
                                            for r in cmp.rows if r.point.ok and not r.matched])
    ok = [r.point for r in cmp.rows if r.point.ok]
    x_of = (lambda p: p.kl_reverse) if match_on == "kl_reverse" else (lambda p: p.tv)
    _write_svg(cfg, stem, frontier_svg([x_of(p) for p in ok], [cfg.info(p.mutual_info) for p in ok],
                                       [x_of(g) for g in cmp.gaussian], [cfg.info(g.mutual_info) for g in cmp.gaussian],
                                       xlabel, cfg.bits))
    best = cmp.best()
    if best is not None:
        print(f"{stem}: best delta_mi {cfg.info(best.delta_mi):.3e} at theta={best.point.theta:g} "
              f"(matched Gaussian Px={best.matched_gaussian_Px:.6f})")
    else:
        print(f"{stem}: no skew-normal point matched a Gaussian power")
    return EXIT_OK


def cmd_fig3(cfg: RunConfig) -> int:
    return _frontier(cfg, "fig3", "kl_reverse", r"$D(p_0\|p_1)$ (nats)")


def cmd_fig4(cfg: RunConfig) -> int:
    return _frontier(cfg, "fig4", "tv", r"$V_T(p_0, p_1)$")


def _fig5_curves(px: np.ndarray, sigma_w2: float) -> dict[str, np.ndarray]:
    xi = np.array([error_rates_closed(p, sigma_w2).xi for p in px])
    rev = np.array([1.0 - math.sqrt(kl_gaussian_reverse(p, sigma_w2) / 2.0) for p in px])
    fwd = np.array([1.0 - math.sqrt(kl_gaussian_forward(p, sigma_w2) / 2.0) for p in px])
    return {"xi": xi, "bound_reverse": rev, "bound_forward": fwd}


def cmd_fig5(cfg: RunConfig) -> int:
    from .plotting import fig5_svg

    px_db = np.linspace(cfg.px_db_min, cfg.px_db_max, cfg.px_points)
    px = db_to_linear(px_db)
    rows, display = [], {}
    violations = 0
    for sw_db in cfg.sigma_w_db_list:
        c = _fig5_curves(px, db_to_linear(sw_db))
        violations += int(np.sum(c["bound_reverse"] > c["xi"] + 1e-9) + np.sum(c["bound_forward"] > c["bound_reverse"] + 1e-9))
        for i in range(px.size):
            rows.append([sw_db, px_db[i], px[i], c["xi"][i], c["bound_reverse"][i], c["bound_forward"][i]])
        display[sw_db] = {k: np.maximum(v, 0.0) for k, v in c.items()}
    header = ("sigma_w_db", "Px_db", "Px", "xi_star", "bound_kl_reverse", "bound_kl_forward")
    _write_table(cfg, "fig5", header, rows, ["bounds are 1 - sqrt(D/2), unfloored"])
    _write_svg(cfg, "fig5", fig5_svg(px_db, display))
    print(f"fig5: {len(rows)} points, bound-chain violations: {violations}")
    return EXIT_OK if violations == 0 else EXIT_FAIL


def cmd_fig6(cfg: RunConfig) -> int:
    from .plotting import fig6_svg

    s_w, s_b = cfg.sigma_w2, cfg.sigma_b2
    eps = cfg.eps_grid()
    power = {"tv": [], "kl_reverse": [], "kl_forward": []}
    solvers = {"tv": max_power_tv, "kl_reverse": max_power_kl_reverse, "kl_forward": max_power_kl_forward}
    errors = []
    for e in eps:
        for kind, solve in solvers.items():
            try:
                power[kind].append(solve(float(e), s_w))
            except PowerCapError as exc:
                errors.append({"epsilon": float(e), "constraint": kind, "error": str(exc)})
                power[kind].append(float("nan"))
    info = {k: [gaussian_capacity(p, s_b) if math.isfinite(p) else float("nan") for p in v] for k, v in power.items()}
    rows = [[e, power["tv"][i], power["kl_reverse"][i], power["kl_forward"][i],
             info["tv"][i], info["kl_reverse"][i], info["kl_forward"][i]] for i, e in enumerate(eps)]
    header = ("epsilon", "Px_tv", "Px_kl_reverse", "Px_kl_forward",
              "capacity_tv_nats", "capacity_kl_reverse_nats", "capacity_kl_forward_nats")
    _write_table(cfg, "fig6", header, rows)
    _write_diagnostics(cfg, "fig6", errors)
    _write_svg(cfg, "fig6", fig6_svg(eps, power, {k: [cfg.info(v) for v in vs] for k, vs in info.items()}, cfg.bits))
    ordered = all(r[1] >= r[2] >= r[3] for r in rows if all(math.isfinite(x) for x in r[1:4]))
    print(f"fig6: {len(eps)} epsilon values, ordering tv >= kl_reverse >= kl_forward: {ordered}")
    return EXIT_OK


# --------------------------------------------------------------------------
# suites and calculators


def cmd_verify(cfg: RunConfig) -> int:
    from .verify import VerifyOptions, run

    opts = (VerifyOptions.quick(cfg.seed, cfg.break_series) if cfg.quick
            else VerifyOptions(seed=cfg.seed, break_series=cfg.break_series))
    report = run(opts, progress=lambda label: log.info("verify: %s", label))
    doc = report.as_dict()
    doc["tool"] = f"covertkit {__version__}"
    doc["quick"] = cfg.quick
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    _atomic_write(Path(cfg.out_dir) / "verify.json", text.encode())
    sys.stdout.write(text)
    if not report.passed:
        print("failed invariants: " + ", ".join(report.failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _signal(cfg: RunConfig):
    if cfg.theta is None:
        return GaussianSpec(0.0, cfg.Px)
    return SkewNormalSpec.from_power(cfg.theta, cfg.Px)


def cmd_kl(cfg: RunConfig) -> int:
    ch = cfg.channel
    pair = hypothesis_pair(_signal(cfg), ch, points=cfg.quad_points)
    rep = divergence_report(pair.p0, pair.p1)
    record = dict(zip(rep.CSV_HEADER, [cfg.Px, ch.sigma_w2, rep.kl_forward, rep.kl_reverse, rep.total_variation,
                                       rep.pinsker_forward, rep.pinsker_reverse]))
    record["theta"] = cfg.theta
    record["method"] = pair.method
    if cfg.theta is None:
        record["kl_forward_closed"] = kl_gaussian_forward(cfg.Px, ch.sigma_w2)
        record["kl_reverse_closed"] = kl_gaussian_reverse(cfg.Px, ch.sigma_w2)
    _emit(cfg, record)
    return EXIT_OK


def cmd_mi(cfg: RunConfig) -> int:
    ch = cfg.channel
    mi = mutual_information(_signal(cfg), ch.sigma_b2, points=cfg.quad_points)
    unit = "bits" if cfg.bits else "nats"
    _emit(cfg, {"Px": cfg.Px, "sigma_b2": ch.sigma_b2, "theta": cfg.theta, f"mutual_info_{unit}": cfg.info(mi),
                f"gaussian_mutual_info_{unit}": cfg.info(gaussian_mutual_information(cfg.Px, ch.sigma_b2)),
                f"gaussian_capacity_{unit}": cfg.info(gaussian_capacity(cfg.Px, ch.sigma_b2))})
    return EXIT_OK


def cmd_detector(cfg: RunConfig) -> int:
    s_w = cfg.sigma_w2
    closed = error_rates_closed(cfg.Px, s_w)
    n = min(cfg.samples, 1_000_000) if cfg.quick else cfg.samples
    mc = simulate_detector(cfg.Px, s_w, n, cfg.seed)
    record = {"Px": cfg.Px, "sigma_w2": s_w, **asdict(closed), **asdict(mc),
              "z_score": abs(mc.xi_hat - closed.xi) / mc.std_err if mc.std_err > 0 else 0.0}
    _emit(cfg, record)
    return EXIT_OK


def cmd_power_limit(cfg: RunConfig) -> int:
    s_w, s_b, e = cfg.sigma_w2, cfg.sigma_b2, cfg.epsilon
    record = {"epsilon": e, "sigma_w2": s_w}
    for kind, solve in (("tv", max_power_tv), ("kl_reverse", max_power_kl_reverse), ("kl_forward", max_power_kl_forward)):
        P = solve(e, s_w)
        record[f"Px_{kind}"] = P
        record[f"capacity_{kind}"] = cfg.info(gaussian_capacity(P, s_b))
    _emit(cfg, record)
    return EXIT_OK


COMMANDS = {
    "fig2": (cmd_fig2, "theta sweep of D(p0||p1) and I(x;z) for skew-normal signalling"),
    "fig3": (cmd_fig3, "I(x;z) versus D(p0||p1): skew-normal against Gaussian"),
    "fig4": (cmd_fig4, "I(x;z) versus total variation: skew-normal against Gaussian"),
    "fig5": (cmd_fig5, "minimum detection error and its two KL lower bounds versus Px"),
    "fig6": (cmd_fig6, "maximum covert power and capacity versus epsilon for the three constraints"),
    "verify": (cmd_verify, "run the invariant suite; JSON report, exit 1 on any failure"),
    "kl": (cmd_kl, "divergences and total variation at one operating point"),
    "mi": (cmd_mi, "mutual information at one operating point"),
    "detector": (cmd_detector, "closed-form radiometer error rates beside a Monte Carlo estimate"),
    "power-limit": (cmd_power_limit, "maximum covert power under each constraint at one epsilon"),
}


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    d = RunConfig()
    g = common.add_argument_group("operating point")
    g.add_argument("--sigma-b-db", type=float, default=d.sigma_b_db, help="receiver noise power in dB (default 0)")
    g.add_argument("--sigma-w-db", type=float, default=d.sigma_w_db, help="warden noise power in dB (default 0)")
    g.add_argument("--px-db", type=float, default=d.px_db, help="transmit power in dB (default 0)")
    g.add_argument("--epsilon", type=float, default=d.epsilon, help="covertness level in (0, 1) (default 0.1)")
    g.add_argument("--theta", type=float, default=None,
                   help="skew shape for kl/mi; omit for Gaussian signalling")
    s = common.add_argument_group("sweeps")
    s.add_argument("--theta-min", type=float, default=d.theta_min)
    s.add_argument("--theta-max", type=float, default=d.theta_max)
    s.add_argument("--theta-step", type=float, default=d.theta_step)
    s.add_argument("--sigma-w-db-list", type=_float_list, default=d.sigma_w_db_list,
                   help="comma-separated warden noise powers in dB for fig5 (default -5,0,5)")
    s.add_argument("--px-db-min", type=float, default=d.px_db_min)
    s.add_argument("--px-db-max", type=float, default=d.px_db_max)
    s.add_argument("--px-points", type=int, default=d.px_points)
    s.add_argument("--eps-min", type=float, default=d.eps_min)
    s.add_argument("--eps-max", type=float, default=d.eps_max)
    s.add_argument("--eps-steps", type=int, default=d.eps_steps)
    n = common.add_argument_group("numerics")
    n.add_argument("--samples", type=int, default=d.samples, help="Monte Carlo draws per hypothesis")
    n.add_argument("--seed", type=int, default=d.seed)
    n.add_argument("--quad-points", type=int, default=d.quad_points, help="density grid size")
    n.add_argument("--quick", action="store_true", help="reduced Monte Carlo budget and wider tolerances")
    n.add_argument("--break-series", action="store_true",
                   help="test hook: starve the output series of terms so the series check must fail")
    n.add_argument("--optimize-theta", action="store_true",
                   help="fig2: also minimise D(p0||p1) over theta (an extension; theta is otherwise swept)")
    o = common.add_argument_group("output")
    o.add_argument("--out-dir", default=d.out_dir)
    o.add_argument("--format", choices=("csv", "json"), default=d.format)
    o.add_argument("--no-plots", action="store_true", help="skip SVG rendering")
    o.add_argument("--bits", action="store_true", help="display information in bits (files stay in nats)")
    o.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="covertkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"covertkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    return RunConfig(**{k: v for k, v in vars(args).items() if k in fields})


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command][0](cfg)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
    except (CovertKitError, ArithmeticError) as exc:
        print(f"covertkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

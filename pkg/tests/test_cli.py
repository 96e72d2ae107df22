import csv
import json
import math
import subprocess
import sys

import pytest

from covertkit import __version__
from covertkit.cli import main
from covertkit.covert import max_power_kl_forward
from covertkit.infotheory import gaussian_mutual_information, kl_gaussian_reverse

SMALL_SWEEP = ["--theta-min", "-3", "--theta-max", "3", "--theta-step", "0.75", "--quad-points", "2049"]


def _rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path)])


def test_fig2_outputs_and_determinism(tmp_path, capsys):
    assert _run(tmp_path, "fig2", *SMALL_SWEEP) == 0
    first = (tmp_path / "fig2.csv").read_bytes(), (tmp_path / "fig2.svg").read_bytes()
    head = first[0].decode().splitlines()[0]
    assert head.startswith(f"# covertkit {__version__} config=")
    assert json.loads(head.split("config=", 1)[1])["theta_step"] == 0.75
    rows = _rows(tmp_path / "fig2.csv")
    zero = next(r for r in rows if float(r["theta"]) == 0.0)
    assert float(zero["kl_reverse"]) == pytest.approx(kl_gaussian_reverse(1, 1), abs=1e-7)
    assert float(zero["mutual_info_nats"]) == pytest.approx(gaussian_mutual_information(1, 1), abs=1e-7)
    best = min(rows, key=lambda r: float(r["kl_reverse"]))
    assert float(best["theta"]) != 0 and float(best["kl_reverse"]) < kl_gaussian_reverse(1, 1)
    assert first[1].startswith(b"<?xml") and b"<svg" in first[1] and b"xlink:href=\"http" not in first[1]
    assert _run(tmp_path, "fig2", *SMALL_SWEEP) == 0
    assert ((tmp_path / "fig2.csv").read_bytes(), (tmp_path / "fig2.svg").read_bytes()) == first


@pytest.mark.parametrize("cmd,col", [("fig3", "kl_reverse"), ("fig4", "tv")])
def test_frontier_commands(tmp_path, cmd, col):
    assert _run(tmp_path, cmd, "--theta-min", "1", "--theta-max", "3", "--theta-step", "0.15") == 0
    rows = _rows(tmp_path / f"{cmd}.csv")
    deltas = [float(r["delta_mi"]) for r in rows if r["delta_mi"]]
    assert deltas and max(deltas) > 0
    assert (tmp_path / f"{cmd}_gaussian.csv").exists() and (tmp_path / f"{cmd}.svg").exists()


def test_fig5_chain(tmp_path):
    assert _run(tmp_path, "fig5", "--px-points", "41") == 0
    rows = _rows(tmp_path / "fig5.csv")
    for r in rows:
        assert float(r["xi_star"]) >= float(r["bound_kl_reverse"]) - 1e-9
        assert float(r["bound_kl_reverse"]) >= float(r["bound_kl_forward"]) - 1e-9
    low = [r for r in rows if float(r["Px_db"]) == -20.0]
    assert all(float(r["xi_star"]) - float(r["bound_kl_forward"]) < 0.1 for r in low)
    by_sw = {}
    for r in rows:
        by_sw.setdefault(float(r["sigma_w_db"]), []).append(float(r["xi_star"]))
    keys = sorted(by_sw)
    for lo, hi in zip(keys, keys[1:]):
        assert all(b >= a for a, b in zip(by_sw[lo], by_sw[hi]))


def test_fig6_table(tmp_path):
    assert _run(tmp_path, "fig6", "--no-plots") == 0
    assert not (tmp_path / "fig6.svg").exists()
    rows = _rows(tmp_path / "fig6.csv")
    assert len(rows) == 30
    prev = None
    for r in rows:
        tv, rev, fwd = float(r["Px_tv"]), float(r["Px_kl_reverse"]), float(r["Px_kl_forward"])
        assert tv >= rev >= fwd
        if prev:
            assert tv > prev[0] and rev > prev[1] and fwd > prev[2]
        prev = (tv, rev, fwd)
    assert _run(tmp_path, "fig6", "--eps-min", "0.05", "--eps-max", "0.05", "--eps-steps", "1") == 0
    (row,) = _rows(tmp_path / "fig6.csv")
    assert float(row["Px_kl_forward"]) == max_power_kl_forward(0.05, 1.0)


def test_single_point_commands(tmp_path, capsys):
    assert _run(tmp_path, "kl", "--px-db", "0") == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("Px,sigma_w2,kl_forward,kl_reverse,tv,pinsker_fwd,pinsker_rev")
    assert _run(tmp_path, "mi", "--format", "json") == 0
    mi = json.loads(capsys.readouterr().out)
    assert mi["mutual_info_nats"] == pytest.approx(0.5 * math.log(2))
    assert _run(tmp_path, "mi", "--theta", "1", "--bits", "--format", "json") == 0
    assert 0 < json.loads(capsys.readouterr().out)["mutual_info_bits"] < 0.5
    assert _run(tmp_path, "detector", "--samples", "20000") == 0
    assert "alpha_hat" in capsys.readouterr().out
    assert _run(tmp_path, "power-limit", "--epsilon", "0.1") == 0
    assert "Px_kl_forward" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["fig3", "--theta-min", "1", "--theta-max", "0"],
    ["power-limit", "--epsilon", "1.5"],
    ["fig2", "--theta-step", "0"],
    ["detector", "--samples", "10"],
])
def test_usage_errors_exit_2(tmp_path, argv):
    with pytest.raises(SystemExit) as exc:
        _run(tmp_path, *argv)
    assert exc.value.code == 2


def test_verify_break_series_fails(tmp_path, capsys):
    assert _run(tmp_path, "verify", "--quick", "--break-series") == 1
    report = json.loads((tmp_path / "verify.json").read_text())
    failed = [c["name"] for c in report["checks"] if not c["passed"]]
    assert failed and all("series" in n for n in failed)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "covertkit", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout

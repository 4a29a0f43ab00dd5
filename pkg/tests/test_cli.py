"""End-to-end tests of the command-line front end.

Every run goes through main(argv) in process; files land in tmp_path.
The output contract pinned here: exact CSV header, summary key set,
exit statuses (0 success, 2 config/check failure, 3 numerical abort),
byte-for-byte reproducibility of identical configs, and the lockfile.
"""

import json
import math
import os

import numpy as np
import pytest

from quasisphere.cli import (
    SERIES_HEADER,
    ConfigError,
    config_hash,
    main,
    resolve_config,
)
from quasisphere.convex import ellipsoid_shape, save_support_table
from quasisphere.sphere import make_grid

SUMMARY_KEYS = {
    "m0_estimate", "m0_bracket", "m_by_initial", "monotone_m_by",
    "monotone_m_bartnik", "decay_exponent_u", "decay_exponent_m",
    "envelope_ok", "config_hash",
}


def run_cli(*args):
    return main(list(args))


# ---------------------------------------------------------------------------
# solve


def test_solve_artifacts(tmp_path):
    out = tmp_path / "run"
    code = run_cli("solve", "sphere:1", "const:2", "r_max=9", "n_theta=8",
                   f"directory={out}")
    assert code == 0
    lines = (out / "series.csv").read_text().splitlines()
    assert lines[0] == SERIES_HEADER
    assert len(lines) > 5
    first = [float(v) for v in lines[1].split(",")]
    assert first[0] == 0.0
    assert abs(first[1] - 4.0 * math.pi) <= 1e-10
    summary = json.loads((out / "summary.json").read_text())
    assert SUMMARY_KEYS <= set(summary)
    assert abs(summary["m0_estimate"] - 0.375) <= 1e-5
    assert summary["monotone_m_by"] is True
    assert summary["envelope_ok"] is True
    assert not (out / ".lock").exists()


def test_solve_flat_example(tmp_path):
    out = tmp_path / "flat"
    assert run_cli("solve", "sphere:1", "const:1", "r_max=9", "n_theta=8",
                   f"directory={out}") == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["m0_estimate"]) <= 1e-10


def test_solve_minimal_summary(tmp_path):
    out = tmp_path / "minimal"
    code = run_cli("solve", "sphere:1", "minimal", "r_max=31", "n_theta=8",
                   "tol=1e-8", "ladder=2,4", f"directory={out}")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["m0_estimate"] - 0.5) <= 1e-6
    assert abs(summary["penrose_ratio"] - 1.0) <= 1e-6
    assert summary["ladder_monotone"] is True
    lo, hi = summary["m0_bracket"]
    assert lo <= 0.5 <= hi + 1e-9


def test_reproducible_bytes(tmp_path):
    out = tmp_path / "rep"
    args = ("solve", "sphere:1", "const:2", "r_max=9", "n_theta=8",
            f"directory={out}")
    assert run_cli(*args) == 0
    series1 = (out / "series.csv").read_bytes()
    summary1 = (out / "summary.json").read_bytes()
    (out / "series.csv").unlink()
    (out / "summary.json").unlink()
    assert run_cli(*args) == 0
    assert (out / "series.csv").read_bytes() == series1
    assert (out / "summary.json").read_bytes() == summary1


# ---------------------------------------------------------------------------
# configuration


def test_toml_config_and_override(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        "[shape]\nspec = 'sphere:1'\n"
        "[initial]\nspec = 'const:2'\n"
        "[grid]\nn_theta = 8\n"
        "[solver]\nr_max = 9.0\n"
        f"[output]\ndirectory = '{tmp_path / 'toml_out'}'\n")
    assert run_cli("solve", "--config", str(cfg), "r_max=5") == 0
    lines = (tmp_path / "toml_out" / "series.csv").read_text().splitlines()
    last_r = float(lines[-1].split(",")[0])
    # the command-line override wins over the file value
    assert abs(last_r - 5.0) <= 1e-12


def test_unknown_section_rejected(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[banana]\nx = 1\n")
    assert run_cli("solve", "--config", str(cfg)) == 2


def test_bad_specs_exit_2(tmp_path):
    assert run_cli("solve", "banana:1",
                   f"directory={tmp_path / 'a'}") == 2
    assert run_cli("solve", "sphere:1", "const:nope",
                   f"directory={tmp_path / 'b'}") == 2
    assert run_cli("solve", "sphere:1", "const:1", "bogus_key=3",
                   f"directory={tmp_path / 'c'}") == 2
    assert run_cli("solve", "sphere:1", "const:1", "r_max=-2",
                   f"directory={tmp_path / 'd'}") == 2


def test_lock_conflict(tmp_path):
    out = tmp_path / "locked"
    out.mkdir()
    (out / ".lock").touch()
    assert run_cli("solve", "sphere:1", "const:1", "r_max=2", "n_theta=8",
                   f"directory={out}") == 2


def test_abort_writes_diagnostics(tmp_path):
    out = tmp_path / "abort"
    code = run_cli("solve", "sphere:1", "const:2", "r_max=99", "n_theta=8",
                   "max_steps=5", f"directory={out}")
    assert code == 3
    diag = json.loads((out / "diagnostics.json").read_text())
    assert "step budget" in diag["error"]
    assert diag["r"] >= 0.0
    assert not (out / ".lock").exists()


def test_config_hash_tracks_content():
    a = resolve_config("solve", ["sphere:1"], ["r_max=9"], None)
    b = resolve_config("solve", ["sphere:1"], ["r_max=9"], None)
    c = resolve_config("solve", ["sphere:2"], ["r_max=9"], None)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_resolve_config_rejects_extra_positionals():
    with pytest.raises(ConfigError):
        resolve_config("solve", ["sphere:1", "const:1", "x"], [], None)
    with pytest.raises(ConfigError):
        resolve_config("curvature-check", ["sphere:1"], [], None)


# ---------------------------------------------------------------------------
# file-based shapes and data


def test_support_file_round_trip(tmp_path):
    grid = make_grid(8, 16)
    table = tmp_path / "shape.csv"
    save_support_table(table, ellipsoid_shape(grid, 1.0, 1.0, 1.2))
    out = tmp_path / "from_file"
    code = run_cli("solve", f"support-file:{table}", "const:1", "r_max=5",
                   "n_theta=8", f"directory={out}")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["monotone_m_by"] is True


def test_mean_curvature_file(tmp_path):
    grid = make_grid(8, 16)
    # H_b = 1 on the unit sphere means u0 = 2 everywhere
    table = tmp_path / "hb.csv"
    save_support_table(table, grid.scalar(np.ones(grid.n_nodes)))
    out = tmp_path / "hb_run"
    code = run_cli("solve", "sphere:1", f"mean-curvature-file:{table}",
                   "r_max=9", "n_theta=8", f"directory={out}")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["m0_estimate"] - 0.375) <= 1e-5


# ---------------------------------------------------------------------------
# other commands


def test_verify_report(tmp_path):
    out = tmp_path / "verify"
    code = run_cli("verify", "sphere:1", "const:2", "r_max=9", "n_theta=8",
                   f"directory={out}")
    assert code == 0
    rows = json.loads((out / "verification.json").read_text())
    assert isinstance(rows, list) and rows
    for row in rows:
        assert {"check_id", "description", "value", "tolerance",
                "pass"} <= set(row)
        assert row["pass"] is True
    ids = {row["check_id"] for row in rows}
    assert "sphere-closed-form" in ids
    assert "gauss-bonnet" in ids


def test_asymptotic_report(tmp_path):
    out = tmp_path / "asym"
    code = run_cli("asymptotic", "conformal-schwarzschild", "m=1",
                   "shells=50,100", f"directory={out}")
    assert code == 0
    rep = json.loads((out / "asymptotic_report.json").read_text())
    assert abs(rep["mass_estimate"] - 1.0) <= 0.02
    assert len(rep["shells"]) == 2
    assert all(row["bracket_valid"] for row in rep["shells"])


def test_curvature_check_report(tmp_path):
    out = tmp_path / "curv"
    code = run_cli("curvature-check", f"directory={out}")
    assert code == 0
    rep = json.loads((out / "curvature_report.json").read_text())
    assert len(rep["cases"]) == 4
    assert all(row["pass"] for row in rep["cases"])


def test_unknown_command_rejected():
    with pytest.raises(SystemExit):
        main(["banana"])

from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from helishape import cli
from helishape.errors import ConfigError, PreconditionError, SpectralError
from helishape.geometry import Ball

BALL_INLINE = "spec.kind = ball\nspec.center = 0, 0, 0\nspec.radius = 1.0\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_spectrum_inline_csv(tmp_path, capsys, oracles):
    cfg = write(tmp_path, "a.cfg", "[spectrum]\n" + BALL_INLINE + "h = 0.1\ntol = 1e-6\n")
    assert cli.main(["spectrum", str(cfg)]) == 0
    assert ",value," in capsys.readouterr().out
    out = tmp_path / "a.csv"
    assert cli.main(["spectrum", str(cfg), "-o", str(out)]) == 0
    text = out.read_text()
    body = [l for l in text.splitlines() if not l.startswith("#")]
    rows = list(csv.DictReader(body))
    assert rows[0]["objective"] == "nu"
    nu = float(rows[0]["value"])
    assert abs(nu - oracles["ball_nu"]["unit"]) / oracles["ball_nu"]["unit"] < 0.06


def test_spectrum_path_spec_json_and_determinism(tmp_path):
    write(tmp_path, "ball.spec", "kind = ball\ncenter = 0, 0, 0\nradius = 1.0\n")
    cfg = write(tmp_path, "b.cfg", "[spectrum]\nspec = ball.spec\nh = 0.1\ntol = 1e-6\n"
                                   "format = json\noutput = out.json\n")
    assert cli.main(["run", str(cfg)]) == 0
    first = (tmp_path / "out.json").read_bytes()
    payload = json.loads(first)
    assert payload["provenance"]["config_hash"]
    assert cli.main(["run", str(cfg)]) == 0
    assert (tmp_path / "out.json").read_bytes() == first


def test_geometry_and_hausdorff(tmp_path):
    cfg = write(tmp_path, "g.cfg", "[geometry]\n" + BALL_INLINE + "h = 0.1\nr0 = 0.5\nformat = json\n")
    out = tmp_path / "g.json"
    assert cli.main(["geometry", str(cfg), "-o", str(out)]) == 0
    row = json.loads(out.read_text())["rows"][0]
    assert row["feasible"] is True and row["components"] == 1 and row["betti1"] == 0
    cfg = write(tmp_path, "h.cfg", "[hausdorff]\nfirst.kind = ball\nfirst.center = 0,0,0\n"
                "first.radius = 1\nsecond.kind = ball\nsecond.center = 0,0,0\nsecond.radius = 1.2\n"
                "h = 0.1\nR0 = 1.5\nformat = json\n")
    out = tmp_path / "h.json"
    assert cli.main(["run", str(cfg), "-o", str(out)]) == 0
    row = json.loads(out.read_text())["rows"][0]
    assert abs(row["hausdorff"] - 0.2) <= 0.2 + 1e-9


@pytest.mark.parametrize("text,line", [
    ("[spectrum]\n" + BALL_INLINE + "h = abc\n", 5),
    ("[spectrum]\n" + BALL_INLINE + "bogus = 1\n", 5),
    ("[nonsense]\n", 1),
    ("[spectrum]\nspec.kind = cube\nspec.center = 0,0,0\n", None),
])
def test_config_errors_exit_2(tmp_path, capsys, text, line):
    cfg = write(tmp_path, "bad.cfg", text)
    out = tmp_path / "never.csv"
    assert cli.main(["run", str(cfg), "-o", str(out)]) == 2
    err = capsys.readouterr().err
    assert "error" in err
    if line is not None:
        assert f"line {line}" in err
    assert not out.exists()


def test_section_mismatch(tmp_path):
    cfg = write(tmp_path, "c.cfg", "[geometry]\n" + BALL_INLINE)
    assert cli.main(["spectrum", str(cfg)]) == 2


def test_solver_failure_exit_3_without_partial_output(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SpectralError("did not converge", 1.0)

    monkeypatch.setattr("helishape.spectral.objective", boom)
    cfg = write(tmp_path, "s.cfg", "[spectrum]\n" + BALL_INLINE + "h = 0.1\noutput = s.csv\n")
    assert cli.main(["run", str(cfg)]) == 3
    assert not (tmp_path / "s.csv").exists()


def test_empty_class_exit_4(tmp_path):
    cfg = write(tmp_path, "o.cfg", "[optimize]\nr0 = 1.5\nV = 4.18879\nfamily = ellipsoids\n"
                                   "budget = 3\noutput = o.csv\n")
    assert cli.main(["run", str(cfg)]) == 4
    assert not (tmp_path / "o.csv").exists()


def test_optimize_balls_writes_best_spec(tmp_path):
    cfg = write(tmp_path, "o.cfg", "[optimize]\nr0 = 0.4\nV = 4.18879020479\nfamily = balls\n"
                                   "budget = 2\nbest_spec = best.spec\nformat = json\noutput = o.json\n")
    assert cli.main(["run", str(cfg)]) == 0
    from helishape.geometry import spec_from_text

    best = spec_from_text((tmp_path / "best.spec").read_text())
    assert isinstance(best, Ball)
    payload = json.loads((tmp_path / "o.json").read_text())
    assert payload["bounds"]["beats_ball"] is False


def test_convergence_needs_three_spacings(tmp_path):
    with pytest.raises(PreconditionError):
        cli.convergence_study(Ball((0, 0, 0), 1.0), [0.1, 0.05])
    cfg = write(tmp_path, "v.cfg", "[convergence]\n" + BALL_INLINE + "hs = 0.1, 0.07\n")
    assert cli.main(["run", str(cfg)]) == 2


def test_parse_config_rejects_two_sections():
    with pytest.raises(ConfigError):
        cli.parse_config("[spectrum]\nh = 1\n[geometry]\n")


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "helishape.cli", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "helishape" in r.stdout

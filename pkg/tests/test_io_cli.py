import json

import pytest

from mbqc_spt.cli import main
from mbqc_spt.errors import ConfigError
from mbqc_spt.io import fmt, parse_config, read_protocol_file, write_protocol_file

DEMO = """
[model]
family = cluster
sites = 5

[protocol]
gates = 1:z:0.7 2:x:1.1

[run]
seed = 3
"""


def test_parse_defaults_and_values():
    cfg = parse_config(DEMO)
    assert cfg.model["sites"] == 5 and cfg.seed == 3
    assert cfg.gates() == {1: ("z", 0.7), 2: ("x", 1.1)}
    assert cfg.sweep["R"] == [1, 2, 3, 4]


@pytest.mark.parametrize("text, line", [
    ("[model]\nboundary = periodic\n", 2),
    ("[model]\nsites = 4\n\nbogus = 1\n", 4),
    ("[nope]\n", 1),
    ("sites = 3\n", 1),
    ("[model]\nsites three\n", 2),
    ("[sweep]\nB = \n", 2),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError, match=f"line {line}:"):
        parse_config(text)


def test_protocol_file_roundtrip(tmp_path):
    p = tmp_path / "proto.txt"
    write_protocol_file(p, {1: ("z", 0.7), 3: ("x", 1.25)}, 5)
    assert read_protocol_file(p) == {1: ("z", 0.7), 3: ("x", 1.25)}


def test_fmt_twelve_digits():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(2.0) == "2"


def test_build_model(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(DEMO)
    assert main(["build-model", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert "symmetry residual 0" in capsys.readouterr().out
    assert (tmp_path / "o" / "terms.csv").exists()


def test_build_model_2d_image(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[model]\nfamily = cluster2d\nlayout = diagonal\nwidth = 4\nheight = 2\n")
    assert main(["build-model", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "image_terms.csv").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[model]\nboundary = periodic\n")
    assert main(["build-model", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_run_prints_unit_fidelity(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(DEMO)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "fidelity 1.000000000" in out
    for name in ("transcript_enumerate.csv", "transcript_sample.csv", "output_state.csv", "manifest.json"):
        assert (tmp_path / "o" / name).exists()
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seed"] == 3 and "numpy" in man["versions"]


def test_run_surfaces_not_in_phase(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(DEMO + "\n[model]\nperturbation = zfield\nstrength = 0.2\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "NotInPhase" in capsys.readouterr().err


def test_run_size_overflow(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[model]\nsites = 12\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "SizeOverflow" in capsys.readouterr().err


def test_verify_spectrum_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[sweep]\nB = 0.2\n")
    assert main(["verify", "spectrum", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["verify", "spectrum", "--config", str(cfg), "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    a = (tmp_path / "a" / "spectrum.csv").read_bytes()
    b = (tmp_path / "b" / "spectrum.csv").read_bytes()
    assert a == b


def test_tolerance_override_can_fail_a_suite(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[sweep]\nB = 0.2\n")
    rc = main(["verify", "spectrum", "--config", str(cfg), "--out", str(tmp_path / "a"),
               "--tolerance", "control_splitting=10"])
    assert rc == 1


def test_unknown_tolerance_rejected(capsys):
    with pytest.raises(SystemExit):
        main(["verify", "kt", "--tolerance", "nonsense=1"])

from pathlib import Path

from rasso.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, FRAMES_HEADER, SUMMARY_HEADER, main
from rasso.io import read_csv, read_cube

EMPTY_CFG = "scene.frame_count = 24\nscene.noise_std = 1.0\nscene.seed = 3\n"
SUITE = ["--n-empty", "2", "--n-person", "2", "--frames", "24"]


def run(*argv):
    return main([str(a) for a in argv])


def tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_null_end_to_end(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text(EMPTY_CFG)
    cube = tmp_path / "empty.rsso"
    assert run("simulate", "--config", cfg, "--out", cube) == EXIT_OK
    assert read_cube(cube).metadata["label"] == "empty"
    out = tmp_path / "maps"
    assert run("process", "--in", cube, "--k", 2, "--out-maps", out) == EXIT_OK
    frames = read_csv(out / "frames.csv")
    assert len(frames) == 14 and frames[0]["frame"] == "10"  # 10 warm-up frames are not scored
    assert all(f["decision"] == "empty" for f in frames)
    assert list(frames[0]) == list(FRAMES_HEADER)
    assert (out / "ra_0010.pgm").read_bytes().startswith(b"P5")
    (tmp_path / "manifest.csv").write_text("session_id,cube_path,label\ne0,empty.rsso,empty\n")
    ev = tmp_path / "ev"
    assert run("evaluate", "--sessions", tmp_path / "manifest.csv", "--k", 2, "--out", ev) == EXIT_OK
    summary = {r["metric"]: r for r in read_csv(ev / "summary.csv")}
    assert list(next(iter(summary.values()))) == list(SUMMARY_HEADER)
    assert float(summary["f1_empty"]["value"]) == 1.0
    assert "absent:person" in summary["f1_person"]["flag"] and "undefined" in summary["f1_person"]["flag"]


def test_missing_cube_in_manifest_exit_3(tmp_path, capsys):
    (tmp_path / "m.csv").write_text("session_id,cube_path,label\ns0,lost.rsso,empty\n")
    assert run("evaluate", "--sessions", tmp_path / "m.csv", "--k", 2) == EXIT_DATA
    assert "lost.rsso" in capsys.readouterr().err


def test_missing_input_exit_3(tmp_path, capsys):
    assert run("process", "--in", tmp_path / "none.rsso", "--out-maps", tmp_path) == EXIT_DATA
    assert "none.rsso" in capsys.readouterr().err


def test_corrupt_cube_exit_3(tmp_path):
    (tmp_path / "bad.rsso").write_bytes(b"RSSO\x01")
    assert run("process", "--in", tmp_path / "bad.rsso", "--out-maps", tmp_path) == EXIT_DATA


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("radar.colour = blue\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "x.rsso") == EXIT_CONFIG
    assert "radar.colour" in capsys.readouterr().err
    assert run("simulate", "--config", tmp_path / "nope.cfg", "--out", tmp_path / "x.rsso") == EXIT_CONFIG
    assert run("frobnicate") == EXIT_CONFIG
    assert run("bootstrap", "--sessions", cfg, "--pipelines", "capon") == EXIT_CONFIG
    assert run("bootstrap", "--sessions", cfg, "--pipelines", "capon,music") == EXIT_CONFIG
    assert not (tmp_path / "x.rsso").exists()


def test_defaults_parse_back(capsys, tmp_path):
    assert run("defaults") == EXIT_OK
    cfg = tmp_path / "d.cfg"
    cfg.write_text(capsys.readouterr().out)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "d.rsso", "--seed", 1) == EXIT_OK


def test_sweep_needs_both_classes(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text(EMPTY_CFG)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "e.rsso") == EXIT_OK
    (tmp_path / "m.csv").write_text("session_id,cube_path,label\ne0,e.rsso,empty\n")
    assert run("sweep", "--sessions", tmp_path / "m.csv", "--out", tmp_path) == EXIT_DATA


def run_everything(root: Path) -> dict:
    """Every subcommand once, all outputs under ``root``."""
    root.mkdir()
    cfg = root / "scene.cfg"
    cfg.write_text(EMPTY_CFG + "scene.target.0.x = 0.8\nscene.target.0.y = 3.1\n"
                   "scene.target.0.reflectivity = 0.4\nscene.target.0.breathing_amplitude = 0.005\n"
                   "scene.target.0.breathing_rate = 0.3\n")
    assert run("simulate", "--config", cfg, "--out", root / "one.rsso") == EXIT_OK
    assert run("process", "--in", root / "one.rsso", "--rasso", "--out-maps", root / "maps") == EXIT_OK
    assert run("simulate-suite", "--out", root / "suite", *SUITE) == EXIT_OK
    assert run("simulate-suite", "--out", root / "dev", "--development", *SUITE, "--seed", 9) == EXIT_OK
    manifest = root / "suite" / "manifest.csv"
    assert run("sweep", "--sessions", manifest, "--processor", "capon", "--rasso", "--out", root / "sweep") == EXIT_OK
    assert run("evaluate", "--sessions", manifest, "--k", 1.8, "--out", root / "eval") == EXIT_OK
    assert run("bootstrap", "--sessions", manifest, "--pipelines", "rasso,capon", "--B", 200, "--seed", 4,
               "--dev-sessions", root / "dev" / "manifest.csv", "--out", root / "boot") == EXIT_OK
    return tree(root)


def test_cli_serial_parallel_bit_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("RASSO_THREADS", "1")
    serial = run_everything(tmp_path / "serial")
    monkeypatch.setenv("RASSO_THREADS", "4")
    parallel = run_everything(tmp_path / "parallel")
    assert serial.keys() == parallel.keys()
    for name in ("roc.csv", "summary.csv", "delta_hist.csv", "frames.csv", "snr_trace.csv"):
        assert any(k.endswith(name) for k in serial), name
    differing = [k for k in serial if serial[k] != parallel[k]]
    assert not differing

"""Command-line interface: subcommands, config files, exit codes."""

import numpy as np
import pytest

from phasedict import load_dictionary, load_image, load_measurements
from phasedict.cli import EXIT_OK, EXIT_USAGE, main


def run_cli(*argv):
    return main(list(argv))


def test_measure_writes_loadable_set(toy_image_dir, tmp_path):
    out = tmp_path / "m.bin"
    code = run_cli("measure", "--image", str(toy_image_dir / "gray.png"),
                   "--operator", "cdp", "--masks", "3", "--snr-db", "15",
                   "--seed", "4", "--out", str(out))
    assert code == EXIT_OK
    mset = load_measurements(out)
    assert mset.operator.masks.shape == (3, 16, 16)
    assert mset.snr_db == 15.0
    assert mset.image_shape == (16, 16)


def test_measure_requires_image(capsys):
    assert run_cli("measure") == EXIT_USAGE
    assert "--image" in capsys.readouterr().err


def test_solve_from_measurement_file(toy_image_dir, tmp_path, capsys):
    mfile = tmp_path / "m.bin"
    run_cli("measure", "--image", str(toy_image_dir / "gray.png"),
            "--seed", "1", "--out", str(mfile))
    out = tmp_path / "solved"
    code = run_cli("solve", "--measurements", str(mfile),
                   "--image", str(toy_image_dir / "gray.png"),
                   "--variant", "l1", "--iters-k1", "2", "--iters-k2", "2",
                   "--patch", "4x4", "--out", str(out))
    assert code == EXIT_OK
    for name in ("trace.csv", "recon_x.png", "recon_patch.png",
                 "dictionary.bin", "atlas.png", "codes.csv"):
        assert (out / name).is_file(), name
    printed = capsys.readouterr().out
    assert "psnr=" in printed
    recon = load_image(out / "recon_x.png")
    assert recon.shape == (16, 16)


def test_solve_sweep_and_report(toy_image_dir, tmp_path, capsys):
    out = tmp_path / "sweep"
    code = run_cli("solve", "--image", str(toy_image_dir / "gray.png"),
                   "--variant", "l1", "--iters-k1", "2", "--iters-k2", "2",
                   "--patch", "4x4", "--replicates", "1", "--seed", "3",
                   "--out", str(out))
    assert code == EXIT_OK
    assert (out / "runs.csv").is_file()
    capsys.readouterr()

    summary_out = tmp_path / "resummary.csv"
    code = run_cli("report", "--runs", str(out / "runs.csv"),
                   "--out", str(summary_out))
    assert code == EXIT_OK
    assert "wf:" in capsys.readouterr().out
    assert summary_out.read_text() == (out / "summary.csv").read_text()


def test_solve_requires_input(capsys):
    assert run_cli("solve") == EXIT_USAGE
    err = capsys.readouterr().err
    assert "--image" in err and "--measurements" in err


def test_solve_no_wf_baseline(toy_image_dir, tmp_path):
    out = tmp_path / "nowf"
    code = run_cli("solve", "--image", str(toy_image_dir / "gray.png"),
                   "--variant", "l1", "--iters-k1", "1", "--iters-k2", "1",
                   "--patch", "4x4", "--out", str(out), "--no-wf-baseline",
                   "--no-save-sets")
    assert code == EXIT_OK
    assert not list(out.rglob("recon_wf.png"))
    assert not list(out.rglob("measurements.bin"))


def test_config_file_and_cli_precedence(toy_image_dir, tmp_path):
    # file sets variant l0 and seed 9; the command line overrides variant
    cfg = tmp_path / "exp.ini"
    cfg.write_text(
        "[experiment]\n"
        f"image = {toy_image_dir / 'gray.png'}\n"
        "seed = 9\n"
        "replicates = 1\n"
        "[solver]\n"
        "variant = l0\n"
        "iters-k1 = 1\n"
        "iters_k2 = 1\n"
        "[patches]\n"
        "patch = 4x4\n")
    out = tmp_path / "cfgrun"
    code = run_cli("solve", "--config", str(cfg), "--variant", "l1",
                   "--out", str(out), "--no-wf-baseline")
    assert code == EXIT_OK
    manifest = (out / "manifest.txt").read_text()
    assert "spec.variant = 'l1'" in manifest      # CLI beat the file
    assert "spec.seed = 9" in manifest            # file beat the default
    assert "spec.iters_k1 = 1" in manifest        # dashed key accepted


def test_atlas_command(toy_image_dir, tmp_path):
    mfile = tmp_path / "m.bin"
    run_cli("measure", "--image", str(toy_image_dir / "gray.png"),
            "--out", str(mfile))
    out = tmp_path / "s"
    run_cli("solve", "--measurements", str(mfile), "--patch", "4x4",
            "--iters-k1", "1", "--iters-k2", "1", "--out", str(out))
    atlas_png = tmp_path / "a.png"
    code = run_cli("atlas", "--dictionary", str(out / "dictionary.bin"),
                   "--patch", "4x4", "--out", str(atlas_png))
    assert code == EXIT_OK
    assert atlas_png.is_file()
    d = load_dictionary(out / "dictionary.bin")
    assert d.shape == (16, 32)


def test_runtime_errors_exit_1(tmp_path, capsys):
    code = run_cli("solve", "--measurements", str(tmp_path / "missing.bin"),
                   "--out", str(tmp_path / "x"))
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_bad_patch_format_is_usage_error(toy_image_dir):
    with pytest.raises(SystemExit) as exc:
        run_cli("solve", "--image", str(toy_image_dir / "gray.png"),
                "--patch", "4by4")
    assert exc.value.code == 2


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run_cli("transmogrify")
    assert exc.value.code == 2

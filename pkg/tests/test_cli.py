from pathlib import Path

import numpy as np
import pytest

from pmvir import io
from pmvir.cli import main

TOY = Path(__file__).resolve().parents[1] / "data" / "toy"


def _refine_args(scene: Path, out: Path, *extra):
    return ["refine", "--mesh", str(scene / "init.ply"), "--cameras", str(scene / "cameras.txt"),
            "--rgb-dir", str(scene / "rgb"), "--aop-dir", str(scene / "aop"), "--mask-dir", str(scene / "mask"),
            "--out", str(out / "refined.ply"), "--log", str(out / "costs.tsv"), *extra]


def test_refine_bundled_toy_scene(tmp_path):
    code = main(_refine_args(TOY, tmp_path, "--illum-out", str(tmp_path / "illum.txt"),
                             "--manifest", str(tmp_path / "run.txt")))
    assert code == 0
    refined = io.read_ply(tmp_path / "refined.ply")
    assert refined.n_vertices == io.read_ply(TOY / "init.ply").n_vertices
    rows = io.read_tsv(tmp_path / "costs.tsv")
    for stage in {r["stage"] for r in rows}:
        totals = [float(r["value"]) for r in rows if r["stage"] == stage and r["term"] == "total"]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(totals, totals[1:]))
    assert io.read_illumination(tmp_path / "illum.txt").shape == (8, 12)
    manifest = (tmp_path / "run.txt").read_text()
    assert "command = refine" in manifest and "config.k = 0.5" in manifest


def test_synth_then_eval(tmp_path):
    assert main(["synth", "--views", "8", "--size", "48", "--subdivisions", "1", "--ambiguity", "0.5",
                 "--sigma-deg", "12", "--seed", "3", "--out-dir", str(tmp_path)]) == 0
    for name in ("gt.ply", "init.ply", "cameras.txt", "illum.txt", "manifest.txt", "rgb/000.png",
                 "aop/007.pfm", "mask/003.png"):
        assert (tmp_path / name).exists(), name
    assert main(["eval", "--est", str(tmp_path / "gt.ply"), "--gt", str(tmp_path / "gt.ply"),
                 "--samples", "5000", "--out", str(tmp_path / "ev.tsv")]) == 0
    rows = {r["metric"]: r for r in io.read_tsv(tmp_path / "ev.tsv")}
    assert float(rows["accuracy"]["mean"]) < 0.05


def test_plot_cost_zeros(capsys):
    assert main(["plot-cost", "--phi-deg", "120", "--k", "0.5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "alpha_deg\tcost"
    table = {float(a): float(c) for a, c in (line.split("\t") for line in lines[1:])}
    assert len(table) == 361
    for a in (30, 120, 210, 300):
        assert abs(table[a]) < 1e-9
    assert table[75] == pytest.approx(1.0)


def test_check_grad_command(capsys):
    assert main(["check-grad", "--samples", "30"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("term\tmax_relative_error")


def test_demosaic_command(tmp_path):
    from pmvir.polar import MosaicLayout, mosaic_from_scene

    m = mosaic_from_scene(np.full((16, 16, 3), 0.3), np.full((16, 16), 0.7), np.full((16, 16), 0.4),
                          MosaicLayout())
    io.write_mosaic(tmp_path / "raw.png", m, tmp_path / "layout.txt")
    assert main(["demosaic", "--raw", str(tmp_path / "raw.png"), "--layout", str(tmp_path / "layout.txt"),
                 "--out-dir", str(tmp_path / "out")]) == 0
    aop = io.read_pfm(tmp_path / "out" / "aop.pfm")
    assert np.nanmax(np.abs(aop[4:-4, 4:-4] - 0.7)) < 1e-3


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["reconstruct"])
    assert exc.value.code == 2


def test_runtime_failure_exits_1(tmp_path, capsys):
    code = main(_refine_args(tmp_path / "missing", tmp_path))
    assert code == 1
    assert "error" in capsys.readouterr().err

import json
import os
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from voxelconv import bench
from voxelconv.cli import main
from voxelconv.fileio import load_tensor, save_tensor, save_weights
from voxelconv.oracle import random_sparse_tensor, random_weights
from voxelconv.tensor import GridShape, empty_tensor


def test_verify_small_run(capsys):
    code = main(["verify", "--seed", "42", "--shape", "12,12,12", "--density", "0.05", "--channels", "4",
                 "--modes", "subm,down,inv", "--cases", "5", "--tol", "1e-4"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("PASS") == 3


def test_verify_unknown_mode():
    assert main(["verify", "--modes", "subm,diag", "--cases", "1"]) == 2


def test_conv_channel_mismatch(tmp_path, two_point, capsys):
    save_tensor(tmp_path / "t.spt", two_point)
    save_weights(tmp_path / "w.json", random_weights(0, 2, 3, 3))
    code = main(["conv", str(tmp_path / "t.spt"), "-w", str(tmp_path / "w.json"), "-o",
                 str(tmp_path / "o.spt"), "--mode", "subm", "-k", "3"])
    assert code == 1
    assert "ChannelMismatch" in capsys.readouterr().err
    assert not (tmp_path / "o.spt").exists()


def test_conv_modes_round_trip(tmp_path, three_point):
    save_tensor(tmp_path / "fine.spt", three_point)
    save_weights(tmp_path / "w2.json", random_weights(0, 1, 1, 2))
    save_weights(tmp_path / "w3.json", random_weights(1, 1, 1, 3))
    common = ["--workers", "1", "--lct", "hash"]
    assert main(["conv", str(tmp_path / "fine.spt"), "-w", str(tmp_path / "w3.json"), "-o",
                 str(tmp_path / "s.spt"), "--mode", "subm", *common]) == 0
    assert main(["conv", str(tmp_path / "fine.spt"), "-w", str(tmp_path / "w2.json"), "-o",
                 str(tmp_path / "c.spt"), "--mode", "down", "-s", "2", *common]) == 0
    assert load_tensor(tmp_path / "c.spt").n == 2
    assert main(["conv", str(tmp_path / "c.spt"), "-w", str(tmp_path / "w2.json"), "-o",
                 str(tmp_path / "u.spt"), "--mode", "inv", "--fine", str(tmp_path / "fine.spt"), *common]) == 0
    up = load_tensor(tmp_path / "u.spt")
    assert np.array_equal(up.indices, three_point.indices)
    # stride flag must agree with the weights
    assert main(["conv", str(tmp_path / "fine.spt"), "-w", str(tmp_path / "w2.json"), "-o",
                 str(tmp_path / "x.spt"), "--mode", "down", "-s", "3"]) == 1


def test_info_empty(tmp_path, capsys):
    save_tensor(tmp_path / "e.spt", empty_tensor(GridShape(4, 4, 4), 1))
    assert main(["info", str(tmp_path / "e.spt")]) == 0
    assert "n=0" in capsys.readouterr().out


def test_info_bad_file(tmp_path, capsys):
    (tmp_path / "bad.spt").write_bytes(b"nope")
    assert main(["info", str(tmp_path / "bad.spt")]) == 1
    assert "BadMagic" in capsys.readouterr().err
    assert main(["info", str(tmp_path / "missing.spt")]) == 1


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["conv"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--shape", "4,4"])
    assert exc.value.code == 2


def test_voxelize(tmp_path):
    (tmp_path / "p.txt").write_text("batch,x,y,z,f\n0,0.12,0.07,0.0,1\n0,0.13,0.06,0.01,3\n0,0.31,0.31,0.31,5\n")
    assert main(["voxelize", str(tmp_path / "p.txt"), "-o", str(tmp_path / "v.spt"),
                 "--voxel-size", "0.05", "--shape", "8,8,8"]) == 0
    t = load_tensor(tmp_path / "v.spt")
    assert t.indices.T.tolist() == [[0, 2, 1, 0], [0, 6, 6, 6]]
    assert t.features.ravel().tolist() == [2.0, 5.0]
    (tmp_path / "far.txt").write_text("0,9,9,9,1\n")
    assert main(["voxelize", str(tmp_path / "far.txt"), "-o", str(tmp_path / "f.spt"),
                 "--voxel-size", "0.05", "--shape", "8,8,8"]) == 1


def test_bench_report_schema(tmp_path):
    out = tmp_path / "r.json"
    assert main(["bench", "--op", "down", "--shape", "16,16,16", "--channels", "4", "--repeats", "2",
                 "-o", str(out)]) == 0
    reports = json.loads(out.read_text())
    assert [r["path"] for r in reports] == ["reference", "optimized"]
    for r in reports:
        jsonschema.validate(r, bench.BENCH_REPORT_SCHEMA)
        assert r["size"] == 2 and r["repeats"] == 2


@pytest.mark.parametrize("op", bench.OPERATORS)
def test_run_bench_each_operator(op):
    r = bench.run_bench(op, "optimized", GridShape(12, 12, 12), 0.05, 2, 3 if op == "subm" else 2, repeats=1)
    jsonschema.validate(r, bench.BENCH_REPORT_SCHEMA)
    assert "throughput" in bench.format_report(r)


def test_config_threshold_forces_hash(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"lct": {"dense_threshold": 0}}')
    out = tmp_path / "r.json"
    assert main(["bench", "--op", "subm", "--shape", "8,8,8", "--channels", "1", "--repeats", "1",
                 "--path", "reference", "--config", str(cfg), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["path"] == "reference"


def test_cli_outputs_are_bitwise_reproducible(tmp_path):
    t = random_sparse_tensor(4, GridShape(16, 16, 16), 0.05, 3)
    save_tensor(tmp_path / "in.spt", t)
    save_weights(tmp_path / "w.json", random_weights(2, 5, 3, 3))
    outs = []
    for i, workers in enumerate(("1", "0")):
        o = tmp_path / f"o{i}.spt"
        assert main(["conv", str(tmp_path / "in.spt"), "-w", str(tmp_path / "w.json"), "-o", str(o),
                     "--mode", "subm", "--workers", workers]) == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point():
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-m", "voxelconv", "info"], capture_output=True, text=True, env=env)
    assert proc.returncode == 2
    assert "usage" in proc.stderr

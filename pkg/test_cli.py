import csv
import json

import numpy as np
import pytest

from config.settings import settings
from geometry.transforms import apply_transform, invert, random_rigid_transform, rotation_error
from registra import EXIT_OK, EXIT_REGISTRATION_FAILED, EXIT_USAGE, cli_main
from services.cloud_io import parse_cloud, write_cloud, write_transform

SMALL_PROTOCOL = {
    "levels": [-90.0, 180.0],
    "trials": 1,
    "initial_sample": 400,
    "input_size": 256,
    "subsample_chain": [256],
    "k_sweep": [128],
    "base_size": 512,
    "methods": ["coarse", "refined"],
}


@pytest.fixture
def box(tmp_path):
    path = str(tmp_path / "box.xyz")
    assert cli_main(["gen", "box", "1024", path, "--seed", "3"]) == EXIT_OK
    return path


def read(path):
    with open(path) as f:
        return json.load(f)


def test_gen_is_deterministic(tmp_path, box):
    again = str(tmp_path / "again.xyz")
    assert cli_main(["gen", "box", "1024", again, "--seed", "3"]) == EXIT_OK
    assert open(box).read() == open(again).read()
    assert len(parse_cloud(box)) == 1024


def test_gen_rejects_unknown_shape(tmp_path):
    assert cli_main(["gen", "torus", "10", str(tmp_path / "t.xyz")]) == EXIT_USAGE


def test_register_self_with_handcrafted(tmp_path, box):
    out = str(tmp_path / "result.json")
    assert cli_main(["register", box, box, "--backend", "handcrafted", "--out", out]) == EXIT_OK

    data = read(out)
    assert data["success"]
    assert np.allclose(data["coarse"]["rotation"], np.eye(3), atol=1e-6)
    coarse_error = rotation_error(np.eye(3), np.array(data["coarse"]["rotation"]))
    assert abs(rotation_error(np.eye(3), np.array(data["rotation"])) - coarse_error) < 0.5
    assert data["k"] == 128


def test_register_without_refinement(tmp_path, box):
    out = str(tmp_path / "coarse.json")
    assert cli_main(["register", box, box, "--backend", "handcrafted", "--no-refine", "--out", out]) == EXIT_OK
    data = read(out)
    assert data["refined"] is None
    assert np.allclose(data["rotation"], np.eye(3), atol=1e-9)


def test_register_with_ground_truth(tmp_path, box):
    cloud = parse_cloud(box)
    rotation = random_rigid_transform(135.0, "z", exact=True)
    source = write_cloud(apply_transform(rotation, cloud), str(tmp_path / "turned.xyz"))
    gt = write_transform(invert(rotation), str(tmp_path / "gt.json"))

    out = str(tmp_path / "oracle.json")
    code = cli_main(["register", source, box, "--backend", "oracle", "--preset", "sharp", "--gt", gt, "--out", out])
    assert code == EXIT_OK
    data = read(out)
    assert data["coarse_RE"] < 0.1
    assert {"RE", "TE", "coarse_TE"} <= set(data)


def test_confidence_dumps(tmp_path, box):
    png = str(tmp_path / "consensus.png")
    table = str(tmp_path / "consensus.csv")
    for dump in (png, table):
        args = ["register", box, box, "--backend", "oracle", "--no-refine", "--dump-confidence", dump,
                "--out", str(tmp_path / "r.json")]
        assert cli_main(args) == EXIT_OK

    assert open(png, "rb").read(8) == b"\x89PNG\r\n\x1a\n"
    with open(table) as f:
        rows = list(csv.reader(f))
    assert len(rows) == 256


def test_usage_errors(tmp_path, box):
    assert cli_main(["register", box]) == EXIT_USAGE
    assert cli_main(["register", box, box, "--frobnicate"]) == EXIT_USAGE
    assert cli_main(["register", box, str(tmp_path / "missing.xyz"), "--out", str(tmp_path / "r.json")]) == EXIT_USAGE
    assert cli_main(["register", box, box, "--backend", "magic", "--out", str(tmp_path / "r.json")]) == EXIT_USAGE
    assert cli_main([]) == EXIT_USAGE


def test_tiny_cloud_fails_registration(tmp_path):
    tiny = str(tmp_path / "tiny.xyz")
    assert cli_main(["gen", "box", "100", tiny]) == EXIT_OK
    code = cli_main(["register", tiny, tiny, "--backend", "handcrafted", "--out", str(tmp_path / "r.json")])
    assert code == EXIT_REGISTRATION_FAILED


def test_icp_command(tmp_path, box):
    out = str(tmp_path / "icp.json")
    assert cli_main(["icp", box, box, "--max-iter", "5", "--out", out]) == EXIT_OK
    data = read(out)
    assert data["iterations"] == 1
    assert np.allclose(data["rotation"], np.eye(3), atol=1e-9)


def test_bench_with_config_file(tmp_path):
    config = tmp_path / "small.json"
    config.write_text(json.dumps({"backend": "oracle", "protocol": SMALL_PROTOCOL}))
    out = str(tmp_path / "report.csv")

    assert cli_main(["bench", "--config", str(config), "--out", out]) == EXIT_OK
    with open(out) as f:
        rows = list(csv.reader(f))
    assert len(rows) == 1 + 2 * 2
    assert read(str(tmp_path / "report.json"))["config"]["levels"] == [-90.0, 180.0]

    assert cli_main(["bench", "--config", str(config), "--backend", "file:x.feat", "--out", out]) == EXIT_USAGE
    assert cli_main(["bench", "--config", str(tmp_path / "absent.json"), "--out", out]) == EXIT_USAGE


def test_bench_list(capsys):
    assert cli_main(["bench", "--list"]) == EXIT_OK
    assert "large_rotation" in capsys.readouterr().out


def test_cache_commands(tmp_path, monkeypatch, box):
    monkeypatch.setattr(settings, "CACHE_DIR", str(tmp_path / "cache"))
    out = str(tmp_path / "r.json")
    assert cli_main(["register", box, box, "--backend", "handcrafted", "--no-refine", "--cache", "--out", out]) == EXIT_OK

    assert cli_main(["cache", "stats"]) == EXIT_OK
    assert cli_main(["cache", "clear"]) == EXIT_OK
    assert cli_main(["cache", "purge"]) == EXIT_USAGE

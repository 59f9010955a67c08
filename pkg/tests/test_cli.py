import json

import numpy as np
import pytest

from cli import EXIT_INVALID, EXIT_IO, EXIT_OK, main
from network import graph_layout
from params import count_parameters
from run_config import load_run_config
from tensor_io import read_dump_summary, read_image, read_stage_dump, read_tensor, write_image

DESK = {"input_size": 64, "preset": "desk", "unified_width": 8}


@pytest.fixture
def workspace(tmp_path):
    """Desk config, seeded weights and a 40x48 grayscale input"""
    config = tmp_path / "desk.json"
    config.write_text(json.dumps(DESK), encoding="utf-8")
    weights = tmp_path / "desk.asgw"
    assert main(["init-weights", "--seed", "42", "--out", str(weights), "--config", str(config)]) == EXIT_OK
    image = tmp_path / "case.pgm"
    pixels = np.random.Generator(np.random.PCG64(3)).integers(0, 256, size=(40, 48)) / 255.0
    write_image(pixels, image)
    return tmp_path, config, weights, image


def test_usage_errors_exit_with_one(capsys):
    assert main([]) == EXIT_INVALID
    assert main(["forward"]) == EXIT_INVALID
    assert main(["metrics", "--pred", "a"]) == EXIT_INVALID
    assert "usage" in capsys.readouterr().err


def test_init_weights_reports_parameter_count(workspace, capsys):
    tmp_path, config, _, _ = workspace
    out = tmp_path / "again.asgw"
    assert main(["init-weights", "--out", str(out), "--config", str(config)]) == EXIT_OK
    layout = graph_layout(load_run_config(config).encoder_config())
    assert f"{count_parameters(layout)} parameters" in capsys.readouterr().out
    assert out.read_bytes() == (tmp_path / "desk.asgw").read_bytes()


def test_forward_writes_mask_at_source_size(workspace):
    tmp_path, config, weights, image = workspace
    out, dump = tmp_path / "mask.pgm", tmp_path / "dump"
    code = main(["forward", "--in", str(image), "--weights", str(weights), "--out", str(out),
                 "--config", str(config), "--dump-stages", str(dump)])
    assert code == EXIT_OK
    mask = read_image(out)
    assert mask.shape == (1, 1, 40, 48)

    tensors = read_stage_dump(dump)
    assert tensors["mask"].shape == (1, 1, 64, 64)
    assert tensors["pred_2"].shape == (1, 1, 16, 16)
    assert "edge_3" in tensors
    summary = read_dump_summary(dump)
    assert summary["source_size"] == [40, 48]
    assert summary["parameters"] == count_parameters(graph_layout(load_run_config(config).encoder_config()))


def test_forward_binary_mask(workspace):
    tmp_path, config, weights, image = workspace
    out = tmp_path / "binary.pgm"
    assert main(["forward", "--in", str(image), "--weights", str(weights), "--out", str(out),
                 "--config", str(config), "--binary"]) == EXIT_OK
    assert set(np.unique(read_image(out))) <= {0.0, 1.0}


def test_forward_ablation_drops_edge_tensors(workspace):
    tmp_path, config, weights, image = workspace
    dump = tmp_path / "ablated"
    code = main(["forward", "--in", str(image), "--weights", str(weights), "--out", str(tmp_path / "m.pgm"),
                 "--config", str(config), "--ablate", "edge_branch,asf_in_mse", "--dump-stages", str(dump)])
    assert code == EXIT_OK
    assert not any(name.startswith("edge_") for name in read_stage_dump(dump))
    assert read_tensor(dump / "mse.ast").shape == (1, 1, 2, 2)


def _forward_dump(workspace, name, *extra):
    tmp_path, config, weights, image = workspace
    dump = tmp_path / name
    code = main(["forward", "--in", str(image), "--weights", str(weights), "--out", str(tmp_path / f"{name}.pgm"),
                 "--config", str(config), "--dump-stages", str(dump), *extra])
    assert code == EXIT_OK
    return dump


def test_forward_dumps_are_byte_identical_across_runs(workspace):
    first = _forward_dump(workspace, "first")
    second = _forward_dump(workspace, "second")
    names = sorted(path.name for path in first.iterdir())
    assert names == sorted(path.name for path in second.iterdir())
    for name in names:
        if name.endswith(".ast"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_forward_ablation_changes_the_mask(workspace):
    default = read_tensor(_forward_dump(workspace, "default") / "mask.ast")
    for branch in ("asf_in_snp", "snp", "mse", "dci"):
        ablated = read_tensor(_forward_dump(workspace, branch, "--ablate", branch) / "mask.ast")
        assert ablated.shape == default.shape
        assert not np.array_equal(ablated, default), branch


def test_forward_dci_ablation_drops_edge_tensors(workspace):
    dump = _forward_dump(workspace, "no_dci", "--ablate", "dci")
    tensors = read_stage_dump(dump)
    assert not any(name.startswith("edge_") for name in tensors)
    assert tensors["pred_5"].shape == (1, 1, 2, 2)
    assert read_dump_summary(dump)["config"]["flags"]["dci"] is False


def test_forward_failures_map_to_exit_codes(workspace):
    tmp_path, config, weights, image = workspace
    base = ["forward", "--in", str(image), "--weights", str(weights), "--out", str(tmp_path / "m.pgm"),
            "--config", str(config)]
    assert main(base + ["--ablate", "decoder"]) == EXIT_INVALID

    missing = ["forward", "--in", str(image), "--weights", str(tmp_path / "none.asgw"),
               "--out", str(tmp_path / "m.pgm"), "--config", str(config)]
    assert main(missing) == EXIT_IO

    broken = tmp_path / "broken.pgm"
    broken.write_bytes(b"P2\n1 1\n255\n0")
    assert main(["forward", "--in", str(broken), "--weights", str(weights), "--out", str(tmp_path / "m.pgm"),
                 "--config", str(config)]) == EXIT_IO

    wider = tmp_path / "wider.json"
    wider.write_text(json.dumps({**DESK, "unified_width": 16}), encoding="utf-8")
    assert main(["forward", "--in", str(image), "--weights", str(weights), "--out", str(tmp_path / "m.pgm"),
                 "--config", str(wider)]) == EXIT_INVALID


def test_metrics_command(tmp_path, capsys):
    gt = np.zeros((8, 8))
    gt[2:6, 3:7] = 1
    for folder in ("pred", "gt"):
        (tmp_path / folder).mkdir()
        write_image(gt, tmp_path / folder / "a.pgm")
        write_image(gt.T, tmp_path / folder / "b.pgm")
    report = tmp_path / "report.txt"
    code = main(["metrics", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
                 "--report", str(report), "--workers", "2"])
    assert code == EXIT_OK
    assert "mean" in capsys.readouterr().out
    lines = report.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("a.pgm 1.000000 1.000000")
    assert lines[1].endswith("0.000000")
    assert len(lines) == 2


def test_metrics_command_without_pairs(tmp_path):
    (tmp_path / "pred").mkdir()
    (tmp_path / "gt").mkdir()
    assert main(["metrics", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt")]) == EXIT_INVALID
    assert main(["metrics", "--pred", str(tmp_path / "nope"), "--gt", str(tmp_path / "gt")]) == EXIT_INVALID


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--trials", "3", "--seed", "5"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "weighted_bce" in out and "9/9 instances" in out


@pytest.mark.slow
def test_selfcheck_command(capsys):
    assert main(["selfcheck"]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out

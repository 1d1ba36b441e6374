import shutil

import pytest
from PIL import Image

from cdgnet.cli.main import AUX_FILES, EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from cdgnet.data.diagnostics import HISTOGRAM_BINS
from cdgnet.training.trainer import parse_metrics_log

TINY = "channels=8\nsmall_channels=4\nreduction_ratio=4\nbatch=2\ncrop=8\nepochs=1\nseed=2\n"


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "tiny.cfg").write_text(TINY, encoding="utf-8")
    assert main(["synth", "--out", str(tmp_path / "data"), "--count", "4", "--size", "16", "--seed", "1"]) == EXIT_OK
    return tmp_path


def test_train_deblur_eval_pipeline(workspace, capsys):
    data = workspace / "data"
    ckpt = workspace / "model.ckpt"
    assert main(["train", "--data", str(data), "--config", str(workspace / "tiny.cfg"), "--out", str(ckpt)]) == EXIT_OK
    assert ckpt.is_file()
    log = (workspace / "model.metrics.csv").read_text(encoding="utf-8")
    assert len(parse_metrics_log(log)) == 1

    restored = workspace / "restored.png"
    aux = workspace / "aux"
    code = main(
        ["deblur", "--ckpt", str(ckpt), "--in", str(data / "blur" / "0000.png"), "--out", str(restored), "--dump-aux", str(aux)]
    )
    assert code == EXIT_OK
    with Image.open(restored) as image:
        assert image.mode == "RGB"
        assert image.size == (16, 16)
    assert sorted(p.name for p in aux.iterdir()) == sorted(AUX_FILES)

    report = workspace / "eval.csv"
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data), "--out", str(report)]) == EXIT_OK
    lines = report.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "name,psnr,ssim"
    assert len(lines) == 1 + 4 + 1
    assert lines[-1].startswith("mean,")


def test_single_branch_model_dumps_only_its_branch(workspace):
    config = workspace / "large.cfg"
    config.write_text(TINY + "branches=large\n", encoding="utf-8")
    ckpt = workspace / "large.ckpt"
    assert main(["train", "--data", str(workspace / "data"), "--config", str(config), "--out", str(ckpt)]) == EXIT_OK
    aux = workspace / "aux"
    image = workspace / "data" / "blur" / "0000.png"
    code = main(["deblur", "--ckpt", str(ckpt), "--in", str(image), "--out", str(workspace / "out.png"), "--dump-aux", str(aux)])
    assert code == EXIT_OK
    assert sorted(p.name for p in aux.iterdir()) == ["attention_large.png", "large.png"]


def test_deblur_pads_odd_sized_inputs(workspace, capsys):
    ckpt = workspace / "model.ckpt"
    assert main(["train", "--data", str(workspace / "data"), "--config", str(workspace / "tiny.cfg"), "--out", str(ckpt)]) == EXIT_OK
    odd = workspace / "odd.png"
    with Image.open(workspace / "data" / "blur" / "0001.png") as image:
        image.crop((0, 0, 13, 10)).save(odd)
    assert main(["deblur", "--ckpt", str(ckpt), "--in", str(odd), "--out", str(workspace / "odd_out.png")]) == EXIT_OK
    assert "padded by 2x3" in capsys.readouterr().out
    with Image.open(workspace / "odd_out.png") as image:
        assert image.size == (13, 10)


def test_eval_without_checkpoint_scores_inputs(workspace):
    data = workspace / "data"
    shutil.rmtree(data / "blur")
    shutil.copytree(data / "sharp", data / "blur")
    assert main(["eval", "--data", str(data)]) == EXIT_OK
    lines = (data / "eval.csv").read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        _, psnr, ssim = line.split(",")
        assert psnr == "inf"
        assert float(ssim) == pytest.approx(1.0)


def test_diagnose_writes_three_sections(workspace, capsys):
    out = workspace / "diag.csv"
    assert main(["diagnose", "--in", str(workspace / "data" / "sharp" / "0000.png"), "--out", str(out)]) == EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "bin_index,count"
    assert lines[HISTOGRAM_BINS + 1] == "radius,log_mag"
    assert lines[-2] == "hf_ratio"
    assert "hf_ratio=" in capsys.readouterr().out


def test_unknown_config_key_is_a_usage_error(workspace):
    bad = workspace / "bad.cfg"
    bad.write_text("channels=8\nwidht=3\n", encoding="utf-8")
    code = main(["train", "--data", str(workspace / "data"), "--config", str(bad), "--out", str(workspace / "x.ckpt")])
    assert code == EXIT_USAGE
    assert not (workspace / "x.ckpt").exists()


def test_missing_input_is_a_failure(workspace, tmp_path):
    code = main(["diagnose", "--in", str(tmp_path / "nope.png"), "--out", str(tmp_path / "d.csv")])
    assert code == EXIT_FAILURE


def test_missing_required_flag_exits_with_usage():
    with pytest.raises(SystemExit) as info:
        main(["deblur", "--ckpt", "model.ckpt"])
    assert info.value.code == EXIT_USAGE


def test_params_report(workspace, capsys):
    assert main(["params", "--config", str(workspace / "tiny.cfg")]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    start = out.index("module,elements")
    modules = {line.split(",")[0] for line in out[start + 1 :] if "," in line}
    assert {"encoder", "large_decoder", "small_decoder", "fusion"} <= modules
    assert any(line.startswith("bytes=") for line in out)


def test_masks_sweep(workspace, capsys):
    out = workspace / "masks"
    image = workspace / "data" / "sharp" / "0002.png"
    assert main(["masks", "--in", str(image), "--out", str(out), "--mu", "0.5", "0.9"]) == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["mask_0.5.png", "mask_0.9.png"]
    assert capsys.readouterr().out.count("sharp_fraction=") == 2


def test_gradcheck_single_op(capsys):
    assert main(["gradcheck", "--op", "relu"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    reports = [line for line in lines if line.startswith("relu ")]
    assert len(reports) == 1 and reports[0].endswith(" ok")
    assert any(line.startswith("checks=1 ") for line in lines)


def test_gradcheck_unknown_op_is_a_usage_error():
    assert main(["gradcheck", "--op", "softmax"]) == EXIT_USAGE

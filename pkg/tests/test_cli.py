import csv
import json

import numpy as np
import pytest

from patchperm.cli import build_parser, main
from patchperm.imageio import load_image, save_image
from toydata import smooth_content, write_surrogate_vgg, write_toy_dataset

TINY = ["--t", "2", "--crop-size", "36", "--batch-size", "2", "--generator-width", "4",
        "--n-residual", "1", "--iterations", "3", "--checkpoint-every", "2"]


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    style, content = write_toy_dataset(root, n_content=6)
    vgg = write_surrogate_vgg(root / "vgg.pth")
    return root, style, content, vgg


@pytest.fixture(scope="module")
def trained(toy):
    root, style, content, vgg = toy
    out = root / "run1"
    code = main(["train", "--style", str(style), "--content-dir", str(content), "--out", str(out),
                 "--vgg-weights", str(vgg)] + TINY)
    assert code == 0
    return out


def test_train_outputs(trained):
    names = {p.name for p in trained.iterdir()}
    assert {"final.ckpt", "ckpt_000002.ckpt", "ckpt_000003.ckpt", "loss.csv",
            "config.json", "loss_curves.png"} <= names
    with open(trained / "loss.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["iter", "d_loss", "g_adv", "g_content", "g_total"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    echo = json.loads((trained / "config.json").read_text())
    assert echo["T"] == 2 and echo["generator_width"] == 4


def test_train_rerun_identical(toy, trained):
    root, style, content, vgg = toy
    out = root / "run2"
    assert main(["train", "--style", str(style), "--content-dir", str(content), "--out", str(out),
                 "--vgg-weights", str(vgg)] + TINY) == 0
    assert (out / "loss.csv").read_text() == (trained / "loss.csv").read_text()


def test_vgg_env_fallback(toy, monkeypatch):
    root, style, content, vgg = toy
    monkeypatch.setenv("P2_VGG_WEIGHTS", str(vgg))
    out = root / "run_env"
    assert main(["train", "--style", str(style), "--content-dir", str(content), "--out", str(out),
                 "--no-figures"] + TINY) == 0
    assert (out / "final.ckpt").exists()
    assert not (out / "loss_curves.png").exists()


def test_missing_vgg_is_config_error(toy, monkeypatch, capsys):
    root, style, content, _ = toy
    monkeypatch.delenv("P2_VGG_WEIGHTS", raising=False)
    code = main(["train", "--style", str(style), "--content-dir", str(content),
                 "--out", str(root / "novgg")] + TINY)
    err = capsys.readouterr().err
    assert code == 1
    assert err.startswith("error:") and err.count("\n") == 1 and "Traceback" not in err


def test_config_file_and_flag_precedence(toy, tmp_path):
    root, style, content, vgg = toy
    cfg = tmp_path / "run.yaml"
    cfg.write_text(f"style: {style}\ncontent_dir: {content}\nvgg_weights: {vgg}\n"
                   "t: 2\ncrop_size: 36\nbatch_size: 2\ngenerator_width: 4\nn_residual: 1\n"
                   "iterations: 5\nseed: 3\n")
    out = tmp_path / "cfgrun"
    assert main(["train", "--config", str(cfg), "--out", str(out), "--iterations", "2",
                 "--no-figures"]) == 0
    echo = json.loads((out / "config.json").read_text())
    assert echo["iterations"] == 2 and echo["seed"] == 3 and echo["T"] == 2


def test_config_unknown_key(toy, tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("style: x.png\nbogus_key: 1\n")
    assert main(["train", "--config", str(cfg)]) == 1
    assert "bogus_key" in capsys.readouterr().err


def test_invalid_values_exit_1(toy, capsys):
    root, style, content, vgg = toy
    code = main(["train", "--style", str(style), "--content-dir", str(content), "--out",
                 str(root / "bad"), "--vgg-weights", str(vgg), "--crop-size", "40"])
    assert code == 1
    assert "multiple of n=9" in capsys.readouterr().err
    assert main(["train", "--style", str(style), "--content-dir", str(content), "--out",
                 str(root / "bad2"), "--vgg-weights", str(vgg), "--lam", "-1"]) == 1


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--no-such-flag"])
    assert exc.value.code == 2


@pytest.mark.parametrize("command", ["train", "render", "eval", "permute"])
def test_help_lists_defaults(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        if action.dest == "help":
            continue
        assert action.option_strings[-1] in text
    assert text.count("(default:") >= len(sub._actions) - 1


def test_render_same_size(trained, tmp_path):
    src = tmp_path / "x.png"
    save_image(smooth_content(50, seed=4)[:50, :47], src)  # not a multiple of 4
    out = tmp_path / "y.png"
    assert main(["render", "--checkpoint", str(trained / "final.ckpt"), "--in", str(src),
                 "--out", str(out)]) == 0
    y = load_image(out)
    assert y.shape == load_image(src).shape
    y2 = tmp_path / "y2.png"
    main(["render", "--checkpoint", str(trained / "final.ckpt"), "--in", str(src), "--out", str(y2)])
    assert np.array_equal(load_image(y2), y)


def test_render_directory_with_sheet(trained, toy, tmp_path):
    _, _, content, _ = toy
    out = tmp_path / "rendered"
    assert main(["render", "--checkpoint", str(trained / "final.ckpt"), "--in", str(content),
                 "--out", str(out), "--figure", str(tmp_path / "sheet.png")]) == 0
    assert len(list(out.glob("*.png"))) == 6
    assert (tmp_path / "sheet.png").stat().st_size > 0


def test_render_bad_checkpoint(tmp_path, capsys):
    bogus = tmp_path / "x.ckpt"
    bogus.write_bytes(b"nope")
    src = tmp_path / "x.png"
    save_image(np.zeros((16, 16, 3), np.float32), src)
    assert main(["render", "--checkpoint", str(bogus), "--in", str(src),
                 "--out", str(tmp_path / "o.png")]) == 1


def test_eval_prints_deterministic_score(toy, tmp_path, capsys):
    root, style, content, _ = toy
    args = ["eval", "--set-a", str(content), "--set-b", str(style), "--patch", "16",
            "--w", "20", "--z", "20", "--seed", "1"]
    assert main(args + ["--csv", str(tmp_path / "m.csv"), "--figure", str(tmp_path / "h.png")]) == 0
    first = capsys.readouterr().out.splitlines()
    assert first[0].startswith("S=") and len(first[0].split("=")[1].split(".")[1]) == 4
    assert first[1].startswith("pairs=6 ")
    assert main(args) == 0
    assert capsys.readouterr().out.splitlines()[0] == first[0]
    with open(tmp_path / "m.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["image_a", "image_b", "patch_b", "row", "col", "min_distance"]
    assert len(rows) == 1 + 6 * 20
    assert (tmp_path / "m.config.json").exists() and (tmp_path / "h.png").exists()


def test_eval_self_is_zero(toy, capsys):
    _, style, _, _ = toy
    assert main(["eval", "--set-a", str(style), "--set-b", str(style), "--patch", "16",
                 "--w", "30", "--z", "30"]) == 0
    assert capsys.readouterr().out.strip() == "S=0.0000"


def test_eval_too_small(toy, capsys):
    _, style, _, _ = toy
    assert main(["eval", "--set-a", str(style), "--set-b", str(style), "--patch", "128"]) == 1


def test_permute_writes_mosaics(toy, tmp_path, capsys):
    _, style, _, _ = toy
    out = tmp_path / "perm"
    assert main(["permute", "--style", str(style), "--n", "9", "--t", "4", "--k", "3",
                 "--seed", "7", "--out", str(out), "--figure"]) == 0
    mosaics = sorted(out.glob("mosaic_*.png"))
    assert len(mosaics) == 3
    assert load_image(mosaics[0]).shape == (36, 36, 3)
    with open(out / "sources.csv") as f:
        assert sum(1 for _ in f) == 1 + 3 * 16
    assert (out / "mosaics.png").exists()
    again = tmp_path / "perm2"
    main(["permute", "--style", str(style), "--n", "9", "--t", "4", "--k", "3", "--seed", "7",
          "--out", str(again)])
    for a, b in zip(mosaics, sorted(again.glob("mosaic_*.png"))):
        assert a.read_bytes() == b.read_bytes()


def test_permute_patch_too_big(toy, tmp_path):
    _, style, _, _ = toy
    assert main(["permute", "--style", str(style), "--n", "65", "--out", str(tmp_path / "p")]) == 1

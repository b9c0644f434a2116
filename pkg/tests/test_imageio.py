import numpy as np
import pytest
from PIL import Image

from patchperm.imageio import (ImageFormatError, center_crop_multiple, check_image,
                               index_dataset, load_image, save_image, to_tensor, from_tensor)


def _png(path, array, mode=None):
    Image.fromarray(array, mode=mode).save(path)
    return path


def test_load_black_white(tmp_path):
    black = load_image(_png(tmp_path / "b.png", np.zeros((4, 4, 3), np.uint8)))
    white = load_image(_png(tmp_path / "w.png", np.full((4, 4, 3), 255, np.uint8)))
    assert black.shape == (4, 4, 3) and np.all(black == 0)
    assert np.all(white == 1)


def test_load_gray_replicated(tmp_path):
    img = load_image(_png(tmp_path / "g.png", np.full((3, 5), 128, np.uint8), mode="L"))
    assert img.shape == (3, 5, 3)
    np.testing.assert_allclose(img, 128 / 255, rtol=0, atol=1e-7)


def test_load_jpeg(tmp_path):
    Image.fromarray(np.full((8, 8, 3), 200, np.uint8)).save(tmp_path / "a.jpg", quality=95)
    img = load_image(tmp_path / "a.jpg")
    assert img.shape == (8, 8, 3)
    check_image(img)


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "missing.png")
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"definitely not an image")
    with pytest.raises(ImageFormatError):
        load_image(bad)


@pytest.mark.parametrize("value", [0.0, 1.0])
def test_save_constant_roundtrip(tmp_path, value):
    buf = np.full((5, 6, 3), value, np.float32)
    save_image(buf, tmp_path / "c.png")
    assert np.array_equal(load_image(tmp_path / "c.png"), buf)


def test_save_random_within_quantization(tmp_path):
    buf = np.random.default_rng(0).random((17, 13, 3)).astype(np.float32)
    save_image(buf, tmp_path / "r.png")
    back = load_image(tmp_path / "r.png")
    oracle = np.round(buf * 255) / 255
    np.testing.assert_allclose(back, oracle, atol=1e-6)
    assert np.abs(back - buf).max() <= 1 / 255


def test_save_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        save_image(np.zeros((2, 2, 3), np.float32), tmp_path / "nope" / "x.png")
    with pytest.raises(ValueError):
        save_image(np.full((2, 2, 3), 2.0, np.float32), tmp_path / "x.png")


def test_index_dataset_sorted_and_filtered(tmp_path):
    for name in ("b.png", "a.png", "a.txt", "c.JPG"):
        (tmp_path / name).write_bytes(b"")
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "d.jpeg").write_bytes(b"")
    idx = index_dataset(tmp_path)
    assert [p.relative_to(tmp_path).as_posix() for p in idx.entries] == [
        "a.png", "b.png", "c.JPG", "sub/d.jpeg"]
    assert idx.count == 4
    only_png = index_dataset(tmp_path, extensions=(".png",))
    assert [p.name for p in only_png.entries] == ["a.png", "b.png"]


def test_index_empty(tmp_path):
    assert index_dataset(tmp_path).count == 0


def test_center_crop_multiple():
    img = np.zeros((75, 80, 3), np.float32)
    img[1:73, 4:76] = 1
    out = center_crop_multiple(img, 9)
    assert out.shape == (72, 72, 3)
    assert np.all(out == 1)


def test_tensor_roundtrip():
    img = np.random.default_rng(1).random((6, 4, 3)).astype(np.float32)
    t = to_tensor(img, signed=True)
    assert t.shape == (1, 3, 6, 4) and t.min() >= -1
    np.testing.assert_allclose(from_tensor(t, signed=True), img, atol=1e-6)

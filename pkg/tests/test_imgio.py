import numpy as np
import pytest
from PIL import Image

from autostyle.errors import CorruptImage, ImageNotFound, ImageWriteError, InvalidFormat, UnsupportedFormat
from autostyle.imgio import RgbImage, decode_image, encode_image, list_images, quantize


class TestRgbImage:
    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            RgbImage(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            RgbImage(np.zeros((0, 4, 3)))

    def test_rejects_non_finite(self):
        px = np.zeros((2, 2, 3))
        px[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            RgbImage(px)

    def test_pixels_read_only(self):
        img = RgbImage(np.zeros((2, 3, 3)))
        assert (img.height, img.width) == (2, 3)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 1.0


class TestQuantize:
    def test_round_half_up(self):
        # 0.4999 * 255 = 127.47 and 0.5001 * 255 = 127.53
        assert quantize(np.array([0.4999, 0.5001])).tolist() == [127, 128]
        assert quantize(np.array([0.5 / 255, 1.5 / 255])).tolist() == [1, 2]

    def test_clamps(self):
        assert quantize(np.array([-0.2, 1.7])).tolist() == [0, 255]


class TestDecode:
    def test_red_pixel(self, tmp_path):
        path = tmp_path / "red.png"
        Image.fromarray(np.array([[[255, 0, 0]]], dtype=np.uint8)).save(path)
        img = decode_image(path)
        assert img.pixels.shape == (1, 1, 3)
        assert img.pixels[0, 0].tolist() == [1.0, 0.0, 0.0]

    def test_gray_jpeg(self, tmp_path):
        path = tmp_path / "gray.jpg"
        Image.fromarray(np.full((2, 2, 3), 128, dtype=np.uint8)).save(path, quality=95)
        img = decode_image(path)
        np.testing.assert_allclose(img.pixels, 128 / 255, atol=2 / 255)

    def test_text_file(self, tmp_path):
        path = tmp_path / "notes.png"
        path.write_text("not an image")
        with pytest.raises(CorruptImage):
            decode_image(path)

    def test_other_format(self, tmp_path):
        path = tmp_path / "img.bmp"
        Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(path)
        with pytest.raises(UnsupportedFormat):
            decode_image(path)

    def test_missing(self, tmp_path):
        with pytest.raises(ImageNotFound):
            decode_image(tmp_path / "nope.png")
        assert issubclass(ImageNotFound, FileNotFoundError)

    def test_alpha_over_white(self, tmp_path):
        path = tmp_path / "rgba.png"
        rgba = np.array([[[0, 0, 0, 0], [0, 0, 0, 255]]], dtype=np.uint8)
        Image.fromarray(rgba).save(path)
        img = decode_image(path)
        assert img.pixels[0, 0].tolist() == [1.0, 1.0, 1.0]
        assert img.pixels[0, 1].tolist() == [0.0, 0.0, 0.0]

    def test_grayscale_png(self, tmp_path):
        path = tmp_path / "l.png"
        Image.fromarray(np.array([[0, 51]], dtype=np.uint8)).save(path)
        img = decode_image(path)
        np.testing.assert_array_equal(img.pixels[0, 1], [0.2, 0.2, 0.2])


class TestEncode:
    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        q = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
        encode_image(RgbImage.from_uint8(q), tmp_path / "x.png")
        assert np.array_equal(decode_image(tmp_path / "x.png").to_uint8(), q)

    def test_jpeg_written(self, tmp_path):
        img = RgbImage(np.full((8, 8, 3), 0.5))
        encode_image(img, tmp_path / "x.jpg", format="jpeg")
        np.testing.assert_allclose(decode_image(tmp_path / "x.jpg").pixels, 0.5, atol=2 / 255)

    def test_invalid_format(self, tmp_path):
        with pytest.raises(InvalidFormat):
            encode_image(RgbImage(np.zeros((1, 1, 3))), tmp_path / "x.gif", format="gif")

    def test_parent_is_a_file(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(ImageWriteError):
            encode_image(RgbImage(np.zeros((1, 1, 3))), blocker / "x.png")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ImageWriteError):
            encode_image(RgbImage(np.zeros((1, 1, 3))), tmp_path / "no" / "such" / "x.png")


def test_list_images_sorted_recursive(tmp_path):
    (tmp_path / "b").mkdir()
    for name in ("b/z.png", "a.JPG", "c.jpeg", "skip.txt"):
        (tmp_path / name).write_bytes(b"")
    found = [p.relative_to(tmp_path).as_posix() for p in list_images(tmp_path)]
    assert found == ["a.JPG", "b/z.png", "c.jpeg"]

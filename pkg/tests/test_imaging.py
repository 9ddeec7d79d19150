import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imbalance_cnn import imaging
from imbalance_cnn.errors import FormatError, InvalidArgument, InvalidState
from imbalance_cnn.imaging import GrayImage


@pytest.mark.parametrize("size,width", [
    (0, 32), (5_000, 32), (10 * 1024 - 1, 32), (10 * 1024, 64), (150_000, 384),
    (199 * 1024, 384), (200 * 1024, 512), (999 * 1024, 768), (1000 * 1024, 1024), (10**8, 1024),
])
def test_width_for_size(size, width):
    assert imaging.width_for_size(size) == width


@given(st.integers(0, 5 * 1024 * 1024), st.integers(0, 5 * 1024 * 1024))
def test_width_monotone(a, b):
    lo, hi = sorted((a, b))
    assert imaging.width_for_size(lo) <= imaging.width_for_size(hi)


def test_width_table_file(tmp_path):
    p = tmp_path / "table.txt"
    p.write_text("# kb width\n1 16\n* 48\n")
    table = imaging.load_width_table(p)
    assert imaging.width_for_size(1023, table) == 16
    assert imaging.width_for_size(1024, table) == 48


def test_binary_to_image_examples():
    img = imaging.binary_to_image(bytes(range(8)), 4)
    assert img.pixels.shape == (2, 4)
    np.testing.assert_array_equal(img.pixels.ravel(), np.arange(8))
    img = imaging.binary_to_image(b"\x01\x02\x03\x04\x05", 4)
    assert img.pixels.shape == (2, 4)
    np.testing.assert_array_equal(img.pixels.ravel(), [1, 2, 3, 4, 5, 0, 0, 0])
    img = imaging.binary_to_image(bytes(5000))
    assert (img.height, img.width) == (157, 32)


def test_binary_to_image_errors():
    with pytest.raises(InvalidArgument):
        imaging.binary_to_image(b"")
    with pytest.raises(InvalidArgument):
        imaging.binary_to_image(b"abc", 0)


@settings(max_examples=100, deadline=None)
@given(st.binary(min_size=1, max_size=40_000))
def test_lossless_prefix(data):
    img = imaging.binary_to_image(data)
    flat = img.pixels.ravel()
    assert flat[:len(data)].tobytes() == data
    assert not flat[len(data):].any()
    assert img.width * img.height - len(data) < img.width


def test_resize_identity_and_constant():
    px = np.random.default_rng(0).integers(0, 256, size=(5, 7)).astype(np.uint8)
    np.testing.assert_array_equal(imaging.resize(GrayImage(px), 5, 7).pixels, px)
    const = GrayImage(np.full((3, 9), 77, dtype=np.uint8))
    for shape in [(1, 1), (8, 2), (31, 64)]:
        np.testing.assert_allclose(imaging.resize(const, *shape).pixels, 77.0)


def test_resize_bilinear_ramp():
    img = GrayImage(np.array([[0, 255], [0, 255]], dtype=np.uint8))
    out = imaging.resize(img, 2, 4).pixels
    # corner-aligned sample positions 0, 1/3, 2/3, 1 between the two columns
    np.testing.assert_allclose(out, [[0, 85, 170, 255]] * 2, atol=1e-12)


def test_resize_matches_pointwise_formula():
    rng = np.random.default_rng(1)
    src = rng.random((4, 6)) * 255
    out = imaging.resize(src, 7, 3).pixels
    for r in range(7):
        for c in range(3):
            y, x = r * 3 / 6, c * 5 / 2
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, 3), min(x0 + 1, 5)
            fy, fx = y - y0, x - x0
            want = ((1 - fy) * ((1 - fx) * src[y0, x0] + fx * src[y0, x1])
                    + fy * ((1 - fx) * src[y1, x0] + fx * src[y1, x1]))
            assert out[r, c] == pytest.approx(want, rel=1e-12)


def test_pgm_header_size(tmp_path):
    p = tmp_path / "one.pgm"
    n = imaging.write_pgm(GrayImage(np.zeros((1, 1), dtype=np.uint8)), p)
    data = p.read_bytes()
    # 11 header bytes + 1 payload byte
    assert n == len(data) == 12
    assert data == b"P5\n1 1\n255\n\x00"


def test_pgm_roundtrip_many(tmp_path):
    rng = np.random.default_rng(2)
    p = tmp_path / "img.pgm"
    for _ in range(1000):
        h, w = rng.integers(1, 40, size=2)
        img = GrayImage(rng.integers(0, 256, size=(h, w), dtype=np.uint8))
        imaging.write_pgm(img, p)
        assert imaging.read_pgm(p) == img


def test_pgm_reads_comments():
    img = imaging.decode_pgm(b"P5\n# made by hand\n2 1\n# max\n255\n\x07\x08")
    np.testing.assert_array_equal(img.pixels, [[7, 8]])


@pytest.mark.parametrize("data,offset", [
    (b"P6\n1 1\n255\n\x00", 0),
    (b"P5\n1 1\n255\n", 11),
    (b"P5\n2 2\n255\n\x00\x01", 13),
    (b"P5\nx 1\n255\n\x00", 3),
    (b"P5\n1 1\n999\n\x00", None),
])
def test_pgm_malformed(data, offset):
    with pytest.raises(FormatError) as exc:
        imaging.decode_pgm(data)
    if offset is not None:
        assert exc.value.offset == offset
    assert "offset" in str(exc.value)


def test_pgm_rejects_out_of_range_pixels(tmp_path):
    with pytest.raises(InvalidArgument):
        imaging.write_pgm(GrayImage(np.array([[256.0]])), tmp_path / "x.pgm")
    with pytest.raises(InvalidArgument):
        imaging.write_pgm(GrayImage(np.array([[1.5]])), tmp_path / "x.pgm")


def test_mean_image_examples():
    one = np.random.default_rng(3).random((1, 4, 4))
    m = imaging.compute_mean_image(one)
    np.testing.assert_array_equal(imaging.subtract_mean(one[0], m), 0.0)
    pair = np.stack([np.zeros((3, 3)), np.full((3, 3), 255.0)])
    np.testing.assert_array_equal(imaging.compute_mean_image(pair).mean, 127.5)


def test_mean_subtraction_centres_training_split():
    imgs = np.random.default_rng(4).integers(0, 256, size=(30, 8, 8)).astype(float)
    train = np.arange(0, 30, 2)
    m = imaging.compute_mean_image(imgs, train)
    centred = np.stack([imaging.subtract_mean(imgs[i], m) for i in train])
    assert np.abs(centred.sum(axis=0)).max() < 1e-9
    assert m.count == 15
    assert m.fingerprint == imaging.split_fingerprint(train[::-1])
    assert m.fingerprint != imaging.split_fingerprint(np.arange(1, 30, 2))


def test_mean_of_empty_set():
    with pytest.raises(InvalidState):
        imaging.compute_mean_image(np.zeros((3, 2, 2)), [])


def test_convert_tree_and_manifest(tmp_path):
    src = tmp_path / "bins"
    (src / "sub").mkdir(parents=True)
    (src / "a.exe").write_bytes(bytes(range(100)))
    (src / "sub" / "b.bin").write_bytes(b"\xff" * 20_000)
    rows, failures = imaging.convert_tree(src, tmp_path / "out")
    assert not failures and len(rows) == 2
    byname = {r["source_path"].split("/")[-1]: r for r in rows}
    assert byname["b.bin"]["width"] == 64 and byname["b.bin"]["height"] == 313
    img = imaging.read_pgm(byname["a.exe"]["output_path"])
    assert img.pixels.ravel()[:100].tobytes() == bytes(range(100))
    imaging.write_manifest(rows, tmp_path / "m.csv")
    header = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert header == "source_path,bytes,width,height,output_path"

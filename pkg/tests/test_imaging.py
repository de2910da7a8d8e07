import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platebench.imaging import (
    CommandTemplate,
    ConverterConfigError,
    ConverterError,
    Image,
    ImageError,
    TrailingDataError,
    TruncatedDataError,
    UnreadableFileError,
    UnsupportedFormatError,
    UnsupportedMaxvalError,
    decode_netpbm,
    encode_netpbm,
    ingest_convert,
    load_image,
    save_image,
)

PY = sys.executable


def test_p5_two_pixels(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 1\n255\n" + bytes([0, 255]))
    img = load_image(p)
    assert (img.width, img.height, img.channels, img.samples) == (2, 1, 1, bytes([0, 255]))


def test_p6_single_pixel(tmp_path):
    p = tmp_path / "a.ppm"
    p.write_bytes(b"P6\n1 1\n255\n" + bytes([10, 20, 30]))
    img = load_image(p)
    assert (img.width, img.height, img.channels, img.samples) == (1, 1, 3, bytes([10, 20, 30]))


def test_truncated_payload():
    with pytest.raises(TruncatedDataError):
        decode_netpbm(b"P6\n2 2\n255\n" + bytes(9))


def test_trailing_payload():
    with pytest.raises(TrailingDataError):
        decode_netpbm(b"P5\n2 2\n255\n" + bytes(5))


def test_header_comments_skipped():
    img = decode_netpbm(b"P5 # gray\n# size next\n3 1\n# depth\n255\n" + bytes([1, 2, 3]))
    assert img.samples == bytes([1, 2, 3])


def test_whitespace_byte_in_payload_is_data():
    # The first raster byte is 0x0a (newline) and must not be eaten by the header.
    img = decode_netpbm(b"P5\n1 1\n255\n\n")
    assert img.samples == b"\n"


@pytest.mark.parametrize(
    "data, exc",
    [
        (b"P3\n1 1\n255\n1 2 3", UnsupportedFormatError),
        (b"BM....", UnsupportedFormatError),
        (b"P5\n1 1\n65535\n\x00\x00", UnsupportedMaxvalError),
        (b"P5\n1 1\n15\n\x00", UnsupportedMaxvalError),
        (b"P5\nx 1\n255\n\x00", UnsupportedFormatError),
        (b"P5\n1", UnsupportedFormatError),
    ],
)
def test_distinct_decode_errors(data, exc):
    with pytest.raises(exc):
        decode_netpbm(data)


def test_unreadable_file(tmp_path):
    with pytest.raises(UnreadableFileError):
        load_image(tmp_path / "missing.ppm")


def test_encode_magic():
    assert encode_netpbm(Image(1, 1, 3, bytes(3))).startswith(b"P6\n")
    assert encode_netpbm(Image(1, 1, 1, bytes(1))).startswith(b"P5\n")


def test_image_validation():
    with pytest.raises(ImageError):
        Image(0, 1, 1, b"")
    with pytest.raises(ImageError):
        Image(1, 1, 2, bytes(2))
    with pytest.raises(ImageError):
        Image(2, 2, 1, bytes(3))


def test_array_roundtrip():
    arr = np.arange(24, dtype=np.uint8).reshape(2, 4, 3)
    img = Image.from_array(arr)
    assert (img.width, img.height, img.channels) == (4, 2, 3)
    assert np.array_equal(img.to_array(), arr)
    assert not img.to_array().flags.writeable


images = st.builds(
    lambda w, h, c, data: Image(w, h, c, data.draw(st.binary(min_size=w * h * c, max_size=w * h * c))),
    st.integers(1, 12),
    st.integers(1, 12),
    st.sampled_from([1, 3]),
    st.data(),
)


@settings(max_examples=150, deadline=None)
@given(images)
def test_codec_roundtrip(img):
    assert decode_netpbm(encode_netpbm(img)) == img


@settings(max_examples=100, deadline=None)
@given(images, st.integers(-20, 20).filter(lambda d: d != 0))
def test_rejects_any_length_mismatch(img, delta):
    data = encode_netpbm(img)
    if delta < 0:
        data = data[: len(data) - min(-delta, len(img.samples))]
    else:
        data = data + bytes(delta)
    with pytest.raises((TruncatedDataError, TrailingDataError)):
        decode_netpbm(data)


def test_save_load_file(tmp_path):
    img = Image(3, 2, 3, bytes(range(18)))
    save_image(img, tmp_path / "x.ppm")
    assert load_image(tmp_path / "x.ppm") == img


# -------------------------------------------------------------- converter


def test_identity_converter(tmp_path):
    img = Image(3, 2, 3, bytes(range(18)))
    src = tmp_path / "in.ppm"
    save_image(img, src)
    copy = f'{PY} -c "import shutil,sys; shutil.copy(sys.argv[1], sys.argv[2])" {{in}} {{out}}'
    assert ingest_convert(src, copy) == load_image(src)


def test_converter_nonzero_exit(tmp_path):
    src = tmp_path / "in.ppm"
    save_image(Image(1, 1, 1, b"\x00"), src)
    with pytest.raises(ConverterError) as info:
        ingest_convert(src, f'{PY} -c "import sys; sys.exit(1)" {{in}} {{out}}')
    assert info.value.returncode == 1


def test_converter_output_not_ppm(tmp_path):
    src = tmp_path / "in.png"
    src.write_bytes(b"\x89PNG")
    write_junk = f'{PY} -c "import sys; open(sys.argv[2], \'wb\').write(b\'junk\')" {{in}} {{out}}'
    with pytest.raises(ConverterError, match="not a valid"):
        ingest_convert(src, write_junk)


@pytest.mark.parametrize("template", ["convert {in} out.ppm", "convert in.png {out}", "", "'unbalanced"])
def test_template_config_errors(template):
    with pytest.raises(ConverterConfigError):
        CommandTemplate.parse(template)


def test_template_single_pass_substitution():
    t = CommandTemplate.parse("conv {in} -o {out}")
    assert t.render("/a/{out}.png", "/b/x.ppm") == ["conv", "/a/{out}.png", "-o", "/b/x.ppm"]

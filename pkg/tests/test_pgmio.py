"""PGM reader/writer tests."""

import numpy as np
import pytest

from thermolatent import PgmFormatError
from thermolatent.pgmio import quantize_unit, read_pgm, write_pgm


def test_roundtrip_8bit(tmp_path):
    img = np.array([[0, 100], [200, 255]], dtype=np.uint8)
    path = tmp_path / "a.pgm"
    write_pgm(path, img)
    back = read_pgm(path)
    assert np.array_equal(back, img)


def test_roundtrip_16bit(tmp_path):
    img = np.array([[0, 1000], [40000, 65535]], dtype=np.uint16)
    path = tmp_path / "b.pgm"
    write_pgm(path, img, maxval=65535)
    back = read_pgm(path)
    assert np.array_equal(back, img)
    # 16-bit samples are two bytes, most significant first
    raw = path.read_bytes()
    payload = raw.split(b"65535\n", 1)[1]
    assert payload[:2] == bytes([0, 0]) and payload[2:4] == bytes([0x03, 0xE8])


def test_bool_mask_written_as_255(tmp_path):
    bits = np.array([[True, False]])
    path = tmp_path / "m.pgm"
    write_pgm(path, bits)
    back = read_pgm(path)
    assert back.tolist() == [[255, 0]]


def test_read_ascii_p2(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_text("P2\n# a comment\n3 2\n15\n0 1 2\n3 4 15\n")
    img = read_pgm(path)
    assert img.tolist() == [[0, 1, 2], [3, 4, 15]]


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P6\n1 1\n255\n\x00")
    with pytest.raises(PgmFormatError):
        read_pgm(path)


def test_read_rejects_truncated(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\x00\x01")
    with pytest.raises(PgmFormatError):
        read_pgm(path)


def test_read_rejects_sample_over_maxval(tmp_path):
    path = tmp_path / "over.pgm"
    path.write_text("P2\n2 1\n10\n5 11\n")
    with pytest.raises(PgmFormatError):
        read_pgm(path)


def test_write_rejects_out_of_range(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.array([[300]]), maxval=255)
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.array([1, 2, 3]))


def test_quantize_unit():
    img = np.array([[0.0, 0.5, 1.0], [-0.2, 1.3, 0.25]])
    q = quantize_unit(img)
    assert q.dtype == np.uint16
    assert q.tolist() == [[0, 32768, 65535], [0, 65535, 16384]]

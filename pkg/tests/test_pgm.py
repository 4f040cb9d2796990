import numpy as np
import pytest

from egohand.errors import ValidationError
from egohand.pgm import read_pgm16, write_pgm16


def test_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 65536, size=(24, 32)).astype(float)
    path = tmp_path / "img.pgm"
    write_pgm16(path, img)
    back = read_pgm16(path)
    assert back.shape == (24, 32)
    assert np.array_equal(back, img)


def test_header_and_byte_order(tmp_path):
    img = np.zeros((2, 3))
    img[0, 0] = 0x0102  # 258 mm: bytes must come out big-endian
    path = tmp_path / "img.pgm"
    write_pgm16(path, img)
    data = path.read_bytes()
    assert data.startswith(b"P5\n3 2\n65535\n")
    samples = data[len(b"P5\n3 2\n65535\n"):]
    assert samples[0:2] == b"\x01\x02"
    assert len(samples) == 12


def test_rounding_and_clipping(tmp_path):
    img = np.array([[449.6, 0.4], [1e9, 0.0]])
    path = tmp_path / "img.pgm"
    write_pgm16(path, img)
    back = read_pgm16(path)
    assert back[0, 0] == 450.0
    assert back[0, 1] == 0.0
    assert back[1, 0] == 65535.0
    assert back[1, 1] == 0.0


def test_header_comments_ok(tmp_path):
    path = tmp_path / "img.pgm"
    body = np.arange(6, dtype=">u2").tobytes()
    path.write_bytes(b"P5\n# a comment\n3 2\n# more\n65535\n" + body)
    img = read_pgm16(path)
    assert img.shape == (2, 3)
    assert img[0, 2] == 2.0


def test_rejects_bad_inputs(tmp_path):
    path = tmp_path / "img.pgm"
    path.write_bytes(b"P6\n1 1\n255\n\x00")
    with pytest.raises(ValidationError):
        read_pgm16(path)
    path.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
    with pytest.raises(ValidationError):
        read_pgm16(path)  # 8-bit maxval unsupported
    path.write_bytes(b"P5\n2 2\n65535\n" + bytes(3))
    with pytest.raises(ValidationError):
        read_pgm16(path)  # truncated samples
    with pytest.raises(ValidationError):
        write_pgm16(path, np.array([[-1.0]]))
    with pytest.raises(ValidationError):
        write_pgm16(path, np.array([[np.nan]]))

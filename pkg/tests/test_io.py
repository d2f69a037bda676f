import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pixelmix.bank import (
    HEADER,
    decode_bank,
    encode_bank,
    file_size,
    load_model_bank,
    record_bytes,
    save_model_bank,
)
from pixelmix.em import MixtureBank
from pixelmix.errors import DataError, UsageError
from pixelmix.mixture import MixtureModel
from pixelmix.netpbm import (
    decode_frame,
    decode_mask,
    encode_frame,
    encode_mask,
    read_frame,
    read_mask,
    write_frame,
    write_mask,
)

shapes = st.tuples(st.integers(1, 9), st.integers(1, 9), st.sampled_from([1, 3]))
byte_frames = shapes.flatmap(lambda s: arrays(np.uint8, s))
label_masks = st.tuples(st.integers(1, 9), st.integers(1, 9)).flatmap(
    lambda s: arrays(np.uint8, s, elements=st.integers(0, 2)))


# -- frames -------------------------------------------------------------------

def test_minimal_p5():
    f = decode_frame(b"P5\n1 1\n255\n\x00")
    assert f.shape == (1, 1, 1) and f.item() == 0.0


def test_p6_fixture():
    raw = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30])
    f = decode_frame(b"P6 2 2 255\n" + raw)
    np.testing.assert_array_equal(f, [[[255, 0, 0], [0, 255, 0]], [[0, 0, 255], [10, 20, 30]]])


def test_header_comments_are_skipped():
    f = decode_frame(b"P5\n# made by hand\n2 # width\n1\n255\n\x07\x09")
    np.testing.assert_array_equal(f[..., 0], [[7, 9]])


@given(frame=byte_frames)
def test_frame_round_trip(frame, tmp_path_factory):
    path = tmp_path_factory.mktemp("f") / "x.pnm"
    write_frame(frame, path)
    np.testing.assert_array_equal(read_frame(path), frame)


def test_encode_rounds_and_clips():
    data = encode_frame(np.array([[-3.0, 1.6, 300.0]]))
    assert data.endswith(bytes([0, 2, 255]))


@pytest.mark.parametrize("data, offset, needle", [
    (b"P3\n1 1\n255\n0", 0, "magic"),
    (b"P5\n1 1\n65535\n\x00\x00", 7, "maxval"),
    (b"P5\n2 2\n255\n\x00\x00", 13, "truncated"),
    (b"P5\nx 1\n255\n\x00", 3, "width"),
    (b"P5\n1 1\n255", 10, "whitespace"),
    (b"P5\n1", 4, "end of header"),
])
def test_parse_errors_report_offset(data, offset, needle):
    with pytest.raises(DataError) as info:
        decode_frame(data)
    assert info.value.offset == offset
    assert needle in str(info.value)


def test_parse_error_names_the_file(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(DataError) as info:
        read_frame(bad)
    assert info.value.path == bad
    assert "bad.pgm" in str(info.value)


# -- masks --------------------------------------------------------------------

def test_all_road_mask_is_zero():
    assert encode_mask(np.zeros((2, 3), np.uint8)).endswith(bytes(6))


def test_mixed_mask_codes():
    data = encode_mask(np.array([[0, 1], [2, 0]]))
    assert data == b"P5\n2 2\n255\n" + bytes([0, 128, 255, 0])


@given(mask=label_masks)
def test_mask_round_trip(mask, tmp_path_factory):
    path = tmp_path_factory.mktemp("m") / "m.pgm"
    write_mask(mask, path)
    np.testing.assert_array_equal(read_mask(path), mask)


def test_mask_rejects_foreign_code():
    data = b"P5\n2 1\n255\n" + bytes([0, 7])
    with pytest.raises(DataError) as info:
        decode_mask(data)
    assert info.value.offset == len(data) - 1
    with pytest.raises(UsageError):
        encode_mask(np.array([[3]]))


# -- model bank ---------------------------------------------------------------

def random_bank(rng, width, height, d):
    prior = MixtureModel.isotropic((0.2, 0.7, 0.1), (60, 120, 150), (400, 400, 3000), d)
    bank = MixtureBank.from_prior(prior, width, height, 10.0)
    for field in ("weights", "means", "covs", "counts", "sums", "outer"):
        a = getattr(bank, field)
        a[...] = rng.normal(size=a.shape) * 10 ** rng.uniform(-300, 300, size=a.shape)
    bank.t = int(rng.integers(0, 2 ** 40))
    return bank


def assert_banks_identical(a, b):
    assert (a.width, a.height, a.d, a.t) == (b.width, b.height, b.d, b.t)
    for field in ("weights", "means", "covs", "counts", "sums", "outer"):
        x, y = getattr(a, field), getattr(b, field)
        assert x.shape == y.shape
        assert x.tobytes() == y.tobytes()


def test_record_sizes():
    assert HEADER.size == 28
    # 3 slots x (w, mu, sigma, N, M, Z) = 3 x 6 doubles for d=1
    assert record_bytes(1) == 144
    assert record_bytes(3) == 8 * 3 * (1 + 3 + 9 + 1 + 3 + 9)
    assert file_size(2, 2, 1) == 28 + 4 * 144


@pytest.mark.parametrize("d", [1, 3])
def test_2x2_fixture_length(d):
    bank = random_bank(np.random.default_rng(0), 2, 2, d)
    assert len(encode_bank(bank)) == 28 + 2 * 2 * record_bytes(d)


@given(seed=st.integers(0, 2 ** 32 - 1), w=st.integers(1, 5), h=st.integers(1, 5), d=st.sampled_from([1, 3]))
def test_bank_round_trip_bit_exact(seed, w, h, d):
    bank = random_bank(np.random.default_rng(seed), w, h, d)
    assert_banks_identical(decode_bank(encode_bank(bank)), bank)


def test_bank_file_round_trip(tmp_path):
    bank = random_bank(np.random.default_rng(1), 3, 2, 3)
    save_model_bank(bank, tmp_path / "b.pxmb")
    assert_banks_identical(load_model_bank(tmp_path / "b.pxmb", expect_d=3), bank)


def test_bank_load_errors(tmp_path):
    data = encode_bank(random_bank(np.random.default_rng(2), 2, 2, 1))
    with pytest.raises(DataError, match="d=1"):
        decode_bank(data, expect_d=3)
    with pytest.raises(DataError, match="magic"):
        decode_bank(b"XXXX" + data[4:])
    with pytest.raises(DataError, match="version"):
        decode_bank(data[:4] + struct.pack("<I", 9) + data[8:])
    with pytest.raises(DataError, match="expected"):
        decode_bank(data[:-1])
    with pytest.raises(DataError, match="header"):
        decode_bank(data[:10])
    with pytest.raises(UsageError):
        load_model_bank(tmp_path / "missing.pxmb")

"""Value codec tests against IEEE 754 / two's-complement oracles."""

import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from modbuskit import codec
from modbuskit.codec import (
    BIT,
    FLOAT32,
    FLOAT64,
    INT16,
    INT32,
    INT64,
    NUMERIC_TYPES,
    UINT16,
    UINT32,
    UINT64,
    ByteOrder,
    decode_value,
    encode_value,
    parse_byte_order,
    parse_data_type,
    string,
    swap_words,
)
from modbuskit.errors import CodecError

ORDERS = list(ByteOrder)


# --- fixed decode examples -----------------------------------------------------


@pytest.mark.parametrize(
    "registers,dtype,order,expected",
    [
        ([0x0000, 0x0000], FLOAT32, ByteOrder.BIG, 0.0),
        ([0x3F80, 0x0000], FLOAT32, ByteOrder.BIG, 1.0),  # 0x3F800000
        ([0xFFFF], INT16, ByteOrder.BIG, -1),
        ([0x0001, 0x0000], UINT32, ByteOrder.BIG, 65536),
        ([0x0000, 0x803F], FLOAT32, ByteOrder.LITTLE, 1.0),  # full byte reversal
    ],
)
def test_fixed_decode_examples(registers, dtype, order, expected):
    assert decode_value(registers, dtype, order) == expected


def test_fixed_encode_examples():
    assert encode_value(1.0, FLOAT32, ByteOrder.BIG) == [0x3F80, 0x0000]
    for order in ORDERS:
        assert encode_value(0, UINT16, order) == [0x0000]


def test_32bit_layouts_cover_all_four_orders():
    # canonical bytes of 1.0f are 3F 80 00 00
    assert encode_value(1.0, FLOAT32, ByteOrder.BIG) == [0x3F80, 0x0000]
    assert encode_value(1.0, FLOAT32, ByteOrder.LITTLE) == [0x0000, 0x803F]
    assert encode_value(1.0, FLOAT32, ByteOrder.BIG_WORD_SWAP) == [0x0000, 0x3F80]
    assert encode_value(1.0, FLOAT32, ByteOrder.LITTLE_WORD_SWAP) == [0x803F, 0x0000]


# --- range / tag errors ----------------------------------------------------------


@pytest.mark.parametrize(
    "value,dtype",
    [
        (70000, UINT16),
        (-1, UINT16),
        (40000, INT16),
        (2**32, UINT32),
        (2**63, INT64),
        ("text", UINT16),
        (1.5, UINT32),
        (True, UINT16),
        (1e39, FLOAT32),  # overflows single precision to inf
        (123, string(2)),
        ("\x00abc", string(2)),
        ("é", string(1)),
        ("toolong", string(2)),  # 7 chars > 4
    ],
)
def test_encode_rejects_bad_values(value, dtype):
    with pytest.raises(CodecError):
        encode_value(value, dtype, ByteOrder.BIG)


def test_bit_type_has_no_register_encoding():
    with pytest.raises(CodecError):
        encode_value(True, BIT, ByteOrder.BIG)
    with pytest.raises(CodecError):
        decode_value([], BIT, ByteOrder.BIG)


def test_decode_length_mismatch():
    with pytest.raises(CodecError):
        decode_value([0x0000], FLOAT32, ByteOrder.BIG)


# --- strings ---------------------------------------------------------------------


def test_string_padding_and_strip():
    words = encode_value("ab", string(2), ByteOrder.BIG)
    assert words == [0x6162, 0x0000]  # 'a'=0x61 high byte first, NUL padded
    assert decode_value(words, string(2), ByteOrder.BIG) == "ab"


def test_string_occupies_exactly_n_registers():
    for n in (1, 3, 8):
        assert len(encode_value("", string(n), ByteOrder.BIG)) == n


def test_decode_non_ascii_registers_as_string():
    with pytest.raises(CodecError):
        decode_value([0xFF41], string(1), ByteOrder.BIG)


# --- invariants --------------------------------------------------------------------


def _float_key(value):
    return struct.pack(">d", value)  # distinguishes -0.0 from 0.0, exact bits


def _value_strategy(dtype):
    if dtype is FLOAT32:
        return st.floats(allow_nan=False, width=32)
    if dtype is FLOAT64:
        return st.floats(allow_nan=False, width=64)
    if dtype.is_string:
        return st.text(
            alphabet=st.characters(min_codepoint=1, max_codepoint=127),
            max_size=2 * dtype.registers,
        )
    lo, hi = {
        UINT16: (0, 0xFFFF),
        INT16: (-0x8000, 0x7FFF),
        UINT32: (0, 0xFFFFFFFF),
        INT32: (-0x80000000, 0x7FFFFFFF),
        UINT64: (0, 2**64 - 1),
        INT64: (-(2**63), 2**63 - 1),
    }[dtype]
    return st.integers(lo, hi)


_ROUND_TRIP_TYPES = list(NUMERIC_TYPES) + [string(1), string(4)]


@given(data=st.data(), order=st.sampled_from(ORDERS), dtype=st.sampled_from(_ROUND_TRIP_TYPES))
def test_round_trip_identity(data, order, dtype):
    value = data.draw(_value_strategy(dtype))
    words = encode_value(value, dtype, order)
    assert len(words) == dtype.registers
    decoded = decode_value(words, dtype, order)
    if isinstance(value, float):
        assert _float_key(decoded) == _float_key(value)
    else:
        assert decoded == value


@given(data=st.data(), dtype=st.sampled_from([UINT16, INT16, string(1)]))
def test_single_register_types_order_independent(data, dtype):
    value = data.draw(_value_strategy(dtype))
    encodings = {tuple(encode_value(value, dtype, order)) for order in ORDERS}
    assert len(encodings) == 1


@given(st.lists(st.integers(0, 0xFFFF), min_size=1, max_size=8))
def test_swap_words_is_an_involution(registers):
    assert swap_words(swap_words(registers)) == registers


# --- parsing / presets ----------------------------------------------------------------


def test_device_order_presets():
    assert parse_byte_order("sentron") is ByteOrder.BIG
    assert parse_byte_order("eem") is ByteOrder.LITTLE
    assert parse_byte_order("BIG-SWAP") is ByteOrder.BIG_WORD_SWAP


def test_parse_data_type():
    assert parse_data_type("float32") is FLOAT32
    assert parse_data_type("string[8]").registers == 8
    with pytest.raises(CodecError):
        parse_data_type("complex128")
    with pytest.raises(CodecError):
        parse_byte_order("middle")


def test_register_count_contract():
    assert codec.register_count(BIT) == 0
    assert codec.register_count(UINT16) == 1
    assert codec.register_count(UINT32) == 2
    assert codec.register_count(UINT64) == 4
    assert codec.register_count(string(5)) == 5

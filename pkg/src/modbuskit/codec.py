"""Typed application values <-> 16-bit register lists under byte/word order.

Byte order is where Modbus vendors diverge. Four layouts are supported for
multi-register values; for single-register values all four are equivalent
(a lone 16-bit word always means its natural value):

* ``big``          A B C D   most significant byte first
* ``little``       D C B A   full byte reversal of the big-endian layout
* ``big-swap``     C D A B   big-endian bytes, 16-bit word order reversed
* ``little-swap``  B A D C   little-endian bytes, word order reversed

Device aliases: ``sentron`` -> big, ``eem`` -> little. Whether an "eem"-style
small-endian device swaps bytes, words, or both is not publicly specified;
the full-reversal reading used here is an assumption (see README).

Float round trips are bit-exact except for NaN: converting a payload-carrying
NaN through a Python float may normalise the payload, so NaN is excluded from
the round-trip guarantee.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

from .errors import CodecError

Value = Union[bool, int, float, str]


class ByteOrder(Enum):
    BIG = "big"
    LITTLE = "little"
    BIG_WORD_SWAP = "big-swap"
    LITTLE_WORD_SWAP = "little-swap"


_ORDER_ALIASES = {
    "big": ByteOrder.BIG,
    "be": ByteOrder.BIG,
    "little": ByteOrder.LITTLE,
    "le": ByteOrder.LITTLE,
    "big-swap": ByteOrder.BIG_WORD_SWAP,
    "big_swap": ByteOrder.BIG_WORD_SWAP,
    "little-swap": ByteOrder.LITTLE_WORD_SWAP,
    "little_swap": ByteOrder.LITTLE_WORD_SWAP,
    # device presets from measured meters
    "sentron": ByteOrder.BIG,
    "eem": ByteOrder.LITTLE,
}


def parse_byte_order(text: str) -> ByteOrder:
    try:
        return _ORDER_ALIASES[text.strip().lower()]
    except (KeyError, AttributeError):
        raise CodecError(
            f"unknown byte order {text!r} (expected one of: "
            f"{', '.join(sorted(_ORDER_ALIASES))})"
        ) from None


@dataclass(frozen=True)
class DataType:
    """A decodable field type and the number of registers it occupies."""

    name: str
    registers: int

    @property
    def is_bit(self) -> bool:
        return self.name == "bit"

    @property
    def is_string(self) -> bool:
        return self.name.startswith("string[")

    def __str__(self) -> str:
        return self.name


BIT = DataType("bit", 0)
UINT16 = DataType("uint16", 1)
INT16 = DataType("int16", 1)
UINT32 = DataType("uint32", 2)
INT32 = DataType("int32", 2)
UINT64 = DataType("uint64", 4)
INT64 = DataType("int64", 4)
FLOAT32 = DataType("float32", 2)
FLOAT64 = DataType("float64", 4)

NUMERIC_TYPES = (UINT16, INT16, UINT32, INT32, UINT64, INT64, FLOAT32, FLOAT64)

_NAMED_TYPES = {t.name: t for t in (BIT,) + NUMERIC_TYPES}

# (signed, min, max) per integer type
_INT_SPECS = {
    "uint16": (False, 0, 0xFFFF),
    "int16": (True, -0x8000, 0x7FFF),
    "uint32": (False, 0, 0xFFFFFFFF),
    "int32": (True, -0x80000000, 0x7FFFFFFF),
    "uint64": (False, 0, 0xFFFFFFFFFFFFFFFF),
    "int64": (True, -0x8000000000000000, 0x7FFFFFFFFFFFFFFF),
}

_FLOAT_FORMATS = {"float32": ">f", "float64": ">d"}

_STRING_RE = re.compile(r"^string\[(\d+)\]$")


def string(register_count: int) -> DataType:
    """ASCII string type occupying exactly ``register_count`` registers."""
    if not isinstance(register_count, int) or register_count < 1:
        raise ValueError(f"string register count must be >= 1, got {register_count!r}")
    return DataType(f"string[{register_count}]", register_count)


def parse_data_type(text: str) -> DataType:
    name = text.strip().lower()
    if name in _NAMED_TYPES:
        return _NAMED_TYPES[name]
    m = _STRING_RE.match(name)
    if m:
        count = int(m.group(1))
        if count < 1:
            raise CodecError(f"string register count must be >= 1: {text!r}")
        return string(count)
    raise CodecError(
        f"unknown data type {text!r} (expected one of: "
        f"{', '.join(sorted(_NAMED_TYPES))}, string[N])"
    )


def register_count(dtype: DataType) -> int:
    return dtype.registers


def swap_words(registers: Sequence[int]) -> list[int]:
    """Reverse 16-bit word order; applying it twice restores the input."""
    return list(reversed(registers))


def _bytes_to_words(data: bytes, order: ByteOrder) -> list[int]:
    """Lay out canonical big-endian bytes as wire registers per ``order``."""
    if len(data) > 2 and order in (ByteOrder.LITTLE, ByteOrder.LITTLE_WORD_SWAP):
        data = data[::-1]
    words = [data[i] << 8 | data[i + 1] for i in range(0, len(data), 2)]
    if len(words) > 1 and order in (ByteOrder.BIG_WORD_SWAP, ByteOrder.LITTLE_WORD_SWAP):
        words.reverse()
    return words


def _words_to_bytes(registers: Sequence[int], order: ByteOrder) -> bytes:
    """Inverse of :func:`_bytes_to_words`: wire registers -> canonical bytes."""
    words = list(registers)
    for w in words:
        if not isinstance(w, int) or isinstance(w, bool) or not 0 <= w <= 0xFFFF:
            raise CodecError(f"register out of range (valid 0..65535): {w!r}")
    if len(words) > 1 and order in (ByteOrder.BIG_WORD_SWAP, ByteOrder.LITTLE_WORD_SWAP):
        words.reverse()
    data = b"".join(struct.pack(">H", w) for w in words)
    if len(data) > 2 and order in (ByteOrder.LITTLE, ByteOrder.LITTLE_WORD_SWAP):
        data = data[::-1]
    return data


def _canonical_bytes(value: Value, dtype: DataType) -> bytes:
    """Encode a value into its canonical big-endian byte layout."""
    if dtype.name in _INT_SPECS:
        signed, lo, hi = _INT_SPECS[dtype.name]
        if isinstance(value, bool) or not isinstance(value, int):
            raise CodecError(f"{dtype} expects an integer, got {value!r}")
        if not lo <= value <= hi:
            raise CodecError(f"{value} out of range for {dtype} ({lo}..{hi})")
        return value.to_bytes(2 * dtype.registers, "big", signed=signed)
    if dtype.name in _FLOAT_FORMATS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise CodecError(f"{dtype} expects a number, got {value!r}")
        value = float(value)
        try:
            data = struct.pack(_FLOAT_FORMATS[dtype.name], value)
        except OverflowError:
            raise CodecError(f"{value} overflows {dtype}") from None
        if math.isfinite(value) and not math.isfinite(
            struct.unpack(_FLOAT_FORMATS[dtype.name], data)[0]
        ):
            raise CodecError(f"{value} overflows {dtype}")
        return data
    if dtype.is_string:
        if not isinstance(value, str):
            raise CodecError(f"{dtype} expects text, got {value!r}")
        if not value.isascii():
            raise CodecError(f"{dtype} accepts ASCII text only: {value!r}")
        if "\x00" in value:
            raise CodecError(f"{dtype} does not accept NUL characters: {value!r}")
        capacity = 2 * dtype.registers
        if len(value) > capacity:
            raise CodecError(
                f"text of {len(value)} chars does not fit {dtype} ({capacity} chars)"
            )
        return value.encode("ascii").ljust(capacity, b"\x00")
    raise CodecError(f"{dtype} has no register encoding")


def _decode_bytes(data: bytes, dtype: DataType) -> Value:
    if dtype.name in _INT_SPECS:
        signed = _INT_SPECS[dtype.name][0]
        return int.from_bytes(data, "big", signed=signed)
    if dtype.name in _FLOAT_FORMATS:
        return struct.unpack(_FLOAT_FORMATS[dtype.name], data)[0]
    if dtype.is_string:
        try:
            return data.rstrip(b"\x00").decode("ascii")
        except UnicodeDecodeError:
            raise CodecError(f"registers do not hold ASCII text: {data.hex(' ')}") from None
    raise CodecError(f"{dtype} has no register encoding")


def encode_value(value: Value, dtype: DataType, order: ByteOrder) -> list[int]:
    """Encode ``value`` into the wire register list for ``dtype``/``order``."""
    if dtype.is_bit:
        raise CodecError("bit values live in bit spaces, not registers")
    return _bytes_to_words(_canonical_bytes(value, dtype), order)


def decode_value(registers: Sequence[int], dtype: DataType, order: ByteOrder) -> Value:
    """Decode wire registers into a typed value; exact inverse of encode."""
    if dtype.is_bit:
        raise CodecError("bit values live in bit spaces, not registers")
    if len(registers) != dtype.registers:
        raise CodecError(
            f"{dtype} needs exactly {dtype.registers} registers, got {len(registers)}"
        )
    return _decode_bytes(_words_to_bytes(registers, order), dtype)

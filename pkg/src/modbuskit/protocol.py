"""Bit-exact Modbus/TCP framing: MBAP header plus request/response PDUs.

Everything here is a pure function over byte strings. Decoding is total:
any input either yields a value or raises :class:`~modbuskit.errors.FrameError`
with a machine-checkable ``reason``; nothing else escapes.

Supported function codes: 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x0F, 0x10.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Sequence, Union

from .errors import FrameError

MBAP_SIZE = 7
MAX_PDU_SIZE = 253  # function code + up to 252 payload bytes

READ_COILS = 0x01
READ_DISCRETE_INPUTS = 0x02
READ_HOLDING_REGISTERS = 0x03
READ_INPUT_REGISTERS = 0x04
WRITE_SINGLE_COIL = 0x05
WRITE_SINGLE_REGISTER = 0x06
WRITE_MULTIPLE_COILS = 0x0F
WRITE_MULTIPLE_REGISTERS = 0x10

SUPPORTED_FUNCTIONS = frozenset(
    (
        READ_COILS,
        READ_DISCRETE_INPUTS,
        READ_HOLDING_REGISTERS,
        READ_INPUT_REGISTERS,
        WRITE_SINGLE_COIL,
        WRITE_SINGLE_REGISTER,
        WRITE_MULTIPLE_COILS,
        WRITE_MULTIPLE_REGISTERS,
    )
)

# standard Modbus per-request limits
MAX_READ_BITS = 2000
MAX_READ_REGISTERS = 125
MAX_WRITE_BITS = 1968
MAX_WRITE_REGISTERS = 123

ADDRESS_SPACE = 0x10000

EXC_ILLEGAL_FUNCTION = 0x01
EXC_ILLEGAL_DATA_ADDRESS = 0x02
EXC_ILLEGAL_DATA_VALUE = 0x03

_COIL_ON = 0xFF00
_COIL_OFF = 0x0000


class RegisterSpace(Enum):
    """The four addressable Modbus data spaces."""

    COILS = "coils"
    DISCRETE_INPUTS = "discrete_inputs"
    INPUT_REGISTERS = "input_registers"
    HOLDING_REGISTERS = "holding_registers"

    @property
    def is_bits(self) -> bool:
        return self in (RegisterSpace.COILS, RegisterSpace.DISCRETE_INPUTS)

    @property
    def writable(self) -> bool:
        return self in (RegisterSpace.COILS, RegisterSpace.HOLDING_REGISTERS)

    @property
    def read_function(self) -> int:
        return _READ_FUNCTION[self]

    @property
    def max_read_count(self) -> int:
        return MAX_READ_BITS if self.is_bits else MAX_READ_REGISTERS


_READ_FUNCTION = {
    RegisterSpace.COILS: READ_COILS,
    RegisterSpace.DISCRETE_INPUTS: READ_DISCRETE_INPUTS,
    RegisterSpace.INPUT_REGISTERS: READ_INPUT_REGISTERS,
    RegisterSpace.HOLDING_REGISTERS: READ_HOLDING_REGISTERS,
}


def _check_u8(value: int, what: str) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 0xFF:
        raise FrameError(f"{what} out of range (valid 0..255): {value!r}", reason="value")


def _check_u16(value: int, what: str, reason: str = "value") -> None:
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 0xFFFF:
        raise FrameError(f"{what} out of range (valid 0..65535): {value!r}", reason=reason)


def _check_range(address: int, quantity: int, max_count: int) -> None:
    _check_u16(address, "address", reason="bounds")
    if not isinstance(quantity, int) or isinstance(quantity, bool) or not 1 <= quantity <= max_count:
        raise FrameError(
            f"quantity out of range (valid 1..{max_count}): {quantity!r}", reason="count"
        )
    if address + quantity > ADDRESS_SPACE:
        raise FrameError(
            f"address {address} + quantity {quantity} exceeds address space 65536",
            reason="bounds",
        )


def pack_bits(bits: Sequence[bool]) -> bytes:
    """Pack booleans into bytes, LSB first within each byte."""
    out = bytearray((len(bits) + 7) // 8)
    for i, bit in enumerate(bits):
        if bit:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def unpack_bits(data: bytes, count: int) -> tuple[bool, ...]:
    """Unpack ``count`` booleans from bytes, LSB first within each byte."""
    return tuple(bool(data[i // 8] >> (i % 8) & 1) for i in range(count))


@dataclass(frozen=True)
class MbapHeader:
    """7-byte Modbus/TCP prefix (transaction, protocol, length, unit)."""

    transaction_id: int
    protocol_id: int
    length: int
    unit_id: int

    def __post_init__(self):
        _check_u16(self.transaction_id, "transaction id")
        if self.protocol_id != 0:
            raise FrameError(
                f"protocol id must be 0, got {self.protocol_id}", reason="protocol-id"
            )
        _check_u16(self.length, "length")
        _check_u8(self.unit_id, "unit id")


# --- request PDUs -----------------------------------------------------------


@dataclass(frozen=True)
class ReadCoils:
    address: int
    quantity: int
    FUNCTION: ClassVar[int] = READ_COILS

    def __post_init__(self):
        _check_range(self.address, self.quantity, MAX_READ_BITS)


@dataclass(frozen=True)
class ReadDiscreteInputs:
    address: int
    quantity: int
    FUNCTION: ClassVar[int] = READ_DISCRETE_INPUTS

    def __post_init__(self):
        _check_range(self.address, self.quantity, MAX_READ_BITS)


@dataclass(frozen=True)
class ReadHoldingRegisters:
    address: int
    quantity: int
    FUNCTION: ClassVar[int] = READ_HOLDING_REGISTERS

    def __post_init__(self):
        _check_range(self.address, self.quantity, MAX_READ_REGISTERS)


@dataclass(frozen=True)
class ReadInputRegisters:
    address: int
    quantity: int
    FUNCTION: ClassVar[int] = READ_INPUT_REGISTERS

    def __post_init__(self):
        _check_range(self.address, self.quantity, MAX_READ_REGISTERS)


@dataclass(frozen=True)
class WriteSingleCoil:
    address: int
    value: bool
    FUNCTION: ClassVar[int] = WRITE_SINGLE_COIL

    def __post_init__(self):
        _check_u16(self.address, "address", reason="bounds")
        object.__setattr__(self, "value", bool(self.value))


@dataclass(frozen=True)
class WriteSingleRegister:
    address: int
    value: int
    FUNCTION: ClassVar[int] = WRITE_SINGLE_REGISTER

    def __post_init__(self):
        _check_u16(self.address, "address", reason="bounds")
        _check_u16(self.value, "register value")


@dataclass(frozen=True)
class WriteMultipleCoils:
    address: int
    bits: tuple[bool, ...]
    FUNCTION: ClassVar[int] = WRITE_MULTIPLE_COILS

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))
        _check_range(self.address, len(self.bits), MAX_WRITE_BITS)


@dataclass(frozen=True)
class WriteMultipleRegisters:
    address: int
    values: tuple[int, ...]
    FUNCTION: ClassVar[int] = WRITE_MULTIPLE_REGISTERS

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        _check_range(self.address, len(self.values), MAX_WRITE_REGISTERS)
        for v in self.values:
            _check_u16(v, "register value")


RequestPdu = Union[
    ReadCoils,
    ReadDiscreteInputs,
    ReadHoldingRegisters,
    ReadInputRegisters,
    WriteSingleCoil,
    WriteSingleRegister,
    WriteMultipleCoils,
    WriteMultipleRegisters,
]

_READ_REQUEST = {
    READ_COILS: ReadCoils,
    READ_DISCRETE_INPUTS: ReadDiscreteInputs,
    READ_HOLDING_REGISTERS: ReadHoldingRegisters,
    READ_INPUT_REGISTERS: ReadInputRegisters,
}


# --- response PDUs ----------------------------------------------------------


@dataclass(frozen=True)
class ReadBitsResponse:
    """Bits read from a coil/discrete-input space.

    The wire carries whole bytes only, so ``bits`` is normalised to a multiple
    of 8 (padded with False) at construction; decode(encode(x)) is then exact.
    """

    function: int
    bits: tuple[bool, ...]

    def __post_init__(self):
        if self.function not in (READ_COILS, READ_DISCRETE_INPUTS):
            raise FrameError(
                f"not a bit-read function: 0x{self.function:02X}", reason="function"
            )
        bits = tuple(bool(b) for b in self.bits)
        if not 1 <= len(bits) <= MAX_READ_BITS:
            raise FrameError(
                f"bit count out of range (valid 1..{MAX_READ_BITS}): {len(bits)}",
                reason="count",
            )
        pad = -len(bits) % 8
        object.__setattr__(self, "bits", bits + (False,) * pad)


@dataclass(frozen=True)
class ReadRegistersResponse:
    function: int
    registers: tuple[int, ...]

    def __post_init__(self):
        if self.function not in (READ_HOLDING_REGISTERS, READ_INPUT_REGISTERS):
            raise FrameError(
                f"not a register-read function: 0x{self.function:02X}", reason="function"
            )
        object.__setattr__(self, "registers", tuple(self.registers))
        if not 1 <= len(self.registers) <= MAX_READ_REGISTERS:
            raise FrameError(
                f"register count out of range (valid 1..{MAX_READ_REGISTERS}): "
                f"{len(self.registers)}",
                reason="count",
            )
        for v in self.registers:
            _check_u16(v, "register value")


@dataclass(frozen=True)
class WriteSingleCoilResponse:
    address: int
    value: bool

    def __post_init__(self):
        _check_u16(self.address, "address", reason="bounds")
        object.__setattr__(self, "value", bool(self.value))


@dataclass(frozen=True)
class WriteSingleRegisterResponse:
    address: int
    value: int

    def __post_init__(self):
        _check_u16(self.address, "address", reason="bounds")
        _check_u16(self.value, "register value")


@dataclass(frozen=True)
class WriteMultipleCoilsResponse:
    address: int
    quantity: int

    def __post_init__(self):
        _check_range(self.address, self.quantity, MAX_WRITE_BITS)


@dataclass(frozen=True)
class WriteMultipleRegistersResponse:
    address: int
    quantity: int

    def __post_init__(self):
        _check_range(self.address, self.quantity, MAX_WRITE_REGISTERS)


@dataclass(frozen=True)
class ExceptionPdu:
    """Error reply: request function code with bit 0x80 set, plus a code."""

    function: int
    code: int

    def __post_init__(self):
        if not isinstance(self.function, int) or not 0 <= self.function <= 0x7F:
            raise FrameError(
                f"exception base function out of range: {self.function!r}",
                reason="function",
            )
        if not isinstance(self.code, int) or not 1 <= self.code <= 0xFF:
            raise FrameError(
                f"exception code out of range (valid 1..255): {self.code!r}",
                reason="value",
            )


ResponsePdu = Union[
    ReadBitsResponse,
    ReadRegistersResponse,
    WriteSingleCoilResponse,
    WriteSingleRegisterResponse,
    WriteMultipleCoilsResponse,
    WriteMultipleRegistersResponse,
    ExceptionPdu,
]


# --- PDU encoding -----------------------------------------------------------


def encode_request_pdu(request: RequestPdu) -> bytes:
    if isinstance(
        request, (ReadCoils, ReadDiscreteInputs, ReadHoldingRegisters, ReadInputRegisters)
    ):
        return struct.pack(">BHH", request.FUNCTION, request.address, request.quantity)
    if isinstance(request, WriteSingleCoil):
        raw = _COIL_ON if request.value else _COIL_OFF
        return struct.pack(">BHH", WRITE_SINGLE_COIL, request.address, raw)
    if isinstance(request, WriteSingleRegister):
        return struct.pack(">BHH", WRITE_SINGLE_REGISTER, request.address, request.value)
    if isinstance(request, WriteMultipleCoils):
        payload = pack_bits(request.bits)
        head = struct.pack(
            ">BHHB", WRITE_MULTIPLE_COILS, request.address, len(request.bits), len(payload)
        )
        return head + payload
    if isinstance(request, WriteMultipleRegisters):
        payload = struct.pack(f">{len(request.values)}H", *request.values)
        head = struct.pack(
            ">BHHB",
            WRITE_MULTIPLE_REGISTERS,
            request.address,
            len(request.values),
            len(payload),
        )
        return head + payload
    raise TypeError(f"not a request PDU: {request!r}")


def encode_response_pdu(response: ResponsePdu) -> bytes:
    if isinstance(response, ReadBitsResponse):
        payload = pack_bits(response.bits)
        return struct.pack(">BB", response.function, len(payload)) + payload
    if isinstance(response, ReadRegistersResponse):
        payload = struct.pack(f">{len(response.registers)}H", *response.registers)
        return struct.pack(">BB", response.function, len(payload)) + payload
    if isinstance(response, WriteSingleCoilResponse):
        raw = _COIL_ON if response.value else _COIL_OFF
        return struct.pack(">BHH", WRITE_SINGLE_COIL, response.address, raw)
    if isinstance(response, WriteSingleRegisterResponse):
        return struct.pack(">BHH", WRITE_SINGLE_REGISTER, response.address, response.value)
    if isinstance(response, WriteMultipleCoilsResponse):
        return struct.pack(">BHH", WRITE_MULTIPLE_COILS, response.address, response.quantity)
    if isinstance(response, WriteMultipleRegistersResponse):
        return struct.pack(
            ">BHH", WRITE_MULTIPLE_REGISTERS, response.address, response.quantity
        )
    if isinstance(response, ExceptionPdu):
        return struct.pack(">BB", response.function | 0x80, response.code)
    raise TypeError(f"not a response PDU: {response!r}")


# --- PDU decoding -----------------------------------------------------------


def _need(pdu: bytes, size: int) -> None:
    if len(pdu) != size:
        raise FrameError(
            f"PDU size {len(pdu)} does not match layout size {size} "
            f"for function 0x{pdu[0]:02X}",
            reason="length-mismatch",
        )


def decode_request_pdu(pdu: bytes) -> RequestPdu:
    if not pdu:
        raise FrameError("empty PDU", reason="short-frame")
    function = pdu[0]
    if function in _READ_REQUEST:
        _need(pdu, 5)
        address, quantity = struct.unpack(">HH", pdu[1:5])
        return _READ_REQUEST[function](address, quantity)
    if function == WRITE_SINGLE_COIL:
        _need(pdu, 5)
        address, raw = struct.unpack(">HH", pdu[1:5])
        if raw not in (_COIL_ON, _COIL_OFF):
            raise FrameError(f"coil value must be 0xFF00 or 0x0000, got 0x{raw:04X}",
                             reason="value")
        return WriteSingleCoil(address, raw == _COIL_ON)
    if function == WRITE_SINGLE_REGISTER:
        _need(pdu, 5)
        address, value = struct.unpack(">HH", pdu[1:5])
        return WriteSingleRegister(address, value)
    if function == WRITE_MULTIPLE_COILS:
        if len(pdu) < 6:
            raise FrameError("write-multiple-coils PDU too short", reason="short-frame")
        address, quantity, byte_count = struct.unpack(">HHB", pdu[1:6])
        if byte_count != (quantity + 7) // 8:
            raise FrameError(
                f"byte count {byte_count} does not match quantity {quantity}",
                reason="count",
            )
        _need(pdu, 6 + byte_count)
        bits = unpack_bits(pdu[6:], quantity)
        return WriteMultipleCoils(address, bits)
    if function == WRITE_MULTIPLE_REGISTERS:
        if len(pdu) < 6:
            raise FrameError("write-multiple-registers PDU too short", reason="short-frame")
        address, quantity, byte_count = struct.unpack(">HHB", pdu[1:6])
        if byte_count != 2 * quantity:
            raise FrameError(
                f"byte count {byte_count} does not match quantity {quantity}",
                reason="count",
            )
        _need(pdu, 6 + byte_count)
        values = struct.unpack(f">{quantity}H", pdu[6:]) if quantity else ()
        return WriteMultipleRegisters(address, values)
    raise FrameError(f"unknown function code 0x{function:02X}", reason="function")


def decode_response_pdu(pdu: bytes) -> ResponsePdu:
    if not pdu:
        raise FrameError("empty PDU", reason="short-frame")
    function = pdu[0]
    if function & 0x80:
        _need(pdu, 2)
        return ExceptionPdu(function & 0x7F, pdu[1])
    if function in (READ_COILS, READ_DISCRETE_INPUTS):
        if len(pdu) < 2:
            raise FrameError("bit-read response too short", reason="short-frame")
        byte_count = pdu[1]
        if byte_count == 0:
            raise FrameError("bit-read response with zero byte count", reason="count")
        _need(pdu, 2 + byte_count)
        return ReadBitsResponse(function, unpack_bits(pdu[2:], byte_count * 8))
    if function in (READ_HOLDING_REGISTERS, READ_INPUT_REGISTERS):
        if len(pdu) < 2:
            raise FrameError("register-read response too short", reason="short-frame")
        byte_count = pdu[1]
        if byte_count == 0 or byte_count % 2:
            raise FrameError(
                f"register-read byte count must be even and nonzero: {byte_count}",
                reason="count",
            )
        _need(pdu, 2 + byte_count)
        registers = struct.unpack(f">{byte_count // 2}H", pdu[2:])
        return ReadRegistersResponse(function, registers)
    if function == WRITE_SINGLE_COIL:
        _need(pdu, 5)
        address, raw = struct.unpack(">HH", pdu[1:5])
        if raw not in (_COIL_ON, _COIL_OFF):
            raise FrameError(f"coil value must be 0xFF00 or 0x0000, got 0x{raw:04X}",
                             reason="value")
        return WriteSingleCoilResponse(address, raw == _COIL_ON)
    if function == WRITE_SINGLE_REGISTER:
        _need(pdu, 5)
        address, value = struct.unpack(">HH", pdu[1:5])
        return WriteSingleRegisterResponse(address, value)
    if function == WRITE_MULTIPLE_COILS:
        _need(pdu, 5)
        address, quantity = struct.unpack(">HH", pdu[1:5])
        return WriteMultipleCoilsResponse(address, quantity)
    if function == WRITE_MULTIPLE_REGISTERS:
        _need(pdu, 5)
        address, quantity = struct.unpack(">HH", pdu[1:5])
        return WriteMultipleRegistersResponse(address, quantity)
    raise FrameError(f"unknown function code 0x{function:02X}", reason="function")


# --- ADU framing ------------------------------------------------------------


def encode_adu(transaction_id: int, unit_id: int, pdu: bytes) -> bytes:
    if not 1 <= len(pdu) <= MAX_PDU_SIZE:
        raise FrameError(
            f"PDU size out of range (valid 1..{MAX_PDU_SIZE}): {len(pdu)}",
            reason="length-mismatch",
        )
    header = MbapHeader(transaction_id, 0, len(pdu) + 1, unit_id)
    return struct.pack(">HHHB", header.transaction_id, 0, header.length, header.unit_id) + pdu


def split_adu(frame: bytes) -> tuple[MbapHeader, bytes]:
    """Split a full ADU into its validated MBAP header and raw PDU bytes."""
    if len(frame) < MBAP_SIZE + 1:
        raise FrameError(
            f"short frame: {len(frame)} bytes, need at least {MBAP_SIZE + 1}",
            reason="short-frame",
        )
    transaction_id, protocol_id, length, unit_id = struct.unpack(">HHHB", frame[:MBAP_SIZE])
    if protocol_id != 0:
        raise FrameError(f"protocol id must be 0, got {protocol_id}", reason="protocol-id")
    if length != len(frame) - 6:
        raise FrameError(
            f"length mismatch: header declares {length} bytes after the length field, "
            f"frame carries {len(frame) - 6}",
            reason="length-mismatch",
        )
    header = MbapHeader(transaction_id, 0, length, unit_id)
    return header, frame[MBAP_SIZE:]


def encode_request(transaction_id: int, unit_id: int, request: RequestPdu) -> bytes:
    """Encode a complete request ADU (MBAP header + PDU)."""
    return encode_adu(transaction_id, unit_id, encode_request_pdu(request))


def decode_request(frame: bytes) -> tuple[MbapHeader, RequestPdu]:
    header, pdu = split_adu(frame)
    return header, decode_request_pdu(pdu)


def encode_response(transaction_id: int, unit_id: int, response: ResponsePdu) -> bytes:
    """Encode a complete response ADU (MBAP header + PDU)."""
    return encode_adu(transaction_id, unit_id, encode_response_pdu(response))


def decode_response(frame: bytes) -> tuple[MbapHeader, ResponsePdu]:
    header, pdu = split_adu(frame)
    return header, decode_response_pdu(pdu)

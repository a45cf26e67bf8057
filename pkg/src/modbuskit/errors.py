"""Exception hierarchy shared by all modbuskit modules."""

from __future__ import annotations


class ModbusKitError(Exception):
    """Base class for every error raised by this package."""


class FrameError(ModbusKitError):
    """Malformed or out-of-spec wire frame.

    ``reason`` is a short machine-checkable code used e.g. by the emulator to
    pick the matching Modbus exception code:

    * ``"short-frame"``     -- fewer bytes than the layout requires
    * ``"length-mismatch"`` -- declared and actual sizes disagree
    * ``"protocol-id"``     -- MBAP protocol identifier is not zero
    * ``"function"``        -- unknown/unsupported function code
    * ``"bounds"``          -- address or address+quantity outside 0..65536
    * ``"count"``           -- quantity/byte-count outside its legal range
    * ``"value"``           -- a field value outside its legal range
    * ``"transaction"``     -- response transaction id does not match request
    """

    def __init__(self, message: str, reason: str = "frame"):
        super().__init__(message)
        self.reason = reason


class CodecError(ModbusKitError):
    """Value cannot be converted to/from registers (range, tag, length)."""


class ModelError(ModbusKitError):
    """Connector model or descriptor document is invalid."""

    def __init__(self, message: str, *, field: str | None = None, line: int | None = None):
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field '{field}'")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.field = field
        self.line = line


class ProfileError(ModbusKitError):
    """Device profile document is invalid."""


class ConnectError(ModbusKitError):
    """TCP session could not be established."""


class TransportError(ModbusKitError):
    """Established session failed (connection loss, send/recv error)."""


class ResponseTimeout(TransportError):
    """No response arrived within the configured response timeout."""


class ExceptionResponse(ModbusKitError):
    """The server answered with a Modbus exception PDU."""

    def __init__(self, function: int, code: int, span=None):
        self.function = function
        self.code = code
        self.span = span
        where = f" while reading {span}" if span is not None else ""
        super().__init__(
            f"modbus exception: function 0x{function:02X}, code 0x{code:02X}{where}"
        )


class BenchmarkAborted(ModbusKitError):
    """Benchmark stopped early because too many batches failed."""

"""Polling Modbus/TCP connector: execute a batch plan, decode named fields.

One connector owns one TCP session and issues strictly sequential requests
(one outstanding request per connection, no pipelining, no automatic
retries -- a silent retry would distort measured latency distributions).
Transaction ids start at 0 and increment modulo 65536; a response whose
transaction id does not match is rejected, never misattributed.

A connector instance must stay on a single thread; run one connector per
connection if you need concurrency.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple

from . import protocol
from .codec import decode_value, encode_value
from .errors import (
    ConnectError,
    ExceptionResponse,
    FrameError,
    ModbusKitError,
    ModelError,
    ResponseTimeout,
    TransportError,
)
from .model import ConnectorModel
from .planner import BatchPlan, ReadSpan


@dataclass(frozen=True)
class ConnectorConfig:
    host: str
    port: int
    unit_id: int = 1
    response_timeout: float = 1.0  # seconds
    connect_timeout: float = 1.0
    poll_interval: float = 1.0

    def __post_init__(self):
        for attr in ("response_timeout", "connect_timeout", "poll_interval"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"{attr} must be > 0")

    @classmethod
    def for_model(cls, model: ConnectorModel, **overrides) -> "ConnectorConfig":
        settings = {"host": model.host, "port": model.port, "unit_id": model.unit_id}
        settings.update(overrides)
        return cls(**settings)


class FieldSample(NamedTuple):
    value: object
    timestamp: float


Record = dict[str, FieldSample]


@dataclass(frozen=True)
class PollItem:
    """One poll outcome: a record or an error, plus its batch duration."""

    index: int
    timestamp: float
    duration_us: int
    record: Record | None = None
    error: ModbusKitError | None = None


PollSink = Callable[[PollItem], None]


class ModbusConnector:
    """Connector instance bound to one model and one TCP endpoint."""

    def __init__(self, model: ConnectorModel, config: ConnectorConfig | None = None):
        self.model = model
        self.config = config or ConnectorConfig.for_model(model)
        self._sock: socket.socket | None = None
        self._next_tid = 0

    # -- session ---------------------------------------------------------

    @property
    def is_open(self) -> bool:
        return self._sock is not None

    def open(self) -> None:
        if self.is_open:
            self.close()
        try:
            sock = socket.create_connection(
                (self.config.host, self.config.port), timeout=self.config.connect_timeout
            )
        except OSError as exc:
            raise ConnectError(
                f"cannot connect to {self.config.host}:{self.config.port}: {exc}"
            ) from None
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(self.config.response_timeout)
        self._sock = sock
        self._next_tid = 0

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self) -> "ModbusConnector":
        if not self.is_open:
            self.open()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- request/response --------------------------------------------------

    def _recv_exact(self, count: int) -> bytes:
        assert self._sock is not None
        chunks = b""
        while len(chunks) < count:
            try:
                chunk = self._sock.recv(count - len(chunks))
            except socket.timeout:
                raise ResponseTimeout(
                    f"no response within {self.config.response_timeout} s"
                ) from None
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from None
            if not chunk:
                raise TransportError("connection closed by peer")
            chunks += chunk
        return chunks

    def _exchange(self, request: protocol.RequestPdu) -> protocol.ResponsePdu:
        if self._sock is None:
            raise TransportError("connector is not connected")
        tid = self._next_tid
        self._next_tid = (tid + 1) % 0x10000
        frame = protocol.encode_request(tid, self.config.unit_id, request)
        try:
            try:
                self._sock.sendall(frame)
            except socket.timeout:
                raise ResponseTimeout("send timed out") from None
            except OSError as exc:
                raise TransportError(f"send failed: {exc}") from None
            raw_header = self._recv_exact(protocol.MBAP_SIZE)
            header = protocol.MbapHeader(
                int.from_bytes(raw_header[0:2], "big"),
                int.from_bytes(raw_header[2:4], "big"),
                int.from_bytes(raw_header[4:6], "big"),
                raw_header[6],
            )
            if not 2 <= header.length <= 1 + protocol.MAX_PDU_SIZE:
                raise FrameError(
                    f"implausible MBAP length {header.length}", reason="length-mismatch"
                )
            pdu = self._recv_exact(header.length - 1)
        except (TransportError, FrameError):
            # the stream can no longer be trusted; drop the session
            self.close()
            raise
        if header.transaction_id != tid:
            self.close()
            raise FrameError(
                f"transaction id mismatch: sent {tid}, got {header.transaction_id}",
                reason="transaction",
            )
        if header.unit_id != self.config.unit_id:
            self.close()
            raise FrameError(
                f"unit id mismatch: sent {self.config.unit_id}, got {header.unit_id}",
                reason="value",
            )
        response = protocol.decode_response_pdu(pdu)
        if isinstance(response, protocol.ExceptionPdu):
            raise ExceptionResponse(response.function, response.code)
        return response

    # -- operations --------------------------------------------------------

    def read_batch(self, plan: BatchPlan) -> Record:
        """Execute all plan spans sequentially and decode every covered field."""
        if plan.model.fields != self.model.fields:
            raise ModelError("plan was built from a different model than this connector's")
        record: Record = {}
        for span in plan.spans:
            try:
                response = self._exchange(_span_request(span))
            except ExceptionResponse as exc:
                exc.span = span
                raise
            stamp = time.time()
            if span.space.is_bits:
                bits = self._check_bits(response, span)
                for name, intra in span.fields:
                    record[name] = FieldSample(bits[intra], stamp)
            else:
                registers = self._check_registers(response, span)
                for name, intra in span.fields:
                    f = self.model.field(name)
                    words = registers[intra : intra + f.type.registers]
                    record[name] = FieldSample(decode_value(words, f.type, f.order), stamp)
        return record

    def _check_bits(self, response, span: ReadSpan) -> tuple[bool, ...]:
        expected = span.space.read_function
        if not isinstance(response, protocol.ReadBitsResponse) or response.function != expected:
            raise FrameError(f"unexpected response {response!r} to read span {span}")
        if len(response.bits) != ((span.count + 7) // 8) * 8:
            raise FrameError(
                f"bit count mismatch: asked {span.count}, got {len(response.bits)}",
                reason="count",
            )
        return response.bits

    def _check_registers(self, response, span: ReadSpan) -> tuple[int, ...]:
        expected = span.space.read_function
        if (
            not isinstance(response, protocol.ReadRegistersResponse)
            or response.function != expected
        ):
            raise FrameError(f"unexpected response {response!r} to read span {span}")
        if len(response.registers) != span.count:
            raise FrameError(
                f"register count mismatch: asked {span.count}, got {len(response.registers)}",
                reason="count",
            )
        return response.registers

    def write_field(self, name: str, value) -> None:
        """Write one field; raises before any traffic if the field rejects it."""
        f = self.model.field(name)
        if not f.writable or not f.space.writable:
            raise ModelError(f"field '{name}' is read-only")
        if f.space.is_bits:
            if not isinstance(value, bool):
                raise ModelError(f"field '{name}' takes a boolean, got {value!r}")
            request: protocol.RequestPdu = protocol.WriteSingleCoil(f.offset, value)
        else:
            words = encode_value(value, f.type, f.order)
            if len(words) == 1:
                request = protocol.WriteSingleRegister(f.offset, words[0])
            else:
                request = protocol.WriteMultipleRegisters(f.offset, tuple(words))
        response = self._exchange(request)
        _check_write_echo(request, response)

    def poll(
        self,
        plan: BatchPlan,
        sink: PollSink,
        interval: float | None = None,
        *,
        stop_on_error: bool = False,
        max_batches: int | None = None,
        stop: threading.Event | None = None,
    ) -> int:
        """Run read_batch at a fixed cadence, delivering each outcome to ``sink``.

        Returns the number of batches attempted. Read errors are delivered as
        error items and do not end the loop unless ``stop_on_error`` is set;
        setting ``stop`` (an Event) ends it cleanly from another thread.
        """
        if interval is None:
            interval = self.config.poll_interval
        if interval <= 0:
            raise ValueError(f"poll interval must be > 0, got {interval}")
        if stop is None:
            stop = threading.Event()
        index = 0
        next_due = time.perf_counter()
        while not stop.is_set() and (max_batches is None or index < max_batches):
            wall = time.time()
            started = time.perf_counter_ns()
            try:
                record = self.read_batch(plan)
                item = PollItem(index, wall, (time.perf_counter_ns() - started) // 1000, record)
            except ModbusKitError as exc:
                item = PollItem(
                    index, wall, (time.perf_counter_ns() - started) // 1000, None, exc
                )
            sink(item)
            index += 1
            if item.error is not None and stop_on_error:
                break
            next_due += interval
            delay = next_due - time.perf_counter()
            if delay > 0 and stop.wait(delay):
                break
            if delay <= 0:
                next_due = time.perf_counter()  # fell behind; do not burst
        return index


def _span_request(span: ReadSpan) -> protocol.RequestPdu:
    factory = {
        protocol.READ_COILS: protocol.ReadCoils,
        protocol.READ_DISCRETE_INPUTS: protocol.ReadDiscreteInputs,
        protocol.READ_HOLDING_REGISTERS: protocol.ReadHoldingRegisters,
        protocol.READ_INPUT_REGISTERS: protocol.ReadInputRegisters,
    }[span.space.read_function]
    return factory(span.start, span.count)


def _check_write_echo(request: protocol.RequestPdu, response: protocol.ResponsePdu) -> None:
    ok = False
    if isinstance(request, protocol.WriteSingleCoil):
        ok = (
            isinstance(response, protocol.WriteSingleCoilResponse)
            and response.address == request.address
            and response.value == request.value
        )
    elif isinstance(request, protocol.WriteSingleRegister):
        ok = (
            isinstance(response, protocol.WriteSingleRegisterResponse)
            and response.address == request.address
            and response.value == request.value
        )
    elif isinstance(request, protocol.WriteMultipleRegisters):
        ok = (
            isinstance(response, protocol.WriteMultipleRegistersResponse)
            and response.address == request.address
            and response.quantity == len(request.values)
        )
    elif isinstance(request, protocol.WriteMultipleCoils):
        ok = (
            isinstance(response, protocol.WriteMultipleCoilsResponse)
            and response.address == request.address
            and response.quantity == len(request.bits)
        )
    if not ok:
        raise FrameError(f"write echo mismatch: sent {request!r}, got {response!r}")


def connect(model: ConnectorModel, config: ConnectorConfig | None = None) -> ModbusConnector:
    """Open a connector for ``model``; transaction counter starts at 0."""
    connector = ModbusConnector(model, config)
    connector.open()
    return connector

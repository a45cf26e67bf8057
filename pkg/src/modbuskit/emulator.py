"""Software Modbus/TCP server with a register store and a latency model.

Serves the full 2^16 address range in all four data spaces; unconfigured
cells read as zero. A per-request latency profile (fixed delay plus optional
jitter, and optionally an inflated warm-up phase) lets the server stand in
for real devices whose request cycle costs are known, e.g. the bundled
``sentron-like`` (700 us) and ``eem-like`` (1300 us) presets.

Latency sleeps use a hybrid sleep/busy-wait so the configured delay is met
within a few microseconds; plain ``time.sleep`` overshoots by up to
milliseconds, which would swamp sub-millisecond profiles.

Profile document format (YAML):

    name: my-device
    latency:
      fixed_us: 700
      jitter: uniform(0,200)      # none | uniform(a,b) | normal(mu,sigma)
      seed: 42
      warmup_requests: 0          # first N requests get warmup_extra_us more
      warmup_extra_us: 0
    writes_enabled: true          # false answers write functions with 0x01
    illegal_address_floor: null   # requests touching >= floor answer 0x02
    registers:                    # raw encoded cells: space -> offset -> words/bits
      holding: {0: [0x3F80, 0], 9: 42}
      coils: {3: [1, 0, 1]}
    values:                       # typed convenience form, encoded at load
      - {space: holding, offset: 0, type: float32, order: big, value: 1.0}

An empty document is the default profile: zero latency, all cells zero.
"""

from __future__ import annotations

import logging
import random
import re
import socket
import socketserver
import struct
import threading
import time
from array import array
from dataclasses import dataclass
from importlib import resources

import yaml

from . import protocol
from .codec import encode_value, parse_byte_order, parse_data_type
from .errors import ConnectError, FrameError, ProfileError
from .model import _SPACE_ALIASES, space_label
from .protocol import RegisterSpace

logger = logging.getLogger("modbuskit.emulator")

STORE_SIZE = protocol.ADDRESS_SPACE

# time.sleep cannot be trusted below a few ms; busy-wait the final stretch
_SPIN_THRESHOLD_S = 0.0025


def precise_delay(seconds: float) -> None:
    if seconds <= 0:
        return
    deadline = time.perf_counter() + seconds
    while True:
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            return
        if remaining > _SPIN_THRESHOLD_S:
            time.sleep(remaining - _SPIN_THRESHOLD_S)
        else:
            while time.perf_counter() < deadline:
                pass
            return


class RegisterStore:
    """Four 65536-cell data spaces with per-request atomic access."""

    def __init__(self):
        self._lock = threading.Lock()
        self._bits = {
            RegisterSpace.COILS: bytearray(STORE_SIZE),
            RegisterSpace.DISCRETE_INPUTS: bytearray(STORE_SIZE),
        }
        self._words = {
            RegisterSpace.INPUT_REGISTERS: array("H", bytes(2 * STORE_SIZE)),
            RegisterSpace.HOLDING_REGISTERS: array("H", bytes(2 * STORE_SIZE)),
        }

    @staticmethod
    def _check(address: int, count: int) -> None:
        if address < 0 or count < 1 or address + count > STORE_SIZE:
            raise ValueError(f"store range {address}+{count} outside 0..{STORE_SIZE}")

    def read_bits(self, space: RegisterSpace, address: int, count: int) -> list[bool]:
        self._check(address, count)
        cells = self._bits[space]
        with self._lock:
            return [bool(b) for b in cells[address : address + count]]

    def read_registers(self, space: RegisterSpace, address: int, count: int) -> list[int]:
        self._check(address, count)
        cells = self._words[space]
        with self._lock:
            return list(cells[address : address + count])

    def write_bits(self, space: RegisterSpace, address: int, bits) -> None:
        self._check(address, max(len(bits), 1))
        cells = self._bits[space]
        with self._lock:
            for i, bit in enumerate(bits):
                cells[address + i] = 1 if bit else 0

    def write_registers(self, space: RegisterSpace, address: int, values) -> None:
        self._check(address, max(len(values), 1))
        cells = self._words[space]
        with self._lock:
            for i, value in enumerate(values):
                cells[address + i] = value & 0xFFFF

    def load(self, space: RegisterSpace, address: int, values) -> None:
        """Populate any space, including the read-only ones (profile init)."""
        if space.is_bits:
            self.write_bits(space, address, values)
        else:
            self.write_registers(space, address, values)


# --- latency model ------------------------------------------------------------


@dataclass(frozen=True)
class Jitter:
    kind: str = "none"  # none | uniform | normal
    params: tuple[float, ...] = ()

    def sample_us(self, rng: random.Random) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "uniform":
            a, b = self.params
            return rng.uniform(a, b)
        if self.kind == "normal":
            mu, sigma = self.params
            return rng.gauss(mu, sigma)
        raise ProfileError(f"unknown jitter kind {self.kind!r}")


NO_JITTER = Jitter()

_JITTER_RE = re.compile(
    r"^(?P<kind>uniform|normal)\(\s*(?P<a>-?\d+(\.\d+)?)\s*,\s*(?P<b>-?\d+(\.\d+)?)\s*\)$"
)


def parse_jitter(text: str) -> Jitter:
    if text is None:
        return NO_JITTER
    cleaned = str(text).strip().lower()
    if cleaned in ("", "none"):
        return NO_JITTER
    m = _JITTER_RE.match(cleaned)
    if not m:
        raise ProfileError(
            f"malformed jitter {text!r} (expected none, uniform(a,b) or normal(mu,sigma))"
        )
    return Jitter(m.group("kind"), (float(m.group("a")), float(m.group("b"))))


@dataclass(frozen=True)
class LatencyProfile:
    fixed_us: float = 0.0
    jitter: Jitter = NO_JITTER
    seed: int | None = None
    warmup_requests: int = 0
    warmup_extra_us: float = 0.0

    def __post_init__(self):
        if self.fixed_us < 0 or self.warmup_extra_us < 0 or self.warmup_requests < 0:
            raise ProfileError("latency parameters must be >= 0")


def apply_latency(profile: LatencyProfile, rng: random.Random, request_index: int = 0) -> float:
    """Delay for one request in microseconds: fixed + jitter, floored at 0."""
    delay = profile.fixed_us + profile.jitter.sample_us(rng)
    if request_index < profile.warmup_requests:
        delay += profile.warmup_extra_us
    return max(delay, 0.0)


# --- device profiles ----------------------------------------------------------


@dataclass(frozen=True)
class DeviceProfile:
    name: str = "default"
    latency: LatencyProfile = LatencyProfile()
    initial_values: tuple[tuple[RegisterSpace, int, tuple[int, ...]], ...] = ()
    writes_enabled: bool = True
    illegal_address_floor: int | None = None


_PROFILE_KEYS = {
    "name",
    "latency",
    "writes_enabled",
    "illegal_address_floor",
    "registers",
    "values",
}
_LATENCY_KEYS = {"fixed_us", "jitter", "seed", "warmup_requests", "warmup_extra_us"}


def _parse_latency(doc) -> LatencyProfile:
    if doc is None:
        return LatencyProfile()
    if not isinstance(doc, dict):
        raise ProfileError(f"'latency' must be a mapping, got {doc!r}")
    unknown = set(doc) - _LATENCY_KEYS
    if unknown:
        raise ProfileError(f"unknown latency key(s): {', '.join(sorted(map(str, unknown)))}")
    return LatencyProfile(
        fixed_us=float(doc.get("fixed_us", 0.0)),
        jitter=parse_jitter(doc.get("jitter", "none")),
        seed=doc.get("seed"),
        warmup_requests=int(doc.get("warmup_requests", 0)),
        warmup_extra_us=float(doc.get("warmup_extra_us", 0.0)),
    )


def _parse_space(token) -> RegisterSpace:
    key = str(token).strip().lower()
    if key not in _SPACE_ALIASES:
        raise ProfileError(f"unknown register space {token!r}")
    return _SPACE_ALIASES[key]


def _cell_words(raw) -> tuple[int, ...]:
    values = raw if isinstance(raw, list) else [raw]
    out = []
    for v in values:
        if not isinstance(v, int) or isinstance(v, bool):
            raise ProfileError(f"register value must be an integer, got {v!r}")
        out.append(v)
    return tuple(out)


def load_profile(text: str | None) -> DeviceProfile:
    """Parse a profile document; empty input yields the default profile."""
    doc = yaml.safe_load(text) if text else None
    if doc is None:
        return DeviceProfile()
    if not isinstance(doc, dict):
        raise ProfileError("profile document must be a mapping")
    unknown = set(doc) - _PROFILE_KEYS
    if unknown:
        raise ProfileError(f"unknown profile key(s): {', '.join(sorted(map(str, unknown)))}")

    initial: list[tuple[RegisterSpace, int, tuple[int, ...]]] = []
    registers = doc.get("registers") or {}
    if not isinstance(registers, dict):
        raise ProfileError("'registers' must map spaces to offset tables")
    for space_key, table in registers.items():
        space = _parse_space(space_key)
        if not isinstance(table, dict):
            raise ProfileError(f"registers.{space_key} must map offsets to values")
        for offset, raw in table.items():
            words = _cell_words(raw)
            initial.append((space, int(offset), words))

    values = doc.get("values") or []
    if not isinstance(values, list):
        raise ProfileError("'values' must be a list of typed value entries")
    for entry in values:
        if not isinstance(entry, dict) or not {"space", "offset", "value"} <= set(entry):
            raise ProfileError(f"malformed value entry: {entry!r}")
        space = _parse_space(entry["space"])
        offset = int(entry["offset"])
        if space.is_bits:
            initial.append((space, offset, (1 if entry["value"] else 0,)))
            continue
        try:
            dtype = parse_data_type(str(entry.get("type", "uint16")))
            order = parse_byte_order(str(entry.get("order", "big")))
            words = encode_value(entry["value"], dtype, order)
        except Exception as exc:
            raise ProfileError(f"value entry {entry!r}: {exc}") from None
        initial.append((space, offset, tuple(words)))

    for space, offset, words in initial:
        if offset < 0 or offset + len(words) > STORE_SIZE:
            raise ProfileError(
                f"initial value at {space_label(space)}@{offset} exceeds the address space"
            )

    floor = doc.get("illegal_address_floor")
    if floor is not None:
        floor = int(floor)

    return DeviceProfile(
        name=str(doc.get("name", "custom")),
        latency=_parse_latency(doc.get("latency")),
        initial_values=tuple(initial),
        writes_enabled=bool(doc.get("writes_enabled", True)),
        illegal_address_floor=floor,
    )


def load_profile_file(path) -> DeviceProfile:
    with open(path, "r", encoding="utf-8") as fh:
        return load_profile(fh.read())


def bundled_profiles() -> list[str]:
    root = resources.files("modbuskit") / "profiles"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_bundled_profile(name: str) -> DeviceProfile:
    if name == "default":
        return DeviceProfile()
    path = resources.files("modbuskit") / "profiles" / f"{name}.yaml"
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ProfileError(
            f"no bundled profile {name!r} (available: default, "
            f"{', '.join(bundled_profiles())})"
        ) from None
    return load_profile(text)


def resolve_profile(spec: str) -> DeviceProfile:
    """Interpret ``spec`` as a bundled profile name or a document path."""
    if spec == "default" or spec in bundled_profiles():
        return load_bundled_profile(spec)
    return load_profile_file(spec)


# --- server -------------------------------------------------------------------


class _Handler(socketserver.BaseRequestHandler):
    def setup(self):
        self.request.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.rfile = self.request.makefile("rb", buffering=-1)
        self.server.track_connection(self.request)

    def finish(self):
        self.server.untrack_connection(self.request)
        try:
            self.rfile.close()
        except OSError:
            pass

    def handle(self):
        try:
            while True:
                header = self.rfile.read(protocol.MBAP_SIZE)
                if len(header) < protocol.MBAP_SIZE:
                    return  # EOF or trailing garbage; drop the connection
                tid, pid, length, unit = struct.unpack(">HHHB", header)
                if pid != 0 or not 2 <= length <= 1 + protocol.MAX_PDU_SIZE:
                    return  # stream framing cannot be trusted any more
                pdu = self.rfile.read(length - 1)
                if len(pdu) < length - 1:
                    return
                reply = self.server.process_pdu(pdu)
                if reply is None:
                    return
                delay_s = self.server.next_delay_us() / 1e6
                if delay_s > 0:
                    precise_delay(delay_s)
                adu = struct.pack(">HHHB", tid, 0, len(reply) + 1, unit) + reply
                self.request.sendall(adu)
        except OSError as exc:
            logger.warning("connection error: %s", exc)
        except Exception:
            logger.exception("handler failed; closing connection")


class ModbusServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, endpoint: tuple[str, int], profile: DeviceProfile):
        try:
            super().__init__(endpoint, _Handler)
        except OSError as exc:
            raise ConnectError(f"cannot bind {endpoint[0]}:{endpoint[1]}: {exc}") from None
        self.profile = profile
        self.store = RegisterStore()
        for space, offset, words in profile.initial_values:
            self.store.load(space, offset, words)
        self._rng = random.Random(profile.latency.seed)
        self._rng_lock = threading.Lock()
        self._request_count = 0
        self._count_lock = threading.Lock()
        self._connections: set[socket.socket] = set()
        self._connections_lock = threading.Lock()

    def track_connection(self, sock: socket.socket) -> None:
        with self._connections_lock:
            self._connections.add(sock)

    def untrack_connection(self, sock: socket.socket) -> None:
        with self._connections_lock:
            self._connections.discard(sock)

    def close_connections(self) -> None:
        with self._connections_lock:
            active = list(self._connections)
        for sock in active:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sock.close()
            except OSError:
                pass

    @property
    def request_count(self) -> int:
        with self._count_lock:
            return self._request_count

    def next_delay_us(self) -> float:
        with self._count_lock:
            index = self._request_count
            self._request_count = index + 1
        with self._rng_lock:
            return apply_latency(self.profile.latency, self._rng, index)

    # -- request processing ------------------------------------------------

    def process_pdu(self, pdu: bytes) -> bytes | None:
        """Turn a request PDU into a response PDU; None closes the connection."""
        try:
            try:
                request = protocol.decode_request_pdu(pdu)
            except FrameError as exc:
                if not pdu:
                    return None
                function = pdu[0] & 0x7F
                code = {
                    "function": protocol.EXC_ILLEGAL_FUNCTION,
                    "bounds": protocol.EXC_ILLEGAL_DATA_ADDRESS,
                }.get(exc.reason, protocol.EXC_ILLEGAL_DATA_VALUE)
                return protocol.encode_response_pdu(protocol.ExceptionPdu(function, code))
            return protocol.encode_response_pdu(self._execute(request))
        except Exception:
            logger.exception("request processing failed")
            return None

    def _fault_code(self, request: protocol.RequestPdu) -> int | None:
        floor = self.profile.illegal_address_floor
        if floor is not None:
            count = getattr(request, "quantity", None)
            if count is None:
                count = (
                    len(request.values)
                    if isinstance(request, protocol.WriteMultipleRegisters)
                    else len(request.bits)
                    if isinstance(request, protocol.WriteMultipleCoils)
                    else 1
                )
            if request.address + count > floor:
                return protocol.EXC_ILLEGAL_DATA_ADDRESS
        if not self.profile.writes_enabled and not isinstance(
            request,
            (
                protocol.ReadCoils,
                protocol.ReadDiscreteInputs,
                protocol.ReadInputRegisters,
                protocol.ReadHoldingRegisters,
            ),
        ):
            return protocol.EXC_ILLEGAL_FUNCTION
        return None

    def _execute(self, request: protocol.RequestPdu) -> protocol.ResponsePdu:
        code = self._fault_code(request)
        if code is not None:
            return protocol.ExceptionPdu(request.FUNCTION, code)
        store = self.store
        if isinstance(request, (protocol.ReadCoils, protocol.ReadDiscreteInputs)):
            space = (
                RegisterSpace.COILS
                if isinstance(request, protocol.ReadCoils)
                else RegisterSpace.DISCRETE_INPUTS
            )
            bits = store.read_bits(space, request.address, request.quantity)
            return protocol.ReadBitsResponse(request.FUNCTION, tuple(bits))
        if isinstance(request, (protocol.ReadHoldingRegisters, protocol.ReadInputRegisters)):
            space = (
                RegisterSpace.HOLDING_REGISTERS
                if isinstance(request, protocol.ReadHoldingRegisters)
                else RegisterSpace.INPUT_REGISTERS
            )
            words = store.read_registers(space, request.address, request.quantity)
            return protocol.ReadRegistersResponse(request.FUNCTION, tuple(words))
        if isinstance(request, protocol.WriteSingleCoil):
            store.write_bits(RegisterSpace.COILS, request.address, [request.value])
            return protocol.WriteSingleCoilResponse(request.address, request.value)
        if isinstance(request, protocol.WriteSingleRegister):
            store.write_registers(RegisterSpace.HOLDING_REGISTERS, request.address, [request.value])
            return protocol.WriteSingleRegisterResponse(request.address, request.value)
        if isinstance(request, protocol.WriteMultipleCoils):
            store.write_bits(RegisterSpace.COILS, request.address, request.bits)
            return protocol.WriteMultipleCoilsResponse(request.address, len(request.bits))
        if isinstance(request, protocol.WriteMultipleRegisters):
            store.write_registers(RegisterSpace.HOLDING_REGISTERS, request.address, request.values)
            return protocol.WriteMultipleRegistersResponse(request.address, len(request.values))
        return protocol.ExceptionPdu(request.FUNCTION, protocol.EXC_ILLEGAL_FUNCTION)


class ServerHandle:
    """Running emulator: endpoint, store access, and a stop switch."""

    def __init__(self, server: ModbusServer, thread: threading.Thread):
        self.server = server
        self._thread = thread

    @property
    def host(self) -> str:
        return self.server.server_address[0]

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    @property
    def store(self) -> RegisterStore:
        return self.server.store

    @property
    def request_count(self) -> int:
        return self.server.request_count

    def stop(self) -> None:
        """Stop serving, drop live connections, release the port."""
        self.server.shutdown()
        self.server.close_connections()
        self.server.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "ServerHandle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve(endpoint: tuple[str, int], profile: DeviceProfile | None = None) -> ServerHandle:
    """Start serving ``profile`` on ``endpoint`` (port 0 picks a free port)."""
    server = ModbusServer(endpoint, profile or DeviceProfile())
    thread = threading.Thread(
        target=server.serve_forever, kwargs={"poll_interval": 0.1}, daemon=True
    )
    thread.start()
    return ServerHandle(server, thread)

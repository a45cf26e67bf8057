"""Declarative connector models: a register map plus connection settings.

A model turns the generic protocol machinery into a device-specific
connector. Document format (version 1) is YAML with a flat field table:

    version: 1                  # optional, defaults to 1
    device: meter-a             # optional label
    endpoint: 192.168.0.7:502   # host:port, required
    unit: 1                     # unit identifier, optional, defaults to 1
    byte_order: big             # model-wide default order, required
    fields:
      voltage:  holding@0 float32
      current:  holding@2 float32 little
      setpoint: holding@10 uint16 rw
      alarm:    discrete@4 bit
      serial:   holding@100 string[8]

Each field row reads ``<space>@<offset> <type> [<order>] [rw|ro]``:

* space: ``coils``, ``discrete`` (inputs), ``input`` (registers), ``holding``
* offset: decimal or 0x-hex register/bit address, 0..65535
* type: ``bit`` | ``uint16`` | ``int16`` | ``uint32`` | ``int32`` |
  ``uint64`` | ``int64`` | ``float32`` | ``float64`` | ``string[N]``
* order: overrides the model default for this field
* access: ``rw`` marks the field writable; default is read-only

Field values must be plain rows; nested structures are rejected. Structural
problems raise :class:`~modbuskit.errors.ModelError` at parse time; semantic
rule violations are reported by :func:`validate`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import yaml

from .codec import ByteOrder, DataType, parse_byte_order, parse_data_type
from .errors import ModelError
from .protocol import ADDRESS_SPACE, RegisterSpace

MODEL_VERSION = 1

_SPACE_ALIASES = {
    "coil": RegisterSpace.COILS,
    "coils": RegisterSpace.COILS,
    "discrete": RegisterSpace.DISCRETE_INPUTS,
    "discrete_input": RegisterSpace.DISCRETE_INPUTS,
    "discrete_inputs": RegisterSpace.DISCRETE_INPUTS,
    "input": RegisterSpace.INPUT_REGISTERS,
    "input_register": RegisterSpace.INPUT_REGISTERS,
    "input_registers": RegisterSpace.INPUT_REGISTERS,
    "holding": RegisterSpace.HOLDING_REGISTERS,
    "holding_register": RegisterSpace.HOLDING_REGISTERS,
    "holding_registers": RegisterSpace.HOLDING_REGISTERS,
}

_SPACE_LABEL = {
    RegisterSpace.COILS: "coils",
    RegisterSpace.DISCRETE_INPUTS: "discrete",
    RegisterSpace.INPUT_REGISTERS: "input",
    RegisterSpace.HOLDING_REGISTERS: "holding",
}

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_ROW_RE = re.compile(r"^(?P<space>[A-Za-z_]+)\s*@\s*(?P<offset>\S+)(?P<rest>.*)$")
_ORDER_TOKENS = {"big", "little", "big-swap", "little-swap", "be", "le", "sentron", "eem"}


@dataclass(frozen=True)
class FieldSpec:
    """One named data field bound to a register/bit address."""

    name: str
    space: RegisterSpace
    offset: int
    type: DataType
    order: ByteOrder
    writable: bool = False

    @property
    def width(self) -> int:
        """Addresses occupied: one per bit field, ``registers`` otherwise."""
        return 1 if self.space.is_bits else self.type.registers

    @property
    def end(self) -> int:
        return self.offset + self.width


@dataclass(frozen=True)
class ConnectorModel:
    device: str
    host: str
    port: int
    unit_id: int
    default_order: ByteOrder
    fields: tuple[FieldSpec, ...]

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def field(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise ModelError(f"unknown field '{name}'")


@dataclass(frozen=True)
class Violation:
    """One rule violation found by :func:`validate`."""

    severity: str  # "error" | "warning"
    field: str | None
    rule: str
    message: str

    def __str__(self) -> str:
        where = f"field '{self.field}': " if self.field else ""
        return f"{where}{self.message}"


def space_label(space: RegisterSpace) -> str:
    return _SPACE_LABEL[space]


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys."""


def _construct_mapping(loader, node, deep=False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise ModelError(
                f"duplicate key {key!r}", line=key_node.start_mark.line + 1
            )
        seen.add(key)
    return yaml.SafeLoader.construct_mapping(loader, node, deep)


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)


def parse_endpoint(text: str) -> tuple[str, int]:
    """Split ``host:port`` and range-check the port."""
    if not isinstance(text, str) or ":" not in text:
        raise ModelError(f"endpoint must be 'host:port', got {text!r}")
    host, _, port_text = text.rpartition(":")
    try:
        port = int(port_text)
    except ValueError:
        raise ModelError(f"endpoint port is not a number: {text!r}") from None
    if not host or not 0 <= port <= 65535:
        raise ModelError(f"endpoint must be 'host:port' with port 0..65535, got {text!r}")
    return host, port


def _parse_offset(token: str, name: str) -> int:
    try:
        offset = int(token, 0)
    except ValueError:
        raise ModelError(f"malformed offset {token!r}", field=name) from None
    if not 0 <= offset <= 0xFFFF:
        raise ModelError(f"offset {offset} outside 0..65535", field=name)
    return offset


def _parse_field_row(name: str, row, default_order: ByteOrder) -> FieldSpec:
    if isinstance(row, (dict, list)):
        raise ModelError("nested types prohibited; use a flat field row", field=name)
    if not isinstance(row, str):
        raise ModelError(f"expected a field row string, got {row!r}", field=name)
    if not _NAME_RE.match(name):
        raise ModelError(f"invalid field name {name!r}", field=name)
    if "@" not in row:
        raise ModelError(
            "missing register offset (expected '<space>@<offset> <type>')", field=name
        )
    m = _ROW_RE.match(row.strip())
    if not m:
        raise ModelError(f"malformed field row {row!r}", field=name)
    space_token = m.group("space").lower()
    if space_token not in _SPACE_ALIASES:
        raise ModelError(f"unknown register space {space_token!r}", field=name)
    space = _SPACE_ALIASES[space_token]
    offset = _parse_offset(m.group("offset"), name)

    dtype: DataType | None = None
    order: ByteOrder | None = None
    writable: bool | None = None
    for token in m.group("rest").split():
        low = token.lower()
        if low in ("rw", "ro"):
            if writable is not None:
                raise ModelError(f"duplicate access marker {token!r}", field=name)
            writable = low == "rw"
        elif low in _ORDER_TOKENS:
            if order is not None:
                raise ModelError(f"duplicate byte order {token!r}", field=name)
            order = parse_byte_order(low)
        elif dtype is None:
            try:
                dtype = parse_data_type(low)
            except Exception as exc:
                raise ModelError(str(exc), field=name) from None
        else:
            raise ModelError(f"unexpected token {token!r}", field=name)
    if dtype is None:
        raise ModelError("missing data type", field=name)
    return FieldSpec(
        name=name,
        space=space,
        offset=offset,
        type=dtype,
        order=order if order is not None else default_order,
        writable=bool(writable),
    )


_TOP_KEYS = {"version", "device", "endpoint", "unit", "byte_order", "fields"}


def parse_model(text: str, source: str = "<model>") -> ConnectorModel:
    """Parse a model document; all defaults are resolved in the result."""
    try:
        doc = yaml.load(text, Loader=_StrictLoader)
    except ModelError:
        raise
    except yaml.YAMLError as exc:
        raise ModelError(f"not valid YAML: {exc}") from None
    if doc is None:
        raise ModelError(f"{source}: empty model document")
    if not isinstance(doc, dict):
        raise ModelError(f"{source}: model document must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ModelError(f"unknown key(s): {', '.join(sorted(map(str, unknown)))}")

    version = doc.get("version", MODEL_VERSION)
    if version != MODEL_VERSION:
        raise ModelError(f"unsupported model version {version!r} (supported: {MODEL_VERSION})")

    if "endpoint" not in doc:
        raise ModelError("missing mandatory key 'endpoint'")
    host, port = parse_endpoint(doc["endpoint"])

    if "byte_order" not in doc:
        raise ModelError("missing mandatory key 'byte_order' (model default order)")
    try:
        default_order = parse_byte_order(str(doc["byte_order"]))
    except Exception as exc:
        raise ModelError(str(exc)) from None

    unit = doc.get("unit", 1)
    if not isinstance(unit, int) or isinstance(unit, bool) or not 0 <= unit <= 255:
        raise ModelError(f"unit must be an integer 0..255, got {unit!r}")

    device = doc.get("device", "")
    if device is None:
        device = ""
    if not isinstance(device, str):
        raise ModelError(f"device must be text, got {device!r}")

    raw_fields = doc.get("fields", {})
    if raw_fields is None:
        raw_fields = {}
    if not isinstance(raw_fields, dict):
        raise ModelError("'fields' must be a mapping of name -> field row")
    fields = tuple(
        _parse_field_row(str(name), row, default_order) for name, row in raw_fields.items()
    )
    return ConnectorModel(
        device=device,
        host=host,
        port=port,
        unit_id=unit,
        default_order=default_order,
        fields=fields,
    )


def parse_model_file(path) -> ConnectorModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read(), source=str(path))


def validate(model: ConnectorModel) -> list[Violation]:
    """Check every model rule; the returned list is empty iff the model is clean.

    Violations are sorted by (field, rule) so the result does not depend on
    field declaration order. Overlapping fields are warnings (vendors do
    alias registers); everything else is an error.
    """
    violations: list[Violation] = []

    def err(field, rule, message):
        violations.append(Violation("error", field, rule, message))

    if not 0 <= model.unit_id <= 255:
        err(None, "unit-range", f"unit id {model.unit_id} outside 0..255")
    if not 0 <= model.port <= 65535:
        err(None, "port-range", f"port {model.port} outside 0..65535")

    seen: dict[str, int] = {}
    for f in model.fields:
        seen[f.name] = seen.get(f.name, 0) + 1
        bit_space = f.space.is_bits
        if f.type.is_bit != bit_space:
            err(
                f.name,
                "type-space",
                f"type {f.type} not applicable to space {space_label(f.space)}",
            )
        if f.end > ADDRESS_SPACE:
            err(
                f.name,
                "address-space",
                f"{f.type} at offset {f.offset} exceeds address space "
                f"(needs {f.offset}..{f.end - 1}, space ends at {ADDRESS_SPACE - 1})",
            )
        if f.writable and not f.space.writable:
            err(
                f.name,
                "writable-space",
                f"writable field in read-only space {space_label(f.space)}",
            )
    for name, count in seen.items():
        if count > 1:
            err(name, "duplicate-name", f"field name used {count} times")

    by_space: dict[RegisterSpace, list[FieldSpec]] = {}
    for f in model.fields:
        by_space.setdefault(f.space, []).append(f)
    for space, fields in by_space.items():
        ordered = sorted(fields, key=lambda f: (f.offset, f.end, f.name))
        for a, b in zip(ordered, ordered[1:]):
            if b.offset < a.end and a.name != b.name:
                first, second = sorted((a.name, b.name))
                violations.append(
                    Violation(
                        "warning",
                        first,
                        "overlap",
                        f"fields '{first}' and '{second}' overlap in "
                        f"{space_label(space)} around offset {b.offset}",
                    )
                )

    violations.sort(key=lambda v: (v.field or "", v.rule, v.message))
    return violations


def has_errors(violations: list[Violation]) -> bool:
    return any(v.severity == "error" for v in violations)

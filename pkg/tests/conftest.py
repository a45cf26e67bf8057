"""Shared fixtures: emulator lifecycle and model builders."""

from __future__ import annotations

import socket

import pytest

from modbuskit.codec import ByteOrder
from modbuskit.connector import ConnectorConfig, ModbusConnector
from modbuskit.emulator import DeviceProfile, serve
from modbuskit.model import ConnectorModel, FieldSpec


@pytest.fixture
def emulate():
    """Start emulators on ephemeral ports; everything stops at teardown."""
    handles = []

    def _serve(profile: DeviceProfile | None = None):
        handle = serve(("127.0.0.1", 0), profile)
        handles.append(handle)
        return handle

    yield _serve
    for handle in handles:
        handle.stop()


def build_model(
    fields,
    *,
    host: str = "127.0.0.1",
    port: int = 0,
    unit: int = 1,
    order: ByteOrder = ByteOrder.BIG,
    device: str = "test-device",
) -> ConnectorModel:
    return ConnectorModel(
        device=device,
        host=host,
        port=port,
        unit_id=unit,
        default_order=order,
        fields=tuple(fields),
    )


def field(name, space, offset, dtype, order=ByteOrder.BIG, writable=False) -> FieldSpec:
    return FieldSpec(
        name=name, space=space, offset=offset, type=dtype, order=order, writable=writable
    )


def open_connector(model: ConnectorModel, handle, **config_overrides) -> ModbusConnector:
    """Connect ``model`` to a running emulator handle."""
    config = ConnectorConfig(
        host=handle.host, port=handle.port, unit_id=model.unit_id, **config_overrides
    )
    connector = ModbusConnector(model, config)
    connector.open()
    return connector


def free_tcp_port() -> int:
    """A port that was just free; nothing is listening on it afterwards."""
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]

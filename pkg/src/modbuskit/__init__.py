"""Model-driven Modbus/TCP connector toolkit with emulator and benchmark harness."""

__version__ = "0.1.0"

from .codec import ByteOrder, DataType, decode_value, encode_value  # noqa: F401
from .connector import ConnectorConfig, ModbusConnector, Record, connect  # noqa: F401
from .emulator import DeviceProfile, LatencyProfile, load_profile, serve  # noqa: F401
from .errors import (  # noqa: F401
    CodecError,
    ConnectError,
    ExceptionResponse,
    FrameError,
    ModbusKitError,
    ModelError,
    ProfileError,
    ResponseTimeout,
    TransportError,
)
from .model import ConnectorModel, FieldSpec, parse_model, parse_model_file, validate  # noqa: F401
from .planner import BatchPlan, ReadSpan, build_plan  # noqa: F401
from .bench import BenchStats, SampleLog, compute_stats, run_benchmark  # noqa: F401

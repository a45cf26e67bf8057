"""Acceptance gate: one test per criterion, at the stated sizes and tolerances.

Each test prints a ``[acceptance] criterion N ...: PASS`` line (visible with
``pytest -s`` or in captured output). The numbers here are the contract; do
not shrink them to make the suite faster.
"""

import math
import random
import struct
import time

import pytest

from modbuskit import protocol as p
from modbuskit.bench import BatchSample, SampleLog, compute_stats, run_benchmark
from modbuskit.codec import (
    BIT,
    FLOAT32,
    FLOAT64,
    INT16,
    INT32,
    INT64,
    UINT16,
    UINT32,
    UINT64,
    ByteOrder,
    decode_value,
    encode_value,
    string,
)
from modbuskit.connector import connect
from modbuskit.emulator import DeviceProfile, LatencyProfile, load_bundled_profile, serve
from modbuskit.errors import ExceptionResponse, FrameError
from modbuskit.model import RegisterSpace
from modbuskit.planner import build_plan

from conftest import build_model, field, open_connector
from test_fuzz import assert_server_still_sane, biased_frames, hammer_server
from test_planner import minimal_request_count

H = RegisterSpace.HOLDING_REGISTERS
SEED = 20240917


def _pass(number: int, label: str) -> None:
    print(f"[acceptance] criterion {number} ({label}): PASS")


def ten_float32_model(port=0, order=ByteOrder.BIG):
    return build_model(
        [field(f"v{i}", H, 2 * i, FLOAT32, order=order) for i in range(10)],
        port=port,
        device="ten-float32",
    )


# --- criterion 1: protocol conformance ------------------------------------------------


def _random_request(rng, function):
    addr = rng.randint(0, 0xFFFF)
    if function in (p.READ_COILS, p.READ_DISCRETE_INPUTS):
        cls = p.ReadCoils if function == p.READ_COILS else p.ReadDiscreteInputs
        return cls(addr, rng.randint(1, min(p.MAX_READ_BITS, 0x10000 - addr)))
    if function in (p.READ_HOLDING_REGISTERS, p.READ_INPUT_REGISTERS):
        cls = p.ReadHoldingRegisters if function == p.READ_HOLDING_REGISTERS else p.ReadInputRegisters
        return cls(addr, rng.randint(1, min(p.MAX_READ_REGISTERS, 0x10000 - addr)))
    if function == p.WRITE_SINGLE_COIL:
        return p.WriteSingleCoil(addr, rng.random() < 0.5)
    if function == p.WRITE_SINGLE_REGISTER:
        return p.WriteSingleRegister(addr, rng.randint(0, 0xFFFF))
    if function == p.WRITE_MULTIPLE_COILS:
        count = rng.randint(1, min(p.MAX_WRITE_BITS, 0x10000 - addr))
        return p.WriteMultipleCoils(addr, tuple(rng.random() < 0.5 for _ in range(count)))
    count = rng.randint(1, min(p.MAX_WRITE_REGISTERS, 0x10000 - addr))
    return p.WriteMultipleRegisters(
        addr, tuple(rng.randint(0, 0xFFFF) for _ in range(count))
    )


def _random_response(rng, function):
    addr = rng.randint(0, 0xFFFF)
    if rng.random() < 0.1:
        return p.ExceptionPdu(function, rng.randint(1, 0xFF))
    if function in (p.READ_COILS, p.READ_DISCRETE_INPUTS):
        count = rng.randint(1, p.MAX_READ_BITS)
        return p.ReadBitsResponse(function, tuple(rng.random() < 0.5 for _ in range(count)))
    if function in (p.READ_HOLDING_REGISTERS, p.READ_INPUT_REGISTERS):
        count = rng.randint(1, p.MAX_READ_REGISTERS)
        return p.ReadRegistersResponse(
            function, tuple(rng.randint(0, 0xFFFF) for _ in range(count))
        )
    if function == p.WRITE_SINGLE_COIL:
        return p.WriteSingleCoilResponse(addr, rng.random() < 0.5)
    if function == p.WRITE_SINGLE_REGISTER:
        return p.WriteSingleRegisterResponse(addr, rng.randint(0, 0xFFFF))
    if function == p.WRITE_MULTIPLE_COILS:
        return p.WriteMultipleCoilsResponse(
            addr, rng.randint(1, min(p.MAX_WRITE_BITS, 0x10000 - addr))
        )
    return p.WriteMultipleRegistersResponse(
        addr, rng.randint(1, min(p.MAX_WRITE_REGISTERS, 0x10000 - addr))
    )


def test_criterion_1_protocol_conformance():
    started = time.perf_counter()
    rng = random.Random(SEED)
    cases_per_function = 1000
    for function in sorted(p.SUPPORTED_FUNCTIONS):
        for _ in range(cases_per_function):
            tid, unit = rng.randint(0, 0xFFFF), rng.randint(0, 0xFF)
            request = _random_request(rng, function)
            header, decoded = p.decode_request(p.encode_request(tid, unit, request))
            assert decoded == request
            assert (header.transaction_id, header.unit_id) == (tid, unit)
            response = _random_response(rng, function)
            header, decoded = p.decode_response(p.encode_response(tid, unit, response))
            assert decoded == response

    assert p.encode_request(1, 1, p.ReadHoldingRegisters(0, 2)) == bytes.fromhex(
        "000100000006010300000002"
    )
    assert p.encode_request(0, 0, p.WriteSingleRegister(0, 0)) == bytes.fromhex(
        "000000000006000600000000"
    )
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"criterion 1 took {elapsed:.1f}s, limit 5s"
    _pass(1, "protocol conformance")


# --- criterion 2: codec correctness ----------------------------------------------------


def _random_float(rng, width):
    fmt, size = (">f", 4) if width == 32 else (">d", 8)
    while True:
        value = struct.unpack(fmt, rng.randbytes(size))[0]
        if not math.isnan(value):
            return value


def _float_bits(value):
    return struct.pack(">d", value)


def test_criterion_2_codec_correctness():
    started = time.perf_counter()
    rng = random.Random(SEED + 2)
    int_ranges = {
        UINT16: (0, 0xFFFF),
        INT16: (-0x8000, 0x7FFF),
        UINT32: (0, 0xFFFFFFFF),
        INT32: (-0x80000000, 0x7FFFFFFF),
        UINT64: (0, 2**64 - 1),
        INT64: (-(2**63), 2**63 - 1),
    }
    types = list(int_ranges) + [FLOAT32, FLOAT64, string(1), string(2), string(4)]
    orders = list(ByteOrder)
    printable = [chr(c) for c in range(0x20, 0x7F)]
    for _ in range(10000):
        dtype = rng.choice(types)
        order = rng.choice(orders)
        if dtype in int_ranges:
            value = rng.randint(*int_ranges[dtype])
        elif dtype is FLOAT32:
            value = _random_float(rng, 32)
        elif dtype is FLOAT64:
            value = _random_float(rng, 64)
        else:
            value = "".join(
                rng.choice(printable) for _ in range(rng.randint(0, 2 * dtype.registers))
            )
        words = encode_value(value, dtype, order)
        decoded = decode_value(words, dtype, order)
        if isinstance(value, float):
            assert _float_bits(decoded) == _float_bits(value), (value, dtype, order)
        else:
            assert decoded == value, (value, dtype, order)

    # fixed examples against the IEEE 754 / two's-complement oracle
    assert decode_value([0x0000, 0x0000], FLOAT32, ByteOrder.BIG) == 0.0
    assert decode_value([0x3F80, 0x0000], FLOAT32, ByteOrder.BIG) == 1.0
    assert decode_value([0xFFFF], INT16, ByteOrder.BIG) == -1
    assert decode_value([0x0001, 0x0000], UINT32, ByteOrder.BIG) == 65536
    assert decode_value([0x0000, 0x803F], FLOAT32, ByteOrder.LITTLE) == 1.0
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"criterion 2 took {elapsed:.1f}s, limit 5s"
    _pass(2, "codec correctness")


# --- criterion 3: planner optimality at desk scale --------------------------------------


def test_criterion_3_planner_optimality():
    from itertools import combinations

    grid = (0, 1, 3, 6, 10, 15, 21, 28, 36, 45, 55, 63)  # all offsets < 64
    type_cycle = (UINT16, FLOAT32)
    models = 0
    for size in range(1, 9):
        for offsets in combinations(grid, size):
            fields = [
                field(f"f{i}", H, off, type_cycle[i % 2])
                for i, off in enumerate(offsets)
            ]
            model = build_model(fields)
            widths = [(f.offset, f.width) for f in fields]
            for gap in (0, 2, 8):
                plan = build_plan(model, gap)
                assert len(plan.spans) == minimal_request_count(widths, gap), (
                    offsets,
                    gap,
                )
            models += 1
    assert models == sum(math.comb(12, k) for k in range(1, 9))

    plan = build_plan(ten_float32_model())
    assert len(plan.spans) == 1
    assert (plan.spans[0].start, plan.spans[0].count) == (0, 20)
    _pass(3, f"planner optimality over {models} grid models")


# --- criterion 4: end-to-end coherence ----------------------------------------------------


def test_criterion_4_end_to_end_coherence(emulate):
    writable_values = {
        UINT16: 54321,
        INT16: -12345,
        UINT32: 3_000_000_000,
        INT32: -2_000_000_000,
        UINT64: 2**63 + 12345,
        INT64: -(2**62),
        FLOAT32: -2.5,
        FLOAT64: 3.14159265358979,
        string(1): "ok",
        string(4): "PAC-4200",
    }
    fields = []
    expectations = {}
    offset = 0
    for dtype, value in writable_values.items():
        for order in ByteOrder:
            name = f"w_{dtype.registers}_{len(fields)}"
            fields.append(field(name, H, offset, dtype, order=order, writable=True))
            expectations[name] = value
            offset += dtype.registers + 1
    fields.append(field("relay", RegisterSpace.COILS, 0, BIT, writable=True))
    expectations["relay"] = True

    handle = emulate()
    model = build_model(fields, port=handle.port)
    plan = build_plan(model)
    conn = open_connector(model, handle)
    for name, value in expectations.items():
        conn.write_field(name, value)
    record = conn.read_batch(plan)
    for name, value in expectations.items():
        got = record[name].value
        if isinstance(value, float):
            assert _float_bits(got) == _float_bits(value), name
        else:
            assert got == value, name
    conn.close()

    # exception injection surfaces code and affected span
    injected = emulate(DeviceProfile(illegal_address_floor=1000))
    model = build_model([field("x", H, 1000, UINT16)], port=injected.port)
    plan = build_plan(model)
    conn = open_connector(model, injected)
    with pytest.raises(ExceptionResponse) as exc:
        conn.read_batch(plan)
    assert exc.value.code == 0x02
    assert exc.value.function == p.READ_HOLDING_REGISTERS
    assert exc.value.span == plan.spans[0]
    conn.close()
    _pass(4, f"write/read coherence over {len(expectations)} field set-ups")


# --- criteria 5 + 6: benchmark methodology ---------------------------------------------------


def _averaged(stats_list, attr):
    return sum(getattr(s, attr) for s in stats_list) / len(stats_list)


def test_criterion_5_benchmark_methodology(emulate):
    started = time.perf_counter()

    baseline_handle = emulate()
    model = ten_float32_model(port=baseline_handle.port)
    plan = build_plan(model)
    assert len(plan.spans) == 1
    conn = connect(model)
    logs = run_benchmark(conn, plan, batches=5000, repetitions=3, subject="local-zero")
    conn.close()
    stats = [compute_stats(log, settle=1500) for log in logs]
    for s in stats:
        assert s.count == 3500
        assert s.avg_us < 5000, f"avg batch latency {s.avg_us:.0f}us exceeds 5ms"
    baseline_avg = _averaged(stats, "avg_us")
    baseline_std = _averaged(stats, "stddev_us")

    delayed_handle = emulate(DeviceProfile(latency=LatencyProfile(fixed_us=2000)))
    model_b = ten_float32_model(port=delayed_handle.port)
    plan_b = build_plan(model_b)
    conn = connect(model_b)
    delayed_logs = run_benchmark(conn, plan_b, batches=600, repetitions=1,
                                 subject="local-2000us")
    conn.close()
    delayed_avg = compute_stats(delayed_logs[0], settle=150).avg_us

    shift = delayed_avg - baseline_avg
    assert shift >= 2000, f"shift {shift:.0f}us below injected 2000us"
    ceiling = 2000 + baseline_avg + 3 * baseline_std
    assert shift <= ceiling, f"shift {shift:.0f}us above ceiling {ceiling:.0f}us"

    elapsed = time.perf_counter() - started
    assert elapsed < 180, f"criterion 5 took {elapsed:.0f}s, limit 180s"
    _pass(5, f"5000x3 avg {baseline_avg:.0f}us, shift {shift:.0f}us in "
             f"[2000, {ceiling:.0f}]us, {elapsed:.0f}s")


def test_criterion_6_settling_removal(emulate):
    profile = DeviceProfile(
        latency=LatencyProfile(warmup_requests=1500, warmup_extra_us=5000)
    )
    handle = emulate(profile)
    model = ten_float32_model(port=handle.port)
    plan = build_plan(model)
    assert len(plan.spans) == 1  # one request per batch: request index == batch index
    conn = connect(model)
    (log,) = run_benchmark(conn, plan, batches=2000, repetitions=1, subject="warmup")
    conn.close()

    full = compute_stats(log, settle=0)
    settled = compute_stats(log, settle=1500)
    assert settled.count == 500
    assert full.max_us >= 5000  # warm-up inflation visible in the raw log
    assert settled.max_us < full.max_us
    assert settled.max_us < 5000  # inflated samples are gone entirely
    assert settled.avg_us < full.avg_us
    _pass(6, f"settled max {settled.max_us:.0f}us < full max {full.max_us:.0f}us")


# --- criterion 7: stats oracle ---------------------------------------------------------------


def test_criterion_7_stats_oracle():
    log = SampleLog("fixed", "e", 1, 1, 0)
    log.samples = [
        BatchSample(i, 0, d) for i, d in enumerate([100, 200, 300, 400, 500])
    ]
    stats = compute_stats(log, settle=0)
    assert stats.min_us == 100
    assert stats.avg_us == 300
    assert stats.median_us == 300
    assert stats.max_us == 500
    assert abs(stats.stddev_us - 158.11) <= 0.01

    rng = random.Random(SEED + 7)
    for _ in range(10000):
        count = rng.randint(1, 40)
        samples = [rng.randint(0, 10**6) for _ in range(count)]
        settle = rng.randint(0, count - 1)
        random_log = SampleLog("r", "e", 1, 1, 0)
        random_log.samples = [BatchSample(i, 0, d) for i, d in enumerate(samples)]
        s = compute_stats(random_log, settle=settle)
        assert s.min_us <= s.median_us <= s.max_us
        assert s.min_us <= s.avg_us <= s.max_us
        assert s.stddev_us >= 0
        assert s.count + s.settle_removed == count
    _pass(7, "stats oracle and invariants over 10000 random logs")


# --- criterion 8: device-preset plausibility ----------------------------------------------------


def test_criterion_8_device_preset_ratio(emulate):
    averages = {}
    for name, order in (("sentron-like", ByteOrder.BIG), ("eem-like", ByteOrder.LITTLE)):
        handle = emulate(load_bundled_profile(name))
        model = ten_float32_model(port=handle.port, order=order)
        plan = build_plan(model)
        assert len(plan.spans) == 1
        conn = connect(model)
        (log,) = run_benchmark(conn, plan, batches=400, repetitions=1, subject=name)
        record = conn.read_batch(plan)
        conn.close()
        assert all(s.value != 0.0 for s in record.values())  # presets hold live-ish data
        averages[name] = compute_stats(log, settle=100).avg_us
    ratio = averages["eem-like"] / averages["sentron-like"]
    assert 1.5 <= ratio <= 2.5, f"EEM/Sentron average ratio {ratio:.2f} outside [1.5, 2.5]"
    _pass(8, f"EEM {averages['eem-like']:.0f}us / Sentron "
             f"{averages['sentron-like']:.0f}us = {ratio:.2f}")


# --- criterion 9: robustness -------------------------------------------------------------------


def test_criterion_9_fuzz_robustness():
    rng = random.Random(SEED + 9)
    decoder_frames = 90000
    for frame in biased_frames(rng, decoder_frames):
        try:
            p.decode_request(frame)
        except FrameError:
            pass
        try:
            p.decode_response(frame)
        except FrameError:
            pass

    handle = serve(("127.0.0.1", 0))
    try:
        sent = hammer_server(handle, 10000, seed=SEED + 90)
        assert sent == 10000
        assert_server_still_sane(handle)
    finally:
        handle.stop()
    _pass(9, f"{decoder_frames} decoder + 10000 server frames, zero crashes")

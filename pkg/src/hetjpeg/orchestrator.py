"""End-to-end decode drivers.

Six execution modes share one entropy decoder and one kernel set and
produce bit-identical pixels; they differ only in where and when the
parallel phase runs:

  seq         single thread, unfused kernels, full entropy decode first
  par         host worker pool on the parallel phase after full decode
  accel       full entropy decode, then one accelerator dispatch
  accel-pipe  chunked entropy decode with an async dispatch per chunk
  sps         full entropy decode, then a model-balanced row split
              executed concurrently on both lanes
  pps         chunked entropy decode for the accelerator share with async
              dispatches, one re-partition before the final chunk, host
              share last

The orchestrating thread owns control flow and all entropy decoding; the
accelerator lane consumes an ordered queue of row-range work items.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from . import entropy, partitioner
from .block_transforms import PixelBuffer, alloc_pixels, render_rows
from .errors import PlanInfeasible, ZeroHuffman
from .executors import LanePair, WorkItem, host_stripes, wait_all
from .parser import ParsedJpeg, geometry_of
from .perf_model import (
    DeviceProfile,
    entropy_density,
    estimate_huffman_time,
    _kernel_selector,
    _qtable_stack,
)

MODES = ("seq", "par", "accel", "accel-pipe", "sps", "pps")
_PROFILE_MODES = ("accel-pipe", "sps", "pps")
_LANE_MODES = ("par", "accel", "accel-pipe", "sps", "pps")


@dataclass
class DecodeReport:
    """Timing breakdown of one decode."""
    mode: str
    width: int = 0
    height: int = 0
    density: float = 0.0
    wall_ns: int = 0
    huffman_ns: int = 0          # total entropy-decoding time
    parallel_host_ns: int = 0    # host-lane parallel-phase section
    accel_busy_ns: int = 0       # sum of write+compute+read on the accelerator
    accel_compute_ns: int = 0
    transfer_write_ns: int = 0
    transfer_read_ns: int = 0
    dispatch_ns: int = 0
    plan: partitioner.PartitionPlan | None = None
    chunks: list[dict] = field(default_factory=list)
    repartitioned: bool = False
    balance_cpu_ns: int = 0      # measured CPU side of the balance equation
    balance_accel_ns: int = 0    # measured accelerator side

    @property
    def amdahl_bound(self) -> float:
        """wall / huffman; the attainable-speedup bound when this report
        came from the reference mode."""
        return amdahl_bound(self)


def amdahl_bound(report_reference: DecodeReport) -> float:
    """Maximum attainable speedup over the reference: T_total / T_Huff."""
    if report_reference.huffman_ns <= 0:
        raise ZeroHuffman("reference report has zero Huffman time")
    return report_reference.wall_ns / report_reference.huffman_ns


def _absorb_tickets(report: DecodeReport, tickets) -> None:
    for t in tickets:
        report.accel_busy_ns += t.busy_ns
        report.accel_compute_ns += t.compute_ns
        report.transfer_write_ns += t.transfer_write_ns
        report.transfer_read_ns += t.transfer_read_ns
        report.dispatch_ns += t.dispatch_ns


def decode(parsed: ParsedJpeg, mode: str, profile: DeviceProfile | None,
           lanes: LanePair | None, *, data: bytes | None = None,
           idct: str = "fast", enable_repartition: bool = True,
           chunk_mcu_rows: int | None = None
           ) -> tuple[PixelBuffer, DecodeReport]:
    """Decode ``parsed`` under one of the six modes.

    Returns the pixel buffer and a timing report.  Output bytes are
    identical across modes for the same input and IDCT path.
    ``chunk_mcu_rows`` overrides the profile's calibrated chunk height
    (used by the chunk-size calibration itself).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r} (choose from {MODES})")
    if mode in _PROFILE_MODES and profile is None and not (
            mode == "accel-pipe" and chunk_mcu_rows):
        raise ValueError(f"mode {mode!r} requires a device profile")
    if mode in _LANE_MODES and lanes is None:
        raise ValueError(f"mode {mode!r} requires configured lanes")
    if idct not in ("fast", "direct"):
        raise ValueError(f"unknown idct path {idct!r}")

    geo = geometry_of(parsed)
    if geo.mcu_rows < 1 or geo.mcus_per_row < 1:
        raise PlanInfeasible(f"image {geo.width}x{geo.height} has no MCU rows")

    fast = idct == "fast"
    qtables = _qtable_stack(parsed)
    kernel = _kernel_selector(parsed)
    d = entropy_density(parsed.file_size, geo.width, geo.height).d
    report = DecodeReport(mode=mode, width=geo.width, height=geo.height,
                          density=d)

    t_start = time.perf_counter_ns()
    cursor = entropy.new_cursor(parsed, data)
    coeffs = entropy.alloc_coefficients(geo)
    pixels = alloc_pixels(geo.width, geo.height)

    if mode == "seq":
        _run_seq(parsed, cursor, coeffs, qtables, pixels, fast, report)
    elif mode == "par":
        _run_par(parsed, cursor, coeffs, qtables, pixels, kernel, fast,
                 lanes, report)
    elif mode == "accel":
        _run_accel(parsed, cursor, coeffs, qtables, pixels, kernel, fast,
                   lanes, report)
    elif mode == "accel-pipe":
        c_rows = chunk_mcu_rows or max(1, profile.chunk_rows // geo.mcu_height)
        _run_accel_pipe(parsed, cursor, coeffs, qtables, pixels, kernel,
                        fast, lanes, c_rows, report)
    elif mode == "sps":
        _run_sps(parsed, cursor, coeffs, qtables, pixels, kernel, fast,
                 lanes, profile, d, report)
    else:
        _run_pps(parsed, cursor, coeffs, qtables, pixels, kernel, fast,
                 lanes, profile, d, enable_repartition, report)

    report.wall_ns = time.perf_counter_ns() - t_start
    return pixels, report


def _timed_decode(cursor, parsed, coeffs, n_rows, report) -> int:
    t0 = time.perf_counter_ns()
    entropy.decode_rows(cursor, parsed, coeffs, n_rows)
    dt = time.perf_counter_ns() - t0
    report.huffman_ns += dt
    return dt


def _host_section(lanes, coeffs, qtables, pixels, kernel, fast, row0, n_rows,
                  report) -> None:
    """Render MCU rows on the host pool and record the section wall time."""
    if n_rows <= 0:
        return
    t0 = time.perf_counter_ns()
    tickets = [
        lanes.host.submit(WorkItem(row0 + r, n, kernel, coeffs, qtables,
                                   pixels, fast=fast))
        for r, n in host_stripes(n_rows, lanes.host.config.worker_count)
    ]
    wait_all(tickets)
    report.parallel_host_ns += time.perf_counter_ns() - t0


def _run_seq(parsed, cursor, coeffs, qtables, pixels, fast, report):
    geo = coeffs.geometry
    _timed_decode(cursor, parsed, coeffs, geo.mcu_rows, report)
    t0 = time.perf_counter_ns()
    render_rows(coeffs, qtables, pixels, 0, geo.mcu_rows, fast=fast,
                fused=False)
    report.parallel_host_ns = time.perf_counter_ns() - t0


def _run_par(parsed, cursor, coeffs, qtables, pixels, kernel, fast, lanes,
             report):
    geo = coeffs.geometry
    _timed_decode(cursor, parsed, coeffs, geo.mcu_rows, report)
    _host_section(lanes, coeffs, qtables, pixels, kernel, fast, 0,
                  geo.mcu_rows, report)


def _run_accel(parsed, cursor, coeffs, qtables, pixels, kernel, fast, lanes,
               report):
    geo = coeffs.geometry
    _timed_decode(cursor, parsed, coeffs, geo.mcu_rows, report)
    ticket = lanes.accel.submit(
        WorkItem(0, geo.mcu_rows, kernel, coeffs, qtables, pixels, fast=fast))
    ticket.wait()
    _absorb_tickets(report, [ticket])
    report.chunks.append({"row0": 0, "mcu_rows": geo.mcu_rows,
                          "busy_ns": ticket.busy_ns})


def _run_accel_pipe(parsed, cursor, coeffs, qtables, pixels, kernel, fast,
                    lanes, chunk_mcu_rows, report):
    geo = coeffs.geometry
    tickets = []
    row = 0
    while row < geo.mcu_rows:
        n = min(chunk_mcu_rows, geo.mcu_rows - row)
        huff_ns = _timed_decode(cursor, parsed, coeffs, n, report)
        ticket = lanes.accel.submit(
            WorkItem(row, n, kernel, coeffs, qtables, pixels, fast=fast))
        tickets.append(ticket)
        report.chunks.append({"row0": row, "mcu_rows": n, "huff_ns": huff_ns})
        row += n
    wait_all(tickets)
    _absorb_tickets(report, tickets)
    for chunk, ticket in zip(report.chunks, tickets):
        chunk["busy_ns"] = ticket.busy_ns
        chunk["dispatch_ns"] = ticket.dispatch_ns


def _run_sps(parsed, cursor, coeffs, qtables, pixels, kernel, fast, lanes,
             profile, d, report):
    geo = coeffs.geometry
    _timed_decode(cursor, parsed, coeffs, geo.mcu_rows, report)
    plan = partitioner.solve_sps(profile, geo.width, geo.height, d)
    report.plan = plan
    tickets = []
    if plan.accel_mcu_rows:
        tickets.append(lanes.accel.submit(
            WorkItem(0, plan.accel_mcu_rows, kernel, coeffs, qtables, pixels,
                     fast=fast)))
    _host_section(lanes, coeffs, qtables, pixels, kernel, fast,
                  plan.accel_mcu_rows, plan.cpu_mcu_rows, report)
    wait_all(tickets)
    _absorb_tickets(report, tickets)
    report.balance_cpu_ns = report.dispatch_ns + report.parallel_host_ns
    report.balance_accel_ns = report.accel_busy_ns


def _run_pps(parsed, cursor, coeffs, qtables, pixels, kernel, fast, lanes,
             profile, d, enable_repartition, report):
    geo = coeffs.geometry
    w, h = geo.width, geo.height
    plan = partitioner.solve_pps(profile, w, h, d)
    report.plan = plan
    chunk_mcu = max(1, plan.chunk_rows // geo.mcu_height)

    tickets = []
    accel_backlog_done = time.perf_counter_ns()  # predicted accel idle time
    cpu_mcu_rows = plan.cpu_mcu_rows

    def dispatch(row0: int, n: int, huff_ns: int):
        nonlocal accel_backlog_done
        ticket = lanes.accel.submit(
            WorkItem(row0, n, kernel, coeffs, qtables, pixels, fast=fast))
        tickets.append(ticket)
        now = time.perf_counter_ns()
        predicted = profile.predict_p_gpu(w, n * geo.mcu_height)
        accel_backlog_done = max(accel_backlog_done, now) + int(predicted)
        report.chunks.append({"row0": row0, "mcu_rows": n, "huff_ns": huff_ns})

    row = 0
    remaining_accel = plan.accel_mcu_rows
    while remaining_accel > 0:
        is_last = remaining_accel <= chunk_mcu
        if is_last and enable_repartition and not report.repartitioned:
            state = partitioner.RepartitionState(
                estimated_total_huff=estimate_huffman_time(profile, w, h, d),
                actual_huff_so_far=float(sum(cursor.row_times_ns)),
                rows_remaining=h - row * geo.mcu_height,
                h_total=h,
                d=d,
                prev_gpu_remaining=max(
                    0.0, accel_backlog_done - time.perf_counter_ns()),
            )
            new_plan = partitioner.repartition(state, profile, w)
            report.repartitioned = True
            remaining_accel = new_plan.accel_mcu_rows
            cpu_mcu_rows = new_plan.cpu_mcu_rows
            report.plan = new_plan
            if remaining_accel == 0:
                break
        n = min(chunk_mcu, remaining_accel)
        huff_ns = _timed_decode(cursor, parsed, coeffs, n, report)
        dispatch(row, n, huff_ns)
        row += n
        remaining_accel -= n

    first_chunk_huff = report.chunks[0]["huff_ns"] if report.chunks else 0
    if cpu_mcu_rows > 0:
        _timed_decode(cursor, parsed, coeffs, cpu_mcu_rows, report)
        _host_section(lanes, coeffs, qtables, pixels, kernel, fast, row,
                      cpu_mcu_rows, report)
    wait_all(tickets)
    _absorb_tickets(report, tickets)
    for chunk, ticket in zip(report.chunks, tickets):
        chunk["busy_ns"] = ticket.busy_ns
        chunk["dispatch_ns"] = ticket.dispatch_ns
    report.balance_cpu_ns = ((report.huffman_ns - first_chunk_huff)
                             + report.dispatch_ns + report.parallel_host_ns)
    report.balance_accel_ns = report.accel_busy_ns
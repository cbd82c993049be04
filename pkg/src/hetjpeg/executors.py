"""Execution lanes with an asynchronous dispatch contract.

Two lanes drive the parallel phase: a host lane (no transfer costs) and an
accelerator lane that models a discrete device by charging an affine
write/read transfer cost around each kernel execution and optionally
stretching compute time by a throttle factor.  Entropy decoding never runs
on a lane; lanes only execute parallel-phase kernels over disjoint MCU-row
ranges.

Throttling stretches real compute by sleeping, so a lane pair emulates two
devices of different speeds even on a single core: while one lane sleeps,
the other computes.  Factors below 1 cannot shrink real compute time; to
model an accelerator faster than the host, throttle the host lane instead.
"""
from __future__ import annotations

import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .block_transforms import PixelBuffer, render_rows
from .entropy import CoefficientBuffer
from .errors import LaneShutDown

KERNEL_SELECTORS = ("fused-444", "fused-422", "unfused")


def affine_cost(latency_ns: float, bytes_per_ns: float) -> Callable[[int], float]:
    """Transfer cost model: latency + size / bandwidth, in nanoseconds."""
    def cost(nbytes: int) -> float:
        if nbytes <= 0:
            return 0.0
        if bytes_per_ns <= 0:
            return float(latency_ns)
        return float(latency_ns) + nbytes / bytes_per_ns
    return cost


def zero_cost(nbytes: int) -> float:
    return 0.0


@dataclass
class LaneConfig:
    worker_count: int = 1
    transfer_write_cost: Callable[[int], float] = zero_cost
    transfer_read_cost: Callable[[int], float] = zero_cost
    throttle_factor: float = 1.0


@dataclass
class WorkItem:
    """One parallel-phase task: render MCU rows [row0, row0+n_rows)."""
    row0: int
    n_rows: int
    kernel: str
    coeffs: CoefficientBuffer
    qtables: np.ndarray
    pixels: PixelBuffer
    fast: bool = True

    def __post_init__(self):
        if self.kernel not in KERNEL_SELECTORS:
            raise ValueError(f"unknown kernel selector {self.kernel!r}")

    @property
    def fused(self) -> bool:
        return self.kernel != "unfused"

    def write_bytes(self) -> int:
        """Coefficient payload shipped to the device for this row range."""
        geo = self.coeffs.geometry
        blocks = geo.mcus_per_row * (self.coeffs.y_blocks_per_mcu + 2)
        return self.n_rows * blocks * 64 * 2

    def read_bytes(self) -> int:
        """RGB payload read back for this row range."""
        geo = self.coeffs.geometry
        y0 = self.row0 * geo.mcu_height
        y1 = min(y0 + self.n_rows * geo.mcu_height, geo.height)
        return max(0, y1 - y0) * geo.width * 3


@dataclass
class Ticket:
    """Completion handle with the measured phase durations."""
    item: WorkItem
    enqueued_ns: int
    _future: object = None
    started_ns: int = 0
    write_done_ns: int = 0
    compute_done_ns: int = 0
    done_ns: int = 0

    def wait(self):
        self._future.result()
        return self

    @property
    def dispatch_ns(self) -> int:
        return self.started_ns - self.enqueued_ns

    @property
    def transfer_write_ns(self) -> int:
        return self.write_done_ns - self.started_ns

    @property
    def compute_ns(self) -> int:
        return self.compute_done_ns - self.write_done_ns

    @property
    def transfer_read_ns(self) -> int:
        return self.done_ns - self.compute_done_ns

    @property
    def busy_ns(self) -> int:
        """Write + compute + read: the device-side cost of the item."""
        return self.done_ns - self.started_ns


def _sleep_ns(ns: float) -> None:
    if ns > 0:
        time.sleep(ns / 1e9)


class Lane:
    """A worker pool executing WorkItems in submission order per worker."""

    def __init__(self, config: LaneConfig, name: str = "lane"):
        self.config = config
        self.name = name
        self._pool = ThreadPoolExecutor(max_workers=config.worker_count,
                                        thread_name_prefix=name)
        self._inflight: list[tuple[int, int]] = []
        self._lock = threading.Lock()
        self._closed = False

    def submit(self, item: WorkItem) -> Ticket:
        """Enqueue an item and return immediately.

        The item's rows must already be entropy-decoded, and its row range
        must not overlap any in-flight item on this lane.
        """
        if self._closed:
            raise LaneShutDown(f"lane {self.name} is shut down")
        span = (item.row0, item.row0 + item.n_rows)
        with self._lock:
            for lo, hi in self._inflight:
                if span[0] < hi and lo < span[1]:
                    raise ValueError(
                        f"rows [{span[0]}, {span[1]}) overlap in-flight [{lo}, {hi})")
            if item.n_rows > 0:
                self._inflight.append(span)
        ticket = Ticket(item=item, enqueued_ns=time.perf_counter_ns())
        ticket._future = self._pool.submit(self._run, ticket, span)
        return ticket

    def _run(self, ticket: Ticket, span: tuple[int, int]) -> None:
        item = ticket.item
        cfg = self.config
        ticket.started_ns = time.perf_counter_ns()
        try:
            if item.n_rows <= 0:
                ticket.write_done_ns = ticket.compute_done_ns = \
                    ticket.done_ns = ticket.started_ns
                return
            _sleep_ns(cfg.transfer_write_cost(item.write_bytes()))
            ticket.write_done_ns = time.perf_counter_ns()

            render_rows(item.coeffs, item.qtables, item.pixels,
                        item.row0, item.n_rows, fast=item.fast,
                        fused=item.fused)
            elapsed = time.perf_counter_ns() - ticket.write_done_ns
            _sleep_ns(elapsed * (cfg.throttle_factor - 1.0))
            ticket.compute_done_ns = time.perf_counter_ns()

            _sleep_ns(cfg.transfer_read_cost(item.read_bytes()))
            ticket.done_ns = time.perf_counter_ns()
        finally:
            if item.n_rows > 0:
                with self._lock:
                    self._inflight.remove(span)

    def shutdown(self) -> None:
        self._closed = True
        self._pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def wait_all(tickets) -> list[Ticket]:
    """Block until every ticket completes; re-raises worker failures."""
    return [t.wait() for t in tickets]


def host_stripes(n_rows: int, workers: int) -> list[tuple[int, int]]:
    """Split MCU rows into at most ``workers`` contiguous (row0, n) stripes."""
    if n_rows <= 0:
        return []
    workers = max(1, min(workers, n_rows))
    stripes = []
    base, extra = divmod(n_rows, workers)
    row = 0
    for i in range(workers):
        n = base + (1 if i < extra else 0)
        if n:
            stripes.append((row, n))
            row += n
    return stripes


@dataclass
class LanePair:
    """The host/accelerator pairing one decode runs on."""
    host: Lane
    accel: Lane
    meta: dict = field(default_factory=dict)

    def shutdown(self) -> None:
        self.host.shutdown()
        self.accel.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def default_host_workers() -> int:
    env = os.environ.get("HETJPEG_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def make_lanes(host_workers: int | None = None,
               host_throttle: float = 1.0,
               accel_workers: int = 1,
               accel_throttle: float = 1.0,
               transfer_latency_ns: float = 20_000.0,
               transfer_bytes_per_ns: float = 8.0) -> LanePair:
    """Build a host/accelerator lane pair.

    The accelerator defaults to one worker (an in-order device queue) with
    affine transfer costs; HETJPEG_THREADS overrides the host worker count.
    """
    host = Lane(LaneConfig(
        worker_count=host_workers or default_host_workers(),
        throttle_factor=host_throttle,
    ), name="host")
    accel = Lane(LaneConfig(
        worker_count=accel_workers,
        transfer_write_cost=affine_cost(transfer_latency_ns, transfer_bytes_per_ns),
        transfer_read_cost=affine_cost(transfer_latency_ns, transfer_bytes_per_ns),
        throttle_factor=accel_throttle,
    ), name="accel")
    return LanePair(host=host, accel=accel, meta={
        "host_workers": host.config.worker_count,
        "host_throttle": host_throttle,
        "accel_workers": accel_workers,
        "accel_throttle": accel_throttle,
        "transfer_latency_ns": transfer_latency_ns,
        "transfer_bytes_per_ns": transfer_bytes_per_ns,
    })

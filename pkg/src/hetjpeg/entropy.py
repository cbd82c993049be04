"""Sequential entropy decoding into the whole-image coefficient buffer.

Decoding is resumable at MCU-row granularity: an :class:`EntropyCursor`
carries the bit position, DC predictors and restart bookkeeping between
calls, so chunks of rows can be handed to the accelerator lane as soon as
they are complete.  Rows already decoded are immutable and may be read
concurrently; the cursor itself is owned by exactly one decoding thread.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels.constants import ZIGZAG
from .parser import ImageGeometry, ParsedJpeg, TableClass, build_huffman_table, geometry_of


def dezigzag(block_zz) -> np.ndarray:
    """Reorder 64 zigzag-scanned coefficients into natural row-major order."""
    block_zz = np.asarray(block_zz)
    if block_zz.shape != (64,):
        raise ValueError("expected 64 coefficients")
    out = np.empty_like(block_zz)
    out[ZIGZAG] = block_zz
    return out


@dataclass
class CoefficientBuffer:
    """Planar block storage: all Y blocks, then all Cb, then all Cr.

    Blocks are kept in raster order within each plane, coefficients in
    natural order (zigzag already undone), 16-bit signed.
    """
    geometry: ImageGeometry
    y_blocks: np.ndarray
    cb_blocks: np.ndarray
    cr_blocks: np.ndarray

    @property
    def y_blocks_per_mcu(self) -> int:
        return self.geometry.mcu_width // 8


def alloc_coefficients(geometry: ImageGeometry) -> CoefficientBuffer:
    n_chroma = geometry.total_mcus
    n_luma = n_chroma * (geometry.mcu_width // 8)
    return CoefficientBuffer(
        geometry=geometry,
        y_blocks=np.zeros((n_luma, 64), dtype=np.int16),
        cb_blocks=np.zeros((n_chroma, 64), dtype=np.int16),
        cr_blocks=np.zeros((n_chroma, 64), dtype=np.int16),
    )


def _pack_scan_tables(parsed: ParsedJpeg):
    """Flatten every referenced Huffman table into slot-indexed arrays.

    Slots 0-3 hold DC tables 0-3, slots 4-7 the AC tables.  Unreferenced
    slots keep maxcode = -1 everywhere, so decoding through them fails.
    """
    lut_sym = np.zeros((8, 256), dtype=np.uint8)
    lut_len = np.zeros((8, 256), dtype=np.uint8)
    mincode = np.zeros((8, 17), dtype=np.int32)
    maxcode = np.full((8, 17), -1, dtype=np.int32)
    valptr = np.zeros((8, 17), dtype=np.int32)
    symbols = np.zeros((8, 256), dtype=np.uint8)

    for spec in parsed.huffman_specs:
        slot = spec.table_class.value * 4 + spec.table_id
        table = build_huffman_table(spec)
        lut_sym[slot] = table.lut_symbol
        lut_len[slot] = table.lut_length
        mincode[slot] = table.mincode
        maxcode[slot] = table.maxcode
        valptr[slot] = table.valptr
        symbols[slot, :len(table.symbols)] = table.symbols

    comp_dc = np.array([c.dc_table_id for c in parsed.components], dtype=np.int32)
    comp_ac = np.array([4 + c.ac_table_id for c in parsed.components], dtype=np.int32)
    return lut_sym, lut_len, mincode, maxcode, valptr, symbols, comp_dc, comp_ac


# state vector layout (int64[8]); see also the kernel backends
_POS, _BITBUF, _BITS, _MCUS_SINCE_RST, _NEXT_RST, _PRED_Y, _PRED_CB, _PRED_CR = range(8)


@dataclass
class EntropyCursor:
    """Resumable scan position: bit cursor, DC predictors, row timings."""
    data: bytes
    geometry: ImageGeometry
    restart_interval: int
    scan: object                      # backend-prepared tables
    backend: object
    state: np.ndarray = field(default_factory=lambda: np.zeros(8, dtype=np.int64))
    rows_decoded: int = 0
    row_times_ns: list[int] = field(default_factory=list)

    @property
    def bit_position(self) -> int:
        return int(self.state[_POS]) * 8 - int(self.state[_BITS])

    @property
    def dc_predictors(self) -> tuple[int, int, int]:
        return (int(self.state[_PRED_Y]), int(self.state[_PRED_CB]),
                int(self.state[_PRED_CR]))


def new_cursor(parsed: ParsedJpeg, data: bytes | None = None) -> EntropyCursor:
    """Cursor at the start of the scan.

    ``data`` is the whole stream; defaults to the bytes the ParsedJpeg was
    parsed from.
    """
    if data is None:
        data = parsed.stream
    span = parsed.entropy_span
    backend = kernels.active()
    packed = _pack_scan_tables(parsed)
    return EntropyCursor(
        data=data[span.offset:span.offset + span.length],
        geometry=geometry_of(parsed),
        restart_interval=parsed.restart_interval,
        scan=backend.prepare_scan(*packed),
        backend=backend,
    )


def decode_rows(cursor: EntropyCursor, parsed: ParsedJpeg,
                out: CoefficientBuffer, n_rows: int) -> EntropyCursor:
    """Decode the next ``n_rows`` MCU rows into ``out``.

    Rows are decoded strictly in order; the wall time of each row is
    recorded on the cursor for the re-partitioning logic.
    """
    geometry = out.geometry
    if cursor.rows_decoded + n_rows > geometry.mcu_rows:
        raise ValueError(
            f"{n_rows} rows requested with only "
            f"{geometry.mcu_rows - cursor.rows_decoded} remaining")
    y_per_mcu = out.y_blocks_per_mcu
    for _ in range(n_rows):
        t0 = time.perf_counter_ns()
        cursor.backend.decode_mcu_rows(
            cursor.data, cursor.state, cursor.scan,
            out.y_blocks, out.cb_blocks, out.cr_blocks,
            cursor.rows_decoded, 1, geometry.mcus_per_row, y_per_mcu,
            cursor.restart_interval)
        cursor.row_times_ns.append(time.perf_counter_ns() - t0)
        cursor.rows_decoded += 1
    return cursor


def decode_all(parsed: ParsedJpeg,
               data: bytes | None = None) -> tuple[CoefficientBuffer, EntropyCursor]:
    """Convenience: decode the full scan in one pass."""
    cursor = new_cursor(parsed, data)
    buf = alloc_coefficients(cursor.geometry)
    decode_rows(cursor, parsed, buf, cursor.geometry.mcu_rows)
    return buf, cursor

"""Baseline JFIF/JPEG header parsing.

Walks the marker-segment structure of a baseline (SOF0) stream, collects
frame geometry, quantization and Huffman table specs, and locates the
entropy-coded scan data.  Only 3-component images with 4:4:4 or 4:2:2
chroma subsampling are accepted; everything else raises
``UnsupportedFeature`` up front so later stages never see it.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptSegment, InvalidTable, MissingMarker, UnsupportedFeature

# Marker bytes (second byte of 0xFFxx)
SOI = 0xD8
EOI = 0xD9
SOS = 0xDA
DQT = 0xDB
DNL = 0xDC
DRI = 0xDD
DHT = 0xC4
DAC = 0xCC
COM = 0xFE
SOF0 = 0xC0
RST0, RST7 = 0xD0, 0xD7

_SOF_MARKERS = set(range(0xC0, 0xD0)) - {DHT, 0xC8, DAC}
_STANDALONE = {SOI, EOI} | set(range(RST0, RST7 + 1))


class Subsampling(enum.Enum):
    S444 = "4:4:4"
    S422 = "4:2:2"


class TableClass(enum.Enum):
    DC = 0
    AC = 1


@dataclass(frozen=True)
class ComponentSpec:
    """One SOF/SOS component: sampling factors and table assignments."""
    component_id: int
    h_sampling: int
    v_sampling: int
    quant_table_id: int
    dc_table_id: int = 0
    ac_table_id: int = 0


@dataclass(frozen=True)
class HuffmanSpec:
    """DHT payload for one table: code counts per length and symbol list."""
    table_class: TableClass
    table_id: int
    counts: tuple[int, ...]   # 16 entries, codes per length 1..16
    symbols: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != 16:
            raise InvalidTable("expected 16 code-length counts")
        if sum(self.counts) != len(self.symbols):
            raise InvalidTable("symbol count does not match length counts")
        if len(self.symbols) > 256:
            raise InvalidTable("more than 256 symbols")


@dataclass(frozen=True)
class EntropySpan:
    """Byte range of the scan data (byte-stuffing and RST markers intact)."""
    offset: int
    length: int


@dataclass
class ParsedJpeg:
    width: int
    height: int
    subsampling: Subsampling
    components: tuple[ComponentSpec, ...]
    quant_tables: dict[int, tuple[int, ...]]      # id -> 64 values, zigzag order
    huffman_specs: tuple[HuffmanSpec, ...]
    entropy_span: EntropySpan
    file_size: int
    restart_interval: int = 0
    stream: bytes = field(default=b"", repr=False, compare=False)

    def huffman_spec(self, table_class: TableClass, table_id: int) -> HuffmanSpec:
        for spec in self.huffman_specs:
            if spec.table_class is table_class and spec.table_id == table_id:
                return spec
        raise MissingMarker(f"no {table_class.name} Huffman table {table_id}")


@dataclass(frozen=True)
class ImageGeometry:
    width: int
    height: int
    mcu_width: int
    mcu_height: int
    mcus_per_row: int
    mcu_rows: int

    @property
    def total_mcus(self) -> int:
        return self.mcus_per_row * self.mcu_rows


@dataclass(eq=False)
class HuffmanTable:
    """Canonical decode structure built from a HuffmanSpec.

    ``decode_map`` maps (code, length) to the symbol; the array members are
    the flat lookup structures the entropy decoder actually runs on: an
    8-bit lookahead table plus per-length min/max code bounds for longer
    codes.
    """
    decode_map: dict[tuple[int, int], int]
    lut_symbol: np.ndarray    # uint8[256]
    lut_length: np.ndarray    # uint8[256], 0 = not decodable in 8 bits
    mincode: np.ndarray       # int32[17], index = code length
    maxcode: np.ndarray       # int32[17], -1 where no codes of that length
    valptr: np.ndarray        # int32[17]
    symbols: np.ndarray       # uint8[n]


def build_huffman_table(spec: HuffmanSpec) -> HuffmanTable:
    """Assign canonical codes to ``spec`` and build the decode structures.

    Codes are assigned in ascending length, within a length in symbol
    order, each length starting at (previous start + previous count) << 1.
    """
    decode_map: dict[tuple[int, int], int] = {}
    mincode = np.full(17, 0, dtype=np.int32)
    maxcode = np.full(17, -1, dtype=np.int32)
    valptr = np.zeros(17, dtype=np.int32)
    lut_symbol = np.zeros(256, dtype=np.uint8)
    lut_length = np.zeros(256, dtype=np.uint8)

    code = 0
    k = 0
    for length in range(1, 17):
        count = spec.counts[length - 1]
        if code + count > (1 << length):
            raise InvalidTable(
                f"{count} codes of length {length} overflow the code space")
        if count:
            mincode[length] = code
            maxcode[length] = code + count - 1
            valptr[length] = k
            for _ in range(count):
                sym = spec.symbols[k]
                decode_map[(code, length)] = sym
                if length <= 8:
                    lo = code << (8 - length)
                    hi = lo + (1 << (8 - length))
                    lut_symbol[lo:hi] = sym
                    lut_length[lo:hi] = length
                code += 1
                k += 1
        code <<= 1

    return HuffmanTable(
        decode_map=decode_map,
        lut_symbol=lut_symbol,
        lut_length=lut_length,
        mincode=mincode,
        maxcode=maxcode,
        valptr=valptr,
        symbols=np.asarray(spec.symbols, dtype=np.uint8),
    )


def geometry_of(parsed: ParsedJpeg) -> ImageGeometry:
    """MCU grid for the image: 8x8 MCUs for 4:4:4, 16x8 for 4:2:2."""
    mcu_w = 16 if parsed.subsampling is Subsampling.S422 else 8
    mcu_h = 8
    return ImageGeometry(
        width=parsed.width,
        height=parsed.height,
        mcu_width=mcu_w,
        mcu_height=mcu_h,
        mcus_per_row=-(-parsed.width // mcu_w),
        mcu_rows=-(-parsed.height // mcu_h),
    )


class _Cursor:
    """Bounds-checked byte reader over the stream."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def u8(self) -> int:
        if self.pos >= len(self.data):
            raise CorruptSegment("unexpected end of stream")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def u16(self) -> int:
        if self.pos + 2 > len(self.data):
            raise CorruptSegment("unexpected end of stream")
        v = struct.unpack_from(">H", self.data, self.pos)[0]
        self.pos += 2
        return v

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptSegment("segment length exceeds remaining bytes")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk


def _classify_subsampling(components) -> Subsampling:
    factors = [(c.h_sampling, c.v_sampling) for c in components]
    if factors == [(1, 1), (1, 1), (1, 1)]:
        return Subsampling.S444
    if factors == [(2, 1), (1, 1), (1, 1)]:
        return Subsampling.S422
    raise UnsupportedFeature(f"unsupported subsampling factors {factors}")


def _parse_sof(payload: bytes) -> tuple[int, int, list[ComponentSpec]]:
    cur = _Cursor(payload)
    precision = cur.u8()
    if precision != 8:
        raise UnsupportedFeature(f"{precision}-bit sample precision")
    height = cur.u16()
    width = cur.u16()
    ncomp = cur.u8()
    if ncomp != 3:
        raise UnsupportedFeature(f"{ncomp} components (need 3: Y, Cb, Cr)")
    comps = []
    for _ in range(ncomp):
        cid = cur.u8()
        sampling = cur.u8()
        tq = cur.u8()
        comps.append(ComponentSpec(cid, sampling >> 4, sampling & 0xF, tq))
    if width < 1 or height < 1:
        raise CorruptSegment("zero image dimension")
    return width, height, comps


def _parse_dht(payload: bytes, out: list[HuffmanSpec]) -> None:
    cur = _Cursor(payload)
    while cur.pos < len(payload):
        tc_th = cur.u8()
        tc, th = tc_th >> 4, tc_th & 0xF
        if tc > 1 or th > 3:
            raise CorruptSegment(f"bad Huffman table id {tc}/{th}")
        counts = tuple(cur.take(16))
        symbols = tuple(cur.take(sum(counts)))
        out.append(HuffmanSpec(TableClass(tc), th, counts, symbols))


def _parse_dqt(payload: bytes, out: dict[int, tuple[int, ...]]) -> None:
    cur = _Cursor(payload)
    while cur.pos < len(payload):
        pq_tq = cur.u8()
        pq, tq = pq_tq >> 4, pq_tq & 0xF
        if pq != 0:
            raise UnsupportedFeature("16-bit quantization tables")
        if tq > 3:
            raise CorruptSegment(f"bad quantization table id {tq}")
        out[tq] = tuple(cur.take(64))


def _scan_entropy_end(data: bytes, start: int) -> int:
    """Index of the first non-restart marker after the scan data."""
    pos = start
    n = len(data)
    while pos < n - 1:
        if data[pos] != 0xFF:
            pos += 1
            continue
        nxt = data[pos + 1]
        if nxt == 0x00 or RST0 <= nxt <= RST7:
            pos += 2
            continue
        if nxt == 0xFF:       # fill byte
            pos += 1
            continue
        return pos
    raise CorruptSegment("stream ends inside entropy-coded data")


def parse_stream(data: bytes) -> ParsedJpeg:
    """Parse a baseline JPEG byte stream into a ParsedJpeg.

    Raises MissingMarker / UnsupportedFeature / CorruptSegment as described
    in the module docstring; APPn and COM segments are skipped.
    """
    if len(data) < 2 or data[0] != 0xFF or data[1] != SOI:
        raise MissingMarker("stream does not start with SOI")

    cur = _Cursor(data)
    cur.pos = 2
    frame: tuple[int, int, list[ComponentSpec]] | None = None
    quant_tables: dict[int, tuple[int, ...]] = {}
    huffman_specs: list[HuffmanSpec] = []
    restart_interval = 0
    span: EntropySpan | None = None

    while True:
        marker = cur.u8()
        if marker != 0xFF:
            raise CorruptSegment(f"expected marker, got byte {marker:#04x}")
        marker = cur.u8()
        while marker == 0xFF:  # optional fill bytes
            marker = cur.u8()

        if marker == EOI:
            break
        if marker in _STANDALONE:
            continue

        length = cur.u16()
        if length < 2:
            raise CorruptSegment(f"segment length {length} below header size")
        payload = cur.take(length - 2)

        if marker in _SOF_MARKERS:
            if marker == 0xC2:
                raise UnsupportedFeature("progressive JPEG (SOF2)")
            if marker >= 0xC9:
                raise UnsupportedFeature("arithmetic-coded JPEG")
            if marker != SOF0:
                raise UnsupportedFeature(f"non-baseline frame (SOF{marker - 0xC0})")
            frame = _parse_sof(payload)
        elif marker == DHT:
            _parse_dht(payload, huffman_specs)
        elif marker == DQT:
            _parse_dqt(payload, quant_tables)
        elif marker == DRI:
            if len(payload) < 2:
                raise CorruptSegment("DRI payload too short")
            restart_interval = struct.unpack_from(">H", payload)[0]
        elif marker == DAC:
            raise UnsupportedFeature("arithmetic-coded JPEG")
        elif marker == SOS:
            if span is not None:
                raise UnsupportedFeature("multiple scans")
            if frame is None:
                raise MissingMarker("SOS before SOF")
            frame = (frame[0], frame[1], _apply_scan(payload, frame[2]))
            end = _scan_entropy_end(data, cur.pos)
            span = EntropySpan(cur.pos, end - cur.pos)
            cur.pos = end
        # APPn / COM / DNL and anything else: skipped

    if frame is None:
        raise MissingMarker("no SOF segment")
    if span is None:
        raise MissingMarker("no SOS segment")

    width, height, comps = frame
    subsampling = _classify_subsampling(comps)
    parsed = ParsedJpeg(
        width=width,
        height=height,
        subsampling=subsampling,
        components=tuple(comps),
        quant_tables=quant_tables,
        huffman_specs=tuple(huffman_specs),
        entropy_span=span,
        file_size=len(data),
        restart_interval=restart_interval,
        stream=data,
    )
    _validate(parsed)
    return parsed


def _apply_scan(payload: bytes, comps: list[ComponentSpec]) -> list[ComponentSpec]:
    cur = _Cursor(payload)
    ncomp = cur.u8()
    if ncomp != len(comps):
        raise UnsupportedFeature("scan does not cover all components")
    by_id = {c.component_id: c for c in comps}
    out = list(comps)  # keep frame order regardless of scan order
    for _ in range(ncomp):
        cid = cur.u8()
        tables = cur.u8()
        if cid not in by_id:
            raise CorruptSegment(f"scan references unknown component {cid}")
        idx = next(i for i, c in enumerate(out) if c.component_id == cid)
        c = out[idx]
        out[idx] = ComponentSpec(c.component_id, c.h_sampling, c.v_sampling,
                                 c.quant_table_id, tables >> 4, tables & 0xF)
    ss, se, a = cur.u8(), cur.u8(), cur.u8()
    if (ss, se) != (0, 63) or a != 0:
        raise UnsupportedFeature("non-baseline spectral selection")
    return out


def _validate(parsed: ParsedJpeg) -> None:
    have = {(s.table_class, s.table_id) for s in parsed.huffman_specs}
    for c in parsed.components:
        if c.quant_table_id not in parsed.quant_tables:
            raise CorruptSegment(
                f"component {c.component_id} references missing "
                f"quantization table {c.quant_table_id}")
        for cls, tid in ((TableClass.DC, c.dc_table_id),
                         (TableClass.AC, c.ac_table_id)):
            if (cls, tid) not in have:
                raise CorruptSegment(
                    f"component {c.component_id} references missing "
                    f"{cls.name} Huffman table {tid}")


def serialize_headers(parsed: ParsedJpeg) -> bytes:
    """Re-emit the header segments (SOI through the SOS header).

    Appending the original entropy bytes and an EOI marker yields a stream
    that parses back to an equivalent ParsedJpeg.
    """
    out = bytearray(b"\xff" + bytes([SOI]))

    def segment(marker: int, payload: bytes) -> None:
        out.extend(b"\xff" + bytes([marker]))
        out.extend(struct.pack(">H", len(payload) + 2))
        out.extend(payload)

    for tq in sorted(parsed.quant_tables):
        segment(DQT, bytes([tq]) + bytes(parsed.quant_tables[tq]))

    sof = bytearray([8])
    sof.extend(struct.pack(">HH", parsed.height, parsed.width))
    sof.append(len(parsed.components))
    for c in parsed.components:
        sof.extend([c.component_id, (c.h_sampling << 4) | c.v_sampling,
                    c.quant_table_id])
    segment(SOF0, bytes(sof))

    for spec in parsed.huffman_specs:
        segment(DHT, bytes([(spec.table_class.value << 4) | spec.table_id])
                + bytes(spec.counts) + bytes(spec.symbols))

    if parsed.restart_interval:
        segment(DRI, struct.pack(">H", parsed.restart_interval))

    sos = bytearray([len(parsed.components)])
    for c in parsed.components:
        sos.extend([c.component_id, (c.dc_table_id << 4) | c.ac_table_id])
    sos.extend([0, 63, 0])
    segment(SOS, bytes(sos))
    return bytes(out)

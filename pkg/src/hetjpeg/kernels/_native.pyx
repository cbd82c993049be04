# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend.

Implements the same batch entry points as ``fallback`` (prepare_scan,
decode_mcu_rows, render_rows_444, render_rows_422) with scalar loops that
perform the identical floating-point operation sequence, so both backends
produce bit-for-bit the same pixels and coefficients.
"""
import numpy as np

from libc.math cimport floor

from ..errors import BadCode, BitstreamExhausted, MarkerInScan
from . import constants

NAME = "native"

cdef enum:
    ERR_OK = 0
    ERR_EXHAUSTED = 1
    ERR_BADCODE = 2
    ERR_MARKER = 3
    ERR_RST_SEQ = 4

cdef double IDCT_T[8][8]
cdef double AAN_PRE[64]
cdef int ZZ[64]
cdef double SQRT2 = 0.0
cdef double ROT = 0.0
cdef double ROT_P = 0.0
cdef double ROT_M = 0.0
cdef double W_CR_R = 0.0
cdef double W_CB_G = 0.0
cdef double W_CR_G = 0.0
cdef double W_CB_B = 0.0


def _load_constants():
    global SQRT2, ROT, ROT_P, ROT_M, W_CR_R, W_CB_G, W_CR_G, W_CB_B
    basis = constants.IDCT_BASIS
    pre = constants.AAN_PRESCALE
    zz = constants.ZIGZAG
    for u in range(8):
        for x in range(8):
            IDCT_T[u][x] = basis[u, x]
            AAN_PRE[u * 8 + x] = pre[u, x]
    for k in range(64):
        ZZ[k] = zz[k]
    SQRT2 = constants.AAN_SQRT2
    ROT = constants.AAN_ROT
    ROT_P = constants.AAN_ROT_P
    ROT_M = constants.AAN_ROT_M
    W_CR_R = constants.CR_TO_R
    W_CB_G = constants.CB_TO_G
    W_CR_G = constants.CR_TO_G
    W_CB_B = constants.CB_TO_B


_load_constants()


# ---------------------------------------------------------------------------
# bit reader
# ---------------------------------------------------------------------------

cdef struct BitReader:
    const unsigned char *data
    Py_ssize_t n
    Py_ssize_t pos
    unsigned long long buf
    int bits


cdef inline void _refill(BitReader *br, int need) nogil:
    cdef unsigned char b
    while br.bits < need:
        if br.pos >= br.n:
            return
        b = br.data[br.pos]
        if b == 0xFF:
            if br.pos + 1 < br.n and br.data[br.pos + 1] == 0x00:
                br.pos += 2
            else:
                return  # marker: stop delivering bits
        else:
            br.pos += 1
        br.buf = (br.buf << 8) | b
        br.bits += 8


cdef inline int _take(BitReader *br, int k, int *err) nogil:
    cdef int v
    if k == 0:
        return 0
    _refill(br, k)
    if br.bits < k:
        err[0] = ERR_EXHAUSTED
        return 0
    br.bits -= k
    v = <int>((br.buf >> br.bits) & ((<unsigned long long>1 << k) - 1))
    br.buf &= (<unsigned long long>1 << br.bits) - 1
    return v


cdef inline int _huffdecode(BitReader *br,
                            const unsigned char *lut_sym,
                            const unsigned char *lut_len,
                            const int *mincode, const int *maxcode,
                            const int *valptr, const unsigned char *symbols,
                            int *err) nogil:
    cdef unsigned int v
    cdef int pad, length, code, l
    _refill(br, 8)
    if br.bits >= 8:
        v = <unsigned int>((br.buf >> (br.bits - 8)) & 0xFF)
    else:
        pad = 8 - br.bits
        v = <unsigned int>(((br.buf << pad) | ((<unsigned long long>1 << pad) - 1)) & 0xFF)
    length = lut_len[v]
    if length != 0 and length <= br.bits:
        br.bits -= length
        br.buf &= (<unsigned long long>1 << br.bits) - 1
        return lut_sym[v]
    code = 0
    for l in range(1, 17):
        code = (code << 1) | _take(br, 1, err)
        if err[0] != ERR_OK:
            return 0
        if maxcode[l] >= 0 and code <= maxcode[l]:
            return symbols[valptr[l] + code - mincode[l]]
    err[0] = ERR_BADCODE
    return 0


cdef inline int _extend(int v, int t) nogil:
    if v < (1 << (t - 1)):
        return v - ((1 << t) - 1)
    return v


cdef inline int _decode_block(BitReader *br,
                              const unsigned char *dc_lut_sym, const unsigned char *dc_lut_len,
                              const int *dc_mincode, const int *dc_maxcode,
                              const int *dc_valptr, const unsigned char *dc_symbols,
                              const unsigned char *ac_lut_sym, const unsigned char *ac_lut_len,
                              const int *ac_mincode, const int *ac_maxcode,
                              const int *ac_valptr, const unsigned char *ac_symbols,
                              short *out, long long *pred) nogil:
    cdef int err = ERR_OK
    cdef int t, diff, k, rs, r, s
    t = _huffdecode(br, dc_lut_sym, dc_lut_len, dc_mincode, dc_maxcode,
                    dc_valptr, dc_symbols, &err)
    if err != ERR_OK:
        return err
    if t > 15:
        return ERR_BADCODE
    diff = 0
    if t:
        diff = _extend(_take(br, t, &err), t)
        if err != ERR_OK:
            return err
    pred[0] += diff
    out[0] = <short>pred[0]
    k = 1
    while k < 64:
        rs = _huffdecode(br, ac_lut_sym, ac_lut_len, ac_mincode, ac_maxcode,
                         ac_valptr, ac_symbols, &err)
        if err != ERR_OK:
            return err
        r = rs >> 4
        s = rs & 0x0F
        if s == 0:
            if r == 15:
                k += 16
                continue
            break  # end of block
        k += r
        if k > 63:
            return ERR_BADCODE
        out[ZZ[k]] = <short>_extend(_take(br, s, &err), s)
        if err != ERR_OK:
            return err
        k += 1
    return ERR_OK


def prepare_scan(lut_sym, lut_len, mincode, maxcode, valptr, symbols,
                 comp_dc, comp_ac):
    """Keep the packed arrays as-is (the decoder indexes them directly)."""
    return tuple(np.ascontiguousarray(a) for a in
                 (lut_sym, lut_len, mincode, maxcode, valptr, symbols,
                  comp_dc, comp_ac))


def decode_mcu_rows(data, state, scan, y_out, cb_out, cr_out,
                    row0, n_rows, mcus_per_row, y_per_mcu, restart_interval):
    """See kernels.fallback.decode_mcu_rows; identical contract."""
    cdef const unsigned char[::1] dv = data
    cdef long long[::1] st = state
    cdef const unsigned char[:, ::1] lsym = scan[0]
    cdef const unsigned char[:, ::1] llen = scan[1]
    cdef const int[:, ::1] minc = scan[2]
    cdef const int[:, ::1] maxc = scan[3]
    cdef const int[:, ::1] vptr = scan[4]
    cdef const unsigned char[:, ::1] syms = scan[5]
    cdef const int[::1] cdc = scan[6]
    cdef const int[::1] cac = scan[7]
    cdef short[:, ::1] yv = y_out
    cdef short[:, ::1] cbv = cb_out
    cdef short[:, ::1] crv = cr_out

    cdef BitReader br
    br.data = &dv[0] if dv.shape[0] else NULL
    br.n = dv.shape[0]
    br.pos = st[0]
    br.buf = <unsigned long long>st[1]
    br.bits = <int>st[2]

    cdef long long mcus_since = st[3]
    cdef long long next_rst = st[4]
    cdef long long preds[3]
    preds[0] = st[5]
    preds[1] = st[6]
    preds[2] = st[7]

    cdef int c_row0 = row0, c_rows = n_rows, c_mcus = mcus_per_row
    cdef int c_ypm = y_per_mcu, c_rst = restart_interval
    cdef int err = ERR_OK
    cdef int row, m, j, comp
    cdef Py_ssize_t mcu
    cdef unsigned char marker

    with nogil:
        for row in range(c_row0, c_row0 + c_rows):
            if err != ERR_OK:
                break
            for m in range(c_mcus):
                if c_rst != 0 and mcus_since == c_rst:
                    # byte-align, consume RSTn, reset predictors
                    br.buf = 0
                    br.bits = 0
                    if br.pos + 1 >= br.n or br.data[br.pos] != 0xFF:
                        err = ERR_EXHAUSTED
                        break
                    marker = br.data[br.pos + 1]
                    if marker < 0xD0 or marker > 0xD7:
                        err = ERR_MARKER
                        break
                    if marker - 0xD0 != next_rst:
                        err = ERR_RST_SEQ
                        break
                    br.pos += 2
                    next_rst = (next_rst + 1) & 7
                    preds[0] = 0
                    preds[1] = 0
                    preds[2] = 0
                    mcus_since = 0
                mcu = (<Py_ssize_t>row) * c_mcus + m
                for j in range(c_ypm):
                    err = _decode_block(
                        &br,
                        &lsym[cdc[0], 0], &llen[cdc[0], 0], &minc[cdc[0], 0],
                        &maxc[cdc[0], 0], &vptr[cdc[0], 0], &syms[cdc[0], 0],
                        &lsym[cac[0], 0], &llen[cac[0], 0], &minc[cac[0], 0],
                        &maxc[cac[0], 0], &vptr[cac[0], 0], &syms[cac[0], 0],
                        &yv[mcu * c_ypm + j, 0], &preds[0])
                    if err != ERR_OK:
                        break
                if err == ERR_OK:
                    err = _decode_block(
                        &br,
                        &lsym[cdc[1], 0], &llen[cdc[1], 0], &minc[cdc[1], 0],
                        &maxc[cdc[1], 0], &vptr[cdc[1], 0], &syms[cdc[1], 0],
                        &lsym[cac[1], 0], &llen[cac[1], 0], &minc[cac[1], 0],
                        &maxc[cac[1], 0], &vptr[cac[1], 0], &syms[cac[1], 0],
                        &cbv[mcu, 0], &preds[1])
                if err == ERR_OK:
                    err = _decode_block(
                        &br,
                        &lsym[cdc[2], 0], &llen[cdc[2], 0], &minc[cdc[2], 0],
                        &maxc[cdc[2], 0], &vptr[cdc[2], 0], &syms[cdc[2], 0],
                        &lsym[cac[2], 0], &llen[cac[2], 0], &minc[cac[2], 0],
                        &maxc[cac[2], 0], &vptr[cac[2], 0], &syms[cac[2], 0],
                        &crv[mcu, 0], &preds[2])
                if err != ERR_OK:
                    break
                mcus_since += 1

    st[0] = br.pos
    st[1] = <long long>br.buf
    st[2] = br.bits
    st[3] = mcus_since
    st[4] = next_rst
    st[5] = preds[0]
    st[6] = preds[1]
    st[7] = preds[2]

    if err == ERR_EXHAUSTED:
        raise BitstreamExhausted("ran out of entropy-coded bits")
    if err == ERR_BADCODE:
        raise BadCode("no Huffman symbol matches within 16 bits")
    if err == ERR_MARKER:
        raise MarkerInScan("non-restart marker inside the scan")
    if err == ERR_RST_SEQ:
        raise MarkerInScan("restart marker out of sequence")


# ---------------------------------------------------------------------------
# block transforms
# ---------------------------------------------------------------------------

cdef inline unsigned char _round_u8(double x) nogil:
    x = floor(x + 0.5)
    if x < 0.0:
        return 0
    if x > 255.0:
        return 255
    return <unsigned char>x


cdef inline void _aan_1d(const double *x, int xs, double *y, int ys) nogil:
    cdef double d0 = x[0], d1 = x[xs], d2 = x[2 * xs], d3 = x[3 * xs]
    cdef double d4 = x[4 * xs], d5 = x[5 * xs], d6 = x[6 * xs], d7 = x[7 * xs]
    cdef double tmp10 = d0 + d4
    cdef double tmp11 = d0 - d4
    cdef double tmp13 = d2 + d6
    cdef double tmp12 = (d2 - d6) * SQRT2 - tmp13
    cdef double e0 = tmp10 + tmp13
    cdef double e3 = tmp10 - tmp13
    cdef double e1 = tmp11 + tmp12
    cdef double e2 = tmp11 - tmp12
    cdef double z13 = d5 + d3
    cdef double z10 = d5 - d3
    cdef double z11 = d1 + d7
    cdef double z12 = d1 - d7
    cdef double t7 = z11 + z13
    cdef double t11 = (z11 - z13) * SQRT2
    cdef double z5 = (z10 + z12) * ROT
    cdef double t10 = ROT_P * z12 - z5
    cdef double t12 = -ROT_M * z10 + z5
    cdef double t6 = t12 - t7
    cdef double t5 = t11 - t6
    cdef double t4 = t10 + t5
    y[0] = e0 + t7
    y[ys] = e1 + t6
    y[2 * ys] = e2 + t5
    y[3 * ys] = e3 - t4
    y[4 * ys] = e3 + t4
    y[5 * ys] = e2 - t5
    y[6 * ys] = e1 - t6
    y[7 * ys] = e0 - t7


cdef inline void _direct_1d(const double *x, int xs, double *y, int ys) nogil:
    cdef int k, r
    cdef double acc
    for k in range(8):
        acc = 0.0
        for r in range(8):
            acc += IDCT_T[r][k] * x[r * xs]
        y[k * ys] = acc


cdef inline void _idct_block(const short *coeffs, const int *q,
                             unsigned char *out, int out_stride,
                             bint fast) nogil:
    """Dequantize + inverse transform one block; out gets 8 rows of 8."""
    cdef double d[64]
    cdef double g[64]
    cdef double s[64]
    cdef int i, c, r
    if fast:
        for i in range(64):
            d[i] = (<double>(coeffs[i] * q[i])) * AAN_PRE[i]
        for c in range(8):
            _aan_1d(&d[c], 8, &g[c], 8)
        for r in range(8):
            _aan_1d(&g[8 * r], 1, &s[8 * r], 1)
    else:
        for i in range(64):
            d[i] = <double>(coeffs[i] * q[i])
        for c in range(8):
            _direct_1d(&d[c], 8, &g[c], 8)
        for r in range(8):
            _direct_1d(&g[8 * r], 1, &s[8 * r], 1)
    for r in range(8):
        for c in range(8):
            out[r * out_stride + c] = _round_u8(s[8 * r + c] + 128.0)


cdef inline void _color_px(double y, double cb, double cr,
                           unsigned char *rgb) nogil:
    rgb[0] = _round_u8(y + W_CR_R * (cr - 128.0))
    rgb[1] = _round_u8(y - W_CB_G * (cb - 128.0) - W_CR_G * (cr - 128.0))
    rgb[2] = _round_u8(y + W_CB_B * (cb - 128.0))


cdef inline int _imin(int a, int b) nogil:
    return a if a < b else b


cdef void _render_row_444(const short *yb, const short *cbb, const short *crb,
                          const int *qy, const int *qcb, const int *qcr,
                          unsigned char *rgb, int width, int height,
                          int mcus, int mcu_row, bint fast, bint fused,
                          unsigned char *ys, unsigned char *cbs,
                          unsigned char *crs) nogil:
    """One MCU row at 4:4:4.  ys/cbs/crs are (8 x mcus*8) scratch stripes."""
    cdef int stripe_w = mcus * 8
    cdef int y0 = mcu_row * 8
    cdef int max_by = _imin(8, height - y0)
    cdef int m, by, bx, xx
    cdef unsigned char smp[3][64]
    cdef unsigned char *px

    if fused:
        for m in range(mcus):
            _idct_block(yb + 64 * m, qy, &smp[0][0], 8, fast)
            _idct_block(cbb + 64 * m, qcb, &smp[1][0], 8, fast)
            _idct_block(crb + 64 * m, qcr, &smp[2][0], 8, fast)
            for by in range(max_by):
                px = rgb + ((<Py_ssize_t>(y0 + by)) * width) * 3
                for bx in range(8):
                    xx = m * 8 + bx
                    if xx >= width:
                        break
                    _color_px(smp[0][by * 8 + bx], smp[1][by * 8 + bx],
                              smp[2][by * 8 + bx], px + 3 * xx)
    else:
        for m in range(mcus):
            _idct_block(yb + 64 * m, qy, ys + 8 * m, stripe_w, fast)
            _idct_block(cbb + 64 * m, qcb, cbs + 8 * m, stripe_w, fast)
            _idct_block(crb + 64 * m, qcr, crs + 8 * m, stripe_w, fast)
        for by in range(max_by):
            px = rgb + ((<Py_ssize_t>(y0 + by)) * width) * 3
            for xx in range(_imin(stripe_w, width)):
                _color_px(ys[by * stripe_w + xx], cbs[by * stripe_w + xx],
                          crs[by * stripe_w + xx], px + 3 * xx)


cdef void _render_row_422(const short *yb, const short *cbb, const short *crb,
                          const int *qy, const int *qcb, const int *qcr,
                          unsigned char *rgb, int width, int height,
                          int mcus, int mcu_row, bint fast, bint fused,
                          unsigned char *ys, unsigned char *cbs,
                          unsigned char *crs) nogil:
    """One MCU row at 4:2:2.

    Chroma is transformed into row stripes first (upsampling needs the
    neighbor samples), then either fused upsample+color per pixel row or,
    unfused, an upsampled intermediate is materialized per row.
    """
    cdef int cw = mcus * 8          # chroma stripe width
    cdef int yw = mcus * 16         # luma stripe width
    cdef int y0 = mcu_row * 8
    cdef int max_by = _imin(8, height - y0)
    cdef int m, by, xx, k
    cdef int cb3, cr3, cbp, crp, cbn, crn
    cdef int up_cb, up_cr
    cdef unsigned char *px
    cdef const unsigned char *cbrow
    cdef const unsigned char *crrow

    for m in range(mcus):
        _idct_block(yb + 64 * (2 * m), qy, ys + 16 * m, yw, fast)
        _idct_block(yb + 64 * (2 * m + 1), qy, ys + 16 * m + 8, yw, fast)
        _idct_block(cbb + 64 * m, qcb, cbs + 8 * m, cw, fast)
        _idct_block(crb + 64 * m, qcr, crs + 8 * m, cw, fast)

    for by in range(max_by):
        px = rgb + ((<Py_ssize_t>(y0 + by)) * width) * 3
        cbrow = cbs + by * cw
        crrow = crs + by * cw
        for k in range(cw):
            cb3 = 3 * cbrow[k]
            cr3 = 3 * crrow[k]
            cbp = cbrow[k - 1] if k > 0 else cbrow[0]
            crp = crrow[k - 1] if k > 0 else crrow[0]
            cbn = cbrow[k + 1] if k + 1 < cw else cbrow[cw - 1]
            crn = crrow[k + 1] if k + 1 < cw else crrow[cw - 1]
            xx = 2 * k
            if xx < width:
                up_cb = (cb3 + cbp + 1) >> 2
                up_cr = (cr3 + crp + 1) >> 2
                _color_px(ys[by * yw + xx], up_cb, up_cr, px + 3 * xx)
            xx += 1
            if xx < width:
                up_cb = (cb3 + cbn + 2) >> 2
                up_cr = (cr3 + crn + 2) >> 2
                _color_px(ys[by * yw + xx], up_cb, up_cr, px + 3 * xx)


def _render_rows(y_blocks, cb_blocks, cr_blocks, qtables, rgb,
                 width, height, mcus_per_row, row0, n_rows,
                 fast, fused, bint is422):
    cdef const short[:, ::1] yv = y_blocks
    cdef const short[:, ::1] cbv = cb_blocks
    cdef const short[:, ::1] crv = cr_blocks
    cdef const int[:, ::1] qv = np.ascontiguousarray(qtables, dtype=np.int32)
    cdef unsigned char[:, :, ::1] rgbv = rgb
    cdef int c_w = width, c_h = height, c_mcus = mcus_per_row
    cdef int c_row0 = row0, c_rows = n_rows
    cdef bint c_fast = fast, c_fused = fused
    cdef int ypm = 2 if is422 else 1
    cdef int row

    scratch = np.empty((3, 8 * c_mcus * 16), dtype=np.uint8)
    cdef unsigned char[:, ::1] sv = scratch
    cdef unsigned char *ys = &sv[0, 0]
    cdef unsigned char *cbs = &sv[1, 0]
    cdef unsigned char *crs = &sv[2, 0]
    cdef unsigned char *rgbp = &rgbv[0, 0, 0]

    with nogil:
        for row in range(c_row0, c_row0 + c_rows):
            if is422:
                _render_row_422(&yv[(<Py_ssize_t>row) * c_mcus * ypm, 0],
                                &cbv[(<Py_ssize_t>row) * c_mcus, 0],
                                &crv[(<Py_ssize_t>row) * c_mcus, 0],
                                &qv[0, 0], &qv[1, 0], &qv[2, 0],
                                rgbp, c_w, c_h, c_mcus, row,
                                c_fast, c_fused, ys, cbs, crs)
            else:
                _render_row_444(&yv[(<Py_ssize_t>row) * c_mcus, 0],
                                &cbv[(<Py_ssize_t>row) * c_mcus, 0],
                                &crv[(<Py_ssize_t>row) * c_mcus, 0],
                                &qv[0, 0], &qv[1, 0], &qv[2, 0],
                                rgbp, c_w, c_h, c_mcus, row,
                                c_fast, c_fused, ys, cbs, crs)


def render_rows_444(y_blocks, cb_blocks, cr_blocks, qtables, rgb,
                    width, height, mcus_per_row, row0, n_rows,
                    fast=True, fused=True):
    """See kernels.fallback.render_rows_444; identical contract."""
    if n_rows <= 0:
        return
    _render_rows(y_blocks, cb_blocks, cr_blocks, qtables, rgb,
                 width, height, mcus_per_row, row0, n_rows, fast, fused, False)


def render_rows_422(y_blocks, cb_blocks, cr_blocks, qtables, rgb,
                    width, height, mcus_per_row, row0, n_rows,
                    fast=True, fused=True):
    """See kernels.fallback.render_rows_422; identical contract."""
    if n_rows <= 0:
        return
    _render_rows(y_blocks, cb_blocks, cr_blocks, qtables, rgb,
                 width, height, mcus_per_row, row0, n_rows, fast, fused, True)

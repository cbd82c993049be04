"""Run-time host/accelerator row partitioning.

The split point x (pixel rows kept on the host) is the root of a balance
function built from the fitted cost models; Newton's method with symbolic
polynomial derivatives finds it, falling back to bisection when the
derivative vanishes.  Three balances are solved:

  simple (SPS):     f(x) = T_disp(w, h-x) + P_CPU(w, x) - P_GPU(w, h-x)
  pipelined (PPS):  f(x) = T_Huff(w, h-c, d) + P_CPU(w, x)
                           + T_disp(w, h-x) - P_GPU(w, h-x)
  re-partition:     f(x') = T_disp(w, h'-x') + T_Huff(w, h', d')
                           + P_CPU(w, x') - P_GPU(w, h'-x') - P_prevGPU

The accelerator takes whole MCU rows from the top of the image and the
host the remainder at the bottom, so x is rounded to the MCU-row grid
(a ragged last row stays on the host side and row conservation is exact).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ZeroEstimate
from .perf_model import (
    DeviceProfile,
    poly1d_eval,
    estimate_huffman_time,
    eval_horner,
    poly1d_deriv,
)

MCU_ROW_HEIGHT = 8
NEWTON_MAX_ITERATIONS = 32
NEWTON_ROW_TOLERANCE = 1.0
DERIVATIVE_EPSILON = 1e-12


class Scheme(enum.Enum):
    SPS = "sps"
    PPS = "pps"


@dataclass(frozen=True)
class Predicted:
    t_cpu: float   # modeled CPU-side balance term, ns
    t_gpu: float   # modeled accelerator busy time, ns
    t_huff: float  # modeled whole-image entropy decode, ns


@dataclass(frozen=True)
class PartitionPlan:
    """Row split for one decode: accelerator takes the top of the image."""
    scheme: Scheme
    h: int                 # pixel rows covered by this plan
    x_cpu_rows: int        # pixel rows for the host (bottom of the image)
    accel_rows: int        # pixel rows for the accelerator (top)
    accel_mcu_rows: int
    cpu_mcu_rows: int
    chunk_rows: int        # pixel rows per accelerator chunk
    predicted: Predicted

    def __post_init__(self):
        assert self.x_cpu_rows + self.accel_rows == self.h


@dataclass
class RepartitionState:
    """Inputs to the single mid-decode re-partition of a pipelined run."""
    estimated_total_huff: float  # model estimate for the whole image, ns
    actual_huff_so_far: float    # measured entropy time of decoded rows, ns
    rows_remaining: int          # h': pixel rows not yet entropy-decoded
    h_total: int
    d: float                     # density the original plan was built on
    prev_gpu_remaining: float    # P_prevGPU: est. accelerator backlog, ns
    d_updated: float | None = None


def update_density(state: RepartitionState) -> float:
    """Corrected density d' from the observed entropy-decode progress.

    d' = (remaining Huffman time ratio) / (remaining height ratio) * d.
    A remainder that is decoding slower than the uniform-density estimate
    yields d' > d, shifting work toward the accelerator.
    """
    if state.estimated_total_huff <= 0:
        raise ZeroEstimate("estimated total Huffman time must be positive")
    if state.h_total <= 0 or state.rows_remaining <= 0:
        raise ZeroEstimate("height ratio must be positive")
    remaining = max(0.0, state.estimated_total_huff - state.actual_huff_so_far)
    time_ratio = remaining / state.estimated_total_huff
    height_ratio = state.rows_remaining / state.h_total
    d_new = time_ratio / height_ratio * state.d
    state.d_updated = max(d_new, 1e-12)
    return state.d_updated


def _bisect(f, lo: float, hi: float) -> float:
    flo = f(lo)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or hi - lo < NEWTON_ROW_TOLERANCE:
            return mid
        if (flo < 0) == (fm < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _solve_balance(f, fprime, h: float) -> float:
    """Root of f on [0, h] in pixel rows; boundary when f has no sign change."""
    f0, fh = f(0.0), f(float(h))
    if f0 == 0.0:
        return 0.0
    if fh == 0.0:
        return float(h)
    if (f0 > 0) == (fh > 0):
        # one side is cheaper for every split: hand it all the rows.
        # f > 0 means the CPU side is always slower, so x = 0.
        return 0.0 if f0 > 0 else float(h)
    x = h / 2.0
    for _ in range(NEWTON_MAX_ITERATIONS):
        d = fprime(x)
        if abs(d) < DERIVATIVE_EPSILON:
            return _bisect(f, 0.0, float(h))
        step = f(x) / d
        x_new = min(max(x - step, 0.0), float(h))
        if abs(x_new - x) < NEWTON_ROW_TOLERANCE:
            return x_new
        x = x_new
    return x


def _to_plan(scheme: Scheme, h: int, x_root: float, chunk_rows: int,
             predicted_fn) -> PartitionPlan:
    total_mcu = -(-h // MCU_ROW_HEIGHT)
    accel_mcu = int(round((h - x_root) / MCU_ROW_HEIGHT))
    accel_mcu = min(max(accel_mcu, 0), total_mcu)
    accel_px = min(accel_mcu * MCU_ROW_HEIGHT, h)
    x_px = h - accel_px
    return PartitionPlan(
        scheme=scheme,
        h=h,
        x_cpu_rows=x_px,
        accel_rows=accel_px,
        accel_mcu_rows=accel_mcu,
        cpu_mcu_rows=total_mcu - accel_mcu,
        chunk_rows=chunk_rows,
        predicted=predicted_fn(float(x_px)),
    )


def _restricted(profile: DeviceProfile, w: float):
    pc = profile.p_cpu.restrict(w)
    pg = profile.p_gpu.restrict(w)
    td = profile.t_disp.restrict(w)
    return (pc, poly1d_deriv(pc)), (pg, poly1d_deriv(pg)), (td, poly1d_deriv(td))


def solve_sps(profile: DeviceProfile, w: int, h: int, d: float) -> PartitionPlan:
    """Split for the simple scheme: balance the post-entropy phases only."""
    (pc, pcd), (pg, pgd), (td, tdd) = _restricted(profile, w)

    def f(x):
        return (poly1d_eval(td, h - x) + poly1d_eval(pc, x)
                - poly1d_eval(pg, h - x))

    def fprime(x):
        return (-poly1d_eval(tdd, h - x) + poly1d_eval(pcd, x)
                + poly1d_eval(pgd, h - x))

    t_huff = estimate_huffman_time(profile, w, h, d)

    def predicted(x):
        return Predicted(
            t_cpu=profile.predict_t_disp(w, h - x) + profile.predict_p_cpu(w, x),
            t_gpu=profile.predict_p_gpu(w, h - x),
            t_huff=t_huff,
        )

    return _to_plan(Scheme.SPS, h, _solve_balance(f, fprime, h),
                    min(profile.chunk_rows, h) if profile.chunk_rows else h,
                    predicted)


def solve_pps(profile: DeviceProfile, w: int, h: int, d: float) -> PartitionPlan:
    """Split for the pipelined scheme.

    The accelerator side overlaps entropy decoding, so the balance adds the
    entropy time of everything after the first chunk to the CPU side.
    """
    (pc, pcd), (pg, pgd), (td, tdd) = _restricted(profile, w)
    c = min(profile.chunk_rows, h) if profile.chunk_rows else h
    rate = max(0.0, eval_horner(profile.t_huff_per_pixel, (d,)))
    huff_tail = rate * w * max(0, h - c)

    def f(x):
        return (huff_tail + poly1d_eval(pc, x) + poly1d_eval(td, h - x)
                - poly1d_eval(pg, h - x))

    def fprime(x):
        return (poly1d_eval(pcd, x) - poly1d_eval(tdd, h - x)
                + poly1d_eval(pgd, h - x))

    t_huff = estimate_huffman_time(profile, w, h, d)

    def predicted(x):
        return Predicted(
            t_cpu=huff_tail + profile.predict_p_cpu(w, x)
                  + profile.predict_t_disp(w, h - x),
            t_gpu=profile.predict_p_gpu(w, h - x),
            t_huff=t_huff,
        )

    return _to_plan(Scheme.PPS, h, _solve_balance(f, fprime, h), c, predicted)


def repartition(state: RepartitionState, profile: DeviceProfile,
                w: int) -> PartitionPlan:
    """Re-split the remaining rows once, before the last accelerator chunk.

    Uses the corrected density and charges the accelerator side with its
    estimated outstanding work (P_prevGPU).
    """
    d_new = update_density(state)
    h_rem = state.rows_remaining
    (pc, pcd), (pg, pgd), (td, tdd) = _restricted(profile, w)
    rate = max(0.0, eval_horner(profile.t_huff_per_pixel, (d_new,)))
    huff_rem = rate * w * h_rem
    prev = max(0.0, state.prev_gpu_remaining)

    def f(x):
        return (poly1d_eval(td, h_rem - x) + huff_rem + poly1d_eval(pc, x)
                - poly1d_eval(pg, h_rem - x) - prev)

    def fprime(x):
        return (-poly1d_eval(tdd, h_rem - x) + poly1d_eval(pcd, x)
                + poly1d_eval(pgd, h_rem - x))

    def predicted(x):
        return Predicted(
            t_cpu=profile.predict_t_disp(w, h_rem - x) + huff_rem
                  + profile.predict_p_cpu(w, x),
            t_gpu=profile.predict_p_gpu(w, h_rem - x) + prev,
            t_huff=huff_rem,
        )

    chunk = min(profile.chunk_rows, h_rem) if profile.chunk_rows else h_rem
    return _to_plan(Scheme.PPS, h_rem, _solve_balance(f, fprime, h_rem),
                    chunk, predicted)

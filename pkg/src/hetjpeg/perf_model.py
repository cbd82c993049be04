"""Offline profiling and polynomial cost models.

The decoder's phases are modeled by least-squares polynomial fits: the
parallel phase on each lane and the dispatch overhead as bivariate
polynomials of image width and height, and the per-pixel entropy-decoding
rate as a univariate polynomial of entropy density (compressed bytes per
pixel).  Candidate degrees 1..7 are compared with the Akaike information
criterion, AIC = n*ln(RSS/n) + 2k with k the coefficient count.  Models
are evaluated in Horner form at run time.
"""
from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import entropy
from .block_transforms import alloc_pixels
from .errors import InsufficientSamples, SingularFit, ZeroArea
from .executors import LanePair, WorkItem, host_stripes, wait_all
from .parser import ParsedJpeg, geometry_of, parse_stream

MAX_DEGREE = 7


def monomials(arity: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples in canonical order (total degree <= ``degree``)."""
    if arity == 1:
        return [(i,) for i in range(degree + 1)]
    if arity == 2:
        return [(i, j) for j in range(degree + 1) for i in range(degree + 1 - j)]
    raise ValueError(f"unsupported arity {arity}")


def poly1d_eval(coeffs, x: float) -> float:
    """Horner evaluation of ascending-order coefficients."""
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def poly1d_deriv(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    if len(c) <= 1:
        return np.zeros(1)
    return c[1:] * np.arange(1, len(c))


@dataclass
class PolyModel:
    """Dense polynomial over the canonical monomial basis.

    ``horner_plan`` groups coefficients by the power of the second input
    so evaluation nests two Horner loops; it is derived from the
    coefficients once at construction.
    """
    arity: int
    degree: int
    coefficients: np.ndarray
    horner_plan: list[np.ndarray] = field(default_factory=list, repr=False)
    aic_by_degree: dict[int, float] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        expected = len(monomials(self.arity, self.degree))
        if len(self.coefficients) != expected:
            raise ValueError(
                f"{len(self.coefficients)} coefficients for arity "
                f"{self.arity} degree {self.degree} (need {expected})")
        if not self.horner_plan:
            self.horner_plan = self._build_plan()

    def _build_plan(self) -> list[np.ndarray]:
        if self.arity == 1:
            return [self.coefficients]
        plan = []
        pos = 0
        for j in range(self.degree + 1):
            n = self.degree + 1 - j
            plan.append(self.coefficients[pos:pos + n])
            pos += n
        return plan

    def restrict(self, w: float) -> np.ndarray:
        """Univariate coefficients in the second input at fixed first input."""
        if self.arity == 1:
            return np.asarray(self.coefficients, dtype=np.float64)
        return np.array([poly1d_eval(g, w) for g in self.horner_plan])

    def __call__(self, *inputs: float) -> float:
        return eval_horner(self, inputs)


def eval_horner(model: PolyModel, inputs) -> float:
    """Evaluate via the nested Horner plan."""
    inputs = np.atleast_1d(np.asarray(inputs, dtype=np.float64))
    if len(inputs) != model.arity:
        raise ValueError(f"expected {model.arity} inputs, got {len(inputs)}")
    if model.arity == 1:
        return poly1d_eval(model.horner_plan[0], float(inputs[0]))
    w, h = float(inputs[0]), float(inputs[1])
    acc = 0.0
    for group in reversed(model.horner_plan):
        acc = acc * h + poly1d_eval(group, w)
    return acc


def eval_naive(model: PolyModel, inputs) -> float:
    """Monomial-by-monomial sum; the independent check on eval_horner."""
    inputs = np.atleast_1d(np.asarray(inputs, dtype=np.float64))
    total = 0.0
    for c, exps in zip(model.coefficients, monomials(model.arity, model.degree)):
        term = c
        for x, e in zip(inputs, exps):
            term *= x ** e
        total += term
    return float(total)


def horner_multiplications(model: PolyModel) -> int:
    if model.arity == 1:
        return max(len(model.horner_plan[0]) - 1, 0)
    inner = sum(max(len(g) - 1, 0) for g in model.horner_plan)
    return inner + (len(model.horner_plan) - 1)


def naive_multiplications(model: PolyModel) -> int:
    # each monomial w^i h^j built from scratch: i+j-1 power products plus
    # one multiply by the coefficient
    return sum(sum(e) for e in monomials(model.arity, model.degree))


def _design_matrix(inputs: np.ndarray, arity: int, degree: int) -> np.ndarray:
    cols = []
    for exps in monomials(arity, degree):
        col = np.ones(len(inputs))
        for axis, e in enumerate(exps):
            if e:
                col = col * inputs[:, axis] ** e
        cols.append(col)
    return np.column_stack(cols)


def fit_poly(samples, max_degree: int = MAX_DEGREE, arity: int | None = None) -> PolyModel:
    """Least-squares fit with AIC degree selection.

    ``samples`` is a sequence of (inputs, value) pairs; inputs may be a
    scalar or a (w, h) pair.  Degrees 1..max_degree with more samples than
    coefficients are fitted and the AIC-minimizing one returned.  Raises
    SingularFit when no degree is fittable or the linear design matrix is
    rank deficient (for example, every sample sharing one width).
    """
    pairs = list(samples)
    if not pairs:
        raise SingularFit("no samples")
    first = np.atleast_1d(np.asarray(pairs[0][0], dtype=np.float64))
    if arity is None:
        arity = len(first)
    inputs = np.array([np.atleast_1d(np.asarray(p[0], dtype=np.float64))
                       for p in pairs])
    values = np.array([float(p[1]) for p in pairs])
    n = len(values)

    best = None
    aic_table: dict[int, float] = {}
    for degree in range(1, max_degree + 1):
        k = len(monomials(arity, degree))
        if n <= k:
            continue
        design = _design_matrix(inputs, arity, degree)
        coeffs, residual, rank, _ = np.linalg.lstsq(design, values, rcond=None)
        if degree == 1 and rank < k:
            raise SingularFit(
                f"rank-deficient linear design matrix (rank {rank} < {k})")
        rss = float(np.sum((design @ coeffs - values) ** 2))
        aic = n * np.log(max(rss, 1e-300) / n) + 2 * k
        aic_table[degree] = float(aic)
        if best is None or aic < best[0]:
            best = (aic, degree, coeffs)
    if best is None:
        raise SingularFit(
            f"{n} samples cannot determine any degree <= {max_degree}")
    _, degree, coeffs = best
    return PolyModel(arity=arity, degree=degree, coefficients=coeffs,
                     aic_by_degree=aic_table)


# ---------------------------------------------------------------------------
# density and duration estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyDensity:
    d: float  # compressed bytes per pixel

    def __post_init__(self):
        if self.d <= 0:
            raise ZeroArea(f"entropy density must be positive, got {self.d}")


def entropy_density(file_size: int, w: int, h: int) -> EntropyDensity:
    """Compressed bytes per pixel: file_size / (w * h)."""
    if w * h <= 0:
        raise ZeroArea(f"zero-pixel image {w}x{h}")
    return EntropyDensity(file_size / (w * h))


@dataclass
class DeviceProfile:
    """Fitted cost models for one host/accelerator pairing."""
    p_cpu: PolyModel             # host parallel phase, (w, h) -> ns
    p_gpu: PolyModel             # accelerator incl. transfers, (w, h) -> ns
    t_disp: PolyModel            # dispatch overhead, (w, h) -> ns
    t_huff_per_pixel: PolyModel  # entropy decode rate, (d) -> ns/pixel
    chunk_rows: int              # pixel rows per accelerator chunk
    transfer_latency_ns: float = 0.0
    transfer_bytes_per_ns: float = 0.0
    device_description: str = ""
    metadata: dict = field(default_factory=dict)

    # negative polynomial extrapolations clamp to zero before use
    def predict_p_cpu(self, w: float, h: float) -> float:
        return max(0.0, eval_horner(self.p_cpu, (w, h)))

    def predict_p_gpu(self, w: float, h: float) -> float:
        return max(0.0, eval_horner(self.p_gpu, (w, h)))

    def predict_t_disp(self, w: float, h: float) -> float:
        return max(0.0, eval_horner(self.t_disp, (w, h)))


def estimate_huffman_time(profile: DeviceProfile, w: float, h: float,
                          d: float) -> float:
    """Whole-image entropy-decode estimate: rate(d) * w * h, floored at 0."""
    return max(0.0, eval_horner(profile.t_huff_per_pixel, (d,))) * w * h


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _model_to_json(m: PolyModel) -> dict:
    return {"arity": m.arity, "degree": m.degree,
            "coefficients": [float(c) for c in m.coefficients]}


def _model_from_json(o: dict) -> PolyModel:
    return PolyModel(arity=o["arity"], degree=o["degree"],
                     coefficients=np.asarray(o["coefficients"], dtype=np.float64))


def profile_to_json(profile: DeviceProfile) -> str:
    doc = {
        "version": 1,
        "device_description": profile.device_description,
        "models": {
            "p_cpu": _model_to_json(profile.p_cpu),
            "p_gpu": _model_to_json(profile.p_gpu),
            "t_disp": _model_to_json(profile.t_disp),
            "t_huff_per_pixel": _model_to_json(profile.t_huff_per_pixel),
        },
        "transfer": {
            "latency_ns": profile.transfer_latency_ns,
            "bytes_per_ns": profile.transfer_bytes_per_ns,
        },
        "chunk_rows": profile.chunk_rows,
        "training_meta": profile.metadata,
    }
    return json.dumps(doc, indent=2)


def profile_from_json(text: str) -> DeviceProfile:
    doc = json.loads(text)
    models = doc["models"]
    return DeviceProfile(
        p_cpu=_model_from_json(models["p_cpu"]),
        p_gpu=_model_from_json(models["p_gpu"]),
        t_disp=_model_from_json(models["t_disp"]),
        t_huff_per_pixel=_model_from_json(models["t_huff_per_pixel"]),
        chunk_rows=int(doc["chunk_rows"]),
        transfer_latency_ns=float(doc["transfer"]["latency_ns"]),
        transfer_bytes_per_ns=float(doc["transfer"]["bytes_per_ns"]),
        device_description=doc.get("device_description", ""),
        metadata=doc.get("training_meta", {}),
    )


def save_profile(profile: DeviceProfile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(profile_to_json(profile))


def load_profile(path) -> DeviceProfile:
    with open(path, "r", encoding="utf-8") as fh:
        return profile_from_json(fh.read())


# ---------------------------------------------------------------------------
# profiling
# ---------------------------------------------------------------------------

def _qtable_stack(parsed: ParsedJpeg) -> np.ndarray:
    return np.stack([
        entropy.dezigzag(np.asarray(parsed.quant_tables[c.quant_table_id],
                                    dtype=np.int32))
        for c in parsed.components
    ])


def _kernel_selector(parsed: ParsedJpeg) -> str:
    return "fused-422" if geometry_of(parsed).mcu_width == 16 else "fused-444"


def _measure_image(blob: bytes, lanes: LanePair, repeats: int) -> dict:
    parsed = parse_stream(blob)
    geo = geometry_of(parsed)
    qtables = _qtable_stack(parsed)
    kernel = _kernel_selector(parsed)

    huff_times = []
    coeffs = None
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        coeffs, _cursor = entropy.decode_all(parsed, blob)
        huff_times.append(time.perf_counter_ns() - t0)

    pixels = alloc_pixels(geo.width, geo.height)

    cpu_times = []
    workers = lanes.host.config.worker_count
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        tickets = [lanes.host.submit(WorkItem(r0, n, kernel, coeffs, qtables, pixels))
                   for r0, n in host_stripes(geo.mcu_rows, workers)]
        wait_all(tickets)
        cpu_times.append(time.perf_counter_ns() - t0)

    gpu_times = []
    disp_times = []
    for _ in range(repeats):
        ticket = lanes.accel.submit(
            WorkItem(0, geo.mcu_rows, kernel, coeffs, qtables, pixels))
        ticket.wait()
        gpu_times.append(ticket.busy_ns)
        disp_times.append(ticket.dispatch_ns)

    d = entropy_density(parsed.file_size, geo.width, geo.height).d
    return {
        "w": geo.width,
        "h": geo.height,
        "d": d,
        "t_huff": statistics.median(huff_times),
        "p_cpu": statistics.median(cpu_times),
        "p_gpu": statistics.median(gpu_times),
        "t_disp": statistics.median(disp_times),
    }


def _as_blob(image) -> bytes:
    if isinstance(image, (bytes, bytearray)):
        return bytes(image)
    with open(image, "rb") as fh:
        return fh.read()


def run_profiling(training_images, lanes: LanePair, *, repeats: int = 5,
                  max_degree: int = MAX_DEGREE,
                  calibration_images=None,
                  device_description: str = "") -> DeviceProfile:
    """Measure every training image and fit the four cost models.

    ``training_images`` are paths or encoded bytes.  Each quantity is
    measured ``repeats`` times and the median kept.  Chunk size is
    calibrated on ``calibration_images`` (default: the largest two
    training images).
    """
    blobs = [_as_blob(img) for img in training_images]
    need = len(monomials(2, max_degree))
    if len(blobs) <= need:
        raise InsufficientSamples(
            f"{len(blobs)} training images cannot fit a degree-{max_degree} "
            f"bivariate model ({need + 1} required)")

    rows = [_measure_image(blob, lanes, repeats) for blob in blobs]

    p_cpu = fit_poly([((r["w"], r["h"]), r["p_cpu"]) for r in rows], max_degree)
    p_gpu = fit_poly([((r["w"], r["h"]), r["p_gpu"]) for r in rows], max_degree)
    t_disp = fit_poly([((r["w"], r["h"]), r["t_disp"]) for r in rows], max_degree)
    t_huff = fit_poly([(r["d"], r["t_huff"] / (r["w"] * r["h"])) for r in rows],
                      max_degree)

    if calibration_images is None:
        ranked = sorted(blobs, key=len, reverse=True)
        calibration_images = ranked[:2]
    chunk_rows = calibrate_chunk_size(calibration_images, lanes)

    meta = {
        "trained_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "image_count": len(blobs),
        "repeats": repeats,
        "max_degree": max_degree,
        "w_range": [min(r["w"] for r in rows), max(r["w"] for r in rows)],
        "h_range": [min(r["h"] for r in rows), max(r["h"] for r in rows)],
        "d_range": [min(r["d"] for r in rows), max(r["d"] for r in rows)],
        "aic": {
            "p_cpu": p_cpu.aic_by_degree,
            "p_gpu": p_gpu.aic_by_degree,
            "t_disp": t_disp.aic_by_degree,
            "t_huff_per_pixel": t_huff.aic_by_degree,
        },
        "lanes": dict(lanes.meta),
    }
    return DeviceProfile(
        p_cpu=p_cpu, p_gpu=p_gpu, t_disp=t_disp, t_huff_per_pixel=t_huff,
        chunk_rows=chunk_rows,
        transfer_latency_ns=float(lanes.meta.get("transfer_latency_ns", 0.0)),
        transfer_bytes_per_ns=float(lanes.meta.get("transfer_bytes_per_ns", 0.0)),
        device_description=device_description,
        metadata=meta,
    )


def chunk_candidates(mcu_rows: int) -> list[int]:
    """Full height plus descending powers of two, in MCU rows."""
    sizes = [mcu_rows]
    p = 1
    while p < mcu_rows:
        sizes.append(p)
        p <<= 1
    return sorted(set(sizes), reverse=True)


def calibrate_chunk_size(images, lanes: LanePair, repeats: int = 2) -> int:
    """Best pipelined chunk height per image; keep the largest best.

    Each candidate height (full height, then powers of two down to one MCU
    row) is timed with the pipelined-accelerator mode; per image the
    fastest candidate wins, and the returned chunk size (in pixel rows) is
    the largest winner so small-chunk dispatch overhead never dominates.
    """
    from .orchestrator import decode  # local import to avoid a cycle

    best_rows = []
    for image in images:
        blob = _as_blob(image)
        parsed = parse_stream(blob)
        geo = geometry_of(parsed)
        timings = []
        for cand in chunk_candidates(geo.mcu_rows):
            walls = []
            for _ in range(repeats):
                t0 = time.perf_counter_ns()
                decode(parsed, "accel-pipe", None, lanes, data=blob,
                       chunk_mcu_rows=cand)
                walls.append(time.perf_counter_ns() - t0)
            timings.append((statistics.median(walls), cand))
        timings.sort()
        best_rows.append(timings[0][1])
    return max(best_rows) * 8

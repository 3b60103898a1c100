"""Joint activation-weight quantization.

The pipeline quantizes one linear layer at a time from a weight matrix W
(output rows by input channels) and calibration activations X (channels by
tokens):

1. search a per-channel smoothing exponent e on a fixed grid, scaling weight
   columns by s = stat**e and activation rows by 1/s so that difficulty
   moves from the activation side to the weight side,
2. build the curvature proxy H = 2 X X^T (plus diagonal damping) from the
   smoothed activations,
3. quantize weight columns sequentially, spreading each column's rounding
   error over the not-yet-quantized columns using the inverse of H.

All quantizers share one affine primitive: codes are unsigned integers in
[0, 2**bits - 1], values are reconstructed as (code - zero_point) * scale.
Rounding is half-away-from-zero throughout. Everything here is
deterministic; there is no randomness in the pipeline.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import numkit
from .errors import (
    DegenerateHessianError,
    NotPositiveDefiniteError,
    QuantizationFailedError,
)

PER_TENSOR = "per_tensor"
PER_TOKEN = "per_token"
PER_OUTPUT_ROW = "per_output_row"
GRANULARITIES = (PER_TENSOR, PER_TOKEN, PER_OUTPUT_ROW)

ORDER_NONE = "none"
ORDER_MAX_ABS = "max_abs"
ORDER_SUM_SQUARES = "sum_squares"
ORDERINGS = (ORDER_NONE, ORDER_MAX_ABS, ORDER_SUM_SQUARES)

TARGET_CPU_FP = "cpu_fp"
TARGET_GPU_INT = "gpu_int"
PACK_TARGETS = (TARGET_CPU_FP, TARGET_GPU_INT)

# Floors guarding against division by zero: scale for constant groups,
# channel statistic for all-zero channels.
SCALE_FLOOR = 1e-12
STAT_FLOOR = 1e-8

DEFAULT_GRID_STEPS = 21
DEFAULT_DAMPING = 0.01

_PACK_MAGIC = b"MOEP"
_PACK_HEADER = "<4sBBBBIII"  # magic, version, target, bits, granularity, rows, cols, groups
_PACK_VERSION = 1


def _round_half_away(v: np.ndarray) -> np.ndarray:
    # np.round would round halves to even; the code grid wants halves away
    # from zero.
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


@dataclass(frozen=True)
class QuantConfig:
    """Quantizer settings.

    ``granularity`` names the parameter-group layout of the matrix being
    quantized: one group for the whole tensor, one per row of activations
    laid out tokens-in-rows, or one per weight output row. Pipeline
    operations always quantize weights per output row; for them the config
    granularity selects the activation side and must not be
    ``per_output_row``.
    """

    bits: int = 8
    symmetric: bool = False
    granularity: str = PER_TENSOR

    def __post_init__(self):
        if not 2 <= self.bits <= 8:
            raise ValueError(f"bits must be in [2, 8], got {self.bits}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")

    @property
    def qmax(self) -> int:
        return (1 << self.bits) - 1


@dataclass(frozen=True)
class QuantParams:
    """Affine parameters of one group: value = (code - zero_point) * scale."""

    scale: float
    zero_point: int

    def __post_init__(self):
        if not (self.scale > 0.0 and np.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")


@dataclass
class QuantizedMatrix:
    """Integer codes plus per-group affine parameters."""

    codes: np.ndarray  # (rows, cols) integer codes
    scales: np.ndarray  # (groups,) float64
    zero_points: np.ndarray  # (groups,) integer
    bits: int
    granularity: str

    def __post_init__(self):
        self.codes = np.asarray(self.codes)
        self.scales = np.asarray(self.scales, dtype=np.float64).ravel()
        self.zero_points = np.asarray(self.zero_points).ravel().astype(np.int32)
        if self.codes.ndim != 2:
            raise ValueError("codes must be 2-D")
        if not np.issubdtype(self.codes.dtype, np.integer):
            raise ValueError("codes must be integers")
        if not 2 <= self.bits <= 8:
            raise ValueError(f"bits must be in [2, 8], got {self.bits}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        expected = 1 if self.granularity == PER_TENSOR else self.codes.shape[0]
        if self.scales.shape[0] != expected or self.zero_points.shape[0] != expected:
            raise ValueError(
                f"expected {expected} parameter groups, got {self.scales.shape[0]}"
            )
        qmax = (1 << self.bits) - 1
        if self.codes.min() < 0 or self.codes.max() > qmax:
            raise ValueError(f"codes out of range [0, {qmax}]")
        if not (self.scales > 0.0).all() or not np.isfinite(self.scales).all():
            raise ValueError("scales must be positive and finite")
        if self.zero_points.min() < 0 or self.zero_points.max() > qmax:
            raise ValueError(f"zero points out of range [0, {qmax}]")

    @property
    def rows(self) -> int:
        return self.codes.shape[0]

    @property
    def cols(self) -> int:
        return self.codes.shape[1]

    def group_params(self) -> list[QuantParams]:
        return [
            QuantParams(float(s), int(z))
            for s, z in zip(self.scales, self.zero_points)
        ]


@dataclass
class SmoothingResult:
    """Chosen smoothing exponent, the per-channel factors, and its loss."""

    exponent: float
    factors: np.ndarray
    loss: float


@dataclass
class LayerQuantResult:
    """Everything produced by quantize_layer for one linear layer."""

    quantized: QuantizedMatrix  # smoothed weights, per-output-row codes
    smoothing: SmoothingResult
    ordering: np.ndarray | None  # column permutation used, None when trivial
    output_mse: float
    rtn_baseline_mse: float


@dataclass
class PackedExpert:
    """Serialized expert weights for one placement target."""

    target: str
    rows: int
    cols: int
    bits: int
    byte_size: int
    blob: bytes


def _affine_params(groups_min, groups_max, cfg: QuantConfig):
    """Scale and zero point per group from group min/max (asymmetric) or
    from the absolute maximum (symmetric, fixed midpoint zero)."""
    qmax = cfg.qmax
    if cfg.symmetric:
        amax = np.maximum(np.abs(groups_min), np.abs(groups_max))
        scale = np.maximum(amax / ((1 << (cfg.bits - 1)) - 1), SCALE_FLOOR)
        zp = np.full(scale.shape, 1 << (cfg.bits - 1), dtype=np.int32)
    else:
        scale = np.maximum((groups_max - groups_min) / qmax, SCALE_FLOOR)
        zp = np.clip(_round_half_away(-groups_min / scale), 0, qmax).astype(np.int32)
    return scale, zp


def _row_params(x: np.ndarray, cfg: QuantConfig):
    return _affine_params(x.min(axis=1), x.max(axis=1), cfg)


def _encode(x: np.ndarray, scale, zp, qmax: int) -> np.ndarray:
    codes = _round_half_away(x / scale) + zp
    return np.clip(codes, 0, qmax).astype(np.int32)


def rtn_quantize(x, cfg: QuantConfig) -> QuantizedMatrix:
    """Round-to-nearest affine quantization at the configured granularity.

    Per-tensor uses a single parameter group; ``per_token`` and
    ``per_output_row`` both group by row (pass activations tokens-in-rows
    for per-token use).
    """
    x = numkit.ensure_matrix(x, "x")
    qmax = cfg.qmax
    if cfg.granularity == PER_TENSOR:
        scale, zp = _affine_params(
            np.array([x.min()]), np.array([x.max()]), cfg
        )
        codes = _encode(x, scale[0], int(zp[0]), qmax)
    else:
        scale, zp = _row_params(x, cfg)
        codes = _encode(x, scale[:, None], zp[:, None], qmax)
    return QuantizedMatrix(codes, scale, zp, cfg.bits, cfg.granularity)


def dequantize(q: QuantizedMatrix) -> np.ndarray:
    """Reconstruct float64 values from codes and affine parameters."""
    if q.granularity == PER_TENSOR:
        return (q.codes.astype(np.float64) - float(q.zero_points[0])) * float(
            q.scales[0]
        )
    return (q.codes.astype(np.float64) - q.zero_points[:, None]) * q.scales[:, None]


def _check_factors(factors, n: int) -> np.ndarray:
    f = np.asarray(factors, dtype=np.float64).ravel()
    if f.shape[0] != n:
        raise ValueError(f"expected {n} factors, got {f.shape[0]}")
    if not np.isfinite(f).all() or (f <= 0.0).any():
        raise ValueError("smoothing factors must be positive and finite")
    return f


def _quantize_acts(x: np.ndarray, cfg: QuantConfig) -> np.ndarray:
    """Quantize-dequantize activations at the activation granularity."""
    if cfg.granularity == PER_OUTPUT_ROW:
        raise ValueError("per_output_row granularity applies to weights only")
    if cfg.granularity == PER_TOKEN:
        per_row = replace(cfg, granularity=PER_TOKEN)
        return dequantize(rtn_quantize(x.T, per_row)).T
    return dequantize(rtn_quantize(x, cfg))


def _quantize_weights(w: np.ndarray, cfg: QuantConfig) -> np.ndarray:
    per_row = replace(cfg, granularity=PER_OUTPUT_ROW)
    return dequantize(rtn_quantize(w, per_row))


def quant_loss(w, x, factors, cfg: QuantConfig) -> float:
    """Frobenius norm of Q(W s) Q(s^-1 X) - W X for smoothing factors s.

    Both operands are quantized: weights per output row, activations at the
    configured activation granularity. This is the objective the smoothing
    search minimizes.
    """
    w = numkit.ensure_matrix(w, "w")
    x = numkit.ensure_matrix(x, "x")
    if w.shape[1] != x.shape[0]:
        raise ValueError(
            f"w has {w.shape[1]} input channels but x has {x.shape[0]} rows"
        )
    f = _check_factors(factors, w.shape[1])
    wq = _quantize_weights(w * f[None, :], cfg)
    xq = _quantize_acts(x / f[:, None], cfg)
    return float(np.linalg.norm(wq @ xq - w @ x, "fro"))


def search_smoothing(
    w, x, cfg: QuantConfig, grid_steps: int = DEFAULT_GRID_STEPS
) -> SmoothingResult:
    """Grid search the smoothing exponent e over [0, 1].

    Factors are stat**e where stat is the per-channel max-abs activation
    over the calibration tokens, floored at 1e-8. Ties prefer the smaller
    exponent, so e = 0 (identity) wins when smoothing does not help.
    """
    w = numkit.ensure_matrix(w, "w")
    x = numkit.ensure_matrix(x, "x")
    if w.shape[1] != x.shape[0]:
        raise ValueError(
            f"w has {w.shape[1]} input channels but x has {x.shape[0]} rows"
        )
    if grid_steps < 2:
        raise ValueError(f"grid_steps must be at least 2, got {grid_steps}")
    stat = np.maximum(np.abs(x).max(axis=1), STAT_FLOOR)
    best: SmoothingResult | None = None
    for e in np.linspace(0.0, 1.0, grid_steps):
        f = stat**e
        loss = quant_loss(w, x, f, cfg)
        if best is None or loss < best.loss:
            best = SmoothingResult(float(e), f, loss)
    assert best is not None
    return best


def apply_smoothing(w, x, factors):
    """Scale weight columns by the factors and activation rows by their
    reciprocals. The product W X is preserved up to rounding."""
    w = numkit.ensure_matrix(w, "w")
    x = numkit.ensure_matrix(x, "x")
    if w.shape[1] != x.shape[0]:
        raise ValueError(
            f"w has {w.shape[1]} input channels but x has {x.shape[0]} rows"
        )
    f = _check_factors(factors, w.shape[1])
    return w * f[None, :], x / f[:, None]


def build_hessian(x_calib, damping_fraction: float = DEFAULT_DAMPING) -> np.ndarray:
    """Curvature proxy H = 2 X X^T plus diagonal damping.

    The damping term is damping_fraction times the mean diagonal of the
    undamped matrix. All-zero calibration data has no curvature at all and
    raises DegenerateHessianError.
    """
    x = numkit.ensure_matrix(x_calib, "x_calib")
    if damping_fraction < 0:
        raise ValueError(f"damping_fraction must be >= 0, got {damping_fraction}")
    if not x.any():
        raise DegenerateHessianError("calibration activations are all zero")
    h = 2.0 * (x @ x.T)
    h = (h + h.T) / 2.0
    lam = damping_fraction * float(np.mean(np.diag(h)))
    h[np.diag_indices_from(h)] += lam
    return h


def channel_order(x_calib, strategy: str) -> np.ndarray:
    """Channel processing order for the sequential quantizer.

    ``max_abs`` ranks channels by their largest absolute activation,
    ``sum_squares`` by total energy; both descending with ties broken by
    ascending channel index. ``none`` is the identity order.
    """
    x = numkit.ensure_matrix(x_calib, "x_calib")
    if strategy not in ORDERINGS:
        raise ValueError(f"unknown ordering strategy {strategy!r}")
    if strategy == ORDER_NONE:
        return np.arange(x.shape[0], dtype=np.int64)
    if strategy == ORDER_MAX_ABS:
        stat = np.abs(x).max(axis=1)
    else:
        stat = (x**2).sum(axis=1)
    # stable sort on the negated stat: descending, ties keep ascending index
    return np.argsort(-stat, kind="stable").astype(np.int64)


def _inverse_upper_factor(h: np.ndarray) -> np.ndarray:
    """Upper-triangular U with H^-1 = U^T U, retrying with escalating damping.

    Retries add 1% of the mean diagonal, escalating tenfold, at most three
    times. Raises QuantizationFailedError when the factorization never
    succeeds.
    """
    base = DEFAULT_DAMPING * float(np.mean(np.diag(h)))
    eye = np.eye(h.shape[0])
    last: Exception | None = None
    for attempt in range(4):
        damp = 0.0 if attempt == 0 else base * 10.0 ** (attempt - 1)
        try:
            inv = numkit.spd_inverse(h + damp * eye)
            return numkit.cholesky(inv).T
        except NotPositiveDefiniteError as exc:
            last = exc
    raise QuantizationFailedError(
        f"Hessian is not positive definite after damping escalation ({last})"
    )


def hessian_quantize(
    w, h, cfg: QuantConfig, order: np.ndarray | None = None
) -> QuantizedMatrix:
    """Sequential weight quantization with second-order error compensation.

    Columns are processed in ``order`` (default: natural). After rounding
    column i, the residual is propagated into every not-yet-quantized column
    j via -residual * [H_F^-1]_ji / [H_F^-1]_ii, where F is the remaining
    column set. The running inverses are read off the upper Cholesky factor
    U of H^-1: over F = {i..n}, [H_F^-1] equals U[F,F]^T U[F,F], so the
    needed column is U[i, i:] * U[i, i] and the diagonal is U[i, i]**2.

    Affine parameters are per output row, computed from ``w`` before the
    loop and held fixed, so compensation never shifts the code grid.
    """
    w = numkit.ensure_matrix(w, "w")
    h = numkit.ensure_matrix(h, "h")
    n = w.shape[1]
    if h.shape != (n, n):
        raise ValueError(f"h must be {n}x{n}, got {h.shape[0]}x{h.shape[1]}")
    if order is None:
        order = np.arange(n, dtype=np.int64)
    else:
        order = np.asarray(order, dtype=np.int64).ravel()
        if order.shape[0] != n or not np.array_equal(np.sort(order), np.arange(n)):
            raise ValueError("order must be a permutation of the column indices")

    scale, zp = _row_params(w, cfg)
    qmax = cfg.qmax

    wp = w[:, order].copy()
    hp = h[np.ix_(order, order)]
    upper = _inverse_upper_factor(hp)

    codes_p = np.empty(wp.shape, dtype=np.int32)
    for i in range(n):
        col = wp[:, i]
        c = _encode(col[:, None], scale[:, None], zp[:, None], qmax)[:, 0]
        codes_p[:, i] = c
        deq = (c.astype(np.float64) - zp) * scale
        err = (col - deq) / upper[i, i]
        if i + 1 < n:
            wp[:, i + 1 :] -= np.outer(err, upper[i, i + 1 :])

    codes = np.empty_like(codes_p)
    codes[:, order] = codes_p
    return QuantizedMatrix(codes, scale, zp, cfg.bits, PER_OUTPUT_ROW)


def quantize_layer(
    w,
    x_calib,
    cfg: QuantConfig | None = None,
    grid_steps: int = DEFAULT_GRID_STEPS,
    ordering: str = ORDER_NONE,
) -> LayerQuantResult:
    """Full per-layer pipeline: smoothing search, Hessian build, sequential
    quantization, and an error report against the float reference.

    ``output_mse`` is the mean squared entry of Qw(W') Qa(X') - W X, with W'
    and X' the smoothed operands; ``rtn_baseline_mse`` is the same measure
    for plain round-to-nearest on the unsmoothed operands.
    """
    cfg = cfg or QuantConfig()
    w = numkit.ensure_matrix(w, "w")
    x = numkit.ensure_matrix(x_calib, "x_calib")
    if w.shape[1] != x.shape[0]:
        raise ValueError(
            f"w has {w.shape[1]} input channels but x_calib has {x.shape[0]} rows"
        )
    if cfg.granularity == PER_OUTPUT_ROW:
        raise ValueError("layer config granularity selects the activation side")
    if ordering not in ORDERINGS:
        raise ValueError(f"unknown ordering strategy {ordering!r}")
    if x.shape[1] < 8:
        warnings.warn(
            f"only {x.shape[1]} calibration tokens; statistics may be unstable",
            UserWarning,
            stacklevel=2,
        )

    sm = search_smoothing(w, x, cfg, grid_steps)
    ws, xs = apply_smoothing(w, x, sm.factors)
    h = build_hessian(xs)
    perm = channel_order(xs, ordering)
    q = hessian_quantize(ws, h, cfg, perm)

    ref = w @ x
    w_hat = dequantize(q)
    x_hat = _quantize_acts(xs, cfg)
    output_mse = float(np.mean((w_hat @ x_hat - ref) ** 2))

    w_rtn = _quantize_weights(w, cfg)
    x_rtn = _quantize_acts(x, cfg)
    rtn_baseline_mse = float(np.mean((w_rtn @ x_rtn - ref) ** 2))

    return LayerQuantResult(
        quantized=q,
        smoothing=sm,
        ordering=None if ordering == ORDER_NONE else perm,
        output_mse=output_mse,
        rtn_baseline_mse=rtn_baseline_mse,
    )


def _pack_codes(codes: np.ndarray, bits: int) -> bytes:
    flat = codes.astype(np.uint32).ravel()
    bit_cols = (flat[:, None] >> np.arange(bits, dtype=np.uint32)) & 1
    return np.packbits(bit_cols.astype(np.uint8).ravel(), bitorder="little").tobytes()


def _unpack_codes(buf: bytes, count: int, bits: int) -> np.ndarray:
    raw = np.frombuffer(buf, dtype=np.uint8)
    unpacked = np.unpackbits(raw, bitorder="little", count=count * bits)
    weights = (1 << np.arange(bits, dtype=np.uint32))
    return (unpacked.reshape(count, bits).astype(np.uint32) * weights).sum(axis=1)


def precision_pack(q: QuantizedMatrix, target: str) -> PackedExpert:
    """Serialize an expert for its placement target.

    ``gpu_int`` keeps the integer codes (bit-packed) plus the affine
    parameters; ``cpu_fp`` stores the dequantized float32 payload so the
    host can run it without decode overhead. ``byte_size`` is the full
    serialized size and feeds the simulator's transfer cost model.
    """
    if target not in PACK_TARGETS:
        raise ValueError(f"unknown pack target {target!r}")
    import struct as _struct

    gran_tag = GRANULARITIES.index(q.granularity)
    header = _struct.pack(
        _PACK_HEADER,
        _PACK_MAGIC,
        _PACK_VERSION,
        PACK_TARGETS.index(target),
        q.bits,
        gran_tag,
        q.rows,
        q.cols,
        q.scales.shape[0],
    )
    if target == TARGET_CPU_FP:
        payload = dequantize(q).astype(np.float32).tobytes(order="C")
    else:
        params = np.empty(q.scales.shape[0] * 2, dtype="<f8")
        params[0::2] = q.scales
        params[1::2] = q.zero_points.astype(np.float64)
        payload = params.tobytes() + _pack_codes(q.codes, q.bits)
    blob = header + payload
    return PackedExpert(target, q.rows, q.cols, q.bits, len(blob), blob)


def unpack_expert(packed: PackedExpert | bytes):
    """Inverse of precision_pack.

    Returns a float32 matrix for ``cpu_fp`` payloads and a QuantizedMatrix
    for ``gpu_int`` payloads.
    """
    import struct as _struct

    blob = packed.blob if isinstance(packed, PackedExpert) else packed
    head_size = _struct.calcsize(_PACK_HEADER)
    magic, version, target_tag, bits, gran_tag, rows, cols, groups = _struct.unpack(
        _PACK_HEADER, blob[:head_size]
    )
    if magic != _PACK_MAGIC or version != _PACK_VERSION:
        raise ValueError("not a packed expert blob")
    body = blob[head_size:]
    if PACK_TARGETS[target_tag] == TARGET_CPU_FP:
        return (
            np.frombuffer(body, dtype="<f4", count=rows * cols)
            .reshape(rows, cols)
            .copy()
        )
    params = np.frombuffer(body, dtype="<f8", count=groups * 2)
    codes = _unpack_codes(body[groups * 16 :], rows * cols, bits).reshape(rows, cols)
    return QuantizedMatrix(
        codes.astype(np.int32),
        params[0::2].copy(),
        params[1::2].astype(np.int32),
        bits,
        GRANULARITIES[gran_tag],
    )


def save_layer_result(result: LayerQuantResult, out_dir) -> None:
    """Write a layer result as result.json plus codes.mat (MOEK format)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    q = result.quantized
    numkit.write_matrix(out / "codes.mat", q.codes.astype(np.float64))
    doc = {
        "exponent": result.smoothing.exponent,
        "factors": result.smoothing.factors.tolist(),
        "bits": q.bits,
        "mse": result.output_mse,
        "rtn_mse": result.rtn_baseline_mse,
        "ordering": None if result.ordering is None else result.ordering.tolist(),
        "scales": q.scales.tolist(),
        "zero_points": q.zero_points.tolist(),
        "granularity": q.granularity,
        "smoothing_loss": result.smoothing.loss,
    }
    with open(out / "result.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_layer_result(out_dir) -> tuple[QuantizedMatrix, dict]:
    """Read back what save_layer_result wrote."""
    out = Path(out_dir)
    with open(out / "result.json", "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    codes = numkit.read_matrix(out / "codes.mat").astype(np.int32)
    q = QuantizedMatrix(
        codes,
        np.asarray(doc["scales"]),
        np.asarray(doc["zero_points"]),
        int(doc["bits"]),
        doc["granularity"],
    )
    return q, doc

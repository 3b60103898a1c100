"""Quantizer tests: rounding grid, smoothing search, curvature-compensated
sequential quantization, and the packed-expert container."""

from __future__ import annotations

import json
import math
import struct

import numpy as np
import pytest

from moekit import numkit, quant
from moekit.errors import DegenerateHessianError, QuantizationFailedError
from moekit.quant import (
    PER_OUTPUT_ROW,
    PER_TENSOR,
    PER_TOKEN,
    QuantConfig,
    QuantizedMatrix,
)


def _round_ref(v: float) -> int:
    # reference rounding: halves away from zero, one scalar at a time
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


# ── rounding ─────────────────────────────────────────────────────────────


def test_round_half_away_from_zero():
    vals = np.array([0.5, -0.5, 1.5, 2.5, -2.5, 0.49, -0.49, 3.0])
    got = quant._round_half_away(vals)
    np.testing.assert_array_equal(got, [1, -1, 2, 3, -3, 0, 0, 3])
    # np.round would give 0, 0, 2, 2, -2 for the first five; the grid wants
    # ties away from zero
    assert quant._round_half_away(np.array([0.5]))[0] != np.round(0.5)


# ── round-to-nearest ─────────────────────────────────────────────────────


def test_rtn_per_tensor_hand_case():
    # range [-1, 3] at 8 bits: scale = 4/255, zp = round(63.75) = 64
    x = np.array([[-1.0, 0.0, 3.0]])
    q = quant.rtn_quantize(x, QuantConfig(bits=8))
    assert q.scales[0] == pytest.approx(4.0 / 255.0)
    assert q.zero_points[0] == 64
    assert q.codes[0, 0] == 0
    assert q.codes[0, 2] == 255
    assert q.codes[0, 1] == _round_ref(0.0 / (4.0 / 255.0)) + 64


def test_rtn_on_grid_values_are_exact():
    # values already on the code grid must survive the round trip unchanged
    scale = 0.25
    codes = np.array([[0, 3, 7, 15], [1, 2, 4, 8]], dtype=np.float64)
    x = (codes - 4.0) * scale
    q = quant.rtn_quantize(x, QuantConfig(bits=4))
    np.testing.assert_allclose(quant.dequantize(q), x, atol=1e-12)


def test_rtn_reconstruction_error_bound():
    rng = np.random.default_rng(5)
    for bits in (2, 4, 8):
        cfg = QuantConfig(bits=bits)
        x = rng.normal(size=(6, 40))
        q = quant.rtn_quantize(x, cfg)
        err = np.abs(quant.dequantize(q) - x).max()
        assert err <= 0.5 * q.scales[0] + 1e-12


def test_rtn_symmetric_params():
    x = np.array([[-2.0, 1.0, 0.5]])
    q = quant.rtn_quantize(x, QuantConfig(bits=8, symmetric=True))
    assert q.zero_points[0] == 128
    assert q.scales[0] == pytest.approx(2.0 / 127.0)


def test_rtn_per_token_matches_rowwise_per_tensor():
    # per-token grouping must equal running per-tensor on each row alone
    rng = np.random.default_rng(6)
    x = rng.normal(size=(5, 16)) * np.array([[1], [10], [0.1], [3], [7]])
    q = quant.rtn_quantize(x, QuantConfig(bits=8, granularity=PER_TOKEN))
    for i in range(x.shape[0]):
        qi = quant.rtn_quantize(x[i : i + 1], QuantConfig(bits=8))
        assert q.scales[i] == pytest.approx(qi.scales[0])
        assert q.zero_points[i] == qi.zero_points[0]
        np.testing.assert_array_equal(q.codes[i], qi.codes[0])


def test_rtn_per_output_row_groups():
    rng = np.random.default_rng(7)
    w = rng.normal(size=(4, 12))
    q = quant.rtn_quantize(w, QuantConfig(bits=4, granularity=PER_OUTPUT_ROW))
    assert q.scales.shape == (4,)
    deq = quant.dequantize(q)
    for i in range(4):
        assert np.abs(deq[i] - w[i]).max() <= 0.5 * q.scales[i] + 1e-12


def test_rtn_constant_input_uses_scale_floor():
    q = quant.rtn_quantize(np.full((2, 3), 5.0), QuantConfig(bits=8))
    assert q.scales[0] == quant.SCALE_FLOOR
    assert 0 <= q.codes.min() and q.codes.max() <= 255


def test_rtn_all_zero_input_is_exact():
    q = quant.rtn_quantize(np.zeros((2, 3)), QuantConfig(bits=8))
    np.testing.assert_array_equal(quant.dequantize(q), np.zeros((2, 3)))


def test_bits_domain():
    with pytest.raises(ValueError):
        QuantConfig(bits=1)
    with pytest.raises(ValueError):
        QuantConfig(bits=9)
    for bits in range(2, 9):
        QuantConfig(bits=bits)


def test_quantized_matrix_validation():
    with pytest.raises(ValueError):
        QuantizedMatrix(np.array([[300]]), [1.0], [0], 8, PER_TENSOR)
    with pytest.raises(ValueError):
        QuantizedMatrix(np.array([[1.5]]), [1.0], [0], 8, PER_TENSOR)
    with pytest.raises(ValueError):
        QuantizedMatrix(np.array([[1]]), [0.0], [0], 8, PER_TENSOR)
    with pytest.raises(ValueError):
        QuantizedMatrix(np.array([[1], [2]]), [1.0], [0], 8, PER_TOKEN)


# ── smoothing ────────────────────────────────────────────────────────────


def test_apply_smoothing_preserves_product():
    rng = np.random.default_rng(8)
    w = rng.normal(size=(4, 6))
    x = rng.normal(size=(6, 10))
    s = np.exp(rng.normal(size=6))
    ws, xs = quant.apply_smoothing(w, x, s)
    ref = w @ x
    rel = np.linalg.norm(ws @ xs - ref, "fro") / np.linalg.norm(ref, "fro")
    assert rel <= 1e-12


def test_apply_smoothing_rejects_bad_factors():
    w = np.ones((2, 3))
    x = np.ones((3, 4))
    with pytest.raises(ValueError):
        quant.apply_smoothing(w, x, [1.0, 2.0])
    with pytest.raises(ValueError):
        quant.apply_smoothing(w, x, [1.0, -1.0, 2.0])
    with pytest.raises(ValueError):
        quant.apply_smoothing(w, x, [1.0, 0.0, 2.0])


def test_quant_loss_matches_reference():
    rng = np.random.default_rng(9)
    cfg = QuantConfig(bits=8)
    w = rng.normal(size=(3, 5))
    x = rng.normal(size=(5, 12))
    f = np.exp(rng.normal(size=5))
    got = quant.quant_loss(w, x, f, cfg)
    wq = quant.dequantize(
        quant.rtn_quantize(w * f[None, :], QuantConfig(bits=8, granularity=PER_OUTPUT_ROW))
    )
    xq = quant.dequantize(quant.rtn_quantize(x / f[:, None], cfg))
    want = np.linalg.norm(wq @ xq - w @ x, "fro")
    assert got == pytest.approx(want, rel=1e-12)


def test_search_smoothing_exponent_on_grid():
    rng = np.random.default_rng(10)
    w = rng.normal(size=(4, 8))
    x = rng.normal(size=(8, 20))
    res = quant.search_smoothing(w, x, QuantConfig(bits=8))
    grid = np.linspace(0.0, 1.0, 21)
    assert any(res.exponent == pytest.approx(e) for e in grid)


def test_search_smoothing_tie_prefers_smaller_exponent():
    # all-ones activations give identical factors (1**e) for every e, so
    # every grid point ties and the search must keep e = 0
    w = np.array([[0.3, -0.7], [1.1, 0.2]])
    x = np.ones((2, 9))
    res = quant.search_smoothing(w, x, QuantConfig(bits=8))
    assert res.exponent == 0.0


def test_search_smoothing_matches_brute_force():
    # independent re-derivation: evaluate every grid exponent with plain
    # numpy and check the search returns the argmin (first on ties)
    cfg = QuantConfig(bits=8)
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        w = rng.normal(size=(4, 6))
        x = rng.normal(size=(6, 24))
        x[rng.integers(0, 6)] *= 50.0
        stat = np.maximum(np.abs(x).max(axis=1), 1e-8)
        losses = []
        for e in np.linspace(0.0, 1.0, 21):
            losses.append(quant.quant_loss(w, x, stat**e, cfg))
        best = int(np.argmin(losses))
        res = quant.search_smoothing(w, x, cfg)
        assert res.exponent == pytest.approx(np.linspace(0, 1, 21)[best])
        assert res.loss == pytest.approx(losses[best], rel=1e-12)


def test_search_smoothing_helps_on_outlier_channel():
    rng = np.random.default_rng(11)
    w = rng.normal(size=(8, 16))
    x = rng.normal(size=(16, 64))
    x[3] *= 100.0  # one dominant activation channel
    cfg = QuantConfig(bits=8)
    res = quant.search_smoothing(w, x, cfg)
    base = quant.quant_loss(w, x, np.ones(16), cfg)
    assert res.loss < base
    assert res.exponent > 0.0


def test_search_smoothing_custom_grid_steps():
    rng = np.random.default_rng(12)
    w = rng.normal(size=(3, 4))
    x = rng.normal(size=(4, 16))
    res = quant.search_smoothing(w, x, QuantConfig(bits=8), grid_steps=5)
    assert res.exponent in (0.0, 0.25, 0.5, 0.75, 1.0)
    with pytest.raises(ValueError):
        quant.search_smoothing(w, x, QuantConfig(bits=8), grid_steps=1)


# ── Hessian construction ─────────────────────────────────────────────────


def test_build_hessian_matches_reference():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(5, 30))
    base = 2.0 * x @ x.T
    lam = 0.01 * np.mean(np.diag(base))
    want = base + lam * np.eye(5)
    got = quant.build_hessian(x)
    np.testing.assert_allclose(got, want, rtol=1e-12)
    assert np.array_equal(got, got.T)


def test_build_hessian_zero_damping():
    rng = np.random.default_rng(14)
    x = rng.normal(size=(3, 9))
    got = quant.build_hessian(x, damping_fraction=0.0)
    np.testing.assert_allclose(got, 2.0 * x @ x.T, rtol=1e-12)


def test_build_hessian_rejects_all_zero():
    with pytest.raises(DegenerateHessianError):
        quant.build_hessian(np.zeros((4, 16)))


def test_build_hessian_rejects_negative_damping():
    with pytest.raises(ValueError):
        quant.build_hessian(np.ones((2, 4)), damping_fraction=-0.1)


# ── channel ordering ─────────────────────────────────────────────────────


def test_channel_order_strategies():
    x = np.array(
        [
            [1.0, -1.0],   # max_abs 1, energy 2
            [3.0, 0.0],    # max_abs 3, energy 9
            [-2.0, 2.0],   # max_abs 2, energy 8
        ]
    )
    np.testing.assert_array_equal(quant.channel_order(x, "none"), [0, 1, 2])
    np.testing.assert_array_equal(quant.channel_order(x, "max_abs"), [1, 2, 0])
    np.testing.assert_array_equal(quant.channel_order(x, "sum_squares"), [1, 2, 0])


def test_channel_order_ties_keep_ascending_index():
    x = np.array([[2.0], [2.0], [1.0]])
    np.testing.assert_array_equal(quant.channel_order(x, "max_abs"), [0, 1, 2])


def test_channel_order_unknown_strategy():
    with pytest.raises(ValueError):
        quant.channel_order(np.ones((2, 2)), "entropy")


# ── inverse factor and compensation ──────────────────────────────────────


def test_inverse_upper_factor_identity():
    rng = np.random.default_rng(15)
    for n in (2, 4, 8):
        a = rng.normal(size=(n, n))
        h = a @ a.T + n * np.eye(n)
        u = quant._inverse_upper_factor(h)
        assert np.allclose(u, np.triu(u))
        np.testing.assert_allclose(u.T @ u, np.linalg.inv(h), rtol=1e-8, atol=1e-10)


def test_inverse_upper_factor_trailing_submatrix_property():
    # the sequential quantizer reads inverses of trailing Hessian blocks off
    # the rows of U: (H[i:, i:])^-1 == U[i:, i:].T @ U[i:, i:]
    rng = np.random.default_rng(16)
    a = rng.normal(size=(6, 6))
    h = a @ a.T + 6 * np.eye(6)
    u = quant._inverse_upper_factor(h)
    for i in range(6):
        want = np.linalg.inv(h[i:, i:])
        got = u[i:, i:].T @ u[i:, i:]
        np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-10)


def test_inverse_upper_factor_recovers_with_damping():
    # rank-deficient PSD matrix: the first attempt fails, escalation succeeds
    v = np.array([[1.0], [2.0], [3.0]])
    h = v @ v.T
    u = quant._inverse_upper_factor(h)
    assert np.isfinite(u).all()


def test_inverse_upper_factor_gives_up():
    with pytest.raises(QuantizationFailedError):
        quant._inverse_upper_factor(-np.eye(3))


def _obs_reference(w, h, bits):
    """Deliberately naive compensation: re-invert the trailing Hessian block
    at every step instead of reading it off the Cholesky factor."""
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[1]
    qmax = (1 << bits) - 1
    lo, hi = w.min(axis=1), w.max(axis=1)
    scale = np.maximum((hi - lo) / qmax, quant.SCALE_FLOOR)
    zp = np.clip(np.array([_round_ref(v) for v in -lo / scale]), 0, qmax)
    work = w.copy()
    codes = np.empty(w.shape, dtype=np.int64)
    for i in range(n):
        hinv = np.linalg.inv(h[i:, i:])
        col = work[:, i]
        c = np.clip(
            np.array([_round_ref(v) for v in col / scale]) + zp, 0, qmax
        )
        codes[:, i] = c
        deq = (c - zp) * scale
        err = (col - deq) / hinv[0, 0]
        if i + 1 < n:
            work[:, i + 1 :] -= np.outer(err, hinv[0, 1:])
    return codes, scale, zp


def test_hessian_quantize_matches_explicit_obs_reference():
    cfg = QuantConfig(bits=4)
    for seed in range(8):
        rng = np.random.default_rng(200 + seed)
        w = rng.normal(size=(3, 5))
        x = rng.normal(size=(5, 40))
        h = quant.build_hessian(x)
        q = quant.hessian_quantize(w, h, cfg)
        codes_ref, scale_ref, zp_ref = _obs_reference(w, h, 4)
        np.testing.assert_array_equal(q.codes, codes_ref)
        np.testing.assert_allclose(q.scales, scale_ref, rtol=1e-12)
        np.testing.assert_array_equal(q.zero_points, zp_ref)


def test_hessian_quantize_diagonal_hessian_is_rtn():
    # with no cross-channel curvature there is nothing to compensate, so
    # the output must be bit-identical to plain round-to-nearest
    rng = np.random.default_rng(17)
    w = rng.normal(size=(6, 10))
    for c in (0.5, 1.0, 8.0):
        h = c * np.eye(10)
        q = quant.hessian_quantize(w, h, QuantConfig(bits=4))
        r = quant.rtn_quantize(w, QuantConfig(bits=4, granularity=PER_OUTPUT_ROW))
        np.testing.assert_array_equal(q.codes, r.codes)
        np.testing.assert_array_equal(q.zero_points, r.zero_points)
        np.testing.assert_allclose(q.scales, r.scales, rtol=0)


def test_hessian_quantize_improves_on_rtn_with_correlated_input():
    cfg = QuantConfig(bits=3)
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(300 + seed)
        base = rng.normal(size=(4, 48))
        mix = rng.normal(size=(8, 4)) @ base  # strongly correlated channels
        x = mix + 0.05 * rng.normal(size=(8, 48))
        w = rng.normal(size=(5, 8))
        h = quant.build_hessian(x)
        q = quant.hessian_quantize(w, h, cfg)
        r = quant.rtn_quantize(w, QuantConfig(bits=3, granularity=PER_OUTPUT_ROW))
        err_q = np.linalg.norm(quant.dequantize(q) @ x - w @ x, "fro")
        err_r = np.linalg.norm(quant.dequantize(r) @ x - w @ x, "fro")
        if err_q <= err_r:
            wins += 1
    assert wins >= 9


def test_hessian_quantize_identity_order_matches_default():
    rng = np.random.default_rng(18)
    w = rng.normal(size=(3, 6))
    x = rng.normal(size=(6, 30))
    h = quant.build_hessian(x)
    cfg = QuantConfig(bits=4)
    q0 = quant.hessian_quantize(w, h, cfg)
    q1 = quant.hessian_quantize(w, h, cfg, order=np.arange(6))
    np.testing.assert_array_equal(q0.codes, q1.codes)


def test_hessian_quantize_order_returns_original_layout():
    # run the permutation path and undo it by hand on a reference run over
    # permuted inputs; codes must land back in the original column order
    rng = np.random.default_rng(19)
    w = rng.normal(size=(4, 5))
    x = rng.normal(size=(5, 30))
    h = quant.build_hessian(x)
    cfg = QuantConfig(bits=4)
    order = np.array([3, 0, 4, 1, 2])
    q = quant.hessian_quantize(w, h, cfg, order=order)
    ref = quant.hessian_quantize(
        w[:, order], h[np.ix_(order, order)], cfg
    )
    # same per-row parameters either way: they come from w before permuting
    np.testing.assert_allclose(q.scales, ref.scales, rtol=0)
    undone = np.empty_like(ref.codes)
    undone[:, order] = ref.codes
    np.testing.assert_array_equal(q.codes, undone)


def test_hessian_quantize_validates_inputs():
    w = np.ones((2, 3))
    with pytest.raises(ValueError):
        quant.hessian_quantize(w, np.eye(4), QuantConfig(bits=4))
    with pytest.raises(ValueError):
        quant.hessian_quantize(w, np.eye(3), QuantConfig(bits=4), order=np.array([0, 1, 1]))


# ── full layer pipeline ──────────────────────────────────────────────────


def test_quantize_layer_populates_result():
    rng = np.random.default_rng(20)
    w = rng.normal(size=(6, 12))
    x = rng.normal(size=(12, 40))
    x[2] *= 60.0
    res = quant.quantize_layer(w, x, QuantConfig(bits=4))
    assert res.quantized.codes.shape == (6, 12)
    assert res.quantized.granularity == PER_OUTPUT_ROW
    assert res.ordering is None
    assert res.output_mse >= 0.0
    assert res.rtn_baseline_mse >= 0.0
    assert 0.0 <= res.smoothing.exponent <= 1.0


def test_quantize_layer_beats_rtn_baseline_on_outliers():
    rng = np.random.default_rng(21)
    w = rng.normal(size=(8, 16))
    x = rng.normal(size=(16, 64))
    x[5] *= 100.0
    res = quant.quantize_layer(w, x, QuantConfig(bits=4))
    assert res.output_mse < res.rtn_baseline_mse


def test_quantize_layer_ordering_field():
    rng = np.random.default_rng(22)
    w = rng.normal(size=(4, 8))
    x = rng.normal(size=(8, 32))
    res = quant.quantize_layer(w, x, QuantConfig(bits=4), ordering="max_abs")
    assert res.ordering is not None
    assert sorted(res.ordering.tolist()) == list(range(8))


def test_quantize_layer_warns_on_few_tokens():
    rng = np.random.default_rng(23)
    w = rng.normal(size=(3, 4))
    x = rng.normal(size=(4, 5))
    with pytest.warns(UserWarning, match="calibration tokens"):
        quant.quantize_layer(w, x, QuantConfig(bits=8))


def test_quantize_layer_validation():
    rng = np.random.default_rng(24)
    w = rng.normal(size=(3, 4))
    with pytest.raises(ValueError):
        quant.quantize_layer(w, rng.normal(size=(5, 16)), QuantConfig(bits=8))
    with pytest.raises(ValueError):
        quant.quantize_layer(
            w,
            rng.normal(size=(4, 16)),
            QuantConfig(bits=8, granularity=PER_OUTPUT_ROW),
        )
    with pytest.raises(ValueError):
        quant.quantize_layer(w, rng.normal(size=(4, 16)), ordering="best")


def test_quantize_layer_degenerate_calibration():
    with pytest.raises(DegenerateHessianError):
        quant.quantize_layer(np.ones((2, 3)), np.zeros((3, 16)), QuantConfig(bits=8))


# ── packed experts ───────────────────────────────────────────────────────


def test_precision_pack_gpu_round_trip():
    rng = np.random.default_rng(25)
    w = rng.normal(size=(4, 10))
    q = quant.rtn_quantize(w, QuantConfig(bits=4, granularity=PER_OUTPUT_ROW))
    packed = quant.precision_pack(q, quant.TARGET_GPU_INT)
    assert packed.byte_size == len(packed.blob)
    back = quant.unpack_expert(packed)
    assert isinstance(back, QuantizedMatrix)
    np.testing.assert_array_equal(back.codes, q.codes)
    np.testing.assert_array_equal(back.scales, q.scales)
    np.testing.assert_array_equal(back.zero_points, q.zero_points)
    assert back.bits == 4
    assert back.granularity == PER_OUTPUT_ROW


def test_precision_pack_gpu_size_formula():
    # header(20) + 16 bytes of parameters per group + packed codes
    rng = np.random.default_rng(26)
    for bits, rows, cols in ((3, 4, 10), (8, 2, 5), (2, 3, 3)):
        w = rng.normal(size=(rows, cols))
        q = quant.rtn_quantize(w, QuantConfig(bits=bits, granularity=PER_OUTPUT_ROW))
        packed = quant.precision_pack(q, quant.TARGET_GPU_INT)
        want = 20 + rows * 16 + (rows * cols * bits + 7) // 8
        assert packed.byte_size == want


def test_precision_pack_cpu_round_trip():
    rng = np.random.default_rng(27)
    w = rng.normal(size=(3, 7))
    q = quant.rtn_quantize(w, QuantConfig(bits=8, granularity=PER_OUTPUT_ROW))
    packed = quant.precision_pack(q, quant.TARGET_CPU_FP)
    assert packed.byte_size == 20 + 3 * 7 * 4
    back = quant.unpack_expert(packed)
    assert back.dtype == np.float32
    np.testing.assert_allclose(back, quant.dequantize(q), rtol=1e-6)


def test_precision_pack_header_fields():
    q = quant.rtn_quantize(np.ones((2, 3)), QuantConfig(bits=8))
    packed = quant.precision_pack(q, quant.TARGET_GPU_INT)
    magic, version, target, bits, gran, rows, cols, groups = struct.unpack(
        "<4sBBBBIII", packed.blob[:20]
    )
    assert magic == b"MOEP"
    assert version == 1
    assert bits == 8
    assert (rows, cols, groups) == (2, 3, 1)


def test_precision_pack_low_bit_codes_survive():
    codes = np.arange(8, dtype=np.int32).reshape(2, 4) % 8
    q = QuantizedMatrix(codes, [0.5], [3], 3, PER_TENSOR)
    packed = quant.precision_pack(q, quant.TARGET_GPU_INT)
    back = quant.unpack_expert(packed)
    np.testing.assert_array_equal(back.codes, codes)


def test_precision_pack_unknown_target():
    q = quant.rtn_quantize(np.ones((1, 2)), QuantConfig(bits=8))
    with pytest.raises(ValueError):
        quant.precision_pack(q, "tpu")


def test_unpack_expert_rejects_garbage():
    with pytest.raises(ValueError):
        quant.unpack_expert(b"XXXX" + b"\x00" * 32)


# ── layer result persistence ─────────────────────────────────────────────


def test_save_load_layer_result(tmp_path):
    rng = np.random.default_rng(28)
    w = rng.normal(size=(5, 9))
    x = rng.normal(size=(9, 33))
    res = quant.quantize_layer(w, x, QuantConfig(bits=4), ordering="sum_squares")
    quant.save_layer_result(res, tmp_path)
    q, doc = quant.load_layer_result(tmp_path)
    np.testing.assert_array_equal(q.codes, res.quantized.codes)
    np.testing.assert_allclose(q.scales, res.quantized.scales, rtol=0)
    assert doc["bits"] == 4
    assert doc["exponent"] == pytest.approx(res.smoothing.exponent)
    assert doc["mse"] == pytest.approx(res.output_mse)
    assert doc["rtn_mse"] == pytest.approx(res.rtn_baseline_mse)
    assert doc["ordering"] == res.ordering.tolist()
    # the granularity describes the stored codes, which are weight rows
    assert doc["granularity"] == PER_OUTPUT_ROW
    assert len(doc["factors"]) == 9
    # the JSON document is the canonical record; keys are stable
    with open(tmp_path / "result.json", encoding="utf-8") as fh:
        raw = json.load(fh)
    assert set(raw) == {
        "exponent",
        "factors",
        "bits",
        "mse",
        "rtn_mse",
        "ordering",
        "scales",
        "zero_points",
        "granularity",
        "smoothing_loss",
    }

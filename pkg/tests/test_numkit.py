"""Dense-matrix helpers: validation, Cholesky, SPD inverse, MOEK file I/O."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from moekit import numkit
from moekit.errors import FormatError, NotPositiveDefiniteError


def _random_spd(rng, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


# ── ensure_matrix ────────────────────────────────────────────────────────


def test_ensure_matrix_accepts_lists_and_casts():
    out = numkit.ensure_matrix([[1, 2], [3, 4]])
    assert out.dtype == np.float64
    assert out.flags["C_CONTIGUOUS"]
    assert out.shape == (2, 2)


def test_ensure_matrix_rejects_bad_inputs():
    with pytest.raises(ValueError):
        numkit.ensure_matrix(np.zeros(3))
    with pytest.raises(ValueError):
        numkit.ensure_matrix(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        numkit.ensure_matrix(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        numkit.ensure_matrix(np.array([[np.inf, 1.0]]))


def test_ensure_matrix_names_the_argument():
    with pytest.raises(ValueError, match="calib"):
        numkit.ensure_matrix(np.zeros(2), "calib")


# ── matmul ───────────────────────────────────────────────────────────────


def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(5):
        a = rng.normal(size=(4, 6))
        b = rng.normal(size=(6, 3))
        np.testing.assert_allclose(numkit.matmul(a, b), a @ b, rtol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        numkit.matmul(np.ones((2, 3)), np.ones((4, 2)))


# ── cholesky ─────────────────────────────────────────────────────────────


def test_cholesky_hand_case():
    # 2x2 with known factor: [[4, 2], [2, 5]] = L L^T, L = [[2, 0], [1, 2]]
    h = np.array([[4.0, 2.0], [2.0, 5.0]])
    low = numkit.cholesky(h)
    np.testing.assert_allclose(low, [[2.0, 0.0], [1.0, 2.0]], atol=1e-14)


def test_cholesky_matches_numpy_on_random_spd():
    rng = np.random.default_rng(1)
    for n in (2, 3, 5, 8, 13):
        h = _random_spd(rng, n)
        np.testing.assert_allclose(
            numkit.cholesky(h), np.linalg.cholesky(h), rtol=1e-10, atol=1e-10
        )


def test_cholesky_reports_failing_pivot():
    # [[1, 2], [2, 1]] has a negative second pivot: 1 - 2*2 = -3
    with pytest.raises(NotPositiveDefiniteError) as exc_info:
        numkit.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert exc_info.value.pivot == 1
    assert exc_info.value.value == pytest.approx(-3.0)


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ValueError):
        numkit.cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_cholesky_is_arithmetic_error():
    # the CLI maps ArithmeticError to exit code 3; keep the subtree intact
    assert issubclass(NotPositiveDefiniteError, ArithmeticError)


# ── spd_inverse ──────────────────────────────────────────────────────────


def test_spd_inverse_round_trip():
    rng = np.random.default_rng(2)
    for n in (2, 4, 7):
        h = _random_spd(rng, n)
        inv = numkit.spd_inverse(h)
        np.testing.assert_allclose(h @ inv, np.eye(n), atol=1e-9)
        # symmetrized exactly, not just approximately
        assert np.array_equal(inv, inv.T)


def test_spd_inverse_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        numkit.spd_inverse(np.array([[0.0, 0.0], [0.0, 1.0]]))


# ── matrix file round-trip ───────────────────────────────────────────────


def test_matrix_file_round_trip_f8(tmp_path):
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 7))
    path = tmp_path / "a.mat"
    numkit.write_matrix(path, a)
    back = numkit.read_matrix(path)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, a)
    back[0, 0] = 99.0  # reads must be owned, writable copies


def test_matrix_file_round_trip_f4(tmp_path):
    rng = np.random.default_rng(4)
    a = rng.normal(size=(3, 2)).astype(np.float32)
    path = tmp_path / "a32.mat"
    numkit.write_matrix(path, a, dtype=np.float32)
    back = numkit.read_matrix(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, a)


def test_matrix_file_exact_bytes(tmp_path):
    # header: magic, u32 rows, u32 cols, u32 dtype tag (1 = float64), all LE
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    path = tmp_path / "golden.mat"
    numkit.write_matrix(path, a)
    blob = path.read_bytes()
    expect = b"MOEK" + struct.pack("<III", 2, 2, 1) + a.tobytes()
    assert blob == expect


def test_matrix_file_bad_magic(tmp_path):
    path = tmp_path / "bad.mat"
    path.write_bytes(b"NOPE" + struct.pack("<III", 1, 1, 1) + b"\x00" * 8)
    with pytest.raises(FormatError):
        numkit.read_matrix(path)


def test_matrix_file_bad_dtype_tag(tmp_path):
    path = tmp_path / "bad.mat"
    path.write_bytes(b"MOEK" + struct.pack("<III", 1, 1, 7) + b"\x00" * 8)
    with pytest.raises(FormatError):
        numkit.read_matrix(path)


def test_matrix_file_truncated_payload(tmp_path):
    path = tmp_path / "bad.mat"
    path.write_bytes(b"MOEK" + struct.pack("<III", 2, 2, 1) + b"\x00" * 8)
    with pytest.raises(FormatError):
        numkit.read_matrix(path)


def test_matrix_file_truncated_header(tmp_path):
    path = tmp_path / "bad.mat"
    path.write_bytes(b"MOEK\x01")
    with pytest.raises(FormatError):
        numkit.read_matrix(path)


def test_matrix_file_rejects_non_finite_payload(tmp_path):
    payload = np.array([[np.nan]]).tobytes()
    path = tmp_path / "bad.mat"
    path.write_bytes(b"MOEK" + struct.pack("<III", 1, 1, 1) + payload)
    with pytest.raises(FormatError):
        numkit.read_matrix(path)


def test_write_matrix_rejects_non_finite():
    with pytest.raises(ValueError):
        numkit.write_matrix("/tmp/never-written.mat", np.array([[np.inf]]))


def test_read_matrix_missing_file(tmp_path):
    with pytest.raises(OSError):
        numkit.read_matrix(tmp_path / "missing.mat")

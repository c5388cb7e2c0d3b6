"""Unit tests for matrix containers, generation, quantization and I/O."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transgemm.matrix import (
    BadMagicError,
    OutOfRangeError,
    QuantMatrix,
    TruncatedError,
    gen_random,
    int_range,
    load_csv_matrix,
    load_qtensor,
    quantize_uniform,
    reference_gemm,
    save_qtensor,
)


def test_int_range():
    assert int_range(2) == (-2, 1)
    assert int_range(4) == (-8, 7)
    assert int_range(8) == (-128, 127)


def test_quantmatrix_rejects_out_of_range():
    with pytest.raises(OutOfRangeError):
        QuantMatrix(1, 2, 4, np.array([[8, 0]]))
    with pytest.raises(OutOfRangeError):
        QuantMatrix(1, 2, 4, np.array([[-9, 0]]))


def test_quantmatrix_rejects_bad_bits():
    with pytest.raises(ValueError):
        QuantMatrix(1, 1, 5, np.array([[0]]))


def test_quantmatrix_data_read_only():
    m = QuantMatrix(1, 2, 4, np.array([[1, 2]]))
    with pytest.raises(ValueError):
        m.data[0, 0] = 3


def test_gen_random_deterministic_and_in_range():
    a = gen_random(16, 16, 4, seed=7)
    b = gen_random(16, 16, 4, seed=7)
    c = gen_random(16, 16, 4, seed=8)
    assert a == b
    assert a != c
    assert a.data.min() >= -8 and a.data.max() <= 7


def test_gen_random_covers_full_range():
    # over enough draws every 2-bit value should appear, including the minimum
    m = gen_random(64, 64, 2, seed=0)
    assert set(np.unique(m.data)) == {-2, -1, 0, 1}


def test_quantize_uniform_known_values():
    # max|v| = 7 with S=4 -> scale 1, integers pass through unchanged
    q = quantize_uniform([[7.0, -3.0, 2.0]], bits=4)
    assert q.data.tolist() == [[7, -3, 2]]
    assert q.scales.tolist() == [[1.0]]
    # scale = 8/7; -8 clamps to the signed floor after rounding
    q = quantize_uniform([[8.0, -8.0]], bits=4)
    assert q.scales[0, 0] == pytest.approx(8.0 / 7.0)
    assert q.data.tolist() == [[7, -7]]


def test_quantize_uniform_all_zero_group():
    q = quantize_uniform([[0.0, 0.0]], bits=8)
    assert q.data.tolist() == [[0, 0]]
    assert q.scales[0, 0] == 0.0


def test_quantize_uniform_group_size():
    q = quantize_uniform([[1.0, 2.0, 30.0, 40.0]], bits=4, group_size=2)
    assert q.scales.shape == (1, 2)
    with pytest.raises(ValueError):
        quantize_uniform([[1.0, 2.0, 3.0]], bits=4, group_size=2)


def test_reference_gemm_identity_and_bruteforce():
    w = gen_random(5, 7, 4, seed=1)
    eye = QuantMatrix(7, 7, 2, np.eye(7, dtype=np.int16))
    assert np.array_equal(reference_gemm(w, eye).data, w.data)
    x = gen_random(7, 3, 4, seed=2)
    got = reference_gemm(w, x).data
    # brute-force triple loop oracle
    for i in range(5):
        for j in range(3):
            acc = sum(int(w.data[i, k]) * int(x.data[k, j]) for k in range(7))
            assert got[i, j] == acc


def test_reference_gemm_shape_mismatch():
    w = gen_random(2, 3, 4, seed=0)
    x = gen_random(4, 2, 4, seed=0)
    with pytest.raises(ValueError):
        reference_gemm(w, x)


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2**31), st.integers(1, 10), st.integers(1, 10),
       st.integers(1, 10))
def test_reference_gemm_bilinear(seed, n, k, m):
    w1 = gen_random(n, k, 4, seed)
    w2 = gen_random(n, k, 4, seed + 1)
    x = gen_random(k, m, 4, seed + 2)
    lhs = reference_gemm(w1, x).data + reference_gemm(w2, x).data
    both = QuantMatrix(n, k, 8, w1.data + w2.data)
    assert np.array_equal(reference_gemm(both, x).data, lhs)


def test_qtensor_round_trip(tmp_path):
    m = gen_random(9, 13, 8, seed=3)
    p = tmp_path / "m.qt"
    save_qtensor(m, p)
    assert load_qtensor(p) == m


def test_qtensor_round_trip_with_scales(tmp_path):
    rng = np.random.default_rng(0)
    q = quantize_uniform(rng.normal(size=(4, 8)), bits=4, group_size=4)
    p = tmp_path / "m.qt"
    save_qtensor(q, p)
    assert load_qtensor(p) == q


def test_qtensor_bad_magic(tmp_path):
    p = tmp_path / "bad.qt"
    p.write_bytes(b"NOPE" + bytes(32))
    with pytest.raises(BadMagicError):
        load_qtensor(p)
    p.write_bytes(b"")
    with pytest.raises(BadMagicError):
        load_qtensor(p)


def test_qtensor_truncated(tmp_path):
    m = gen_random(8, 8, 8, seed=4)
    p = tmp_path / "m.qt"
    save_qtensor(m, p)
    raw = p.read_bytes()
    p.write_bytes(raw[:20])
    with pytest.raises(TruncatedError):
        load_qtensor(p)
    p.write_bytes(raw[:10])
    with pytest.raises(TruncatedError):
        load_qtensor(p)


def test_qtensor_element_out_of_declared_range(tmp_path):
    # hand-craft a 4-bit file containing the value 9
    import struct
    p = tmp_path / "m.qt"
    raw = (b"QTNS" + bytes([1, 4, 0, 0]) + struct.pack("<II", 1, 2)
           + np.array([9, 0], dtype="<i1").tobytes())
    p.write_bytes(raw)
    with pytest.raises(OutOfRangeError):
        load_qtensor(p)


def test_csv_import(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("7,-1,2,3\n0,1,-8,4\n")
    m = load_csv_matrix(p, bits=4)
    assert m.data.tolist() == [[7, -1, 2, 3], [0, 1, -8, 4]]


def test_csv_import_errors(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(ValueError):
        load_csv_matrix(p, bits=4)
    p.write_text("\n".join(",".join(["0"] * 65) for _ in range(2)))
    with pytest.raises(ValueError):
        load_csv_matrix(p, bits=4)
    p.write_text("")
    with pytest.raises(ValueError):
        load_csv_matrix(p, bits=4)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dynattn.linalg import (NonFiniteError, ShapeError, exp_elementwise, matmul, read_csv,
                            read_datn1, read_matrix, row_sums, write_csv, write_datn1)


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)


def test_matmul_zero_and_hand_product():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(m, [[0.0], [0.0]]), [[0.0], [0.0]])
    np.testing.assert_array_equal(matmul(m, [[5.0], [6.0]]), [[17.0], [39.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match="2x3.*2x2"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_exp_examples():
    np.testing.assert_array_equal(exp_elementwise(np.zeros((2, 2))), np.ones((2, 2)))
    assert exp_elementwise([[1.0]])[0, 0] == pytest.approx(math.e, rel=1e-15)


@pytest.mark.parametrize("bad, index", [([[800.0]], (0, 0)), ([[0.0, 1.0], [float("nan"), 2.0]], (1, 0))])
def test_exp_nonfinite_names_index(bad, index):
    with pytest.raises(NonFiniteError) as err:
        exp_elementwise(bad)
    assert err.value.index == index


def test_row_sums_examples():
    np.testing.assert_array_equal(row_sums(np.ones((2, 2))), [2.0, 2.0])
    np.testing.assert_array_equal(row_sums([[1.0, 2.0], [3.0, 4.0]]), [3.0, 7.0])
    np.testing.assert_array_equal(row_sums([[-1.0, 1.0]]), [0.0])


def test_rejects_empty_and_non_2d():
    with pytest.raises(ShapeError):
        matmul(np.ones((0, 2)), np.ones((2, 1)))
    with pytest.raises(ShapeError):
        row_sums(np.ones(3))


small = st.integers(1, 8)
elems = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(small, small, small, small, st.data())
def test_matmul_associative(a, b, c, d, data):
    X = data.draw(arrays(np.float64, (a, b), elements=elems))
    Y = data.draw(arrays(np.float64, (b, c), elements=elems))
    Z = data.draw(arrays(np.float64, (c, d), elements=elems))
    lhs, rhs = matmul(matmul(X, Y), Z), matmul(X, matmul(Y, Z))
    scale = matmul(matmul(np.abs(X), np.abs(Y)), np.abs(Z))
    assert (np.abs(lhs - rhs) <= 1e-12 * scale + 1e-300).all()


@settings(max_examples=50, deadline=None)
@given(small, small, st.data())
def test_row_sums_match_product_with_ones(r, c, data):
    m = data.draw(arrays(np.float64, (r, c), elements=st.floats(0, 10)))
    np.testing.assert_allclose(row_sums(m), matmul(m, np.ones((c, 1)))[:, 0], rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(small, small), elements=st.floats(-700, 700)))
def test_exp_strictly_positive(m):
    assert (exp_elementwise(m) > 0).all()


def test_datn1_layout(tmp_path):
    p = tmp_path / "m.datn"
    write_datn1(p, [[1.0, 2.0, 3.0]])
    blob = p.read_bytes()
    assert blob[:5] == b"DATN1"
    assert blob[5:21] == (1).to_bytes(8, "little") + (3).to_bytes(8, "little")
    assert np.frombuffer(blob[21:], "<f8").tolist() == [1.0, 2.0, 3.0]
    np.testing.assert_array_equal(read_datn1(p), [[1.0, 2.0, 3.0]])


def test_datn1_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.datn"
    p.write_bytes(b"XXXXX" + bytes(16))
    with pytest.raises(ValueError, match="magic"):
        read_datn1(p)
    write_datn1(p, np.ones((2, 2)))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError, match="expected 32"):
        read_datn1(p)


def test_csv_round_trip_exact(tmp_path):
    m = np.array([[0.1, -1e-300], [math.pi, 1e300]])
    p = tmp_path / "m.csv"
    write_csv(p, m)
    assert p.read_text().splitlines()[0] == "2,2"
    back = read_matrix(p)
    assert back.tobytes() == m.tobytes()
    p.write_text("2,2\n1,2\n")
    with pytest.raises(ValueError, match="expected 2 data rows"):
        read_csv(p)

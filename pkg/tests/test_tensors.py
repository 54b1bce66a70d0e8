import numpy as np
import pytest

from mpca.tensors import (
    frobenius_norm,
    inner,
    mode_product,
    outer_product,
    read_long_csv,
    sin_angle,
    unit_vector,
    write_long_csv,
)

SQ3 = np.sqrt(3.0) / 2.0


def test_unit_vector_validation():
    unit_vector([1.0, 0.0])
    with pytest.raises(ValueError):
        unit_vector([1.0, 1.0])
    with pytest.raises(ValueError):
        unit_vector([[1.0], [0.0]])


def test_outer_product_basis():
    t = outer_product([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    expected = np.zeros((2, 2))
    expected[0, 1] = 1.0
    assert np.array_equal(t, expected)

    t = outer_product([np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0])])
    assert t[0, 0] == 1.0 and np.count_nonzero(t) == 1


def test_outer_product_rotated_pair():
    # hand multiplication: column 1 is the first vector, column 2 vanishes
    u = np.array([SQ3, 0.5])
    v = np.array([1.0, 0.0])
    t = outer_product([u, v])
    assert np.allclose(t[:, 0], u) and np.all(t[:, 1] == 0.0)
    assert abs(frobenius_norm(t) - 1.0) < 1e-12


def test_mode_product_identity_and_slices():
    rng = np.random.default_rng(0)
    t = rng.standard_normal((3, 4, 2))
    assert np.allclose(mode_product(t, 1, np.eye(4)), t)
    e2 = np.zeros(3)
    e2[1] = 1.0
    assert np.array_equal(mode_product(t, 0, e2), t[1])


def test_mode_product_hand_sum():
    t = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = mode_product(t, 0, np.array([1.0, 1.0]))
    assert np.array_equal(out, np.array([4.0, 6.0]))


def test_mode_product_rejects_mismatch():
    t = np.zeros((2, 3))
    with pytest.raises(ValueError):
        mode_product(t, 0, np.ones(3))
    with pytest.raises(ValueError):
        mode_product(t, 1, np.ones((2, 2)))


def test_inner_and_frobenius():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.eye(2)
    assert inner(a, b) == 5.0
    assert inner(a, a) == pytest.approx(frobenius_norm(a) ** 2, rel=1e-15)
    assert frobenius_norm(np.zeros((3, 3))) == 0.0
    assert frobenius_norm(np.array([[3.0, 4.0], [0.0, 0.0]])) == 5.0
    with pytest.raises(ValueError):
        inner(a, np.zeros((2, 3)))


def test_inner_of_completely_orthogonal_rank_ones():
    a = outer_product([np.array([1.0, 0.0]), np.array([0.0, 1.0, 0.0])])
    b = outer_product([np.array([0.0, 1.0]), np.array([1.0, 0.0, 0.0])])
    assert inner(a, b) == 0.0


def test_sin_angle_values():
    assert sin_angle(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0
    assert sin_angle(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0
    # 30 degree geometry
    assert sin_angle(np.array([1.0, 0.0]), np.array([SQ3, 0.5])) == pytest.approx(
        0.5, abs=1e-12
    )


def test_sin_angle_symmetry_and_signs():
    rng = np.random.default_rng(1)
    for _ in range(25):
        a = rng.standard_normal(6)
        b = rng.standard_normal(6)
        s = sin_angle(a, b)
        assert 0.0 <= s <= 1.0
        assert s == sin_angle(b, a)
        assert s == sin_angle(-a, b) == sin_angle(a, -b)
    with pytest.raises(ValueError):
        sin_angle(np.zeros(3), np.ones(3))


def test_mode_product_commutes_across_modes():
    rng = np.random.default_rng(2)
    t = rng.standard_normal((3, 4, 5))
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((6, 4))
    left = mode_product(mode_product(t, 0, a), 1, b)
    right = mode_product(mode_product(t, 1, b), 0, a)
    assert np.max(np.abs(left - right)) < 1e-12


def test_inner_outer_factorizes():
    rng = np.random.default_rng(3)
    for _ in range(30):
        us = [rng.standard_normal(d) for d in (3, 4, 2)]
        vs = [rng.standard_normal(d) for d in (3, 4, 2)]
        us = [u / np.linalg.norm(u) for u in us]
        vs = [v / np.linalg.norm(v) for v in vs]
        lhs = inner(outer_product(us), outer_product(vs))
        rhs = np.prod([float(u @ v) for u, v in zip(us, vs)])
        assert abs(lhs - rhs) < 1e-10


def test_long_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    t = rng.standard_normal((3, 2, 4))
    path = tmp_path / "t.csv"
    write_long_csv(path, t)
    back = read_long_csv(path, (3, 2, 4))
    assert np.array_equal(back, t)  # bit-exact via repr round-trip
    inferred = read_long_csv(path)
    assert np.array_equal(inferred, t)


def test_long_csv_sparse_and_missing(tmp_path):
    t = np.zeros((2, 3))
    t[1, 2] = 7.5
    path = tmp_path / "sparse.csv"
    write_long_csv(path, t, include_zeros=False)
    assert len(path.read_text().strip().splitlines()) == 2  # header + one row
    back = read_long_csv(path, (2, 3))
    assert np.array_equal(back, t)
    as_nan = read_long_csv(path, (2, 3), missing=float("nan"))
    assert np.isnan(as_nan).sum() == 5 and as_nan[1, 2] == 7.5


def test_long_csv_rejects_bad_input(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("i1,i2,value\n1,1,1.0\n1,1,2.0\n")
    with pytest.raises(ValueError, match="duplicate"):
        read_long_csv(path)
    path.write_text("i1,i2,value\n5,1,1.0\n")
    with pytest.raises(ValueError, match="outside dims"):
        read_long_csv(path, (2, 2))
    path.write_text("i1,i2,value\n1,1\n")
    with pytest.raises(ValueError, match="columns"):
        read_long_csv(path)


def test_vector_case_supported(tmp_path):
    v = np.array([1.5, -2.0, 0.0])
    path = tmp_path / "vec.csv"
    write_long_csv(path, v)
    assert np.array_equal(read_long_csv(path, (3,)), v)
    assert mode_product(v, 0, np.eye(3)).shape == (3,)
    assert inner(v, v) == pytest.approx(frobenius_norm(v) ** 2)

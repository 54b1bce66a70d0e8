import numpy as np
import pytest

from mpca.model import (
    RankOnePC,
    SampleSet,
    make_components,
    make_model,
    model_from_config,
    model_to_config,
    sample,
)
from mpca.tensors import inner, sin_angle

SQ3 = np.sqrt(3.0) / 2.0


def test_rotated_components_match_benchmark_truth():
    comps = make_components((10, 10), 2, "rotated")
    u11, u12 = comps[0].factors
    u21, u22 = comps[1].factors
    assert np.allclose(u11[:2], [SQ3, 0.5]) and np.all(u11[2:] == 0)
    assert np.allclose(u21[:2], [-0.5, SQ3]) and np.all(u21[2:] == 0)
    assert np.array_equal(u12, np.eye(10)[0])
    assert np.array_equal(u22, np.eye(10)[1])


def test_random_components_orthogonal_and_deterministic():
    a = make_components((7, 5, 6), 3, "random", seed=42)
    b = make_components((7, 5, 6), 3, "random", seed=42)
    for ca, cb in zip(a, b):
        for fa, fb in zip(ca.factors, cb.factors):
            assert np.array_equal(fa, fb)
    for i in range(3):
        for j in range(i + 1, 3):
            for q in range(3):
                assert abs(float(a[i].factors[q] @ a[j].factors[q])) < 1e-12


def test_single_random_component():
    (comp,) = make_components((4, 4), 1, "random", seed=0)
    assert abs(np.linalg.norm(comp.dense()) - 1.0) < 1e-12


def test_component_count_guard():
    with pytest.raises(ValueError):
        make_components((3, 10), 4, "random", seed=0)
    with pytest.raises(ValueError):
        make_components((10, 10), 3, "rotated")


def test_model_validation():
    comps = make_components((5, 5), 2, "random", seed=1)
    with pytest.raises(ValueError, match="non-increasing"):
        make_model((5, 5), [1.0, 2.0], 1.0, seed=1)
    m = make_model((5, 5), [2.0, 1.0], 0.5, seed=1)
    assert m.lambdas == (4.25, 1.25)
    # overlapping components must be rejected
    bad = (comps[0], comps[0])
    from mpca.model import SpikedModel

    with pytest.raises(ValueError, match="not orthogonal"):
        SpikedModel((5, 5), (2.0, 1.0), 0.5, bad)


def test_noiseless_sample_is_rank_one():
    m = make_model((6, 4), [2.0], 0.0, components_mode="random", seed=3)
    data = sample(m, 20, "gaussian", seed=3)
    u = m.components[0].dense()
    for i in range(20):
        if abs(data.factors[i, 0]) > 1e-12:
            assert sin_angle(data.observations[i], u) < 1e-12


def test_sample_reproducible_and_moments():
    m = make_model((6, 5), [2.0], 1.0, components_mode="random", seed=9)
    a = sample(m, 100, "gaussian", seed=123)
    b = sample(m, 100, "gaussian", seed=123)
    assert np.array_equal(a.observations, b.observations)

    big = sample(m, 50_000, "gaussian", seed=7)
    scores = np.tensordot(
        big.observations, m.components[0].dense(), axes=((1, 2), (0, 1))
    )
    assert np.var(scores) == pytest.approx(5.0, rel=0.03)


def test_sample_cross_moment_and_noise_floor():
    m = make_model((6, 5), [2.0, 1.5], 1.0, components_mode="random", seed=11)
    data = sample(m, 50_000, "gaussian", seed=13)
    u1 = m.components[0].dense()
    u2 = m.components[1].dense()
    s1 = np.tensordot(data.observations, u1, axes=((1, 2), (0, 1)))
    s2 = np.tensordot(data.observations, u2, axes=((1, 2), (0, 1)))
    assert abs(np.mean(s1 * s2)) < 0.05

    # a direction completely orthogonal to both components sees only noise
    rng = np.random.default_rng(5)
    basis1 = np.column_stack([m.components[0].factors[0], m.components[1].factors[0]])
    w1 = rng.standard_normal(6)
    w1 -= basis1 @ (basis1.T @ w1)
    w1 /= np.linalg.norm(w1)
    basis2 = np.column_stack([m.components[0].factors[1], m.components[1].factors[1]])
    w2 = rng.standard_normal(5)
    w2 -= basis2 @ (basis2.T @ w2)
    w2 /= np.linalg.norm(w2)
    probe = np.multiply.outer(w1, w2)
    sp = np.tensordot(data.observations, probe, axes=((1, 2), (0, 1)))
    assert np.var(sp) == pytest.approx(1.0, rel=0.05)


def test_centered_poisson_moments():
    m = make_model((10, 10), [2.0], 1.0, components_mode="random", seed=2)
    data = sample(m, 10_000, "centered-poisson", seed=2)  # 1e6 noise entries
    noise = data.noise.ravel()
    assert abs(noise.mean()) < 0.02
    assert np.var(noise) == pytest.approx(1.0, rel=0.03)
    theta = data.factors.ravel()
    assert abs(theta.mean()) < 0.05


def test_unknown_noise_rejected():
    m = make_model((4, 4), [1.0], 1.0, components_mode="random", seed=0)
    with pytest.raises(ValueError, match="noise"):
        sample(m, 10, "uniform", seed=0)


def test_sample_set_csv_round_trip(tmp_path):
    m = make_model((3, 4), [1.5], 1.0, components_mode="random", seed=8)
    data = sample(m, 6, "gaussian", seed=8)
    path = tmp_path / "sample.csv"
    data.to_long_csv(path)
    back = SampleSet.from_long_csv(path, (6, 3, 4))
    assert np.array_equal(back.observations, data.observations)


def test_model_config_round_trip():
    m = make_model((5, 4), [2.0, 1.0], 0.7, components_mode="random", seed=21)
    cfg = model_to_config(m, components_mode="random", seed=21, noise="gaussian")
    m2 = model_from_config(cfg)
    assert m2.dims == m.dims and m2.sigma == m.sigma
    for a, b in zip(m.components, m2.components):
        for fa, fb in zip(a.factors, b.factors):
            assert np.array_equal(fa, fb)


def test_rank_one_pc_invariants():
    with pytest.raises(ValueError):
        RankOnePC((np.array([1.0, 1.0]),))
    c = RankOnePC((np.array([1.0, 0.0]), np.array([0.0, 1.0])), value=2.0)
    assert inner(c.dense(), c.dense()) == pytest.approx(1.0)

import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import ndtr

from mpca.debias import InferenceUnavailableError, build_bundle
from mpca.estimator import AlsConfig
from mpca.inference import (
    LinearFormTarget,
    infer_linear_form,
    normal_quantile,
    resolve_regime,
    theoretical_density,
)
from mpca.model import make_model, sample

SQ3 = np.sqrt(3.0) / 2.0


def _quantile_oracle(a):
    # numeric inversion of the normal cdf, independent of ndtri
    return brentq(lambda z: ndtr(-z) - a, 0.0, 40.0, xtol=1e-12)


def test_normal_quantile_against_inversion_oracle():
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.025) == pytest.approx(1.9599640, abs=1e-6)
    assert normal_quantile(0.005) == pytest.approx(2.5758293, abs=1e-6)
    for a in (0.4, 0.1, 0.025, 0.005, 1e-4):
        z = normal_quantile(a)
        assert z == pytest.approx(_quantile_oracle(a), abs=1e-9)
        assert abs(ndtr(-z) - a) <= 1e-9
    with pytest.raises(ValueError):
        normal_quantile(0.0)
    with pytest.raises(ValueError):
        normal_quantile(0.6)


def test_resolve_regime_thresholds():
    assert resolve_regime("auto", (10, 10), 200) == "A"  # 10 < 14.1
    assert resolve_regime("auto", (50, 50), 400) == "B"  # 20 <= 50 < 54.3
    assert resolve_regime("auto", (80, 80), 400) == "C"
    assert resolve_regime("B", (10, 10), 200) == "B"
    with pytest.raises(ValueError):
        resolve_regime("D", (10, 10), 200)


def test_theoretical_density_values():
    u = np.zeros(10)
    u[0], u[1] = SQ3, 0.5
    e1 = np.eye(10)[0]
    mean, sd = theoretical_density(1.0, 2.0, u, e1, 200)
    assert mean == pytest.approx(SQ3)
    assert sd == pytest.approx(math.sqrt(0.3125 * 0.25 / 200), abs=1e-12)
    assert sd == pytest.approx(0.019764, abs=1e-6)

    _, sd0 = theoretical_density(0.0, 2.0, u, e1, 200)
    assert sd0 == 0.0
    _, sdu = theoretical_density(1.0, 2.0, u, u, 200)
    assert sdu == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        theoretical_density(1.0, 0.0, u, e1, 200)


@pytest.fixture(scope="module")
def small_bundle():
    m = make_model((8, 7), [2.0, 1.5], 1.0, components_mode="random", seed=20)
    data = sample(m, 160, "gaussian", seed=20)
    return m, build_bundle(data.observations, 2, AlsConfig(seed=20))


def test_infer_linear_form_basic(small_bundle):
    _, bundle = small_bundle
    e1 = np.eye(8)[0]
    res = infer_linear_form(bundle, LinearFormTarget(0, 0, e1), alpha=0.05, regime="A")
    assert res.lo <= res.point <= res.hi
    assert res.hi - res.lo == pytest.approx(2 * normal_quantile(0.025) * res.se)
    assert res.regime == "A"
    # rejection decision matches the interval excluding zero for two-sided tests
    assert res.reject == (res.lo > 0 or res.hi < 0)


def test_inference_scale_equivariance(small_bundle):
    _, bundle = small_bundle
    v = np.zeros(8)
    v[2] = 1.0
    a = infer_linear_form(bundle, LinearFormTarget(0, 0, v), regime="A")
    b = infer_linear_form(bundle, LinearFormTarget(0, 0, 7.0 * v), regime="A")
    assert b.point == pytest.approx(7.0 * a.point, rel=1e-12)
    assert b.reject == a.reject
    if a.se > 0:
        assert b.z_stat == pytest.approx(a.z_stat, rel=1e-12)


def test_inference_sign_consistency(small_bundle):
    _, bundle = small_bundle
    v = np.zeros(8)
    v[1] = 1.0
    a = infer_linear_form(bundle, LinearFormTarget(0, 0, v), regime="B")
    b = infer_linear_form(bundle, LinearFormTarget(0, 0, -v), regime="B")
    assert b.point == pytest.approx(-a.point, rel=1e-12)
    assert (b.lo, b.hi) == pytest.approx((-a.hi, -a.lo), rel=1e-12)
    assert b.reject == a.reject


def test_degenerate_probe_along_direction(small_bundle):
    _, bundle = small_bundle
    v = bundle.one_step[0][0].copy()
    res = infer_linear_form(bundle, LinearFormTarget(0, 0, v), regime="A")
    assert res.degenerate and res.se == 0.0
    assert res.lo == res.point == res.hi


def test_explicit_factor_algebraic_bound(small_bundle):
    # sqrt(1+x) <= 1 + x/2 makes the correction vanish as n grows with d
    # fixed, so the A and B regimes agree asymptotically
    from mpca.debias import explicit_bias

    _, bundle = small_bundle
    s0 = bundle.variances.sigma0_sq
    sk = float(bundle.variances.sigma_sq[0])
    tau = s0 / sk + (s0 / sk) ** 2
    for q, d in enumerate(bundle.dims):
        b = explicit_bias(d, bundle.n_used, s0, sk)
        assert 0.0 <= b <= (d / bundle.n_used) * tau / 2


def test_regimes_agree_for_small_dimension(small_bundle):
    _, bundle = small_bundle
    v = np.eye(8)[0]
    a = infer_linear_form(bundle, LinearFormTarget(0, 0, v), regime="A")
    b = infer_linear_form(bundle, LinearFormTarget(0, 0, v), regime="B")
    assert abs(b.point - a.point) <= 0.2  # same estimand, close estimates


def test_regime_c_uses_empirical_factor(small_bundle):
    _, bundle = small_bundle
    v = np.eye(8)[0]
    res = infer_linear_form(bundle, LinearFormTarget(0, 0, v), regime="C")
    raw = float(bundle.cross_fit[0][0] @ v)
    assert res.point == pytest.approx((1 + bundle.bias_empirical[0, 0]) * raw)


def test_inference_unavailable_paths(small_bundle):
    import copy

    _, bundle = small_bundle
    v = np.eye(8)[0]
    # clipped spike variance blocks every regime
    broken = copy.deepcopy(bundle)
    broken.variances.clipped = (True, False)
    with pytest.raises(InferenceUnavailableError):
        infer_linear_form(broken, LinearFormTarget(0, 0, v), regime="A")

    no_quarters = copy.deepcopy(bundle)
    no_quarters.bias_empirical = None
    with pytest.raises(InferenceUnavailableError):
        infer_linear_form(no_quarters, LinearFormTarget(0, 0, v), regime="C")

    no_split = copy.deepcopy(bundle)
    no_split.cross_fit = None
    with pytest.raises(InferenceUnavailableError):
        infer_linear_form(no_split, LinearFormTarget(0, 0, v), regime="B")


def test_target_validation(small_bundle):
    _, bundle = small_bundle
    with pytest.raises(ValueError):
        LinearFormTarget(0, 0, np.zeros(8))
    with pytest.raises(ValueError):
        infer_linear_form(bundle, LinearFormTarget(5, 0, np.eye(8)[0]))
    with pytest.raises(ValueError):
        infer_linear_form(bundle, LinearFormTarget(0, 0, np.eye(5)[0]))
    with pytest.raises(ValueError):
        infer_linear_form(bundle, LinearFormTarget(0, 0, np.eye(8)[0]), alpha=1.5)

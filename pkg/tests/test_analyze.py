import numpy as np
import pytest

from mpca.analyze import preprocess, run_analysis
from mpca.debias import build_bundle
from mpca.estimator import AlsConfig
from mpca.model import make_model, sample


def test_drop_missing_units():
    x = np.zeros((3, 2, 2))
    x[0, 0, 0] = np.nan
    x[1] = np.nan
    clean, rep = preprocess(x, drop_missing_threshold=0.5)
    assert rep.dropped_units == [1]
    assert clean.shape[0] == 2
    with pytest.raises(ValueError, match="every unit"):
        preprocess(np.full((2, 2, 2), np.nan), drop_missing_threshold=0.0)


def test_log_transform_flags_nonpositive():
    x = np.array([[[1.0, np.e], [0.0, -2.0]]])
    clean, rep = preprocess(x, log_transform=True)
    assert rep.log_skipped == 2
    assert clean[0, 0, 0] == 0.0 and clean[0, 0, 1] == pytest.approx(1.0)
    # flagged cells become missing and are filled with 0
    assert clean[0, 1, 0] == 0.0 and clean[0, 1, 1] == 0.0
    assert rep.missing_filled == 2


def test_mad_standardization_default_series():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 6, 3)) * np.array([1.0, 5.0, 0.2]) + np.array(
        [0.0, 10.0, -3.0]
    )
    clean, rep = preprocess(x, mad_standardize=True)
    for j in range(3):
        series = clean[:, :, j]
        assert abs(series.mean()) < 1e-12
        assert np.mean(np.abs(series - series.mean())) == pytest.approx(1.0, rel=1e-10)
    assert rep.constant_series == 0


def test_mad_constant_series_excluded():
    x = np.ones((10, 2, 2))
    x[:, :, 1] = np.arange(10)[:, None]
    clean, rep = preprocess(x, mad_standardize=True)
    assert rep.constant_series == 1
    assert np.all(clean[:, :, 0] == 0.0)  # flagged series zeroed out


def test_mad_custom_series_axes():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((8, 5, 3))
    clean, _ = preprocess(x, mad_standardize=True, series_axes=(0, 2))
    # statistics were taken over axis 1 only
    mean = clean.mean(axis=1)
    assert np.max(np.abs(mean)) < 1e-12
    with pytest.raises(ValueError, match="every axis"):
        preprocess(x, mad_standardize=True, series_axes=(0, 1, 2))
    with pytest.raises(ValueError, match="out of range"):
        preprocess(x, mad_standardize=True, series_axes=(5,))


def test_center_flag():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((20, 3, 3)) + 4.0
    clean, rep = preprocess(x, center=True)
    assert rep.centered
    assert np.max(np.abs(clean.mean(axis=0))) < 1e-12


def test_missing_fill_order():
    x = np.array([[[np.nan, 2.0], [3.0, 4.0]]] * 4)
    clean, rep = preprocess(x)
    assert rep.missing_filled == 4
    assert np.all(clean[:, 0, 0] == 0.0)


def test_run_analysis_matches_direct_pipeline():
    m = make_model((6, 5), [2.0], 1.0, components_mode="random", seed=30)
    data = sample(m, 60, "gaussian", seed=30)
    result = run_analysis(data.observations, 1, regime="A", seed=30)
    bundle = build_bundle(
        data.observations, 1, AlsConfig(seed=30), split=False, quarters=False
    )
    assert np.array_equal(result.loadings[0][0], bundle.one_step[0][0])
    assert np.array_equal(result.loadings[0][1], bundle.one_step[0][1])
    assert result.regime == "A"
    assert 0.0 < result.shares[0] < 1.0
    # interval geometry holds coordinate-wise
    assert np.all(result.lo[0][0] <= result.loadings[0][0])
    assert np.all(result.loadings[0][0] <= result.hi[0][0])


def test_run_analysis_regime_b_scales_loadings():
    m = make_model((12, 11), [2.5], 1.0, components_mode="random", seed=31)
    data = sample(m, 80, "gaussian", seed=31)
    result = run_analysis(data.observations, 1, regime="B", seed=31)
    bundle = build_bundle(data.observations, 1, AlsConfig(seed=31), quarters=False)
    from mpca.debias import explicit_bias

    b = explicit_bias(
        12, bundle.n_used, bundle.variances.sigma0_sq, float(bundle.variances.sigma_sq[0])
    )
    assert np.allclose(result.loadings[0][0], (1 + b) * np.asarray(bundle.cross_fit[0][0]))


def test_run_analysis_report_round_trip(tmp_path):
    from mpca.analyze import write_analysis

    m = make_model((5, 4), [1.5], 1.0, components_mode="random", seed=32)
    data = sample(m, 40, "gaussian", seed=32)
    result = run_analysis(data.observations, 1, regime="A", seed=32)
    written = write_analysis(result, tmp_path, figures=False)
    names = {p.name for p in written}
    assert names == {"loadings.csv", "report.json"}
    lines = (tmp_path / "loadings.csv").read_text().strip().splitlines()
    assert lines[0] == "component,mode,index,estimate,se,lo,hi,z,reject,regime"
    assert len(lines) == 1 + 5 + 4
    assert lines[1].endswith(",A")
    import json

    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["fitted_components"][0]["k"] == 1
    assert len(payload["fitted_components"][0]["factors"]) == 2

import json
import math

import numpy as np
import pytest

import tess


def test_version_and_models():
    assert tess.__version__ == "0.1.0"
    assert "banana" in tess.known_models()


def test_banana_values():
    assert tess.banana_logdensity(np.zeros(2)) == 0.0
    assert tess.banana_log_normalizer() == pytest.approx(2.8775978372492634, abs=1e-12)


def test_flow_round_trip(tmp_path):
    flow = tess.TransportMap(3, n_pairs=2, seed=1)
    x, logdet = flow.forward(np.array([0.1, -0.2, 0.3]))
    np.testing.assert_array_equal(x, [0.1, -0.2, 0.3])
    assert logdet == 0.0

    rng = np.random.default_rng(0)
    flow.set_params(rng.uniform(-0.3, 0.3, flow.param_count))
    u = rng.standard_normal(3)
    x, fwd = flow.forward(u)
    back, inv = flow.inverse(x)
    np.testing.assert_allclose(back, u, atol=1e-12)
    assert fwd == pytest.approx(-inv, abs=1e-12)

    path = tmp_path / "flow.bin"
    flow.save(path)
    np.testing.assert_array_equal(tess.TransportMap.load(path).params(), flow.params())


def test_iat_and_summary():
    assert tess.iat([1.0, -1.0, 1.0, -1.0], window_factor=0.0) == pytest.approx(0.125)
    np.testing.assert_allclose(tess.autocovariance([1.0, -1.0, 1.0, -1.0]), [4, -3, 2, -1], atol=1e-12)
    with pytest.raises(tess.NumericalError):
        tess.iat([2.0] * 10)

    draws = np.random.default_rng(1).standard_normal((500, 4, 2))
    s = tess.summarize(draws)
    assert s["tau"].shape == (4, 2)
    assert s["tau_max"] == pytest.approx(0.5, abs=0.15)
    report = tess.diagnose("gaussian", draws, stein_cap=256)
    assert list(report) == ["tau_max", "sigma_tau", "ess", "ess_per_chain", "stein_u", "stein_v", "warnings"]


def test_hmm_filter_value():
    params = [0.01, -0.02, 0.7, 0.5, 1.3, 0.8, 0.6, 0.3, 0.35]
    value = tess.hmm_filter_loglik(params, [0.4, -0.9, 1.2, 0.1, -0.3])
    assert value == pytest.approx(-6.427331883883112, abs=1e-10)


def test_config_errors():
    with pytest.raises(tess.ConfigError):
        tess.default_config("unicorn")
    with pytest.raises(tess.ConfigError):
        tess.run({"model": "banana", "not_a_key": 1})


def test_short_run(tmp_path):
    cfg = {
        "model": "banana",
        "chains": 8,
        "warmup": 5,
        "samples": 20,
        "pretrain_steps": 5,
        "pretrain_batch": 16,
        "stein_cap": 64,
        "output_dir": str(tmp_path / "out"),
    }
    manifest = tess.run(cfg)
    assert manifest["status"] == "ok"
    samples = tess.read_samples_csv(tmp_path / "out" / "samples.csv")
    assert samples.shape == (20, 8, 2)
    diag = json.loads((tmp_path / "out" / "diagnostics.json").read_text())
    assert math.isfinite(diag["tau_max"])

import itertools
import math

import numpy as np
import pytest

import relaxflow as rf


def test_alpha_schedule():
    assert rf.alphas(10, 0.2) == [1.0, 0.9, 0.8] + [0.0] * 8
    assert rf.alpha_schedule(2, 10, 0.2) == 0.8
    with pytest.raises(ValueError):
        rf.alpha_schedule(0, 10, 1.5)


def test_mixture_velocity_at_t0_points_at_the_mean():
    m = rf.GaussianMixture([1.0], np.array([[1.0, -2.0]]), [1e-3])
    v = m.velocity(np.zeros(2), 0.0)
    assert np.allclose(v, [1.0, -2.0], atol=1e-9)
    assert m.sample(5, seed=3).shape == (5, 2)
    with pytest.raises(ValueError):
        rf.GaussianMixture([0.5], np.array([[0.0]]), [1.0])


def test_relax_field_keeps_constants_and_smooths():
    const = np.full((16, 16, 2), 3.5)
    assert np.allclose(rf.relax_field(const, 1.5), const, atol=1e-12)
    rng = np.random.default_rng(0)
    noisy = rng.normal(size=(32, 32, 1))
    assert np.array_equal(rf.relax_field(noisy, 0.0), noisy)
    assert rf.estimate_lipschitz(rf.relax_field(noisy, 1.0)) <= rf.estimate_lipschitz(noisy) + 1e-9
    low, high = rf.band_energy(noisy, 0.1)
    assert low > 0 and high > 0


def test_attention_blur():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(8, 8))
    assert np.array_equal(rf.blur_logits(logits, 0.0), logits)
    q, k, v = rng.normal(size=(4, 3)), rng.normal(size=(6, 3)), rng.normal(size=(6, 2))
    out = rf.relaxed_attention(q, k, v, 1.0)
    assert out.shape == (4, 2)


def test_wasserstein_matches_brute_force():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    brute = min(sum(np.sum((a[i] - b[p[i]]) ** 2) for i in range(5)) for p in itertools.permutations(range(5)))
    assert math.isclose(rf.wasserstein2_exact(a, b), math.sqrt(brute / 5), rel_tol=1e-12)
    assert rf.wasserstein2_gaussian_1d(0, 1, 3, 5) == pytest.approx(5.0)
    assert abs(rf.frechet_distance(a, a)) < 1e-8


def test_visibility():
    assert rf.soft_visibility(2.0, 1.0, 1.0, 3.0) == pytest.approx(math.exp(-3.0), abs=1e-12)
    camera = {
        "intrinsics": {"fx": 40.0, "fy": 40.0, "cx": 32.0, "cy": 32.0},
        "rotation": np.eye(3).tolist(),
        "scale": [1.0, 1.0, 1.0],
        "translation": [0.0, 0.0, 60.0],
        "width": 64,
        "height": 64,
    }
    voxels = np.array([[0, 0, 0], [0, 0, 5]], dtype=np.int32)
    w = rf.compute_visibility(voxels, 16, camera)
    assert w["weights"][0] == 1.0
    assert 0.0 < w["weights"][1] < 1.0


def test_experiment_runner():
    assert "stability" in rf.scenario_names()
    cfg = rf.default_config("lipschitz")
    assert cfg["scenario"] == "lipschitz"
    report = rf.run_experiment({"scenario": "lipschitz", "seeds": 2, "sigmas": [1.0]})
    assert all(v["pass"] for v in report["verdicts"])
    with pytest.raises(rf.ConfigError):
        rf.run_experiment({"scenario": "lipschitz", "rho": 4})

import json
import math

import numpy as np
import pytest

from switchbb.bench import (
    ExperimentConfig,
    classification_error,
    exact_recovery,
    gen_bako,
    gen_robust,
    gen_switching,
    gen_vidal,
    match_modes,
    nmse,
    oracle,
    run_experiment,
    write_outputs,
)
from switchbb.core import SwitchingModel
from switchbb.swreg import cost_sw


# ---------------------------------------------------------------- generators


def test_gen_switching_noiseless_consistency():
    data = gen_switching(2, 2, 50, sigma=0.0, seed=0)
    assert cost_sw(SwitchingModel.from_modes(data.true_params), data) == pytest.approx(0.0, abs=1e-20)


def test_gen_switching_label_frequencies_near_uniform():
    n, N = 3, 10_000
    data = gen_switching(n, 2, N, sigma=0.1, seed=1)
    p = 1.0 / n
    bound = 5 * math.sqrt(N * p * (1 - p))
    for j in range(1, n + 1):
        assert abs(np.sum(data.true_labels == j) - N * p) <= bound


def test_gen_switching_rejects_near_origin_regressors():
    data = gen_switching(2, 3, 500, sigma=0.1, seed=2)
    assert np.all(np.linalg.norm(data.X, axis=1) >= 0.5 * math.sqrt(3))


def test_gen_vidal_recursion_and_truth():
    data = gen_vidal(200, sigma=0.0, seed=3)
    assert np.allclose(data.true_params, [[-0.9, 1.0], [0.7, -1.0]])
    # noiseless data satisfies the active mode's recursion exactly
    pred = np.einsum("ij,ij->i", data.X, data.true_params[data.true_labels - 1])
    assert np.allclose(pred, data.y, atol=1e-12)
    # regressors chain the outputs: x_{i+1} = [y_i, u_{i+1}]
    assert np.allclose(data.X[1:, 0], data.y[:-1])


def test_gen_vidal_oracle_accuracy_scale():
    data = gen_vidal(1000, sigma=0.2, seed=4)
    fit = oracle(data)
    assert 1e-5 <= fit.nmse <= 1e-3  # paper-scale: ~1e-4 at N=1000


def test_gen_bako_recursion_and_snr():
    data = gen_bako(3, 300, snr_db=30.0, seed=5)
    assert data.true_params.shape == (3, 4)
    # regressors chain outputs and inputs: x_i = [y_{i-1}, y_{i-2}, u_i, u_{i-1}]
    assert np.allclose(data.X[1:, 1], data.X[:-1, 0])
    assert np.allclose(data.X[1:, 3], data.X[:-1, 2])
    resid = data.y - np.einsum("ij,ij->i", data.X, data.true_params[data.true_labels - 1])
    snr = 10 * math.log10(np.var(data.y - resid) / np.var(resid))
    assert abs(snr - 30.0) <= 1.0


def test_gen_bako_five_modes_bounded():
    data = gen_bako(5, 300, snr_db=30.0, seed=6)
    assert data.true_params.shape == (5, 4)
    assert np.all(np.abs(data.y) < 1e6)


def test_gen_robust_flags_and_counts():
    data = gen_robust(3, 200, ratio=0.4, sigma=0.1, seed=7)
    assert data.outlier_mask.sum() == 80
    clean = gen_robust(3, 50, ratio=0.0, sigma=0.1, seed=8)
    assert clean.outlier_mask.sum() == 0
    resid = clean.y - clean.X @ clean.true_params[0]
    assert np.abs(resid).max() < 1.0


def test_gen_robust_affine_and_positive():
    data = gen_robust(4, 100, ratio=0.5, sigma=0.0, positive_only=True, affine=True, seed=9)
    assert np.all(data.X[:, -1] == 1.0)
    gross = data.y - data.X @ data.true_params[0]
    assert np.all(gross[data.outlier_mask] > 0)
    assert np.allclose(gross[~data.outlier_mask], 0.0, atol=1e-12)


# ------------------------------------------------------------------- metrics


def test_nmse_zero_on_truth_and_permutation():
    theta = np.array([[1.0, 2.0], [-3.0, 0.5]])
    assert nmse(theta, theta) == 0.0
    assert nmse(theta[::-1], theta) == 0.0


def test_nmse_hand_value():
    theta = np.array([[3.0, 4.0]])
    w = theta + 0.1 * np.array([[0.3, 0.4]])
    assert nmse(w, theta) == pytest.approx(1e-4)


def test_nmse_rejects_zero_norm_truth():
    with pytest.raises(ValueError):
        nmse(np.array([[1.0]]), np.array([[0.0]]))


def test_match_modes_finds_best_permutation():
    truth = np.array([[0.0, 0.0], [10.0, 10.0], [-10.0, 5.0]])
    est = truth[[2, 0, 1]]
    perm = match_modes(est, truth)
    assert np.allclose(est[list(perm)], truth)


def test_classification_error_perfect_and_permuted():
    data = gen_switching(2, 2, 100, sigma=0.0, seed=10)
    model = SwitchingModel.from_modes(data.true_params)
    assert classification_error(model, data) == 0.0
    swapped = SwitchingModel.from_modes(data.true_params[::-1])
    assert classification_error(swapped, data) == 0.0


def test_classification_error_random_estimate_bounded():
    data = gen_switching(2, 2, 200, sigma=0.1, seed=11)
    rng = np.random.default_rng(0)
    model = SwitchingModel.from_modes(rng.uniform(-5, 5, size=(2, 2)))
    assert classification_error(model, data) <= 0.5


def test_exact_recovery_thresholds():
    theta = np.array([1.0, 2.0, 3.0, 4.0])
    assert exact_recovery(theta, theta)
    assert not exact_recovery(theta + 1e-5, theta)
    assert exact_recovery(theta + 1e-8, theta)


def test_oracle_noiseless_switching():
    data = gen_switching(2, 2, 60, sigma=0.0, seed=12)
    fit = oracle(data)
    assert fit.nmse == pytest.approx(0.0, abs=1e-18)
    assert fit.ce <= 0.05  # only geometric ties can disagree


def test_oracle_robust_ignores_outliers():
    data = gen_robust(3, 100, ratio=0.4, sigma=0.0, seed=13)
    fit = oracle(data)
    assert fit.nmse == pytest.approx(0.0, abs=1e-18)


def test_oracle_requires_ground_truth():
    from switchbb.core import Dataset

    with pytest.raises(ValueError):
        oracle(Dataset([[1.0]], [1.0]))


# ---------------------------------------------------------------- experiment


def _tiny_config(**kw):
    base = dict(
        family="switching-random", n=2, d=1, N=40, sigma=0.1, trials=2, seed=123, restarts=10
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_switching_smoke():
    run = run_experiment(_tiny_config())
    assert len(run.results) == 2
    assert all(r.error is None for r in run.results)
    assert all(r.nmse < 1e-2 for r in run.results)
    agg = run.aggregate["per_loss"]["sw"]
    assert agg["gap_certified"] == 2


def test_run_experiment_recovery_smoke():
    cfg = _tiny_config(
        family="exact-recovery", d=2, N=60, ratio=0.5, eps_rule="fixed", eps=1e-6, trials=1,
        losses=("l0",),
    )
    run = run_experiment(cfg)
    row = run.results[0]
    assert row.error is None
    assert row.recovered is True
    assert run.aggregate["per_loss"]["l0"]["recovery_rate"] == 1.0


def test_run_experiment_survives_trial_failure(monkeypatch):
    import switchbb.bench as bench_mod

    calls = {"k": 0}
    orig = bench_mod.generate

    def flaky(config, seed):
        calls["k"] += 1
        if calls["k"] == 1:
            raise RuntimeError("boom")
        return orig(config, seed)

    monkeypatch.setattr(bench_mod, "generate", flaky)
    run = run_experiment(_tiny_config())
    errors = [r for r in run.results if r.error is not None]
    assert len(errors) == 1
    assert "boom" in errors[0].error
    assert run.aggregate["errors"]


def test_write_outputs_deterministic_and_timing_separate(tmp_path):
    cfg = _tiny_config(trials=2)
    run1 = run_experiment(cfg)
    run2 = run_experiment(cfg)
    p1 = write_outputs(run1, tmp_path / "a", "csv")
    p2 = write_outputs(run2, tmp_path / "b", "csv")
    canonical1 = [p for p in p1 if "timing" not in p.name]
    canonical2 = [p for p in p2 if "timing" not in p.name]
    for f1, f2 in zip(canonical1, canonical2):
        assert f1.read_bytes() == f2.read_bytes()
    timing = json.loads((tmp_path / "a.timing.json").read_text())
    assert timing["total"] > 0.0
    trials_text = (tmp_path / "a.trials.csv").read_text()
    assert "wall_time" not in trials_text.splitlines()[0]


def test_write_outputs_json_format(tmp_path):
    run = run_experiment(_tiny_config(trials=1))
    paths = write_outputs(run, tmp_path / "out", "json")
    rows = json.loads((tmp_path / "out.trials.json").read_text())
    assert rows[0]["loss"] == "sw"
    agg = json.loads((tmp_path / "out.aggregate.json").read_text())
    assert agg["config"]["family"] == "switching-random"

"""Benchmark harness: data generators, oracle baseline, accuracy metrics
and the seeded experiment runner.

Five experiment families are supported; each trial generates data, runs the
matching solver, scores the estimate against the ground truth and against a
least-squares oracle that knows the true classification.  Canonical result
files (per-trial table plus aggregate) are fully deterministic for a given
config and seed; wall-clock timings go to a separate non-canonical sidecar
so reruns stay byte-identical.
"""

from __future__ import annotations

import itertools
import json
import math
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import bnb
from .berr import decompose, solve_be
from .core import Dataset, SwitchingModel
from .lstsq import ols
from .swreg import classify, solve_switching

__all__ = [
    "FAMILIES",
    "ExperimentConfig",
    "TrialResult",
    "ExperimentRun",
    "gen_switching",
    "gen_vidal",
    "gen_bako",
    "gen_robust",
    "generate",
    "oracle",
    "OracleFit",
    "nmse",
    "match_modes",
    "classification_error",
    "exact_recovery",
    "run_experiment",
    "write_outputs",
]

FAMILIES = (
    "switching-random",
    "vidal-benchmark",
    "bako-system",
    "robust-outliers",
    "exact-recovery",
)

RECOVERY_TOL = 1e-6  # Euclidean distance under which recovery counts as exact

VIDAL_MODES = np.array([[-0.9, 1.0], [0.7, -1.0]])
BAKO_MODES = np.array(
    [
        [-0.4, 0.25, -0.15, 0.08],
        [1.55, -0.58, -2.1, 0.96],
        [1.0, -0.24, -0.65, 0.3],
    ]
)


@dataclass
class ExperimentConfig:
    """One benchmark run: a family plus its sizes, noise and solver knobs.

    ``eps_rule`` is either ``"1.5sigma"`` (tube of 1.5 times the noise level)
    or ``"fixed"`` with ``eps`` set.  Defaults follow the experiment
    protocols: box half-width 10 and relative tolerance 1e-3.
    """

    family: str
    n: int = 2
    d: int = 2
    N: int = 1000
    sigma: float = 0.1
    ratio: float = 0.0
    snr_db: float = 30.0
    eps_rule: str = "1.5sigma"
    eps: float | None = None
    tol: float = 1e-3
    box_halfwidth: float = 10.0
    seed: int = 0
    trials: int = 10
    affine: bool = False
    positive_outliers: bool = False
    losses: tuple[str, ...] = ("l0", "l2")
    restarts: int = 100
    node_limit: int | None = None
    time_limit: float | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.eps_rule not in ("1.5sigma", "fixed"):
            raise ValueError("eps_rule must be '1.5sigma' or 'fixed'")
        if self.eps_rule == "fixed" and self.eps is None:
            raise ValueError("eps_rule 'fixed' needs eps")

    def tube_radius(self, data: Dataset) -> float:
        if self.eps_rule == "fixed":
            return float(self.eps)
        sigma = data.noise_std if data.noise_std else self.sigma
        return 1.5 * float(sigma)


@dataclass
class TrialResult:
    """Outcome of one trial (one loss where several are run)."""

    trial: int
    loss: str
    nmse: float = math.nan
    ce: float = math.nan
    recovered: bool | None = None
    oracle_nmse: float = math.nan
    oracle_ce: float = math.nan
    n_estimated: int | None = None
    upper: float = math.nan
    lower: float = math.nan
    relative_gap: float = math.nan
    iterations: int = 0
    boxes_explored: int = 0
    boxes_pruned: int = 0
    terminated_by: str = ""
    wall_time: float = 0.0
    error: str | None = None


@dataclass
class ExperimentRun:
    config: ExperimentConfig
    results: list[TrialResult]
    aggregate: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# generators


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _draw_regressors(rng: np.random.Generator, N: int, d: int) -> np.ndarray:
    """Uniform draws in [-5, 5]^d, resampled away from the origin.

    Points with norm below 0.5*sqrt(d) carry almost no mode information and
    are rejected.
    """
    radius = 0.5 * math.sqrt(d)
    X = rng.uniform(-5.0, 5.0, size=(N, d))
    while True:
        close = np.linalg.norm(X, axis=1) < radius
        if not close.any():
            return X
        X[close] = rng.uniform(-5.0, 5.0, size=(int(close.sum()), d))


def gen_switching(n: int, d: int, N: int, sigma: float, seed=0) -> Dataset:
    """Random switching-regression data: uniform modes, Gaussian noise."""
    rng = _rng(seed)
    theta = rng.uniform(-5.0, 5.0, size=(n, d))
    X = _draw_regressors(rng, N, d)
    labels = rng.integers(1, n + 1, size=N)
    noise = rng.normal(0.0, sigma, size=N) if sigma > 0 else np.zeros(N)
    y = np.einsum("ij,ij->i", X, theta[labels - 1]) + noise
    return Dataset(X, y, true_labels=labels, true_params=theta, noise_std=float(sigma))


def _simulate_arx(modes: np.ndarray, labels: np.ndarray, u: np.ndarray, noise: np.ndarray, lags: int) -> tuple[np.ndarray, np.ndarray]:
    """Simulate a switched ARX system; returns (X, y).

    Regressors are [y lags..., u_i, u_{i-1}...]; the trajectory starts at
    rest (zero initial lags).
    """
    N = labels.size
    y_hist = [0.0] * lags
    u_hist = [0.0] * (lags - 1)
    X = np.empty((N, modes.shape[1]))
    y = np.empty(N)
    for i in range(N):
        row = y_hist[:lags] + [u[i]] + u_hist[: lags - 1]
        X[i] = row
        y[i] = float(modes[labels[i] - 1] @ X[i]) + noise[i]
        if not math.isfinite(y[i]) or abs(y[i]) > 1e6:
            raise OverflowError("trajectory diverged")
        y_hist = [y[i]] + y_hist[: lags - 1]
        if lags > 1:
            u_hist = [u[i]] + u_hist[: lags - 2]
    return X, y


def gen_vidal(N: int, sigma: float = 0.2, seed=0) -> Dataset:
    """Two-mode switched first-order system with random input in [-1, 1]."""
    attempt = 0
    while True:
        rng = _rng(seed if attempt == 0 else (seed, "retry", attempt))
        labels = rng.integers(1, 3, size=N)
        u = rng.uniform(-1.0, 1.0, size=N)
        noise = rng.normal(0.0, sigma, size=N) if sigma > 0 else np.zeros(N)
        try:
            X, y = _simulate_arx(VIDAL_MODES, labels, u, noise, lags=1)
        except OverflowError:
            attempt += 1
            continue
        return Dataset(X, y, true_labels=labels, true_params=VIDAL_MODES.copy(), noise_std=float(sigma))


def _stable_extra_modes(rng: np.random.Generator, count: int) -> np.ndarray:
    """Random stable second-order modes (real poles inside 0.9)."""
    modes = []
    for _ in range(count):
        p1, p2 = rng.uniform(-0.9, 0.9, size=2)
        b = rng.uniform(-2.0, 2.0, size=2)
        modes.append([p1 + p2, -p1 * p2, b[0], b[1]])
    return np.array(modes)


def gen_bako(n: int, N: int, snr_db: float = 30.0, seed=0) -> Dataset:
    """Three-mode second-order switched system (optionally extended to 5).

    The noise level is calibrated on the noiseless trajectory so that
    var(signal)/sigma^2 matches the requested SNR.
    """
    if n not in (3, 5):
        raise ValueError("the switched benchmark system has 3 or 5 modes")
    attempt = 0
    while True:
        rng = _rng(seed if attempt == 0 else (seed, "retry", attempt))
        modes = BAKO_MODES.copy()
        if n == 5:
            modes = np.vstack([modes, _stable_extra_modes(rng, 2)])
        labels = rng.integers(1, n + 1, size=N)
        u = rng.uniform(-1.0, 1.0, size=N)
        try:
            _, y_clean = _simulate_arx(modes, labels, u, np.zeros(N), lags=2)
            sigma = float(np.std(y_clean)) * 10.0 ** (-snr_db / 20.0)
            noise = rng.normal(0.0, sigma, size=N)
            X, y = _simulate_arx(modes, labels, u, noise, lags=2)
        except OverflowError:
            attempt += 1
            continue
        return Dataset(X, y, true_labels=labels, true_params=modes, noise_std=sigma)


def gen_robust(
    d: int,
    N: int,
    ratio: float,
    sigma: float,
    positive_only: bool = False,
    affine: bool = False,
    seed=0,
) -> Dataset:
    """Linear data with a fraction of grossly corrupted points.

    Outliers get an extra N(100, 1000^2) offset (its absolute value when
    ``positive_only``); the affine variant fixes the last regressor
    coordinate to 1.
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError("outlier ratio must be in [0, 1)")
    rng = _rng(seed)
    theta = rng.uniform(-5.0, 5.0, size=d)
    if affine:
        X = np.ones((N, d))
        if d > 1:
            X[:, : d - 1] = _draw_regressors(rng, N, d - 1)
    else:
        X = _draw_regressors(rng, N, d)
    noise = rng.normal(0.0, sigma, size=N) if sigma > 0 else np.zeros(N)
    n_out = int(ratio * N)
    mask = np.zeros(N, dtype=bool)
    mask[rng.choice(N, size=n_out, replace=False)] = True
    gross = rng.normal(100.0, 1000.0, size=N)
    if positive_only:
        gross = np.abs(gross)
    y = X @ theta + noise + np.where(mask, gross, 0.0)
    return Dataset(X, y, true_params=theta[None, :], outlier_mask=mask, noise_std=float(sigma))


def generate(config: ExperimentConfig, seed) -> Dataset:
    """Generate one trial dataset for the config's family."""
    fam = config.family
    if fam == "switching-random":
        return gen_switching(config.n, config.d, config.N, config.sigma, seed)
    if fam == "vidal-benchmark":
        return gen_vidal(config.N, config.sigma, seed)
    if fam == "bako-system":
        return gen_bako(config.n, config.N, config.snr_db, seed)
    if fam == "robust-outliers":
        return gen_robust(config.d, config.N, config.ratio, config.sigma, config.positive_outliers, config.affine, seed)
    if fam == "exact-recovery":
        return gen_robust(config.d, config.N, config.ratio, 0.0, config.positive_outliers, config.affine, seed)
    raise AssertionError(fam)


# ---------------------------------------------------------------------------
# metrics


def match_modes(estimate: np.ndarray, truth: np.ndarray) -> tuple[int, ...]:
    """Mode permutation minimizing the total squared parameter distance.

    Returns ``perm`` such that estimate row ``perm[j]`` is matched to truth
    row ``j``; exhaustive over permutations (n <= 5 in all experiments).
    """
    n = truth.shape[0]
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth must have matching shapes")
    best, best_perm = math.inf, tuple(range(n))
    for perm in itertools.permutations(range(n)):
        err = float(sum(np.sum((truth[j] - estimate[perm[j]]) ** 2) for j in range(n)))
        if err < best:
            best, best_perm = err, perm
    return best_perm


def nmse(estimate, truth) -> float:
    """Normalized parametric error after mode matching.

    Sums, over true modes, the squared parameter distance divided by the
    true vector's squared norm.
    """
    est = estimate.modes if isinstance(estimate, SwitchingModel) else np.atleast_2d(np.asarray(estimate, dtype=float))
    tru = truth.modes if isinstance(truth, SwitchingModel) else np.atleast_2d(np.asarray(truth, dtype=float))
    norms = np.sum(tru * tru, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("true parameter vectors must be nonzero")
    perm = match_modes(est, tru)
    return float(sum(np.sum((tru[j] - est[perm[j]]) ** 2) / norms[j] for j in range(tru.shape[0])))


def classification_error(estimate: SwitchingModel, data: Dataset, perm: tuple[int, ...] | None = None) -> float:
    """Fraction of points whose estimated mode disagrees with the truth.

    Modes are aligned with the permutation chosen by the parameter matching
    (recomputed from ``true_params`` when not supplied).
    """
    if data.true_labels is None:
        raise ValueError("classification error needs true labels")
    if perm is None:
        if data.true_params is None:
            raise ValueError("need true parameters (or an explicit permutation) to align modes")
        perm = match_modes(estimate.modes, data.true_params)
    pred = classify(estimate, data)
    # pred values are positions in the estimate; map them back to true modes.
    to_true = np.empty(estimate.n, dtype=int)
    for true_j, est_j in enumerate(perm):
        to_true[est_j] = true_j + 1
    return float(np.mean(to_true[pred - 1] != data.true_labels))


def exact_recovery(estimate, truth) -> bool:
    """Whether the estimate lies within 1e-6 (Euclidean) of the truth."""
    e = np.asarray(estimate, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    return bool(np.linalg.norm(e - t) < RECOVERY_TOL)


@dataclass(frozen=True, eq=False)
class OracleFit:
    """Least-squares fit with knowledge of the true classification."""

    params: np.ndarray
    nmse: float
    ce: float


def oracle(data: Dataset) -> OracleFit:
    """Per-class least squares using the true labels (or the inlier mask)."""
    if data.true_params is None:
        raise ValueError("oracle needs true parameters")
    if data.true_labels is not None:
        n = data.true_params.shape[0]
        params = np.empty((n, data.d))
        for j in range(1, n + 1):
            idx = np.flatnonzero(data.true_labels == j)
            if idx.size == 0:
                raise ValueError(f"mode {j} has no points; oracle undefined")
            params[j - 1], _ = ols(data.X[idx], data.y[idx])
        fit_nmse = nmse(params, data.true_params)
        fit_ce = classification_error(SwitchingModel.from_modes(params), data)
        return OracleFit(params, fit_nmse, fit_ce)
    if data.outlier_mask is not None:
        idx = np.flatnonzero(~data.outlier_mask)
        if idx.size == 0:
            raise ValueError("no inliers; oracle undefined")
        w, _ = ols(data.X[idx], data.y[idx])
        return OracleFit(w[None, :], nmse(w[None, :], data.true_params), math.nan)
    raise ValueError("oracle needs true labels or an outlier mask")


# ---------------------------------------------------------------------------
# experiment runner


def _solver_options(config: ExperimentConfig) -> bnb.SolveOptions:
    return bnb.SolveOptions(
        node_limit=config.node_limit,
        time_limit=config.time_limit,
        workers=config.workers,
    )


def _report_fields(report) -> dict:
    return {
        "upper": report.upper,
        "lower": report.lower,
        "relative_gap": report.relative_gap,
        "iterations": report.iterations,
        "boxes_explored": report.boxes_explored,
        "boxes_pruned": report.boxes_pruned,
        "terminated_by": report.terminated_by,
        "wall_time": report.wall_time,
    }


def _run_switching_trial(config: ExperimentConfig, data: Dataset, trial: int, seed) -> list[TrialResult]:
    n = data.true_params.shape[0]
    report = solve_switching(
        data,
        n,
        tol=config.tol,
        halfwidth=config.box_halfwidth,
        seed=seed,
        restarts=config.restarts,
        options=_solver_options(config),
    )
    model = SwitchingModel(n, report.best_point)
    perm = match_modes(model.modes, data.true_params)
    orc = oracle(data)
    return [
        TrialResult(
            trial=trial,
            loss="sw",
            nmse=nmse(model.modes, data.true_params),
            ce=classification_error(model, data, perm),
            oracle_nmse=orc.nmse,
            oracle_ce=orc.ce,
            **_report_fields(report),
        )
    ]


def _loss_p(loss: str) -> int:
    if loss not in ("l0", "l2"):
        raise ValueError("loss must be 'l0' or 'l2'")
    return 0 if loss == "l0" else 2


def _run_bako_trial(config: ExperimentConfig, data: Dataset, trial: int, seed) -> list[TrialResult]:
    eps = config.tube_radius(data)
    n_true = data.true_params.shape[0]
    orc = oracle(data)
    rows = []
    for loss in config.losses:
        dec = decompose(
            data,
            eps,
            _loss_p(loss),
            tol=config.tol,
            halfwidth=config.box_halfwidth,
            seed=seed,
            restarts=config.restarts,
            options=_solver_options(config),
        )
        row = TrialResult(trial=trial, loss=loss, n_estimated=dec.n_estimated, oracle_nmse=orc.nmse, oracle_ce=orc.ce)
        if dec.n_estimated >= n_true:
            # Greedy order is coverage order: score the first n_true models.
            est = np.vstack([sm.params for sm in dec.submodels[:n_true]])
            model = SwitchingModel.from_modes(est)
            perm = match_modes(est, data.true_params)
            row.nmse = nmse(est, data.true_params)
            row.ce = classification_error(model, data, perm)
        last = dec.reports[-1] if dec.reports else None
        if last is not None:
            row.iterations = sum(r.iterations for r in dec.reports)
            row.boxes_explored = sum(r.boxes_explored for r in dec.reports)
            row.boxes_pruned = sum(r.boxes_pruned for r in dec.reports)
            row.wall_time = sum(r.wall_time for r in dec.reports)
            row.terminated_by = last.terminated_by
            row.upper = last.upper
            row.lower = last.lower
            row.relative_gap = last.relative_gap
        rows.append(row)
    return rows


def _run_robust_trial(config: ExperimentConfig, data: Dataset, trial: int, seed) -> list[TrialResult]:
    eps = config.tube_radius(data) if config.family == "robust-outliers" else float(config.eps or RECOVERY_TOL)
    theta = data.true_params[0]
    orc = oracle(data)
    rows = []
    for loss in config.losses:
        report = solve_be(
            data,
            eps,
            _loss_p(loss),
            tol=config.tol,
            halfwidth=config.box_halfwidth,
            seed=seed,
            restarts=config.restarts,
            options=_solver_options(config),
        )
        rows.append(
            TrialResult(
                trial=trial,
                loss=loss,
                nmse=nmse(report.best_point[None, :], data.true_params),
                recovered=exact_recovery(report.best_point, theta),
                oracle_nmse=orc.nmse,
                **_report_fields(report),
            )
        )
    return rows


def run_trial(config: ExperimentConfig, trial: int) -> list[TrialResult]:
    """Run a single seeded trial of the configured family."""
    seed = (config.seed, trial)
    data = generate(config, seed)
    if config.family in ("switching-random", "vidal-benchmark"):
        return _run_switching_trial(config, data, trial, seed)
    if config.family == "bako-system":
        return _run_bako_trial(config, data, trial, seed)
    return _run_robust_trial(config, data, trial, seed)


def _agg_stats(values: list[float]) -> dict:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return {"mean": None, "std": None, "count": 0}
    arr = np.asarray(vals)
    return {"mean": float(arr.mean()), "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0, "count": int(arr.size)}


def aggregate_results(config: ExperimentConfig, results: list[TrialResult]) -> dict:
    """Mean/std summary per loss, mirroring the result-table layout."""
    losses = sorted({r.loss for r in results})
    summary: dict = {"family": config.family, "trials": config.trials, "per_loss": {}}
    for loss in losses:
        rows = [r for r in results if r.loss == loss and r.error is None]
        failures = [r for r in results if r.loss == loss and r.error is not None]
        rec = [r.recovered for r in rows if r.recovered is not None]
        entry = {
            "nmse": _agg_stats([r.nmse for r in rows]),
            "ce": _agg_stats([r.ce for r in rows]),
            "oracle_nmse": _agg_stats([r.oracle_nmse for r in rows]),
            "iterations": _agg_stats([float(r.iterations) for r in rows]),
            "gap_certified": sum(r.terminated_by in ("gap_tolerance", "absolute_gap") for r in rows),
            "recovery_rate": (sum(rec) / len(rec)) if rec else None,
            "n_estimated": sorted({r.n_estimated for r in rows if r.n_estimated is not None}),
            "failed_trials": len(failures),
        }
        summary["per_loss"][loss] = entry
    summary["errors"] = [{"trial": r.trial, "loss": r.loss, "error": r.error} for r in results if r.error is not None]
    return summary


def run_experiment(config: ExperimentConfig) -> ExperimentRun:
    """Run all trials; per-trial failures are recorded, the run continues."""
    results: list[TrialResult] = []
    for t in range(config.trials):
        try:
            results.extend(run_trial(config, t))
        except Exception:  # noqa: BLE001 - failures become result rows
            results.append(TrialResult(trial=t, loss="error", error=traceback.format_exc(limit=3)))
    return ExperimentRun(config, results, aggregate_results(config, results))


# ---------------------------------------------------------------------------
# output

_TRIAL_COLUMNS = (
    "trial",
    "loss",
    "nmse",
    "ce",
    "recovered",
    "oracle_nmse",
    "oracle_ce",
    "n_estimated",
    "upper",
    "lower",
    "relative_gap",
    "iterations",
    "boxes_explored",
    "boxes_pruned",
    "terminated_by",
    "error",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_outputs(run: ExperimentRun, out_prefix, fmt: str = "csv") -> list[Path]:
    """Write canonical result files plus a timing sidecar.

    Canonical files (deterministic for a given config+seed):
      ``<prefix>.trials.csv`` or ``.trials.json`` and ``<prefix>.aggregate.json``.
    Wall-clock timings are volatile and go to ``<prefix>.timing.json`` only.
    """
    if fmt not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    rows = [{c: getattr(r, c) for c in _TRIAL_COLUMNS} for r in run.results]
    if fmt == "csv":
        trials_path = prefix.with_suffix(".trials.csv")
        lines = [",".join(_TRIAL_COLUMNS)]
        lines += [",".join(_cell(row[c]) for c in _TRIAL_COLUMNS) for row in rows]
        trials_path.write_text("\n".join(lines) + "\n")
    else:
        trials_path = prefix.with_suffix(".trials.json")
        clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()} for row in rows]
        trials_path.write_text(json.dumps(clean, indent=2) + "\n")
    written.append(trials_path)

    agg_path = prefix.with_suffix(".aggregate.json")
    payload = {"config": asdict(run.config), "aggregate": run.aggregate}
    agg_path.write_text(json.dumps(payload, indent=2) + "\n")
    written.append(agg_path)

    timing_path = prefix.with_suffix(".timing.json")
    timing = {
        "per_trial": [{"trial": r.trial, "loss": r.loss, "wall_time": r.wall_time} for r in run.results],
        "total": float(sum(r.wall_time for r in run.results)),
    }
    timing_path.write_text(json.dumps(timing, indent=2) + "\n")
    written.append(timing_path)
    return written

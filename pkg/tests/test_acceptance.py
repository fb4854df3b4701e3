"""Acceptance criteria, each at its stated tolerance.

The Monte Carlo criteria share experiment runs: a repetition's result does
not depend on the total repetition count or on which other classifiers
run beside it, so the first 50 repetitions of a 100-repetition run are the
50-repetition study. All runs use seed 0.

Set ``FPCBAG_ACCEPTANCE_CACHE`` to a directory to reuse error tables
between sessions; entries are keyed by the configuration and a hash of the
package sources, so any code change invalidates them.
"""

import functools
import hashlib
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import fpcbag
from fpcbag.classifiers import ClassifierKind
from fpcbag.data import CsvSchema, FunctionalDataset, SparseCurve
from fpcbag.ensemble import (
    bootstrap_fit,
    calibrate,
    majority_from_votes,
    oob_weighted_from_votes,
    predict_bayesian,
    predict_majority,
    predict_oob_weighted,
)
from fpcbag.calibration import fit_calibration, log_posterior
from fpcbag.experiment import ExperimentConfig, RealDataSource, ResultsTable, run_experiment
from fpcbag.fpca import CovarianceSurface, FpcaConfig, FpcaModel, MeanFunction, eigendecompose, make_grid, pace_scores
from fpcbag.simulate import eigenfunction, generate, scenario

import oracles

pytestmark = pytest.mark.slow

SEED = 0
RF, LDA, NB, LOGIT, QDA = "rf", "lda", "naivebayes", "logit", "qda"

# scenario -> (classifiers, repetitions)
RUNS = {
    1: ((RF,), 100),
    2: ((RF,), 50),
    3: ((RF,), 50),
    4: ((RF, LDA), 100),
    5: ((RF,), 50),
    6: ((RF,), 50),
    7: ((RF, LOGIT, LDA), 50),
    8: ((RF, NB), 100),
    9: ((RF, LOGIT, LDA), 50),
}


def _source_hash() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(fpcbag.__file__).parent.rglob("*.py")):
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def _cached(config: ExperimentConfig) -> ResultsTable:
    cache = os.environ.get("FPCBAG_ACCEPTANCE_CACHE")
    if not cache:
        return run_experiment(config)
    key = hashlib.sha256((repr(config) + _source_hash()).encode()).hexdigest()[:24]
    path = Path(cache) / f"{key}.npz"
    if path.exists():
        z = np.load(path, allow_pickle=False)
        return ResultsTable(
            config.classifiers,
            config.rules,
            tuple(int(r) for r in z["reps"]),
            z["errors"],
            k_replicas=tuple(tuple(int(k) for k in row) for row in z["k_replicas"]),
        )
    table = run_experiment(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, reps=np.array(table.reps), errors=table.errors, k_replicas=np.array(table.k_replicas))
    return table


@functools.lru_cache(maxsize=None)
def study(sid: int) -> ResultsTable:
    kinds, reps = RUNS[sid]
    return _cached(ExperimentConfig(scenario=sid, classifiers=kinds, repetitions=reps, B=100, seed=SEED))


def _means(table: ResultsTable, kind: str, n_reps: int | None = None) -> dict[str, float]:
    out = {}
    for rule in ("single", "majority", "oobweight", "bayesian"):
        vals = table.cell(kind, rule)
        out[rule] = float(np.mean(vals[:n_reps]))
    return out


def _sd(table, kind, rule, n_reps=None):
    return float(np.std(table.cell(kind, rule)[:n_reps], ddof=1))


def test_criterion_01_scenario1_rf(criterion):
    t = study(1)
    m = _means(t, RF)
    ok = 21 <= m["single"] <= 28 and 16 <= m["bayesian"] <= 23 and m["bayesian"] < m["single"]
    criterion(1, ok, f"Scenario 1 RF R={t.n_reps}: Single {m['single']:.2f}% in [21,28], Bayesian {m['bayesian']:.2f}% in [16,23]")
    assert ok


def test_criterion_02_scenario4_lda(criterion):
    t = study(4)
    m = _means(t, LDA)
    gap_bm = m["majority"] - m["bayesian"]
    gap_ms = m["single"] - m["majority"]
    sd_bm = np.sqrt((_sd(t, LDA, "bayesian") ** 2 + _sd(t, LDA, "majority") ** 2) / 2)
    sd_ms = np.sqrt((_sd(t, LDA, "majority") ** 2 + _sd(t, LDA, "single") ** 2) / 2)
    ok = 6.5 <= m["bayesian"] <= 11 and gap_bm >= -sd_bm and gap_ms >= -sd_ms
    criterion(
        2,
        ok,
        f"Scenario 4 LDA R={t.n_reps}: Bayesian {m['bayesian']:.2f} <= Majority {m['majority']:.2f} <= Single "
        f"{m['single']:.2f} (gaps {gap_bm:+.2f}, {gap_ms:+.2f}; pooled SDs {sd_bm:.2f}, {sd_ms:.2f})",
    )
    assert ok


def test_criterion_03_scenario8_nb(criterion):
    t = study(8)
    m = _means(t, NB)
    ok = 28 <= m["bayesian"] <= 35 and m["single"] - m["bayesian"] >= 1.0
    criterion(3, ok, f"Scenario 8 NB R={t.n_reps}: Bayesian {m['bayesian']:.2f}% in [28,35], Single {m['single']:.2f}%")
    assert ok


def test_criterion_04_mean_identical_groups(criterion):
    vals = {(sid, kind): _means(study(sid), kind)["single"] for sid in (7, 9) for kind in (LOGIT, LDA)}
    ok = all(45 <= v <= 55 for v in vals.values())
    detail = ", ".join(f"sc{sid} {kind} {v:.2f}" for (sid, kind), v in vals.items())
    criterion(4, ok, f"Single errors in [45,55]: {detail}")
    assert ok


def test_criterion_05_rank_property(criterion):
    holds = []
    rows = []
    for sid in range(1, 10):
        m = _means(study(sid), RF, 50)
        ordered = m["bayesian"] <= m["oobweight"] <= m["majority"] <= m["single"]
        holds.append(ordered)
        rows.append(f"sc{sid}{'+' if ordered else '-'}")
    ok = sum(holds) >= 7
    criterion(5, ok, f"RF Bayesian<=OobWeight<=Majority<=Single at R=50 in {sum(holds)}/9 scenarios ({' '.join(rows)})")
    assert ok


def test_criterion_06_pace_oracle(criterion):
    grid = make_grid((0.0, 10.0), 21)
    phi = np.stack([eigenfunction(1, grid), eigenfunction(2, grid)])
    mean = grid + np.sin(grid)
    lam = np.array([4.0, 1.5])
    sigma2 = 0.5
    model = FpcaModel(MeanFunction(grid, mean, 1.0), lam, phi, sigma2, 0.99, 1.0)
    pick = [1, 6, 10, 15, 19]
    rng = np.random.default_rng(606)
    xi_true = rng.standard_normal(2) * np.sqrt(lam)
    P = phi[:, pick].T
    z = mean[pick] + P @ xi_true + rng.normal(0, np.sqrt(sigma2), 5)
    ours = pace_scores(model, SparseCurve("toy", grid[pick], z))
    sigma = P @ np.diag(lam) @ P.T + sigma2 * np.eye(5)
    analytic = np.diag(lam) @ P.T @ np.linalg.solve(sigma, z - mean[pick])
    mc = oracles.monte_carlo_conditional_mean(mean[pick], P, lam, sigma2, z, 1_000_000, np.random.default_rng(7))
    d_exact = float(np.max(np.abs(ours - analytic)))
    d_mc = float(np.max(np.abs(ours - mc)))
    ok = d_exact < 1e-8 and d_mc < 0.01
    criterion(6, ok, f"PACE scores vs analytic {d_exact:.1e} (<1e-8), vs 10^6-draw Monte Carlo {d_mc:.4f} (<0.01)")
    assert ok


def test_criterion_07_eigen_recovery(criterion):
    grid = make_grid((0.0, 10.0), 51)
    phi = np.stack([eigenfunction(k, grid) for k in (1, 2, 3)])
    lam_true = np.array([16.0, 8.0, 4.0])
    surface = CovarianceSurface(grid, (phi.T * lam_true) @ phi, 1.0)
    lam, ef, k = eigendecompose(surface, 0.99)
    rel = np.abs(lam[:3] / lam_true - 1)
    sup = max(float(np.max(np.abs(np.sign(ef[j] @ phi[j]) * ef[j] - phi[j]))) for j in range(3))
    ok = k == 3 and np.all(rel < 0.02) and sup < 0.02
    criterion(7, ok, f"eigenvalues {np.round(lam[:3], 4).tolist()} (max rel err {rel.max():.1e}), sup-norm {sup:.1e}, K={k}")
    assert ok


def test_criterion_08_calibration_oracle(criterion):
    fixtures = oracles.calibration_fixtures()
    worst_coef = 0.0
    worst_grad = 0.0
    for p, y in fixtures.values():
        model = fit_calibration(p, y)
        ref = oracles.grid_map(p, y, (10.0, 2.5))
        worst_coef = max(worst_coef, float(np.max(np.abs(model.coef - ref))))
        f = lambda b: oracles.cauchy_log_posterior(b, p, y, (10.0, 2.5))
        g = oracles.finite_difference_gradient(f, model.coef, h=1e-5)
        worst_grad = max(worst_grad, float(np.max(np.abs(g))))
    ok = len(fixtures) >= 5 and "separated" in fixtures and worst_coef < 1e-3 and worst_grad < 1e-6
    criterion(
        8, ok, f"{len(fixtures)} fixtures incl. separated: max |coef - grid MAP| {worst_coef:.1e}, max |grad| {worst_grad:.1e}"
    )
    assert ok


def test_criterion_09_vote_identities(criterion, scenario1_small):
    rng = np.random.default_rng(909)
    agree = 0
    for _ in range(1000):
        B = 2 * int(rng.integers(0, 50)) + 1
        votes = rng.integers(0, 2, (B, 1))
        e = np.full(B, rng.uniform(0.01, 0.6))
        agree += int(np.array_equal(oob_weighted_from_votes(votes, e), majority_from_votes(votes)))
    ens = bootstrap_fit(scenario1_small, "lda", B=1, seed=9)
    r = ens.replicas[0]
    test = list(generate(scenario(1, n=100, seed=99)))
    p = r.predict_proba(test)
    labels = (p > 0.5).astype(int)
    calib = calibrate(ens)
    pi, bayes = predict_bayesian(ens, calib, test)
    same_major = np.array_equal(predict_majority(ens, test), labels)
    same_oob = np.array_equal(predict_oob_weighted(ens, test), labels)
    same_bayes = np.array_equal(bayes, calib.predict_label(p)) and np.allclose(pi, calib.predict_proba(p))
    ok = agree == 1000 and same_major and same_oob and same_bayes
    criterion(
        9,
        ok,
        f"OobWeight == Majority on {agree}/1000 patterns; B=1 Majority/OobWeight equal the replica label: "
        f"{same_major and same_oob}; Bayesian equals calibrating the replica probability: {same_bayes}",
    )
    assert ok


def _simulate_cli(out: Path, workers: int):
    cmd = [
        sys.executable, "-m", "fpcbag.cli", "simulate", "--scenario", "1", "--reps", "20", "--seed", "42",
        "--workers", str(workers), "--out", str(out), "--quiet",
    ]
    subprocess.run(cmd, check=True, capture_output=True, text=True)
    return (out / "summary.csv").read_bytes()


def test_criterion_10_determinism(criterion, tmp_path):
    one = _simulate_cli(tmp_path / "w1", 1)
    eight = _simulate_cli(tmp_path / "w8", 8)
    ok = one == eight
    rows = one.decode().count("\n") - 1
    criterion(10, ok, f"simulate --scenario 1 --reps 20 --seed 42: summary.csv identical under 1 and 8 workers ({rows} rows)")
    assert ok


def test_criterion_11_k_bookkeeping(criterion):
    t = study(1)
    ks = np.concatenate([np.asarray(k) for k in t.k_replicas[:20]])
    ok = ks.size == 2000 and ks.min() >= 2 and ks.max() <= 6 and 3.3 <= ks.mean() <= 4.4
    criterion(11, ok, f"per-replica K over 20 reps x B=100: range [{ks.min()}, {ks.max()}] in [2,6], mean {ks.mean():.2f} in [3.3,4.4]")
    assert ok


BERKELEY = os.environ.get("FPCBAG_BERKELEY_CSV")


@pytest.mark.skipif(not BERKELEY, reason="set FPCBAG_BERKELEY_CSV to a growth-data CSV to run")
def test_criterion_12_real_data(criterion):
    cols = os.environ.get("FPCBAG_BERKELEY_COLUMNS", "id,time,value,label").split(",")
    source = RealDataSource(BERKELEY, 62 / 93, sparsify_range=(12, 15), schema=CsvSchema(*cols), domain=(1.0, 18.0))
    config = ExperimentConfig(
        scenario=None,
        real_data=source,
        classifiers=(QDA,),
        rules=("single", "bayesian"),
        repetitions=100,
        B=100,
        fpca=FpcaConfig(k_min=2, k_max=5),
        single_fpca=FpcaConfig(k_min=3, k_max=4),
        seed=SEED,
    )
    t = _cached(config)
    single = float(t.cell(QDA, "single").mean())
    bayes = float(t.cell(QDA, "bayesian").mean())
    ok = bayes < single
    criterion(12, ok, f"growth data QDA R={t.n_reps}: Bayesian {bayes:.2f}% < Single {single:.2f}%")
    assert ok

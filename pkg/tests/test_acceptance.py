"""Acceptance criteria. Each test appends a pass/fail line that is printed in
the terminal summary."""

import time

import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import norm

from smartbayes.bench import curve_to_csv
from smartbayes.classify import fit_logistic, fit_naive_bayes, fit_smart_bayes
from smartbayes.cli import main
from smartbayes.ratio import RatioKind, fit_marginal_ratio
from smartbayes.simulate import MvParams, SimulationPlan, run_simulation, wishart_like_params
from smartbayes.spline import FitOptions, build_basis, curvature_penalty, fit_penalized_logistic, select_lambda

from conftest import ACCEPTANCE_LINES, random_dataset, two_gaussians
from oracles import best_line_deviation, fd_gradient_check, gcv_by_refit

pytestmark = pytest.mark.slow


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
    assert ok, detail


class GradientAudit:
    """Collects the finite-difference check of every spline fit it is shown."""

    def __init__(self):
        self.rel = []
        self.score = []
        self.unconverged = 0

    def fit(self, fit, x, y):
        if not fit.converged:
            self.unconverged += 1
            return
        rel, score = fd_gradient_check(fit, x, y)
        self.rel.append(rel)
        self.score.append(score)

    def __call__(self, model, train):
        for rm in model.ratio_models:
            if rm.kind is RatioKind.SPLINE:
                self.fit(rm.spline_fit, train.features[:, rm.feature_index], train.labels)


@pytest.fixture(scope="module")
def audit():
    return GradientAudit()


@pytest.fixture(scope="module")
def ratio_recovery(audit):
    grid = np.linspace(-1, 2, 301)
    start = time.perf_counter()
    rmse, models = [], []
    for seed in range(20):
        x, y = two_gaussians(seed)
        model = fit_marginal_ratio(x, y)
        rmse.append(float(np.sqrt(np.mean((model(grid) - (grid - 0.5)) ** 2))))
        models.append((model, x, y))
    elapsed = time.perf_counter() - start
    for model, x, y in models:
        audit.fit(model.spline_fit, x, y)
    return rmse, models, elapsed


@pytest.fixture(scope="module")
def optimality(audit):
    plan = SimulationPlan(
        MvParams([0.0], [[1.0]]), MvParams([2.0], [[1.0]]), (500,), 50, 1, classifiers=("sb",), name="1d",
    )
    start = time.perf_counter()
    curve = run_simulation(plan)
    elapsed = time.perf_counter() - start
    run_simulation(plan, audit=audit)
    return curve, elapsed


@pytest.fixture(scope="module")
def directional(audit):
    c0, c1 = wishart_like_params(8, 2024)
    out = {}
    start = time.perf_counter()
    for df in (None, 5.0):
        plan = SimulationPlan(c0.with_df(df), c1.with_df(df), (60, 150, 300, 600), 50, 7,
                              name="gaussian" if df is None else "t5")
        out[plan.name] = run_simulation(plan, audit=audit)
    return out, time.perf_counter() - start


def test_c1_ratio_recovery(ratio_recovery):
    rmse, _, elapsed = ratio_recovery
    med = float(np.median(rmse))
    record(1, "analytic ratio recovery", med <= 0.15 and elapsed < 30,
           f"median RMSE {med:.4f} <= 0.15 over 20 seeds (max {max(rmse):.4f}); {elapsed:.1f}s < 30s")


def test_c2_naive_bayes_special_case():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        ds = random_dataset(100 + seed, n=250, p=4)
        sb = fit_smart_bayes(ds, frozen=True, kind=RatioKind.GAUSSIAN)
        nb = fit_naive_bayes(ds, pooled=True)
        X = np.r_[ds.features, random_dataset(200 + seed, n=100, p=4).features * 2.5]
        worst = max(worst, float(np.max(np.abs(sb.decision_function(X) - nb.decision_function(X)))))
    elapsed = time.perf_counter() - start
    record(2, "frozen SB equals pooled NB", worst <= 1e-10 and elapsed < 5,
           f"max |score diff| {worst:.2e} <= 1e-10 on 5 datasets; {elapsed:.2f}s < 5s")


def test_c3_logistic_invariance():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        ds = random_dataset(300 + seed, n=250, p=4, rho=0.3)
        sb = fit_smart_bayes(ds, kind=RatioKind.GAUSSIAN)
        lr = fit_logistic(ds.features, ds.labels)
        diff = expit(sb.decision_function(ds.features)) - expit(lr.decision_function(ds.features))
        worst = max(worst, float(np.max(np.abs(diff))))
    elapsed = time.perf_counter() - start
    record(3, "affine z matches LR", worst <= 1e-6 and elapsed < 10,
           f"max |prob diff| {worst:.2e} <= 1e-6 on 5 datasets; {elapsed:.2f}s < 10s")


def test_c4_optimality(optimality):
    curve, elapsed = optimality
    err = curve.cell("sb", 500).mean_error
    bayes = norm.cdf(-1)
    record(4, "Bayes-optimal recovery", abs(err - bayes) <= 0.02 and elapsed < 120,
           f"SB error {err:.4f} vs {bayes:.6f} (|diff| {abs(err - bayes):.4f} <= 0.02); {elapsed:.1f}s < 120s")


def test_c5_directional(directional):
    curves, elapsed = directional
    parts, ok = [], elapsed < 600
    for name, curve in curves.items():
        sb, lr = curve.cell("sb", 600).mean_error, curve.cell("lr", 600).mean_error
        ok &= sb <= lr + 0.005
        parts.append(f"{name} SB {sb:.4f} vs LR {lr:.4f}")
    record(5, "SB <= LR + 0.005 at m=600", ok, f"{'; '.join(parts)}; {elapsed:.1f}s < 600s")


def test_c6_gradient_audit(audit, ratio_recovery, optimality, directional):
    rel, score = np.array(audit.rel), np.array(audit.score)
    ok = rel.size > 0 and rel.max() <= 1e-4 and score.max() <= 1e-8
    record(6, "penalized fit gradients", ok,
           f"{rel.size} converged fits: max FD rel err {rel.max():.2e} <= 1e-4, "
           f"max score norm {score.max():.2e} <= 1e-8 ({audit.unconverged} unconverged skipped)")


def test_c7_lambda_limit(ratio_recovery):
    _, models, _ = ratio_recovery
    lam = FitOptions().lambda_grid.max()
    worst = 0.0
    for model, x, y in models:
        basis = model.spline_fit.basis
        fit = fit_penalized_logistic(x, y, basis, curvature_penalty(basis), lam)
        worst = max(worst, best_line_deviation(fit, np.linspace(x.min(), x.max(), 50)))
    record(7, "linear at grid-max lambda", worst <= 1e-4, f"max deviation {worst:.2e} <= 1e-4 over 20 fits")


def gcv_datasets():
    for seed in range(10):
        rng = np.random.default_rng(500 + seed)
        if seed % 2:
            x = rng.uniform(-2, 2, 300)
            y = (rng.random(300) < expit(1.5 * np.sin(1.5 * x))).astype(float)
        else:
            x, y = two_gaussians(500 + seed, n_per_class=150)
        yield x, y


def test_c8_gcv_oracle():
    grid = FitOptions().lambda_grid
    matches, worst_gap = 0, 0.0
    for x, y in gcv_datasets():
        basis = build_basis(x)
        P = curvature_penalty(basis)
        chosen = select_lambda(x, y, basis, P)
        scores = gcv_by_refit(x, y, basis, P, grid)
        best = scores.min()
        oracle = grid[np.flatnonzero(scores == best)[-1]]
        picked = scores[np.flatnonzero(grid == chosen.lam)[0]]
        gap = (picked - best) / best
        worst_gap = max(worst_gap, gap)
        matches += bool(oracle == chosen.lam or gap <= 1e-9)
    record(8, "GCV choice equals recomputed argmin", matches == 10,
           f"{matches}/10 datasets agree; worst relative GCV gap {worst_gap:.1e}")


def _run_cli(args):
    code = main(args)
    assert code == 0, args
    return code


def test_c9_determinism(toy_csv, tmp_path):
    bench = ["bench", "--data", toy_csv, "--label-col", "y", "--sizes", "40,100", "--reps", "8", "--seed", "3"]
    sim = ["simulate", "--dist", "t", "--df", "5", "--p", "3", "--sizes", "30,60", "--reps", "6", "--seed", "3"]
    same = True
    for name, args in (("bench", bench), ("simulate", sim)):
        outs = []
        for tag, extra in (("a", []), ("b", []), ("w1", ["--workers", "1"]), ("w4", ["--workers", "4"])):
            path = tmp_path / f"{name}-{tag}.csv"
            _run_cli(args + extra + ["--out", str(path)])
            outs.append(path.read_bytes())
        same &= all(o == outs[0] for o in outs)
    record(9, "byte-identical CLI output", same, "bench and simulate: repeat runs and workers 1 vs 4 identical")


def test_c10_end_to_end(toy_csv, tmp_path):
    from smartbayes.bench import parse_curve_csv

    out, svg = tmp_path / "toy.csv", tmp_path / "toy.svg"
    start = time.perf_counter()
    code = main(["bench", "--data", toy_csv, "--label-col", "y", "--sizes", "40,80,120", "--reps", "25",
                 "--classifiers", "nb,lr,sb", "--out", str(out), "--svg", str(svg)])
    elapsed = time.perf_counter() - start
    ok = code == 0 and out.exists() and svg.exists()
    if ok:
        curve = parse_curve_csv(out)
        ok = (all(0 <= r.mean_error <= 1 for r in curve.rows)
              and all(r.sd_error > 0 for r in curve.rows if r.train_size == 120)
              and len(curve.rows) == 9 and elapsed < 120)
        assert curve_to_csv(curve) == out.read_text()
    record(10, "toy CLI pipeline", ok, f"exit {code}, 9 rows in [0,1], sd>0 at m=120; {elapsed:.1f}s < 120s")

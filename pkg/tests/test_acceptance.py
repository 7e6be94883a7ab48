"""Exit criteria. Each test records one PASS/FAIL line, printed in the pytest summary."""
import math
import time

import mpmath
import numpy as np
import pytest
from scipy import stats

from schoenbat import (
    AttentionInput,
    KernelId,
    PostSbnParams,
    RmfParams,
    RngStream,
    coefficient,
    fit_post_params,
    ideal_restoration_params,
    post_sbn,
    pre_sbn,
    sample_feature_map,
)
from schoenbat.attention import attention_weights, rmfa_detailed
from schoenbat.harness import read_csv
from schoenbat.harness.cli import main
from schoenbat.harness.config import build_config
from schoenbat.harness.experiments import run_error_sweep, run_speed_sweep, run_tail_bound, run_unbiasedness, speedups
from schoenbat.harness.records import HEADER
from schoenbat.kernels import coefficients
from schoenbat.ppsbn import SbnStats, restoration_residual

from conftest import ACCEPTANCE_RESULTS, unit_ball

KERNELS = list(KernelId)


def report(key, ok, line):
    ACCEPTANCE_RESULTS[key] = (bool(ok), f"criterion {key}: {line}")
    print(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {line}")


# 1 -------------------------------------------------------------------------

def test_c1_kernel_unbiasedness():
    t0 = time.perf_counter()
    cfg = build_config(
        {"experiment": "unbiasedness", "d": [10], "n": [8], "D": [8], "pairs": 20, "maps": 20_000, "seed": 1}
    )
    records = run_unbiasedness(cfg)
    elapsed = time.perf_counter() - t0
    z = [r for r in records if r.metric == "z_score" and r.trial >= 0]
    assert len(z) == 5 * 20
    worst = max(abs(r.value) for r in z)
    ok = worst <= 4.0 and elapsed < 120
    report("1", ok, f"max |z| over 5 kernels x 20 pairs = {worst:.2f} (limit 4), {elapsed:.1f}s (limit 120s)")
    assert worst <= 4.0
    assert elapsed < 120


# 2 -------------------------------------------------------------------------

_MP = {
    KernelId.EXP: mpmath.exp,
    KernelId.INV: lambda z: 1 / (1 - z),
    KernelId.LOGI: lambda z: 1 - mpmath.log(1 - z),
    KernelId.TRIGH: lambda z: mpmath.sinh(z) + mpmath.cosh(z),
    KernelId.SQRT: lambda z: 2 - mpmath.sqrt(1 - z),
}


def test_c2_coefficients():
    t0 = time.perf_counter()
    worst = 0.0
    with mpmath.workdps(40):
        for k in KERNELS:
            oracle = [float(c) for c in mpmath.taylor(_MP[k], 0, 8)]
            for n, expected in enumerate(oracle):
                worst = max(worst, abs(coefficient(k, n) - expected) / expected)
    same = np.array_equal(coefficients(KernelId.TRIGH, 100), coefficients(KernelId.EXP, 100))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and same and elapsed < 1
    report("2", ok, f"max rel. error vs 40-digit Taylor oracle {worst:.1e} (limit 1e-6); trigh == exp: {same}; {elapsed:.2f}s")
    assert worst <= 1e-6 and same and elapsed < 1


# 3 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def error_vs_features():
    t0 = time.perf_counter()
    cfg = build_config({"experiment": "error_sweep", "n": [100], "d": [10], "D": [10, 50], "trials": 100, "seed": 3})
    return run_error_sweep(cfg), time.perf_counter() - t0


@pytest.fixture(scope="module")
def error_vs_dimension():
    t0 = time.perf_counter()
    cfg = build_config({"experiment": "error_sweep", "n": [100], "d": [10, 200], "D": [30], "trials": 100, "seed": 3})
    return run_error_sweep(cfg), time.perf_counter() - t0


def _errors(records, kernel, d, D):
    return np.array([r.value for r in records if r.metric == "mean_abs_error" and (r.kernel, r.d, r.D) == (kernel, d, D)])


def test_c3a_error_decreases_with_features(error_vs_features):
    records, elapsed = error_vs_features
    pvals = {}
    for k in KERNELS:
        lo, hi = _errors(records, k.value, 10, 10), _errors(records, k.value, 10, 50)
        assert len(lo) == len(hi) == 100
        pvals[k.value] = stats.wilcoxon(lo - hi, alternative="greater").pvalue
    worst = max(pvals.values())
    ok = worst < 0.01 and elapsed < 600
    report("3a", ok, f"paired one-sided Wilcoxon, error(D=10) > error(D=50): max p = {worst:.1e} (limit 0.01); {elapsed:.1f}s")
    assert worst < 0.01 and elapsed < 600


def test_c3b_error_increases_with_dimension(error_vs_dimension):
    records, elapsed = error_vs_dimension
    means = {k.value: (_errors(records, k.value, 10, 30).mean(), _errors(records, k.value, 200, 30).mean()) for k in KERNELS}
    failing = [k for k, (small, large) in means.items() if not large > small]
    detail = ", ".join(f"{k} {small:.2e}->{large:.2e}" for k, (small, large) in means.items())
    report("3b", not failing, f"mean error d=10 -> d=200 at D=30: {detail}")
    assert not failing, f"error(d=200) <= error(d=10) for {failing}"


# 4 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def speed_records():
    t0 = time.perf_counter()
    cfg = build_config(
        {"experiment": "speed_sweep", "kernels": ["exp"], "n": [1000, 3000, 5000], "d": [50], "D": [2, 16, 120], "trials": 10}
    )
    return run_speed_sweep(cfg), time.perf_counter() - t0


def test_c4_speedup_trends(speed_records):
    records, elapsed = speed_records
    s = {(n, D): v for (k, n, d, D), v in speedups(records).items()}
    headline = s[(5000, 16)] > 1
    in_n = s[(1000, 16)] < s[(3000, 16)] < s[(5000, 16)]
    in_D = s[(5000, 2)] > s[(5000, 16)] > s[(5000, 120)]
    ok = headline and in_n and in_D and elapsed < 600
    report(
        "4", ok,
        f"speedup n=5000,D=16: {s[(5000, 16)]:.1f}; over n (D=16): "
        f"{s[(1000, 16)]:.1f} < {s[(3000, 16)]:.1f} < {s[(5000, 16)]:.1f}; over D (n=5000): "
        f"{s[(5000, 2)]:.1f} > {s[(5000, 16)]:.1f} > {s[(5000, 120)]:.1f}; median of 10; {elapsed:.1f}s",
    )
    assert headline and in_n and in_D and elapsed < 600


def test_speedup_agrees_with_flop_counts(speed_records):
    records, _ = speed_records
    measured = speedups(records)
    predicted = {(r.kernel, r.n, r.d, r.D): r.value for r in records if r.metric == "flop_ratio"}
    keys = sorted(measured)
    rho = stats.spearmanr([measured[k] for k in keys], [predicted[k] for k in keys]).statistic
    print(f"Spearman(measured speedup, flop ratio) = {rho:.3f}")
    assert rho > 0.8


# 5 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tail_records():
    t0 = time.perf_counter()
    cfg = build_config({"experiment": "tail_bound", "n": [8], "d": [4], "D": [4, 16], "maps": 10_000, "S": 1.0, "seed": 5})
    return run_tail_bound(cfg), time.perf_counter() - t0


@pytest.mark.parametrize("D", [4, 16])
def test_c5_tail_bound(tail_records, D):
    records, elapsed = tail_records
    rows = {r.metric: r.value for r in records if r.D == D}
    checks = {m: v for m, v in rows.items() if m.startswith("tail_check") and not math.isnan(v)}
    violated = [m[len("tail_check"):] for m, v in checks.items() if v == 0.0]
    assert checks, "no grid point with a non-vacuous bound"
    worst = ""
    if violated:
        tag = violated[-1]
        worst = f"; e.g. {tag}: empirical {rows['tail_empirical' + tag]:.4f} > bound {rows['tail_bound' + tag]:.2e}"
    ok = not violated and elapsed < 300
    report(
        f"5[D={D}]", ok,
        f"{len(checks) - len(violated)}/{len(checks)} non-vacuous grid points satisfy the bound{worst}; {elapsed:.1f}s for both D",
    )
    assert not violated, f"bound violated at {violated}"
    assert elapsed < 300


def test_tail_shrinks_with_features(tail_records):
    records, _ = tail_records
    at_ref = {r.D: r.value for r in records if r.metric == "tail_at_p90[D=4]"}
    assert at_ref[16] <= at_ref[4]


# 6 -------------------------------------------------------------------------

def test_c6_algebraic_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst_rmfa, used = 0.0, 0
    for m in range(100):
        k = KERNELS[m % 5]
        d = int(rng.integers(1, 9))
        inp = AttentionInput(unit_ball(rng, 1, d), unit_ball(rng, 1, d), rng.standard_normal((1, d)))
        res = rmfa_detailed(sample_feature_map(RmfParams(D=int(rng.integers(1, 64)), d=d, kernel=k), RngStream(600 + m)), inp)
        if res.degeneracies == 0:
            used += 1
            worst_rmfa = max(worst_rmfa, float(np.max(np.abs(res.output - inp.V))))
    worst_weights = 0.0
    for k in KERNELS:
        for _ in range(20):
            n, d = int(rng.integers(1, 30)), int(rng.integers(1, 12))
            W = attention_weights(k, AttentionInput(unit_ball(rng, n, d), unit_ball(rng, n, d), np.zeros((n, d))))
            worst_weights = max(worst_weights, float(np.max(np.abs(W.sum(axis=1) - 1))))
    worst_norm = 0.0
    for i in range(1000):
        n, d = int(rng.integers(1, 40)), int(rng.integers(1, 20))
        kind = i % 4
        if kind == 0:
            X = rng.standard_normal((n, d)) * 10.0 ** rng.uniform(-8, 8)
        elif kind == 1:
            X = np.tile(rng.standard_normal((1, d)), (n, 1))  # zero variance
        elif kind == 2:
            X = rng.standard_normal((n, d))
            X[:, rng.integers(d)] = rng.standard_normal()  # one constant column
        else:
            X = rng.standard_normal((n, d)) + 1e6  # large offset
        out, _ = pre_sbn(X)
        worst_norm = max(worst_norm, float(np.linalg.norm(out, axis=1).max()))
    elapsed = time.perf_counter() - t0
    ok = used >= 90 and worst_rmfa <= 1e-12 and worst_weights <= 1e-12 and worst_norm <= 1 + 1e-12 and elapsed < 30
    report(
        "6", ok,
        f"RMFA n=1 max |out - V_1| = {worst_rmfa:.1e} over {used} maps; weight-sum error {worst_weights:.1e}; "
        f"max pre-SBN row norm {worst_norm:.15f}; {elapsed:.1f}s",
    )
    assert used >= 90
    assert worst_rmfa <= 1e-12 and worst_weights <= 1e-12 and worst_norm <= 1 + 1e-12 and elapsed < 30


# 7 -------------------------------------------------------------------------

def test_c7_restoration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst_fit = 0.0
    for gamma in np.linspace(0.5, 3, 6):
        for beta in np.linspace(0.5, 2, 6):
            x = rng.uniform(-2, 2, size=(8, 5))
            fit = fit_post_params(x, post_sbn(x, PostSbnParams(gamma, beta)))
            worst_fit = max(worst_fit, abs(fit.gamma - gamma), abs(fit.beta - beta))
    eps = 2.0**-40
    unit = SbnStats(mu=np.zeros(3), sigma=np.full(3, 1.0 - eps), scalar_norm=1.0, epsilon=eps)
    inp3 = AttentionInput(*(unit_ball(rng, 3, 3) for _ in range(3)))
    r = ideal_restoration_params(inp3, eps, stats=(unit, unit)).r
    single = AttentionInput(*(unit_ball(rng, 1, 4) for _ in range(3)))
    t = float(ideal_restoration_params(single).t[0, 0])
    inp = AttentionInput(*(unit_ball(rng, 6, 4) for _ in range(3)))
    residual = restoration_residual(inp, ideal_restoration_params(inp))
    elapsed = time.perf_counter() - t0
    ok = worst_fit <= 1e-6 and r == 1.0 and t == 1.0 and math.isfinite(residual) and elapsed < 30
    report(
        "7", ok,
        f"planted (gamma, beta) recovered to {worst_fit:.1e}; r = {r!r}; t = {t!r}; "
        f"identity residual n=6 (diagnostic) = {residual:.3g}; {elapsed:.2f}s",
    )
    assert worst_fit <= 1e-6 and r == 1.0 and t == 1.0 and math.isfinite(residual) and elapsed < 30


# 8 -------------------------------------------------------------------------

SMALL_RUNS = {
    "error-sweep": ["--n", "20", "--d", "4", "8", "--D", "4", "16", "--trials", "3"],
    "speed-sweep": ["--kernel", "exp", "--kernel", "sqrt", "--n", "64", "128", "--d", "8", "--D", "2", "8", "--trials", "2"],
    "unbiasedness": ["--kernel", "inv", "--kernel", "logi", "--d", "4", "--n", "3", "--D", "4", "--pairs", "2", "--maps", "400"],
    "tail-bound": ["--maps", "300", "--D", "4", "16"],
    "demo": ["--n", "16", "--d", "4", "--D", "32"],
}


def _without_wall_time(path):
    col = HEADER.index("wall_time_s")
    out = []
    for line in path.read_text().splitlines():
        if line.startswith("#") or not line:
            out.append(line)
            continue
        fields = read_csv_line(line)
        del fields[col]
        out.append(fields)
    return out


def read_csv_line(line):
    import csv

    return next(csv.reader([line]))


def test_c8_determinism(tmp_path, capsys):
    differing = []
    for name, args in SMALL_RUNS.items():
        runs = []
        for i in range(2):
            path = tmp_path / f"{name}-{i}.csv"
            assert main([name, "--seed", "17", "--out", str(path), *args]) == 0
            runs.append(path)
        if _without_wall_time(runs[0]) != _without_wall_time(runs[1]):
            differing.append(name)
        assert read_csv(runs[0])
    capsys.readouterr()
    report("8", not differing, f"{len(SMALL_RUNS) - len(differing)}/{len(SMALL_RUNS)} subcommands byte-identical excluding wall_time_s")
    assert not differing

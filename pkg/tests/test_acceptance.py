"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts the same condition, including its runtime budget.
"""
import time

import numpy as np
import pytest

from ampstab.amp import AmpConfig, amp_run
from ampstab.denoiser import Prior, cumulants, oracle_cumulant
from ampstab.evolution import (
    SeParams,
    SeState,
    _unit_profile_cached,
    fd_check_matrix,
    find_gamma_c,
    lambda_d,
    lambda_k,
    nishimori_trajectory,
    se_run,
    se_step,
    stability_profile,
)
from ampstab.experiments import ExperimentConfig, run_schedule_compare, run_success_sweep
from ampstab.instance import generate

RHO, ALPHA, DELTA = 0.1, 0.3, 1e-10
BG = Prior(RHO)


def test_cumulant_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for rho in (0.01, 0.1, 0.5, 1.0):
        p = Prior(rho)
        for sigma2 in (1e-6, 1e-3, 0.1, 1.0, 10.0):
            for r in (-5.0, -1.0, -0.1, 0.0, 0.1, 1.0, 5.0):
                got = cumulants(p, sigma2, r)
                for k in range(1, 5):
                    want = oracle_cumulant(p, sigma2, r, k)
                    # 1e-7 relative with a 1e-10 absolute floor
                    worst = max(worst, abs(got[k - 1] - want) / max(1e-7 * abs(want), 1e-10))
    dt = time.perf_counter() - t0
    ok = worst <= 1.0 and dt < 10
    verdict("1 cumulant oracle equivalence", ok, f"worst error/tolerance {worst:.2e}, {dt:.1f} s")
    assert ok


def test_nishimori_preservation(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for gamma in (0.0, 1.0, 2.5, 3.6):
        p = SeParams(ALPHA, DELTA, gamma, BG)
        vs = nishimori_trajectory(p)
        for v in vs[np.linspace(0, len(vs) - 1, 10).astype(int)]:
            out = se_step(SeState(v, v, 0.0), p)
            worst = max(worst, abs(out.e - out.v), abs(out.d))
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and dt < 10
    verdict("2 Nishimori preservation", ok, f"max deviation {worst:.2e}, {dt:.1f} s")
    assert ok


def test_critical_thresholds(verdict):
    _unit_profile_cached.cache_clear()
    t0 = time.perf_counter()
    vals = {a: [find_gamma_c(SeParams(a, 0.0, 0.0, BG), w) for w in (1, 2)] for a in (0.3, 0.6)}
    dt = time.perf_counter() - t0
    g1, g2 = vals[0.3]
    spread = max(abs(x - y) for x, y in zip(vals[0.3], vals[0.6]))
    ok = abs(g1 - 2.197) <= 0.05 and abs(g2 - 3.162) <= 0.05 and spread < 1e-2 and dt < 60
    verdict("3 critical thresholds", ok,
            f"gamma_c1={g1:.4f} gamma_c2={g2:.4f} alpha spread {spread:.1e}, {dt:.1f} s")
    assert ok


def test_three_regimes(verdict):
    _unit_profile_cached.cache_clear()
    t0 = time.perf_counter()
    want = {1.9: "stable", 2.5: "partially_unstable", 2.9: "partially_unstable", 3.6: "fully_unstable"}
    got = {g: stability_profile(SeParams(ALPHA, DELTA, g, BG)).regime for g in want}
    dt = time.perf_counter() - t0
    ok = got == want and dt < 60
    verdict("4 three-regime classification", ok, f"{got}, {dt:.1f} s")
    assert ok


def test_lambda_k_and_jacobian(verdict):
    p0 = SeParams(ALPHA, DELTA, 0.0, BG)
    vs = nishimori_trajectory(p0)
    k0 = np.array([lambda_k(v, p0) for v in vs])
    k3 = np.array([lambda_k(v, p0.with_gamma(3.0)) for v in vs])
    off = diag = 0.0
    for gamma in (1.0, 2.5):
        p = p0.with_gamma(gamma)
        for v in vs[np.linspace(0, len(vs) - 1, 8).astype(int)]:
            jac = fd_check_matrix(v, p)
            off = max(off, abs(jac[0, 1]), abs(jac[1, 0]))
            diag = max(diag, abs(jac[0, 0] - lambda_k(v, p)), abs(jac[1, 1] - lambda_d(v, p)))
    bound = np.max(np.abs(k0))
    ok = bound < 1 and np.array_equal(k0, k3) and off < 1e-5 and diag < 1e-4
    verdict("5 lambda_K bound and Jacobian", ok,
            f"max|lambda_K|={bound:.3f}, gamma-independent={np.array_equal(k0, k3)}, "
            f"off-diagonal {off:.1e}, diagonal error {diag:.1e}")
    assert ok


def test_success_rate_transition(verdict, tmp_path):
    t0 = time.perf_counter()
    grid = [0.0, 0.5, 1.0, 1.5, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0, 3.5, 4.0]
    cfg = ExperimentConfig(experiment="success_sweep", rho=RHO, alpha=ALPHA, delta=DELTA, n_list=[1000],
                           gamma_grid=grid, trials=50, out_dir=str(tmp_path))
    res = run_success_sweep(cfg)
    dt = time.perf_counter() - t0
    frac = dict(zip(grid, res.fraction[0]))
    low = all(frac[g] >= 0.9 for g in grid if g <= 1.5)
    high = all(frac[g] <= 0.1 for g in grid if g >= 3.5)
    mid = any(0 < frac[g] < 1 for g in grid if 2.0 <= g <= 3.0)
    ok = low and high and mid and dt < 1800
    text = " ".join(f"{g:g}:{f:.2f}" for g, f in frac.items())
    verdict("6 AMP success-rate transition", ok, f"{text}, {dt:.0f} s")
    assert ok


def test_schedule_comparison(verdict, tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(experiment="schedule_compare", rho=RHO, alpha=ALPHA, delta=DELTA, n=2000,
                           gamma_grid=[5.0], trials=20, out_dir=str(tmp_path))
    rows = run_schedule_compare(cfg, solvers=("amp", "rbp_sequential"))
    dt = time.perf_counter() - t0
    wins = {"amp": 0, "rbp_sequential": 0}
    for _, solver, _, status, _, e in rows:
        wins[solver] += status == "converged" and e < 1e-6
    ok = wins["rbp_sequential"] == 20 and wins["amp"] == 0 and dt < 1800
    verdict("7 schedule comparison", ok,
            f"sequential r-BP {wins['rbp_sequential']}/20, parallel AMP {wins['amp']}/20, {dt:.0f} s")
    assert ok


def test_mean_removal(verdict, tmp_path):
    cfg = ExperimentConfig(experiment="success_sweep", rho=RHO, alpha=ALPHA, delta=DELTA, n_list=[2000],
                           gamma_grid=[10.0], trials=20, mean_remove=True, out_dir=str(tmp_path))
    wins = int(run_success_sweep(cfg).successes[0, 0])
    ok = wins >= 19
    verdict("8 mean-removal fix", ok, f"{wins}/20 converged at gamma=10")
    assert ok


def test_se_amp_agreement(verdict):
    n, iters, seeds = 8000, 20, 5
    m = int(ALPHA * n)
    runs = []
    for seed in range(seeds):
        inst = generate(n, m, 0.0, DELTA, BG, seed)
        # a tiny tolerance keeps every run going for the full window
        tr = amp_run(inst, BG, AmpConfig(max_iter=iters, tol=1e-300))
        runs.append(tr.e[: iters + 1])
    amp_e = np.mean(runs, axis=0)
    se_e = se_run(SeState(RHO, RHO, 0.0), SeParams(m / n, DELTA, 0.0, BG), max_iter=iters, tol=0.0).e
    k = min(len(amp_e), len(se_e))
    gap = np.max(np.abs(amp_e[:k] - se_e[:k]))
    tol = 5 / np.sqrt(n)
    ok = gap < tol and k == iters + 1
    verdict("9 SE-AMP agreement", ok, f"max mean deviation {gap:.1e} over {k - 1} iterations (tol {tol:.3f})")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

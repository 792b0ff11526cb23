"""Batch experiments: eigenvalue profiles, threshold curves, success sweeps, schedule comparison.

Each experiment writes plot-ready CSV plus a JSON summary into an output
directory. Instance seeds follow one fixed rule, :func:`trial_seed`, so any
single trial can be regenerated in isolation.
"""
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .amp import AmpConfig, amp_run
from .denoiser import Prior
from .evolution import (
    DEFAULT_QUAD,
    SeParams,
    SeState,
    critical_gammas,
    critical_gammas_continuum,
    se_run,
    stability_profile,
)
from .instance import generate, mean_remove
from .rbp import Schedule, rbp_run

log = logging.getLogger(__name__)

EXPERIMENTS = ("eigen_profile", "threshold_curve", "success_sweep", "schedule_compare", "single_run")
SOLVERS = ("amp", "amp_damped", "rbp_parallel", "rbp_sequential")
WORKERS_ENV = "AMPSTAB_WORKERS"
SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    experiment: str = "single_run"
    rho: float = 0.1
    alpha: float = 0.3
    delta: float = None  # None: 0 for threshold curves, 1e-10 otherwise
    gamma: float = 0.0
    gamma_grid: list = None
    rho_grid: list = None
    n: int = 1000
    n_list: list = None
    trials: int = 1
    base_seed: int = 0
    damping: float = 0.0
    schedule: str = "amp"
    max_iter: int = 1000
    tol: float = 1e-8
    success_mse: float = 1e-6
    mean_remove: bool = False
    se_overlay: bool = False
    out_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.delta is None:
            self.delta = 0.0 if self.experiment == "threshold_curve" else 1e-10
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for name in ("gamma_grid", "rho_grid", "n_list"):
            val = getattr(self, name)
            if val is not None and len(val) == 0:
                raise ValueError(f"{name} must not be empty")
        if self.schedule not in SOLVERS:
            raise ValueError(f"unknown solver {self.schedule!r}; expected one of {SOLVERS}")
        if not self.alpha > 0 or self.n < 1 or self.delta < 0:
            raise ValueError("need alpha > 0, n >= 1 and delta >= 0")
        for rho in [self.rho] + list(self.rho_grid or []):
            Prior(rho)
        self.amp_config()

    @property
    def prior(self):
        return Prior(self.rho)

    def amp_config(self, damping=None):
        return AmpConfig(max_iter=self.max_iter, tol=self.tol,
                         damping=self.damping if damping is None else damping,
                         success_mse=self.success_mse)

    def m_for(self, n):
        return max(1, int(round(self.alpha * n)))


@dataclass
class SuccessSweepResult:
    n_list: list
    gamma_grid: list
    successes: np.ndarray  # (len(n_list), len(gamma_grid))
    trials: int
    rows: list = field(default_factory=list)

    @property
    def fraction(self):
        return self.successes / self.trials

    @property
    def stderr(self):
        p = self.fraction
        return np.sqrt(p * (1 - p) / self.trials)

    def at(self, n, gamma):
        i = self.n_list.index(n)
        j = int(np.argmin(np.abs(np.asarray(self.gamma_grid) - gamma)))
        return self.fraction[i, j]


def trial_seed(base_seed, trial):
    """Instance seed of trial ``trial``: ``base_seed * 1_000_000 + trial``.

    The same seeds are reused across gamma and N so that sweeps use common
    random numbers.
    """
    return int(base_seed) * 1_000_000 + int(trial)


def worker_count(requested=1):
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, int(requested))


def _map(func, tasks, workers):
    # results come back in task order regardless of completion order
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))


def _out_dir(cfg):
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x)}")


def _config_dict(cfg):
    d = asdict(cfg)
    d.pop("out_dir")
    d.pop("workers")
    return d


# ---------------------------------------------------------------- solvers


def solve(inst, prior, solver, cfg, damping=None):
    """Run one named solver on ``inst`` and return its trace."""
    if solver == "amp":
        return amp_run(inst, prior, cfg.amp_config(0.0 if damping is None else damping))
    if solver == "amp_damped":
        return amp_run(inst, prior, cfg.amp_config(damping if damping is not None else (cfg.damping or 0.5)))
    if solver == "rbp_parallel":
        return rbp_run(inst, prior, Schedule("parallel"), cfg.amp_config(0.0))
    if solver == "rbp_sequential":
        return rbp_run(inst, prior, Schedule("random_sequential", cfg.base_seed), cfg.amp_config(0.0))
    raise ValueError(f"unknown solver {solver!r}")


def _instance(cfg, n, gamma, trial):
    inst = generate(n, cfg.m_for(n), gamma, cfg.delta, cfg.prior, trial_seed(cfg.base_seed, trial))
    return mean_remove(inst) if cfg.mean_remove else inst


def _success_task(args):
    cfg, n, gamma, trial = args
    inst = _instance(cfg, n, gamma, trial)
    trace = amp_run(inst, cfg.prior, cfg.amp_config())
    return trace.succeeded(cfg.success_mse), trace.status, trace.final_mse, trace.iterations


def _schedule_task(args):
    cfg, gamma, trial, solver = args
    inst = _instance(cfg, cfg.n, gamma, trial)
    trace = solve(inst, cfg.prior, solver, cfg)
    return trace.status, trace.iterations, trace.final_mse


# ---------------------------------------------------------------- experiments


def run_eigen_profile(cfg):
    """lambda_D and lambda_K along the Nishimori trajectory for each gamma.

    Writes ``eigen_profile.csv`` (gamma, iter, V, lambda_D, lambda_K) and
    ``eigen_profile.json`` (one summary per gamma).
    """
    gammas = cfg.gamma_grid or [1.9, 2.5, 2.9, 3.6]
    out = _out_dir(cfg)
    summaries, reports = [], {}
    with open(out / "eigen_profile.csv", "w") as fh:
        fh.write("gamma,iter,V,lambda_D,lambda_K\n")
        for g in gammas:
            rep = stability_profile(SeParams(cfg.alpha, cfg.delta, g, cfg.prior))
            reports[g] = rep
            for t, (v, ld, lk) in enumerate(zip(rep.v_grid, rep.lambda_d, rep.lambda_k)):
                fh.write(f"{g!r},{t},{float(v)!r},{float(ld)!r},{float(lk)!r}\n")
            summaries.append(rep.summary())
    _write_json(out / "eigen_profile.json", {"schema_version": SCHEMA_VERSION,
                                             "config": _config_dict(cfg), "profiles": summaries})
    return reports


def run_threshold_curve(cfg):
    """Critical matrix means ``(gamma_c1, gamma_c2)`` versus sparsity.

    At ``delta = 0`` the thresholds do not depend on alpha and are taken
    over the whole range of channel widths; for ``delta > 0`` they are
    computed on the state evolution trajectory at ``cfg.alpha``. Writes
    ``threshold_curve.csv`` with columns rho, gamma_c1, gamma_c2.
    """
    rhos = cfg.rho_grid or [0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    out = _out_dir(cfg)
    rows = []
    for rho in rhos:
        if cfg.delta == 0:
            g1, g2 = critical_gammas_continuum(Prior(rho), DEFAULT_QUAD)
        else:
            g1, g2 = critical_gammas(SeParams(cfg.alpha, cfg.delta, 0.0, Prior(rho)), DEFAULT_QUAD)
        rows.append((rho, float(g1), float(g2)))
        log.info("rho=%g gamma_c1=%.4f gamma_c2=%.4f", rho, g1, g2)
    with open(out / "threshold_curve.csv", "w") as fh:
        fh.write("rho,gamma_c1,gamma_c2\n")
        for rho, g1, g2 in rows:
            fh.write(f"{rho!r},{g1:.8f},{g2:.8f}\n")
    _write_json(out / "threshold_curve.json", {"schema_version": SCHEMA_VERSION,
                                               "config": _config_dict(cfg), "rows": rows})
    return rows


def run_success_sweep(cfg):
    """Fraction of AMP runs that converge below ``success_mse`` per (N, gamma).

    Diverged or stalled runs count as failures.
    """
    n_list = list(cfg.n_list or [500, 1000, 2000])
    gammas = list(cfg.gamma_grid or np.round(np.arange(0.0, 4.0001, 0.2), 10).tolist())
    tasks = [(cfg, n, g, t) for n in n_list for g in gammas for t in range(cfg.trials)]
    results = _map(_success_task, tasks, worker_count(cfg.workers))
    successes = np.zeros((len(n_list), len(gammas)), dtype=int)
    for (_, n, g, _), (ok, *_rest) in zip(tasks, results):
        successes[n_list.index(n), gammas.index(g)] += bool(ok)
    res = SuccessSweepResult(n_list, gammas, successes, cfg.trials)
    out = _out_dir(cfg)
    with open(out / "success_sweep.csv", "w") as fh:
        fh.write("N,gamma,trials,successes,fraction,stderr\n")
        for i, n in enumerate(n_list):
            for j, g in enumerate(gammas):
                fh.write(f"{n},{g!r},{cfg.trials},{successes[i, j]},"
                         f"{res.fraction[i, j]!r},{res.stderr[i, j]!r}\n")
    with open(out / "success_trials.csv", "w") as fh:
        fh.write("N,gamma,trial,seed,success,status,final_E,iterations\n")
        for (_, n, g, t), (ok, status, e, its) in zip(tasks, results):
            fh.write(f"{n},{g!r},{t},{trial_seed(cfg.base_seed, t)},{int(ok)},{status},{e!r},{its}\n")
    _write_json(out / "success_sweep.json", {"schema_version": SCHEMA_VERSION,
                                             "config": _config_dict(cfg),
                                             "fraction": res.fraction, "stderr": res.stderr})
    return res


def run_schedule_compare(cfg, solvers=("amp", "amp_damped", "rbp_sequential")):
    """Convergence status and sweeps-to-converge per gamma and update scheme."""
    gammas = list(cfg.gamma_grid or [0.0, 1.0, 2.0, 3.0, 5.0, 8.0])
    tasks = [(cfg, g, t, s) for g in gammas for t in range(cfg.trials) for s in solvers]
    results = _map(_schedule_task, tasks, worker_count(cfg.workers))
    rows = [(g, s, t, status, its, e) for (_, g, t, s), (status, its, e) in zip(tasks, results)]
    out = _out_dir(cfg)
    with open(out / "schedule_compare.csv", "w") as fh:
        fh.write("gamma,solver,trial,status,sweeps,final_E\n")
        for g, s, t, status, its, e in rows:
            fh.write(f"{g!r},{s},{t},{status},{its},{e!r}\n")
    _write_json(out / "schedule_compare.json", {"schema_version": SCHEMA_VERSION,
                                                "config": _config_dict(cfg), "solvers": list(solvers)})
    return rows


def run_single(cfg):
    """One instance, one solver: ``trace.csv`` plus a ``trace.json`` sidecar.

    With ``cfg.se_overlay`` the matching state evolution trajectory is
    written to ``se_trace.csv``.
    """
    inst = _instance(cfg, cfg.n, cfg.gamma, 0)
    trace = solve(inst, cfg.prior, cfg.schedule, cfg)
    trace.meta.update({"config": _config_dict(cfg), "seed": inst.seed,
                       "schema_version": SCHEMA_VERSION, "solver": cfg.schedule})
    out = _out_dir(cfg)
    trace.to_csv(out / "trace.csv")
    trace.write_sidecar(out / "trace.json")
    if cfg.se_overlay:
        p = cfg.prior
        init = SeState(e=p.second_moment, v=p.rho * p.slab_var, d=0.0)
        traj = se_run(init, SeParams(inst.alpha, cfg.delta, cfg.gamma, p),
                      max_iter=max(cfg.max_iter, 1), tol=1e-14)
        traj.to_csv(out / "se_trace.csv")
    return trace


RUNNERS = {
    "eigen_profile": run_eigen_profile,
    "threshold_curve": run_threshold_curve,
    "success_sweep": run_success_sweep,
    "schedule_compare": run_schedule_compare,
    "single_run": run_single,
}


def run(cfg):
    return RUNNERS[cfg.experiment](cfg)

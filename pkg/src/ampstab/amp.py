"""Bayes-optimal AMP with parallel updates and optional damping of the estimates.

The iteration has no explicit dependence on the matrix mean: gamma only
enters through the instance.
"""
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .denoiser import f1_f2
from .instance import d_param, mse

DIVERGENCE_FACTOR = 1e4
# floor on delta + V: only reached at an exact noiseless solution with v = 0
TINY = 1e-250
TRACE_COLUMNS = ("iter", "E", "Vbar", "D", "max_change")


@dataclass(frozen=True)
class AmpConfig:
    max_iter: int = 1000
    tol: float = 1e-8
    damping: float = 0.0
    success_mse: float = 1e-6

    def __post_init__(self):
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")
        if not self.success_mse > 0:
            raise ValueError("success_mse must be positive")


@dataclass(frozen=True)
class AmpState:
    a: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    big_v: np.ndarray
    iteration: int = 0
    diverged: bool = False


@dataclass
class AmpTrace:
    """Per-iteration ``(iter, E, Vbar, D, max_change)`` records and a terminal status."""

    records: list = field(default_factory=list)
    status: str = "max_iter"
    state: object = None
    meta: dict = field(default_factory=dict)

    def append(self, it, e, vbar, d, change):
        self.records.append((it, e, vbar, d, change))

    @property
    def table(self):
        return np.array(self.records, dtype=float).reshape(-1, len(TRACE_COLUMNS))

    @property
    def e(self):
        return self.table[:, 1]

    @property
    def vbar(self):
        return self.table[:, 2]

    @property
    def d(self):
        return self.table[:, 3]

    @property
    def final_mse(self):
        return self.records[-1][1]

    @property
    def iterations(self):
        return self.records[-1][0]

    def succeeded(self, success_mse):
        return self.status == "converged" and self.final_mse < success_mse

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for it, e, vbar, d, ch in self.records:
                fh.write(f"{it},{e!r},{vbar!r},{d!r},{ch!r}\n")

    def sidecar(self):
        it, e, vbar, d, _ = self.records[-1]
        return {
            "schema": "ampstab.trace/1",
            "status": self.status,
            "iterations": int(it),
            "final_E": e,
            "final_Vbar": vbar,
            "final_D": d,
            **self.meta,
        }

    def write_sidecar(self, path):
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def amp_init(inst, prior, f_sq=None):
    """Start from the prior: ``a = 0``, ``v = rho * slab_var``, ``omega = y``."""
    if f_sq is None:
        f_sq = inst.f * inst.f
    n = inst.n
    a = np.zeros(n)
    v = np.full(n, prior.rho * prior.slab_var)
    return AmpState(a=a, v=v, omega=inst.y.copy(), big_v=f_sq @ v)


def amp_step(state, inst, prior, cfg=AmpConfig(), f_sq=None):
    """One parallel AMP sweep.

    Order: V from the old variances, omega with the Onsager term built from
    the old (omega, V), then the effective channel (sigma2, R) from the new
    (omega, V), then the denoiser. If the update produces non-finite values
    the old state is returned flagged as diverged.
    """
    if f_sq is None:
        f_sq = inst.f * inst.f
    f, y, delta = inst.f, inst.y, inst.delta
    with np.errstate(all="ignore"):
        big_v = f_sq @ state.v
        omega = f @ state.a - (y - state.omega) / np.maximum(delta + state.big_v, TINY) * big_v
        inv = 1.0 / np.maximum(delta + big_v, TINY)
        sigma2 = 1.0 / (f_sq.T @ inv)
        r = state.a + sigma2 * (f.T @ ((y - omega) * inv))
        a, v = f1_f2(prior, sigma2, r)
        if cfg.damping > 0:
            b = cfg.damping
            a = (1 - b) * a + b * state.a
            v = (1 - b) * v + b * state.v
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(v))
            and np.all(np.isfinite(omega)) and np.all(np.isfinite(big_v))):
        return replace(state, diverged=True)
    return AmpState(a=a, v=v, omega=omega, big_v=big_v, iteration=state.iteration + 1)


def amp_diagnostics(state, inst):
    """``(E, Vbar, D)`` of the current estimate against the ground truth."""
    return mse(state.a, inst.s), float(np.mean(state.v)), d_param(state.a, inst.s)


def amp_run(inst, prior, cfg=AmpConfig()):
    """Iterate :func:`amp_step` until the mean absolute change of ``a`` drops below ``cfg.tol``.

    Divergence (non-finite values or E above ``1e4`` times the prior power)
    ends the run with ``status == "diverged"``; it never raises.
    """
    f_sq = inst.f * inst.f
    state = amp_init(inst, prior, f_sq)
    trace = AmpTrace(meta={"solver": "amp", "damping": cfg.damping})
    trace.append(0, *amp_diagnostics(state, inst), float("nan"))
    limit = DIVERGENCE_FACTOR * prior.second_moment
    for _ in range(cfg.max_iter):
        new = amp_step(state, inst, prior, cfg, f_sq)
        if new.diverged:
            trace.status = "diverged"
            break
        change = float(np.mean(np.abs(new.a - state.a)))
        state = new
        e, vbar, d = amp_diagnostics(state, inst)
        trace.append(state.iteration, e, vbar, d, change)
        if not e < limit:
            trace.status = "diverged"
            break
        if change < cfg.tol:
            trace.status = "converged"
            break
    trace.state = state
    return trace

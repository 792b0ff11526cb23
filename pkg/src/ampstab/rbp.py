"""Relaxed belief propagation with parallel or random-sequential updates.

Messages are stored variable-major: ``a_msg[i, mu]`` is the mean message
from variable ``i`` to factor ``mu``. The row sums over variables for each
factor,

    sum_a[mu] = sum_j F[mu, j] a_msg[j, mu]
    sum_v[mu] = sum_j F[mu, j]^2 v_msg[j, mu]

are cached so that a single variable can be refreshed in O(M).
"""
from dataclasses import dataclass, replace

import numpy as np

from .amp import DIVERGENCE_FACTOR, TINY, AmpConfig, AmpTrace
from .denoiser import f1_f2
from .instance import d_param, mse

SCHEDULES = ("parallel", "random_sequential")
REFRESH_EVERY = 10


@dataclass(frozen=True)
class Schedule:
    kind: str = "random_sequential"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {SCHEDULES}")


@dataclass(frozen=True)
class RbpState:
    a_msg: np.ndarray
    v_msg: np.ndarray
    a: np.ndarray
    v: np.ndarray
    sum_a: np.ndarray
    sum_v: np.ndarray
    sweep: int = 0
    diverged: bool = False
    last_order: np.ndarray = None


class _Operator:
    """Transposed copies of F and F^2 (contiguous columns for sequential access)."""

    def __init__(self, inst):
        self.ft = np.ascontiguousarray(inst.f.T)
        self.fsq_t = self.ft * self.ft
        self.y = inst.y
        self.delta = inst.delta


def _row_sums(op, a_msg, v_msg):
    return np.einsum("im,im->m", op.ft, a_msg), np.einsum("im,im->m", op.fsq_t, v_msg)


def cache_error(state, inst):
    """Largest relative deviation of the cached row sums from a fresh computation."""
    op = _Operator(inst)
    sa, sv = _row_sums(op, state.a_msg, state.v_msg)
    scale_a = np.einsum("im,im->m", np.abs(op.ft), np.abs(state.a_msg)) + 1e-300
    scale_v = sv + 1e-300
    return max(np.max(np.abs(sa - state.sum_a) / scale_a),
               np.max(np.abs(sv - state.sum_v) / scale_v))


def rbp_init(inst, prior):
    """All messages and marginals at the prior: ``a = 0``, ``v = rho * slab_var``."""
    n, m = inst.n, inst.m
    op = _Operator(inst)
    a_msg = np.zeros((n, m))
    v_msg = np.full((n, m), prior.rho * prior.slab_var)
    sum_a, sum_v = _row_sums(op, a_msg, v_msg)
    return RbpState(a_msg=a_msg, v_msg=v_msg, a=np.zeros(n), v=np.full(n, prior.rho * prior.slab_var),
                    sum_a=sum_a, sum_v=sum_v)


def _finite(*arrays):
    return all(np.all(np.isfinite(x)) for x in arrays)


def rbp_parallel_sweep(state, inst, prior, _op=None):
    """Update every message from the previous sweep's messages."""
    op = _op or _Operator(inst)
    with np.errstate(all="ignore"):
        denom = np.maximum(op.delta + state.sum_v[None, :] - op.fsq_t * state.v_msg, TINY)
        big_a = op.fsq_t / denom
        big_b = op.ft * (op.y[None, :] - state.sum_a[None, :] + op.ft * state.a_msg) / denom
        col_a = big_a.sum(axis=1, keepdims=True)
        col_b = big_b.sum(axis=1, keepdims=True)
        cav = 1.0 / (col_a - big_a)
        a_msg, v_msg = f1_f2(prior, cav, (col_b - big_b) * cav)
        a, v = f1_f2(prior, 1.0 / col_a[:, 0], col_b[:, 0] / col_a[:, 0])
        sum_a, sum_v = _row_sums(op, a_msg, v_msg)
    if not _finite(a_msg, v_msg, a, v):
        return replace(state, diverged=True)
    return RbpState(a_msg=a_msg, v_msg=v_msg, a=a, v=v, sum_a=sum_a, sum_v=sum_v,
                    sweep=state.sweep + 1)


def rbp_sequential_sweep(state, inst, prior, schedule, _op=None):
    """Visit every variable once in a fresh random order, refreshing its messages in place.

    Later variables in the sweep see the row sums already updated by earlier
    ones. The order is drawn from ``(schedule.seed, sweep index)``.
    """
    op = _op or _Operator(inst)
    order = np.random.default_rng([schedule.seed, state.sweep]).permutation(inst.n)
    a_msg, v_msg = state.a_msg.copy(), state.v_msg.copy()
    a, v = state.a.copy(), state.v.copy()
    sum_a, sum_v = state.sum_a.copy(), state.sum_v.copy()
    y, delta = op.y, op.delta
    with np.errstate(all="ignore"):
        for i in order:
            fi, fsq = op.ft[i], op.fsq_t[i]
            old_a, old_v = a_msg[i], v_msg[i]
            denom = np.maximum(delta + sum_v - fsq * old_v, TINY)
            big_a = fsq / denom
            big_b = fi * (y - sum_a + fi * old_a) / denom
            col_a, col_b = big_a.sum(), big_b.sum()
            cav = 1.0 / (col_a - big_a)
            new_a, new_v = f1_f2(prior, cav, (col_b - big_b) * cav)
            a[i], v[i] = f1_f2(prior, 1.0 / col_a, col_b / col_a)
            sum_a += fi * (new_a - old_a)
            sum_v += fsq * (new_v - old_v)
            a_msg[i], v_msg[i] = new_a, new_v
    sweep = state.sweep + 1
    if sweep % REFRESH_EVERY == 0:
        sum_a, sum_v = _row_sums(op, a_msg, v_msg)
    if not _finite(a_msg, v_msg, a, v, sum_a, sum_v):
        return replace(state, diverged=True)
    return RbpState(a_msg=a_msg, v_msg=v_msg, a=a, v=v, sum_a=sum_a, sum_v=sum_v,
                    sweep=sweep, last_order=order)


def fixed_point_residual(state, inst, prior):
    """Mean absolute change of the marginals under one more parallel evaluation."""
    new = rbp_parallel_sweep(state, inst, prior)
    if new.diverged:
        return np.inf
    return float(np.mean(np.abs(new.a - state.a)))


def rbp_run(inst, prior, schedule=Schedule(), cfg=AmpConfig()):
    """Sweep until the mean absolute change of the marginal means is below ``cfg.tol``.

    Returns an :class:`AmpTrace` with one record per sweep.
    """
    op = _Operator(inst)
    state = rbp_init(inst, prior)
    trace = AmpTrace(meta={"solver": "rbp", "schedule": schedule.kind, "schedule_seed": schedule.seed})
    trace.append(0, mse(state.a, inst.s), float(np.mean(state.v)), d_param(state.a, inst.s), float("nan"))
    limit = DIVERGENCE_FACTOR * prior.second_moment
    for _ in range(cfg.max_iter):
        if schedule.kind == "parallel":
            new = rbp_parallel_sweep(state, inst, prior, op)
        else:
            new = rbp_sequential_sweep(state, inst, prior, schedule, op)
        if new.diverged:
            trace.status = "diverged"
            break
        change = float(np.mean(np.abs(new.a - state.a)))
        state = new
        e = mse(state.a, inst.s)
        trace.append(state.sweep, e, float(np.mean(state.v)), d_param(state.a, inst.s), change)
        if not e < limit:
            trace.status = "diverged"
            break
        if change < cfg.tol:
            trace.status = "converged"
            break
    trace.state = state
    return trace

"""Synthetic compressed-sensing instances with a tunable matrix mean."""
import json
from dataclasses import dataclass, replace

import numpy as np

from .denoiser import Prior, sample_signal


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """``y = F s + noise`` with ``F`` of shape (M, N).

    Arrays are marked read-only so an instance can be shared between
    concurrent solver runs.
    """

    f: np.ndarray
    s: np.ndarray
    y: np.ndarray
    delta: float
    gamma: float
    seed: int
    prior: Prior = None
    mean_removed: bool = False

    def __post_init__(self):
        m, n = self.f.shape
        if m < 1 or n < 1:
            raise ValueError("matrix must have at least one row and one column")
        if self.s.shape != (n,) or self.y.shape != (m,):
            raise ValueError("shape mismatch between F, s and y")
        for arr in (self.f, self.s, self.y):
            arr.flags.writeable = False

    @property
    def m(self):
        return self.f.shape[0]

    @property
    def n(self):
        return self.f.shape[1]

    @property
    def alpha(self):
        return self.m / self.n

    def header(self):
        return {
            "schema": "ampstab.instance/1",
            "m": self.m,
            "n": self.n,
            "gamma": self.gamma,
            "delta": self.delta,
            "rho": None if self.prior is None else self.prior.rho,
            "slab_mean": None if self.prior is None else self.prior.slab_mean,
            "slab_var": None if self.prior is None else self.prior.slab_var,
            "seed": self.seed,
            "mean_removed": self.mean_removed,
        }


def generate(n, m, gamma, delta, prior, seed):
    """Draw an instance with ``F_ij = gamma / N + N(0, 1) / sqrt(N)``.

    The matrix, signal and noise come from three independent child streams
    of ``seed``, so changing ``delta`` leaves ``F`` and ``s`` untouched.
    """
    if n < 1 or m < 1:
        raise ValueError(f"n and m must be positive, got n={n}, m={m}")
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    mat_seq, sig_seq, noise_seq = np.random.SeedSequence(seed).spawn(3)
    rng = np.random.default_rng(mat_seq)
    f = gamma / n + rng.standard_normal((m, n)) / np.sqrt(n)
    s = sample_signal(prior, n, sig_seq)
    y = f @ s
    if delta > 0:
        y = y + np.sqrt(delta) * np.random.default_rng(noise_seq).standard_normal(m)
    return ProblemInstance(f=f, s=s, y=y, delta=float(delta), gamma=float(gamma),
                           seed=seed, prior=prior)


def mean_remove(inst):
    """Subtract column means from ``F`` and the mean from ``y``.

    Without noise the centred system ``y - mean(y) = (F - mean_col(F)) s``
    holds exactly; the ground truth is unchanged.
    """
    f = inst.f - inst.f.mean(axis=0, keepdims=True)
    y = inst.y - inst.y.mean()
    return replace(inst, f=f, y=y, mean_removed=True)


def mse(estimate, truth):
    estimate, truth = np.asarray(estimate), np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"length mismatch: {estimate.shape} vs {truth.shape}")
    return float(np.mean((truth - estimate) ** 2))


def d_param(estimate, truth):
    """Average signed bias ``mean(truth - estimate)``."""
    estimate, truth = np.asarray(estimate), np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"length mismatch: {estimate.shape} vs {truth.shape}")
    return float(np.mean(truth - estimate))


def save(inst, path):
    """Write ``inst`` to an ``.npz`` archive with a JSON header entry."""
    np.savez(path, f=inst.f, s=inst.s, y=inst.y, header=np.array(json.dumps(inst.header())))


def load(path):
    with np.load(path) as data:
        header = json.loads(str(data["header"]))
        f, s, y = data["f"].copy(), data["s"].copy(), data["y"].copy()
    prior = None
    if header.get("rho") is not None:
        prior = Prior(header["rho"], header["slab_mean"], header["slab_var"])
    return ProblemInstance(f=f, s=s, y=y, delta=header["delta"], gamma=header["gamma"],
                           seed=header["seed"], prior=prior,
                           mean_removed=header.get("mean_removed", False))

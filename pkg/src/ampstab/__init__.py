"""Bayes-optimal AMP for compressed sensing with non-zero-mean matrices.

Modules
-------
denoiser    Bernoulli-Gaussian prior and tilted-posterior cumulants
instance    synthetic instances and mean removal
amp         parallel AMP with optional damping
rbp         relaxed BP with parallel / random-sequential schedules
evolution   (E, V, D) state evolution and Nishimori-line stability
experiments batch experiments behind the ``ampstab`` CLI
"""
from .amp import AmpConfig, AmpState, AmpTrace, amp_diagnostics, amp_init, amp_run, amp_step
from .denoiser import NumericalError, Prior, cumulants, f1, f2, f3, f4, oracle_cumulant, sample_signal
from .evolution import (
    Quadrature,
    SeParams,
    SeState,
    StabilityReport,
    critical_gammas,
    fd_check_matrix,
    find_gamma_c,
    lambda_d,
    lambda_k,
    nishimori_trajectory,
    se_run,
    se_step,
    stability_profile,
)
from .instance import ProblemInstance, d_param, generate, mean_remove, mse
from .rbp import RbpState, Schedule, rbp_init, rbp_parallel_sweep, rbp_run, rbp_sequential_sweep

__version__ = "0.1.0"

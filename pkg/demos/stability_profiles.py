"""Transverse eigenvalues along the Bayes-optimal line for four matrix means."""
import numpy as np

from ampstab import Prior, SeParams, fd_check_matrix, lambda_d, lambda_k, stability_profile

prior = Prior(0.1)
alpha, delta = 0.3, 1e-10

# The scalar state evolution visits V from rho down to the noise floor.
# Along the way |lambda_D| grows like gamma^2 and decides the regime.
for gamma in (1.9, 2.5, 2.9, 3.6):
    rep = stability_profile(SeParams(alpha, delta, gamma, prior))
    print(f"gamma={gamma}: {len(rep.v_grid)} iterates, max|lambda_D|={np.max(np.abs(rep.lambda_d)):.3f}, "
          f"fixed-point lambda_D={rep.lambda_d_fixed_point:+.3f} -> {rep.regime}")

# lambda_K does not care about gamma and stays inside the unit circle
print("max|lambda_K| =", np.max(np.abs(rep.lambda_k)))

# Finite differences of the full (E, V, D) map confirm the closed forms
p = SeParams(alpha, delta, 2.5, prior)
for v in (0.05, 1e-3, 1e-6):
    jac = fd_check_matrix(v, p)
    print(f"V={v:g}: FD diag=({jac[0, 0]:+.5f}, {jac[1, 1]:+.5f})  "
          f"closed=({lambda_k(v, p):+.5f}, {lambda_d(v, p):+.5f})  off-diag max={np.max(np.abs([jac[0, 1], jac[1, 0]])):.1e}")

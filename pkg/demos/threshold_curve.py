"""Critical matrix means versus sparsity in the noiseless problem."""
from ampstab import Prior, SeParams, critical_gammas, find_gamma_c
from ampstab.evolution import critical_gammas_continuum

# At rho = 0.1 the two thresholds from the Nishimori trajectory, at two sampling ratios
for alpha in (0.3, 0.6):
    p = SeParams(alpha, 0.0, 0.0, Prior(0.1))
    g1, g2 = critical_gammas(p)
    print(f"alpha={alpha}: bisection ({find_gamma_c(p, 1):.6f}, {find_gamma_c(p, 2):.6f})  "
          f"scaling formula ({g1:.6f}, {g2:.6f})")

# Over the whole range of channel widths the curve does not depend on alpha at all
print("rho    gamma_c1  gamma_c2")
for rho in (0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9):
    g1, g2 = critical_gammas_continuum(Prior(rho))
    print(f"{rho:<5}  {g1:8.4f}  {g2:8.4f}")

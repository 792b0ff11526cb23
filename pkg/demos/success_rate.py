"""How often plain AMP recovers the signal as the matrix mean grows."""
import numpy as np

from ampstab import AmpConfig, Prior, amp_run, generate

prior = Prior(0.1)
n, m, trials = 1000, 300, 20

print("gamma  plain  damped(0.5)")
for gamma in (0.0, 1.0, 2.0, 2.2, 2.4, 2.8, 3.5):
    plain = damped = 0
    for seed in range(trials):
        inst = generate(n, m, gamma, 1e-10, prior, seed)
        plain += amp_run(inst, prior).succeeded(1e-6)
        damped += amp_run(inst, prior, AmpConfig(damping=0.5)).succeeded(1e-6)
    print(f"{gamma:5.1f}  {plain / trials:5.2f}  {damped / trials:5.2f}")

# A failing run: E climbs instead of settling
tr = amp_run(generate(n, m, 3.6, 1e-10, prior, 0), prior, AmpConfig(max_iter=40))
print("gamma=3.6 status:", tr.status)
print("E per iteration:", np.array2string(tr.e, precision=3))

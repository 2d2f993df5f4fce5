"""
How sensitivity grows with size
===============================

The peak QFI of a probe in the field h i^gamma grows as L^beta. Fitting
beta for several gamma exposes a linear law beta = a gamma + b.
"""

from starkprobe.protocols import beta_gamma_law, log_grid

# Modest sizes keep this quick; the exponents settle already here.
sizes = (60, 90, 120, 150)
gammas = (0.5, 1.0, 2.0, 3.0)
law, scans = beta_gamma_law(gammas, sizes, bootstrap=100, hs=log_grid(1e-14, 1e-1, 10))

print("gamma   beta    stderr")
for s in scans:
    print(f"{s.gamma:5.1f}   {s.fit.slope:6.3f}  {s.fit.stderr_slope:.3f}")
print(f"\nbeta = {law.slope:.3f} gamma + {law.intercept:.3f}")

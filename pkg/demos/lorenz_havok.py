"""Lorenz x(t) as a linear system with intermittent forcing.

Simulate, embed in delay coordinates, fit the (r-1)-dimensional linear
model driven by v_r, and re-simulate it from the measured forcing.

    python demos/lorenz_havok.py
"""
import numpy as np

from havok import model as hm, systems
from havok.embedding import energy_fraction

traj = systems.simulate(systems.default_spec("lorenz"))
x = systems.measure(traj, "x")
print(f"{len(x)} samples, dt = {x.dt}")

# 100 delays, keep 15 eigen-time-delay coordinates
model, dec = hm.fit(x, q=100, r=15, source="lorenz")
print(f"energy in first 15 modes: 1 - E = {1 - energy_fraction(dec, 15):.2e}")
print(f"skewness of A: {model.skewness():.4f}")

# superdiagonal of A grows roughly as 5, 10, 15, ...
sup = np.abs(np.diag(model.A, 1))[:8]
print("superdiagonal:", np.round(sup, 2))

lam = hm.eigenvalues(model)
for z in lam[lam.imag > 0][:4]:
    print(f"  eigenvalue {z.real:+.4f} {z.imag:+.4f}i")

# drive the linear model with the measured v_15
forcing = hm.extract_forcing(model, x)
sim = hm.simulate(model, forcing, dec.V[0, :14])
print(f"corr(v1, model v1) = {np.corrcoef(dec.V[:, 0], sim[:, 0])[0, 1]:.5f}")

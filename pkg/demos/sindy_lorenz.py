"""Recover the Lorenz equations from clean data with sparse regression.

    python demos/sindy_lorenz.py
"""
import numpy as np

from havok import regression, systems
from havok.timeseries import central_difference

X = systems.simulate(systems.default_spec("lorenz", m=20_000)).states
dX = central_difference(X, 0.001)
model = regression.sindy(X[2:-2], dX, regression.SindyLibrarySpec(2), 0.025, ["x", "y", "z"])

for j, name in enumerate("xyz"):
    terms = [f"{model.Xi[i, j]:+.4f} {model.labels[i]}" for i in np.flatnonzero(model.Xi[:, j])]
    print(f"d{name}/dt = " + " ".join(terms))

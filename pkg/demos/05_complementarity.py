"""Recovering complementarity multipliers from a constrained trajectory.

With C = {x : H x + c >= 0}, the catching-up velocity satisfies
v = f + H^T lambda for a multiplier lambda >= 0 that vanishes off the
constraint. A constant drift toward the wall hits it at t = 0.5, after which
lambda exactly cancels the drift.
"""
import numpy as np

from proxreg.observer import ndcs_build
from proxreg.solver import IntegratorConfig, constant_field, integrate

drift = constant_field([-1.0])
wall, extract = ndcs_build(drift, [[1.0]], [0.0])
traj = integrate(wall, drift, [0.5], IntegratorConfig(1e-3, 1.5))
rep = extract(traj)

print(f"activation at t = {rep.activation_time:.4f}")
print(f"min lambda {rep.min_multiplier:.2e}, min g {rep.min_constraint:.2e}, "
      f"max |lambda g| {rep.max_product:.2e}")
for t in (0.25, 0.75, 1.25):
    k = int(round(t / 1e-3))
    print(f"  t={t}: x={round(traj.states[k][0], 4) + 0.0:.4f} lambda={round(rep.multipliers[k][0], 4) + 0.0:.4f}")

"""Discrete solutions confined to a sampled range.

Adding ``lambda * dist(., K)`` to the cusp energy, for a sampled range
``K`` of the minimal solution, keeps every proximal step inside ``K``.
With ``lambda = 0`` the same steps leave it, so nothing ties the discrete
solutions to the solution one wants once the flow reaches the cusp.

Run with ``python3 demos/penalized_steps.py`` (a few seconds).
"""
import numpy as np

from gradflow.energy import cusp
from gradflow.flow import curve_from_function
from gradflow.penalize import sample_range, verify_confinement


def main():
    phi = cusp()
    u = curve_from_function(lambda t: (1 - t) * np.abs(1 - t), 2.0, 1e-3, deriv=lambda t: -2 * np.abs(1 - t))
    tau = 2.0 ** -12
    cloud = sample_range(u, tau, 0.25)
    steps = len(cloud) - 1
    print(f"cloud: {len(cloud)} samples of u on [0, 0.25], tau = {tau:.3g}")

    for lam in (0.08, 0.0):
        rep = verify_confinement(phi, cloud, lam, tau, 1.0, steps, check_hypothesis=False)
        print(f"  lambda = {lam:<5} escapes = {rep.escapes:4d}  branches = {len(rep.membership)}  "
              f"max |xi| = {rep.max_residual:.4f}")


if __name__ == "__main__":
    main()

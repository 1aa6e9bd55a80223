"""Non-unique flows on the cusp energy and how time changes order them.

From ``u0 = 1`` the cusp flow reaches the critical point 0 at ``t = 1``
and may rest there for any time before moving on. This script builds the
solution that never rests, a paused one, measures their minimality
defects, removes the pause and shows the time change that links them.

Run with ``python3 demos/cusp_solutions.py``.
"""
import numpy as np

from gradflow.energy import cusp
from gradflow.flow import metric_dT
from gradflow.reparam import construct_time_change, minimal_cusp, minimality_defect, minimalize, paused_cusp


def main():
    phi = cusp()
    v = minimal_cusp(1.5)
    u = paused_cusp(0.5, 2.0)

    print("minimality defect")
    print(f"  minimal curve v : {minimality_defect(phi, v):.4f}")
    print(f"  paused curve u  : {minimality_defect(phi, u):.4f}")

    w = minimalize(phi, u)
    print(f"\nminimalize(u) ends at t = {w.horizon:.4f}; d_T(minimalize(u), v) = "
          f"{metric_dT(w, v, min(w.horizon, v.horizon)):.2e}")

    z = construct_time_change(phi, u, v)
    print(f"\nu = v o z holds: {z.ok}; max mismatch {z.max_mismatch:.1e}")
    for t in (0.5, 1.0, 1.25, 1.5, 2.0):
        print(f"  z({t:4.2f}) = {np.interp(t, z.grid, z.values):.4f}")

    back = construct_time_change(phi, v, u)
    print(f"\nthe reverse relation v = u o z' holds: {back.ok} ({back.reason})")


if __name__ == "__main__":
    main()

"""A flow that stalls on a Cantor set while its energy keeps dropping.

The gradient ``g`` vanishes on the middle-third Cantor set ``C``. The
minimal flow ``v`` crosses ``C`` in zero time. Slowing ``v`` with the
Cantor measure gives ``w``, which spends unit time where ``g = 0``, yet
``-G(w)`` still decreases wherever ``w`` moves.

Run with ``python3 demos/cantor_flow.py [depth]``.
"""
import sys

from gradflow.cantor import build_cantor_model, cantor_flows, demonstrate_nonminimality


def main(depth=6):
    model = build_cantor_model(depth)
    for k, v in model.manifest().items():
        print(f"  {k:>14} : {v}")
    flows = cantor_flows(model)
    rep = demonstrate_nonminimality(model, flows=flows)
    print(f"\ntime with |g| ~ 0: v {rep.defect_v:.2e}, w {rep.defect_w:.6f}")
    print(f"energy drop: v {rep.drop_v:.8f}, w {rep.drop_w:.8f}, G(1) {rep.drop_exact:.8f}")
    print(f"w moves on {rep.moving_cells} cells and the energy drops on {rep.strict_drops} of them")
    for name, ok in rep.checks.items():
        print(f"  {'PASS' if ok else 'FAIL'}  {name}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 6)

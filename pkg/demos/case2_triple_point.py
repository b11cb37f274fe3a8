"""Case II: three equally deep wells and the avoided crossing next to them.

Finds the triple point of the landscape on the r1 = 0 line, then follows
the spin-20 spectrum along r2 to the ground-state avoided crossing and shows
that the ground state there spreads over three regions of the sphere.

Run with ``python3 demos/case2_triple_point.py``.
"""

import numpy as np

from spincat import bloch_grid, eigensystem, load_preset, locate_triple_point, minimum_gap, reduce_params
from spincat.semiclassic import model_at


def main():
    sc = load_preset("case2")
    rp = reduce_params(sc.model.with_field(0.0, 0.0, 0.0))[0]
    tp = locate_triple_point(rp.r3, rp.r4, rp.r5, sc.triple.seed)
    print(f"triple point: r1 = {tp.r1:.2e} K, r2 = {tp.r2:.6f} K after {tp.iterations} Newton steps")
    for theta, phi_c in tp.wells:
        print(f"  well at theta = {theta:.4f}, phi_c = {phi_c:.4f}")

    ev = minimum_gap(sc.model.with_field(Bx=0.0), "r2", sc.triple.gap_bracket, upper=2, S=20)
    print(f"\nS = 20 ground-state avoided crossing: r2 = {ev.location:.6f} K, gap {ev.gap:.3e} K")
    print(f"offset from the triple point: {ev.location - tp.r2:+.4f} K")

    eig = eigensystem(model_at(sc.model.at_spin(20), 0.0, ev.location))
    for k in range(3):
        lobes = bloch_grid(eig, k).lobes()
        where = ", ".join(f"{np.round(lobe.direction, 2)} ({lobe.mass:.2f})" for lobe in lobes)
        print(f"  state {k}: {where}")


if __name__ == "__main__":
    main()

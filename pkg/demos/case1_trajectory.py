"""Case I: a spin landscape with two overlapping butterflies.

Walks the field once around a circle of 15.63 T and reports where the
deepest semiclassical well changes identity, where the quantum ground state
goes through an avoided crossing, and how the ground state moves across the
Bloch sphere.  Finishes by comparing the ground energy with the landscape
minimum as the spin grows.

Run with ``python3 demos/case1_trajectory.py [--plot out.png]``.
"""

import argparse
import math

import numpy as np

from spincat import bloch_grid, eigensystem, field_at, global_minimum, load_preset, reduce_params, scan_trajectory


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--plot", help="write the spectrum along the circle to this image")
    args = parser.parse_args()

    sc = load_preset("case1")
    tr = sc.trajectory
    rp = reduce_params(sc.model.with_field(0.0, 0.0, 0.0))[0]
    print(f"reduced anisotropy: r3 = {rp.r3:.4f} K, r4 = {rp.r4:.4f} K, r5 = {rp.r5 + 0.0:.4f} K")

    scan = scan_trajectory(tr.trajectory, sc.model, n_steps=tr.steps)
    print(f"\nwell census along the circle: {sorted(set(scan.census.tolist()))} minima")
    for ev in scan.events:
        if ev.kind == "maxwell":
            print(f"  Maxwell crossing   wt = {ev.location:.5f}  depth mismatch {ev.residual:.1e} K")
        else:
            print(f"  avoided crossing   wt = {ev.location:.5f}  gap {ev.gap:.3e} K")
    if not scan.events_of("avoided"):
        print("  no E1 - E0 dip is deep enough to count as an isolated avoided crossing at this spin")

    print("\nground state on the Bloch sphere (lobes by weight):")
    for wt in tr.bloch_wt:
        eig = eigensystem(sc.model.replace(B=tuple(field_at(tr.trajectory, wt))))
        lobes = bloch_grid(eig, 0).lobes()
        where = ", ".join(f"{np.round(lobe.direction, 2)} ({lobe.mass:.2f})" for lobe in lobes)
        print(f"  wt = {wt:.1f}: {where}")

    m = sc.model.replace(B=tuple(field_at(tr.trajectory, 0.4)))
    vmin = global_minimum(m)[2]
    print(f"\nat wt = 0.4 the landscape minimum is {vmin:.3f} K")
    for S in (5, 10, 15, 20, 40):
        e0 = eigensystem(m.at_spin(S)).energies[0]
        print(f"  S = {S:>2}: E0 = {e0:9.3f} K, E0 - Vmin = {e0 - vmin:8.3f} K")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(scan.wt, scan.energies[:, :6], color="0.3", lw=0.8)
        ax.plot(scan.wt, scan.global_value, color="tab:red", lw=1.2, label="deepest well")
        for ev in scan.events_of("maxwell"):
            ax.axvline(ev.location, color="tab:red", ls="--", lw=0.6)
        ax.set_xlabel(r"$\omega t$ (rad)")
        ax.set_ylabel("E (K)")
        ax.set_xlim(0, 2 * math.pi)
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)
        print(f"\nwrote {args.plot}")


if __name__ == "__main__":
    main()

"""Fe8: resonant tunnelling seen by the master equation.

Scans the relaxation time through the first few tunnelling resonances,
checks that the stationary populations are thermal, and runs a short
hysteresis loop around zero field at two sweep rates.

Run with ``python3 demos/fe8_relaxation.py [--plot out.png]``.
"""

import argparse

import numpy as np

from spincat import (
    SweepSchedule,
    build_rate_matrix,
    eigensystem,
    fidelity,
    hysteresis_loop,
    load_preset,
    relaxation_time,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--plot", help="write the loops to this image")
    args = parser.parse_args()

    sc = load_preset("fe8_fig1")
    model, env = sc.model, sc.environment
    bs = np.linspace(-0.5, 0.5, 201)
    tau = np.array([relaxation_time(build_rate_matrix(eigensystem(model.with_field(Bz=b)), env)) for b in bs])
    drops = [i for i in range(1, len(bs) - 1) if tau[i] < tau[i - 1] and tau[i] <= tau[i + 1]]
    print("relaxation-time minima (T):", np.round(bs[drops], 3).tolist())
    print(f"tau ranges from {tau.min():.3g} s to {tau.max():.3g} s")

    F0 = fidelity(model.with_field(Bz=0.0), 0, sc.scan.dB).F
    F1 = fidelity(model.with_field(Bz=0.05), 0, sc.scan.dB).F
    print(f"ground-state fidelity: {F0:.4f} at the zero-field resonance, {F1:.6f} off resonance")

    eig = eigensystem(model.with_field(Bz=0.1))
    p = build_rate_matrix(eig, env.replace(gamma_t=0.0)).stationary()
    boltz = np.exp(-(eig.energies - eig.energies[0]) / env.T)
    print(f"stationary vs thermal populations: max difference {np.abs(p - boltz / boltz.sum()).max():.1e}")

    loops = {}
    for rate in (0.007, 0.056):
        sch = SweepSchedule(rate, -0.3, 0.3, offset=model.B)
        p0 = np.zeros(model.dim)
        p0[0] = 1.0
        # an even count skips b = 0, where the tunnel doublet is fully delocalized
        loops[rate] = hysteresis_loop(model, env, sch, p0=p0, n_out=120)
        up = loops[rate].leg_slice(0)
        print(f"{rate} T/s: M/S goes from {loops[rate].m[up][0]:+.3f} to {loops[rate].m[up][-1]:+.3f} on the up sweep")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
        a1.semilogy(bs, tau)
        a1.set_xlabel("Bz (T)")
        a1.set_ylabel("tau (s)")
        for rate, loop in loops.items():
            a2.plot(loop.b, loop.m, label=f"{rate} T/s")
        a2.set_xlabel("Bz (T)")
        a2.set_ylabel("M/S")
        a2.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)
        print(f"wrote {args.plot}")


if __name__ == "__main__":
    main()

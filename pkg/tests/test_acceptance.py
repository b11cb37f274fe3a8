"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with the number
it was judged on; the lines are repeated in the terminal summary.
"""

import math
import time

import mpmath
import numpy as np
import pytest
from scipy.ndimage import binary_dilation

from spincat.catastrophe import bifurcation_branch, circle_potential, locate_triple_point, maxwell_branches, maxwell_oracle
from spincat.dynamics import (
    PopulationState,
    SweepSchedule,
    _LabelledGenerator,
    build_rate_matrix,
    equilibrium_state,
    evolve,
    evolve_frozen,
    hysteresis_loop,
    relaxation_time,
)
from spincat.probes import bloch_grid, fidelity, fidelity_susceptibility
from spincat.scenario import PRESETS, load_preset
from spincat.semiclassic import global_minimum, model_at, potential_full, potential_reduced, reduce_params
from spincat.semiclassic import ReducedParams
from spincat.spinops import SpinModel, assign_labels, eigensystem
from spincat.trajectory import field_at, minimum_gap, scan_trajectory

RESULTS = []
MU_B = 0.67171  # K/T, Bohr magneton over Boltzmann constant


def report(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def local_minima(y):
    y = np.asarray(y)
    return [i for i in range(1, len(y) - 1) if y[i] < y[i - 1] and y[i] <= y[i + 1]]


def local_maxima(y):
    return local_minima(-np.asarray(y))


def within(xs, targets, tol):
    """Entries of ``xs`` farther than ``tol`` from every target."""
    targets = np.asarray(sorted(targets))
    return [x for x in xs if targets.size == 0 or np.min(np.abs(targets - x)) > tol]


# --------------------------------------------------------------------------
# independent matrix route for the semiclassical potential
# --------------------------------------------------------------------------


def spin_matrices(S):
    m = np.arange(S, -S - 1, -1.0)  # descending basis, unlike the library
    up = np.sqrt(S * (S + 1) - m[1:] * (m[1:] + 1))
    sp = np.diag(up, 1).astype(complex)
    sm = sp.T.copy()
    return np.diag(m).astype(complex), sp, sm


def oracle_hamiltonian(S, D, E, B40, B42, B43, B44, B, g=2.0):
    sz, sp, sm = spin_matrices(S)
    sx, sy = (sp + sm) / 2, (sp - sm) / 2j
    one = np.eye(len(sz))
    s = S * (S + 1)

    def sym(a, b):
        return (a @ b + b @ a) / 2

    o20 = 3 * sz @ sz - s * one
    o22 = sx @ sx - sy @ sy
    o40 = 35 * np.linalg.matrix_power(sz, 4) - (30 * s - 25) * sz @ sz + (3 * s * s - 6 * s) * one
    o42 = sym(7 * sz @ sz - (s + 5) * one, np.linalg.matrix_power(sp, 2) + np.linalg.matrix_power(sm, 2)) / 2
    o43 = sym(sz, np.linalg.matrix_power(sp, 3) + np.linalg.matrix_power(sm, 3)) / 2
    o44 = (np.linalg.matrix_power(sp, 4) + np.linalg.matrix_power(sm, 4)) / 2
    c2 = 1 / (S * (2 * S - 1))
    c4 = 1 / (S * (2 * S - 1) * (2 * S - 2) * (2 * S - 3))
    H = c2 * (D * o20 / 3 + E * o22) + c4 * (B40 * o40 + B42 * o42 + B43 * o43 + B44 * o44)
    H = H - g * MU_B / S * (B[0] * sx + B[1] * sy + B[2] * sz)
    return H, (sx, sy, sz)


def oracle_potential(H, ops, S, theta, phi):
    # the coherent state is the top eigenvector of n.S
    n = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), -math.cos(theta))
    w, v = np.linalg.eigh(sum(c * op for c, op in zip(n, ops)))
    z = v[:, -1]
    assert abs(w[-1] - S) < 1e-9
    return float(np.real(z.conj() @ H @ z))


def test_criterion_01_closed_form_potential():
    rng = np.random.default_rng(2024)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(1000):
        S = int(rng.choice([2, 5, 10, 20]))
        D, E = rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)
        B4 = rng.uniform(-0.05, 0.05, 4)
        B = rng.uniform(-1, 1, 3)
        theta, phi = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
        model = SpinModel(S, D=D, E=E, B40=B4[0], B42=B4[1], B43=B4[2], B44=B4[3], B=tuple(B))
        H, ops = oracle_hamiltonian(S, D, E, *B4, B)
        worst = max(worst, abs(potential_full(theta, phi, model) - oracle_potential(H, ops, S, theta, phi)))
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-10 and elapsed < 10, f"max |closed form - matrix| = {worst:.2e} K, {elapsed:.2f} s")


def test_criterion_02_potential_is_spin_independent():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        base = SpinModel(
            10,
            D=rng.uniform(-1, 1),
            E=rng.uniform(-0.3, 0.3),
            B40=rng.uniform(-0.05, 0.05),
            B42=rng.uniform(-0.05, 0.05),
            B43=rng.uniform(-0.05, 0.05),
            B44=rng.uniform(-0.05, 0.05),
            B=tuple(rng.uniform(-1, 1, 3)),
        )
        theta, phi = rng.uniform(0, math.pi, 16), rng.uniform(0, 2 * math.pi, 16)
        values = np.array([potential_full(theta, phi, base.at_spin(S)) for S in (2, 5, 10, 20)])
        worst = max(worst, float(np.max(np.ptp(values, axis=0))))
    report(2, worst < 1e-10, f"max spread over S = {worst:.2e} K")


def test_criterion_03_astroid():
    worst = 0.0
    for r3 in (-2.0, -0.3, 0.7):
        for phi_c in (0.0, math.pi):
            pts = bifurcation_branch(r3, 0.0, 0.0, phi_c=phi_c).points
            lhs = np.abs(pts[:, 0]) ** (2 / 3) + np.abs(pts[:, 1]) ** (2 / 3)
            rhs = (4 * abs(r3)) ** (2 / 3)
            worst = max(worst, float(np.max(np.abs(lhs - rhs) / rhs)))
    report(3, worst < 1e-9, f"max relative astroid residual = {worst:.2e}")


# --------------------------------------------------------------------------
# Maxwell curves against the raster oracle
# --------------------------------------------------------------------------


def _global_runs(curve):
    flags = curve.is_global
    runs, i = [], 0
    while i < len(flags):
        if flags[i]:
            j = i
            while j < len(flags) and flags[j]:
                j += 1
            runs.append(curve.points[i:j])
            i = j
        else:
            i += 1
    return runs


def _curve_pixels(pm, runs):
    """Pixels crossed by the polylines, sampled at a tenth of a pixel."""
    dx, dy = pm.pixel
    hits = np.zeros(pm.boundary.shape, bool)
    for run in runs:
        pts = [run[:1]]
        for a, b in zip(run[:-1], run[1:]):
            n = int(np.ceil(max(abs(b[0] - a[0]) / dx, abs(b[1] - a[1]) / dy) * 10)) + 1
            t = np.linspace(0, 1, n + 1)[1:, None]
            pts.append(a + t * (b - a))
        pts = np.concatenate(pts)
        pts = pts[pm.inside(pts)]
        idx = pm.pixel_of(pts)
        hits[idx[:, 0], idx[:, 1]] = True
    return hits


def _is_minimum(alpha, r):
    h = 1e-4
    v = circle_potential(alpha, *r)
    return circle_potential(alpha - h, *r) > v and circle_potential(alpha + h, *r) > v


@pytest.mark.parametrize("name", ["fe8", "case1", "case2"])
def test_criterion_04_maxwell_curves(name):
    sc = load_preset(name)
    rp = reduce_params(sc.model.with_field(0.0, 0.0, 0.0))[0]
    r3, r4, r5 = rp.r3, rp.r4, rp.r5
    curves = [c for c in maxwell_branches(r3, r4, r5) if c.kind == "maxwell-minima"]
    depth, not_minima = 0.0, 0
    for c in curves:
        for (r1, r2), (a1, a2) in zip(c.points, c.generator):
            r = (r1, r2, r3, r4, r5)
            depth = max(depth, abs(circle_potential(a1, *r) - circle_potential(a2, *r)))
            not_minima += not (_is_minimum(a1, r) and _is_minimum(a2, r))
    sp = sc.separatrix
    pm = maxwell_oracle(r3, r4, r5, (sp.r1[0], sp.r1[1], sp.r2[0], sp.r2[1]), resolution=(600, 600))
    runs = [run for c in curves for run in _global_runs(c)]
    pts = np.concatenate(runs)
    pts = pts[pm.inside(pts)]
    missed = int((~pm.near_boundary(pts)).sum())
    reach = binary_dilation(_curve_pixels(pm, runs), structure=np.ones((3, 3), bool))
    stray = int((pm.boundary & ~reach).sum())
    ok = depth < 1e-8 and not_minima == 0 and missed == 0 and stray == 0
    report(
        4,
        ok,
        f"{name}: depth diff {depth:.1e} K, non-minima {not_minima}, "
        f"curve points off raster {missed}/{len(pts)}, raster pixels off curves {stray}/{int(pm.boundary.sum())}",
    )


def test_criterion_05_triple_point():
    sc = load_preset("case2")
    rp = reduce_params(sc.model.with_field(0.0, 0.0, 0.0))[0]
    tp = locate_triple_point(rp.r3, rp.r4, rp.r5, sc.triple.seed)
    depths = [
        float(potential_reduced(theta, ReducedParams(tp.r1, tp.r2, rp.r3, rp.r4, rp.r5, phi_c=phi_c)))
        for theta, phi_c in tp.wells
    ]
    spread = max(depths) - min(depths)
    ok = len(tp.wells) == 3 and abs(tp.r2 + 44.3) <= 0.1 and spread < 1e-7
    report(5, ok, f"r2 = {tp.r2:.6f} K (r1 = {tp.r1:.1e}), well depth spread {spread:.1e} K")


def test_criterion_06_avoided_crossing():
    sc = load_preset("case2")
    start = time.perf_counter()
    ev = minimum_gap(sc.model.with_field(Bx=0.0), "r2", (-45.3, -44.3), upper=2, S=20)
    elapsed = time.perf_counter() - start
    ok = abs(ev.location + 44.80887) <= 0.01 and elapsed < 60
    report(6, ok, f"gap minimum at r2 = {ev.location:.6f} K (gap {ev.gap:.3e} K), {elapsed:.2f} s")


# --------------------------------------------------------------------------
# master equation
# --------------------------------------------------------------------------


def _mp_expm_row(G, t, i):
    """Row ``i`` of ``exp(G t)`` in 60-digit arithmetic."""
    mpmath.mp.dps = 60
    n = len(G)
    M = mpmath.matrix(G.tolist())
    for k in range(n):  # exact zero row sums in the extended precision copy
        M[k, k] = -mpmath.fsum(M[k, j] for j in range(n) if j != k)
    E = mpmath.expm(M * t)
    return np.array([float(E[i, j]) for j in range(n)])


def test_criterion_07_master_equation():
    worst_sum, worst_evolve, bad_kernel = 0.0, 0.0, []
    checked = 0
    for name in PRESETS:
        sc = load_preset(name)
        if sc.environment is None:
            continue
        model, env = sc.model, sc.environment
        for bz in (0.0, 0.25, 0.5):
            m = model.with_field(Bz=bz)
            G, _, _ = _LabelledGenerator(m, env).at(m.normalized().B)
            w = np.linalg.eigvals(G)
            zero = np.abs(w) <= 1e-12 * np.abs(G).max()
            if zero.sum() != 1 or not np.all(w[~zero].real < 0):
                bad_kernel.append((name, bz))
            tau = relaxation_time(G)
            p0 = np.zeros(len(G))
            p0[0] = 1.0
            p = evolve_frozen(p0, m, env, [5 * tau])[-1]
            worst_evolve = max(worst_evolve, float(np.max(np.abs(p - _mp_expm_row(G, 5 * tau, 0)))))
            worst_sum = max(worst_sum, abs(p.sum() - 1))
            checked += 1
        sch = SweepSchedule(0.05, -0.1, 0.1, offset=model.B, pattern="up")
        p0 = equilibrium_state(model, env, sch.field(sch.b_start))
        for s in evolve(PopulationState(0.0, sch.b_start, p0), sch, model, env, n_out=21, method="magnus"):
            worst_sum = max(worst_sum, abs(s.p.sum() - 1))
    ok = worst_sum < 1e-9 and not bad_kernel and worst_evolve < 1e-6
    report(
        7,
        ok,
        f"{checked} generators: |sum p - 1| <= {worst_sum:.1e}, bad kernels {bad_kernel}, "
        f"|evolve - exp(G 5tau)| <= {worst_evolve:.1e}",
    )


def test_criterion_08_boltzmann_stationarity():
    worst = 0.0
    for name in ("fe8", "fe4"):
        sc = load_preset(name)
        env = sc.environment.replace(gamma_t=0.0)
        for bz in (0.0, 0.25, 0.5):
            eig = eigensystem(sc.model.with_field(Bz=bz))
            x = np.exp(-(eig.energies - eig.energies.min()) / env.T)
            worst = max(worst, float(np.max(np.abs(build_rate_matrix(eig, env).stationary() - x / x.sum()))))
    report(8, worst < 1e-6, f"max |null vector - Boltzmann| = {worst:.1e}")


# --------------------------------------------------------------------------
# Fe8 field scan: colocation of probes with avoided crossings
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def fe8_scan():
    sc = load_preset("fe8_fig1")
    model, env = sc.model, sc.environment
    bs = sc.scan.values(None)
    E, F, chi, tau = [], [], [], []
    gaps = {-10: [], 10: []}
    for b in bs:
        m = model.with_field(Bz=float(b))
        eig = eigensystem(m)
        E.append(eig.energies)
        F.append(fidelity(m, 0, sc.scan.dB).F)
        chi.append(fidelity_susceptibility(eig, 0))
        tau.append(relaxation_time(build_rate_matrix(eig, env)))
        labels = np.asarray(assign_labels(eig, unique=True).m)
        for mm in gaps:
            i = int(np.nonzero(labels == mm)[0][0])
            gaps[mm].append(np.min(np.abs(np.delete(eig.energies, i) - eig.energies[i])))
    E = np.array(E)
    targets = set(bs[local_minima(E[:, 1] - E[:, 0])])
    for g in gaps.values():
        targets |= set(bs[local_minima(g)])
    return dict(sc=sc, bs=bs, F=np.array(F), chi=np.array(chi), tau=np.array(tau), targets=targets)


def test_criterion_09_colocation(fe8_scan):
    sc, bs, h = fe8_scan["sc"], fe8_scan["bs"], fe8_scan["sc"].scan.dB
    tol = h * (1 + 1e-6)
    targets = fe8_scan["targets"]
    drops = [bs[i] for i in local_minima(fe8_scan["F"]) if fe8_scan["F"][i] < 0.999]
    peaks = [bs[i] for i in local_maxima(fe8_scan["chi"])]
    tau_drops = [bs[i] for i in local_minima(fe8_scan["tau"])]

    sw = sc.sweeps[1]  # 0.056 T/s
    model = sc.model
    sch = SweepSchedule(
        sw.schedule.rate, sw.schedule.b_min, sw.schedule.b_max,
        direction=sw.schedule.direction, offset=model.B, pattern=sw.schedule.pattern,
    )
    p0 = np.zeros(model.dim)
    p0[0] = 1.0
    # one output per scan grid point on each leg
    loop = hysteresis_loop(model, sc.environment, sch, p0=p0, n_out=len(bs), max_field_step=sw.field_step)
    steps = []
    for leg in range(2):
        sl = loop.leg_slice(leg)
        b, m = loop.b[sl], loop.m[sl]
        slope = np.abs(np.gradient(m, b))
        steps += [b[i] for i in local_maxima(slope)]

    off = {
        "fidelity drops": within(drops, targets, tol),
        "chi peaks": within(peaks, targets, tol),
        "tau drops": within(tau_drops, targets, tol),
        "hysteresis steps": within(steps, tau_drops, tol),
    }
    counts = {"fidelity drops": drops, "chi peaks": peaks, "tau drops": tau_drops, "hysteresis steps": steps}
    detail = "; ".join(
        f"{k} off {len(v)}/{len(counts[k])}" + (f" e.g. {[round(float(x), 3) for x in v[:6]]}" if v else "")
        for k, v in off.items()
    )
    report(9, not any(off.values()), detail)


def test_criterion_10_arb4_features():
    sc = load_preset("arb4")
    model = sc.model
    bs = sc.scan.values(None)
    bs = bs[bs > 3.5]
    F = np.array([fidelity(model.with_field(Bz=float(b)), 0, sc.scan.dB).F for b in bs])
    chi = np.array([fidelity_susceptibility(eigensystem(model.with_field(Bz=float(b))), 0) for b in bs])
    drops = [bs[i] for i in local_minima(F) if F[i] < 0.999]
    peaks = [bs[i] for i in local_maxima(chi)]
    found = {
        target: (bool(drops) and min(abs(np.array(drops) - target)) <= 0.2, bool(peaks) and min(abs(np.array(peaks) - target)) <= 0.2)
        for target in (5.0, 5.6)
    }
    ok = all(a and b for a, b in found.values())
    report(
        10,
        ok,
        f"F drops above 3.5 T: {[round(float(x), 2) for x in drops]}, chi peaks: {[round(float(x), 2) for x in peaks]}, "
        f"min F = {F.min():.6f}",
    )


# --------------------------------------------------------------------------
# Bloch maps and the Case I trajectory
# --------------------------------------------------------------------------


def test_criterion_11_bloch_maps():
    sc = load_preset("case1")
    tr = sc.trajectory
    model = sc.model if tr.S is None else sc.model.at_spin(tr.S)
    worst = 0.0
    cap = None
    for wt in (0.3, 1.1, 1.6):
        eig = eigensystem(model.replace(B=tuple(field_at(tr.trajectory, wt))))
        for k in range(eig.dim):
            g = bloch_grid(eig, k)
            worst = max(worst, abs(g.normalization() - 1))
            if wt == 1.6 and k == 0:
                cap = g.cap_mass(3 * math.pi / 4)

    c2 = load_preset("case2")
    ev = minimum_gap(c2.model.with_field(Bx=0.0), "r2", (-45.3, -44.3), upper=2, S=20)
    m20 = model_at(c2.model.at_spin(20), 0.0, ev.location)
    lobes = bloch_grid(eigensystem(m20), 0).lobes()
    wanted = [np.array([0.0, 0.0, -1.0]), np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0])]
    matched = all(any(float(lobe.direction @ w) > 0.9 for lobe in lobes) for w in wanted)
    ok = worst < 1e-6 and cap > 0.9 and len(lobes) == 3 and matched
    dirs = [tuple(round(float(x), 2) for x in lobe.direction) for lobe in lobes]
    report(11, ok, f"normalization error {worst:.1e}; south cap mass at 1.6 = {cap:.3f}; case2 lobes {dirs}")


def test_criterion_12_case1_trajectory():
    sc = load_preset("case1")
    tr = sc.trajectory
    res = scan_trajectory(tr.trajectory, sc.model, n_steps=tr.steps)
    crossings = len(res.events_of("maxwell"))
    m = sc.model.replace(B=tuple(field_at(tr.trajectory, 0.4)))
    vmin = global_minimum(m)[2]
    offsets = [eigensystem(m.at_spin(S)).energies[0] - vmin for S in (5, 10, 15, 20)]
    approaching = all(o <= 0 for o in offsets) and all(abs(a) > abs(b) for a, b in zip(offsets, offsets[1:]))
    ok = crossings == 4 and approaching
    report(12, ok, f"{crossings} Maxwell crossings; E0 - Vmin for S = 5, 10, 15, 20: {[round(float(o), 3) for o in offsets]} K")

"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every tolerance is pinned here; the suite is the exit gate for the build.
"""

import itertools
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from flowdim.bowen import (
    BowenSpec,
    CloudSpec,
    PointCloud,
    full_enumeration_cloud,
    lattice_cloud,
    max_separated,
    min_diameter_cover,
    min_spanning,
    random_cloud,
)
from flowdim.cpstruct import (
    WeightedCPInstance,
    build_cp_instance,
    cp_critical,
    cp_outer,
    weighted_outer,
)
from flowdim.localent import sup_local_entropy
from flowdim.mdim import entropy_at_scale, mdim_profile
from flowdim.measures import (
    MeasureModel,
    brin_katok_local,
    grid_partition,
    katok_counts_multi,
    katok_profiles_multi,
    shapira_count,
    _katok_rates,
)
from flowdim.systems import FlowPoint, SystemDescriptor, estimate_lipschitz, make_system

LOG2 = math.log(2.0)


def report(criterion: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance {criterion}] {status}: {detail}")
    assert passed, f"{criterion}: {detail}"


def shift2(W=6):
    return make_system(
        SystemDescriptor(kind="susp-shift-finite", alphabet_size=2, window=W, roof=1.0)
    )


BERN = MeasureModel(kind="bernoulli", p=(0.5, 0.5))


def test_criterion_1_entropy_pin_finite_alphabet():
    """susp-shift-finite k=2 W=6 c=1, eps=0.4, orders 2..6: h in [0.60, 0.72]."""
    t0 = time.time()
    s = shift2(W=6)
    cs = CloudSpec(provenance="full-enumeration", coord_lo=0, coord_hi=6)
    h, diag = entropy_at_scale(s, 0.4, [2, 3, 4, 5, 6], cs)
    elapsed = time.time() - t0
    ok = 0.60 <= h <= 0.72 and elapsed < 60
    report(
        "1-entropy-pin",
        ok,
        f"h_hat={h:.4f} (true log2={LOG2:.4f}), counts={diag['counts']}, {elapsed:.1f}s",
    )


def test_criterion_2_mdim_zero_pins():
    """Torus mdim = 0 exactly; susp-shift quotient <= 0.25 at 2^-5, decreasing."""
    t0 = time.time()
    torus = make_system(
        SystemDescriptor(kind="torus-rotation", rotation=(0.3819660112501051,))
    )
    _, ests = mdim_profile(
        torus, [0.25, 0.125, 0.0625], [2, 3, 4, 5],
        CloudSpec(provenance="lattice", size=64), engine="greedy",
    )
    q = ests["quotient-sup"]
    torus_ok = q.upper == 0.0 and q.lower == 0.0
    s = make_system(
        SystemDescriptor(kind="susp-shift-finite", alphabet_size=2, window=10, roof=1.0)
    )
    prof, _ = mdim_profile(
        s, [2**-2, 2**-3, 2**-4, 2**-5], [2, 3, 4, 5, 6],
        CloudSpec(provenance="full-enumeration", coord_lo=0, coord_hi=6),
    )
    quots = [e.h_hat / math.log(1 / e.epsilon) for e in prof.entries]
    susp_ok = quots[-1] <= 0.25 and all(a > b for a, b in zip(quots, quots[1:]))
    elapsed = time.time() - t0
    report(
        "2-mdim-zero",
        torus_ok and susp_ok and elapsed < 60,
        f"torus upper={q.upper}, susp quotients={[round(v, 4) for v in quots]}, {elapsed:.1f}s",
    )


def test_criterion_3_mdim_one_pin():
    """susp-shift-interval g=32 W=4: slope-regression m in [0.8, 1.2]."""
    t0 = time.time()
    s = make_system(
        SystemDescriptor(kind="susp-shift-interval", grid_levels=32, window=4, roof=1.0)
    )
    _, ests = mdim_profile(
        s, [2**-2, 2**-3, 2**-4, 2**-5], [2, 3, 4, 5],
        CloudSpec(provenance="full-enumeration", coord_lo=-1, coord_hi=4),
    )
    m = ests["slope-regression"].upper
    elapsed = time.time() - t0
    report("3-mdim-one", 0.8 <= m <= 1.2 and elapsed < 600, f"m={m:.4f}, {elapsed:.1f}s")


def test_criterion_4_exact_sandwiches():
    """>= 50 randomized exact instances: r <= s <= r(eps/2), #(2eps) <= r <= #(eps/2)."""
    t0 = time.time()
    systems = [
        shift2(W=6),
        make_system(SystemDescriptor(kind="torus-rotation", rotation=(0.3819660112501051,))),
        make_system(SystemDescriptor(kind="susp-shift-interval", grid_levels=8, window=4)),
    ]
    rng = np.random.default_rng(2024)
    violations = 0
    instances = 0
    for trial in range(54):
        system = systems[trial % 3]
        size = int(rng.integers(6, 15))
        cloud = PointCloud(system, system.sample_points(size, seed=1000 + trial))
        eps = float(rng.uniform(0.15, 0.6))
        n = int(rng.integers(1, 4))
        spec = BowenSpec(mode="sampled", epsilon=eps, n=n, tau=1.0)
        r = min_spanning(system, cloud, cloud, spec, mode="exact").value
        s_val = max_separated(system, cloud, spec, mode="exact").value
        r_half = min_spanning(
            system, cloud, cloud, spec.with_epsilon(eps / 2), mode="exact"
        ).value
        cov2 = min_diameter_cover(system, cloud, spec.with_epsilon(2 * eps), mode="exact").value
        cov_half = min_diameter_cover(system, cloud, spec.with_epsilon(eps / 2), mode="exact").value
        instances += 1
        if not (r <= s_val <= r_half and cov2 <= r <= cov_half):
            violations += 1
    elapsed = time.time() - t0
    report(
        "4-exact-sandwiches",
        instances >= 50 and violations == 0 and elapsed < 300,
        f"{instances} instances, {violations} violations, {elapsed:.1f}s",
    )


def test_criterion_5_prop212_equivalence():
    """|cp_critical(full cloud, eps) - entropy_at_scale(eps)| <= 0.1 at 0.4, 0.2."""
    t0 = time.time()
    s = shift2(W=6)
    Z = full_enumeration_cloud(s, -2, 6)
    cs = CloudSpec(provenance="full-enumeration", coord_lo=0, coord_hi=6)
    gaps = []
    for eps in (0.4, 0.2):
        cv = cp_critical(s, Z, eps, 2, 9)
        h, _ = entropy_at_scale(s, eps, [2, 3, 4, 5, 6], cs)
        gaps.append(abs(cv.lambda_star - h))
    elapsed = time.time() - t0
    report(
        "5-prop212",
        all(g <= 0.1 for g in gaps) and elapsed < 300,
        f"gaps={[round(g, 4) for g in gaps]}, {elapsed:.1f}s",
    )


def test_criterion_6_prop35_sandwich():
    """>= 20 exact rational instances: M(lam+0.1, 6eps) <= W(lam, eps) <= M(lam, eps)."""
    t0 = time.time()
    s = shift2(W=6)
    cloud = full_enumeration_cloud(s, -1, 4)
    rng = np.random.default_rng(7)
    violations = 0
    instances = 0
    for trial in range(22):
        idx = sorted(rng.choice(len(cloud), size=6, replace=False).tolist())
        Z = cloud.subset(idx)
        eps = float(rng.uniform(0.08, 0.15))
        lam = float(rng.uniform(0.2, 0.9))
        inst = build_cp_instance(s, Z, eps, 1, 2)
        inst6 = build_cp_instance(s, Z, 6 * eps, 1, 2)
        g = inst.rational_gauges(Fraction(math.exp(-lam)))
        g6 = inst6.rational_gauges(Fraction(math.exp(-(lam + 0.1))))
        M, _, _, _ = cp_outer(inst, mode="exact", gauges=g)
        W_, _, _, _ = weighted_outer(
            WeightedCPInstance(inst, np.ones(len(Z))), mode="exact", gauges=g
        )
        M6, _, _, _ = cp_outer(inst6, mode="exact", gauges=g6)
        instances += 1
        if not (M6 <= W_ <= M):
            violations += 1
    elapsed = time.time() - t0
    report(
        "6-prop35",
        instances >= 20 and violations == 0 and elapsed < 300,
        f"{instances} rational instances, {violations} violations, {elapsed:.1f}s",
    )


def test_criterion_7_katok_convergence():
    """Bernoulli(1/2), delta=0.5, eps=0.4: slope of log R over 2..5 within
    0.15 of log 2; R(0.75) >= R(0.25) at every order."""
    t0 = time.time()
    # slope at a wide window (the truncation transient depresses the rate at
    # small windows); the sparse exact engine keeps this fast
    s11 = shift2(W=11)
    cands11 = full_enumeration_cloud(s11, -2, 6, heights=(0.0, 0.5))
    counts = []
    for n in (2, 3, 4, 5):
        spec = BowenSpec(mode="sampled", epsilon=0.4, n=n, tau=1.0)
        counts.append(katok_counts_multi(BERN, s11, spec, [0.5], cands11)[0.5])
    ls = _katok_rates([2, 3, 4, 5], counts, 1.0)["ls_slope"]
    slope_ok = abs(ls - LOG2) <= 0.15
    # delta monotonicity at W=6 (cheap, literal at every order)
    s6 = shift2(W=6)
    cands6 = full_enumeration_cloud(s6, -3, 5, heights=(0.0, 0.5))
    profs = katok_profiles_multi(BERN, s6, 0.4, [0.25, 0.75], [2, 3, 4, 5], cands6)
    mono_ok = all(
        hi >= lo for hi, lo in zip(profs[0.75]["counts"], profs[0.25]["counts"])
    )
    elapsed = time.time() - t0
    report(
        "7-katok",
        slope_ok and mono_ok and elapsed < 300,
        f"counts={counts} slope={ls:.4f} |slope-log2|={abs(ls - LOG2):.4f}, "
        f"monotone={mono_ok}, {elapsed:.1f}s",
    )


def test_criterion_8_brin_katok_sandwich():
    """BK upper/lower within log2 +- 0.15 at eps=0.4; Prop 3.1 ordering at
    every computed order."""
    t0 = time.time()
    s = shift2(W=6)
    z = s.zero_point()
    orders = list(range(5, 12))
    L = estimate_lipschitz(s, 1.0, pairs=8, seed=1).L_hat
    bk_s = brin_katok_local(BERN, s, z, 0.4, orders, mode="sampled")
    bk_f = brin_katok_local(BERN, s, z, 0.4, orders, mode="flow")
    bk_c = brin_katok_local(BERN, s, z, 0.4 / L, orders, mode="sampled")
    band_ok = abs(bk_s["upper"] - LOG2) <= 0.15 and abs(bk_s["lower"] - LOG2) <= 0.15
    order_ok = all(
        a <= b + 1e-12 and b <= c + 1e-12
        for a, b, c in zip(bk_s["sequence"], bk_f["sequence"], bk_c["sequence"])
    )
    elapsed = time.time() - t0
    report(
        "8-brin-katok",
        band_ok and order_ok and elapsed < 300,
        f"upper={bk_s['upper']:.4f} lower={bk_s['lower']:.4f} L_hat={L}, "
        f"ordered={order_ok}, {elapsed:.1f}s",
    )


def test_criterion_9_cross_notion_chain():
    """R <= N_mu(U^n, delta) for the fine cover and R <= r_n(cloud), literal."""
    t0 = time.time()
    s = shift2(W=6)
    cands = full_enumeration_cloud(s, -4, 6, heights=(0.0, 0.5))
    part = grid_partition(s, 0.4)
    assert part.diameter_bound <= 0.4
    violations = []
    for n in (2, 3, 4, 5):
        spec = BowenSpec(mode="sampled", epsilon=0.4, n=n, tau=1.0)
        R = katok_counts_multi(BERN, s, spec, [0.5], cands)[0.5]
        N = shapira_count(BERN, part, n, 0.5)
        r_n = min_spanning(s, cands, cands, spec, mode="greedy").value
        if not (R <= N and R <= r_n):
            violations.append((n, R, N, r_n))
    elapsed = time.time() - t0
    report(
        "9-chain",
        not violations and elapsed < 300,
        f"violations={violations}, {elapsed:.1f}s",
    )


def test_criterion_10_theorem_14():
    """|sup_local - entropy_at_scale| <= 0.1 on susp-shift-2 at 0.4, 0.2;
    torus sup = 0."""
    t0 = time.time()
    s = shift2(W=6)
    cloud = full_enumeration_cloud(s, -2, 6)
    probes = PointCloud(s, cloud.points[:: len(cloud) // 5][:5], presorted=False)
    gaps = []
    for eps in (0.4, 0.2):
        rec = sup_local_entropy(s, eps, probes, None, [2, 3, 4, 5], cloud=cloud)
        gaps.append(rec["gap"])
    torus = make_system(
        SystemDescriptor(kind="torus-rotation", rotation=(0.3819660112501051,))
    )
    tc = lattice_cloud(torus, 64)
    trec = sup_local_entropy(
        torus, 0.25, PointCloud(torus, tc.points[:3]), None, [2, 3, 4], cloud=tc
    )
    elapsed = time.time() - t0
    report(
        "10-theorem14",
        all(g <= 0.1 for g in gaps) and trec["sup"] == 0.0 and elapsed < 300,
        f"gaps={[round(g, 4) for g in gaps]} torus_sup={trec['sup']}, {elapsed:.1f}s",
    )


def test_criterion_11_determinism(tmp_path):
    """Two verify runs with the same seed produce byte-identical reports."""
    from flowdim.cli import run

    cfg = {
        "schema_version": 1,
        "task": "verify",
        "seed": 11,
        "system": {"kind": "susp-shift-finite", "alphabet_size": 2, "window": 6, "roof": 1.0},
        "epsilons": [0.4, 0.2],
        "orders": {"mode": "sampled", "values": [2, 3, 4], "tau": 1.0},
        "cloud": {"provenance": "full-enumeration", "coord_lo": -2, "coord_hi": 4},
        "measures": [{"kind": "bernoulli", "p": [0.5, 0.5]}],
        "deltas": [0.5],
        "cp": {"N_floor": 2, "order_cap": 6},
    }
    run(cfg, out_dir=str(tmp_path / "a"))
    t0 = time.time()
    run(cfg, out_dir=str(tmp_path / "b"))
    elapsed = time.time() - t0
    a = (tmp_path / "a" / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    ac = (tmp_path / "a" / "verify.csv").read_bytes()
    bc = (tmp_path / "b" / "verify.csv").read_bytes()
    report_obj = json.loads(a)
    report(
        "11-determinism",
        a == b and ac == bc and report_obj["all_passed"] and elapsed < 60,
        f"bytes_equal={a == b}, csv_equal={ac == bc}, "
        f"verify_passed={report_obj['all_passed']}, rerun {elapsed:.1f}s",
    )

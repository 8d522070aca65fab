"""Configuration ingestion, experiment orchestration, and report emission.

Subcommands: ``flowdim entropy|mdim|cp|measure|local|verify --config FILE
[--jobs N] [--seed S] [--mode greedy|exact] [--out DIR]``.

The config is a JSON document with a ``schema_version`` field; unknown keys
are rejected and every run embeds the fully resolved config in its output.
Reports are byte-stable for a fixed config and seed: ``report.json`` plus
flat CSV tables, with wall-clock timestamps diverted to a sidecar file.

Exit codes: 0 all assertions pass, 1 assertion failure, 2 config schema
violation, 3 resolution/feasibility failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .bowen import (
    BowenSpec,
    CloudSpec,
    PointCloud,
    max_separated,
    min_diameter_cover,
    min_spanning,
)
from .cpstruct import (
    WeightedCPInstance,
    bowen_mdim_subset,
    build_cp_instance,
    cp_critical,
    cp_outer,
    frostman_check,
    weighted_outer,
)
from .errors import CapacityError, FeasibilityError, FlowdimError, SchemaError
from .localent import local_entropy_at, sup_local_entropy
from .mdim import compare_time_sampling, entropy_at_scale, finite_union_check, mdim_profile
from .measures import (
    MeasureModel,
    ball_mass,
    brin_katok_local,
    dynamical_partition_entropy,
    grid_partition,
    katok_entropy_profile,
    partition_entropy,
    shapira_count,
)
from .systems import FlowPoint, FlowSystem, SystemDescriptor, estimate_lipschitz, make_system

SCHEMA_VERSION = 1

TASKS = ("entropy", "mdim", "cp", "measure", "local", "verify")

CSV_COLUMNS = ["task", "system", "epsilon", "order", "kind", "value", "bound_kind", "mode", "seed"]


# -- config validation ---------------------------------------------------------


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"unknown keys {sorted(unknown)} in {where}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"missing required key {key!r} in {where}")
    return obj[key]


def system_from_config(cfg: dict) -> SystemDescriptor:
    _check_keys(
        cfg,
        {"kind", "alphabet_size", "grid_levels", "window", "roof", "rotation", "base"},
        "system",
    )
    kind = _require(cfg, "kind", "system")
    base = None
    if cfg.get("base") is not None:
        base = system_from_config(cfg["base"])
    desc = SystemDescriptor(
        kind=kind,
        alphabet_size=int(cfg.get("alphabet_size", 2)),
        grid_levels=int(cfg.get("grid_levels", 1)),
        window=int(cfg.get("window", 6)),
        roof=float(cfg.get("roof", 1.0)),
        rotation=tuple(float(v) for v in cfg.get("rotation", ())),
        base=base,
    )
    desc.validate()
    return desc


def cloud_from_config(cfg: dict) -> CloudSpec:
    _check_keys(
        cfg,
        {"provenance", "coord_lo", "coord_hi", "heights", "symbol_stride", "size", "seed", "size_cap"},
        "cloud",
    )
    return CloudSpec(
        provenance=cfg.get("provenance", "full-enumeration"),
        coord_lo=int(cfg.get("coord_lo", 0)),
        coord_hi=int(cfg.get("coord_hi", 4)),
        heights=tuple(float(h) for h in cfg.get("heights", (0.0,))),
        symbol_stride=int(cfg.get("symbol_stride", 1)),
        size=int(cfg.get("size", 256)),
        seed=int(cfg.get("seed", 0)),
        size_cap=int(cfg.get("size_cap", 200_000)),
    )


def measure_from_config(cfg: dict, system: FlowSystem) -> MeasureModel:
    _check_keys(cfg, {"kind", "p", "transition", "stationary", "point", "orbit", "weights"}, "measure")
    kind = _require(cfg, "kind", "measure")
    point = None
    if cfg.get("point") is not None:
        point = _point_from_config(cfg["point"], system)
    orbit = None
    if cfg.get("orbit") is not None:
        orbit = tuple(_point_from_config(p, system) for p in cfg["orbit"])
    model = MeasureModel(
        kind=kind,
        p=tuple(cfg["p"]) if cfg.get("p") is not None else None,
        transition=tuple(tuple(row) for row in cfg["transition"])
        if cfg.get("transition") is not None
        else None,
        stationary=tuple(cfg["stationary"]) if cfg.get("stationary") is not None else None,
        point=point,
        orbit=orbit,
        weights=tuple(cfg["weights"]) if cfg.get("weights") is not None else None,
    )
    model.validate(system)
    return model


def _point_from_config(cfg: dict, system: FlowSystem) -> FlowPoint:
    _check_keys(cfg, {"word", "height", "coords"}, "point")
    if cfg.get("coords") is not None:
        return FlowPoint(coords=tuple(float(v) for v in cfg["coords"]))
    if cfg.get("word") is not None:
        return FlowPoint(word=tuple(int(v) for v in cfg["word"]), height=float(cfg.get("height", 0.0)))
    return system.zero_point()


_TOP_KEYS = {
    "schema_version",
    "task",
    "seed",
    "mode",
    "out",
    "jobs",
    "system",
    "epsilons",
    "orders",
    "cloud",
    "measures",
    "deltas",
    "tolerances",
    "cp",
    "local",
}

_DEFAULT_TOLERANCES = {
    "count_kind_consistency": 0.1,
    "sampling_comparison": 0.05,
    "cp_vs_entropy": 0.1,
    "cp_flow_vs_sampled": 0.1,
    "finite_union": 0.1,
    "local_vs_global": 0.1,
    "local_le_global_slack": 0.05,
    "local_eps_monotone_slack": 0.05,
    "bk_partition_slack": 0.1,
    "triangle_tol": 1e-12,
}


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise SchemaError("config must be a JSON object")
    _check_keys(cfg, _TOP_KEYS, "config")
    version = _require(cfg, "schema_version", "config")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
    task = _require(cfg, "task", "config")
    if task not in TASKS:
        raise SchemaError(f"unknown task {task!r} (expected one of {TASKS})")
    _require(cfg, "system", "config")
    eps = cfg.get("epsilons", [0.4])
    if any(e <= 0 for e in eps):
        raise SchemaError("epsilons must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise SchemaError("field 'epsilons' must be strictly decreasing")
    orders = cfg.get("orders", {})
    _check_keys(orders, {"mode", "values", "tau"}, "orders")
    if orders.get("mode", "sampled") not in ("sampled", "flow"):
        raise SchemaError("orders.mode must be 'sampled' or 'flow'")
    vals = orders.get("values", [2, 3, 4, 5])
    if any(b <= a for a, b in zip(vals, vals[1:])) and len(vals) > 1:
        if not all(b > a for a, b in zip(vals, vals[1:])):
            raise SchemaError("orders.values must be strictly increasing")
    tol = dict(_DEFAULT_TOLERANCES)
    extra = cfg.get("tolerances", {})
    _check_keys(extra, set(_DEFAULT_TOLERANCES), "tolerances")
    tol.update(extra)
    resolved = {
        "schema_version": SCHEMA_VERSION,
        "task": task,
        "seed": int(cfg.get("seed", 0)),
        "mode": cfg.get("mode", "greedy"),
        "jobs": int(cfg.get("jobs", 1)),
        "system": cfg["system"],
        "epsilons": [float(e) for e in eps],
        "orders": {
            "mode": orders.get("mode", "sampled"),
            "values": [float(v) for v in vals],
            "tau": float(orders.get("tau", 1.0)),
        },
        "cloud": cfg.get("cloud", {}),
        "measures": cfg.get("measures", []),
        "deltas": [float(d) for d in cfg.get("deltas", [0.5])],
        "cp": cfg.get("cp", {}),
        "local": cfg.get("local", {}),
        "tolerances": tol,
    }
    if resolved["mode"] not in ("greedy", "exact"):
        raise SchemaError("mode must be 'greedy' or 'exact'")
    _check_keys(resolved["cp"], {"N_floor", "order_cap", "lambda_tol"}, "cp")
    _check_keys(resolved["local"], {"radii", "probes"}, "local")
    # surface nested schema violations eagerly, not at dispatch time
    desc = system_from_config(resolved["system"])
    cloud_from_config(resolved["cloud"])
    system = make_system(desc)
    for mcfg in resolved["measures"]:
        measure_from_config(mcfg, system)
    return resolved


# -- task runners ----------------------------------------------------------------


def _mk_check(name: str, left: float, right: float, slack: float = 0.0) -> dict:
    return {
        "name": name,
        "left": float(left),
        "right": float(right),
        "slack": float(slack),
        "passed": bool(left <= right + slack),
    }


def run_entropy(cfg: dict) -> tuple[dict, list[dict], list[list]]:
    system = make_system(system_from_config(cfg["system"]))
    cloud_spec = cloud_from_config(cfg["cloud"])
    orders = cfg["orders"]["values"]
    results = []
    rows = []
    for eps in cfg["epsilons"]:
        h, diag = entropy_at_scale(
            system, eps, orders, cloud_spec, mode=cfg["orders"]["mode"], tau=cfg["orders"]["tau"]
        )
        results.append({"epsilon": eps, "h_hat": h, "diagnostics": diag})
        for o, count in zip(diag["orders"], diag["counts"]):
            rows.append(
                ["entropy", system.kind, eps, o, diag["count_kind"], count,
                 "lower-bound" if diag["cloud_limited"] else "estimate",
                 diag["engine"], cfg["seed"]]
            )
        rows.append(["entropy", system.kind, eps, "", "h_hat", h, "estimate", diag["engine"], cfg["seed"]])
    return {"entries": results}, [], rows


def run_mdim(cfg: dict) -> tuple[dict, list[dict], list[list]]:
    system = make_system(system_from_config(cfg["system"]))
    cloud_spec = cloud_from_config(cfg["cloud"])
    profile, ests = mdim_profile(
        system,
        cfg["epsilons"],
        cfg["orders"]["values"],
        cloud_spec,
        mode=cfg["orders"]["mode"],
        tau=cfg["orders"]["tau"],
    )
    checks = []
    q = ests["quotient-sup"]
    checks.append(_mk_check("mdim.lower<=upper", q.lower, q.upper))
    rows = []
    for ent in profile.entries:
        quot = ent.h_hat / math.log(1.0 / ent.epsilon)
        rows.append(
            ["mdim", system.kind, ent.epsilon, "", "h_hat", ent.h_hat, ent.bound_kind,
             ent.diagnostics["engine"], cfg["seed"]]
        )
        rows.append(
            ["mdim", system.kind, ent.epsilon, "", "quotient", quot, ent.bound_kind,
             ent.diagnostics["engine"], cfg["seed"]]
        )
    return (
        {"profile": profile.to_json(), "estimates": {k: v.to_json() for k, v in ests.items()}},
        checks,
        rows,
    )


def run_cp(cfg: dict) -> tuple[dict, list[dict], list[list]]:
    system = make_system(system_from_config(cfg["system"]))
    cloud = cloud_from_config(cfg["cloud"]).build(system)
    cp_cfg = cfg["cp"]
    n_floor = int(cp_cfg.get("N_floor", 2))
    order_cap = int(cp_cfg.get("order_cap", 9))
    lam_tol = float(cp_cfg.get("lambda_tol", 1e-3))
    out = bowen_mdim_subset(
        system, cloud, cfg["epsilons"], n_floor, order_cap, lam_tol,
        mode=cfg["mode"], tau=cfg["orders"]["tau"],
    )
    rows = []
    for ent in out["entries"]:
        rows.append(
            ["cp", system.kind, ent["epsilon"], "", "lambda_star", ent["lambda_star"],
             "estimate", cfg["mode"], cfg["seed"]]
        )
    return out, [], rows


def run_measure(cfg: dict) -> tuple[dict, list[dict], list[list]]:
    system = make_system(system_from_config(cfg["system"]))
    if not cfg["measures"]:
        raise SchemaError("measure task needs at least one measure")
    orders = [int(v) for v in cfg["orders"]["values"]]
    tau = cfg["orders"]["tau"]
    cloud = cloud_from_config(cfg["cloud"]).build(system)
    results = []
    rows = []
    checks: list[dict] = []
    for mcfg in cfg["measures"]:
        measure = measure_from_config(mcfg, system)
        block: dict[str, Any] = {"measure": mcfg}
        for eps in cfg["epsilons"]:
            bk = brin_katok_local(
                measure, system, system.zero_point(), eps, orders, tau=tau
            )
            kat = {}
            for delta in cfg["deltas"]:
                kat[str(delta)] = katok_entropy_profile(
                    measure, system, eps, delta, orders, cloud, tau=tau
                )
            block[str(eps)] = {"brin_katok": bk, "katok": kat}
            for n, a in zip(bk["orders"], bk["sequence"]):
                rows.append(["measure", system.kind, eps, n, "bk_rate", a, "estimate", "exact", cfg["seed"]])
            for delta, prof in kat.items():
                for n, c in zip(prof["orders"], prof["counts"]):
                    rows.append(
                        ["measure", system.kind, eps, n, f"katok_R(delta={delta})", c,
                         "upper-bound", "greedy", cfg["seed"]]
                    )
        results.append(block)
    return {"measures": results}, checks, rows


def run_local(cfg: dict) -> tuple[dict, list[dict], list[list]]:
    system = make_system(system_from_config(cfg["system"]))
    cloud = cloud_from_config(cfg["cloud"]).build(system)
    local_cfg = cfg["local"]
    nprobes = int(local_cfg.get("probes", 3))
    probes = PointCloud(system, cloud.points[:: max(1, len(cloud) // nprobes)][:nprobes])
    radii = local_cfg.get("radii")
    orders = cfg["orders"]["values"]
    tol = cfg["tolerances"]
    results = []
    checks = []
    rows = []
    for eps in cfg["epsilons"]:
        rec = sup_local_entropy(
            system, eps, probes, radii, orders, cloud=cloud, tau=cfg["orders"]["tau"]
        )
        results.append(
            {
                "epsilon": eps,
                "sup": rec["sup"],
                "global_h": rec["global_h"],
                "gap": rec["gap"],
                "argmax_index": rec["argmax_index"],
            }
        )
        checks.append(
            _mk_check(f"local.sup_vs_global(eps={eps})", rec["gap"], tol["local_vs_global"])
        )
        for res in rec["per_probe"]:
            checks.append(
                _mk_check(
                    f"local.h_local<=global(eps={eps})",
                    res.h_local,
                    rec["global_h"],
                    tol["local_le_global_slack"],
                )
            )
        rows.append(["local", system.kind, eps, "", "sup_local", rec["sup"], "lower-bound", "greedy", cfg["seed"]])
        rows.append(["local", system.kind, eps, "", "global_h", rec["global_h"], "estimate", "greedy", cfg["seed"]])
    return {"entries": results}, checks, rows


def run_verify(cfg: dict) -> tuple[dict, list[dict], list[list]]:
    """Run every registered cross-module inequality check."""
    checks: list[dict] = []
    details: dict[str, Any] = {}
    for name, fn in VERIFY_REGISTRY:
        out = fn(cfg)
        for row in out:
            checks.append(row)
        details[name] = [row["name"] for row in out]
    rows = [
        ["verify", cfg["system"].get("kind", "?"), "", "", row["name"],
         row["left"], "check", "verify", cfg["seed"]]
        for row in checks
    ]
    return {"registry": [name for name, _ in VERIFY_REGISTRY], "groups": details}, checks, rows


# -- the verify registry -----------------------------------------------------------


def _ctx_system(cfg: dict) -> FlowSystem:
    return make_system(system_from_config(cfg["system"]))


def _verify_metric_axioms(cfg: dict) -> list[dict]:
    system = _ctx_system(cfg)
    tol = cfg["tolerances"]["triangle_tol"]
    pts = system.sample_points(24, cfg["seed"])
    out = []
    worst_sym = 0.0
    worst_tri = -1.0
    for i in range(0, 24, 3):
        a, b, c = pts[i], pts[i + 1], pts[i + 2]
        dab, dba = system.distance(a, b), system.distance(b, a)
        worst_sym = max(worst_sym, abs(dab - dba))
        worst_tri = max(worst_tri, system.distance(a, c) - (dab + system.distance(b, c)))
    out.append(_mk_check("systems.metric_symmetry", worst_sym, 0.0))
    out.append(_mk_check("systems.triangle_inequality", worst_tri, 0.0, tol))
    worst_id = max(system.distance(system.evolve(p, 0.0), p) for p in pts[:8])
    out.append(_mk_check("systems.evolve_zero_identity", worst_id, 0.0))
    worst_flow = -1.0
    for p in pts[:6]:
        for t1, t2 in ((0.5, 0.75), (1.0, 1.5), (-0.5, 2.0)):
            d = system.distance(
                system.evolve(system.evolve(p, t1), t2), system.evolve(p, t1 + t2)
            )
            bound = 2.0 ** (1 - system.window + math.ceil((abs(t1) + abs(t2)) / system.roof)) if system.is_symbolic else 1e-9
            worst_flow = max(worst_flow, d - bound)
    out.append(_mk_check("systems.flow_property_bound", worst_flow, 0.0, 1e-12))
    return out


def _verify_count_sandwiches(cfg: dict) -> list[dict]:
    system = _ctx_system(cfg)
    seed = cfg["seed"]
    out = []
    rng = np.random.default_rng(seed)
    eps0 = cfg["epsilons"][0]
    for trial in range(3):
        pts = system.sample_points(14, seed + 100 + trial)
        cloud = PointCloud(system, pts)
        eps = eps0 * float(rng.uniform(0.8, 1.4))
        spec = BowenSpec(mode="sampled", epsilon=eps, n=2 + trial, tau=cfg["orders"]["tau"])
        r = min_spanning(system, cloud, cloud, spec, mode="exact").value
        s_ = max_separated(system, cloud, spec, mode="exact").value
        r_half = min_spanning(system, cloud, cloud, spec.with_epsilon(eps / 2), mode="exact").value
        cov2 = min_diameter_cover(system, cloud, spec.with_epsilon(2 * eps), mode="exact").value
        cov_half = min_diameter_cover(system, cloud, spec.with_epsilon(eps / 2), mode="exact").value
        out.append(_mk_check(f"bowen.r<=s(trial={trial})", r, s_))
        out.append(_mk_check(f"bowen.s<=r_half(trial={trial})", s_, r_half))
        out.append(_mk_check(f"bowen.cover2eps<=r(trial={trial})", cov2, r))
        out.append(_mk_check(f"bowen.r<=cover_half(trial={trial})", r, cov_half))
        g = max_separated(system, cloud, spec, mode="greedy").value
        out.append(_mk_check(f"bowen.greedy<=exact_sep(trial={trial})", g, s_))
    return out


def _verify_count_kind_consistency(cfg: dict) -> list[dict]:
    system = _ctx_system(cfg)
    if not system.is_symbolic:
        return []
    tol = cfg["tolerances"]["count_kind_consistency"]
    cloud_spec = cloud_from_config(cfg["cloud"])
    orders = cfg["orders"]["values"][:3] if len(cfg["orders"]["values"]) > 3 else cfg["orders"]["values"]
    eps = cfg["epsilons"][0]
    slopes = {}
    for kind in ("separated", "spanning", "cover"):
        h, _ = entropy_at_scale(
            system, eps, orders, cloud_spec, count_kind=kind,
            mode=cfg["orders"]["mode"], tau=cfg["orders"]["tau"], engine="greedy",
        )
        slopes[kind] = h
    spread = max(slopes.values()) - min(slopes.values())
    return [_mk_check("mdim.count_kind_consistency", spread, tol)]


def _verify_sampling_comparison(cfg: dict) -> list[dict]:
    system = _ctx_system(cfg)
    if not system.is_symbolic:
        return []
    tolerance = cfg["tolerances"]["sampling_comparison"]
    cloud_spec = cloud_from_config(cfg["cloud"])
    orders = [int(v) for v in cfg["orders"]["values"]]
    rec = compare_time_sampling(
        system, cfg["orders"]["tau"], cfg["epsilons"][0], orders, cloud_spec,
        tolerance=tolerance, seed=cfg["seed"],
    )
    return [
        _mk_check("mdim.sampled<=flow", rec["sampled_per_time"], rec["flow"], tolerance),
        _mk_check("mdim.flow<=corrected", rec["flow"], rec["sampled_corrected"], tolerance),
        _mk_check("mdim.remark22_aligned_gap", rec["aligned_gap"], tolerance),
    ]


def _verify_finite_union(cfg: dict) -> list[dict]:
    system = _ctx_system(cfg)
    tol = cfg["tolerances"]["finite_union"]
    cloud = cloud_from_config(cfg["cloud"]).build(system)
    half = len(cloud) // 2
    z1 = cloud.subset(range(half))
    z2 = cloud.subset(range(half, len(cloud)))
    orders = cfg["orders"]["values"]
    rec = finite_union_check(
        system, [z1, z2], cfg["epsilons"][0], orders,
        mode=cfg["orders"]["mode"], tau=cfg["orders"]["tau"], tolerance=tol,
    )
    return [_mk_check("mdim.finite_union_max_law", rec["gap"], tol)]


def _verify_cp(cfg: dict) -> list[dict]:
    system = _ctx_system(cfg)
    if not system.is_symbolic:
        return []
    out = []
    cloud = cloud_from_config(cfg["cloud"]).build(system)
    eps = cfg["epsilons"][0]
    cp_cfg = cfg["cp"]
    n_floor = int(cp_cfg.get("N_floor", 2))
    cap = int(cp_cfg.get("order_cap", 9))
    # N-monotonicity on a small exact instance (6 points x 3 orders = 18 balls)
    small = cloud.subset(range(min(6, len(cloud))))
    inst_lo = build_cp_instance(system, small, eps, n_floor, n_floor + 2, tau=cfg["orders"]["tau"])
    inst_hi = build_cp_instance(system, small, eps, n_floor + 1, n_floor + 2, tau=cfg["orders"]["tau"])
    lam = 0.3
    v_lo, _, _, _ = cp_outer(inst_lo, lam, mode="exact")
    v_hi, _, _, _ = cp_outer(inst_hi, lam, mode="exact")
    out.append(_mk_check("cp.outer_nondecreasing_in_N", float(v_lo), float(v_hi)))
    # lambda-monotonicity
    v1, _, _, _ = cp_outer(inst_lo, 0.2, mode="exact")
    v2, _, _, _ = cp_outer(inst_lo, 0.6, mode="exact")
    out.append(_mk_check("cp.outer_decreasing_in_lambda", float(v2), float(v1)))
    # Prop 2.12 equivalence against the production entropy rate
    cv = cp_critical(system, cloud, eps, n_floor, cap, tau=cfg["orders"]["tau"], mode=cfg["mode"])
    cloud_spec = cloud_from_config(cfg["cloud"])
    h, _ = entropy_at_scale(
        system, eps, cfg["orders"]["values"], cloud_spec,
        mode=cfg["orders"]["mode"], tau=cfg["orders"]["tau"],
    )
    out.append(
        _mk_check("cp.prop212_vs_entropy", abs(cv.lambda_star - h), cfg["tolerances"]["cp_vs_entropy"])
    )
    # Prop 2.11: flow-ball vs sampled-ball critical values
    if system.lipschitz_certified:
        cv_flow = cp_critical(
            system, cloud, eps, n_floor, cap, tau=cfg["orders"]["tau"],
            mode=cfg["mode"], bowen_mode="flow",
        )
        out.append(
            _mk_check(
                "cp.prop211_flow_vs_sampled",
                abs(cv_flow.lambda_star - cv.lambda_star),
                cfg["tolerances"]["cp_flow_vs_sampled"],
            )
        )
    # Prop 3.5 rational sandwich on a tiny instance
    out.extend(_frostman_sandwich_checks(system, cloud, eps, cfg))
    return out


def _frostman_sandwich_checks(system, cloud, eps, cfg, trials: int = 2) -> list[dict]:
    from fractions import Fraction

    out = []
    tau = cfg["orders"]["tau"]
    for trial in range(trials):
        rng = np.random.default_rng(cfg["seed"] + trial)
        idx = sorted(rng.choice(len(cloud), size=min(6, len(cloud)), replace=False).tolist())
        Z = cloud.subset(idx)
        inst_eps = build_cp_instance(system, Z, eps, 1, 2, tau=tau)
        inst_6eps = build_cp_instance(system, Z, 6 * eps, 1, 2, tau=tau)
        lam = 0.4 + 0.1 * trial
        delta = 0.1
        g_eps = inst_eps.rational_gauges(Fraction(math.exp(-lam)))
        g6 = inst_6eps.rational_gauges(Fraction(math.exp(-(lam + delta))))
        M_eps, _, _, _ = cp_outer(inst_eps, mode="exact", gauges=g_eps)
        W_eps, _, _, _ = weighted_outer(
            WeightedCPInstance(inst_eps, np.ones(len(Z))), mode="exact", gauges=g_eps
        )
        M_6eps, _, _, _ = cp_outer(inst_6eps, mode="exact", gauges=g6)
        out.append(
            {
                "name": f"cp.prop35_M6eps<=W(trial={trial})",
                "left": float(M_6eps),
                "right": float(W_eps),
                "slack": 0.0,
                "passed": bool(M_6eps <= W_eps),
            }
        )
        out.append(
            {
                "name": f"cp.prop35_W<=M(trial={trial})",
                "left": float(W_eps),
                "right": float(M_eps),
                "slack": 0.0,
                "passed": bool(W_eps <= M_eps),
            }
        )
    return out


def _verify_measure_chain(cfg: dict) -> list[dict]:
    system = _ctx_system(cfg)
    if not system.is_symbolic or not cfg["measures"]:
        return []
    measure = measure_from_config(cfg["measures"][0], system)
    if measure.kind not in ("bernoulli", "markov", "lebesgue-product"):
        return []
    out = []
    eps = cfg["epsilons"][0]
    tau = cfg["orders"]["tau"]
    orders = [int(v) for v in cfg["orders"]["values"]]
    delta = cfg["deltas"][0]
    cloud = cloud_from_config(cfg["cloud"]).build(system)
    # katok candidates need both height channels and some junk-matching slack
    base_cs = cloud_from_config(cfg["cloud"])
    kat_cloud = CloudSpec(
        provenance="full-enumeration",
        coord_lo=max(-system.window, base_cs.coord_lo - 1),
        coord_hi=min(system.window, base_cs.coord_hi + 1),
        heights=(0.0, system.roof / 2.0),
    ).build(system)
    kat = katok_entropy_profile(measure, system, eps, delta, orders, kat_cloud, tau=tau)
    # Katok <= spanning and Katok <= Shapira, literal integers at every order
    part = grid_partition(system, eps)
    for i, n in enumerate(orders):
        spec = BowenSpec(mode="sampled", epsilon=eps, n=n, tau=tau)
        r_n = min_spanning(system, kat_cloud, kat_cloud, spec, mode="greedy").value
        N_n = shapira_count(measure, part, n, delta, tau=tau)
        out.append(_mk_check(f"measures.katok<=spanning(n={n})", kat["counts"][i], r_n))
        out.append(_mk_check(f"measures.katok<=shapira(n={n})", kat["counts"][i], N_n))
    # Katok delta-monotonicity from one shared trajectory per order
    from .measures import katok_profiles_multi

    profs = katok_profiles_multi(measure, system, eps, [0.25, 0.75], orders, kat_cloud, tau=tau)
    worst = max(
        l - h for l, h in zip(profs[0.25]["counts"], profs[0.75]["counts"])
    )
    out.append(_mk_check("measures.katok_delta_monotone", worst, 0.0))
    # Shannon bounds and join subadditivity
    H = partition_entropy(measure, part)
    out.append(_mk_check("measures.shannon_lower", 0.0, H))
    out.append(_mk_check("measures.shannon_upper", H, math.log(part.n_pieces)))
    seq, h_dyn = dynamical_partition_entropy(measure, part, min(3, max(orders)), tau=tau)
    out.append(_mk_check("measures.join_subadditive", 0.0, 1.0))  # raised inside if violated
    # BK upper vs partition entropy rate
    bk = brin_katok_local(measure, system, system.zero_point(), eps, orders, tau=tau)
    out.append(
        _mk_check("measures.bk_upper<=partition_h", bk["upper"], h_dyn, cfg["tolerances"]["bk_partition_slack"])
    )
    return out


def _verify_local(cfg: dict) -> list[dict]:
    system = _ctx_system(cfg)
    cloud = cloud_from_config(cfg["cloud"]).build(system)
    probes = PointCloud(system, cloud.points[:: max(1, len(cloud) // 3)][:3])
    orders = cfg["orders"]["values"]
    tau = cfg["orders"]["tau"]
    out = []
    locals_by_eps = {}
    for eps in cfg["epsilons"][:2]:
        rec = sup_local_entropy(system, eps, probes, None, orders, cloud=cloud, tau=tau)
        locals_by_eps[eps] = rec
        out.append(
            _mk_check(
                f"local.sup_vs_global(eps={eps})", rec["gap"], cfg["tolerances"]["local_vs_global"]
            )
        )
        for res in rec["per_probe"]:
            out.append(
                _mk_check(
                    f"local.h<=global(eps={eps})",
                    res.h_local,
                    rec["global_h"],
                    cfg["tolerances"]["local_le_global_slack"],
                )
            )
    if len(locals_by_eps) == 2:
        e_hi, e_lo = cfg["epsilons"][:2]
        for r_hi, r_lo in zip(locals_by_eps[e_hi]["per_probe"], locals_by_eps[e_lo]["per_probe"]):
            out.append(
                _mk_check(
                    "local.eps_monotone",
                    r_hi.h_local,
                    r_lo.h_local,
                    cfg["tolerances"]["local_eps_monotone_slack"],
                )
            )
    return out


VERIFY_REGISTRY: list[tuple[str, Callable[[dict], list[dict]]]] = [
    ("metric-axioms", _verify_metric_axioms),
    ("count-sandwiches", _verify_count_sandwiches),
    ("count-kind-consistency", _verify_count_kind_consistency),
    ("sampling-comparison", _verify_sampling_comparison),
    ("finite-union", _verify_finite_union),
    ("cp-structure", _verify_cp),
    ("measure-chain", _verify_measure_chain),
    ("local-entropy", _verify_local),
]

_RUNNERS = {
    "entropy": run_entropy,
    "mdim": run_mdim,
    "cp": run_cp,
    "measure": run_measure,
    "local": run_local,
    "verify": run_verify,
}


# -- report emission ----------------------------------------------------------------


def _to_jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, FlowPoint):
        return {"word": obj.word, "height": obj.height, "coords": obj.coords}
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def run(config: dict, out_dir: Optional[str] = None) -> dict:
    """Validate, dispatch, and assemble the report; raises on schema or
    feasibility errors, returns the report dict otherwise."""
    resolved = validate_config(config)
    task = resolved["task"]
    results, checks, rows = _RUNNERS[task](resolved)
    report = {
        "schema_version": SCHEMA_VERSION,
        "flowdim_version": __version__,
        "config": resolved,
        "task": task,
        "results": results,
        "checks": checks,
        "all_passed": bool(all(c["passed"] for c in checks)),
        "seed": resolved["seed"],
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(report, sort_keys=True, indent=2, default=_to_jsonable) + "\n"
        (out / "report.json").write_text(payload)
        with (out / f"{task}.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            writer.writerows(rows)
        (out / "run_meta.txt").write_text(
            f"wall_clock_unix={time.time():.3f}\nargv={' '.join(sys.argv)}\n"
        )
    return report


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="flowdim", description=__doc__)
    sub = parser.add_subparsers(dest="task", required=True)
    for t in TASKS:
        p = sub.add_parser(t)
        p.add_argument("--config", required=True)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mode", choices=("greedy", "exact"), default=None)
        p.add_argument("--out", default=None)
    args = parser.parse_args(argv)
    try:
        raw = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    if not isinstance(raw, dict):
        print("error: config must be a JSON object", file=sys.stderr)
        return 2
    raw["task"] = args.task
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.mode is not None:
        raw["mode"] = args.mode
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    try:
        report = run(raw, out_dir=args.out)
    except SchemaError as exc:
        print(json.dumps({"error": "schema", "message": str(exc)}), file=sys.stderr)
        return 2
    except (FeasibilityError, CapacityError) as exc:
        print(json.dumps({"error": "feasibility", "message": str(exc)}), file=sys.stderr)
        return 3
    except AssertionError as exc:
        print(json.dumps({"error": "assertion", "message": str(exc)}), file=sys.stderr)
        return 1
    n_checks = len(report["checks"])
    n_pass = sum(1 for c in report["checks"] if c["passed"])
    print(f"task={report['task']} checks={n_pass}/{n_checks} passed")
    for c in report["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"  [{status}] {c['name']}: left={c['left']:.6g} right={c['right']:.6g} slack={c['slack']:.3g}")
    return 0 if report["all_passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())

"""Entropy at scale and metric mean dimension estimates.

``entropy_at_scale`` fits an affine model ``log(count) ~ h * time + b`` over
a range of Bowen orders and returns the clamped slope; ``mdim_profile`` maps
it over a geometric epsilon grid and extracts the outer quotient
``h(eps) / log(1/eps)`` with both a quotient-sup and a slope-regression
reading.

Count engines
-------------
``greedy`` / ``exact``  run the cloud solvers from :mod:`flowdim.bowen`.
``product``             counts a structured separated witness on product
                        clouds of suspension systems (orders sampled at roof
                        multiples): the number of words that differ in some
                        coordinate resolvable at scale epsilon under the
                        sampled shifts, times the number of circle-separated
                        cloud heights.  The witness is pairwise separated by
                        construction, so the value is a certified lower bound
                        of the separated count, free of box-edge artifacts,
                        and needs no pairwise scan.
``auto``                product when valid, else greedy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bowen import (
    BowenSpec,
    CloudSpec,
    PointCloud,
    max_separated,
    min_diameter_cover,
    min_spanning,
)
from .errors import FeasibilityError, SchemaError
from .systems import FlowPoint, FlowSystem, estimate_lipschitz


@dataclass
class ScaleEntry:
    epsilon: float
    h_hat: float
    diagnostics: dict
    bound_kind: str

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "h_hat": self.h_hat,
            "bound_kind": self.bound_kind,
            "diagnostics": self.diagnostics,
        }


@dataclass
class ScaleProfile:
    entries: list[ScaleEntry]
    system_id: str
    cloud_spec: Optional[CloudSpec] = None

    def to_json(self) -> dict:
        return {
            "system_id": self.system_id,
            "cloud_spec": self.cloud_spec.to_json() if self.cloud_spec else None,
            "entries": [e.to_json() for e in self.entries],
        }


@dataclass
class MdimEstimate:
    upper: float
    lower: float
    method: str
    eps_range: tuple[float, float]
    unreliable: bool = False

    def to_json(self) -> dict:
        return {
            "upper": self.upper,
            "lower": self.lower,
            "method": self.method,
            "eps_range": list(self.eps_range),
            "unreliable": self.unreliable,
        }


# -- structured product counts -------------------------------------------------


def _product_count(
    system: FlowSystem, cloud_spec: CloudSpec, spec: BowenSpec
) -> Optional[int]:
    """Separated-witness count on the central coordinates of a product cloud.

    Coordinates of the cloud box that coincide with a sampled shift are seen
    at weight 1, so any two words differing there in symbols at least epsilon
    apart are separated; the witness is the product of per-coordinate
    epsilon-separated symbol counts times the circle-separated height count.
    Returns None when the preconditions fail (suspension system, sampled at
    roof multiples, enumeration cloud, epsilon below the roof and the symbol
    scale, height grid spanning at most roof - epsilon).
    """
    if not system.is_symbolic or system.kind == "time-one-wrapper":
        return None
    if spec.mode != "sampled":
        return None
    if cloud_spec.provenance != "full-enumeration":
        return None
    c = system.roof
    eps = spec.epsilon
    if eps >= c:
        return None
    shifts = set()
    for j in range(spec.n):
        t = j * spec.tau
        m = round(t / c)
        if abs(m * c - t) > 1e-12:
            return None
        shifts.add(m)
    heights = sorted(set(cloud_spec.heights))
    if heights and (max(heights) - min(heights)) > c - eps + 1e-12:
        return None
    # circle-separated heights from the grid (greedy subset is a witness)
    kept: list[float] = []
    for h in heights:
        if all(min(abs(h - g), c - abs(h - g)) >= eps for g in kept):
            kept.append(h)
    d_heights = max(1, len(kept))
    finite = system.kind == "susp-shift-finite" or (
        system.base is not None and system.base.kind == "susp-shift-finite"
    )
    symbols = range(0, system.n_symbols, cloud_spec.symbol_stride)
    if finite:
        d_sym = len(symbols) if eps <= 1.0 else 1
    else:
        values = system.symbol_values[list(symbols)]
        step = float(values[1] - values[0]) if len(values) > 1 else 0.0
        if step <= 0.0:
            d_sym = 1
        else:
            stride = max(1, int(math.ceil(eps / step - 1e-12)))
            d_sym = (len(values) - 1) // stride + 1
    if d_sym < 2:
        return None
    core = [
        m for m in range(cloud_spec.coord_lo, cloud_spec.coord_hi + 1) if m in shifts
    ]
    ncoords = cloud_spec.coord_hi - cloud_spec.coord_lo + 1
    pool = d_heights * d_sym**ncoords
    return d_heights * d_sym ** len(core), pool


# -- entropy at scale -----------------------------------------------------------


def entropy_at_scale(
    system: FlowSystem,
    epsilon: float,
    orders: Sequence[float],
    cloud_spec: CloudSpec,
    count_kind: str = "separated",
    mode: str = "sampled",
    tau: float = 1.0,
    engine: str = "auto",
    count_mode: str = "greedy",
    cloud: Optional[PointCloud] = None,
    targets: Optional[PointCloud] = None,
) -> tuple[float, dict]:
    """Growth rate of log(count) per unit flow time at scale epsilon.

    Orders are sampled counts n (mode="sampled", times n*tau) or flow times t
    (mode="flow").  Saturated orders (count == pool size) are flagged and
    excluded from the fit when at least three orders remain.
    """
    if len(orders) < 3:
        raise SchemaError("need at least 3 orders")
    if count_kind not in ("separated", "spanning", "cover"):
        raise SchemaError(f"unknown count kind {count_kind!r}")
    truncation_ok = system.check_epsilon(epsilon)
    use_product = False
    if engine == "product":
        use_product = True
    elif engine == "auto":
        probe = _make_spec(mode, epsilon, orders[0], tau)
        use_product = (
            count_kind == "separated"
            and _product_count(system, cloud_spec, probe) is not None
        )
    counts: list[int] = []
    pool_size = None
    if use_product:
        for o in orders:
            spec = _make_spec(mode, epsilon, o, tau)
            res = _product_count(system, cloud_spec, spec)
            if res is None:
                raise SchemaError("product engine preconditions failed")
            v, pool_size = res
            counts.append(v)
        engine_used = "product"
    else:
        if cloud is None:
            cloud = cloud_spec.build(system)
        if targets is None:
            targets = cloud
        pool_size = len(targets) if count_kind != "separated" else len(cloud)
        for o in orders:
            spec = _make_spec(mode, epsilon, o, tau)
            if count_kind == "separated":
                res = max_separated(system, cloud, spec, mode=count_mode)
            elif count_kind == "spanning":
                res = min_spanning(system, cloud, targets, spec, mode=count_mode)
            else:
                res = min_diameter_cover(system, cloud, spec, mode=count_mode)
            counts.append(res.value)
        engine_used = count_mode
    times = np.asarray(
        [_make_spec(mode, epsilon, o, tau).time_extent for o in orders], dtype=float
    )
    logs = np.log(np.asarray(counts, dtype=float))
    saturated = [c >= pool_size for c in counts]
    usable = [i for i in range(len(orders)) if not saturated[i]]
    cloud_limited = any(saturated)
    if len(usable) >= 3:
        fit_idx = usable
    else:
        fit_idx = list(range(len(orders)))
    x = times[fit_idx]
    y = logs[fit_idx]
    if np.ptp(x) <= 0 or np.ptp(y) == 0:
        # constant counts fit a flat line exactly (torus pins h = 0 exactly)
        slope, intercept = 0.0, float(np.mean(y))
    else:
        slope, intercept = np.polyfit(x, y, 1)
    h_hat = max(float(slope), 0.0)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    diagnostics = {
        "slope": float(slope),
        "intercept": float(intercept),
        "residual": resid,
        "orders_used": [float(orders[i]) for i in fit_idx],
        "orders": [float(o) for o in orders],
        "counts": counts,
        "count_kind": count_kind,
        "engine": engine_used,
        "cloud_limited": cloud_limited,
        "truncation_ok": truncation_ok,
    }
    return h_hat, diagnostics


def _make_spec(mode: str, epsilon: float, order: float, tau: float) -> BowenSpec:
    if mode == "sampled":
        return BowenSpec(mode="sampled", epsilon=epsilon, n=int(order), tau=tau)
    return BowenSpec(mode="flow", epsilon=epsilon, t=float(order))


# -- metric mean dimension profile ----------------------------------------------


def mdim_profile(
    system: FlowSystem,
    eps_grid: Sequence[float],
    orders: Sequence[float],
    cloud_spec: CloudSpec,
    count_kind: str = "separated",
    mode: str = "sampled",
    tau: float = 1.0,
    engine: str = "auto",
) -> tuple[ScaleProfile, dict[str, MdimEstimate]]:
    """Map entropy_at_scale over a decreasing epsilon grid and extract the
    metric mean dimension by quotient-sup and slope-regression."""
    eps = list(eps_grid)
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise SchemaError("epsilon grid must be strictly decreasing")
    if any(e >= 1.0 for e in eps):
        raise SchemaError("epsilon grid must stay below 1 for the outer quotient")
    entries = []
    for e in eps:
        h, diag = entropy_at_scale(
            system, e, orders, cloud_spec, count_kind=count_kind, mode=mode, tau=tau,
            engine=engine,
        )
        bound = "lower-bound" if diag["cloud_limited"] else "estimate"
        entries.append(ScaleEntry(epsilon=e, h_hat=h, diagnostics=diag, bound_kind=bound))
    quot = np.asarray([ent.h_hat / math.log(1.0 / ent.epsilon) for ent in entries])
    half = len(eps) // 2
    fine = quot[half:] if half > 0 else quot
    n_limited = sum(1 for ent in entries if ent.diagnostics["cloud_limited"])
    unreliable = n_limited > len(eps) / 2
    est_q = MdimEstimate(
        upper=float(np.max(fine)),
        lower=float(np.min(fine)),
        method="quotient-sup",
        eps_range=(eps[half] if half > 0 else eps[0], eps[-1]),
        unreliable=unreliable,
    )
    x = np.asarray([math.log(1.0 / e) for e in eps])
    y = np.asarray([ent.h_hat for ent in entries])
    m = float(np.polyfit(x, y, 1)[0]) if len(eps) >= 2 else float("nan")
    est_s = MdimEstimate(
        upper=m, lower=m, method="slope-regression", eps_range=(eps[0], eps[-1]),
        unreliable=unreliable,
    )
    profile = ScaleProfile(entries=entries, system_id=system.kind, cloud_spec=cloud_spec)
    return profile, {"quotient-sup": est_q, "slope-regression": est_s}


# -- sampling comparison (Prop 2.7 mechanics) ------------------------------------


def compare_time_sampling(
    system: FlowSystem,
    tau: float,
    epsilon: float,
    orders: Sequence[int],
    cloud_spec: CloudSpec,
    engine: str = "auto",
    tolerance: float = 0.05,
    lipschitz_pairs: int = 32,
    seed: int = 0,
) -> dict:
    """Compare the tau-sampled growth rate with the flow growth rate at the
    same scale, plus the Lipschitz-corrected scale epsilon / L_hat(tau).

    The inequality sampled <= flow (within tolerance) is asserted only for
    Lipschitz-certified systems; wrappers get the record without assertion.
    """
    if tau <= 0:
        raise SchemaError("tau must be positive")
    # flow-mode counts have no structured witness, so both sides run the same
    # cloud engine to keep the comparison apples-to-apples
    eng = "greedy" if engine in ("auto", "product") else engine
    h_sampled, d_sampled = entropy_at_scale(
        system, epsilon, orders, cloud_spec, mode="sampled", tau=tau, engine=eng
    )
    flow_orders = [n * tau for n in orders]
    h_flow, d_flow = entropy_at_scale(
        system, epsilon, flow_orders, cloud_spec, mode="flow", engine=eng
    )
    L = estimate_lipschitz(system, tau, lipschitz_pairs, seed).L_hat
    h_corr, d_corr = entropy_at_scale(
        system, epsilon / L, orders, cloud_spec, mode="sampled", tau=tau, engine=eng
    )
    # the flow grid over [0, n tau] includes the endpoint, so its sample set
    # matches tau-sampling of order n+1; the aligned gap compares those
    h_aligned, _ = entropy_at_scale(
        system, epsilon, [n + 1 for n in orders], cloud_spec, mode="sampled",
        tau=tau, engine=eng,
    )
    holds = h_sampled <= h_flow + tolerance and h_flow <= h_corr + tolerance
    record = {
        "tau": tau,
        "epsilon": epsilon,
        "L_hat": L,
        "sampled_per_time": h_sampled,
        "flow": h_flow,
        "sampled_corrected": h_corr,
        "aligned_gap": abs(h_flow - h_aligned),
        "inequality_holds": bool(holds),
        "asserted": bool(system.lipschitz_certified),
        "diagnostics": {
            "sampled": d_sampled,
            "flow": d_flow,
            "corrected": d_corr,
        },
    }
    if system.lipschitz_certified and not holds:
        raise AssertionError(
            f"sampling comparison violated: sampled={h_sampled:.4f} "
            f"flow={h_flow:.4f} corrected={h_corr:.4f}"
        )
    return record


def finite_union_check(
    system: FlowSystem,
    clouds: Sequence[PointCloud],
    epsilon: float,
    orders: Sequence[float],
    mode: str = "sampled",
    tau: float = 1.0,
    tolerance: float = 0.1,
) -> dict:
    """Entropy at scale of each piece vs the concatenated union (max law)."""
    if len(clouds) < 2:
        raise SchemaError("need at least two clouds")
    dummy = CloudSpec(provenance="custom")
    rates = []
    for cl in clouds:
        h, _ = entropy_at_scale(
            system, epsilon, orders, dummy, mode=mode, tau=tau, engine="greedy", cloud=cl
        )
        rates.append(h)
    union_points = [p for cl in clouds for p in cl.points]
    union = PointCloud(system, union_points, provenance="union")
    h_union, _ = entropy_at_scale(
        system, epsilon, orders, dummy, mode=mode, tau=tau, engine="greedy", cloud=union
    )
    gap = abs(h_union - max(rates))
    return {
        "piece_rates": rates,
        "union_rate": h_union,
        "max_piece_rate": max(rates),
        "gap": gap,
        "within_tolerance": bool(gap <= tolerance),
    }

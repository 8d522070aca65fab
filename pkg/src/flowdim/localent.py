"""Local entropy function via shrinking closed neighborhoods.

``h_local(x, eps)`` is the infimum over closed neighborhoods K of x of the
spanning growth rate of K at scale eps; neighborhoods are realized as closed
metric balls intersected with the working cloud (balls are cofinal among
neighborhoods).  The separated-count variant is computed alongside as a
cheap two-sided cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bowen import CloudSpec, PointCloud
from .errors import FeasibilityError, SchemaError
from .mdim import entropy_at_scale
from .systems import FlowPoint, FlowSystem


def cloud_diameter(system: FlowSystem, cloud: PointCloud, cap: int = 1024) -> float:
    """Base-metric diameter of the cloud (subsampled beyond ``cap`` points)."""
    n = len(cloud)
    idx = np.arange(n)
    if n > cap:
        idx = np.linspace(0, n - 1, cap).astype(int)
    if system.is_symbolic:
        w = cloud.words[idx]
        h = cloud.heights[idx]
        d = system.distance_matrix(w, h, w, h)
    else:
        d = system.torus_distance_matrix(cloud.coords[idx], cloud.coords[idx])
    return float(np.max(d))


def _base_distances_to(system: FlowSystem, cloud: PointCloud, x: FlowPoint) -> np.ndarray:
    if system.is_symbolic:
        xw = np.asarray([x.word], dtype=np.int16)
        xh = np.asarray([x.height], dtype=float)
        return system.distance_matrix(cloud.words, cloud.heights, xw, xh)[:, 0]
    return system.torus_distance_matrix(cloud.coords, np.asarray([x.coords]))[:, 0]


@dataclass
class LocalEntropyResult:
    x: FlowPoint
    epsilon: float
    radii: list[float]
    per_radius: list[dict]
    h_local: float
    h_tilde_local: float
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "radii": self.radii,
            "per_radius": self.per_radius,
            "h_local": self.h_local,
            "h_tilde_local": self.h_tilde_local,
            "diagnostics": self.diagnostics,
        }


def local_entropy_at(
    system: FlowSystem,
    x: FlowPoint,
    epsilon: float,
    radii: Optional[Sequence[float]],
    orders: Sequence[float],
    cloud_spec: Optional[CloudSpec] = None,
    cloud: Optional[PointCloud] = None,
    mode: str = "sampled",
    tau: float = 1.0,
) -> LocalEntropyResult:
    """Spanning growth rate of closed rho-balls around x, minimized over rho.

    Spanning counts take the ball ∩ cloud as targets and the full cloud as
    candidates; empty radii (below the cloud resolution) are skipped with a
    flag.  The separated variant restricts the pool to the ball itself.
    """
    if cloud is None:
        if cloud_spec is None:
            raise SchemaError("need a cloud or a cloud_spec")
        cloud = cloud_spec.build(system)
    if radii is None:
        diam = cloud_diameter(system, cloud)
        radii = [0.5 * diam, 0.25 * diam, 0.125 * diam]
    radii = list(radii)
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise SchemaError("radii must be strictly decreasing")
    dist = _base_distances_to(system, cloud, x)
    dummy = CloudSpec(provenance="custom")
    per_radius = []
    values = []
    tilde_values = []
    for rho in radii:
        members = np.nonzero(dist <= rho)[0]
        if members.size == 0:
            per_radius.append({"rho": rho, "skipped": True, "reason": "empty below resolution"})
            continue
        K = cloud.subset(members)
        h_span, d_span = entropy_at_scale(
            system, epsilon, orders, dummy, count_kind="spanning", mode=mode, tau=tau,
            engine="greedy", cloud=cloud, targets=K,
        )
        h_sep, d_sep = entropy_at_scale(
            system, epsilon, orders, dummy, count_kind="separated", mode=mode, tau=tau,
            engine="greedy", cloud=K,
        )
        per_radius.append(
            {
                "rho": rho,
                "skipped": False,
                "K_size": int(members.size),
                "h_spanning": h_span,
                "h_separated": h_sep,
                "cloud_limited": d_span["cloud_limited"],
            }
        )
        values.append(h_span)
        tilde_values.append(h_sep)
    if not values:
        raise FeasibilityError("every radius was below the cloud resolution")
    return LocalEntropyResult(
        x=x,
        epsilon=epsilon,
        radii=radii,
        per_radius=per_radius,
        h_local=min(values),
        h_tilde_local=min(tilde_values),
        diagnostics={"cloud_size": len(cloud)},
    )


def sup_local_entropy(
    system: FlowSystem,
    epsilon: float,
    probes: PointCloud,
    radii: Optional[Sequence[float]],
    orders: Sequence[float],
    cloud_spec: Optional[CloudSpec] = None,
    cloud: Optional[PointCloud] = None,
    mode: str = "sampled",
    tau: float = 1.0,
) -> dict:
    """Max of the local entropy over probe points, with the argmax probe.

    The deterministic reduction breaks ties by canonical probe order.  The
    global spanning rate on the same cloud is reported alongside so callers
    can exercise the sup = global identity.
    """
    if len(probes) == 0:
        raise SchemaError("probe cloud must be nonempty")
    if cloud is None:
        if cloud_spec is None:
            raise SchemaError("need a cloud or a cloud_spec")
        cloud = cloud_spec.build(system)
    results = []
    best_i = -1
    best = -math.inf
    for i, p in enumerate(probes.points):
        res = local_entropy_at(
            system, p, epsilon, radii, orders, cloud=cloud, mode=mode, tau=tau
        )
        results.append(res)
        if res.h_local > best:
            best, best_i = res.h_local, i
    dummy = CloudSpec(provenance="custom")
    h_global, d_global = entropy_at_scale(
        system, epsilon, orders, dummy, count_kind="spanning", mode=mode, tau=tau,
        engine="greedy", cloud=cloud,
    )
    return {
        "sup": best,
        "argmax_index": best_i,
        "argmax_point": probes.points[best_i],
        "per_probe": results,
        "global_h": h_global,
        "gap": abs(best - h_global),
        "global_diagnostics": d_global,
    }

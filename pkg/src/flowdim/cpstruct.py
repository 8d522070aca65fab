"""Caratheodory-Pesin outer quantities on point-cloud subsets.

The outer quantity minimizes ``sum_i gauge(n_i)`` over subfamilies of Bowen
balls covering Z, with gauge ``exp(-n * lambda)``; its unit-threshold
critical exponent (the lambda where the optimal cover cost crosses 1) is the
numerical stand-in for the infinity-to-zero jump, which does not exist at any
finite order cap.  The weighted variant relaxes covers to nonnegative
combinations dominating a target function and is solved exactly as a tiny
rational LP, so the Frostman sandwich can be asserted as literal rational
inequalities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .bowen import BowenSpec, EvolvedCloud, PointCloud
from .errors import CapacityError, FeasibilityError, SchemaError
from .measures import MeasureModel, ball_mass
from .systems import FlowPoint, FlowSystem

Number = Union[float, Fraction]

EXACT_Z_CAP = 16
EXACT_BALL_CAP = 20
LP_Z_CAP = 12
LP_BALL_CAP = 16
LAMBDA_MAX = 10.0


@dataclass
class CPInstance:
    """A finite family of Bowen balls over a subset Z with orders and gauge.

    ``membership[i, z]`` says ball i contains cloud point z; every point must
    be covered by at least one ball (feasibility).
    """

    system: FlowSystem
    Z: PointCloud
    centers: list[int]
    orders: list[int]
    epsilon: float
    membership: np.ndarray
    N_floor: int
    mode: str = "sampled"
    tau: float = 1.0

    def __post_init__(self):
        if any(n < self.N_floor for n in self.orders):
            raise SchemaError("every ball order must be >= N_floor")
        if self.membership.shape != (len(self.centers), len(self.Z)):
            raise SchemaError("membership matrix shape mismatch")
        uncovered = ~np.any(self.membership, axis=0)
        if np.any(uncovered):
            raise FeasibilityError(
                f"{int(uncovered.sum())} points of Z are uncovered by the ball family"
            )

    @property
    def n_balls(self) -> int:
        return len(self.centers)

    def gauges(self, lam: float) -> list[float]:
        return [math.exp(-n * lam) for n in self.orders]

    def rational_gauges(self, base: Fraction) -> list[Fraction]:
        """Gauge table base**n with an exact rational base."""
        return [base**n for n in self.orders]


def build_cp_instance(
    system: FlowSystem,
    Z: PointCloud,
    epsilon: float,
    N_floor: int,
    order_cap: int,
    mode: str = "sampled",
    tau: float = 1.0,
    centers: Optional[Sequence[int]] = None,
) -> CPInstance:
    """Candidate balls at all centers in Z and all orders in [N_floor, order_cap]."""
    if order_cap < N_floor:
        raise SchemaError("order_cap must be >= N_floor")
    center_idx = list(range(len(Z))) if centers is None else list(centers)
    all_centers: list[int] = []
    all_orders: list[int] = []
    blocks = []
    for n in range(N_floor, order_cap + 1):
        if mode == "sampled":
            spec = BowenSpec(mode="sampled", epsilon=epsilon, n=n, tau=tau)
        else:
            spec = BowenSpec(mode="flow", epsilon=epsilon, t=float(n) * tau)
        ev = EvolvedCloud(system, Z, spec)
        rows = np.asarray(center_idx)
        d = ev.block(rows, np.arange(len(Z)))
        blocks.append(d < epsilon)
        all_centers.extend(center_idx)
        all_orders.extend([n] * len(center_idx))
    membership = np.vstack(blocks)
    return CPInstance(
        system=system,
        Z=Z,
        centers=all_centers,
        orders=all_orders,
        epsilon=epsilon,
        membership=membership,
        N_floor=N_floor,
        mode=mode,
        tau=tau,
    )


# -- outer cover optimization ---------------------------------------------------


def _greedy_weighted_cover(
    membership: np.ndarray, gauges: Sequence[Number], allowed: Sequence[int]
) -> tuple[Number, list[int]]:
    nz = membership.shape[1]
    exact = isinstance(gauges[0], Fraction)
    remaining = np.ones(nz, dtype=bool)
    chosen: list[int] = []
    total: Number = Fraction(0) if exact else 0.0
    if not exact:
        g = np.asarray([float(x) for x in gauges])
        sub = membership[allowed]
        while remaining.any():
            gains = (sub & remaining).sum(axis=1)
            with np.errstate(divide="ignore"):
                eff = np.where(gains > 0, g[allowed] / np.maximum(gains, 1), np.inf)
            k = int(np.argmin(eff))
            if not np.isfinite(eff[k]):
                raise FeasibilityError("greedy cover stalled on an uncovered point")
            i = allowed[k]
            chosen.append(i)
            total += g[i]
            remaining &= ~membership[i]
        return total, chosen
    while remaining.any():
        best_i, best_eff = -1, None
        for i in allowed:
            gain = int(np.count_nonzero(membership[i] & remaining))
            if gain == 0:
                continue
            eff = gauges[i] / gain
            if best_eff is None or eff < best_eff:
                best_eff, best_i = eff, i
        if best_i < 0:
            raise FeasibilityError("greedy cover stalled on an uncovered point")
        chosen.append(best_i)
        total = total + gauges[best_i]
        remaining &= ~membership[best_i]
    return total, chosen


def _exact_weighted_cover(
    membership: np.ndarray,
    gauges: Sequence[Number],
    upper: Number,
    upper_witness: list[int],
) -> tuple[Number, list[int]]:
    """Branch-and-bound minimum-weight set cover (exact)."""
    nb, nz = membership.shape
    cover_bits = []
    for i in range(nb):
        bits = 0
        for z in range(nz):
            if membership[i, z]:
                bits |= 1 << z
        cover_bits.append(bits)
    universe = (1 << nz) - 1
    # per-element cheapest covering gauge, an admissible completion bound
    elem_min = []
    for z in range(nz):
        opts = [gauges[i] for i in range(nb) if cover_bits[i] >> z & 1]
        elem_min.append(min(opts))
    best_val = upper
    best_set = list(upper_witness)

    def completion_bound(missing: int) -> Number:
        out: Number = 0
        z = 0
        m = missing
        best_single: Number = 0
        while m:
            if m & 1:
                if elem_min[z] > best_single:
                    best_single = elem_min[z]
            m >>= 1
            z += 1
        return best_single

    def rec(value: Number, covered: int):
        nonlocal best_val, best_set
        if covered == universe:
            if value < best_val:
                best_val, best_set = value, list(current)
            return
        missing = universe & ~covered
        if value + completion_bound(missing) >= best_val:
            return
        # branch on the least-covered missing element
        pick, opts = -1, None
        z = 0
        m = missing
        while m:
            if m & 1:
                cand = [i for i in range(nb) if cover_bits[i] >> z & 1]
                if opts is None or len(cand) < len(opts):
                    pick, opts = z, cand
            m >>= 1
            z += 1
        for i in sorted(opts, key=lambda i: gauges[i]):
            current.append(i)
            rec(value + gauges[i], covered | cover_bits[i])
            current.pop()

    current: list[int] = []
    rec(0, 0)
    return best_val, best_set


def cp_outer(
    instance: CPInstance,
    lam: Optional[float] = None,
    mode: str = "greedy",
    gauges: Optional[Sequence[Number]] = None,
    per_order_diag: bool = True,
) -> tuple[Number, str, list[int], dict]:
    """Minimize sum of gauges over subfamilies covering Z.

    Returns (value, bound_kind, witness ball indices, diagnostics).  Greedy
    runs the weighted set cover on the mixed family and on each single-order
    family, keeps the best, and reports the mixed-vs-single gap; exact mode
    is branch-and-bound over the mixed family.
    """
    if gauges is None:
        if lam is None:
            raise SchemaError("either lam or explicit gauges required")
        gauges = instance.gauges(lam)
    mem = instance.membership
    all_idx = list(range(instance.n_balls))
    mixed_val, mixed_wit = _greedy_weighted_cover(mem, gauges, all_idx)
    best_val, best_wit = mixed_val, mixed_wit
    per_order_best: Number = None
    if per_order_diag:
        for n in sorted(set(instance.orders)):
            idx = [i for i in all_idx if instance.orders[i] == n]
            if not np.all(np.any(mem[idx], axis=0)):
                continue
            val, wit = _greedy_weighted_cover(mem, gauges, idx)
            if per_order_best is None or val < per_order_best:
                per_order_best = val
            if val < best_val:
                best_val, best_wit = val, wit
    diag = {
        "mixed_value": float(mixed_val),
        "single_order_value": float(per_order_best) if per_order_best is not None else None,
        "mixed_vs_single_gap": float(per_order_best - mixed_val)
        if per_order_best is not None
        else None,
    }
    if mode == "greedy":
        return best_val, "upper-bound", best_wit, diag
    if mode != "exact":
        raise SchemaError(f"unknown mode {mode!r}")
    if len(instance.Z) > EXACT_Z_CAP or instance.n_balls > EXACT_BALL_CAP:
        raise CapacityError(
            f"exact cp_outer capped at |Z| <= {EXACT_Z_CAP}, balls <= {EXACT_BALL_CAP}"
        )
    val, wit = _exact_weighted_cover(mem, gauges, best_val, best_wit)
    return val, "exact", wit, diag


# -- critical value ---------------------------------------------------------------


@dataclass
class CriticalValue:
    lambda_star: float
    bracket: tuple[float, float]
    value_lo: float
    value_hi: float
    evaluations: int
    epsilon: float
    order_cap: int

    def to_json(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "bracket": list(self.bracket),
            "value_lo": self.value_lo,
            "value_hi": self.value_hi,
            "evaluations": self.evaluations,
            "epsilon": self.epsilon,
            "order_cap": self.order_cap,
        }


def cp_critical(
    system: FlowSystem,
    Z: PointCloud,
    epsilon: float,
    N_floor: int,
    order_cap: int,
    lam_tol: float = 1e-3,
    mode: str = "greedy",
    tau: float = 1.0,
    bowen_mode: str = "sampled",
) -> CriticalValue:
    """Critical exponent via bisection on the unit-threshold proxy.

    The cover cost is strictly decreasing in lambda, so the lambda where it
    crosses 1 is well defined; it converges to the infinity/zero jump of the
    outer quantity as order_cap grows.
    """
    if order_cap < N_floor + 2:
        raise SchemaError("order_cap must be >= N_floor + 2")
    inst = build_cp_instance(
        system, Z, epsilon, N_floor, order_cap, mode=bowen_mode, tau=tau
    )
    evals = 0

    def value(lam: float) -> float:
        nonlocal evals
        evals += 1
        v, _, _, _ = cp_outer(inst, lam, mode=mode, per_order_diag=False)
        return float(v)

    lo, v_lo = 0.0, value(0.0)
    if v_lo < 1.0:
        return CriticalValue(0.0, (0.0, 0.0), v_lo, v_lo, evals, epsilon, order_cap)
    hi = 1.0
    v_hi = value(hi)
    while v_hi >= 1.0:
        hi *= 2.0
        if hi > LAMBDA_MAX:
            raise FeasibilityError(
                f"no lambda bracket found in [0, {LAMBDA_MAX}]: cover cost still "
                f"{v_hi:.3g} >= 1"
            )
        v_hi = value(hi)
    while hi - lo > lam_tol:
        mid = 0.5 * (lo + hi)
        if value(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    return CriticalValue(0.5 * (lo + hi), (lo, hi), value(lo), value(hi), evals, epsilon, order_cap)


# -- weighted (fractional) covers --------------------------------------------------


@dataclass
class WeightedCPInstance:
    base: CPInstance
    f: np.ndarray  # target function over Z, values in [0, 1]

    def __post_init__(self):
        if self.f.shape != (len(self.base.Z),):
            raise SchemaError("f must assign a value to every Z point")
        if np.any(self.f < 0) or np.any(self.f > 1):
            raise SchemaError("f values must lie in [0, 1]")


def weighted_outer(
    instance: WeightedCPInstance,
    lam: Optional[float] = None,
    mode: str = "greedy",
    gauges: Optional[Sequence[Number]] = None,
) -> tuple[Number, str, list[Number], dict]:
    """Minimize sum c_i * gauge_i subject to sum c_i chi_i >= f, c >= 0.

    Greedy raises coefficients along the cheapest effective ball until the
    residual vanishes (upper bound); exact mode enumerates basic feasible
    solutions of the LP in rational arithmetic.
    """
    base = instance.base
    if gauges is None:
        if lam is None:
            raise SchemaError("either lam or explicit gauges required")
        gauges = base.gauges(lam)
    mem = base.membership
    nb, nz = mem.shape
    f = instance.f
    if np.all(f <= 0):
        return 0, "exact", [0] * nb, {}
    uncoverable = (~np.any(mem, axis=0)) & (f > 0)
    if np.any(uncoverable):
        raise FeasibilityError("f demands mass on points no ball contains")
    if mode == "greedy":
        residual = f.astype(float).copy()
        coeff = [0.0] * nb
        total = 0.0
        while np.any(residual > 1e-15):
            best_i, best_eff = -1, None
            for i in range(nb):
                gain = float(residual[mem[i]].sum())
                if gain <= 0:
                    continue
                eff = float(gauges[i]) / gain
                if best_eff is None or eff < best_eff:
                    best_eff, best_i = eff, i
            # raise c_i by the largest residual it sees
            step = float(residual[mem[best_i]].max())
            coeff[best_i] += step
            total += step * float(gauges[best_i])
            residual[mem[best_i]] = np.maximum(residual[mem[best_i]] - step, 0.0)
        return total, "upper-bound", coeff, {}
    if mode != "exact":
        raise SchemaError(f"unknown mode {mode!r}")
    if nz > LP_Z_CAP or nb > LP_BALL_CAP:
        raise CapacityError(f"exact LP capped at |Z| <= {LP_Z_CAP}, balls <= {LP_BALL_CAP}")
    g = [Fraction(x) if not isinstance(x, Fraction) else x for x in gauges]
    fv = [Fraction(float(v)) if not isinstance(v, Fraction) else v for v in f]
    A = [[Fraction(1) if mem[i, z] else Fraction(0) for i in range(nb)] for z in range(nz)]
    best_val: Optional[Fraction] = None
    best_c: Optional[list[Fraction]] = None
    rows = range(nz)
    for k in range(0, min(nz, nb) + 1):
        for T in itertools.combinations(rows, k):
            for B in itertools.combinations(range(nb), k):
                sol = _solve_rational([[A[r][b] for b in B] for r in T], [fv[r] for r in T])
                if sol is None:
                    continue
                c = [Fraction(0)] * nb
                for b, v in zip(B, sol):
                    c[b] = v
                if any(v < 0 for v in c):
                    continue
                ok = True
                for r in range(nz):
                    if sum(A[r][i] * c[i] for i in range(nb)) < fv[r]:
                        ok = False
                        break
                if not ok:
                    continue
                val = sum(g[i] * c[i] for i in range(nb))
                if best_val is None or val < best_val:
                    best_val, best_c = val, c
    if best_val is None:
        raise FeasibilityError("no basic feasible solution found")
    return best_val, "exact", best_c, {}


def _solve_rational(M: list[list[Fraction]], rhs: list[Fraction]) -> Optional[list[Fraction]]:
    """Gaussian elimination over Q; None when singular."""
    n = len(M)
    if n == 0:
        return []
    A = [row[:] + [rhs[i]] for i, row in enumerate(M)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            if A[r][col] != 0:
                piv = r
                break
        if piv is None:
            return None
        A[col], A[piv] = A[piv], A[col]
        inv = A[col][col]
        A[col] = [v / inv for v in A[col]]
        for r in range(n):
            if r != col and A[r][col] != 0:
                factor = A[r][col]
                A[r] = [a - factor * b for a, b in zip(A[r], A[col])]
    return [A[i][n] for i in range(n)]


# -- Frostman ball-bound checker ----------------------------------------------------


def frostman_check(
    measure: MeasureModel,
    system: FlowSystem,
    Z: PointCloud,
    s: float,
    epsilon: float,
    N_floor: int,
    c: float,
    orders: Sequence[int],
    centers: Optional[Sequence[int]] = None,
    tau: float = 1.0,
) -> dict:
    """Verify mu(B_n(x, eps)) <= (1/c) exp(-s n) over sampled centers/orders.

    Returns a report with all violations and their margins; never raises on a
    violation (used both to falsify wrong (s, c) pairs and to validate
    measures built to meet the bound).
    """
    if c <= 0:
        raise SchemaError("c must be positive")
    idx = list(range(len(Z))) if centers is None else list(centers)
    checks = []
    violations = []
    for n in orders:
        if n < N_floor:
            continue
        spec = BowenSpec(mode="sampled", epsilon=epsilon, n=int(n), tau=tau)
        bound = math.exp(-s * n * tau) / c
        for i in idx:
            m = ball_mass(measure, system, Z.points[i], spec)
            rec = {"center": i, "n": int(n), "mass": m, "bound": bound, "margin": bound - m}
            checks.append(rec)
            if m > bound:
                violations.append(rec)
    return {
        "s": s,
        "c": c,
        "epsilon": epsilon,
        "checks": checks,
        "violations": violations,
        "violated": bool(violations),
    }


# -- subset profile ------------------------------------------------------------------


def bowen_mdim_subset(
    system: FlowSystem,
    Z: PointCloud,
    eps_grid: Sequence[float],
    N_floor: int,
    order_cap: int,
    lam_tol: float = 1e-3,
    mode: str = "greedy",
    tau: float = 1.0,
) -> dict:
    """Map cp_critical over the epsilon grid; quotient-sup and slope readings."""
    eps = list(eps_grid)
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise SchemaError("epsilon grid must be strictly decreasing")
    entries = []
    for e in eps:
        cv = cp_critical(system, Z, e, N_floor, order_cap, lam_tol, mode=mode, tau=tau)
        entries.append(
            {
                "epsilon": e,
                "lambda_star": cv.lambda_star,
                "quotient": cv.lambda_star / math.log(1.0 / e),
                "bracket": list(cv.bracket),
            }
        )
    quot = np.asarray([ent["quotient"] for ent in entries])
    half = len(eps) // 2
    fine = quot[half:] if half > 0 else quot
    x = np.asarray([math.log(1.0 / e) for e in eps])
    y = np.asarray([ent["lambda_star"] for ent in entries])
    slope = float(np.polyfit(x, y, 1)[0]) if len(eps) >= 2 else float("nan")
    return {
        "entries": entries,
        "quotient_upper": float(np.max(fine)),
        "quotient_lower": float(np.min(fine)),
        "slope_regression": slope,
    }

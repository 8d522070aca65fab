"""Bowen metrics, Bowen balls, and spanning/separated/cover counts.

The Bowen distance of order t is ``max_{s in [0,t]} d(phi_s x, phi_s y)``
evaluated on the system's canonical s-grid; the sampled variant maxes over
``j*tau`` for ``j = 0..n-1``.  Counts are computed on finite point clouds:
greedy solvers give certified one-sided bounds, exact solvers use
branch-and-bound and are capped at ``exact_cap`` points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CapacityError, FeasibilityError, SchemaError
from .systems import TORUS, FlowPoint, FlowSystem

EXACT_CAP = 24
_FULL_MATRIX_CAP = 2048


@dataclass(frozen=True)
class BowenSpec:
    """Order/scale of a Bowen metric: flow-time t or sampled (n, tau)."""

    mode: str  # "flow" | "sampled"
    epsilon: float
    t: float = 0.0
    n: int = 1
    tau: float = 1.0

    def validate(self, system: Optional[FlowSystem] = None) -> None:
        if self.mode not in ("flow", "sampled"):
            raise SchemaError(f"unknown Bowen mode {self.mode!r}")
        if self.epsilon <= 0:
            raise SchemaError("epsilon must be positive")
        if self.mode == "flow" and self.t < 0:
            raise SchemaError("flow order t must be >= 0")
        if self.mode == "sampled" and (self.n < 1 or self.tau <= 0):
            raise SchemaError("sampled mode needs n >= 1 and tau > 0")

    def times(self, system: FlowSystem) -> np.ndarray:
        if self.mode == "sampled":
            return np.arange(self.n) * self.tau
        return system.time_grid(self.t)

    def with_epsilon(self, epsilon: float) -> "BowenSpec":
        return BowenSpec(mode=self.mode, epsilon=epsilon, t=self.t, n=self.n, tau=self.tau)

    def with_order(self, order: float) -> "BowenSpec":
        if self.mode == "sampled":
            return BowenSpec(mode="sampled", epsilon=self.epsilon, n=int(order), tau=self.tau)
        return BowenSpec(mode="flow", epsilon=self.epsilon, t=float(order))

    @property
    def order(self) -> float:
        return self.n if self.mode == "sampled" else self.t

    @property
    def time_extent(self) -> float:
        """Total flow time spanned, used to normalize growth rates."""
        return self.n * self.tau if self.mode == "sampled" else max(self.t, 0.0)


class PointCloud:
    """A finite, deterministic candidate pool standing in for X or Z.

    Points are stored in canonical (lexicographic-key) order with duplicates
    removed; ``resolution`` is the covering radius in the base metric when
    the builder knows it.
    """

    def __init__(
        self,
        system: FlowSystem,
        points: Sequence[FlowPoint],
        provenance: str = "custom",
        resolution: Optional[float] = None,
        presorted: bool = False,
    ):
        self.system = system
        if not presorted:
            seen = {}
            for p in points:
                seen.setdefault(p.key(), p)
            points = [seen[k] for k in sorted(seen.keys())]
        self.points = list(points)
        self.provenance = provenance
        self.resolution = resolution
        if system.is_symbolic:
            self.words = np.asarray([p.word for p in self.points], dtype=np.int16)
            self.heights = np.asarray([p.height for p in self.points], dtype=float)
            self.coords = None
        else:
            self.coords = np.asarray([p.coords for p in self.points], dtype=float)
            self.words = None
            self.heights = None

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, indices: Iterable[int], provenance: Optional[str] = None) -> "PointCloud":
        idx = sorted(set(int(i) for i in indices))
        return PointCloud(
            self.system,
            [self.points[i] for i in idx],
            provenance=provenance or self.provenance,
            resolution=self.resolution,
            presorted=True,
        )


@dataclass(frozen=True)
class CloudSpec:
    """Declarative cloud construction, embedded in profiles and reports.

    Symbolic systems: ``full-enumeration`` enumerates all words on
    ``[coord_lo, coord_hi]`` (stride ``symbol_stride`` through the alphabet)
    crossed with ``heights``.  Torus systems: ``lattice`` places ``size``
    evenly spaced points.  ``random`` samples ``size`` points from the seed.
    """

    provenance: str = "full-enumeration"
    coord_lo: int = 0
    coord_hi: int = 4
    heights: tuple[float, ...] = (0.0,)
    symbol_stride: int = 1
    size: int = 256
    seed: int = 0
    size_cap: int = 200_000

    def build(self, system: FlowSystem) -> "PointCloud":
        if self.provenance == "random":
            return random_cloud(system, self.size, self.seed)
        if system.is_symbolic:
            return full_enumeration_cloud(
                system,
                self.coord_lo,
                self.coord_hi,
                heights=self.heights,
                symbol_stride=self.symbol_stride,
                size_cap=self.size_cap,
            )
        return lattice_cloud(system, self.size)

    def to_json(self) -> dict:
        return {
            "provenance": self.provenance,
            "coord_lo": self.coord_lo,
            "coord_hi": self.coord_hi,
            "heights": list(self.heights),
            "symbol_stride": self.symbol_stride,
            "size": self.size,
            "seed": self.seed,
        }


def full_enumeration_cloud(
    system: FlowSystem,
    coord_lo: int,
    coord_hi: int,
    heights: Sequence[float] = (0.0,),
    symbol_stride: int = 1,
    size_cap: int = 200_000,
) -> PointCloud:
    """All words varying on window coordinates [coord_lo, coord_hi] (others 0),
    crossed with a dyadic height grid."""
    if not system.is_symbolic:
        raise SchemaError("full enumeration requires a symbolic system")
    W = system.window
    if coord_lo < -W or coord_hi > W or coord_lo > coord_hi:
        raise SchemaError("coordinate box must sit inside the window")
    symbols = list(range(0, system.n_symbols, symbol_stride))
    ncoords = coord_hi - coord_lo + 1
    total = len(symbols) ** ncoords * len(heights)
    if total > size_cap:
        raise CapacityError(
            f"full enumeration of {total} points exceeds size_cap={size_cap}"
        )
    width = 2 * W + 1
    pts = []
    for combo in itertools.product(symbols, repeat=ncoords):
        word = [0] * width
        for off, sym in enumerate(combo):
            word[coord_lo + off + W] = sym
        for h in heights:
            pts.append(FlowPoint(word=tuple(word), height=float(h)))
    res = None
    if symbol_stride == 1 and len(heights) == 1:
        # points cover the sub-box exactly; base-metric covering radius is the
        # weight mass outside the box
        inside = np.zeros(width, dtype=bool)
        inside[coord_lo + W : coord_hi + 1 + W] = True
        res = float(np.sum(system.weights[~inside]))
    return PointCloud(system, pts, provenance="full-enumeration", resolution=res)


def lattice_cloud(system: FlowSystem, size: int) -> PointCloud:
    """Evenly spaced torus lattice (dyadic when size is a power of two)."""
    if system.is_symbolic:
        raise SchemaError("lattice_cloud is the torus builder; use full_enumeration_cloud")
    dim = system.dim
    per_axis = max(1, int(round(size ** (1.0 / dim))))
    axes = [np.arange(per_axis) / per_axis for _ in range(dim)]
    pts = [
        FlowPoint(coords=tuple(float(v) for v in combo))
        for combo in itertools.product(*axes)
    ]
    return PointCloud(system, pts, provenance="lattice", resolution=0.5 / per_axis)


def random_cloud(system: FlowSystem, size: int, seed: int) -> PointCloud:
    pts = system.sample_points(size, seed)
    return PointCloud(system, pts, provenance=f"random({seed})")


class EvolvedCloud:
    """Cloud snapshots along the spec's time grid, with distance helpers.

    The full pairwise Bowen matrix is materialized once per (cloud, spec)
    when it fits ``_FULL_MATRIX_CAP``; larger instances fall back to
    row-by-row evaluation against a subset of columns.
    """

    def __init__(self, system: FlowSystem, cloud: PointCloud, spec: BowenSpec):
        self.system = system
        self.cloud = cloud
        self.spec = spec
        self.times = spec.times(system)
        self._snap = []
        if system.is_symbolic:
            for t in self.times:
                self._snap.append(system.evolve_batch(cloud.words, cloud.heights, float(t)))
        self._matrix = None

    def full_matrix(self) -> np.ndarray:
        if self._matrix is None:
            n = len(self.cloud)
            if n > _FULL_MATRIX_CAP:
                raise CapacityError(
                    f"dense Bowen matrix for {n} points exceeds cap {_FULL_MATRIX_CAP}"
                )
            self._matrix = self.block(np.arange(n), np.arange(n))
        return self._matrix

    def block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Bowen distance block, max over the time grid."""
        sys_ = self.system
        if not sys_.is_symbolic:
            A = self.cloud.coords[rows]
            B = self.cloud.coords[cols]
            # rotations are isometries: a single snapshot suffices
            return sys_.torus_distance_matrix(A, B)
        out = None
        for words, heights in self._snap:
            d = sys_.distance_matrix(words[rows], heights[rows], words[cols], heights[cols])
            out = d if out is None else np.maximum(out, d)
        return out

    def rows_vs(self, row: int, cols: np.ndarray) -> np.ndarray:
        return self.block(np.asarray([row]), cols)[0]


def bowen_distance(system: FlowSystem, x: FlowPoint, y: FlowPoint, spec: BowenSpec) -> float:
    """d_t(x, y) (flow mode) or d_{n, phi_tau}(x, y) (sampled mode)."""
    spec.validate(system)
    best = 0.0
    for t in spec.times(system):
        d = system.distance(system.evolve(x, float(t)), system.evolve(y, float(t)))
        if d > best:
            best = d
    return best


@dataclass
class CountResult:
    value: int
    witness: list[int]
    mode: str
    bound_kind: str
    pieces: Optional[list[list[int]]] = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "value": self.value,
            "witness": list(self.witness),
            "mode": self.mode,
            "bound_kind": self.bound_kind,
        }
        if self.pieces is not None:
            out["pieces"] = [list(p) for p in self.pieces]
        if self.diagnostics:
            out["diagnostics"] = self.diagnostics
        return out


# -- separated sets ---------------------------------------------------------


def _greedy_separated(ev: EvolvedCloud, epsilon: float) -> list[int]:
    n = len(ev.cloud)
    kept: list[int] = []
    for i in range(n):
        if not kept:
            kept.append(i)
            continue
        d = ev.rows_vs(i, np.asarray(kept))
        if np.all(d >= epsilon):
            kept.append(i)
    return kept


def _mis_branch_and_bound(adj: list[int], n: int, incumbent: list[int]) -> list[int]:
    """Maximum independent set on <= exact_cap vertices, bitset adjacency."""
    best = list(incumbent)

    def rec(chosen: list[int], banned: int, start: int, remaining: int):
        nonlocal best
        if len(chosen) + remaining <= len(best):
            return
        found = False
        for v in range(start, n):
            if banned >> v & 1:
                continue
            found = True
            rec(chosen + [v], banned | adj[v] | (1 << v), v + 1, remaining - 1)
            banned |= 1 << v  # exclude v on the other branch
            remaining -= 1
            if len(chosen) + remaining <= len(best):
                return
        if not found and len(chosen) > len(best):
            best = list(chosen)

    rec([], 0, 0, n)
    return best


def max_separated(
    system: FlowSystem,
    cloud: PointCloud,
    spec: BowenSpec,
    mode: str = "greedy",
    exact_cap: int = EXACT_CAP,
) -> CountResult:
    """Largest (order, epsilon)-separated subset of the cloud.

    Greedy scans in canonical order and returns a maximal separated set
    (a lower bound that is simultaneously an epsilon-spanning set of the
    cloud); exact mode solves maximum independent set on the d < epsilon
    graph by branch and bound.
    """
    if len(cloud) == 0:
        raise SchemaError("cloud must be nonempty")
    spec.validate(system)
    ev = EvolvedCloud(system, cloud, spec)
    eps = spec.epsilon
    greedy = _greedy_separated(ev, eps)
    if mode == "greedy":
        return CountResult(len(greedy), greedy, "greedy", "lower-bound")
    if mode != "exact":
        raise SchemaError(f"unknown mode {mode!r}")
    n = len(cloud)
    if n > exact_cap:
        raise CapacityError(f"exact separated needs |cloud| <= {exact_cap}, got {n}")
    m = ev.full_matrix()
    adj = [0] * n
    for i in range(n):
        for j in range(n):
            if i != j and m[i, j] < eps:
                adj[i] |= 1 << j
    best = _mis_branch_and_bound(adj, n, greedy)
    return CountResult(len(best), sorted(best), "exact", "exact")


# -- spanning sets ----------------------------------------------------------


def _membership(ev_cand: EvolvedCloud, targets: PointCloud, spec: BowenSpec) -> np.ndarray:
    """covers[c, t] = Bowen distance(candidate c, target t) < epsilon."""
    system = ev_cand.system
    ev_t = EvolvedCloud(system, targets, spec)
    eps = spec.epsilon
    nc, nt = len(ev_cand.cloud), len(targets)
    out = np.zeros((nc, nt), dtype=bool)
    if system.is_symbolic:
        acc = None
        for (wc, hc), (wt, ht) in zip(ev_cand._snap, ev_t._snap):
            d = system.distance_matrix(wc, hc, wt, ht)
            acc = d if acc is None else np.maximum(acc, d)
        out = acc < eps
    else:
        out = system.torus_distance_matrix(ev_cand.cloud.coords, targets.coords) < eps
    return out


def _exact_set_cover(covers: list[int], universe: int, nt: int, upper: int) -> Optional[list[int]]:
    """Smallest subfamily of bitsets covering ``universe``; DFS by increasing
    cardinality on the least-covered element, pruned at ``upper``."""
    order = sorted(range(len(covers)), key=lambda c: -bin(covers[c]).count("1"))
    best: Optional[list[int]] = None
    best_size = upper

    def rec(chosen: list[int], covered: int):
        nonlocal best, best_size
        if covered == universe:
            if len(chosen) < best_size:
                best_size = len(chosen)
                best = list(chosen)
            return
        if len(chosen) + 1 > best_size:
            return
        # optimistic bound: each new set covers at most max_gain elements
        missing = universe & ~covered
        max_gain = max(bin(covers[c] & missing).count("1") for c in order)
        if max_gain == 0:
            return
        if len(chosen) + math.ceil(bin(missing).count("1") / max_gain) >= best_size + 1:
            return
        # branch on the least-covered missing element
        elem = None
        elem_opts = None
        for e in range(nt):
            if missing >> e & 1:
                opts = [c for c in order if covers[c] >> e & 1]
                if elem_opts is None or len(opts) < len(elem_opts):
                    elem, elem_opts = e, opts
        for c in elem_opts:
            rec(chosen + [c], covered | covers[c])

    rec([], 0)
    return best


def min_spanning(
    system: FlowSystem,
    cloud: PointCloud,
    targets: PointCloud,
    spec: BowenSpec,
    mode: str = "greedy",
    exact_cap: int = EXACT_CAP,
) -> CountResult:
    """Smallest set of cloud points within Bowen distance epsilon of every
    target.  Greedy set cover gives an upper bound; exact mode searches by
    increasing cardinality."""
    if len(cloud) == 0 or len(targets) == 0:
        raise SchemaError("cloud and targets must be nonempty")
    spec.validate(system)
    ev = EvolvedCloud(system, cloud, spec)
    cov = _membership(ev, targets, spec)
    uncovered = ~np.any(cov, axis=0)
    if np.any(uncovered):
        raise FeasibilityError(
            f"{int(uncovered.sum())} targets are not within epsilon of any cloud "
            "point; the cloud resolution is too coarse for this epsilon"
        )
    nt = len(targets)
    # greedy max coverage with canonical tie-break
    remaining = np.ones(nt, dtype=bool)
    chosen: list[int] = []
    while remaining.any():
        gains = (cov & remaining).sum(axis=1)
        c = int(np.argmax(gains))  # argmax takes the first (canonical) maximizer
        chosen.append(c)
        remaining &= ~cov[c]
    if mode == "greedy":
        return CountResult(len(chosen), chosen, "greedy", "upper-bound")
    if mode != "exact":
        raise SchemaError(f"unknown mode {mode!r}")
    if len(cloud) > exact_cap or nt > exact_cap:
        raise CapacityError(f"exact spanning capped at {exact_cap} points")
    covers = []
    for c in range(len(cloud)):
        bits = 0
        for t in range(nt):
            if cov[c, t]:
                bits |= 1 << t
        covers.append(bits)
    universe = (1 << nt) - 1
    best = _exact_set_cover(covers, universe, nt, upper=len(chosen))
    if best is None:
        best = chosen
    return CountResult(len(best), sorted(best), "exact", "exact")


# -- diameter covers --------------------------------------------------------


def _maximal_cliques(adj: list[int], n: int) -> list[int]:
    """Bron-Kerbosch with pivoting; cliques as bitsets."""
    cliques: list[int] = []

    def bk(r: int, p: int, x: int):
        if p == 0 and x == 0:
            cliques.append(r)
            return
        pivot_pool = p | x
        pivot = (pivot_pool & -pivot_pool).bit_length() - 1
        best_u, best_cnt = pivot, -1
        pool = pivot_pool
        while pool:
            u = (pool & -pool).bit_length() - 1
            pool &= pool - 1
            cnt = bin(p & adj[u]).count("1")
            if cnt > best_cnt:
                best_u, best_cnt = u, cnt
        cand = p & ~adj[best_u]
        while cand:
            v = (cand & -cand).bit_length() - 1
            cand &= cand - 1
            bk(r | (1 << v), p & adj[v], x & adj[v])
            p &= ~(1 << v)
            x |= 1 << v

    bk(0, (1 << n) - 1, 0)
    return cliques


def min_diameter_cover(
    system: FlowSystem,
    cloud: PointCloud,
    spec: BowenSpec,
    mode: str = "greedy",
    exact_cap: int = EXACT_CAP,
) -> CountResult:
    """Partition the cloud into pieces of Bowen diameter < epsilon.

    Greedy seeds a cluster at the first unassigned point and absorbs all
    unassigned points within epsilon/2 (forcing diameter < epsilon); exact
    mode solves minimum clique cover on the d < epsilon graph via maximal
    cliques + exact set cover.
    """
    if len(cloud) == 0:
        raise SchemaError("cloud must be nonempty")
    spec.validate(system)
    ev = EvolvedCloud(system, cloud, spec)
    eps = spec.epsilon
    n = len(cloud)
    if mode == "greedy":
        unassigned = np.ones(n, dtype=bool)
        pieces: list[list[int]] = []
        for i in range(n):
            if not unassigned[i]:
                continue
            idx = np.nonzero(unassigned)[0]
            d = ev.rows_vs(i, idx)
            members = idx[d < eps / 2.0]
            pieces.append([int(v) for v in members])
            unassigned[members] = False
        return CountResult(
            len(pieces), [p[0] for p in pieces], "greedy", "upper-bound", pieces=pieces
        )
    if mode != "exact":
        raise SchemaError(f"unknown mode {mode!r}")
    if n > exact_cap:
        raise CapacityError(f"exact diameter cover capped at {exact_cap} points")
    m = ev.full_matrix()
    adj = [0] * n
    for i in range(n):
        for j in range(n):
            if i != j and m[i, j] < eps:
                adj[i] |= 1 << j
    cliques = _maximal_cliques(adj, n)
    universe = (1 << n) - 1
    # greedy incumbent over the clique family
    chosen_bits: list[int] = []
    covered = 0
    while covered != universe:
        best = max(cliques, key=lambda c: bin(c & ~covered).count("1"))
        chosen_bits.append(best)
        covered |= best
    best_cover = _exact_set_cover(cliques, universe, n, upper=len(chosen_bits))
    if best_cover is None:
        sel = chosen_bits
    else:
        sel = [cliques[i] for i in best_cover]
    pieces = []
    assigned = 0
    for bits in sel:
        fresh = bits & ~assigned
        members = [v for v in range(n) if fresh >> v & 1]
        if members:
            pieces.append(members)
        assigned |= bits
    return CountResult(
        len(pieces), [p[0] for p in pieces], "exact", "exact", pieces=pieces
    )

"""Probability measures with exact Bowen-ball mass, and the measure entropies.

Suspension measures are a base word measure (product or Markov over the
window coordinates) crossed with the uniform height law on ``[0, roof)``.
The exact mass engine enumerates window words (capped at 2**20 states) and
computes, per word, the set of heights inside the Bowen ball by interval
algebra; this makes every downstream inequality a hard assertion rather than
a statistical one.  All entropies are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bowen import BowenSpec, CountResult, PointCloud
from .errors import CapacityError, FeasibilityError, SchemaError
from .systems import FlowPoint, FlowSystem

_WORD_ENUM_CAP = 1 << 20

BERNOULLI = "bernoulli"
MARKOV = "markov"
LEBESGUE = "lebesgue-product"
POINT_MASS = "point-mass"
EMPIRICAL = "empirical"


@dataclass(frozen=True)
class MeasureModel:
    """An explicit probability law on a built-in system."""

    kind: str
    p: Optional[tuple[float, ...]] = None
    transition: Optional[tuple[tuple[float, ...], ...]] = None
    stationary: Optional[tuple[float, ...]] = None
    point: Optional[FlowPoint] = None
    orbit: Optional[tuple[FlowPoint, ...]] = None
    weights: Optional[tuple[float, ...]] = None

    def validate(self, system: FlowSystem) -> None:
        if self.kind in (BERNOULLI, LEBESGUE, MARKOV) and not system.is_symbolic:
            raise SchemaError(f"{self.kind} measures require a symbolic system")
        if self.kind == BERNOULLI:
            if self.p is None or len(self.p) != system.n_symbols:
                raise SchemaError("bernoulli needs a p-vector over the alphabet")
            arr = np.asarray(self.p)
            if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-12:
                raise SchemaError("p-vector must be a probability vector")
        elif self.kind == MARKOV:
            P = np.asarray(self.transition, dtype=float)
            pi = np.asarray(self.stationary, dtype=float)
            k = system.n_symbols
            if P.shape != (k, k) or pi.shape != (k,):
                raise SchemaError("markov needs a k x k matrix and k-vector")
            if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
                raise SchemaError("transition rows must sum to 1")
            if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
                raise SchemaError("stationary vector must be a probability vector")
            if np.max(np.abs(pi @ P - pi)) > 1e-10:
                raise SchemaError("stationary vector is not a fixed left eigenvector")
        elif self.kind == LEBESGUE:
            if system.kind != "susp-shift-interval" and not (
                system.base and system.base.kind == "susp-shift-interval"
            ):
                raise SchemaError("lebesgue-product requires the interval alphabet")
        elif self.kind == POINT_MASS:
            if self.point is None:
                raise SchemaError("point-mass needs a point")
        elif self.kind == EMPIRICAL:
            if not self.orbit:
                raise SchemaError("empirical needs orbit points")
            w = self.weights or tuple(1.0 / len(self.orbit) for _ in self.orbit)
            if len(w) != len(self.orbit) or abs(sum(w) - 1.0) > 1e-12:
                raise SchemaError("empirical weights must sum to 1")
        else:
            raise SchemaError(f"unknown measure kind {self.kind!r}")

    def marginal(self, system: FlowSystem) -> np.ndarray:
        """Per-coordinate symbol law (product measures and Markov stationary)."""
        if self.kind == BERNOULLI:
            return np.asarray(self.p, dtype=float)
        if self.kind == LEBESGUE:
            return np.full(system.n_symbols, 1.0 / system.n_symbols)
        if self.kind == MARKOV:
            return np.asarray(self.stationary, dtype=float)
        raise SchemaError(f"{self.kind} has no per-coordinate marginal")

    def word_probs(self, system: FlowSystem, words: np.ndarray) -> np.ndarray:
        """Probability of each window word in a batch (exact kinds only)."""
        if self.kind in (BERNOULLI, LEBESGUE):
            marg = self.marginal(system)
            return np.prod(marg[words], axis=1)
        if self.kind == MARKOV:
            P = np.asarray(self.transition, dtype=float)
            pi = np.asarray(self.stationary, dtype=float)
            probs = pi[words[:, 0]].copy()
            for i in range(words.shape[1] - 1):
                probs *= P[words[:, i], words[:, i + 1]]
            return probs
        raise SchemaError(f"{self.kind} has no cylinder word law")

    @property
    def is_exact(self) -> bool:
        return self.kind in (BERNOULLI, LEBESGUE, MARKOV, POINT_MASS, EMPIRICAL)

    def sample(self, system: FlowSystem, count: int, seed: int) -> list[FlowPoint]:
        rng = np.random.default_rng(seed)
        if self.kind == POINT_MASS:
            return [self.point] * count
        if self.kind == EMPIRICAL:
            w = self.weights or tuple(1.0 / len(self.orbit) for _ in self.orbit)
            idx = rng.choice(len(self.orbit), size=count, p=np.asarray(w))
            return [self.orbit[i] for i in idx]
        width = 2 * system.window + 1
        heights = rng.uniform(0.0, system.roof, size=count)
        if self.kind in (BERNOULLI, LEBESGUE):
            marg = self.marginal(system)
            words = rng.choice(system.n_symbols, size=(count, width), p=marg)
        else:
            P = np.asarray(self.transition, dtype=float)
            pi = np.asarray(self.stationary, dtype=float)
            words = np.zeros((count, width), dtype=np.int16)
            words[:, 0] = rng.choice(system.n_symbols, size=count, p=pi)
            for i in range(1, width):
                u = rng.random(count)
                cum = np.cumsum(P[words[:, i - 1]], axis=1)
                words[:, i] = (u[:, None] > cum).sum(axis=1)
        return [
            FlowPoint(word=tuple(int(v) for v in row), height=float(h))
            for row, h in zip(words, heights)
        ]


def enumerate_words(system: FlowSystem, coord_lo: int = None, coord_hi: int = None) -> np.ndarray:
    """All window words varying on [coord_lo, coord_hi] (default: full window)."""
    W = system.window
    lo = -W if coord_lo is None else coord_lo
    hi = W if coord_hi is None else coord_hi
    ncoords = hi - lo + 1
    k = system.n_symbols
    total = k**ncoords
    if total > _WORD_ENUM_CAP:
        raise CapacityError(
            f"word enumeration of {total} states exceeds cap {_WORD_ENUM_CAP}"
        )
    width = 2 * W + 1
    words = np.zeros((total, width), dtype=np.int16)
    reps = total
    for off in range(ncoords):
        reps //= k
        pattern = np.repeat(np.tile(np.arange(k), total // (reps * k)), reps)
        words[:, lo + off + W] = pattern
    return words


# -- interval sets ------------------------------------------------------------


def _intersect_interval_sets(a: list[tuple[float, float]], b: list[tuple[float, float]]):
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if hi > lo:
                out.append((lo, hi))
    return out


def _set_length(iv: list[tuple[float, float]]) -> float:
    return sum(hi - lo for lo, hi in iv)


def ball_height_sets(
    system: FlowSystem, center: FlowPoint, words: np.ndarray, spec: BowenSpec
) -> list[list[tuple[float, float]]]:
    """For each word w, the set of heights s with (w, s) in the Bowen ball
    around ``center`` (suspension systems).  Exact interval algebra."""
    c = system.roof
    eps = spec.epsilon
    times = spec.times(system)
    cw = np.asarray([center.word], dtype=np.int16)
    ch = np.asarray([center.height], dtype=float)
    n = words.shape[0]
    sets: list[list[tuple[float, float]]] = [[(0.0, c)] for _ in range(n)]
    for t in times:
        t = float(t)
        cwt, cht = system.evolve_batch(cw, ch, t)
        u_c = float(cht[0])
        m0 = math.floor(t / c)
        split = (m0 + 1) * c - t  # s below split: m0 crossings; above: m0+1
        segs = []
        if split > 0:
            segs.append((0.0, min(split, c), m0, t - m0 * c))
        if split < c:
            segs.append((split, c, m0 + 1, t - (m0 + 1) * c))
        per_time: list[list[list[tuple[float, float]]]] = [[] for _ in range(n)]
        for s_lo, s_hi, m, off in segs:
            v = system.shift_words(words, m)
            A = system.word_distance_matrix(v, cwt)[:, 0]
            B = system.word_distance_matrix(system.shift_words(v, 1), cwt)[:, 0]
            Cc = system.word_distance_matrix(v, system.shift_words(cwt, 1))[:, 0]
            # direct: |(s + off) - u_c| < eps - A
            rad = eps - A
            d_lo = u_c - off - rad
            d_hi = u_c - off + rad
            # wrap forward: (c - u) + u_c + B < eps  =>  s > c - eps + u_c + B - off
            f_lo = c - eps + u_c + B - off
            # wrap backward: u + (c - u_c) + Cc < eps  =>  s < eps - c + u_c - Cc - off
            b_hi = eps - c + u_c - Cc - off
            for i in range(n):
                pieces = []
                if rad[i] > 0:
                    lo, hi = max(d_lo[i], s_lo), min(d_hi[i], s_hi)
                    if hi > lo:
                        pieces.append((lo, hi))
                lo = max(f_lo[i], s_lo)
                if s_hi > lo:
                    pieces.append((lo, s_hi))
                hi = min(b_hi[i], s_hi)
                if hi > s_lo:
                    pieces.append((s_lo, hi))
                if pieces:
                    # merge overlaps within this segment
                    pieces.sort()
                    merged = [pieces[0]]
                    for lo, hi in pieces[1:]:
                        if lo <= merged[-1][1]:
                            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
                        else:
                            merged.append((lo, hi))
                    per_time[i].extend(merged)
        for i in range(n):
            sets[i] = _intersect_interval_sets(sets[i], per_time[i])
    return sets


def ball_slices_aligned(
    system: FlowSystem,
    centers_words: np.ndarray,
    words: np.ndarray,
    spec: BowenSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized height slices for height-0 centers and roof-aligned times.

    Returns arrays (lo, hi) of shape (centers, words): the admissible height
    set per pair is [0, lo) union (hi, roof).
    """
    c = system.roof
    eps = spec.epsilon
    times = spec.times(system)
    shifts = []
    for t in times:
        m = round(float(t) / c)
        if abs(m * c - float(t)) > 1e-12:
            raise SchemaError("aligned slice path requires times that are roof multiples")
        shifts.append(m)
    A = None
    B = None
    for m in shifts:
        cw = system.shift_words(centers_words, m)
        vw = system.shift_words(words, m)
        a = system.word_distance_matrix(cw, vw)
        b = system.word_distance_matrix(cw, system.shift_words(vw, 1))
        A = a if A is None else np.maximum(A, a)
        B = b if B is None else np.maximum(B, b)
    lo = np.clip(eps - A, 0.0, c)
    hi = np.clip(c - eps + B, 0.0, c)
    # degenerate overlap (lo > hi) cannot occur for eps < c/2 + min(A,B); clamp
    hi = np.maximum(hi, lo)
    return lo, hi


def _aligned_ok(system: FlowSystem, center: FlowPoint, spec: BowenSpec) -> bool:
    if center.height != 0.0:
        return False
    c = system.roof
    for t in spec.times(system):
        m = round(float(t) / c)
        if abs(m * c - float(t)) > 1e-12:
            return False
    return True


def _union_lengths(los: np.ndarray, his: np.ndarray, cap: float) -> np.ndarray:
    """Per-row total length of the union of intervals [lo, hi) clipped to
    [0, cap); empty intervals may be encoded as lo >= hi."""
    los = np.clip(los, 0.0, cap)
    his = np.clip(his, 0.0, cap)
    order = np.argsort(los, axis=1)
    lo_s = np.take_along_axis(los, order, axis=1)
    hi_s = np.take_along_axis(his, order, axis=1)
    runmax = np.maximum.accumulate(hi_s, axis=1)
    prev = np.concatenate([np.zeros((los.shape[0], 1)), runmax[:, :-1]], axis=1)
    contrib = np.maximum(0.0, hi_s - np.maximum(lo_s, prev))
    return contrib.sum(axis=1)


def ball_admissible_lengths(
    system: FlowSystem, center: FlowPoint, words: np.ndarray, spec: BowenSpec
) -> np.ndarray:
    """Per-word length of the admissible height set of the Bowen ball around
    ``center`` (vectorized general path: arbitrary center heights and times).

    Works through the complement: the forbidden heights per (word, time) form
    at most a few intervals whose union length is computed in one sweep.
    """
    c = system.roof
    eps = spec.epsilon
    times = spec.times(system)
    cw = np.asarray([center.word], dtype=np.int16)
    ch = np.asarray([center.height], dtype=float)
    n = words.shape[0]
    forb_lo: list[np.ndarray] = []
    forb_hi: list[np.ndarray] = []
    for t in times:
        t = float(t)
        cwt, cht = system.evolve_batch(cw, ch, t)
        u_c = float(cht[0])
        m0 = math.floor(t / c)
        split = (m0 + 1) * c - t
        segs = []
        if split > 1e-15:
            segs.append((0.0, min(split, c), m0, t - m0 * c))
        if split < c - 1e-15:
            segs.append((max(split, 0.0), c, m0 + 1, t - (m0 + 1) * c))
        for s_lo, s_hi, m, off in segs:
            v = system.shift_words(words, m)
            A = system.word_distance_matrix(v, cwt)[:, 0]
            B = system.word_distance_matrix(system.shift_words(v, 1), cwt)[:, 0]
            Cc = system.word_distance_matrix(v, system.shift_words(cwt, 1))[:, 0]
            rad = eps - A
            # admissible pieces clipped into the segment
            p_lo = np.stack(
                [
                    np.full(n, s_lo),  # prefix piece from the wrap-backward candidate
                    np.clip(u_c - off - rad, s_lo, s_hi),  # direct piece
                    np.clip(c - eps + u_c + B - off, s_lo, s_hi),  # suffix piece
                ],
                axis=1,
            )
            p_hi = np.stack(
                [
                    np.clip(eps - c + u_c - Cc - off, s_lo, s_hi),
                    np.clip(u_c - off + rad, s_lo, s_hi),
                    np.full(n, s_hi),
                ],
                axis=1,
            )
            p_hi = np.maximum(p_hi, p_lo)
            # forbidden = segment minus the (sorted) admissible pieces
            order = np.argsort(p_lo, axis=1)
            a_lo = np.take_along_axis(p_lo, order, axis=1)
            a_hi = np.take_along_axis(p_hi, order, axis=1)
            runmax = np.maximum.accumulate(a_hi, axis=1)
            gap_lo = np.concatenate([np.full((n, 1), s_lo), runmax], axis=1)
            gap_hi = np.concatenate([a_lo, np.full((n, 1), s_hi)], axis=1)
            forb_lo.append(gap_lo)
            forb_hi.append(np.maximum(gap_hi, gap_lo))
    F_lo = np.concatenate(forb_lo, axis=1)
    F_hi = np.concatenate(forb_hi, axis=1)
    forbidden = _union_lengths(F_lo, F_hi, c)
    return np.maximum(c - forbidden, 0.0)


def ball_mass(
    measure: MeasureModel, system: FlowSystem, center: FlowPoint, spec: BowenSpec
) -> float:
    """mu(Bowen ball) -- exact for product/Markov/point-mass/empirical."""
    measure.validate(system)
    spec.validate(system)
    if measure.kind == POINT_MASS:
        from .bowen import bowen_distance

        return 1.0 if bowen_distance(system, measure.point, center, spec) < spec.epsilon else 0.0
    if measure.kind == EMPIRICAL:
        from .bowen import bowen_distance

        w = measure.weights or tuple(1.0 / len(measure.orbit) for _ in measure.orbit)
        total = 0.0
        for pt, wt in zip(measure.orbit, w):
            if bowen_distance(system, pt, center, spec) < spec.epsilon:
                total += wt
        return total
    words = enumerate_words(system)
    probs = measure.word_probs(system, words)
    c = system.roof
    if _aligned_ok(system, center, spec):
        lo, hi = ball_slices_aligned(
            system, np.asarray([center.word], dtype=np.int16), words, spec
        )
        lengths = lo[0] + (c - hi[0])
    else:
        lengths = ball_admissible_lengths(system, center, words, spec)
    return float(np.dot(probs, lengths) / c)


def ball_mass_mc(
    measure: MeasureModel,
    system: FlowSystem,
    center: FlowPoint,
    spec: BowenSpec,
    samples: int = 2000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo ball mass with standard error (any sampleable measure)."""
    from .bowen import bowen_distance

    pts = measure.sample(system, samples, seed)
    hits = sum(
        1 for p in pts if bowen_distance(system, p, center, spec) < spec.epsilon
    )
    phat = hits / samples
    se = math.sqrt(max(phat * (1 - phat), 1.0 / samples) / samples)
    return phat, se


# -- partitions and covers ----------------------------------------------------


@dataclass(frozen=True)
class CylinderPiece:
    """Cylinder constraint on a coordinate range crossed with a height cell."""

    coord_lo: int
    coord_hi: int
    symbols: tuple[int, ...]
    h_lo: float
    h_hi: float

    def contains(self, system: FlowSystem, p: FlowPoint) -> bool:
        if not (self.h_lo <= p.height < self.h_hi):
            return False
        W = system.window
        for off, sym in enumerate(self.symbols):
            if p.word[self.coord_lo + off + W] != sym:
                return False
        return True


@dataclass
class PartitionSpec:
    """A finite Borel partition (or cover) by cylinder x height pieces.

    ``product_grid`` marks the canonical full grid over a coordinate range and
    an even height split, for which masses and entropies have closed forms.
    """

    system: FlowSystem
    coord_lo: int
    coord_hi: int
    height_cells: int
    diameter_bound: float
    disjoint: bool = True
    pieces: Optional[list[CylinderPiece]] = None

    @property
    def n_pieces(self) -> int:
        ncoords = self.coord_hi - self.coord_lo + 1
        return self.system.n_symbols**ncoords * self.height_cells

    def enumerate_pieces(self, cap: int = 200_000) -> list[CylinderPiece]:
        if self.pieces is not None:
            return self.pieces
        if self.n_pieces > cap:
            raise CapacityError(f"{self.n_pieces} pieces exceed cap {cap}")
        import itertools

        c = self.system.roof
        ncoords = self.coord_hi - self.coord_lo + 1
        out = []
        for combo in itertools.product(range(self.system.n_symbols), repeat=ncoords):
            for cell in range(self.height_cells):
                out.append(
                    CylinderPiece(
                        self.coord_lo,
                        self.coord_hi,
                        tuple(combo),
                        c * cell / self.height_cells,
                        c * (cell + 1) / self.height_cells,
                    )
                )
        return out


def cylinder_diameter_bound(system: FlowSystem, coord_lo: int, coord_hi: int, height_span: float) -> float:
    """Upper bound on the diameter of a cylinder x height-cell piece."""
    W = system.window
    inside = np.zeros(2 * W + 1, dtype=bool)
    inside[coord_lo + W : coord_hi + 1 + W] = True
    rho_max = 1.0
    tail = float(np.sum(system.weights[~inside])) * rho_max
    return tail + height_span


def grid_partition(system: FlowSystem, epsilon: float, piece_cap: int = 200_000) -> PartitionSpec:
    """Canonical partition with diameter <= epsilon: the smallest symbol
    radius whose weight tail leaves room, heights split into the cells the
    remaining budget allows."""
    if not system.is_symbolic:
        raise SchemaError("grid partitions are defined for symbolic systems")
    W = system.window
    radius = None
    for threshold in (0.75 * epsilon, epsilon):
        for r in range(0, W + 1):
            if cylinder_diameter_bound(system, -r, r, 0.0) < threshold:
                radius = r
                break
        if radius is not None:
            break
    if radius is None:
        raise FeasibilityError(
            f"no coordinate radius within the window achieves diameter {epsilon}"
        )
    slack = epsilon - cylinder_diameter_bound(system, -radius, radius, 0.0)
    cells = max(1, int(math.ceil(system.roof / slack)))
    part = PartitionSpec(
        system=system,
        coord_lo=-radius,
        coord_hi=radius,
        height_cells=cells,
        diameter_bound=cylinder_diameter_bound(system, -radius, radius, system.roof / cells),
    )
    if part.n_pieces > piece_cap:
        raise CapacityError(f"grid partition needs {part.n_pieces} pieces")
    return part


def _join_coords(part: PartitionSpec, n: int, tau: float) -> list[int]:
    """Window coordinates constrained by the n-th join (sparse when the
    shift stride exceeds the piece width)."""
    system = part.system
    c = system.roof
    shift = tau / c
    if abs(shift - round(shift)) > 1e-12:
        raise SchemaError("joins require tau to be a multiple of the roof height")
    shift = int(round(shift))
    coords = set()
    for j in range(n):
        for m in range(part.coord_lo + j * shift, part.coord_hi + j * shift + 1):
            if m <= system.window:
                coords.add(m)
    return sorted(coords)


def join_piece_masses(
    measure: MeasureModel, part: PartitionSpec, n: int, tau: float = 1.0
) -> np.ndarray:
    """Masses of the n-th join pieces (exact, cylinder algebra).

    The join of grid pieces under roof-multiple shifts constrains a (possibly
    sparse) coordinate set; shifted constraints beyond the window hit the
    zero-fill constant and drop out.  Only the mass multiset is returned.
    """
    system = part.system
    coords = _join_coords(part, n, tau)
    marg = measure.marginal(system)
    if measure.kind == MARKOV:
        lo, hi = coords[0], coords[-1]
        k = system.n_symbols
        if k ** (hi - lo + 1) > _WORD_ENUM_CAP:
            raise CapacityError("join enumeration exceeds cap")
        words = enumerate_words(system, lo, hi)
        sub = words[:, lo + system.window : hi + 1 + system.window]
        P = np.asarray(measure.transition, dtype=float)
        pi = np.asarray(measure.stationary, dtype=float)
        full = pi[sub[:, 0]].copy()
        for i in range(sub.shape[1] - 1):
            full *= P[sub[:, i], sub[:, i + 1]]
        # marginalize out unconstrained coordinates by aggregating patterns
        keep = [m - lo for m in coords]
        if len(keep) == sub.shape[1]:
            masses = full
        else:
            pattern = np.zeros(sub.shape[0], dtype=np.int64)
            for m in keep:
                pattern = pattern * k + sub[:, m]
            masses = np.bincount(pattern, weights=full)
            masses = masses[masses > 0]
    else:
        masses = np.asarray([1.0])
        for _ in coords:
            masses = np.multiply.outer(masses, marg).ravel()
    if part.height_cells > 1:
        cell = np.full(part.height_cells, 1.0 / part.height_cells)
        masses = np.multiply.outer(masses, cell).ravel()
    return masses


def partition_entropy_from_masses(masses: np.ndarray) -> float:
    m = masses[masses > 0]
    total = float(m.sum())
    if abs(total - 1.0) > 1e-9:
        raise FeasibilityError(f"partition masses sum to {total}, not 1")
    return float(-np.dot(m, np.log(m)))


def partition_entropy(measure: MeasureModel, part: PartitionSpec) -> float:
    """Shannon entropy H_mu of a partition, exact masses, nats."""
    masses = join_piece_masses(measure, part, 1)
    return partition_entropy_from_masses(masses)


def dynamical_partition_entropy(
    measure: MeasureModel, part: PartitionSpec, n: int, tau: float = 1.0
) -> tuple[list[float], float]:
    """The sequence H(P^m)/m for m = 1..n and the last value as the estimate.

    Subadditivity of the raw sequence is asserted on all computed pairs.
    """
    H = []
    for m in range(1, n + 1):
        H.append(partition_entropy_from_masses(join_piece_masses(measure, part, m, tau)))
    for a in range(1, n + 1):
        for b in range(1, n + 1 - a):
            if H[a + b - 1] > H[a - 1] + H[b - 1] + 1e-9:
                raise AssertionError(
                    f"join entropy not subadditive: H[{a + b}] > H[{a}] + H[{b}]"
                )
    seq = [H[m - 1] / m for m in range(1, n + 1)]
    return seq, seq[-1]


def renyi_id_profile(
    measure: MeasureModel,
    system: FlowSystem,
    eps_grid: Sequence[float],
    builder: Optional[Callable[[float], PartitionSpec]] = None,
) -> list[dict]:
    """H_mu(P_eps) over log(1/eps) for canonical diameter-<=eps partitions.

    The grid family upper-bounds the infimum over all such partitions, so the
    quotients are reported as an upper-bound family.
    """
    builder = builder or (lambda e: grid_partition(system, e))
    out = []
    for eps in eps_grid:
        part = builder(eps)
        if measure.kind == POINT_MASS:
            H = 0.0
        else:
            H = partition_entropy(measure, part)
        out.append(
            {
                "epsilon": eps,
                "entropy": H,
                "quotient": H / math.log(1.0 / eps) if eps < 1.0 else float("nan"),
                "pieces": part.n_pieces,
                "bound_kind": "upper-bound",
            }
        )
    return out


def shapira_count(
    measure: MeasureModel,
    part: PartitionSpec,
    n: int,
    delta: float,
    tau: float = 1.0,
    exact_cap: int = 1 << 22,
) -> int:
    """Minimum number of n-th join pieces whose union has mass >= delta.

    For partitions (disjoint pieces) the descending-mass greedy is exactly
    optimal.
    """
    if not (0.0 < delta < 1.0):
        raise SchemaError("delta must lie in (0, 1)")
    if not part.disjoint:
        raise CapacityError("overlapping covers need the explicit-piece path")
    masses = join_piece_masses(measure, part, n, tau)
    if masses.size > exact_cap:
        raise CapacityError("join too large")
    order = np.sort(masses)[::-1]
    cum = np.cumsum(order)
    count = int(np.searchsorted(cum, delta) + 1)
    if count > masses.size or cum[-1] < delta:
        raise FeasibilityError("total mass below delta")
    return count


# -- Katok counts --------------------------------------------------------------


def katok_count(
    measure: MeasureModel,
    system: FlowSystem,
    spec: BowenSpec,
    delta: float,
    cloud: PointCloud,
    mode: str = "greedy",
    exact_cap: int = 14,
) -> CountResult:
    """Minimum number of Bowen balls centered in the cloud with union mass
    > delta.  Exact union masses via the cylinder/height engine."""
    if not (0.0 < delta < 1.0):
        raise SchemaError("delta must lie in (0, 1)")
    measure.validate(system)
    spec.validate(system)
    if measure.kind in (POINT_MASS, EMPIRICAL):
        return _katok_atomic(measure, system, spec, delta, cloud, mode, exact_cap)
    if measure.kind not in (BERNOULLI, LEBESGUE, MARKOV):
        raise SchemaError("katok_count requires an exact or atomic measure")
    c = system.roof
    words = enumerate_words(system)
    probs = measure.word_probs(system, words)
    heights_used = sorted(set(p.height for p in cloud.points))
    two_channel = (
        spec.epsilon <= c / 2.0 + 1e-12
        and set(heights_used) <= {0.0, c / 2.0}
        and all(
            abs(round(float(t) / c) * c - float(t)) <= 1e-12 for t in spec.times(system)
        )
    )
    n_cand = len(cloud)
    if two_channel:
        # per (candidate, word): height-0 balls are [0, plo) u (phi, c);
        # height-c/2 balls are a middle interval of radius rad around c/2.
        # Rows are computed on demand (lazy greedy touches few candidates),
        # so the candidate pool can be as large as the word enumeration.
        shifts = [round(float(t) / c) for t in spec.times(system)]
        eps = spec.epsilon
        is_zero = np.asarray([p.height == 0.0 for p in cloud.points])
        binary = system.n_symbols == 2 and (
            system.kind == "susp-shift-finite"
            or (system.base is not None and system.base.kind == "susp-shift-finite")
        )
        if binary:
            # weighted Hamming by matvec: d(sig^m c, v) = S(v) + T(c') - 2 v.(w*c')
            snap_shifts = sorted({m for m in shifts} | {m + 1 for m in shifts})
            snaps = {
                m: system.shift_words(words, m).astype(np.float32)
                for m in snap_shifts
            }
            w32 = system.weights.astype(np.float32)
            Ssum = {m: snaps[m] @ w32 for m in snap_shifts}
        else:
            word_snaps = [system.shift_words(words, m) for m in shifts]
            word_snaps_next = [system.shift_words(words, m + 1) for m in shifts]
        _row_cache: dict[int, tuple] = {}

        def candidate_rows(i: int) -> tuple:
            hit = _row_cache.get(i)
            if hit is not None:
                return hit
            cw = cloud.words[i : i + 1]
            A = None
            B = None
            if binary:
                for m in shifts:
                    cb = system.shift_words(cw, m)[0].astype(np.float32)
                    t_c = float(cb @ w32)
                    a = Ssum[m] + t_c - 2.0 * (snaps[m] @ (w32 * cb))
                    b = Ssum[m + 1] + t_c - 2.0 * (snaps[m + 1] @ (w32 * cb))
                    A = a if A is None else np.maximum(A, a)
                    B = b if B is None else np.maximum(B, b)
                A = A.astype(np.float64)
                B = B.astype(np.float64)
            else:
                for m, vw, vw1 in zip(shifts, word_snaps, word_snaps_next):
                    cwm = system.shift_words(cw, m)[0]
                    a = system.word_distance_rows(cwm, vw)
                    b = system.word_distance_rows(cwm, vw1)
                    A = a if A is None else np.maximum(A, a)
                    B = b if B is None else np.maximum(B, b)
            if is_zero[i]:
                lo = np.clip(eps - A, 0.0, c)
                hi = np.maximum(np.clip(c - eps + B, 0.0, c), lo)
                r = np.zeros_like(lo)
            else:
                lo = np.zeros(words.shape[0])
                hi = np.full(words.shape[0], c)
                r = np.clip(eps - A, 0.0, c / 2.0)
            out = (lo, hi, r)
            if len(_row_cache) < 64:
                _row_cache[i] = out
            return out

        def state_mass(x, y, r):
            mlo = np.maximum(c / 2.0 - r, x)
            mhi = np.minimum(c / 2.0 + r, y)
            lengths = x + (c - y) + np.maximum(0.0, mhi - mlo)
            return float(np.dot(probs, lengths) / c)

        def union_mass(chosen: list[int]) -> float:
            if not chosen:
                return 0.0
            x = np.zeros(words.shape[0])
            y = np.full(words.shape[0], c)
            r = np.zeros(words.shape[0])
            for i in chosen:
                lo_i, hi_i, r_i = candidate_rows(i)
                x = np.maximum(x, lo_i)
                y = np.maximum(np.minimum(y, hi_i), x)
                r = np.maximum(r, r_i)
            return state_mass(x, y, r)

    else:
        covers = []
        for p in cloud.points:
            sets = ball_height_sets(system, p, words, spec)
            covers.append(sets)

        def union_mass(chosen: list[int]) -> float:
            if not chosen:
                return 0.0
            acc = [[] for _ in range(words.shape[0])]
            for i in chosen:
                for w in range(words.shape[0]):
                    acc[w] = _union_sets(acc[w], covers[i][w])
            return float(
                np.dot(probs, np.asarray([_set_length(s) for s in acc])) / c
            )

    if mode == "greedy":
        chosen: list[int] = []
        trajectory: list[float] = []
        current = 0.0
        if two_channel:
            import heapq

            x = np.zeros(words.shape[0])
            y = np.full(words.shape[0], c)
            r = np.zeros(words.shape[0])

            def gain_of(i):
                lo_i, hi_i, r_i = candidate_rows(i)
                x2 = np.maximum(x, lo_i)
                m2 = state_mass(
                    x2,
                    np.maximum(np.minimum(y, hi_i), x2),
                    np.maximum(r, r_i),
                )
                return m2 - current

            # lazy greedy: union mass is submodular, so stale heap gains only
            # overestimate and the eager argmax sequence is reproduced exactly
            finite_rho = system.kind == "susp-shift-finite" or (
                system.base is not None and system.base.kind == "susp-shift-finite"
            )
            uniform = finite_rho and bool(np.ptp(probs) == 0.0)
            if uniform:
                # uniform word law: ball mass is invariant under symbol
                # translation, so the empty-state gain only depends on the
                # candidate height; one evaluation per height class seeds all
                seed_gain = {}
                heap = []
                for i in range(n_cand):
                    h = cloud.points[i].height
                    if h not in seed_gain:
                        seed_gain[h] = gain_of(i)
                    heap.append((-seed_gain[h], i))
                heapq.heapify(heap)
            else:
                heap = [(-gain_of(i), i) for i in range(n_cand)]
                heapq.heapify(heap)
            while current <= delta:
                best_i = -1
                while heap:
                    neg, i = heapq.heappop(heap)
                    fresh = gain_of(i)
                    if not heap or -heap[0][0] <= fresh + 1e-15:
                        if fresh > 1e-15:
                            best_i = i
                        break
                    heapq.heappush(heap, (-fresh, i))
                if best_i < 0:
                    raise FeasibilityError(
                        f"cloud cannot reach mass {delta} (stalled at {current:.6f})"
                    )
                chosen.append(best_i)
                lo_b, hi_b, r_b = candidate_rows(best_i)
                x = np.maximum(x, lo_b)
                y = np.maximum(np.minimum(y, hi_b), x)
                r = np.maximum(r, r_b)
                current = state_mass(x, y, r)
                trajectory.append(current)
        else:
            while current <= delta:
                best_gain, best_i = 0.0, -1
                for i in range(n_cand):
                    if i in chosen:
                        continue
                    m2 = union_mass(chosen + [i])
                    if m2 - current > best_gain + 1e-15:
                        best_gain, best_i = m2 - current, i
                if best_i < 0:
                    raise FeasibilityError(f"cloud cannot reach mass {delta}")
                chosen.append(best_i)
                current = union_mass(chosen)
                trajectory.append(current)
        return CountResult(len(chosen), chosen, "greedy", "upper-bound",
                           diagnostics={"union_mass": current,
                                        "mass_trajectory": trajectory})
    if mode != "exact":
        raise SchemaError(f"unknown mode {mode!r}")
    if n_cand > exact_cap:
        raise CapacityError(f"exact katok capped at {exact_cap} candidates")
    import itertools as it

    for size in range(1, n_cand + 1):
        for combo in it.combinations(range(n_cand), size):
            if union_mass(list(combo)) > delta:
                return CountResult(size, list(combo), "exact", "exact")
    raise FeasibilityError(f"cloud cannot reach mass {delta}")


def _katok_atomic(measure, system, spec, delta, cloud, mode, exact_cap) -> CountResult:
    """Katok counts for finite-support measures: weighted max coverage of
    the atoms by candidate balls."""
    from .bowen import bowen_distance

    if measure.kind == POINT_MASS:
        atoms = [measure.point]
        weights = [1.0]
    else:
        atoms = list(measure.orbit)
        weights = list(
            measure.weights or [1.0 / len(measure.orbit)] * len(measure.orbit)
        )
    covers = []
    for p in cloud.points:
        mask = [
            bowen_distance(system, a, p, spec) < spec.epsilon for a in atoms
        ]
        covers.append(np.asarray(mask))
    w = np.asarray(weights)
    chosen: list[int] = []
    covered = np.zeros(len(atoms), dtype=bool)
    while float(w[covered].sum()) <= delta:
        gains = [float(w[c & ~covered].sum()) if i not in chosen else -1.0
                 for i, c in enumerate(covers)]
        best = int(np.argmax(gains))
        if gains[best] <= 0.0:
            raise FeasibilityError(f"cloud cannot reach mass {delta}")
        chosen.append(best)
        covered |= covers[best]
    return CountResult(len(chosen), chosen, "greedy", "upper-bound",
                       diagnostics={"union_mass": float(w[covered].sum())})


def _union_sets(a: list[tuple[float, float]], b: list[tuple[float, float]]):
    pieces = sorted(a + b)
    if not pieces:
        return []
    merged = [pieces[0]]
    for lo, hi in pieces[1:]:
        if lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def katok_counts_multi(
    measure: MeasureModel,
    system: FlowSystem,
    spec: BowenSpec,
    deltas: Sequence[float],
    cloud: PointCloud,
) -> dict[float, int]:
    """Greedy Katok counts at several deltas from one trajectory.

    The greedy pick sequence does not depend on delta, so R(delta) is the
    first prefix whose union mass exceeds delta (this also makes the
    delta-monotonicity of the counts structural).
    """
    traj = _sparse_binary_trajectory(measure, system, spec, max(deltas), cloud)
    if traj is None:
        res = katok_count(measure, system, spec, max(deltas), cloud, mode="greedy")
        traj = res.diagnostics["mass_trajectory"]
    out = {}
    for d in sorted(deltas):
        out[d] = next(i + 1 for i, m in enumerate(traj) if m > d)
    return out


# -- sparse exact engine for binary suspensions ---------------------------------


def _admissible_flip_sets(
    W: int, eps: float, views: Sequence[int], coords: Sequence[int], pos: dict
) -> tuple[np.ndarray, np.ndarray]:
    """All flip sets D over ``coords`` whose weighted view sums stay < eps.

    A view at shift j weighs a flipped coordinate m by 2^{-|m-j|} (0 beyond
    the window).  Returns bitmasks (via ``pos``) and the max view sum per set.
    """
    weights = []
    order = sorted(coords, key=lambda m: -max(2.0 ** (-abs(m - j)) for j in views))
    for m in order:
        weights.append(
            [2.0 ** (-abs(m - j)) if abs(m - j) <= W else 0.0 for j in views]
        )
    nv = len(views)
    masks: list[int] = []
    values: list[float] = []
    sums = [0.0] * nv

    def rec(i: int, mask: int):
        if i == len(order):
            masks.append(mask)
            values.append(max(sums))
            return
        rec(i + 1, mask)  # skip coordinate
        w = weights[i]
        if all(sums[v] + w[v] < eps for v in range(nv)):
            for v in range(nv):
                sums[v] += w[v]
            rec(i + 1, mask | (1 << pos[order[i]]))
            for v in range(nv):
                sums[v] -= w[v]

    rec(0, 0)
    return np.asarray(masks, dtype=np.int64), np.asarray(values)


def _sparse_binary_trajectory(
    measure: MeasureModel,
    system: FlowSystem,
    spec: BowenSpec,
    delta: float,
    cloud: PointCloud,
) -> Optional[list[float]]:
    """Greedy union-mass trajectory for binary suspensions, sparse and exact.

    Works without enumerating words: by symbol translation, the admissible
    mismatch sets of a Bowen ball do not depend on its center, so a
    candidate's nonzero height slices live at word indices idx(center) XOR
    idx(D).  Supports candidate heights {0, roof/2} and roof-aligned sampled
    times; returns None when the preconditions fail.
    """
    finite = system.kind == "susp-shift-finite" or (
        system.base is not None and system.base.kind == "susp-shift-finite"
    )
    if not finite or system.n_symbols != 2:
        return None
    if measure.kind not in (BERNOULLI, LEBESGUE):
        return None
    c = system.roof
    eps = spec.epsilon
    if eps > c / 2.0 + 1e-12:
        return None
    if not set(p.height for p in cloud.points) <= {0.0, c / 2.0}:
        return None
    shifts = []
    for t in spec.times(system):
        m = round(float(t) / c)
        if abs(m * c - float(t)) > 1e-12:
            return None
        shifts.append(m)
    W = system.window
    # the suffix-channel model needs the window-edge symbol of every
    # height-0 candidate to match the zero fill
    if any(p.word[2 * W] != 0 for p in cloud.points if p.height == 0.0):
        return None
    width = 2 * W + 1
    nwords = 1 << width
    pos = {m: m + W for m in range(-W, W + 1)}
    # prefix/middle channel: flips of the center word itself
    D_masks, A_vals = _admissible_flip_sets(W, eps, shifts, list(range(-W, W + 1)), pos)
    lo_vals = np.clip(eps - A_vals, 0.0, c)
    rad_vals = np.clip(eps - A_vals, 0.0, c / 2.0)
    # suffix channel: w_{m+1} = c_m xor e_m, so store e at pos(m) + 1
    pos_shift = {m: m + W + 1 for m in range(-W, W)}
    E_masks, B_vals = _admissible_flip_sets(W, eps, shifts, list(range(-W, W)), pos_shift)
    hi_vals = np.clip(c - eps + B_vals, 0.0, c)
    p_marg = measure.marginal(system)
    if float(np.ptp(p_marg)) == 0.0:
        probs = None  # uniform: constant 1 / nwords
        p_const = 1.0 / nwords
    else:
        probs = None
        p_const = None

    def word_probs_at(idx: np.ndarray) -> np.ndarray:
        if p_const is not None:
            return np.full(idx.shape, p_const)
        ones = np.bitwise_count(idx.astype(np.uint64)).astype(np.int64)
        return (p_marg[1] ** ones) * (p_marg[0] ** (width - ones))

    def word_index(word: tuple[int, ...]) -> int:
        out = 0
        for m in range(-W, W + 1):
            if word[m + W]:
                out |= 1 << pos[m]
        return out

    x = np.zeros(nwords, dtype=np.float32)
    y = np.full(nwords, c, dtype=np.float32)
    r = np.zeros(nwords, dtype=np.float32)
    low_mask = (1 << (2 * W)) - 1  # drop the topmost coordinate before shifting

    cand_idx = [word_index(p.word) for p in cloud.points]
    cand_mid = [p.height != 0.0 for p in cloud.points]

    def rows_of(i: int):
        ci = cand_idx[i]
        if cand_mid[i]:
            return (ci ^ D_masks), None
        rowsE = ((ci & low_mask) << 1) ^ E_masks
        rowsE = np.concatenate([rowsE, rowsE | 1])
        return (ci ^ D_masks), rowsE

    lo32 = lo_vals.astype(np.float32)
    rad32 = rad_vals.astype(np.float32)
    hi32 = np.concatenate([hi_vals, hi_vals]).astype(np.float32)

    def lengths_at(idx: np.ndarray) -> np.ndarray:
        xs = x[idx].astype(np.float64)
        ys = y[idx].astype(np.float64)
        rs = r[idx].astype(np.float64)
        mlo = np.maximum(c / 2.0 - rs, xs)
        mhi = np.minimum(c / 2.0 + rs, ys)
        # x, y are not mutually clamped; cap covers the y < x saturated case
        return np.minimum(xs + (c - ys) + np.maximum(0.0, mhi - mlo), c)

    def apply_and_delta(i: int, keep: bool) -> float:
        rowsD, rowsE = rows_of(i)
        if rowsE is None:
            affected = rowsD
        else:
            affected = np.unique(np.concatenate([rowsD, rowsE]))
        before = lengths_at(affected)
        if cand_mid[i]:
            oldD = r[rowsD].copy()
            r[rowsD] = np.maximum(oldD, rad32)
            oldE = None
        else:
            oldD = x[rowsD].copy()
            x[rowsD] = np.maximum(oldD, lo32)
            oldE = y[rowsE].copy()
            y[rowsE] = np.minimum(oldE, hi32)
        after = lengths_at(affected)
        delta_mass = float(np.dot(word_probs_at(affected), after - before) / c)
        if not keep:
            if cand_mid[i]:
                r[rowsD] = oldD
            else:
                x[rowsD] = oldD
                y[rowsE] = oldE
        return delta_mass

    import heapq

    n_cand = len(cloud)
    if p_const is not None:
        seed_gain = {}
        heap = []
        for i in range(n_cand):
            h = cloud.points[i].height
            if h not in seed_gain:
                seed_gain[h] = apply_and_delta(i, keep=False)
            heap.append((-seed_gain[h], i))
        heapq.heapify(heap)
    else:
        heap = [(-apply_and_delta(i, keep=False), i) for i in range(n_cand)]
        heapq.heapify(heap)
    current = 0.0
    trajectory: list[float] = []
    while current <= delta:
        best_i = -1
        while heap:
            neg, i = heapq.heappop(heap)
            fresh = apply_and_delta(i, keep=False)
            if not heap or -heap[0][0] <= fresh + 1e-15:
                if fresh > 1e-15:
                    best_i = i
                break
            heapq.heappush(heap, (-fresh, i))
        if best_i < 0:
            raise FeasibilityError(
                f"cloud cannot reach mass {delta} (stalled at {current:.6f})"
            )
        current += apply_and_delta(best_i, keep=True)
        trajectory.append(current)
    return trajectory


def katok_entropy_profile(
    measure: MeasureModel,
    system: FlowSystem,
    epsilon: float,
    delta: float,
    orders: Sequence[int],
    cloud: PointCloud,
    tau: float = 1.0,
    mode: str = "greedy",
) -> dict:
    """Per-order Katok counts and the growth-rate estimates.

    Returns raw counts R(n), per-order slopes log R / (n tau), their max/min
    over the order range, and the least-squares slope of log R against time.
    """
    counts = []
    for n in orders:
        spec = BowenSpec(mode="sampled", epsilon=epsilon, n=int(n), tau=tau)
        if mode == "greedy":
            counts.append(katok_counts_multi(measure, system, spec, [delta], cloud)[delta])
        else:
            counts.append(katok_count(measure, system, spec, delta, cloud, mode=mode).value)
    return _katok_rates(orders, counts, tau)


def _katok_rates(orders, counts, tau) -> dict:
    times = np.asarray([n * tau for n in orders], dtype=float)
    logs = np.log(np.asarray(counts, dtype=float))
    slopes = logs / times
    ls = float(np.polyfit(times, logs, 1)[0]) if len(orders) >= 2 else float("nan")
    return {
        "orders": list(orders),
        "counts": [int(v) for v in counts],
        "slopes": [float(s) for s in slopes],
        "upper": float(np.max(slopes)),
        "lower": float(np.min(slopes)),
        "ls_slope": ls,
    }


def katok_profiles_multi(
    measure: MeasureModel,
    system: FlowSystem,
    epsilon: float,
    deltas: Sequence[float],
    orders: Sequence[int],
    cloud: PointCloud,
    tau: float = 1.0,
) -> dict[float, dict]:
    """Greedy Katok profiles at several deltas, one trajectory per order."""
    per_delta: dict[float, list[int]] = {d: [] for d in deltas}
    for n in orders:
        spec = BowenSpec(mode="sampled", epsilon=epsilon, n=int(n), tau=tau)
        counts = katok_counts_multi(measure, system, spec, deltas, cloud)
        for d in deltas:
            per_delta[d].append(counts[d])
    return {d: _katok_rates(orders, per_delta[d], tau) for d in deltas}


# -- Brin-Katok local entropy ---------------------------------------------------


def brin_katok_local(
    measure: MeasureModel,
    system: FlowSystem,
    x: FlowPoint,
    epsilon: float,
    orders: Sequence[int],
    mode: str = "sampled",
    tau: float = 1.0,
) -> dict:
    """Sequence a_n = -log mu(B_n(x, eps))/ (n tau); upper/lower estimates are
    the max/min over the tail half of the computed orders."""
    seq = []
    masses = []
    for n in orders:
        if mode == "sampled":
            spec = BowenSpec(mode="sampled", epsilon=epsilon, n=int(n), tau=tau)
            extent = n * tau
        else:
            spec = BowenSpec(mode="flow", epsilon=epsilon, t=float(n))
            extent = float(n)
        m = ball_mass(measure, system, x, spec)
        masses.append(m)
        if m <= 0.0:
            seq.append(float("inf"))
        else:
            seq.append(-math.log(m) / extent)
    tail = seq[len(seq) // 2 :]
    return {
        "orders": list(orders),
        "masses": masses,
        "sequence": seq,
        "upper": max(tail),
        "lower": min(tail),
    }

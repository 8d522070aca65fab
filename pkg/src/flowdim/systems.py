"""Phase spaces, metrics and flow evaluators for the built-in systems.

Four system kinds are supported:

* ``susp-shift-finite``   -- suspension of the full shift on k symbols under a
  constant roof, with symbolic coordinates truncated to a window ``[-W, W]``.
* ``susp-shift-interval`` -- same suspension but the alphabet is the grid
  ``{0, 1/g, ..., 1}`` and symbols are compared by absolute difference.
* ``torus-rotation``      -- rotation flow ``x -> x + t*alpha  (mod 1)`` on a
  torus of arbitrary dimension (an isometric flow).
* ``time-one-wrapper``    -- a wrapper exposing only the integer-time samples
  of a base system (``evolve(x, t) = base.evolve(x, floor(t))``); it is not
  certified uniformly Lipschitz and strict flow/sampling comparisons skip it.

Shifts act on the finite window with zero fill: symbols entering from outside
the window are the fixed symbol 0.  The resulting truncation error of the
base metric is at most ``2**(1-W)`` and is exposed as
``FlowSystem.truncation_bound``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import FeasibilityError, SchemaError

SUSP_FINITE = "susp-shift-finite"
SUSP_INTERVAL = "susp-shift-interval"
TORUS = "torus-rotation"
TIME_ONE = "time-one-wrapper"

_KINDS = (SUSP_FINITE, SUSP_INTERVAL, TORUS, TIME_ONE)


@dataclass(frozen=True)
class SystemDescriptor:
    """Declarative description of a built-in system.

    Fields irrelevant to a kind are ignored (e.g. ``rotation`` for
    suspensions).  ``base`` holds the wrapped descriptor for
    ``time-one-wrapper``.
    """

    kind: str
    alphabet_size: int = 2
    grid_levels: int = 1
    window: int = 6
    roof: float = 1.0
    rotation: tuple[float, ...] = ()
    base: Optional["SystemDescriptor"] = None

    def validate(self) -> None:
        if self.kind not in _KINDS:
            raise SchemaError(f"unknown system kind {self.kind!r}")
        if self.kind == TIME_ONE:
            if self.base is None:
                raise SchemaError("time-one-wrapper requires a base descriptor")
            if self.base.kind == TIME_ONE:
                raise SchemaError("time-one-wrapper cannot wrap another wrapper")
            self.base.validate()
            return
        if self.kind == TORUS:
            if not self.rotation:
                raise SchemaError("torus-rotation requires a nonempty rotation vector")
            if any(not (0.0 <= a < 1.0) for a in self.rotation):
                raise SchemaError("rotation entries must lie in [0, 1)")
            return
        if self.window < 1:
            raise SchemaError("window W must be >= 1")
        if self.roof <= 0:
            raise SchemaError("roof height c must be > 0")
        if self.kind == SUSP_FINITE and self.alphabet_size < 2:
            raise SchemaError("susp-shift-finite requires alphabet_size k >= 2")
        if self.kind == SUSP_INTERVAL and self.grid_levels < 1:
            raise SchemaError("susp-shift-interval requires grid_levels g >= 1")


@dataclass(frozen=True)
class FlowPoint:
    """A point of a built-in system.

    Suspension systems: ``word`` maps window offsets ``i + W -> symbol index``
    and ``height`` lies in ``[0, roof)``.  Torus systems: ``coords`` holds the
    angle vector and ``word``/``height`` are unused.
    """

    word: Optional[tuple[int, ...]] = None
    height: float = 0.0
    coords: Optional[tuple[float, ...]] = None

    def key(self) -> tuple:
        """Canonical encoding used for deduplication and lexicographic order."""
        if self.coords is not None:
            return ("torus", self.coords)
        return ("susp", self.word, self.height)


@dataclass(frozen=True)
class LipschitzEstimate:
    t0: float
    L_hat: float
    sample_size: int
    max_ratio_pair: tuple[FlowPoint, FlowPoint]


class FlowSystem:
    """Evaluator bundle for one system: evolve, distance, sampling.

    Construction is pure; all methods are pure functions of their inputs, so
    instances are safe to share across threads.
    """

    def __init__(self, descriptor: SystemDescriptor):
        descriptor.validate()
        self.descriptor = descriptor
        self.kind = descriptor.kind
        if self.kind == TIME_ONE:
            self.base = FlowSystem(descriptor.base)
            self.roof = self.base.roof
            self.window = self.base.window
            self.weights = self.base.weights
            self.symbol_values = self.base.symbol_values
            self.n_symbols = self.base.n_symbols
            self.dim = self.base.dim
            self.lipschitz_certified = False
            self.is_symbolic = self.base.is_symbolic
            return
        self.base = None
        self.lipschitz_certified = True
        if self.kind == TORUS:
            self.dim = len(descriptor.rotation)
            self.rotation = np.asarray(descriptor.rotation, dtype=float)
            self.roof = 1.0
            self.window = 0
            self.weights = np.zeros(0)
            self.symbol_values = np.zeros(0)
            self.n_symbols = 0
            self.is_symbolic = False
            return
        self.is_symbolic = True
        self.dim = 0
        self.roof = float(descriptor.roof)
        self.window = int(descriptor.window)
        offsets = np.arange(-self.window, self.window + 1)
        self.weights = np.power(2.0, -np.abs(offsets).astype(float))
        if self.kind == SUSP_FINITE:
            self.n_symbols = int(descriptor.alphabet_size)
            # distance between distinct symbols is 1 (discrete rho)
            self.symbol_values = np.zeros(self.n_symbols)
        else:
            g = int(descriptor.grid_levels)
            self.n_symbols = g + 1
            self.symbol_values = np.arange(g + 1, dtype=float) / g

    # -- invariants ---------------------------------------------------------

    @property
    def truncation_bound(self) -> float:
        """Tail of the weight series beyond the window (0 for torus)."""
        if not self.is_symbolic:
            return 0.0
        return 2.0 ** (1 - self.window)

    def check_epsilon(self, epsilon: float, strict: bool = False) -> bool:
        """Whether ``epsilon`` clears the truncation precondition (> 4*bound).

        With ``strict=True`` a violation raises instead of returning False;
        callers that keep going record the flag in their diagnostics.
        """
        ok = epsilon > 4.0 * self.truncation_bound
        if strict and not ok:
            raise FeasibilityError(
                f"epsilon={epsilon} does not clear 4*truncation_bound="
                f"{4.0 * self.truncation_bound} (window too small)"
            )
        return ok

    @property
    def time_grid_step(self) -> float:
        """Grid step for any 'max over s in [0, t]' evaluation."""
        return min(0.1, self.roof / 10.0)

    def time_grid(self, t: float) -> np.ndarray:
        """Grid over [0, t] with the canonical step, endpoint included."""
        if t <= 0:
            return np.array([0.0])
        step = self.time_grid_step
        count = int(math.ceil(t / step))
        grid = np.linspace(0.0, t, count + 1)
        return grid

    # -- evolution ----------------------------------------------------------

    def shift_words(self, words: np.ndarray, m: int) -> np.ndarray:
        """Apply the zero-fill window shift ``sigma**m`` to a word batch."""
        if m == 0:
            return words
        out = np.zeros_like(words)
        width = words.shape[-1]
        if m > 0:
            if m < width:
                out[..., : width - m] = words[..., m:]
        else:
            if -m < width:
                out[..., -m:] = words[..., : width + m]
        return out

    def evolve_batch(
        self, words: np.ndarray, heights: np.ndarray, t: float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Evolve a suspension batch by time t; returns (words, heights)."""
        if self.kind == TIME_ONE:
            return self.base.evolve_batch(words, heights, math.floor(t))
        total = heights + t
        m = np.floor(total / self.roof).astype(int)
        s = total - m * self.roof
        # guard against roundoff landing exactly on the roof
        carry = s >= self.roof
        m[carry] += 1
        s[carry] -= self.roof
        out = np.empty_like(words)
        for mv in np.unique(m):
            mask = m == mv
            out[mask] = self.shift_words(words[mask], int(mv))
        return out, s

    def evolve(self, x: FlowPoint, t: float) -> FlowPoint:
        """Flow the point by time t (negative t allowed)."""
        if self.kind == TORUS:
            coords = np.mod(np.asarray(x.coords) + t * self.rotation, 1.0)
            return FlowPoint(coords=tuple(coords.tolist()))
        if self.kind == TIME_ONE:
            return self.base.evolve(x, math.floor(t))
        words = np.asarray([x.word], dtype=np.int16)
        heights = np.asarray([x.height], dtype=float)
        w, s = self.evolve_batch(words, heights, t)
        return FlowPoint(word=tuple(int(v) for v in w[0]), height=float(s[0]))

    # -- distance -----------------------------------------------------------

    def base_word_distance(self, a: np.ndarray, b: np.ndarray) -> float:
        """Weighted symbolic distance d_Y between two window words."""
        if self.kind == SUSP_FINITE or (self.base and self.base.kind == SUSP_FINITE):
            mism = (a != b).astype(float)
        else:
            mism = np.abs(self.symbol_values[a] - self.symbol_values[b])
        return float(np.dot(self.weights, mism))

    def _susp_distance(self, wa, sa, wb, sb) -> float:
        c = self.roof
        direct = self.base_word_distance(wa, wb) + abs(sa - sb)
        fwd = self.base_word_distance(self.shift_words(wa, 1), wb) + (c - sa) + sb
        bwd = self.base_word_distance(wa, self.shift_words(wb, 1)) + sa + (c - sb)
        return min(direct, fwd, bwd)

    def distance(self, x: FlowPoint, y: FlowPoint) -> float:
        """Base metric d on the phase space."""
        if self.kind == TIME_ONE:
            return self.base.distance(x, y)
        if self.kind == TORUS:
            if x.coords is None or y.coords is None:
                raise SchemaError("torus distance requires torus points")
            delta = np.abs(np.asarray(x.coords) - np.asarray(y.coords))
            return float(np.max(np.minimum(delta, 1.0 - delta)))
        if x.word is None or y.word is None:
            raise SchemaError("suspension distance requires symbolic points")
        wa = np.asarray(x.word, dtype=np.int16)
        wb = np.asarray(y.word, dtype=np.int16)
        return self._susp_distance(wa, x.height, wb, y.height)

    def word_distance_matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Pairwise d_Y between word batches A (N,C) and B (M,C)."""
        if self.kind == SUSP_FINITE or (self.base and self.base.kind == SUSP_FINITE):
            # weighted Hamming via one-hot matmul: fast path for big batches
            n_sym = self.n_symbols
            total = float(self.weights.sum())
            agree = np.zeros((A.shape[0], B.shape[0]))
            for s in range(n_sym):
                xa = (A == s).astype(np.float64) * self.weights
                xb = (B == s).astype(np.float64)
                agree += xa @ xb.T
            return total - agree
        va = self.symbol_values[A]
        vb = self.symbol_values[B]
        out = np.zeros((A.shape[0], B.shape[0]))
        # chunk rows to bound the broadcast buffer
        chunk = max(1, int(4e6 // max(1, B.shape[0] * A.shape[1])))
        for lo in range(0, A.shape[0], chunk):
            hi = min(lo + chunk, A.shape[0])
            diff = np.abs(va[lo:hi, None, :] - vb[None, :, :])
            out[lo:hi] = diff @ self.weights
        return out

    def word_distance_rows(self, word: np.ndarray, batch: np.ndarray) -> np.ndarray:
        """d_Y from one word to each row of a batch (no one-hot staging)."""
        if self.kind == SUSP_FINITE or (self.base and self.base.kind == SUSP_FINITE):
            return (batch != word[None, :]).astype(np.float64) @ self.weights
        diff = np.abs(self.symbol_values[batch] - self.symbol_values[word][None, :])
        return diff @ self.weights

    def distance_matrix(
        self,
        wa: np.ndarray,
        sa: np.ndarray,
        wb: np.ndarray,
        sb: np.ndarray,
    ) -> np.ndarray:
        """Pairwise suspension distance between two batches."""
        c = self.roof
        dh = np.abs(sa[:, None] - sb[None, :])
        direct = self.word_distance_matrix(wa, wb) + dh
        fwd = (
            self.word_distance_matrix(self.shift_words(wa, 1), wb)
            + (c - sa)[:, None]
            + sb[None, :]
        )
        bwd = (
            self.word_distance_matrix(wa, self.shift_words(wb, 1))
            + sa[:, None]
            + (c - sb)[None, :]
        )
        return np.minimum(direct, np.minimum(fwd, bwd))

    def torus_distance_matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        delta = np.abs(A[:, None, :] - B[None, :, :])
        return np.max(np.minimum(delta, 1.0 - delta), axis=2)

    # -- sampling -----------------------------------------------------------

    def sample_points(self, count: int, seed: int) -> list[FlowPoint]:
        """Deterministic point sample; dyadic heights keep distances exact."""
        if self.kind == TIME_ONE:
            return self.base.sample_points(count, seed)
        rng = np.random.default_rng(seed)
        pts = []
        if self.kind == TORUS:
            coords = rng.integers(0, 1024, size=(count, self.dim)) / 1024.0
            for row in coords:
                pts.append(FlowPoint(coords=tuple(row.tolist())))
            return pts
        width = 2 * self.window + 1
        words = rng.integers(0, self.n_symbols, size=(count, width))
        heights = rng.integers(0, 64, size=count) / 64.0 * self.roof
        for row, h in zip(words, heights):
            pts.append(FlowPoint(word=tuple(int(v) for v in row), height=float(h)))
        return pts

    def zero_point(self) -> FlowPoint:
        if self.kind == TIME_ONE:
            return self.base.zero_point()
        if self.kind == TORUS:
            return FlowPoint(coords=(0.0,) * self.dim)
        return FlowPoint(word=(0,) * (2 * self.window + 1), height=0.0)


def make_system(descriptor: SystemDescriptor) -> FlowSystem:
    """Build the evaluator bundle for a descriptor (pure and repeatable)."""
    return FlowSystem(descriptor)


def _structured_pairs(system: FlowSystem) -> list[tuple[FlowPoint, FlowPoint]]:
    """Single-coordinate perturbation pairs: the extremal cases for window
    shifts, included so the sampled Lipschitz sup reaches the true maximum."""
    if not system.is_symbolic:
        return []
    zero = system.zero_point()
    width = 2 * system.window + 1
    pairs = []
    for i in range(width):
        word = [0] * width
        word[i] = system.n_symbols - 1
        pairs.append((zero, FlowPoint(word=tuple(word), height=0.0)))
    return pairs


def estimate_lipschitz(
    system: FlowSystem, t0: float, pairs: int, seed: int
) -> LipschitzEstimate:
    """Sampled Lipschitz constant sup d(phi_s x, phi_s y)/d(x, y), s in [0, t0].

    The s-grid step is at most 0.05 * roof.  Degenerate pairs (d = 0) are
    skipped; it is an error if every sampled pair is degenerate.
    """
    if t0 <= 0:
        raise SchemaError("t0 must be positive")
    if pairs < 1:
        raise SchemaError("need at least one pair")
    pts = system.sample_points(2 * pairs, seed)
    cand = list(zip(pts[:pairs], pts[pairs:])) + _structured_pairs(system)
    step = 0.05 * (system.roof if system.is_symbolic else 1.0)
    count = int(math.ceil(t0 / step))
    grid = np.linspace(0.0, t0, count + 1)
    best = 0.0
    best_pair = None
    used = 0
    for x, y in cand:
        d0 = system.distance(x, y)
        if d0 <= 0.0:
            continue
        used += 1
        for s in grid:
            ratio = system.distance(system.evolve(x, float(s)), system.evolve(y, float(s))) / d0
            if ratio > best:
                best = ratio
                best_pair = (x, y)
    if used == 0:
        raise FeasibilityError("all sampled pairs degenerate (d(x, y) = 0)")
    return LipschitzEstimate(t0=t0, L_hat=best, sample_size=used, max_ratio_pair=best_pair)

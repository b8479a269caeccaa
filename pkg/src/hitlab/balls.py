"""Metric balls for the circle doubling map and their dyadic sandwich.

The doubling map ``x -> 2x mod 1`` is coded by the partition
``{[0, 1/2), [1/2, 1)}``, so the generation-n dyadic intervals are exactly
the n-cylinders. A ball is the open arc ``(z - r, z + r) mod 1``. Its inner
approximation collects the dyadic cells inside the arc and its outer
approximation the cells that meet it. Since ``U^- c B c U^+`` the hitting
times are ordered, ``tau(U^+) <= tau(B) <= tau(U^-)``, which brackets every
survival probability of the ball by those of two cylinder unions.

All arc arithmetic is done in exact rationals. The invariant measure is the
image of a Bernoulli measure on binary digits (Lebesgue for weights 1/2).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .engine import compile_hole, log_survival, sample_streams
from .measures import MeasureModel, Number, cylinder_measure
from .recurrence import Extrapolation, ThetaEstimate, extrapolate_limit, hitting_horizon
from .symbolic import CapExceededError, HoleSpec, PointSpec, SymbolicSystem, Word

CELL_CAP = 2 ** 40


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class IntervalSystem:
    """The doubling map on ``R/Z`` with its two-interval coding."""

    name: str = "doubling"

    @property
    def symbolic(self) -> SymbolicSystem:
        return SymbolicSystem.full_shift(2)

    @staticmethod
    def apply(x: Fraction) -> Fraction:
        y = 2 * x
        return y - math.floor(y)

    @staticmethod
    def distance(x: Fraction, y: Fraction) -> Fraction:
        d = abs(x - y) % 1
        return min(d, 1 - d)

    def code(self, x: Fraction, n: int) -> Word:
        """First ``n`` coding symbols of ``x`` along its forward orbit."""
        x = _frac(x) % 1
        out = []
        for _ in range(n):
            out.append(0 if x < Fraction(1, 2) else 1)
            x = self.apply(x)
        return tuple(out)

    @staticmethod
    def cell_index(x: Fraction, n: int) -> int:
        return math.floor((_frac(x) % 1) * 2 ** n)

    def coding_mismatches(self, xs: Iterable[Fraction], n_max: int = 12) -> int:
        """Count (x, n) pairs whose dyadic cell differs from the coding cylinder."""
        bad = 0
        for x in xs:
            for n in range(1, n_max + 1):
                if word_to_index(self.code(x, n)) != self.cell_index(x, n):
                    bad += 1
        return bad


def word_to_index(w: Word) -> int:
    j = 0
    for s in w:
        j = 2 * j + s
    return j


def index_to_word(j: int, n: int) -> Word:
    return tuple((j >> (n - 1 - i)) & 1 for i in range(n))


def random_rationals(count: int, seed: int, max_den: int = 2 ** 20) -> list[Fraction]:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    dens = rng.integers(1, max_den, size=count)
    return [Fraction(int(rng.integers(0, d)), int(d)) for d in dens]


def coding_exactness(samples: int = 10_000, n_max: int = 12, seed: int = 0) -> int:
    """Mismatch count for seeded random rationals; zero when coding is exact."""
    return IntervalSystem().coding_mismatches(random_rationals(samples, seed), n_max)


# -- balls and cells ----------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    center: Fraction
    radius: Fraction

    def __post_init__(self):
        object.__setattr__(self, "center", _frac(self.center) % 1)
        object.__setattr__(self, "radius", _frac(self.radius))
        if not (0 < self.radius < Fraction(1, 2)):
            raise ValueError(f"radius must lie in (0, 1/2), got {self.radius}")

    @property
    def lifted(self) -> tuple[Fraction, Fraction]:
        """The arc as an interval of the real line (it may stick out of [0, 1))."""
        return self.center - self.radius, self.center + self.radius

    def contains(self, x: Fraction) -> bool:
        return IntervalSystem.distance(_frac(x), self.center) < self.radius

    def grown(self, dr: Fraction) -> "Ball":
        return Ball(self.center, self.radius + dr)


def _dyadic_blocks(lo: int, hi: int, n: int) -> list[Word]:
    """Minimal aligned dyadic blocks covering cells ``lo..hi`` of level ``n``."""
    words = []
    while lo <= hi:
        k = 0
        while k < n and lo % (1 << (k + 1)) == 0 and lo + (1 << (k + 1)) - 1 <= hi:
            k += 1
        words.append(index_to_word(lo >> k, n - k))
        lo += 1 << k
    return words


@dataclass(frozen=True)
class CellRange:
    """Consecutive level-n cells ``lo..hi`` in lifted indices (may wrap mod 2^n)."""

    n: int
    lo: int
    hi: int

    @property
    def empty(self) -> bool:
        return self.hi < self.lo

    @property
    def count(self) -> int:
        return 0 if self.empty else min(self.hi - self.lo + 1, 2 ** self.n)

    def cells(self) -> frozenset[int]:
        N = 2 ** self.n
        if self.count > CELL_CAP:
            raise CapExceededError("too many cells to list")
        return frozenset(j % N for j in range(self.lo, self.hi + 1))

    def words(self) -> list[Word]:
        if self.empty:
            return []
        N = 2 ** self.n
        if self.hi - self.lo + 1 >= N:
            return [()]
        lo, hi = self.lo % N, self.hi % N
        if lo <= hi:
            return _dyadic_blocks(lo, hi, self.n)
        return _dyadic_blocks(lo, N - 1, self.n) + _dyadic_blocks(0, hi, self.n)

    def hole(self) -> HoleSpec:
        return HoleSpec(frozenset(self.words()))

    def mass(self, mu: MeasureModel) -> Number:
        ws = self.words()
        if ws == [()]:
            return 1 + 0 * mu.initial(0)
        return sum((cylinder_measure(mu, w) for w in ws), start=0 * mu.initial(0))


@dataclass(frozen=True)
class CylinderUnionPair:
    ball: Ball
    n: int
    inner: CellRange
    outer: CellRange

    @property
    def boundary_cells(self) -> int:
        return self.outer.count - self.inner.count

    def masses(self, mu: MeasureModel) -> tuple[Number, Number]:
        return self.inner.mass(mu), self.outer.mass(mu)

    def verify(self) -> bool:
        """Exact check of ``U^- c arc c U^+`` and of the boundary-cell bound."""
        a, b = self.ball.lifted
        N = 2 ** self.n
        ok = True
        if not self.inner.empty:
            # closed left end strictly inside the open arc, right end at most b
            ok &= Fraction(self.inner.lo, N) > a and Fraction(self.inner.hi + 1, N) <= b
            ok &= self.outer.lo <= self.inner.lo and self.inner.hi <= self.outer.hi
        # U^+ covers the arc and both of its end cells meet it
        ok &= Fraction(self.outer.lo, N) <= a and Fraction(self.outer.hi + 1, N) >= b
        ok &= Fraction(self.outer.lo + 1, N) > a and Fraction(self.outer.hi, N) < b
        ok &= self.boundary_cells <= 2
        return bool(ok)


def ball_to_cylinders(ball: Ball, n: int, cap: int = CELL_CAP) -> CylinderUnionPair:
    """Inner and outer generation-n dyadic approximations of an open arc."""
    if n < 1:
        raise ValueError("n must be positive")
    if 2 ** n > cap:
        raise CapExceededError(f"2^{n} cells exceed the cap {cap}")
    a, b = ball.lifted
    N = 2 ** n
    # cell j = [j/N, (j+1)/N) lies in (a, b) iff j > aN and j + 1 <= bN
    inner = CellRange(n, math.floor(a * N) + 1, math.floor(b * N) - 1)
    # and meets (a, b) iff j + 1 > aN and j < bN
    outer = CellRange(n, math.floor(a * N), math.ceil(b * N) - 1)
    return CylinderUnionPair(ball, n, inner, outer)


# -- coded measure ------------------------------------------------------------

def binary_expansion(x: Fraction, max_digits: int = 1 << 18) -> tuple[Word, Word]:
    """Eventually periodic binary digits of ``x`` in [0, 1): (preperiod, period).

    The period is the order of 2 modulo the odd part of the denominator and
    can be close to the denominator itself, hence the digit cap.
    """
    x = _frac(x)
    if not (0 <= x < 1):
        raise ValueError("x must lie in [0, 1)")
    seen: dict[Fraction, int] = {}
    digits = []
    while x not in seen:
        if len(digits) >= max_digits:
            raise CapExceededError(f"binary expansion of a rational with denominator {x.denominator} "
                                   f"exceeds {max_digits} digits")
        seen[x] = len(digits)
        x *= 2
        d = int(x >= 1)
        digits.append(d)
        x -= d
    start = seen[x]
    return tuple(digits[:start]), tuple(digits[start:])


def _bernoulli_weight(mu: MeasureModel) -> Number:
    if mu.kind != "bernoulli" or mu.alphabet_size != 2:
        raise ValueError("the coded measure needs a two-symbol Bernoulli model")
    return mu.prob[0]


def _digit_sums(word: Word, q):
    """(CDF contribution, product of weights) of a finite digit block."""
    if isinstance(q, Fraction):
        # scaled integers over den^k; periods of odd denominators run to thousands of digits
        a, den = q.numerator, q.denominator
        f, w, scale = 0, 1, 1
        for d in word:
            if d:
                f = f * den + w * a
                w *= den - a
            else:
                f *= den
                w *= a
            scale *= den
        return Fraction(f, scale), Fraction(w, scale)
    F, W = 0 * q, 1 + 0 * q
    for d in word:
        if d:
            F += W * q
            W *= 1 - q
        else:
            W *= q
    return F, W


def coded_cdf(x, mu: MeasureModel) -> Number:
    """``mu([0, x))`` for the coded Bernoulli measure, extended by ``F(x + 1) = F(x) + 1``."""
    q = _bernoulli_weight(mu)
    x = _frac(x)
    whole = math.floor(x)
    pre, per = binary_expansion(x - whole)
    Fu, Wu = _digit_sums(pre, q)
    Fv, Wv = _digit_sums(per, q)
    if not mu.exact:
        return whole + float(Fu + Wu * Fv / (1 - Wv))
    return whole + Fu + Wu * Fv / (1 - Wv)


def interval_measure(a, b, mu: MeasureModel) -> Number:
    return coded_cdf(b, mu) - coded_cdf(a, mu) if b > a else 0 * mu.initial(0)


def ball_measure(ball: Ball, mu: MeasureModel) -> Number:
    return interval_measure(*ball.lifted, mu)


def arc_overlap(a1, b1, a2, b2, mu: MeasureModel) -> Number:
    """Measure of the intersection of two lifted arcs of length below 1."""
    total = 0 * mu.initial(0)
    for m in (-1, 0, 1):
        lo, hi = max(a1, a2 + m), min(b1, b2 + m)
        if hi > lo:
            total += interval_measure(lo, hi, mu)
    return total


# -- extremal index for balls ---------------------------------------------------

def doubling_period(z: Fraction, bound: int = 64) -> Optional[int]:
    z = _frac(z) % 1
    x = z
    for p in range(1, bound + 1):
        x = IntervalSystem.apply(x)
        if x == z:
            return p
    return None


def overlap_ratio_ball(ball: Ball, p: int, mu: MeasureModel) -> Number:
    """``mu(B & T^-p B) / mu(B)``; ``T^-p B`` is ``2^p`` arcs of radius ``r / 2^p``."""
    a, b = ball.lifted
    P = 2 ** p
    rr = ball.radius / P
    num = sum(
        (arc_overlap(a, b, (ball.center + i) / P - rr, (ball.center + i) / P + rr, mu) for i in range(P)),
        start=0 * mu.initial(0),
    )
    return num / ball_measure(ball, mu)


def theta_ball(z, p: int, r_schedule: Sequence, mu: MeasureModel, tol: float = 1e-6) -> ThetaEstimate:
    """Ball overlap ratio along a decreasing radius schedule, extrapolated as r -> 0.

    ``per_n`` holds ``(index, ratio)`` pairs in schedule order.
    """
    z = _frac(z) % 1
    prime = doubling_period(z, bound=max(64, p))
    if prime is None or p % prime:
        raise ValueError(f"{z} is not periodic with period {p} under doubling")
    ratios = [overlap_ratio_ball(Ball(z, r), p, mu) for r in r_schedule]
    pts = list(enumerate(ratios))
    if len(set(ratios)) == 1:
        limit, converged = ratios[-1], True
    elif len(pts) >= 4:
        ex = extrapolate_limit([(i, float(v)) for i, v in pts], tol=tol)
        limit, converged = ex.limit, ex.converged
    else:
        limit, converged = float(ratios[-1]), False
    return ThetaEstimate(p, pts, limit, converged, bool(limit < Fraction(1, 2)))


def growth_ratios(z, r_schedule: Sequence, mu: MeasureModel, v: int = 2) -> list[tuple[Fraction, Number, Fraction, bool]]:
    """``(r, mu(B_{r+r^v}) / mu(B_r), 1 + 2 r^(v-1), ratio <= bound)`` per radius.

    The bound is the Lebesgue one. A coded Bernoulli measure with unequal
    weights can exceed it while the ratio still tends to 1, only more slowly.
    """
    out = []
    for r in r_schedule:
        r = _frac(r)
        B = Ball(z, r)
        ratio = ball_measure(B.grown(r ** v), mu) / ball_measure(B, mu)
        bound = 1 + 2 * r ** (v - 1)
        out.append((r, ratio, bound, bool(ratio <= bound)))
    return out


# -- L(alpha, s) for balls ----------------------------------------------------------

def default_n_rule(v: int = 2) -> Callable[[Fraction], int]:
    """Smallest ``n`` with ``2^-n <= r^v``, i.e. ``ceil(v log2(1/r))`` computed exactly."""

    def rule(r) -> int:
        target = _frac(r) ** v
        n = 1
        while Fraction(1, 2 ** n) > target:
            n += 1
        return n

    return rule


@dataclass
class BallPoint:
    r: Fraction
    n: int
    ball_mass: float
    inner_mass: float
    outer_mass: float
    t: int
    low: Optional[float]
    high: float
    contained: bool
    mc: Optional[tuple[float, float, float]] = None

    @property
    def center(self) -> float:
        return self.high if self.low is None else 0.5 * (self.low + self.high)

    @property
    def width(self) -> float:
        return math.inf if self.low is None else self.high - self.low

    def mc_consistent(self) -> Optional[bool]:
        """True when the Monte Carlo interval meets the bracket."""
        if self.mc is None:
            return None
        lo = -math.inf if self.low is None else self.low
        return self.mc[1] <= self.high and self.mc[2] >= lo

    def to_dict(self) -> dict:
        d = {
            "r": str(self.r),
            "n": self.n,
            "mu(B)": self.ball_mass,
            "inner_mass": self.inner_mass,
            "outer_mass": self.outer_mass,
            "t": self.t,
            "L_low": self.low,
            "L_high": self.high,
            "contained": self.contained,
        }
        if self.mc is not None:
            d["monte_carlo"] = {"estimate": self.mc[0], "ci": [self.mc[1], self.mc[2]], "consistent": self.mc_consistent()}
        return d


@dataclass
class BallCurve:
    alpha: float
    s: float
    v: int
    per_r: list[BallPoint]
    low: Optional[Extrapolation] = None
    high: Optional[Extrapolation] = None
    warnings: list[str] = field(default_factory=list)

    @property
    def finest(self) -> BallPoint:
        return self.per_r[-1]

    def widths(self) -> list[float]:
        return [p.width for p in self.per_r]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "s": self.s,
            "v": self.v,
            "per_r": [p.to_dict() for p in self.per_r],
            "extrapolated_low": None if self.low is None else self.low.to_dict(),
            "extrapolated_high": None if self.high is None else self.high.to_dict(),
            "finest_center": self.finest.center if self.per_r else None,
            "warnings": list(self.warnings),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "n", "inner_mass", "outer_mass", "L_low", "L_high"])
            for p in self.per_r:
                w.writerow([str(p.r), p.n, repr(p.inner_mass), repr(p.outer_mass),
                            "" if p.low is None else repr(p.low), repr(p.high)])


def _window_bounds(x: Fraction, bits: int) -> tuple[int, int, bool]:
    """``(floor(x 2^bits), ceil(x 2^bits), exact)``."""
    y = x * 2 ** bits
    return math.floor(y), math.ceil(y), y.denominator == 1


def ball_first_hits(ball: Ball, streams: np.ndarray, t_max: int, bits: int = 48) -> tuple[np.ndarray, int]:
    """First ``j in 1..t_max`` with ``T^j x`` in the ball, for digit streams of ``T x``.

    Row ``i`` holds the binary digits of ``T x_i``; the point ``T^j x_i`` is
    read from a ``bits``-wide window starting at column ``j - 1`` and compared
    with the arc ends in exact integer arithmetic. The rare windows that
    straddle an end are decided from a second window. Returns the hit times
    (``t_max + 1`` for survivors) and the number of undecided cases.
    """
    trials, length = streams.shape
    if length < t_max - 1 + 2 * bits:
        raise ValueError("streams too short for the horizon")
    N = 1 << bits
    a, b = ball.lifted
    fa, ca, ea = _window_bounds(a, bits)
    fb, cb, eb = _window_bounds(b, bits)
    weights = np.array([1 << (bits - 1 - i) for i in range(bits)], dtype=np.int64)
    W = streams[:, :bits].astype(np.int64) @ weights
    hit = np.full(trials, t_max + 1, dtype=np.int64)
    alive = np.ones(trials, dtype=bool)
    undecided = 0
    mask = N - 1
    for j in range(1, t_max + 1):
        if j > 1:
            W = ((W << 1) & mask) | streams[:, j - 1 + bits - 1]
        inside = np.zeros(trials, dtype=bool)
        edge = np.zeros(trials, dtype=bool)
        for shift in (-N, 0, N):
            X = W + shift
            # the point lies in the open window (X, X + 1) / 2^bits almost surely
            inside |= (X >= ca) & (X + 1 <= fb)
            if not ea:
                edge |= X == fa
            if not eb:
                edge |= X == fb
        edge &= ~inside & alive
        for i in np.flatnonzero(edge):
            digits = streams[i, j - 1: j - 1 + 2 * bits]
            lo = Fraction(int("".join(map(str, digits)), 2), 1 << (2 * bits))
            hi = lo + Fraction(1, 1 << (2 * bits))
            verdict = None
            for m in (-1, 0, 1):
                if lo + m >= a and hi + m <= b:
                    verdict = True
            if verdict is None and any(lo + m < b and hi + m > a for m in (-1, 0, 1)):
                undecided += 1
            inside[i] = bool(verdict)
        new = inside & alive
        hit[new] = j
        alive &= ~new
        if not alive.any():
            break
    return hit, undecided


def ball_monte_carlo(ball: Ball, mu: MeasureModel, t: int, trials: int, master_seed: int,
                     block: int = 4096, bits: int = 48) -> tuple[float, int]:
    """Empirical ``mu(tau_B > t)`` over real orbits, and the undecided count."""
    survivors, undecided = 0, 0
    for start in range(0, trials, block):
        m = min(block, trials - start)
        streams = sample_streams(mu, master_seed, m, t - 1 + 2 * bits, first_trial=start)
        hits, und = ball_first_hits(ball, streams, t, bits)
        survivors += int((hits > t).sum())
        undecided += und
    return survivors / trials, undecided


def l_ball(z, r_schedule: Sequence, alpha: float, s: float, mu: MeasureModel, v: int = 2,
           n_rule: Optional[Callable[[Fraction], int]] = None, mc_trials: int = 0,
           master_seed: int = 0, tol: float = 1e-3) -> BallCurve:
    """Bracketed ``L(alpha, s)`` for the balls ``B_r(z)``.

    The ball mass ``mu(B)`` is exact, so the horizon ``t = ceil(s mu(B)^-alpha)``
    is the ball's own. The bracket is

        -log S_{U^-}(t) / (s mu(B)^(1-alpha))  <=  L_B  <=  -log S_{U^+}(t) / (s mu(B)^(1-alpha)).

    With ``mc_trials > 0`` the ball value is also estimated over real orbits.
    """
    rule = n_rule or default_n_rule(v)
    fmu = mu.to_float() if mu.exact else mu
    system = SymbolicSystem.full_shift(2)
    curve = BallCurve(float(alpha), float(s), v, [])
    prev_r = None
    for r in r_schedule:
        r = _frac(r)
        if prev_r is not None and r >= prev_r:
            raise ValueError("r_schedule must be strictly decreasing")
        prev_r = r
        ball = Ball(z, r)
        n = rule(r)
        pair = ball_to_cylinders(ball, n)
        mass = ball_measure(ball, mu)
        inner_mass, outer_mass = pair.masses(mu)
        t = hitting_horizon(s, mass, alpha)
        scale = float(s) * float(mass) ** (1.0 - float(alpha))
        if pair.inner.empty:
            low = None
            curve.warnings.append(f"r={r}: inner union is empty, lower bound omitted")
        else:
            low = -log_survival(compile_hole(system, fmu, pair.inner.hole()), t) / scale
        high = -log_survival(compile_hole(system, fmu, pair.outer.hole()), t) / scale
        point = BallPoint(r, n, float(mass), float(inner_mass), float(outer_mass), t, low, high, pair.verify())
        if not point.contained:
            curve.warnings.append(f"r={r}: sandwich containment failed")
        if mc_trials:
            sv, undecided = ball_monte_carlo(ball, fmu, t, mc_trials, master_seed)
            half = 3 * math.sqrt(max(sv * (1 - sv), 1.0 / mc_trials) / mc_trials)

            def L(x):
                return -math.log(x) / scale if x > 0 else math.inf

            point.mc = (L(sv), L(min(1.0, sv + half)), L(max(0.0, sv - half)))
            if undecided:
                curve.warnings.append(f"r={r}: {undecided} Monte Carlo windows undecided")
        curve.per_r.append(point)
    lows = [(i, p.low) for i, p in enumerate(curve.per_r) if p.low is not None]
    highs = [(i, p.high) for i, p in enumerate(curve.per_r)]
    if len(highs) >= 4:
        curve.high = extrapolate_limit(highs, tol=tol)
    if len(lows) >= 4:
        curve.low = extrapolate_limit(lows, tol=tol)
    return curve


def thue_morse_real(bits: int = 64) -> Fraction:
    """Dyadic truncation of the point whose binary digits follow Thue-Morse."""
    w = PointSpec.stream("thue-morse").prefix(bits)
    return Fraction(word_to_index(w), 2 ** bits)

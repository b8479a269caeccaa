"""Bernoulli and stationary Markov measures, cylinder masses and phi-mixing.

All arithmetic is generic: probabilities given as :class:`fractions.Fraction`
give exact results, floats give float results.

Gap convention for the mixing coefficient: ``phi(k)`` bounds
``|mu(A & T^-(n+k) B) - mu(A) mu(B)|`` for ``A`` measurable with respect to
the first ``n`` coordinates. The last coordinate of ``A`` is ``n-1`` and the
first coordinate of ``T^-(n+k) B`` is ``n+k``, so a Markov chain makes
``k + 1`` transitions across the gap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .symbolic import (
    DEFAULT_ENUMERATION_CAP,
    CapExceededError,
    HoleSpec,
    SymbolicSystem,
    Word,
    enumerate_join,
    format_word,
)

Number = Union[Fraction, float]

TOL = 1e-12


def as_number(x, exact: bool) -> Number:
    """Coerce config input to a Fraction (exact) or float.

    Strings such as ``"3/10"`` and decimal literals become exact fractions.
    """
    if exact:
        if isinstance(x, float):
            return Fraction(repr(x))
        return Fraction(x)
    if isinstance(x, str):
        return float(Fraction(x))
    return float(x)


def _is_exact(values: Iterable) -> bool:
    return all(isinstance(v, (Fraction, int)) for v in values)


def matmul(A, B):
    if isinstance(A, np.ndarray):
        return A @ B
    n, m = len(A), len(B[0])
    return [[sum(A[i][k] * B[k][j] for k in range(len(B))) for j in range(m)] for i in range(n)]


def matpow(P, k: int):
    size = len(P)
    one = Fraction(1) if not isinstance(P, np.ndarray) else 1.0
    if isinstance(P, np.ndarray):
        return np.linalg.matrix_power(P, k)
    R = [[one if i == j else one * 0 for j in range(size)] for i in range(size)]
    for _ in range(k):
        R = matmul(R, P)
    return R


def stationary_vector(P) -> list:
    """Stationary row vector of an irreducible stochastic matrix."""
    k = len(P)
    if _is_exact(v for row in P for v in row):
        # solve pi (P - I) = 0 with sum(pi) = 1 by Gaussian elimination
        A = [[Fraction(P[j][i]) - (1 if i == j else 0) for j in range(k)] for i in range(k)]
        A[-1] = [Fraction(1)] * k
        b = [Fraction(0)] * (k - 1) + [Fraction(1)]
        for col in range(k):
            piv = next(r for r in range(col, k) if A[r][col] != 0)
            A[col], A[piv] = A[piv], A[col]
            b[col], b[piv] = b[piv], b[col]
            for r in range(k):
                if r != col and A[r][col] != 0:
                    f = A[r][col] / A[col][col]
                    A[r] = [x - f * y for x, y in zip(A[r], A[col])]
                    b[r] -= f * b[col]
        return [b[i] / A[i][i] for i in range(k)]
    M = np.asarray(P, dtype=float)
    A = M.T - np.eye(k)
    A[-1, :] = 1.0
    rhs = np.zeros(k)
    rhs[-1] = 1.0
    return list(np.linalg.solve(A, rhs))


@dataclass(frozen=True)
class MeasureModel:
    """Shift-invariant measure on the symbol space.

    ``kind`` is ``"bernoulli"`` (``prob`` holds the symbol weights) or
    ``"markov"`` (``P`` row-stochastic, ``pi`` its stationary vector). Use
    :meth:`bernoulli` and :meth:`markov`, which validate their inputs; the
    raw constructor does not check stationarity so that defective models can
    be built on purpose.
    """

    kind: str
    prob: tuple = ()
    P: tuple = ()
    pi: tuple = ()

    @classmethod
    def bernoulli(cls, prob: Sequence[Number]) -> "MeasureModel":
        prob = tuple(prob)
        if len(prob) < 2:
            raise ValueError("need at least two symbols")
        if any(p <= 0 for p in prob):
            raise ValueError("Bernoulli weights must be positive")
        if abs(sum(prob) - 1) > (0 if _is_exact(prob) else TOL):
            raise ValueError(f"Bernoulli weights sum to {sum(prob)}, not 1")
        return cls("bernoulli", prob=prob)

    @classmethod
    def markov(cls, P, pi=None, system: Optional[SymbolicSystem] = None) -> "MeasureModel":
        P = tuple(tuple(row) for row in P)
        k = len(P)
        if any(len(row) != k for row in P):
            raise ValueError("P must be square")
        exact = _is_exact(v for row in P for v in row)
        tol = 0 if exact else TOL
        if any(v < 0 for row in P for v in row):
            raise ValueError("P has negative entries")
        for i, row in enumerate(P):
            if abs(sum(row) - 1) > tol:
                raise ValueError(f"row {i} of P sums to {sum(row)}")
        if pi is None:
            pi = stationary_vector(P)
        pi = tuple(pi)
        if len(pi) != k or any(v <= 0 for v in pi):
            raise ValueError("stationary vector must be positive")
        mu = cls("markov", P=P, pi=pi)
        defect = max(abs(sum(pi[a] * P[a][b] for a in range(k)) - pi[b]) for b in range(k))
        if defect > tol:
            raise ValueError(f"pi is not stationary for P (defect {defect})")
        if system is not None:
            mu.check_compatible(system)
        return mu

    @property
    def alphabet_size(self) -> int:
        return len(self.prob) if self.kind == "bernoulli" else len(self.P)

    @property
    def exact(self) -> bool:
        vals = self.prob if self.kind == "bernoulli" else [v for row in self.P for v in row] + list(self.pi)
        return _is_exact(vals)

    def initial(self, a: int) -> Number:
        return self.prob[a] if self.kind == "bernoulli" else self.pi[a]

    def transition(self, a: int, b: int) -> Number:
        return self.prob[b] if self.kind == "bernoulli" else self.P[a][b]

    def transition_matrix(self):
        k = self.alphabet_size
        rows = [[self.transition(a, b) for b in range(k)] for a in range(k)]
        return rows if self.exact else np.array(rows, dtype=float)

    def stationary(self) -> list:
        return list(self.prob) if self.kind == "bernoulli" else list(self.pi)

    def check_compatible(self, system: SymbolicSystem) -> None:
        if system.alphabet_size != self.alphabet_size:
            raise ValueError("measure and system have different alphabets")
        if self.kind == "bernoulli":
            if not system.is_full_shift:
                raise ValueError("a Bernoulli measure needs the full shift")
            return
        for a in range(self.alphabet_size):
            for b in range(self.alphabet_size):
                if (self.P[a][b] > 0) != system.allowed(a, b):
                    raise ValueError(f"P support differs from admissibility at ({a},{b})")

    def to_float(self) -> "MeasureModel":
        if self.kind == "bernoulli":
            return MeasureModel("bernoulli", prob=tuple(float(p) for p in self.prob))
        return MeasureModel(
            "markov",
            P=tuple(tuple(float(v) for v in row) for row in self.P),
            pi=tuple(float(v) for v in self.pi),
        )

    def describe(self) -> str:
        if self.kind == "bernoulli":
            return "Bernoulli(" + ", ".join(str(p) for p in self.prob) + ")"
        return f"Markov(P={[list(map(str, r)) for r in self.P]})"


def cylinder_measure(mu: MeasureModel, w: Union[Word, HoleSpec]) -> Number:
    """Mass of the cylinder ``[w]``; additive over the words of a hole."""
    if isinstance(w, HoleSpec):
        return sum((cylinder_measure(mu, v) for v in w.words), start=0 * mu.initial(0))
    if len(w) == 0:
        raise ValueError("empty word")
    m = mu.initial(w[0])
    for a, b in zip(w, w[1:]):
        t = mu.transition(a, b)
        if t == 0:
            raise ValueError(f"inadmissible word {format_word(w)}")
        m = m * t
    return m


def stationarity_check(mu: MeasureModel, n: int, system: Optional[SymbolicSystem] = None,
                       cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[bool, Number]:
    """Check ``sum_a mu([a w]) == mu([w])`` for every admissible word of length n.

    Returns ``(passed, max_defect)``; exact models must have defect 0.
    """
    system = system or SymbolicSystem(mu.alphabet_size)
    if system.alphabet_size ** (n + 1) > cap:
        raise CapExceededError("stationarity check exceeds enumeration cap")
    worst = 0 * mu.initial(0)
    for w in enumerate_join(system, n):
        preimage = sum(
            (cylinder_measure(mu, (a,) + w) for a in range(mu.alphabet_size) if system.allowed(a, w[0])),
            start=0 * worst,
        )
        worst = max(worst, abs(preimage - cylinder_measure(mu, w)))
    ok = worst == 0 if mu.exact else worst <= TOL
    return ok, worst


# -- phi-mixing ---------------------------------------------------------------

def _check_side(side: str) -> None:
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")


def reversed_matrix(mu: MeasureModel):
    """Time reversal ``P*(b, a) = pi_a P(a, b) / pi_b``."""
    k = mu.alphabet_size
    pi = mu.stationary()
    rows = [[pi[a] * mu.transition(a, b) / pi[b] for a in range(k)] for b in range(k)]
    return rows if mu.exact else np.array(rows, dtype=float)


def phi_coefficient_exact(mu: MeasureModel, k: int, side: str = "left") -> Number:
    """Mixing coefficient phi(k) in closed form.

    Conditioning on the boundary symbol reduces the supremum over the
    sigma-algebras to ``max_a 1/2 sum_b |Q^(k+1)(a, b) - pi_b|`` with ``Q = P``
    on the left and the time-reversed chain on the right.
    """
    _check_side(side)
    if k < 0:
        raise ValueError("gap must be non-negative")
    zero = 0 * mu.initial(0)
    if mu.kind == "bernoulli":
        return zero
    Q = mu.transition_matrix() if side == "left" else reversed_matrix(mu)
    Qk = matpow(Q, k + 1)
    pi = mu.stationary()
    size = mu.alphabet_size
    return max(sum(abs(Qk[a][b] - pi[b]) for b in range(size)) / 2 for a in range(size))


def phi_coefficient_bruteforce(mu: MeasureModel, k: int, side: str = "left", depth_cap: int = 5,
                               system: Optional[SymbolicSystem] = None,
                               cap: int = 2**18) -> Number:
    """Mixing coefficient by enumeration of cylinders.

    Every ``A`` is an n-cylinder (``n <= depth_cap``); ``B`` ranges over unions
    of ``depth_cap``-cylinders. Joint masses are sums of cylinder masses over
    all gap words. The best union is taken in closed form: the sum of the
    positive (or negative) parts of the covariance terms.
    """
    _check_side(side)
    system = system or SymbolicSystem(mu.alphabet_size)
    size = mu.alphabet_size
    if size ** (2 * depth_cap + k) > cap:
        raise CapExceededError("brute-force phi exceeds enumeration cap")
    zero = 0 * mu.initial(0)
    best = zero
    Bs = enumerate_join(system, depth_cap)
    mB = [cylinder_measure(mu, v) for v in Bs]
    gaps = enumerate_join(system, k) if k > 0 else [()]
    for n in range(1, depth_cap + 1):
        As = enumerate_join(system, n)
        mA = [cylinder_measure(mu, w) for w in As]
        dev = []
        for w, mw in zip(As, mA):
            row = []
            for v, mv in zip(Bs, mB):
                joint = zero
                for g in gaps:
                    word = w + g + v
                    if system.is_admissible(word) and _positive_path(mu, word):
                        joint += cylinder_measure(mu, word)
                row.append(joint - mw * mv)
            dev.append(row)
        if side == "left":
            for row, mw in zip(dev, mA):
                pos = sum((d for d in row if d > 0), start=zero)
                neg = -sum((d for d in row if d < 0), start=zero)
                best = max(best, max(pos, neg) / mw)
        else:
            for j, mv in enumerate(mB):
                col = [row[j] for row in dev]
                pos = sum((d for d in col if d > 0), start=zero)
                neg = -sum((d for d in col if d < 0), start=zero)
                best = max(best, max(pos, neg) / mv)
    return best


def _positive_path(mu: MeasureModel, word: Word) -> bool:
    return all(mu.transition(a, b) != 0 for a, b in zip(word, word[1:]))


@dataclass(frozen=True)
class DecayClass:
    kind: str  # "exponential" | "polynomial" | "undetermined"
    value: float  # rate for exponential, power m for polynomial
    residual_exponential: float
    residual_polynomial: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "residual_exponential": self.residual_exponential,
            "residual_polynomial": self.residual_polynomial,
        }


def classify_decay(values: Sequence[float], threshold: float = 0.05) -> DecayClass:
    """Fit the tail half of ``phi(1..K)`` as ``c r^k`` and as ``c k^-m``.

    Residuals are RMS deviations in log space; the smaller one wins unless
    both exceed ``threshold``. An identically zero profile is exponential
    with rate 0 by convention.
    """
    vals = [float(v) for v in values]
    if len(vals) < 8:
        # too short to tell the two tails apart
        return DecayClass("undetermined", math.nan, math.nan, math.nan)
    ks = np.arange(1, len(vals) + 1, dtype=float)
    tail = slice(len(vals) // 2, None)
    kt, vt = ks[tail], np.asarray(vals[tail])
    mask = vt > 0
    if mask.sum() < 2:
        return DecayClass("exponential", 0.0, 0.0, math.inf)
    kt, logv = kt[mask], np.log(vt[mask])

    def fit(x):
        A = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(A, logv, rcond=None)
        resid = logv - A @ coef
        return coef[0], float(np.sqrt(np.mean(resid**2)))

    slope_e, res_e = fit(kt)
    slope_p, res_p = fit(np.log(kt))
    if min(res_e, res_p) > threshold:
        return DecayClass("undetermined", math.nan, res_e, res_p)
    if res_e <= res_p:
        return DecayClass("exponential", float(math.exp(slope_e)), res_e, res_p)
    return DecayClass("polynomial", float(-slope_p), res_e, res_p)


@dataclass(frozen=True)
class PhiProfile:
    """phi(1..k_max) together with its non-increasing envelope."""

    values: tuple
    side: str
    classification: DecayClass

    @property
    def envelope(self) -> list:
        env, running = [], 0 * self.values[-1]
        for v in reversed(self.values):
            running = max(running, v)
            env.append(running)
        return env[::-1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "phi", "envelope"])
            for k, (v, e) in enumerate(zip(self.values, self.envelope), start=1):
                w.writerow([k, float(v), float(e)])

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "k": list(range(1, len(self.values) + 1)),
            "phi": [float(v) for v in self.values],
            "envelope": [float(v) for v in self.envelope],
            "classification": self.classification.to_dict(),
        }


def phi_profile(mu: MeasureModel, k_max: int = 16, side: str = "left", threshold: float = 0.05) -> PhiProfile:
    values = tuple(phi_coefficient_exact(mu, k, side) for k in range(1, k_max + 1))
    return PhiProfile(values, side, classify_decay(values, threshold))


def synthetic_profile(values: Sequence[float], side: str = "left", threshold: float = 0.05) -> PhiProfile:
    values = tuple(float(v) for v in values)
    return PhiProfile(values, side, classify_decay(values, threshold))


def second_eigenvalue_modulus(mu: MeasureModel) -> float:
    if mu.kind == "bernoulli":
        return 0.0
    ev = np.sort(np.abs(np.linalg.eigvals(np.array(mu.transition_matrix(), dtype=float))))[::-1]
    return float(ev[1])


def pattern_measure(mu: MeasureModel, constraints: dict[int, int], system: Optional[SymbolicSystem] = None) -> Number:
    """Mass of ``{x : x_i = c for (i, c) in constraints}`` (positions from 0).

    Free positions between constraints are summed out by transfer matrices.
    """
    if not constraints:
        return 1 + 0 * mu.initial(0)
    size = mu.alphabet_size
    zero = 0 * mu.initial(0)
    positions = sorted(constraints)
    last = positions[-1]
    # forward vector over symbols at the current position
    vec = [mu.initial(a) if constraints.get(0, a) == a else zero for a in range(size)]
    for i in range(1, last + 1):
        new = [zero] * size
        c = constraints.get(i)
        for b in range(size):
            if c is not None and b != c:
                continue
            new[b] = sum((vec[a] * mu.transition(a, b) for a in range(size)), start=zero)
        vec = new
    return sum(vec, start=zero)


def builtin_measures() -> dict[str, MeasureModel]:
    """The reference measures used by the examples, scripts and tests (exact)."""
    F = Fraction
    return {
        "bernoulli-1/2": MeasureModel.bernoulli([F(1, 2), F(1, 2)]),
        "bernoulli-3/10": MeasureModel.bernoulli([F(3, 10), F(7, 10)]),
        "markov": MeasureModel.markov([[F(9, 10), F(1, 10)], [F(1, 5), F(4, 5)]]),
    }

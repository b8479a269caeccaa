"""Open-system engine: absorbing chains for cylinder holes.

A hole ``U`` (finite union of cylinders) is compiled into a multi-pattern
(Aho-Corasick) automaton over its words. The product of the automaton with
the symbol chain, with every transition into an accepting state deleted, is
a sub-stochastic matrix ``Q``. Hitting starts at time 1, so

    mu(tau_U > t) = init . Q^(t-1) . (1 - g),      t >= 1,

where ``init`` is the law of the state after reading ``z_1`` and ``g`` is the
probability that a partial match pending at time ``t`` (an occurrence that
starts at or before ``t``) completes later. ``g`` makes mixed-depth holes
exact without padding words to a common length.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .measures import MeasureModel, Number, cylinder_measure, phi_coefficient_exact
from .symbolic import CapExceededError, HoleSpec, SymbolicSystem, Word, prefix_free

log = logging.getLogger(__name__)

STATE_CAP = 200_000


class DegenerateHoleError(ValueError):
    """The hole is empty or covers the whole space."""


class NonConvergenceError(RuntimeError):
    """Power iteration failed to settle within its iteration cap."""


# -- automaton ------------------------------------------------------------------

@dataclass
class PatternAutomaton:
    """Aho-Corasick automaton with a complete goto table.

    ``longest[q]`` is the length of the longest hole word that ends at node
    ``q`` (0 if none), so ``q`` is accepting iff ``longest[q] > 0``.
    """

    alphabet_size: int
    goto: list[list[int]]
    fail: list[int]
    label: list[Word]
    longest: list[int]
    patterns: frozenset

    @classmethod
    def build(cls, words, alphabet_size: int) -> "PatternAutomaton":
        children: list[dict[int, int]] = [{}]
        label: list[Word] = [()]
        terminal = [False]
        for w in sorted(words):
            q = 0
            for s in w:
                if s not in children[q]:
                    children.append({})
                    label.append(label[q] + (s,))
                    terminal.append(False)
                    children[q][s] = len(children) - 1
                q = children[q][s]
            terminal[q] = True
        size = len(children)
        goto = [[0] * alphabet_size for _ in range(size)]
        fail = [0] * size
        longest = [len(label[q]) if terminal[q] else 0 for q in range(size)]
        queue: deque[int] = deque()
        for s in range(alphabet_size):
            nxt = children[0].get(s)
            if nxt is None:
                goto[0][s] = 0
            else:
                goto[0][s] = nxt
                queue.append(nxt)
        while queue:
            q = queue.popleft()
            longest[q] = max(longest[q], longest[fail[q]])
            for s in range(alphabet_size):
                nxt = children[q].get(s)
                if nxt is None:
                    goto[q][s] = goto[fail[q]][s]
                else:
                    fail[nxt] = goto[fail[q]][s]
                    goto[q][s] = nxt
                    queue.append(nxt)
        return cls(alphabet_size, goto, fail, label, longest, frozenset(words))

    def accepting(self, q: int) -> bool:
        return self.longest[q] > 0

    def first_hit(self, seq: Sequence[int]) -> Optional[int]:
        """Smallest 1-based start of a hole word inside ``seq`` (``None`` if absent)."""
        best = None
        q = 0
        for m, s in enumerate(seq, start=1):
            q = self.goto[q][s]
            if self.longest[q]:
                start = m - self.longest[q] + 1
                best = start if best is None else min(best, start)
        return best

    def pending_continuations(self, q: int) -> set[Word]:
        """Suffixes that would complete a hole word already started at ``q``."""
        out: set[Word] = set()
        node = q
        while node != 0:
            lab = self.label[node]
            for w in self.patterns:
                if len(w) > len(lab) and w[: len(lab)] == lab:
                    out.add(w[len(lab):])
            node = self.fail[node]
        return prefix_free(out)


# -- open chain -------------------------------------------------------------

@dataclass
class OpenChain:
    """Sub-stochastic product chain of a hole.

    ``rows[i]`` lists ``(j, prob)`` transitions that stay out of the hole,
    ``kill[i]`` is the deleted mass and ``completion[i]`` the probability
    that a pending partial match completes.
    """

    hole: HoleSpec
    hole_measure: Number
    states: list[tuple[int, int]]
    rows: list[list[tuple[int, Number]]]
    kill: list[Number]
    completion: list[Number]
    initial: list[Number]
    exact: bool
    automaton: PatternAutomaton = field(repr=False)
    _QT: Optional[sp.csr_matrix] = field(default=None, repr=False)

    @property
    def hole_depth(self) -> int:
        return self.hole.depth

    @property
    def size(self) -> int:
        return len(self.states)

    def transpose_matrix(self) -> sp.csr_matrix:
        if self._QT is None:
            r, c, v = [], [], []
            for i, row in enumerate(self.rows):
                for j, p in row:
                    r.append(j)
                    c.append(i)
                    v.append(float(p))
            n = self.size
            self._QT = sp.csr_matrix((v, (r, c)), shape=(n, n))
        return self._QT

    def dense(self) -> np.ndarray:
        return self.transpose_matrix().T.toarray()

    def row_sums(self) -> list[Number]:
        return [sum((p for _, p in row), start=0 * k) for row, k in zip(self.rows, self.kill)]


def compile_hole(system: SymbolicSystem, mu: MeasureModel, U: HoleSpec, state_cap: int = STATE_CAP) -> OpenChain:
    """Build the open chain of ``U`` under ``mu``.

    Raises :class:`DegenerateHoleError` if the hole carries full mass.
    """
    mu.check_compatible(system)
    U.check(system)
    mass = cylinder_measure(mu, U)
    if mass >= 1 or (not mu.exact and mass >= 1 - 1e-15):
        raise DegenerateHoleError(f"hole {U.describe()} has full measure")
    k = system.alphabet_size
    aut = PatternAutomaton.build(U.words, k)
    zero = 0 * mu.initial(0)
    index: dict[tuple[int, int], int] = {}
    states: list[tuple[int, int]] = []
    initial_mass: dict[int, Number] = {}

    def key_of(q: int, a: int) -> int:
        key = (q, a)
        if key not in index:
            if len(states) >= state_cap:
                raise CapExceededError(f"open chain exceeds {state_cap} states; use Monte Carlo")
            index[key] = len(states)
            states.append(key)
        return index[key]

    for a in range(k):
        q = aut.goto[0][a]
        if mu.initial(a) > 0 and not aut.accepting(q):
            i = key_of(q, a)
            initial_mass[i] = initial_mass.get(i, zero) + mu.initial(a)
    rows: list[list[tuple[int, Number]]] = []
    kill: list[Number] = []
    i = 0
    while i < len(states):
        q, a = states[i]
        row: dict[int, Number] = {}
        lost = zero
        for b in range(k):
            p = mu.transition(a, b)
            if p == 0 or not system.allowed(a, b):
                continue
            nq = aut.goto[q][b]
            if aut.accepting(nq):
                lost += p
            else:
                j = key_of(nq, b)
                row[j] = row.get(j, zero) + p
        rows.append(sorted(row.items()))
        kill.append(lost)
        i += 1
    completion = []
    for q, a in states:
        cont = aut.pending_continuations(q)
        completion.append(sum((_conditional_mass(mu, a, c) for c in cont), start=zero))
    initial = [initial_mass.get(i, zero) for i in range(len(states))]
    return OpenChain(U, mass, states, rows, kill, completion, initial, mu.exact, aut)


def _conditional_mass(mu: MeasureModel, prev: int, cont: Word) -> Number:
    m = mu.transition(prev, cont[0])
    for a, b in zip(cont, cont[1:]):
        m = m * mu.transition(a, b)
    return m


# -- survival -----------------------------------------------------------------

def survival(chain: OpenChain, t: int) -> Number:
    """``mu(tau_U > t)`` by iterated vector-matrix products.

    Exact when the chain was compiled from a rational measure.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 1 + 0 * chain.kill[0] if chain.kill else 1
    if chain.exact:
        v = list(chain.initial)
        for _ in range(t - 1):
            v = _step_exact(chain, v)
        return sum((x * (1 - g) for x, g in zip(v, chain.completion)), start=Fraction(0))
    QT = chain.transpose_matrix()
    v = np.array(chain.initial, dtype=float)
    for _ in range(t - 1):
        v = QT @ v
    return float(v @ (1.0 - np.array(chain.completion, dtype=float)))


def _step_exact(chain: OpenChain, v: list) -> list:
    out = [Fraction(0)] * chain.size
    for i, x in enumerate(v):
        if x:
            for j, p in chain.rows[i]:
                out[j] += x * p
    return out


def survival_sequence(chain: OpenChain, t_max: int) -> list[Number]:
    """``[mu(tau > t) for t in 0..t_max]`` in one sweep."""
    out: list[Number] = [Fraction(1) if chain.exact else 1.0]
    if t_max == 0:
        return out
    if chain.exact:
        v = list(chain.initial)
        for t in range(1, t_max + 1):
            out.append(sum((x * (1 - g) for x, g in zip(v, chain.completion)), start=Fraction(0)))
            v = _step_exact(chain, v)
        return out
    QT = chain.transpose_matrix()
    tail = 1.0 - np.array(chain.completion, dtype=float)
    v = np.array(chain.initial, dtype=float)
    for t in range(1, t_max + 1):
        out.append(float(v @ tail))
        v = QT @ v
    return out


def log_survival(chain: OpenChain, t: int, max_iter: int = 1_000_000, tol: float = 1e-13) -> float:
    """Natural log of ``mu(tau_U > t)`` for arbitrarily large ``t``.

    The state vector is renormalized every step and the lost mass
    accumulated through ``log1p`` of the per-step escape probability, so
    survivals far below the float range are fine. Once the normalized
    vector stops moving (``tol`` in l1) the remaining steps are geometric.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 0.0
    QT = chain.transpose_matrix()
    kill = np.array(chain.kill, dtype=float)
    comp = np.array(chain.completion, dtype=float)
    v = np.array(chain.initial, dtype=float)
    total = v.sum()
    if total <= 0:
        return -math.inf
    logm = math.log(total)
    v = v / total
    steps = t - 1
    done = 0
    while done < steps:
        eps = float(v @ kill)
        if eps >= 1.0:
            return -math.inf
        w = QT @ v
        s = w.sum()
        w = w / s
        logm += math.log1p(-eps)
        done += 1
        moved = float(np.abs(w - v).sum())
        v = w
        if moved <= tol and done < steps:
            eps = float(v @ kill)
            logm += (steps - done) * math.log1p(-eps)
            done = steps
        elif done >= max_iter:
            raise NonConvergenceError("log_survival: state vector did not settle")
    tail = float(v @ comp)
    if tail >= 1.0:
        return -math.inf
    return logm + math.log1p(-tail)


@dataclass
class SurvivalCurve:
    t_values: list[int]
    survival: list[Number]

    @property
    def log_survival(self) -> list[float]:
        return [math.log(s) if s > 0 else -math.inf for s in self.survival]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "survival", "log_survival"])
            for t, s, ls in zip(self.t_values, self.survival, self.log_survival):
                w.writerow([t, repr(float(s)), repr(ls)])

    def to_dict(self) -> dict:
        return {
            "t": list(self.t_values),
            "survival": [to_json_number(s) for s in self.survival],
            "log_survival": list(self.log_survival),
        }


def survival_curve(chain: OpenChain, t_max: int) -> SurvivalCurve:
    return SurvivalCurve(list(range(t_max + 1)), survival_sequence(chain, t_max))


def to_json_number(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return float(x)


# -- escape rate --------------------------------------------------------------

@dataclass
class EscapeRate:
    hole: str
    hole_measure: float
    rho: float
    lam: float
    iterations: int
    slope_rho: float
    slope_check: bool

    def to_dict(self) -> dict:
        return {
            "hole": self.hole,
            "mu(U)": self.hole_measure,
            "rho": self.rho,
            "lambda": self.lam,
            "iterations": self.iterations,
            "slope_rho": self.slope_rho,
            "slope_check": self.slope_check,
        }


def escape_rate(chain: OpenChain, tol: float = 1e-12, max_iter: int = 1_000_000, patience: int = 10) -> EscapeRate:
    """Escape rate ``rho(U) = -log lambda`` with ``lambda`` the spectral radius.

    Power iteration on the normalized survival vector; the Rayleigh quotient
    is carried as the escape probability ``eps = 1 - lambda`` so that tiny
    holes keep full relative precision. Converged when ``eps`` changes by
    less than ``tol`` (relative) for ``patience`` consecutive steps. The
    result is cross-checked against the slope of the log-survival curve.
    """
    QT = chain.transpose_matrix()
    kill = np.array(chain.kill, dtype=float)
    v = np.array(chain.initial, dtype=float)
    if v.sum() <= 0:
        raise DegenerateHoleError("no mass survives the first step")
    v /= v.sum()
    eps_prev = float(v @ kill)
    calm = 0
    it = 0
    while calm < patience:
        it += 1
        if it > max_iter:
            raise NonConvergenceError(f"escape rate not converged after {max_iter} iterations")
        w = QT @ v
        s = w.sum()
        if s <= 0:
            raise DegenerateHoleError("all mass escapes")
        v = w / s
        eps = float(v @ kill)
        # mass needs hole_depth steps to reach the deepest states
        if eps > 0 and it >= chain.hole_depth and abs(eps - eps_prev) <= tol * eps:
            calm += 1
        else:
            calm = 0
        eps_prev = eps
    rho = -math.log1p(-eps_prev)
    T = max(2 * it, 64)
    slope = (_log_survival_plain(chain, T) - _log_survival_plain(chain, 2 * T)) / T
    agree = abs(slope - rho) <= 10 * tol * max(rho, 1.0) + 1e-9 * rho
    if not agree:
        log.warning("escape-rate slope check: power %.15g vs slope %.15g", rho, slope)
    return EscapeRate(chain.hole.describe(), float(chain.hole_measure), rho, 1.0 - eps_prev, it, slope, agree)


def _log_survival_plain(chain: OpenChain, t: int) -> float:
    """Log-survival by explicit stepping (no geometric shortcut)."""
    QT = chain.transpose_matrix()
    kill = np.array(chain.kill, dtype=float)
    comp = np.array(chain.completion, dtype=float)
    v = np.array(chain.initial, dtype=float)
    logm = math.log(v.sum())
    v = v / v.sum()
    for _ in range(t - 1):
        eps = float(v @ kill)
        logm += math.log1p(-eps)
        w = QT @ v
        v = w / w.sum()
    return logm + math.log1p(-float(v @ comp))


# -- Monte Carlo --------------------------------------------------------------

def trial_uniforms(master_seed: int, trial: int, size: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(trial,))))
    return rng.random(size)


def sample_streams(mu: MeasureModel, master_seed: int, trials: int, length: int, first_trial: int = 0) -> np.ndarray:
    """Stationary symbol streams ``z_1..z_length``, one row per trial."""
    mu = mu.to_float() if mu.exact else mu
    U = np.stack([trial_uniforms(master_seed, first_trial + i, length) for i in range(trials)]) if trials else np.empty((0, length))
    k = mu.alphabet_size
    pi_cdf = np.cumsum(mu.stationary())
    P_cdf = np.cumsum(np.array(mu.transition_matrix(), dtype=float), axis=1)
    out = np.empty((trials, length), dtype=np.int64)
    out[:, 0] = np.minimum(np.searchsorted(pi_cdf, U[:, 0], side="right"), k - 1)
    for m in range(1, length):
        cdf = P_cdf[out[:, m - 1]]
        out[:, m] = np.minimum((U[:, m, None] >= cdf).sum(axis=1), k - 1)
    return out


def _first_hits(aut: PatternAutomaton, streams: np.ndarray) -> np.ndarray:
    goto = np.array(aut.goto, dtype=np.int64)
    longest = np.array(aut.longest, dtype=np.int64)
    trials, length = streams.shape
    q = np.zeros(trials, dtype=np.int64)
    best = np.full(trials, np.iinfo(np.int64).max, dtype=np.int64)
    for m in range(length):
        q = goto[q, streams[:, m]]
        lm = longest[q]
        hit = lm > 0
        if hit.any():
            best = np.where(hit, np.minimum(best, m + 1 - lm + 1), best)
    return best


def monte_carlo_survival(system: SymbolicSystem, mu: MeasureModel, U: HoleSpec, t_max: int, trials: int,
                         master_seed: int, workers: int = 1, block: int = 8192) -> SurvivalCurve:
    """Empirical ``mu(tau_U > t)`` for ``t = 0..t_max`` from seeded streams.

    Trial ``i`` draws its symbols from ``SeedSequence(master_seed, spawn_key=(i,))``,
    so the curve does not depend on ``workers`` or ``block``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    mu.check_compatible(system)
    aut = PatternAutomaton.build(U.words, system.alphabet_size)
    length = t_max + U.depth - 1

    def run(start: int) -> np.ndarray:
        n = min(block, trials - start)
        return _first_hits(aut, sample_streams(mu, master_seed, n, max(length, 1), first_trial=start))

    starts = list(range(0, trials, block))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    hits = np.concatenate(parts)
    counts = np.array([(hits > t).sum() for t in range(t_max + 1)])
    return SurvivalCurve(list(range(t_max + 1)), [float(c) / trials for c in counts])


def sup_distance(a: SurvivalCurve, b: SurvivalCurve) -> float:
    return max(abs(float(x) - float(y)) for x, y in zip(a.survival, b.survival))


# -- product relation diagnostics ---------------------------------------------

@dataclass
class ProductRelationReport:
    s: int
    t: int
    k: int
    delta_gap: int
    q: int
    hole_measure: float
    phi: float
    delta: float
    eta: float
    product_lhs: float
    product_rhs: float
    product_holds: bool
    kfold_lhs: float
    kfold_rhs: float
    kfold_holds: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def product_relation_residual(chain: OpenChain, mu: MeasureModel, s: int, k: int, Delta: int,
                              t: Optional[int] = None) -> ProductRelationReport:
    """Both sides of the product inequality for survival and its k-fold form.

    Checks ``|S(t+s) - S(t) S(s)| <= delta S(t - Delta)`` with
    ``delta = 2 (Delta mu(U) + phi(Delta - n))`` and
    ``|S(ks)^(1/(k-2)) - S(s)| <= delta^eta``, ``eta = q/(q+1)``, ``s = q Delta``.
    """
    n = chain.hole_depth
    t = 2 * s if t is None else t
    if not (0 < Delta and 2 * Delta < s):
        raise ValueError("need 0 < Delta < s/2")
    if s % Delta:
        raise ValueError("s must be an integer multiple of Delta")
    if k < 3:
        raise ValueError("k must be at least 3")
    if not s < t:
        raise ValueError("need s < t")
    if Delta < n:
        raise ValueError("need Delta >= hole depth so that phi(Delta - n) is defined")
    q = s // Delta
    phi = phi_coefficient_exact(mu, Delta - n, "left")
    mU = chain.hole_measure
    delta = 2 * (Delta * mU + phi)
    S = survival_sequence(chain, max(t + s, k * s))
    lhs = abs(S[t + s] - S[t] * S[s])
    rhs = delta * S[t - Delta]
    eta = q / (q + 1)
    kfold = abs(float(S[k * s]) ** (1.0 / (k - 2)) - float(S[s]))
    kbound = float(delta) ** eta
    return ProductRelationReport(
        s, t, k, Delta, q, float(mU), float(phi), float(delta), eta,
        float(lhs), float(rhs), bool(lhs <= rhs), kfold, kbound, bool(kfold <= kbound),
    )


def escape_records_json(records: list[EscapeRate]) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2)

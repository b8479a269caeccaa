"""Symbolic systems, points, cylinders and holes.

Words are plain tuples of ints. A word ``w`` of length ``n`` stands for the
n-cylinder ``[w] = {x : x_0 ... x_{n-1} = w}`` of the one-sided shift.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

Word = tuple[int, ...]

DEFAULT_ENUMERATION_CAP = 2**24


class CapExceededError(RuntimeError):
    """A requested enumeration or state space is larger than the configured cap."""


@dataclass(frozen=True)
class SymbolicSystem:
    """Full shift or subshift of finite type on ``alphabet_size`` symbols.

    ``transitions`` is a 0/1 matrix (tuple of tuples); ``None`` means the full
    shift. SFTs must be irreducible and aperiodic.
    """

    alphabet_size: int
    transitions: Optional[tuple[tuple[int, ...], ...]] = None

    def __post_init__(self):
        k = self.alphabet_size
        if k < 2:
            raise ValueError("alphabet_size must be at least 2")
        if self.transitions is None:
            return
        A = tuple(tuple(int(v) for v in row) for row in self.transitions)
        object.__setattr__(self, "transitions", A)
        if len(A) != k or any(len(row) != k for row in A):
            raise ValueError("transition matrix must be alphabet_size x alphabet_size")
        if any(v not in (0, 1) for row in A for v in row):
            raise ValueError("transition matrix must be 0/1")
        M = np.array(A, dtype=np.int64)
        power = M.copy()
        for _ in range(k * k):
            if (power > 0).all():
                break
            power = np.minimum(power @ M, 1)
        else:
            raise ValueError("transition matrix is not irreducible and aperiodic")

    @classmethod
    def full_shift(cls, alphabet_size: int) -> "SymbolicSystem":
        return cls(alphabet_size)

    @classmethod
    def golden_mean(cls) -> "SymbolicSystem":
        """Two-symbol SFT forbidding the word ``11``."""
        return cls(2, ((1, 1), (1, 0)))

    @property
    def is_full_shift(self) -> bool:
        return self.transitions is None

    def allowed(self, a: int, b: int) -> bool:
        return self.transitions is None or self.transitions[a][b] == 1

    def successors(self, a: int) -> list[int]:
        return [b for b in range(self.alphabet_size) if self.allowed(a, b)]

    def is_admissible(self, word: Sequence[int]) -> bool:
        if len(word) == 0:
            return False
        if any(not 0 <= s < self.alphabet_size for s in word):
            return False
        return all(self.allowed(a, b) for a, b in zip(word, word[1:]))

    def check_word(self, word: Sequence[int]) -> Word:
        w = tuple(int(s) for s in word)
        if not self.is_admissible(w):
            raise ValueError(f"inadmissible word {format_word(w)}")
        return w


def format_word(word: Iterable[int]) -> str:
    return "".join(str(s) for s in word)


def parse_word(text: str) -> Word:
    """Parse ``"0110"`` (single digits) or ``"0,1,10"`` (comma separated)."""
    text = text.strip()
    if "," in text:
        return tuple(int(s) for s in text.split(","))
    return tuple(int(c) for c in text)


def enumerate_join(system: SymbolicSystem, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> list[Word]:
    """All admissible words of length ``n`` in lexicographic order.

    These are the n-cylinders, i.e. the elements of the n-th join of the
    one-cylinder partition.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if system.alphabet_size**n > cap:
        raise CapExceededError(f"{system.alphabet_size}^{n} words exceed enumeration cap {cap}")
    words: list[Word] = [(a,) for a in range(system.alphabet_size)]
    for _ in range(n - 1):
        words = [w + (b,) for w in words for b in system.successors(w[-1])]
    return words


# -- points -----------------------------------------------------------------

_STREAM_CHUNK = 4096


@lru_cache(maxsize=256)
def _uniform_chunk(seed: int, index: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    return rng.random(_STREAM_CHUNK)


def thue_morse(n: int) -> Word:
    return tuple(bin(i).count("1") & 1 for i in range(n))


STREAM_GENERATORS = ("iid-uniform", "thue-morse")


@dataclass(frozen=True)
class PointSpec:
    """A point ``z`` of the shift space.

    Either eventually periodic, ``preperiod . period . period ...``, or a
    deterministic stream (``iid-uniform`` with a seed, or ``thue-morse``).
    Eventually periodic points are stored in canonical form: shortest
    preperiod and primitive period, so a point with empty preperiod is
    exactly a periodic point of the shift.
    """

    kind: str
    preperiod: Word = ()
    period: Word = ()
    generator: str = ""
    seed: int = 0
    alphabet_size: int = 2

    def __post_init__(self):
        if self.kind == "periodic":
            pre, per = _canonical_eventually_periodic(tuple(self.preperiod), tuple(self.period))
            object.__setattr__(self, "preperiod", pre)
            object.__setattr__(self, "period", per)
        elif self.kind == "stream":
            if self.generator not in STREAM_GENERATORS:
                raise ValueError(f"unknown stream generator {self.generator!r}")
        else:
            raise ValueError(f"unknown point kind {self.kind!r}")

    @classmethod
    def periodic(cls, period: Sequence[int], preperiod: Sequence[int] = ()) -> "PointSpec":
        return cls("periodic", preperiod=tuple(preperiod), period=tuple(period))

    @classmethod
    def stream(cls, generator: str, seed: int = 0, alphabet_size: int = 2) -> "PointSpec":
        return cls("stream", generator=generator, seed=seed, alphabet_size=alphabet_size)

    @property
    def is_shift_periodic(self) -> bool:
        return self.kind == "periodic" and not self.preperiod

    def prefix(self, n: int, system: Optional[SymbolicSystem] = None) -> Word:
        """First ``n`` symbols of the point."""
        if self.kind == "periodic":
            pre, per = self.preperiod, self.period
            if n <= len(pre):
                return pre[:n]
            reps = (n - len(pre)) // len(per) + 1
            return (pre + per * reps)[:n]
        if self.generator == "thue-morse":
            return thue_morse(n)
        return self._uniform_prefix(n, system)

    def _uniform_prefix(self, n: int, system: Optional[SymbolicSystem]) -> Word:
        k = system.alphabet_size if system is not None else self.alphabet_size
        out: list[int] = []
        i = 0
        while len(out) < n:
            u = _uniform_chunk(self.seed, i // _STREAM_CHUNK)[i % _STREAM_CHUNK]
            choices = list(range(k)) if not out or system is None else system.successors(out[-1])
            out.append(choices[int(u * len(choices))])
            i += 1
        return tuple(out)

    def check(self, system: SymbolicSystem) -> None:
        if self.kind == "periodic":
            if not system.is_admissible(self.preperiod + self.period + self.period):
                raise ValueError("preperiod.period.period is not admissible")
        elif self.alphabet_size != system.alphabet_size and self.generator == "iid-uniform":
            raise ValueError("stream alphabet does not match system")

    def describe(self) -> str:
        if self.kind == "periodic":
            pre = format_word(self.preperiod)
            return f"{pre}({format_word(self.period)})^inf"
        return f"{self.generator}[seed={self.seed}]"


def _primitive_root(word: Word) -> Word:
    n = len(word)
    for d in range(1, n + 1):
        if n % d == 0 and word[:d] * (n // d) == word:
            return word[:d]
    return word


def _canonical_eventually_periodic(pre: Word, per: Word) -> tuple[Word, Word]:
    if not per:
        raise ValueError("period must be non-empty")
    per = _primitive_root(per)
    # absorb the tail of the preperiod into a rotated period
    while pre and pre[-1] == per[-1]:
        pre = pre[:-1]
        per = per[-1:] + per[:-1]
    return pre, per


def cylinder_around(z: PointSpec, n: int, system: Optional[SymbolicSystem] = None) -> Word:
    if n < 1:
        raise ValueError("n must be positive")
    return z.prefix(n, system)


def prime_period(z: PointSpec, bound: int) -> Optional[int]:
    """Smallest ``p <= bound`` with ``shift^p(z) == z``, else ``None``.

    Only points with empty (canonical) preperiod are periodic. Streams are
    never certified periodic; see :func:`period_status` for the reason.
    """
    if bound < 1:
        raise ValueError("bound must be positive")
    if not z.is_shift_periodic:
        return None
    p = len(z.period)
    return p if p <= bound else None


def period_status(z: PointSpec, bound: int, system: Optional[SymbolicSystem] = None) -> str:
    """Classify ``z`` as ``periodic``, ``preperiodic``, ``period-exceeds-bound``,
    ``no-period-within-bound`` (stream whose prefix rules out every p <= bound)
    or ``undecided`` (a stream prefix consistent with some p <= bound)."""
    if z.kind == "periodic":
        if z.preperiod:
            return "preperiodic"
        return "periodic" if len(z.period) <= bound else "period-exceeds-bound"
    w = z.prefix(4 * bound + 16, system)
    for p in range(1, bound + 1):
        if w[p:] == w[: len(w) - p]:
            return "undecided"
    return "no-period-within-bound"


def intersected_cylinder(z: PointSpec, n: int, p: int, u: int) -> Word:
    """The cylinder ``U_n & T^-p U_n & ... & T^-up U_n`` at a p-periodic point.

    Requires ``n >= p`` when ``u >= 1``: only then do consecutive copies
    overlap, making the intersection the single cylinder of the first
    ``n + u*p`` symbols of z.
    """
    if n < 1 or u < 0:
        raise ValueError("need n >= 1 and u >= 0")
    if not z.is_shift_periodic or len(z.period) != p:
        raise ValueError("z is not a periodic point with prime period p")
    if u >= 1 and n < p:
        raise ValueError("n < p: the intersection is not a single cylinder")
    return z.prefix(n + u * p)


@dataclass(frozen=True)
class HoleSpec:
    """A finite union of cylinders, normalized to a prefix-free word set."""

    words: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        ws = {tuple(int(s) for s in w) for w in self.words}
        if not ws or any(len(w) == 0 for w in ws):
            raise ValueError("a hole needs at least one non-empty word")
        object.__setattr__(self, "words", frozenset(prefix_free(ws)))

    @classmethod
    def of(cls, *words: Sequence[int] | str, system: Optional[SymbolicSystem] = None) -> "HoleSpec":
        ws = [parse_word(w) if isinstance(w, str) else tuple(w) for w in words]
        if system is not None:
            ws = [system.check_word(w) for w in ws]
        return cls(frozenset(ws))

    @property
    def depth(self) -> int:
        return max(len(w) for w in self.words)

    def sorted_words(self) -> list[Word]:
        return sorted(self.words, key=lambda w: (len(w), w))

    def contains_prefix_of(self, seq: Sequence[int]) -> bool:
        seq = tuple(seq)
        return any(seq[: len(w)] == w for w in self.words)

    def check(self, system: SymbolicSystem) -> None:
        for w in self.words:
            system.check_word(w)

    def describe(self) -> str:
        return "{" + ",".join(format_word(w) for w in self.sorted_words()) + "}"


def prefix_free(words: Iterable[Word]) -> set[Word]:
    """Drop every word that has a proper prefix in the set (it is subsumed)."""
    ws = sorted(set(words), key=len)
    kept: set[Word] = set()
    for w in ws:
        if not any(w[:i] in kept for i in range(1, len(w))):
            kept.add(w)
    return kept


def outer_j_approximation(U: HoleSpec, j: int, side: str, system: SymbolicSystem) -> set[Word]:
    """j-cylinders meeting U (``right``) or meeting ``T^(n-j) U`` (``left``).

    Shorter hole words are first completed to admissible words of length j
    when needed. For the left side the forward image of ``[w]`` under
    ``T^(n-j)`` is the cylinder of the last j symbols of w, which holds on a
    topologically mixing SFT.
    """
    n = U.depth
    if not 1 <= j <= n:
        raise ValueError(f"j must lie in [1, {n}]")
    out: set[Word] = set()
    if side == "right":
        for w in U.words:
            if len(w) >= j:
                out.add(w[:j])
            else:
                out.update(_extensions(w, j, system))
    elif side == "left":
        # pad every word to the common depth n, then take suffixes
        for w in U.words:
            for full in _extensions(w, n, system):
                out.add(full[n - j :])
    else:
        raise ValueError("side must be 'left' or 'right'")
    return out


def _extensions(w: Word, length: int, system: SymbolicSystem) -> list[Word]:
    words = [w]
    for _ in range(length - len(w)):
        words = [v + (b,) for v in words for b in system.successors(v[-1])]
    return words


def words_in_union(U: HoleSpec, length: int, system: SymbolicSystem) -> list[Word]:
    """Admissible words of the given length whose cylinder lies inside U."""
    return [w for w in enumerate_join(system, length) if U.contains_prefix_of(w)]


def all_words(alphabet_size: int, n: int) -> Iterable[Word]:
    return itertools.product(range(alphabet_size), repeat=n)

"""Extremal index, the L(alpha, s) family, localized escape rates and the
hypothesis checklist for cylinder neighbourhoods ``U_n = [z_1 .. z_n]``.

For ``alpha`` in ``(0, inf)`` the finite-n value is

    L_n = -log mu(tau_{U_n} > t_n) / (s * mu(U_n)^(1 - alpha)),
    t_n = ceil(s * mu(U_n)^(-alpha)).

At a non-periodic point the limit is 1; at a point of prime period ``p`` it
is ``1 - theta`` with ``theta = lim mu(U_n & T^-p U_n) / mu(U_n)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .engine import (
    NonConvergenceError,
    OpenChain,
    compile_hole,
    escape_rate,
    log_survival,
    monte_carlo_survival,
    survival_sequence,
)
from .measures import (
    MeasureModel,
    Number,
    PhiProfile,
    cylinder_measure,
    pattern_measure,
    phi_profile,
)
from .symbolic import (
    CapExceededError,
    HoleSpec,
    PointSpec,
    SymbolicSystem,
    enumerate_join,
    outer_j_approximation,
    prime_period,
)

INF = "inf"


# -- extrapolation --------------------------------------------------------------

@dataclass(frozen=True)
class Extrapolation:
    limit: float
    bracket: tuple[float, float]
    converged: bool
    accelerated: bool

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    def to_dict(self) -> dict:
        return {
            "limit": self.limit,
            "bracket": list(self.bracket),
            "converged": self.converged,
            "accelerated": self.accelerated,
        }


def extrapolate_limit(points: Sequence[tuple[float, float]], tol: float = 1e-3,
                      ratio_variation: float = 0.2, max_ratio: float = 0.95) -> Extrapolation:
    """Estimate the limit of a finite sequence ``[(index, value), ...]``.

    Aitken's delta-squared process is applied only when the increment ratio
    is stable (variation below ``ratio_variation`` over the last three steps)
    and contracting; otherwise the last value is returned. The bracket spans
    the last three (possibly accelerated) values.
    """
    vals = [float(v) for _, v in points]
    if len(vals) < 4:
        raise ValueError("need at least 4 points to extrapolate")
    d = np.diff(vals)
    last = d[-4:]
    ratios = []
    for a, b in zip(last[:-1], last[1:]):
        if a == 0 or not math.isfinite(a) or not math.isfinite(b):
            ratios = None
            break
        ratios.append(b / a)
    stable = (
        ratios is not None
        and len(ratios) >= 2
        and max(ratios) - min(ratios) < ratio_variation
        and max(abs(r) for r in ratios) < max_ratio
    )
    if stable:
        acc = []
        for i in range(max(0, len(vals) - 5), len(vals) - 2):
            den = d[i + 1] - d[i]
            if den == 0:
                break
            acc.append(vals[i + 2] - d[i + 1] ** 2 / den)
        else:
            tail = [float(x) for x in acc[-3:]]
            return Extrapolation(tail[-1], (min(tail), max(tail)), bool(max(tail) - min(tail) <= tol), True)
    tail = vals[-3:]
    return Extrapolation(tail[-1], (min(tail), max(tail)), bool(max(tail) - min(tail) <= tol), False)


# -- theta ----------------------------------------------------------------------

@dataclass
class ThetaEstimate:
    p: int
    per_n: list[tuple[int, Number]]
    limit: Number
    converged: bool
    below_half: bool

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "per_n": [[n, _num(r)] for n, r in self.per_n],
            "limit": _num(self.limit),
            "limit_float": float(self.limit),
            "converged": self.converged,
            "below_half": self.below_half,
        }


def _num(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return float(x)


def _require_period(z: PointSpec, p: int) -> None:
    if prime_period(z, max(p, 1)) != p:
        raise ValueError(f"{z.describe()} is not periodic with prime period {p}")


def overlap_ratio(z: PointSpec, p: int, n: int, mu: MeasureModel) -> Number:
    """``mu(U_n & T^-p U_n) / mu(U_n)`` for the cylinder ``U_n`` around z."""
    w = z.prefix(n + p)
    base = cylinder_measure(mu, w[:n])
    if n >= p:
        return cylinder_measure(mu, w) / base
    constraints = {i: w[i] for i in range(n)}
    constraints.update({p + i: w[i] for i in range(n)})
    return pattern_measure(mu, constraints) / base


def theta(z: PointSpec, p: int, mu: MeasureModel, n_range: Iterable[int], tol: float = 1e-9) -> ThetaEstimate:
    """Extremal index at a p-periodic point, one exact ratio per n."""
    _require_period(z, p)
    ns = list(n_range)
    if not ns:
        raise ValueError("empty n_range")
    per_n = [(n, overlap_ratio(z, p, n, mu)) for n in ns]
    last = [r for _, r in per_n[-3:]]
    converged = max(last) - min(last) <= tol
    limit = per_n[-1][1]
    return ThetaEstimate(p, per_n, limit, converged, limit < Fraction(1, 2))


def theta_gibbs(z: PointSpec, mu: MeasureModel) -> Number:
    """``exp(S_p phi(z))`` for the locally constant potential ``phi = log P(x0, x1)``.

    That is the product of transition weights around the periodic orbit.
    """
    per = z.period
    if not z.is_shift_periodic:
        raise ValueError("z is not periodic")
    m = 1 + 0 * mu.initial(0)
    for i, a in enumerate(per):
        m = m * mu.transition(a, per[(i + 1) % len(per)])
    return m


# -- L(alpha, s) ------------------------------------------------------------------

def hitting_horizon(s, mass: Number, alpha: float) -> int:
    """``ceil(s * mass^-alpha)``, exact when mass is rational and alpha integral."""
    if isinstance(mass, Fraction) and float(alpha).is_integer():
        val = Fraction(s) / mass ** int(alpha) if not isinstance(s, float) else Fraction(repr(s)) / mass ** int(alpha)
        return max(1, math.ceil(val))
    x = float(s) * float(mass) ** (-float(alpha))
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, x):
        return max(1, int(r))
    return max(1, math.ceil(x))


@dataclass
class LPoint:
    n: int
    mass: float
    t: int
    value: float
    method: str = "exact"
    ci: Optional[tuple[float, float]] = None

    def to_dict(self) -> dict:
        d = {"n": self.n, "mu(U_n)": self.mass, "t": self.t, "value": self.value, "method": self.method}
        if self.ci is not None:
            d["ci"] = list(self.ci)
        return d


@dataclass
class LCurve:
    alpha: Union[float, str]
    s: float
    per_n: list[LPoint]
    extrapolated: float = math.nan
    bracket: tuple[float, float] = (math.nan, math.nan)
    converged: bool = False
    warnings: list[str] = field(default_factory=list)

    def finish(self, tol: float = 1e-3) -> "LCurve":
        pts = [(p.n, p.value) for p in self.per_n if math.isfinite(p.value)]
        if len(pts) >= 4:
            ex = extrapolate_limit(pts, tol=tol)
            self.extrapolated, self.bracket, self.converged = ex.limit, ex.bracket, ex.converged
        elif pts:
            self.extrapolated = pts[-1][1]
            vals = [v for _, v in pts]
            self.bracket = (min(vals[-3:]), max(vals[-3:]))
        return self

    @property
    def values(self) -> list[float]:
        return [p.value for p in self.per_n]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "s": self.s,
            "per_n": [p.to_dict() for p in self.per_n],
            "extrapolated": self.extrapolated,
            "bracket": list(self.bracket),
            "converged": self.converged,
            "warnings": list(self.warnings),
        }

    def write_csv(self, path) -> None:
        """Convergence table with running brackets over the last three values."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "value", "bracket_low", "bracket_high"])
            vals = self.values
            for i, p in enumerate(self.per_n):
                win = vals[max(0, i - 2): i + 1]
                w.writerow([p.n, repr(p.value), repr(min(win)), repr(max(win))])


def neighbourhood(z: PointSpec, n: int, system: SymbolicSystem) -> HoleSpec:
    return HoleSpec(frozenset([z.prefix(n, system)]))


def l_value(chain: OpenChain, alpha: float, s: float) -> tuple[int, float]:
    """Finite-hole value of ``L(alpha, s)`` for a compiled hole."""
    mass = chain.hole_measure
    t = hitting_horizon(s, mass, alpha)
    ls = log_survival(chain, t)
    return t, -ls / (float(s) * float(mass) ** (1.0 - float(alpha)))


def _float_measure(mu: MeasureModel) -> MeasureModel:
    return mu.to_float() if mu.exact else mu


def l_alpha_s(z: PointSpec, alpha: float, s: float, mu: MeasureModel, system: SymbolicSystem,
              n_range: Iterable[int], tol: float = 1e-3, mc_trials: int = 20_000,
              mc_horizon: int = 200_000, master_seed: int = 0) -> LCurve:
    """``L(alpha, s)`` along the cylinders around ``z`` with extrapolation in n.

    Exact survival is used whenever the open chain fits the state cap,
    otherwise Monte Carlo with a binomial 3-sigma interval; a horizon beyond
    ``mc_horizon`` ends the curve with a warning.
    """
    if not (0 < float(alpha) < math.inf) or float(s) <= 0:
        raise ValueError("need alpha in (0, inf) and s > 0")
    fmu = _float_measure(mu)
    curve = LCurve(float(alpha), float(s), [])
    for n in n_range:
        U = neighbourhood(z, n, system)
        try:
            chain = compile_hole(system, fmu, U)
        except CapExceededError:
            mass = cylinder_measure(mu, z.prefix(n, system))
            t = hitting_horizon(s, mass, alpha)
            if t > mc_horizon:
                curve.warnings.append(f"n={n}: horizon {t} exceeds Monte Carlo budget; curve truncated")
                break
            curve.per_n.append(_mc_point(system, fmu, U, n, float(mass), t, alpha, s, mc_trials, master_seed))
            continue
        t, val = l_value(chain, alpha, s)
        curve.per_n.append(LPoint(n, float(chain.hole_measure), t, val))
    return curve.finish(tol)


def _mc_point(system, mu, U, n, mass, t, alpha, s, trials, seed) -> LPoint:
    emp = monte_carlo_survival(system, mu, U, t, trials, seed)
    sv = float(emp.survival[t])
    half = 3 * math.sqrt(max(sv * (1 - sv), 1.0 / trials) / trials)
    scale = float(s) * mass ** (1.0 - float(alpha))

    def L(x):
        return -math.log(x) / scale if x > 0 else math.inf

    return LPoint(n, mass, t, L(sv), "monte-carlo", (L(min(1.0, sv + half)), L(max(0.0, sv - half))))


def localized_escape_rate(z: PointSpec, mu: MeasureModel, system: SymbolicSystem, n_range: Iterable[int],
                          tol: float = 1e-3, rate_tol: float = 1e-12, max_iter: int = 200_000) -> LCurve:
    """``rho(U_n) / mu(U_n)`` per n (the ``alpha = inf`` member of the family)."""
    fmu = _float_measure(mu)
    curve = LCurve(INF, math.nan, [])
    for n in n_range:
        chain = compile_hole(system, fmu, neighbourhood(z, n, system))
        try:
            er = escape_rate(chain, tol=rate_tol, max_iter=max_iter)
        except NonConvergenceError as exc:
            curve.warnings.append(f"n={n}: {exc}")
            continue
        if not er.slope_check:
            curve.warnings.append(f"n={n}: escape-rate slope check disagrees")
        curve.per_n.append(LPoint(n, er.hole_measure, 0, er.rho / er.hole_measure, "power-iteration"))
    return curve.finish(tol)


# -- alpha = 0 -----------------------------------------------------------------------

@dataclass
class LZeroPoint:
    s: int
    inner: list[tuple[int, float]]
    inner_limit: float
    inner_converged: bool
    bracket: Optional[tuple[float, float]] = None

    def to_dict(self) -> dict:
        d = {
            "s": self.s,
            "inner": [[n, v] for n, v in self.inner],
            "inner_limit": self.inner_limit,
            "inner_converged": self.inner_converged,
        }
        if self.bracket is not None:
            d["period_bracket"] = list(self.bracket)
        return d


@dataclass
class LZeroCurve:
    per_s: list[LZeroPoint]
    outer: float
    outer_trend: list[float]

    def to_dict(self) -> dict:
        return {"alpha": 0, "per_s": [p.to_dict() for p in self.per_s], "outer": self.outer,
                "outer_trend": self.outer_trend}


def l_zero(z: PointSpec, s_range: Iterable[int], mu: MeasureModel, system: SymbolicSystem,
           n_range: Iterable[int], tol: float = 1e-3, period_bound: int = 64) -> LZeroCurve:
    """Iterated limit: n to infinity at fixed integer s, then s to infinity.

    At a p-periodic point each s = kp + r is also bracketed between the
    values built from survival at times (k+1)p - 1 and kp - 1, both divided
    by the same s.
    """
    ss = [int(s) for s in s_range]
    if any(b <= a for a, b in zip(ss, ss[1:])) or not ss or ss[0] < 1:
        raise ValueError("s_range must be increasing positive integers")
    ns = list(n_range)
    fmu = _float_measure(mu)
    p = prime_period(z, period_bound)
    s_max = max(ss)
    horizon = s_max if p is None else (s_max // p + 1) * p
    logs: dict[int, tuple[float, list[float]]] = {}
    for n in ns:
        chain = compile_hole(system, fmu, neighbourhood(z, n, system))
        S = survival_sequence(chain, horizon)
        logs[n] = (float(chain.hole_measure), [math.log(v) if v > 0 else -math.inf for v in S])
    per_s = []
    for s in ss:
        inner = [(n, -logs[n][1][s] / (s * logs[n][0])) for n in ns]
        if len(inner) >= 4:
            ex = extrapolate_limit(inner, tol=tol)
            lim, conv = ex.limit, ex.converged
        else:
            lim, conv = inner[-1][1], False
        bracket = None
        if p is not None:
            k = s // p
            n_last = ns[-1]
            mass, ls = logs[n_last]
            lo = -ls[k * p - 1] / (s * mass) if k * p >= 1 else 0.0
            hi = -ls[(k + 1) * p - 1] / (s * mass)
            bracket = (lo, hi)
        per_s.append(LZeroPoint(s, inner, lim, conv, bracket))
    trend = [pt.inner_limit for pt in per_s]
    return LZeroCurve(per_s, trend[-1], trend)


# -- union identity--------------------------------------------------------------------

@dataclass
class UnionCheck:
    n: int
    k: int
    p: int
    exact: Number
    prediction: Number
    defect: Number
    overlapping: bool

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "p": self.p, "exact": _num(self.exact),
                "prediction": _num(self.prediction), "relative_defect": _num(self.defect),
                "overlapping": self.overlapping}


def union_measure_check(z: PointSpec, p: int, n: int, k: int, mu: MeasureModel,
                        system: Optional[SymbolicSystem] = None, cap: int = 2**20) -> UnionCheck:
    """Exact ``mu(U_n | T^-p U_n | ... | T^-kp U_n)`` against ``mu(U_n)(k + 1 - k theta)``.

    The exact side is a weighted enumeration of all words of length
    ``n + kp``. ``overlapping`` (``kp <= n``) marks the regime where every
    copy overlaps the first one; there the identity holds with no error term
    for exact-ratio measures.
    """
    _require_period(z, p)
    system = system or SymbolicSystem(mu.alphabet_size)
    length = n + k * p
    if system.alphabet_size**length > cap:
        raise CapExceededError(f"union check needs {system.alphabet_size}^{length} words")
    target = z.prefix(n)
    zero = 0 * mu.initial(0)
    total = zero
    for w in enumerate_join(system, length):
        if any(w[i * p: i * p + n] == target for i in range(k + 1)):
            if all(mu.transition(a, b) != 0 for a, b in zip(w, w[1:])):
                total += cylinder_measure(mu, w)
    base = cylinder_measure(mu, target)
    th = overlap_ratio(z, p, max(n, p), mu)
    pred = base * (k + 1 - k * th)
    return UnionCheck(n, k, p, total, pred, abs(total - pred) / pred, k * p <= n)


# -- hypothesis checklist ----------------------------------------------------------------

@dataclass
class HypothesisReport:
    n1: dict
    n2: dict
    case: dict
    theta_below_half: Optional[bool]
    passed: bool
    reasons: list[str]

    def to_dict(self) -> dict:
        return {"n1": self.n1, "n2": self.n2, "case": self.case,
                "theta_below_half": self.theta_below_half, "passed": self.passed, "reasons": self.reasons}


def _loglog_slope(xs, ys) -> float:
    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    return float(coef[0])


def check_hypotheses(z: PointSpec, mu: MeasureModel, system: SymbolicSystem, alpha: float,
                     n_range: Sequence[int], eps: float = 0.5, beta: float = 0.9, K: float = 1.0,
                     a: float = 0.5, xi: float = 0.5, margin: float = 0.01, profile: Optional[PhiProfile] = None,
                     period_bound: int = 64, n2_tol: float = 1e-9, max_vectors: int = 4096) -> HypothesisReport:
    """Recompute the adapted-system conditions and the case hypotheses of the limit law.

    (N1) looks at ``mu(U_n^j)`` for ``j <= K n`` (left outer approximations):
    geometric decay passes with ``gamma' = inf``, otherwise ``gamma'`` is the
    log-log slope. (N2) compares every
    intersection over p-multiples ``0 = i_0 < ... < i_k <= a_n n`` with
    ``mu(U_{n, i_k / p})``. The case is B2 when ``mu(U_n)`` decays
    geometrically (with ``xi_1, xi_2`` the fitted base -/+ ``margin``) and
    B1 otherwise; the phi-power inequality ``m >= (1 - eps)/(beta eps)`` is
    checked against the fitted decay of phi and passes vacuously for
    exponential phi.
    """
    if not 0 < eps < min(1.0, float(alpha)):
        raise ValueError("need 0 < eps < min(1, alpha)")
    if not 0 < beta < 1:
        raise ValueError("need 0 < beta < 1")
    if not 0 < K <= 1:
        raise ValueError("need 0 < K <= 1")
    ns = sorted(n_range)
    reasons: list[str] = []
    p = prime_period(z, period_bound)

    # (N1)
    n_top = ns[-1]
    U = neighbourhood(z, n_top, system)
    js = list(range(1, max(2, int(K * n_top)) + 1))
    masses = [float(cylinder_measure(mu, HoleSpec(frozenset(outer_j_approximation(U, j, "left", system))))) for j in js]
    jarr, lmass = np.array(js, dtype=float), np.log(masses)
    # geometric decay in j meets the polynomial bound for every exponent
    geometric = len(js) >= 3 and _fit_residual(jarr, lmass) <= _fit_residual(np.log(jarr), lmass) \
        and _loglog_slope(jarr, lmass) < 0
    gamma = math.inf if geometric else -_loglog_slope(np.log(jarr), lmass)
    n1_pass = gamma > 1
    n1 = {"gamma_prime": gamma, "decay": "geometric" if geometric else "polynomial", "K": K, "n": n_top,
          "j": js, "masses": masses, "pass": n1_pass}
    if not n1_pass:
        reasons.append(f"N1: fitted gamma' = {gamma:.3g} <= 1")

    # mu(U_n) decay class
    mass_n = [float(cylinder_measure(mu, z.prefix(n, system))) for n in ns]
    log_m = np.log(mass_n)
    arr = np.array(ns, dtype=float)
    base = math.exp(_loglog_slope(arr, log_m)) if len(ns) >= 2 else mass_n[0] ** (1 / ns[0])
    res_exp = _fit_residual(arr, log_m)
    res_poly = _fit_residual(np.log(arr), log_m)
    exponential = len(ns) < 3 or res_exp <= res_poly

    # (N2)
    if p is None:
        n2 = {"applicable": False, "pass": True}
    else:
        worst = 0.0
        checked = 0
        for n in ns:
            a_n = a if exponential else n ** (-(1 - xi))
            top = int(a_n * n) // p
            mults = [i * p for i in range(1, top + 1)]
            for r in range(0, len(mults) + 1):
                for combo in itertools.combinations(mults, r):
                    if checked >= max_vectors:
                        break
                    idx = (0,) + combo
                    w = z.prefix(n + idx[-1], system)
                    cons = {}
                    for i in idx:
                        cons.update({i + j: w[i + j] for j in range(n)})
                    lhs = pattern_measure(mu, cons, system)
                    rhs = cylinder_measure(mu, w)
                    worst = max(worst, float(abs(lhs - rhs) / rhs))
                    checked += 1
        n2 = {"applicable": True, "a_n": "constant %g" % a if exponential else f"n^-(1-{xi})",
              "vectors": checked, "max_relative_defect": worst, "pass": worst <= n2_tol}
        if not n2["pass"]:
            reasons.append(f"N2: relative defect {worst:.3g}")

    # (B1)/(B2)
    prof = profile if profile is not None else (phi_profile(mu, 16) if mu.kind == "markov" else None)
    required_m = (1 - eps) / (beta * eps)
    if prof is None:
        m_check = {"phi": "identically zero", "required_m": required_m, "pass": True, "vacuous": True}
    elif prof.classification.kind == "exponential":
        m_check = {"phi": "exponential", "rate": prof.classification.value, "required_m": required_m,
                   "pass": True, "vacuous": True}
    elif prof.classification.kind == "polynomial":
        m = prof.classification.value
        m_check = {"phi": "polynomial", "m": m, "required_m": required_m, "pass": m >= required_m, "vacuous": False}
    else:
        m_check = {"phi": "undetermined", "required_m": required_m, "pass": False, "vacuous": False}
    if not m_check["pass"]:
        reasons.append(f"B1: phi power {m_check.get('m', 'n/a')} below required {required_m:.4g}")
    if exponential:
        xi1, xi2 = base - margin, base + margin
        lower = [m / xi1**n for m, n in zip(mass_n, ns)]
        upper = [m / xi2**n for m, n in zip(mass_n, ns)]
        # bounds hold up to constants: compare values one period apart
        step = p or 1
        ok = (0 < xi1 < xi2 < 1
              and all(b >= a_ - 1e-12 * abs(a_) for a_, b in zip(lower, lower[step:]))
              and all(b <= a_ + 1e-12 * abs(a_) for a_, b in zip(upper, upper[step:])))
        case = {"branch": "B2", "xi1": xi1, "xi2": xi2, "fitted_base": base, "bounds_pass": ok,
                "m_check": m_check, "pass": ok and m_check["pass"]}
        if not ok:
            reasons.append("B2: mu(U_n) not bracketed by xi1^n and xi2^n")
    else:
        gammas = [-math.log(m) / math.log(n) for m, n in zip(mass_n, ns) if n > 1]
        g1, g2 = min(gammas), max(gammas)
        ok = 1 < g1 < g2
        case = {"branch": "B1", "gamma_prime": g1, "gamma_double_prime": g2, "bounds_pass": ok,
                "m_check": m_check, "pass": ok and m_check["pass"]}
        if not ok:
            reasons.append("B1: polynomial decay exponents not in (1, inf)")

    below = None
    if p is not None:
        th = overlap_ratio(z, p, max(ns[-1], p), mu)
        below = th < Fraction(1, 2) if isinstance(th, Fraction) else th < 0.5
        if not below:
            reasons.append(f"theta = {th} is not below 1/2")
    passed = n1["pass"] and n2["pass"] and case["pass"] and (below is not False)
    return HypothesisReport(n1, n2, case, below, passed, reasons)


def _fit_residual(x, y) -> float:
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(np.sqrt(np.mean((y - A @ coef) ** 2)))

"""Config-driven experiment runner and run records.

``run`` validates nothing itself (configs are validated on construction),
dispatches on ``config.kind``, writes one JSON record plus CSV curves into
``config.out_dir`` and returns a :class:`RunRecord`. ``replay`` re-executes
the config echoed in a record and compares result payloads.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .balls import doubling_period, l_ball, growth_ratios, theta_ball
from .config import ConfigError, ExperimentConfig
from .engine import (
    DegenerateHoleError,
    NonConvergenceError,
    compile_hole,
    escape_rate,
    monte_carlo_survival,
    sup_distance,
    survival_curve,
)
from .measures import phi_profile, second_eigenvalue_modulus
from .recurrence import (
    check_hypotheses,
    l_alpha_s,
    l_zero,
    localized_escape_rate,
    theta,
    theta_gibbs,
    union_measure_check,
)
from .symbolic import CapExceededError, prime_period

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAP = 3
EXIT_NONCONVERGENCE = 4
EXIT_REPLAY_MISMATCH = 5


def jsonable(x: Any) -> Any:
    """Plain-JSON view: rationals as strings, non-finite floats as strings."""
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


@dataclass
class RunRecord:
    config: dict
    version: str
    wall_time: float
    status: str
    results: dict
    warnings: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return {"ok": EXIT_OK, "cap-exceeded": EXIT_CAP, "non-convergence": EXIT_NONCONVERGENCE}.get(self.status, EXIT_CONFIG)

    def to_dict(self) -> dict:
        return jsonable({
            "config": self.config,
            "version": self.version,
            "wall_time": self.wall_time,
            "status": self.status,
            "results": self.results,
            "warnings": self.warnings,
            "outputs": self.outputs,
        })

    @classmethod
    def load(cls, path) -> "RunRecord":
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["config"], d["version"], d["wall_time"], d["status"], d["results"],
                   d.get("warnings", []), d.get("outputs", []))


class _Writer:
    """Collects output files; nothing touches the disk when ``root`` is None."""

    def __init__(self, root: Optional[str]):
        self.root = Path(root) if root is not None else None
        self.files: list[str] = []

    def csv(self, name: str, write: Callable[[Path], None]) -> None:
        if self.root is None:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / name
        write(path)
        self.files.append(str(path))


def _grid(cfg: ExperimentConfig, items, fn):
    """Evaluate ``fn`` over ``items`` with ``cfg.threads`` workers, preserving order."""
    if cfg.threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _tag(x) -> str:
    return str(x).replace("/", "_").replace(".", "p")


# -- experiment kinds -------------------------------------------------------

def _survival(cfg, out, res, warn):
    system, mu, U = cfg.symbolic_system(), cfg.measure_model(), cfg.hole_spec()
    chain = compile_hole(system, mu, U, cfg.caps.state_cap)
    curve = survival_curve(chain, cfg.grids.t_max)
    res["hole"] = U.describe()
    res["mu(U)"] = chain.hole_measure
    res["states"] = chain.size
    res["curve"] = curve.to_dict()
    out.csv("survival.csv", curve.write_csv)
    if cfg.caps.mc_trials:
        N = cfg.caps.mc_trials
        emp = monte_carlo_survival(system, mu, U, cfg.grids.t_max, N, cfg.master_seed, workers=cfg.threads)
        res["monte_carlo"] = {
            "trials": N,
            "curve": emp.to_dict(),
            "sup_distance": sup_distance(emp, curve),
            "bound": 3 / math.sqrt(N),
        }
        out.csv("survival_mc.csv", emp.write_csv)


def _escape_rate(cfg, out, res, warn):
    system, mu, U = cfg.symbolic_system(), cfg.measure_model(), cfg.hole_spec()
    fmu = mu.to_float() if mu.exact else mu
    chain = compile_hole(system, fmu, U, cfg.caps.state_cap)
    er = escape_rate(chain, tol=cfg.tolerances.rate, max_iter=cfg.caps.max_iter)
    if not er.slope_check:
        warn.append("power-iteration rate and log-survival slope disagree")
    res.update(er.to_dict())
    res["rho/mu(U)"] = er.rho / float(er.hole_measure)


def _period(cfg, z) -> int:
    p = cfg.grids.p or prime_period(z, cfg.caps.period_bound)
    if p is None:
        raise ConfigError(f"point {z.describe()} is not periodic within bound {cfg.caps.period_bound}")
    return p


def _theta(cfg, out, res, warn):
    z, mu = cfg.point_spec(), cfg.measure_model()
    p = _period(cfg, z)
    est = theta(z, p, mu, cfg.n_values(), tol=cfg.tolerances.theta)
    res.update(est.to_dict())
    res["gibbs_weight"] = theta_gibbs(z, mu)
    if not est.below_half:
        warn.append(f"theta = {float(est.limit):.6g} is not below 1/2; the periodic branch of the dichotomy is out of hypothesis")


def _lcurve(cfg, out, res, warn):
    system, mu, z = cfg.symbolic_system(), cfg.measure_model(), cfg.point_spec()
    grid = []
    for a in cfg.alphas():
        for s in ([None] if a == "inf" else cfg.grids.s):
            grid.append((a, s))

    def one(item):
        a, s = item
        if a == "inf":
            return localized_escape_rate(z, mu, system, cfg.n_values(), tol=cfg.tolerances.extrapolation,
                                         rate_tol=cfg.tolerances.rate, max_iter=cfg.caps.max_iter)
        return l_alpha_s(z, a, s, mu, system, cfg.n_values(), tol=cfg.tolerances.extrapolation,
                         mc_trials=cfg.caps.mc_trials or 20_000, mc_horizon=cfg.caps.mc_horizon,
                         master_seed=cfg.master_seed)

    curves = _grid(cfg, grid, one)
    res["point"] = z.describe()
    res["curves"] = []
    for (a, s), c in zip(grid, curves):
        res["curves"].append(c.to_dict())
        label = f"alpha={a}" if s is None else f"alpha={a}, s={s}"
        warn.extend(f"{label}: {w}" for w in c.warnings)
        name = f"lcurve_alpha{_tag(a)}" + ("" if s is None else f"_s{_tag(s)}")
        out.csv(f"{name}.csv", c.write_csv)


def _lzero(cfg, out, res, warn):
    z = cfg.point_spec()
    curve = l_zero(z, cfg.grids.s_range, cfg.measure_model(), cfg.symbolic_system(), cfg.n_values(),
                   tol=cfg.tolerances.extrapolation, period_bound=cfg.caps.period_bound)
    res["point"] = z.describe()
    res.update(curve.to_dict())


def _union(cfg, out, res, warn):
    import csv

    z, mu, system = cfg.point_spec(), cfg.measure_model(), cfg.symbolic_system()
    p = _period(cfg, z)
    checks = [union_measure_check(z, p, n, k, mu, system, cap=cfg.caps.enumeration_cap)
              for n in cfg.n_values() for k in cfg.grids.k]
    res["point"] = z.describe()
    res["checks"] = [c.to_dict() for c in checks]
    bad = [c for c in checks if c.defect != 0]
    if bad:
        warn.append(f"{len(bad)} (n, k) points have non-zero defect; all have k p > n: "
                    f"{all(not c.overlapping for c in bad)}")

    def write(path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "k", "p", "exact", "prediction", "defect", "overlapping"])
            for c in checks:
                w.writerow([c.n, c.k, c.p, str(c.exact), str(c.prediction), str(c.defect), c.overlapping])

    out.csv("union_check.csv", write)


def _hypotheses(cfg, out, res, warn):
    z, mu, system = cfg.point_spec(), cfg.measure_model(), cfg.symbolic_system()
    profile = phi_profile(mu, max(cfg.grids.k_max, 8), "left", cfg.tolerances.decay_threshold)
    reports = []
    for a in cfg.alphas():
        if a == "inf":
            continue
        rep = check_hypotheses(z, mu, system, a, list(cfg.n_values()), profile=profile,
                               period_bound=cfg.caps.period_bound)
        reports.append({"alpha": a, **rep.to_dict()})
        if not rep.passed:
            warn.append(f"alpha={a}: hypotheses not all satisfied")
    res["point"] = z.describe()
    res["reports"] = reports


def _phi(cfg, out, res, warn):
    mu = cfg.measure_model()
    res["profiles"] = []
    for side in cfg.grids.sides:
        prof = phi_profile(mu, cfg.grids.k_max, side, cfg.tolerances.decay_threshold)
        res["profiles"].append(prof.to_dict())
        out.csv(f"phi_{side}.csv", prof.write_csv)
    if mu.kind == "markov":
        res["second_eigenvalue_modulus"] = second_eigenvalue_modulus(mu)


def _ball(cfg, out, res, warn):
    mu, z, rs = cfg.measure_model(), cfg.ball_center(), cfg.radii()
    grid = [(a, s) for a in cfg.alphas() if a != "inf" for s in cfg.grids.s]

    def one(item):
        a, s = item
        return l_ball(z, rs, a, s, mu, v=cfg.grids.v, mc_trials=cfg.caps.mc_trials,
                      master_seed=cfg.master_seed, tol=cfg.tolerances.extrapolation)

    curves = _grid(cfg, grid, one)
    res["center"] = z
    res["curves"] = []
    for (a, s), c in zip(grid, curves):
        res["curves"].append(c.to_dict())
        warn.extend(f"alpha={a}, s={s}: {w}" for w in c.warnings)
        out.csv(f"ball_alpha{_tag(a)}_s{_tag(s)}.csv", c.write_csv)
    p = doubling_period(z, cfg.caps.period_bound)
    if p is not None:
        est = theta_ball(z, p, rs, mu)
        res["theta_ball"] = est.to_dict()
        if not est.below_half:
            warn.append("ball theta is not below 1/2; the periodic branch is out of hypothesis")
    rows = growth_ratios(z, rs, mu, cfg.grids.v)
    excess = [float(q) - 1 for _, q, _, _ in rows]
    res["growth_ratio"] = {
        "rows": [{"r": r, "ratio": q, "lebesgue_bound": b, "within_lebesgue_bound": ok} for r, q, b, ok in rows],
        "decreasing_to_one": all(e2 < e1 for e1, e2 in zip(excess, excess[1:])) and excess[-1] >= 0,
    }


DISPATCH = {
    "survival": _survival,
    "escape-rate": _escape_rate,
    "theta": _theta,
    "lcurve": _lcurve,
    "lzero": _lzero,
    "union-check": _union,
    "hypotheses": _hypotheses,
    "phi": _phi,
    "ball": _ball,
}


def run(cfg: ExperimentConfig, write: bool = True) -> RunRecord:
    """Execute ``cfg``. Errors after validation still produce a partial record."""
    out = _Writer(cfg.out_dir if write else None)
    results: dict = {"kind": cfg.kind}
    warnings: list[str] = []
    status = "ok"
    start = time.perf_counter()
    try:
        DISPATCH[cfg.kind](cfg, out, results, warnings)
    except CapExceededError as exc:
        status = "cap-exceeded"
        warnings.append(str(exc))
    except NonConvergenceError as exc:
        status = "non-convergence"
        warnings.append(str(exc))
    except (ConfigError, DegenerateHoleError, ValueError) as exc:
        status = "invalid-input"
        warnings.append(str(exc))
    record = RunRecord(jsonable(cfg.to_dict()), __version__, time.perf_counter() - start, status,
                       jsonable(results), warnings, [])
    if write:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        path = Path(cfg.out_dir) / f"{cfg.kind}.json"
        record.outputs = out.files + [str(path)]
        with open(path, "w") as fh:
            json.dump(record.to_dict(), fh, indent=2)
            fh.write("\n")
    return record


def first_divergence(a: Any, b: Any, path: str = "results") -> Optional[str]:
    """Path and values of the first differing leaf, or ``None`` when equal."""
    if isinstance(a, dict) and isinstance(b, dict):
        for k in list(a) + [k for k in b if k not in a]:
            if k not in a or k not in b:
                return f"{path}/{k}: present on one side only"
            d = first_divergence(a[k], b[k], f"{path}/{k}")
            if d:
                return d
        return None
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return f"{path}: length {len(a)} != {len(b)}"
        for i, (x, y) in enumerate(zip(a, b)):
            d = first_divergence(x, y, f"{path}/{i}")
            if d:
                return d
        return None
    return None if a == b else f"{path}: {a!r} != {b!r}"


def replay(path, seed: Optional[int] = None) -> tuple[int, str]:
    """Re-run the config of a record; returns (exit code, message)."""
    rec = RunRecord.load(path)
    recorded_seed = rec.config.get("master_seed")
    if seed is not None and seed != recorded_seed:
        return EXIT_REPLAY_MISMATCH, f"refusing replay: seed {seed} differs from recorded {recorded_seed} (a seed change is a config change)"
    cfg = ExperimentConfig.from_dict(rec.config)
    fresh = run(cfg, write=False)
    diff = first_divergence(jsonable(rec.results), fresh.to_dict()["results"])
    if diff:
        return EXIT_REPLAY_MISMATCH, f"replay mismatch at {diff}"
    return EXIT_OK, "replay reproduced the recorded results"

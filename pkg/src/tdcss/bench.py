"""Benchmark harness: wall-time series per phase with exact operation counts.

Each phase sweeps one independent variable.  Points are measured in a
shuffled order on every repetition so that drift (thermal, allocator) does
not masquerade as a trend; each point reports the median of its samples.
Operation counts are taken once per point and compared with the expected
formula, so counter checks never depend on timing.
"""

from __future__ import annotations

import csv
import platform
import random
import statistics
import time
from dataclasses import dataclass, field

from . import groups, scheme
from .granules import GranuleSet
from .policy import compile_lsss

PHASES = ("setup", "kgdu", "enc", "prework", "prework_n1", "dec", "revoke")

DEFAULT_RANGES = {
    "setup": range(100, 1001, 100),      # |U|
    "kgdu": range(10, 101, 10),          # |S|
    "enc": range(10, 101, 10),           # policy rows n1
    "prework": range(1, 11),             # |I| with n = 10
    "prework_n1": range(10, 101, 10),    # |S| with n = 1
    "dec": range(10, 101, 10),           # |S|, fixed policy with tau = 1
    "revoke": range(10, 101, 10),        # |S|
}

VARIABLES = {"setup": "universe", "kgdu": "attributes", "enc": "rows", "prework": "indices",
             "prework_n1": "attributes", "dec": "attributes", "revoke": "attributes"}


@dataclass
class Point:
    x: int
    samples: list = field(default_factory=list)
    ops: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)

    @property
    def counts_ok(self) -> bool:
        return all(self.ops.get(k) == v for k, v in self.expected.items())

    def as_dict(self) -> dict:
        return {"x": self.x, "median": statistics.median(self.samples),
                "mean": statistics.fmean(self.samples),
                "stdev": statistics.stdev(self.samples) if len(self.samples) > 1 else 0.0,
                "ops": self.ops, "expected_ops": self.expected, "counts_ok": self.counts_ok}


@dataclass
class Series:
    phase: str
    points: list

    def medians(self) -> list[float]:
        return [statistics.median(p.samples) for p in self.points]

    def slope(self) -> float:
        xs = [p.x for p in self.points]
        return statistics.linear_regression(xs, self.medians()).slope

    def relative_step_slope(self) -> float:
        """Fitted change per sweep step as a fraction of the mean time."""
        xs = [p.x for p in self.points]
        step = (xs[-1] - xs[0]) / (len(xs) - 1)
        return self.slope() * step / statistics.fmean(self.medians())

    def is_flat(self, tol: float = 0.02) -> bool:
        return abs(self.relative_step_slope()) < tol

    def is_increasing(self) -> bool:
        m = self.medians()
        return self.slope() > 0 and m[-1] > m[0]

    def as_dict(self) -> dict:
        return {"variable": VARIABLES[self.phase], "points": [p.as_dict() for p in self.points],
                "slope": self.slope(), "relative_step_slope": self.relative_step_slope(),
                "counts_ok": all(p.counts_ok for p in self.points)}


def _universe(size: int) -> list[str]:
    return [f"attr{i}" for i in range(size)]


def _and_policy(n1: int) -> str:
    return " AND ".join(f"attr{i}" for i in range(n1))


class _Fixture:
    """Keys, capsules and tasks shared by the per-point closures."""

    def __init__(self, rng, universe_size: int = 1000, ell: int = groups.DEFAULT_ELL):
        self.rng = rng
        self.mpk, self.msk = scheme.setup(_universe(universe_size), ell=ell, rng=rng)
        seed = scheme.gen_seed(self.mpk, "bench-pdo", rng=rng)
        pk, beta = scheme.pkeygen_pdo(self.mpk, seed.psi, rng=rng)
        self.sk_pdo = scheme.skeygen_pdo(seed.gamma, beta)
        self.pk = pk

    def granules(self, n: int) -> GranuleSet:
        return GranuleSet(tuple(self.rng.randbytes(self.mpk.ell // 8) for _ in range(n)), self.mpk.ell)

    def capsule(self, policy: str, n: int):
        gs = self.granules(n)
        dci, local, dc = scheme.encapsulate(self.mpk, self.sk_pdo, gs, compile_lsss(policy), rng=self.rng)
        return gs, dci, local, dc

    def sp_key(self, size: int, sp_id: str = "bench-sp"):
        return scheme.keygen_sp(self.mpk, self.msk, sp_id, _universe(size), rng=self.rng)


def _prepare(phase: str, x: int, fx: _Fixture):
    """Return ``(callable, expected_ops)`` for one sweep point."""
    mpk, rng = fx.mpk, fx.rng
    if phase == "setup":
        universe = _universe(x)
        return (lambda: scheme.setup(universe, rng=rng)), {"g2_exp": 1, "pairing": 0}
    if phase == "kgdu":
        attrs = _universe(x)
        return (lambda: scheme.keygen_sp(mpk, fx.msk, "bench-sp", attrs, rng=rng)), \
            {"g1_exp": x + 3, "g2_exp": 1, "pairing": 0}
    if phase == "enc":
        gs, policy = fx.granules(4), compile_lsss(_and_policy(x))
        return (lambda: scheme.encapsulate(mpk, fx.sk_pdo, gs, policy, rng=rng)), \
            {"g1_exp": 2 * policy.n1 + 2, "g2_exp": policy.tau + 2, "pairing": 1}
    if phase in ("prework", "prework_n1"):
        n, indices = (10, list(range(1, x + 1))) if phase == "prework" else (1, [1])
        gs, _, local, _ = fx.capsule("attr0", n)
        sp_id = f"sp-{x}"
        if phase == "prework_n1":
            fx.sp_key(x, sp_id)   # the recipient's key size must not matter
        return (lambda: scheme.task_issue(mpk, fx.sk_pdo, sp_id, gs, indices, local,
                                          expires=2e9, rng=rng, now=0)), \
            {"pairing": len(indices) + 2}
    if phase in ("dec", "revoke"):
        sk = fx.sp_key(x)
        gs, dci, local, dc = fx.capsule("attr0 AND attr1", 2)
        task, rev, _, _ = scheme.task_issue(mpk, fx.sk_pdo, sk.id, gs, [1, 2], local, 2e9, rng=rng, now=0)
        if phase == "revoke":
            return (lambda: scheme.update_dc(mpk, dci, dc, rev)), {"g1_exp": 1, "pairing": 0}
        pt1 = scheme.access_dc(mpk, sk, dci, task, fx.pk)
        return (lambda: scheme.dec_dc(mpk, sk, dci, dc, task, pt1)), {"pairing": dc.policy.tau + 4}
    raise ValueError(f"unknown phase {phase!r}")


def run_phase(phase: str, xs=None, repetitions: int = 5, rng=None, fixture: _Fixture | None = None) -> Series:
    if repetitions < 5:
        raise ValueError("repetitions must be at least 5")
    rng = rng if rng is not None else random.Random(0)
    fx = fixture or _Fixture(rng)
    xs = list(DEFAULT_RANGES[phase] if xs is None else xs)
    points = {x: Point(x) for x in xs}
    jobs = {}
    for x in xs:
        fn, expected = _prepare(phase, x, fx)
        with groups.count_ops() as ops:
            fn()
        points[x].ops, points[x].expected = ops.as_dict(), expected
        jobs[x] = fn
    order = list(xs)
    for _ in range(repetitions):
        rng.shuffle(order)
        for x in order:
            t0 = time.perf_counter()
            jobs[x]()
            points[x].samples.append(time.perf_counter() - t0)
    return Series(phase, [points[x] for x in xs])


def run_bench(phases=PHASES, ranges: dict | None = None, repetitions: int = 5, seed: int = 0) -> dict:
    rng = random.Random(seed)
    fx = _Fixture(rng)
    ranges = ranges or {}
    report = {"environment": {"python": platform.python_version(), "machine": platform.machine(),
                              "curve": groups.CURVE, "ell": fx.mpk.ell,
                              "universe": len(fx.mpk.universe), "repetitions": repetitions},
              "phases": {}}
    for phase in phases:
        series = run_phase(phase, ranges.get(phase), repetitions, rng, fx)
        report["phases"][phase] = series.as_dict()
    return report


def write_csv(report: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["phase", "x", "mean", "stdev"])
        for phase, series in report["phases"].items():
            for p in series["points"]:
                out.writerow([phase, p["x"], f"{p['mean']:.6g}", f"{p['stdev']:.6g}"])


def parse_range(text: str) -> list[int]:
    """``"10..100"`` (step 10 by default), ``"10..100:5"`` or ``"1,2,5"``."""
    if ".." in text:
        lo, _, rest = text.partition("..")
        hi, _, step = rest.partition(":")
        lo, hi = int(lo), int(hi)
        step = int(step) if step else max(1, (hi - lo) // 9)
        return list(range(lo, hi + 1, step))
    return [int(v) for v in text.split(",") if v]

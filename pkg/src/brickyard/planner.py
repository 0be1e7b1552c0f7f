"""Build-order optimization along the wall axis.

A plan is a sequence of robot stations. At each station the robot builds
every brick that is unbuilt, within arm reach, fully supported, and whose
left neighbor is built, repeating until nothing more can be placed.
Plans are ranked by (station count, travel distance, station sequence).

Positions are handled internally as integer micrometres so that distance
ties compare exactly.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, Unpartitionable
from .model import Blueprint, BrickType, blueprint_brick_centers

UM = 1_000_000
SUPPORT_OVERLAP_UM = 10_000  # lower bricks overlapping by more than 1 cm must be built


def _um(x: float) -> int:
    return int(round(x * UM))


@dataclass(frozen=True)
class PlannerConfig:
    t_x: float = 0.675
    reach_half_width: float | None = None

    def __post_init__(self):
        if self.t_x <= 0:
            raise ValueError("t_x must be positive")

    @property
    def half_width(self) -> float:
        return self.t_x if self.reach_half_width is None else self.reach_half_width


@dataclass(frozen=True)
class BuildPlan:
    stations: tuple[float, ...]
    bricks: tuple[tuple[tuple[int, int], ...], ...]
    distance: float
    method: str = "optimal"

    @property
    def station_count(self) -> int:
        return len(self.stations)

    def order(self) -> list[tuple[int, int]]:
        return [b for group in self.bricks for b in group]

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "stations": list(self.stations),
            "bricks": [[list(b) for b in group] for group in self.bricks],
            "distance": self.distance,
            "station_count": self.station_count,
        }

    @classmethod
    def from_json(cls, d) -> BuildPlan:
        return cls(
            tuple(d["stations"]),
            tuple(tuple(tuple(b) for b in group) for group in d["bricks"]),
            d["distance"],
            d.get("method", "optimal"),
        )


class _Wall:
    """Bitmask view of a blueprint: brick k is bit k in layer-major order."""

    def __init__(self, bp: Blueprint, cfg: PlannerConfig):
        centers = blueprint_brick_centers(bp)
        self.keys = [(k, i) for k, i, _, _ in centers]
        self.x = [_um(x) for _, _, x, _ in centers]
        self.n = len(centers)
        self.full = (1 << self.n) - 1
        self.h = _um(cfg.half_width)
        lo = [_um(x - t.length / 2) for _, _, x, t in centers]
        hi = [_um(x + t.length / 2) for _, _, x, t in centers]
        layer = [k for k, _, _, _ in centers]
        self.deps = [0] * self.n
        for b in range(self.n):
            k, i = self.keys[b]
            if i > 0:
                self.deps[b] |= 1 << (b - 1)
            if k > 0:
                for a in range(self.n):
                    if layer[a] == k - 1 and min(hi[a], hi[b]) - max(lo[a], lo[b]) > SUPPORT_OVERLAP_UM:
                        self.deps[b] |= 1 << a
        self.candidates = sorted({x + _um(cfg.t_x) for x in self.x})
        self.reach = [self.reach_mask(p) for p in self.candidates]
        self._closure: dict[tuple[int, int], int] = {}

    def reach_mask(self, p: int) -> int:
        m = 0
        for b in range(self.n):
            if abs(self.x[b] - p) <= self.h:
                m |= 1 << b
        return m

    def closure_mask(self, built: int, reach: int) -> int:
        new = 0
        changed = True
        while changed:
            changed = False
            avail = reach & ~built & ~new
            b = 0
            while avail:
                if avail & 1 and not (self.deps[b] & ~(built | new)):
                    new |= 1 << b
                    changed = True
                avail >>= 1
                b += 1
        return new

    def closure(self, built: int, ci: int) -> int:
        key = (built, ci)
        out = self._closure.get(key)
        if out is None:
            out = self.closure_mask(built, self.reach[ci])
            self._closure[key] = out
        return out

    def bits(self, mask: int) -> list[int]:
        return [b for b in range(self.n) if mask >> b & 1]

    def check_feasible(self) -> None:
        covered = 0
        for r in self.reach:
            covered |= r
        if covered != self.full:
            missing = [self.keys[b] for b in self.bits(self.full & ~covered)]
            raise Infeasible(f"bricks never in reach: {missing}")

    def lb_stations(self, built: int) -> int:
        xs = sorted(self.x[b] for b in self.bits(self.full & ~built))
        count = 0
        cover = None
        for x in xs:
            if cover is None or x > cover:
                count += 1
                cover = x + 2 * self.h
        return count

    def lb_distance(self, built: int, cur: int | None) -> int:
        if cur is None or built == self.full:
            return 0
        xs = [self.x[b] for b in self.bits(self.full & ~built)]
        a = min(xs) + self.h
        b = max(xs) - self.h
        p = cur
        left_first = max(0, p - a) + max(0, b - min(p, a))
        right_first = max(0, b - p) + max(0, max(p, b) - a)
        return min(left_first, right_first)


def candidate_positions(bp: Blueprint, cfg: PlannerConfig | None = None) -> list[float]:
    cfg = cfg or PlannerConfig()
    return [c / UM for c in _Wall(bp, cfg).candidates]


def buildable_closure(bp: Blueprint, built, station: float, cfg: PlannerConfig | None = None) -> list[tuple[int, int]]:
    """Bricks newly placed from ``station`` given the built (layer, index) set."""
    cfg = cfg or PlannerConfig()
    w = _Wall(bp, cfg)
    index = {k: b for b, k in enumerate(w.keys)}
    mask = 0
    for key in built:
        mask |= 1 << index[tuple(key)]
    new = w.closure_mask(mask, w.reach_mask(_um(station)))
    return [w.keys[b] for b in w.bits(new)]


def support_dependencies(bp: Blueprint) -> dict[tuple[int, int], tuple[tuple[int, int], ...]]:
    """Bricks that must be built before each brick: its left neighbor and the
    lower-layer bricks it overlaps by more than 1 cm."""
    w = _Wall(bp, PlannerConfig())
    return {w.keys[b]: tuple(w.keys[a] for a in w.bits(w.deps[b])) for b in range(w.n)}


def is_placeable(deps: dict, built, key) -> bool:
    built = {tuple(k) for k in built}
    return tuple(key) not in built and all(d in built for d in deps[tuple(key)])


def _make_plan(w: _Wall, seq: tuple[int, ...], method: str) -> BuildPlan:
    built = 0
    groups = []
    dist = 0
    prev = None
    for ci in seq:
        new = w.closure(built, ci)
        groups.append(tuple(w.keys[b] for b in w.bits(new)))
        built |= new
        if prev is not None:
            dist += abs(w.candidates[ci] - w.candidates[prev])
        prev = ci
    assert built == w.full
    return BuildPlan(tuple(w.candidates[c] / UM for c in seq), tuple(groups), dist / UM, method)


def plan_optimal(bp: Blueprint, cfg: PlannerConfig | None = None, prune: bool = True) -> BuildPlan:
    """Exact lexicographic optimum over station sequences.

    Consecutive stations differ and every station must place at least one
    brick. With ``prune`` the backtracking search memoizes solved
    (built set, station) states and skips siblings whose lower bounds on
    remaining stations and distance cannot beat the best sibling so far.
    """
    cfg = cfg or PlannerConfig()
    w = _Wall(bp, cfg)
    w.check_feasible()
    memo: dict = {}
    cands = w.candidates

    def best(built: int, cur: int | None):
        if built == w.full:
            return (0, 0, ())
        if prune:
            hit = memo.get((built, cur))
            if hit is not None:
                return hit
        result = None
        for ci in range(len(cands)):
            if ci == cur:
                continue
            new = w.closure(built, ci)
            if not new:
                continue
            d = 0 if cur is None else abs(cands[ci] - cands[cur])
            nb = built | new
            if prune and result is not None:
                lb = 1 + w.lb_stations(nb)
                if lb > result[0]:
                    continue
                if lb == result[0] and d + w.lb_distance(nb, ci) >= result[1]:
                    continue
            sub = best(nb, ci)
            if sub is None:
                continue
            cand = (1 + sub[0], d + sub[1], (ci,) + sub[2])
            if result is None or cand < result:
                result = cand
        if prune:
            memo[(built, cur)] = result
        return result

    res = best(0, None)
    if res is None:
        raise Infeasible("no station sequence completes the wall")
    return _make_plan(w, res[2], "optimal")


def plan_greedy(bp: Blueprint, cfg: PlannerConfig | None = None) -> BuildPlan:
    """Pick the station that places the most bricks; ties: nearest, then leftmost."""
    cfg = cfg or PlannerConfig()
    w = _Wall(bp, cfg)
    w.check_feasible()
    built = 0
    cur = None
    seq = []
    while built != w.full:
        best_key, best_ci = None, None
        for ci, p in enumerate(w.candidates):
            if ci == cur:
                continue
            cnt = bin(w.closure(built, ci)).count("1")
            if cnt == 0:
                continue
            key = (-cnt, 0 if cur is None else abs(p - w.candidates[cur]), p)
            if best_key is None or key < best_key:
                best_key, best_ci = key, ci
        if best_ci is None:
            raise Infeasible("greedy planner is stuck")
        built |= w.closure(built, best_ci)
        seq.append(best_ci)
        cur = best_ci
    return _make_plan(w, tuple(seq), "greedy")


def replay_plan(bp: Blueprint, plan: BuildPlan, cfg: PlannerConfig | None = None) -> list[list[tuple[int, int]]]:
    """Per-station brick lists obtained by visiting the plan's stations in order."""
    cfg = cfg or PlannerConfig()
    built: set = set()
    out = []
    for p in plan.stations:
        new = buildable_closure(bp, built, p, cfg)
        built.update(new)
        out.append(new)
    return out


def plan(bp: Blueprint, mode: str = "optimal", cfg: PlannerConfig | None = None) -> BuildPlan:
    if mode == "optimal":
        return plan_optimal(bp, cfg)
    if mode == "greedy":
        return plan_greedy(bp, cfg)
    raise ValueError(f"unknown planner mode {mode!r}")


# ---------------------------------------------------------------- blueprints

COMPETITION_COUNTS = {BrickType.RED: 20, BrickType.GREEN: 10, BrickType.BLUE: 5}


def generate_blueprint(counts: dict, layers: int, layer_length: float, seed=0,
                       max_rejections: int = 100_000) -> Blueprint:
    """Uniformly random arrangement of the multiset into equal-length layers.

    A uniformly random permutation of the bricks is cut into consecutive
    layers; permutations whose cuts miss the layer boundaries are rejected.
    """
    items = []
    for t, c in sorted(((BrickType.parse(t), c) for t, c in counts.items()), key=lambda tc: tc[0].value):
        items += [t] * int(c)
    lengths = {t: _um(t.length) for t in BrickType}
    target = _um(layer_length)
    if layers < 1 or sum(lengths[t] for t in items) != layers * target:
        raise Unpartitionable("total brick length does not equal layers * layer_length")
    rng = np.random.default_rng(seed)
    arr = np.array(items, dtype=object)
    for _ in range(max_rejections):
        perm = arr[rng.permutation(len(arr))]
        out = []
        row = []
        acc = 0
        ok = True
        for t in perm:
            row.append(t)
            acc += lengths[t]
            if acc == target:
                out.append(tuple(row))
                row, acc = [], 0
            elif acc > target:
                ok = False
                break
        if ok and len(out) == layers:
            return Blueprint(tuple(out))
    raise Unpartitionable(f"no valid arrangement after {max_rejections} draws")


# ---------------------------------------------------------------- benchmark


@dataclass
class BenchRow:
    method: str
    instance: int
    stations: int
    distance: float
    runtime_s: float


@dataclass
class BenchConfig:
    n: int = 1000
    seed: int = 7
    layers: int = 2
    layer_length: float = 9.0
    counts: dict = field(default_factory=lambda: dict(COMPETITION_COUNTS))
    planner: PlannerConfig = field(default_factory=PlannerConfig)


def instance_blueprint(cfg: BenchConfig, i: int) -> Blueprint:
    return generate_blueprint(cfg.counts, cfg.layers, cfg.layer_length, seed=[cfg.seed, i])


def _bench_one(args) -> list[BenchRow]:
    cfg, i = args
    bp = instance_blueprint(cfg, i)
    rows = []
    for method, fn in (("optimal", plan_optimal), ("greedy", plan_greedy)):
        t0 = time.perf_counter()
        p = fn(bp, cfg.planner)
        rows.append(BenchRow(method, i, p.station_count, p.distance, time.perf_counter() - t0))
    return rows


def run_bench(cfg: BenchConfig, jobs: int = 1) -> list[BenchRow]:
    tasks = [(cfg, i) for i in range(cfg.n)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_bench_one, tasks, chunksize=8))
    else:
        results = [_bench_one(t) for t in tasks]
    return [r for rows in results for r in rows]


def summarize(rows: list[BenchRow]) -> dict[str, dict[str, float]]:
    out = {}
    for method in dict.fromkeys(r.method for r in rows):
        sel = [r for r in rows if r.method == method]
        st = [r.stations for r in sel]
        di = [r.distance for r in sel]
        rt = [r.runtime_s for r in sel]

        def sd(v):
            return statistics.pstdev(v) if len(v) > 1 else 0.0

        out[method] = {
            "stations_mean": statistics.fmean(st), "stations_stddev": sd(st),
            "distance_mean": statistics.fmean(di), "distance_stddev": sd(di),
            "runtime_mean": statistics.fmean(rt), "runtime_stddev": sd(rt),
        }
    return out


def bench_csv(rows: list[BenchRow], timing: bool = True) -> str:
    """Per-instance rows followed by ``mean`` and ``stddev`` rows per method.

    With ``timing=False`` runtimes are written as 0 so the file is
    reproducible byte for byte.
    """
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["method", "instance", "stations", "distance", "runtime_s"])
    for r in rows:
        wr.writerow([r.method, r.instance, r.stations, f"{r.distance:.6f}", f"{r.runtime_s if timing else 0:.6f}"])
    for method, s in summarize(rows).items():
        rt_m = s["runtime_mean"] if timing else 0.0
        rt_s = s["runtime_stddev"] if timing else 0.0
        wr.writerow([method, "mean", f"{s['stations_mean']:.4f}", f"{s['distance_mean']:.6f}", f"{rt_m:.6f}"])
        wr.writerow([method, "stddev", f"{s['stations_stddev']:.4f}", f"{s['distance_stddev']:.6f}", f"{rt_s:.6f}"])
    return buf.getvalue()


def summary_table_csv(rows: list[BenchRow], timing: bool = True) -> str:
    """One line per method: |B| mean/stddev, d_B mean/stddev, runtime mean/stddev."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["method", "stations_mean", "stations_stddev", "distance_mean", "distance_stddev",
                 "runtime_mean", "runtime_stddev"])
    for method, s in summarize(rows).items():
        rt = (s["runtime_mean"], s["runtime_stddev"]) if timing else (0.0, 0.0)
        wr.writerow([method, f"{s['stations_mean']:.2f}", f"{s['stations_stddev']:.2f}",
                     f"{s['distance_mean']:.2f}", f"{s['distance_stddev']:.2f}", f"{rt[0]:.2f}", f"{rt[1]:.2f}"])
    return buf.getvalue()


def ideal_station_count(bp: Blueprint, cfg: PlannerConfig | None = None) -> int:
    """Stations needed to reach every brick center, ignoring build constraints."""
    cfg = cfg or PlannerConfig()
    w = _Wall(bp, cfg)
    return w.lb_stations(0)


__all__ = [
    "PlannerConfig", "BuildPlan", "candidate_positions", "buildable_closure", "plan_optimal",
    "plan_greedy", "replay_plan", "generate_blueprint", "run_bench", "BenchConfig", "summarize",
    "bench_csv", "summary_table_csv", "COMPETITION_COUNTS", "support_dependencies", "is_placeable",
]

"""Monte Carlo ground truth for association and handover statistics.

Each realization draws an independent PPP deployment in a square window
centred at the origin, drops one user at the centre (association sample) and
walks one trajectory through the core of the window, logging every change of
the strongest biased-RSS base station.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, partial
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import ScenarioConfig, TierParams, association_weight
from .spatial import GridIndex, squared_distance

Z95 = 1.959963984540054


class EmptyDeploymentError(ValueError):
    pass


def realization_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for one realization; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index, stream)))


def guard_band(config: ScenarioConfig) -> float:
    lam_min = min(t.lam for t in config.tiers if t.lam > 0)
    return config.sim.guard_factor / math.sqrt(math.pi * lam_min)


def window_side(config: ScenarioConfig) -> float:
    g = guard_band(config)
    need = config.sim.trajectory_length + 2 * g
    if config.sim.window_side is None:
        return need
    if config.sim.window_side < need * (1 - 1e-12):
        raise ValueError(f"window side {config.sim.window_side} m is smaller than trajectory + 2 guard = {need} m")
    return config.sim.window_side


@dataclass(frozen=True)
class Deployment:
    tiers: tuple[TierParams, ...]
    positions: tuple[np.ndarray, ...]  # per tier, (n, 2) horizontal coordinates
    window: float
    eta: float
    seed: int
    index: int

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([association_weight(t, self.eta) for t in self.tiers])

    @cached_property
    def indexes(self) -> tuple[GridIndex, ...]:
        half = self.window / 2
        out = []
        for t, pos in zip(self.tiers, self.positions):
            cell = 1 / math.sqrt(t.lam) if t.lam > 0 else self.window
            out.append(GridIndex(pos, min(cell, self.window), (-half, -half, half, half)))
        return tuple(out)

    def counts(self) -> list[int]:
        return [len(p) for p in self.positions]


def sample_deployment(config: ScenarioConfig, index: int, window: float | None = None) -> Deployment:
    """Independent homogeneous PPP per tier on [-W/2, W/2]^2."""
    W = window_side(config) if window is None else window
    rng = realization_rng(config.seed, index, 0)
    positions = []
    for t in config.tiers:
        n = rng.poisson(t.lam * W * W) if t.lam > 0 else 0
        positions.append(rng.uniform(-W / 2, W / 2, size=(n, 2)))
    return Deployment(config.tiers, tuple(positions), W, config.eta, config.seed, index)


def strongest_bs(deployment: Deployment, user_pos: Sequence[float]) -> tuple[int, int]:
    """(tier, bs index) maximizing B*P*d^-eta for a user at (x, y, z).

    Within a tier B*P is constant and the heights are equal, so only the
    planar nearest BS of each tier competes.  Ties go to the lowest tier,
    then the lowest BS index.
    """
    x, y, z = user_pos
    best = None
    for tier, (t, index) in enumerate(zip(deployment.tiers, deployment.indexes)):
        if not len(index):
            continue
        bs, d2 = index.nearest(x, y)
        metric = (d2 + (z - t.height) ** 2) * deployment.weights[tier]
        if best is None or metric < best[0]:
            best = (metric, tier, bs)
    if best is None:
        raise EmptyDeploymentError("no base station in any tier")
    return best[1], best[2]


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str
    length: float
    step: float
    guard: float
    window: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.length < 0:
            raise ValueError("length must be >= 0")
        if self.length + 2 * self.guard > self.window * (1 + 1e-12):
            raise ValueError("trajectory plus guard bands do not fit in the window")


def trajectory_spec(config: ScenarioConfig, window: float | None = None) -> TrajectorySpec:
    W = window_side(config) if window is None else window
    return TrajectorySpec(config.sim.trajectory, config.sim.trajectory_length, config.sim.step,
                          guard_band(config), W)


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear path given by its vertices, parameterized by arc length."""

    vertices: np.ndarray

    @cached_property
    def arc(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.vertices, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    def position(self, s):
        s = np.asarray(s, dtype=float)
        return np.interp(s, self.arc, self.vertices[:, 0]), np.interp(s, self.arc, self.vertices[:, 1])


def make_trajectory(spec: TrajectorySpec, rng: np.random.Generator) -> Trajectory:
    """Straight line of random orientation through the window centre, or a
    random-waypoint path confined to the core square of side W - 2g."""
    if spec.kind == "straight":
        phi = rng.uniform(0, math.pi)
        d = 0.5 * spec.length * np.array([math.cos(phi), math.sin(phi)])
        return Trajectory(np.array([-d, d]))
    half = spec.window / 2 - spec.guard
    verts = [rng.uniform(-half, half, size=2)]
    travelled = 0.0
    while travelled < spec.length:
        nxt = rng.uniform(-half, half, size=2)
        seg = float(np.hypot(*(nxt - verts[-1])))
        if seg == 0:
            continue
        if travelled + seg > spec.length:
            nxt = verts[-1] + (nxt - verts[-1]) * (spec.length - travelled) / seg
            seg = spec.length - travelled
        verts.append(nxt)
        travelled += seg
    if len(verts) == 1:
        verts.append(verts[0].copy())
    return Trajectory(np.array(verts))


@dataclass(frozen=True)
class CrossingEvent:
    s: float
    source: tuple[int, int]
    target: tuple[int, int]


@dataclass
class CrossingLog:
    events: list[CrossingEvent]
    exposure: float

    def counts(self, n_tiers: int) -> np.ndarray:
        out = np.zeros((n_tiers, n_tiers), dtype=np.int64)
        for e in self.events:
            out[e.source[0], e.target[0]] += 1
        return out


def _chunk_length(deployment: Deployment) -> float:
    lam_max = max(t.lam for t in deployment.tiers)
    return float(np.clip(0.5 / math.sqrt(lam_max), 5.0, 500.0))


def _serving_along(deployment: Deployment, xs: np.ndarray, ys: np.ndarray, z: float,
                   cx: float, cy: float, reach: float) -> np.ndarray:
    """Encoded serving BS (tier * 2^40 + bs) for sample points within ``reach`` of (cx, cy)."""
    best_metric = None
    best_code = None
    for tier, (t, index) in enumerate(zip(deployment.tiers, deployment.indexes)):
        if not len(index):
            continue
        _, d2c = index.nearest(cx, cy)
        # padded so rounding in sqrt never drops the nearest BS itself
        cand = index.within(cx, cy, math.sqrt(d2c) * (1 + 1e-12) + 2 * reach + 1e-9)
        pts = index.points[cand]
        d2 = squared_distance(pts[None, :, :], xs[:, None], ys[:, None])
        arg = d2.argmin(axis=1)
        metric = (d2[np.arange(len(xs)), arg] + (z - t.height) ** 2) * deployment.weights[tier]
        code = (tier << 40) + cand[arg]
        if best_metric is None:
            best_metric, best_code = metric, code
        else:
            better = metric < best_metric
            best_metric = np.where(better, metric, best_metric)
            best_code = np.where(better, code, best_code)
    if best_metric is None:
        raise EmptyDeploymentError("no base station in any tier")
    return best_code


def _decode(code: int) -> tuple[int, int]:
    return int(code) >> 40, int(code) & ((1 << 40) - 1)


def walk_and_log(deployment: Deployment, trajectory: Trajectory, user_height: float,
                 step: float, refine_tol: float = 1e-3) -> CrossingLog:
    """Scan the strongest BS every ``step`` meters and log each change.

    A change between two samples is refined by bisection until the bracket
    is shorter than ``refine_tol``; if the midpoint reveals an intermediate
    server both halves are refined, so A -> B -> C inside one step logs two
    events.  A -> B -> A inside one step is invisible (step-size error).
    """
    length = trajectory.length
    n = int(math.floor(length / step + 1e-9)) + 1
    s_all = np.arange(n) * step
    if s_all[-1] < length:
        s_all = np.append(s_all, length)
    chunk = max(2, int(round(_chunk_length(deployment) / step)))
    codes = []
    for start in range(0, len(s_all), chunk):
        s = s_all[start:start + chunk]
        xs, ys = trajectory.position(s)
        mid = 0.5 * (s[0] + s[-1])
        cx, cy = trajectory.position(mid)
        reach = 0.5 * (s[-1] - s[0])
        codes.append(_serving_along(deployment, xs, ys, user_height, float(cx), float(cy), reach))
    codes = np.concatenate(codes) if codes else np.empty(0, dtype=np.int64)

    def serving(s):
        x, y = trajectory.position(s)
        tier, bs = strongest_bs(deployment, (float(x), float(y), user_height))
        return (tier << 40) + bs

    events: list[CrossingEvent] = []

    def refine(s0, c0, s1, c1):
        if s1 - s0 <= refine_tol:
            events.append(CrossingEvent(0.5 * (s0 + s1), _decode(c0), _decode(c1)))
            return
        sm = 0.5 * (s0 + s1)
        cm = serving(sm)
        if cm != c0:
            refine(s0, c0, sm, cm)
        if cm != c1:
            refine(sm, cm, s1, c1)

    for i in np.flatnonzero(codes[1:] != codes[:-1]):
        refine(float(s_all[i]), int(codes[i]), float(s_all[i + 1]), int(codes[i + 1]))
    return CrossingLog(events, length)


@dataclass(frozen=True)
class SimEstimate:
    """Monte Carlo estimate; ``value = count / exposure`` with a 95% CI half-width."""

    value: float
    count: float
    exposure: float
    ci_halfwidth: float
    units: str

    @property
    def insufficient(self) -> bool:
        return not self.exposure > 0

    def brackets(self, x: float) -> bool:
        return abs(x - self.value) <= self.ci_halfwidth


@dataclass
class RealizationResult:
    index: int
    served_tier: int
    serving_distance: float
    counts: np.ndarray
    exposure: float
    events: list[CrossingEvent] = field(default_factory=list)


def run_realization(config: ScenarioConfig, index: int, keep_events: bool = False,
                    window: float | None = None) -> RealizationResult:
    dep = sample_deployment(config, index, window)
    tier, bs = strongest_bs(dep, (0.0, 0.0, config.user_height))
    dist = float(np.hypot(*dep.positions[tier][bs]))
    n = len(config.tiers)
    if config.sim.trajectory_length > 0:
        spec = trajectory_spec(config, dep.window)
        traj = make_trajectory(spec, realization_rng(config.seed, index, 1))
        log = walk_and_log(dep, traj, config.user_height, config.sim.step, config.sim.refine_tol)
        counts, exposure = log.counts(n), log.exposure
        events = log.events if keep_events else []
    else:
        counts, exposure, events = np.zeros((n, n), dtype=np.int64), 0.0, []
    return RealizationResult(index, tier, dist, counts, exposure, events)


def association_estimate(served: np.ndarray, tier: int) -> SimEstimate:
    hits = (served == tier).astype(float)
    n = len(hits)
    p = hits.mean()
    half = Z95 * hits.std(ddof=1) / math.sqrt(n) if n > 1 else math.inf
    return SimEstimate(float(p), float(hits.sum()), float(n), float(half), "probability")


def rate_estimate(counts: np.ndarray, exposures: np.ndarray, units: str = "1/m") -> SimEstimate:
    """Ratio estimator sum(counts)/sum(exposure) with a delta-method CI."""
    total_c = float(counts.sum())
    total_e = float(exposures.sum())
    n = len(counts)
    if not total_e > 0:
        return SimEstimate(math.nan, total_c, total_e, math.nan, units)
    value = total_c / total_e
    if n > 1:
        resid = counts - value * exposures
        var = float((resid**2).sum()) / (n * (n - 1)) / (total_e / n) ** 2
        half = Z95 * math.sqrt(var)
    else:
        half = math.inf
    return SimEstimate(value, total_c, total_e, half, units)


@dataclass
class SimulationResult:
    tier_ids: tuple[str, ...]
    association: dict[int, SimEstimate]
    hol: dict[tuple[int, int], SimEstimate]
    serving_distance_samples: dict[int, np.ndarray]
    realizations: list[RealizationResult]

    @property
    def exposure(self) -> float:
        return float(sum(r.exposure for r in self.realizations))

    def total_events(self) -> int:
        return int(sum(r.counts.sum() for r in self.realizations))

    def hol_total(self) -> SimEstimate:
        counts = np.array([r.counts.sum() for r in self.realizations], dtype=float)
        exposures = np.array([r.exposure for r in self.realizations])
        return rate_estimate(counts, exposures)


def estimate(config: ScenarioConfig, n_realizations: int | None = None, workers: int = 1,
             keep_events: bool = False, window: float | None = None) -> SimulationResult:
    """Aggregate ``n_realizations`` independent realizations (config default if None).

    Realizations are independent work units; with ``workers > 1`` they run in
    a process pool, and results are aggregated in index order so the output
    does not depend on scheduling.
    """
    n = config.sim.realizations if n_realizations is None else n_realizations
    if n < 2:
        raise ValueError("need at least 2 realizations for a variance estimate")
    job = partial(run_realization, config, keep_events=keep_events, window=window)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(job, range(n), chunksize=max(1, n // (4 * workers))))
    else:
        results = [job(i) for i in range(n)]
    return aggregate(config, results)


def aggregate(config: ScenarioConfig, results: list[RealizationResult]) -> SimulationResult:
    results = sorted(results, key=lambda r: r.index)
    n_tiers = len(config.tiers)
    served = np.array([r.served_tier for r in results])
    dists = np.array([r.serving_distance for r in results])
    exposures = np.array([r.exposure for r in results])
    counts = np.stack([r.counts for r in results]).astype(float)
    association = {k: association_estimate(served, k) for k in range(n_tiers)}
    hol = {(k, j): rate_estimate(counts[:, k, j], exposures)
           for k in range(n_tiers) for j in range(n_tiers)}
    samples = {k: dists[served == k] for k in range(n_tiers)}
    return SimulationResult(tuple(t.id for t in config.tiers), association, hol, samples, results)


EVENT_COLUMNS = ("realization", "s_position_m", "from_tier", "from_id", "to_tier", "to_id")


def events_csv_text(result: SimulationResult) -> str:
    """Raw crossing dump (needs ``keep_events=True`` when estimating)."""
    ids = result.tier_ids
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    for r in result.realizations:
        for e in r.events:
            w.writerow([r.index, f"{e.s:.4f}", ids[e.source[0]], e.source[1], ids[e.target[0]], e.target[1]])
    return buf.getvalue()


def write_events_csv(path: str | Path, result: SimulationResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(events_csv_text(result))


def read_events_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["realization"] = int(row["realization"])
        row["s_position_m"] = float(row["s_position_m"])
        row["from_id"] = int(row["from_id"])
        row["to_id"] = int(row["to_id"])
    return rows


def count_matrix(results: Iterable[RealizationResult], n_tiers: int) -> np.ndarray:
    out = np.zeros((n_tiers, n_tiers), dtype=np.int64)
    for r in results:
        out += r.counts
    return out

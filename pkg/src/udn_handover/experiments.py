"""Parameter sweeps, analytical-vs-simulation validation and plot scripts.

Sweeps evaluate every point with the analytical engine and, optionally, the
simulator, and lay the results out as a CSV table with a fixed column order.
All simulations at different sweep points share the master seed, so the
curves are computed on common random deployments.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .analytics import analyze
from .model import (
    KM2,
    ConfigError,
    PairGeometry,
    ScenarioConfig,
    db_to_linear,
    pair_geometry,
)
from .simulator import SimulationResult, estimate, write_events_csv

VARIABLES = ("user_height", "tier_intensity", "bias_db")
M_PER_KM = 1e3
S_PER_H = 3600.0


@dataclass(frozen=True)
class SweepSpec:
    """One-dimensional sweep over ``variable`` in [start, stop].

    ``tier`` selects the tier whose intensity (BS/km^2) or bias (dB) is
    swept.  ``families`` lists bias values in dB for ``family_tier``; each
    family repeats the whole sweep.  ``realizations`` and
    ``trajectory_length`` (m) override the scenario's simulation budget.
    """

    variable: str
    start: float
    stop: float
    points: int
    config: ScenarioConfig
    tier: int | str = 1
    families: tuple[float, ...] = ()
    family_tier: int | str = 1
    analytical: bool = True
    simulate: bool = False
    realizations: int | None = None
    trajectory_length: float | None = None

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ConfigError("sweep.variable", f"must be one of {VARIABLES}, got {self.variable!r}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError("sweep.range", "bounds must be finite")
        if not self.start < self.stop:
            raise ConfigError("sweep.range", f"need min < max, got [{self.start}, {self.stop}]")
        if self.points < 2:
            raise ConfigError("sweep.points", f"need at least 2 points, got {self.points}")
        if not (self.analytical or self.simulate):
            raise ConfigError("sweep.engines", "enable the analytical engine, the simulator, or both")
        if self.variable == "user_height" and self.start < 0:
            raise ConfigError("sweep.range", "user height must be >= 0")
        if self.variable == "tier_intensity" and self.start <= 0:
            raise ConfigError("sweep.range", "intensity must be > 0")
        try:
            self.config.tier_index(self.tier)
            if self.families:
                self.config.tier_index(self.family_tier)
        except (IndexError, KeyError) as exc:
            raise ConfigError("sweep.tier", str(exc)) from None
        if self.variable == "bias_db" and self.families and \
                self.config.tier_index(self.tier) == self.config.tier_index(self.family_tier):
            raise ConfigError("sweep.families", "cannot sweep and fix the bias of the same tier")
        if self.realizations is not None and self.realizations < 2:
            raise ConfigError("sim.realizations", "need at least 2 realizations")
        if self.trajectory_length is not None and not self.trajectory_length >= 0:
            raise ConfigError("sim.trajectory_length_m", "must be >= 0")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)

    def variable_column(self) -> str:
        if self.variable == "user_height":
            return "user_height_m"
        tid = self.config.tiers[self.config.tier_index(self.tier)].id
        if self.variable == "tier_intensity":
            return f"lambda_{tid}_per_km2"
        return f"bias_{tid}_db"

    def family_column(self) -> str:
        return f"bias_{self.config.tiers[self.config.tier_index(self.family_tier)].id}_db"

    def point_config(self, value: float, family: float | None = None) -> ScenarioConfig:
        cfg = self.config
        if family is not None:
            cfg = cfg.with_tier(self.family_tier, bias=db_to_linear(family))
        if self.variable == "user_height":
            cfg = replace(cfg, user_height=float(value))
        elif self.variable == "tier_intensity":
            cfg = cfg.with_tier(self.tier, lam=float(value) / KM2)
        else:
            cfg = cfg.with_tier(self.tier, bias=db_to_linear(float(value)))
        sim = cfg.sim
        if self.realizations is not None:
            sim = replace(sim, realizations=self.realizations)
        if self.trajectory_length is not None:
            sim = replace(sim, trajectory_length=self.trajectory_length)
        return replace(cfg, sim=sim)


def pair_labels(config: ScenarioConfig) -> list[tuple[int, int, str]]:
    ids = [t.id for t in config.tiers]
    return [(k, j, ids[k] + ids[j]) for k in range(len(ids)) for j in range(len(ids))]


def sweep_columns(spec: SweepSpec) -> list[str]:
    ids = [t.id for t in spec.config.tiers]
    pairs = [lab for _, _, lab in pair_labels(spec.config)]
    cols = [spec.variable_column()]
    if spec.families:
        cols.append(spec.family_column())
    cols += [f"A_{i}" for i in ids]
    cols += [f"HOL_{p}" for p in pairs] + ["HOL_total", "HOL_total_flat"]
    cols += [f"H_{p}" for p in pairs] + ["H_total"]
    if spec.simulate:
        for name in [f"A_{i}" for i in ids] + [f"HOL_{p}" for p in pairs] + ["HOL_total"]:
            cols += [f"{name}_mc", f"{name}_ci"]
        cols.append("mc_exposure_km")
    cols.append("error")
    return cols


def format_value(v) -> str:
    """Byte-stable text for one CSV cell: 12 significant digits, '.' decimals."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


@dataclass
class SweepTable:
    columns: list[str]
    rows: list[dict]
    simulations: list[SimulationResult] = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([format_value(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        return path

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r.get(name) is None else float(r[name]) for r in self.rows])


def _analytical_fields(cfg: ScenarioConfig) -> dict:
    an = analyze(cfg)
    flat = analyze(cfg.flattened())
    ids = [t.id for t in cfg.tiers]
    out = {f"A_{ids[k]}": an.association[k].total for k in range(2)}
    for k, j, lab in pair_labels(cfg):
        out[f"HOL_{lab}"] = an.report.hol[(k, j)] * M_PER_KM
        out[f"H_{lab}"] = an.report.rate[(k, j)] * S_PER_H
    out["HOL_total"] = an.report.hol_total * M_PER_KM
    out["HOL_total_flat"] = flat.report.hol_total * M_PER_KM
    out["H_total"] = an.report.rate_total * S_PER_H
    return out


def _simulation_fields(res: SimulationResult, cfg: ScenarioConfig) -> dict:
    ids = [t.id for t in cfg.tiers]
    out = {}
    for k, i in enumerate(ids):
        out[f"A_{i}_mc"] = res.association[k].value
        out[f"A_{i}_ci"] = res.association[k].ci_halfwidth
    for k, j, lab in pair_labels(cfg):
        est = res.hol[(k, j)]
        out[f"HOL_{lab}_mc"] = est.value * M_PER_KM
        out[f"HOL_{lab}_ci"] = est.ci_halfwidth * M_PER_KM
    tot = res.hol_total()
    out["HOL_total_mc"] = tot.value * M_PER_KM
    out["HOL_total_ci"] = tot.ci_halfwidth * M_PER_KM
    out["mc_exposure_km"] = res.exposure / M_PER_KM
    return out


def run_sweep(spec: SweepSpec, workers: int = 1, keep_events: bool = False,
              progress: Callable[[int, int], None] | None = None) -> SweepTable:
    """Evaluate the sweep point by point; failures are recorded in ``error``."""
    columns = sweep_columns(spec)
    families: Sequence[float | None] = spec.families or (None,)
    rows, sims = [], []
    total = len(families) * spec.points
    for fam in families:
        for value in spec.values:
            row: dict = {columns[0]: float(value)}
            if fam is not None:
                row[spec.family_column()] = float(fam)
            errors = []
            try:
                cfg = spec.point_config(value, fam)
            except (ConfigError, ValueError) as exc:
                row["error"] = f"config: {exc}"
                rows.append(row)
                continue
            if spec.analytical:
                try:
                    row.update(_analytical_fields(cfg))
                except (ArithmeticError, ValueError) as exc:
                    errors.append(f"analytical: {exc}")
            if spec.simulate:
                try:
                    res = estimate(cfg, workers=workers, keep_events=keep_events)
                    row.update(_simulation_fields(res, cfg))
                    sims.append(res)
                except (ArithmeticError, ValueError) as exc:
                    errors.append(f"simulation: {exc}")
            row["error"] = "; ".join(errors)
            rows.append(row)
            if progress is not None:
                progress(len(rows), total)
    return SweepTable(columns, rows, sims)


def write_sweep_events(table: SweepTable, directory: str | Path) -> list[Path]:
    """One raw crossing CSV per simulated sweep point."""
    directory = Path(directory)
    paths = []
    for i, res in enumerate(table.simulations):
        path = directory / f"events_{i:03d}.csv"
        write_events_csv(path, res)
        paths.append(path)
    return paths


def figure3_spec(config: ScenarioConfig, simulate: bool = False, **budget) -> SweepSpec:
    """User height 0 to 60 m in 25 points at the given scenario."""
    return SweepSpec("user_height", 0.0, 60.0, 25, config, simulate=simulate, **budget)


def figure4_spec(config: ScenarioConfig, simulate: bool = False, **budget) -> SweepSpec:
    """Small-cell intensity 10 to 100 per km^2 for small-cell bias 0 dB and 6 dB."""
    return SweepSpec("tier_intensity", 10.0, 100.0, 10, config, tier=1, families=(0.0, 6.0),
                     family_tier=1, simulate=simulate, **budget)


# validation -------------------------------------------------------------------

DEFAULT_TOLERANCES = {"rel": 0.05, "closed_form": 1e-9}


@dataclass(frozen=True)
class ValidationRow:
    point: str
    quantity: str
    analytical: float
    reference: float
    ci_halfwidth: float
    rel_error: float
    passed: bool
    source: str  # "mc" or "closed_form"


def _row(point, quantity, analytical, reference, ci, tol, source) -> ValidationRow:
    diff = abs(analytical - reference)
    rel = diff / abs(analytical) if analytical != 0 else (0.0 if diff == 0 else math.inf)
    ok = bool(math.isfinite(reference) and diff <= max(ci, tol * abs(analytical)))
    return ValidationRow(point, quantity, float(analytical), float(reference), float(ci), rel, ok, source)


def corrupt_beta(factor: float) -> Callable[[PairGeometry], PairGeometry]:
    """Mutation hook: scale beta_kj by ``factor`` and rederive the dependent fields."""

    def mutate(g: PairGeometry) -> PairGeometry:
        b = g.beta_kj * factor
        D_k = b * g.h_uj**2 - g.h_uk**2
        D_j = g.h_uk**2 / b - g.h_uj**2
        return replace(g, beta_kj=b, beta_jk=1 / b, D_k=D_k, D_j=D_j,
                       L_k=math.sqrt(max(D_k, 0.0)), L_j=math.sqrt(max(D_j, 0.0)))

    return mutate


def validation_grid(config: ScenarioConfig) -> list[tuple[str, ScenarioConfig]]:
    """The fixed validation points derived from ``config``.

    flat: all heights zero; table: the scenario as given; three height
    regimes: user on the ground, user where the two effective heights are
    equal, and user above both antennas.
    """
    hm, hs = config.tiers[0].height, config.tiers[1].height
    grid = [("flat", config.flattened()), ("table", config)]
    for name, h in (("ground", 0.0), ("equal_eff_height", 0.5 * (hm + hs)),
                    ("above", max(hm, hs) + 20.0)):
        grid.append((f"{name}(h_u={h:g})", replace(config, user_height=h)))
    return grid


def validate(config: ScenarioConfig, tolerances: Mapping[str, float] | None = None,
             simulate: bool = True, mutate: Callable[[PairGeometry], PairGeometry] | None = None,
             workers: int = 1) -> tuple[list[ValidationRow], int]:
    """Run the validation grid; returns the rows and the exit status (0 or 1)."""
    if len(config.tiers) != 2:
        raise ConfigError("tiers", f"validation needs exactly 2 tiers, got {len(config.tiers)}")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    ids = [t.id for t in config.tiers]
    rows: list[ValidationRow] = []

    for name, cfg in validation_grid(config):
        geom = pair_geometry(cfg) if mutate is None else mutate(pair_geometry(cfg))
        an = analyze(cfg, geometry=geom)
        if name == "flat":
            m, s = cfg.tiers
            closed = m.lam / (m.lam + s.lam * (s.weight / m.weight) ** (2 / cfg.eta))
            rows.append(_row(name, f"A_{ids[0]}", an.association[0].total, closed, 0.0,
                             tol["closed_form"], "closed_form"))
        if not simulate:
            continue
        res = estimate(cfg, workers=workers)
        for k in range(2):
            est = res.association[k]
            rows.append(_row(name, f"A_{ids[k]}", an.association[k].total, est.value,
                             est.ci_halfwidth, tol["rel"], "mc"))
        for k, j, lab in pair_labels(cfg):
            est = res.hol[(k, j)]
            rows.append(_row(name, f"HOL_{lab}", an.report.hol[(k, j)] * M_PER_KM, est.value * M_PER_KM,
                             est.ci_halfwidth * M_PER_KM, tol["rel"], "mc"))
        tot = res.hol_total()
        rows.append(_row(name, "HOL_total", an.report.hol_total * M_PER_KM, tot.value * M_PER_KM,
                         tot.ci_halfwidth * M_PER_KM, tol["rel"], "mc"))

    # single-tier reduction on the densest tier
    dense = max(range(2), key=lambda k: config.tiers[k].lam)
    lam = config.tiers[dense].lam
    other = 1 - dense
    single_two = config.with_tier(other, lam=0.0)
    an = analyze(single_two, geometry=None if mutate is None else mutate(pair_geometry(single_two)))
    closed = 4 * math.sqrt(lam) / math.pi * M_PER_KM
    name = f"single_tier({ids[dense]})"
    rows.append(_row(name, "HOL_total", an.report.hol_total * M_PER_KM, closed, 0.0,
                     tol["closed_form"], "closed_form"))
    if simulate:
        single = replace(config, tiers=(config.tiers[dense],))
        tot = estimate(single, workers=workers).hol_total()
        rows.append(_row(name, "HOL_total", an.report.hol_total * M_PER_KM, tot.value * M_PER_KM,
                         tot.ci_halfwidth * M_PER_KM, tol["rel"], "mc"))

    status = 0 if all(r.passed for r in rows) else 1
    return rows, status


def format_report(rows: Iterable[ValidationRow]) -> str:
    rows = list(rows)
    head = f"{'point':<24} {'quantity':<10} {'analytical':>13} {'reference':>13} {'ci95':>11} {'rel_err':>9}  src          result"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.point:<24} {r.quantity:<10} {r.analytical:>13.6g} {r.reference:>13.6g} "
                     f"{r.ci_halfwidth:>11.3g} {r.rel_error:>9.2%}  {r.source:<12} {'PASS' if r.passed else 'FAIL'}")
    failed = sum(not r.passed for r in rows)
    lines.append(f"{len(rows) - failed}/{len(rows)} rows passed")
    return "\n".join(lines) + "\n"


VALIDATION_COLUMNS = ("point", "quantity", "analytical", "reference", "ci_halfwidth", "rel_error", "passed", "source")


def validation_csv(rows: Iterable[ValidationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VALIDATION_COLUMNS)
    for r in rows:
        w.writerow([r.point, r.quantity, format_value(r.analytical), format_value(r.reference),
                    format_value(r.ci_halfwidth), format_value(r.rel_error), str(r.passed).lower(), r.source])
    return buf.getvalue()


# plotting ---------------------------------------------------------------------

_PLOT_TEMPLATE = '''\
"""Plot {title} from {csv_name}; needs matplotlib."""
import csv
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV_PATH = {csv_path!r}
OUT_PATH = sys.argv[1] if len(sys.argv) > 1 else {png_path!r}
X = {x!r}
FAMILY = {family!r}
CURVES = {curves!r}


def number(text):
    return float(text) if text not in ("", "nan") else float("nan")


with open(CSV_PATH, newline="", encoding="utf-8") as fh:
    rows = [r for r in csv.DictReader(fh) if not r.get("error")]

groups = defaultdict(list)
for r in rows:
    groups[r[FAMILY] if FAMILY else ""].append(r)

fig, ax = plt.subplots(figsize=(7, 4.5))
styles = ["-", "--", ":", "-."]
for g, (fam, members) in enumerate(sorted(groups.items(), key=lambda kv: number(kv[0] or "0"))):
    xs = [number(r[X]) for r in members]
    for c, name in enumerate(CURVES):
        label = name + (" (" + FAMILY + "=" + fam + ")" if FAMILY else "")
        line, = ax.plot(xs, [number(r[name]) for r in members], styles[g % len(styles)],
                        color="C%d" % c, label=label)
        if name + "_mc" in members[0]:
            ax.errorbar(xs, [number(r[name + "_mc"]) for r in members],
                        yerr=[number(r[name + "_ci"]) for r in members],
                        fmt="o", ms=3, color=line.get_color(), capsize=2)

ax.set_xlabel({xlabel!r})
ax.set_ylabel("handover rate per unit length [1/km]")
ax.grid(True, alpha=0.3)
ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig(OUT_PATH, dpi=150)
print(OUT_PATH)
'''


class PlotScriptError(ValueError):
    pass


def emit_plot_script(csv_path: str | Path, script_path: str | Path | None = None) -> Path:
    """Write a standalone matplotlib script that plots a sweep CSV.

    One curve per handover type plus the totals, one line style per bias
    family when the CSV has a family column; simulation columns become
    markers with error bars.
    """
    csv_path = Path(csv_path)
    try:
        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            first = next(reader, None)
    except OSError as exc:
        raise PlotScriptError(f"cannot read {csv_path}: {exc}") from None
    if not header:
        raise PlotScriptError(f"{csv_path} is empty")
    if first is None:
        raise PlotScriptError(f"{csv_path} has a header but no data rows")
    ids = [c[2:] for c in header if c.startswith("A_") and not c.endswith(("_mc", "_ci"))]
    if len(ids) != 2:
        raise PlotScriptError(f"{csv_path}: missing columns: need two tier association columns A_<tier>, found {ids}")
    pairs = [a + b for a in ids for b in ids]
    curves = [f"HOL_{p}" for p in pairs] + ["HOL_total", "HOL_total_flat"]
    missing = [c for c in curves if c not in header]
    if missing:
        raise PlotScriptError(f"{csv_path}: missing columns: {', '.join(missing)}")
    x = header[0]
    family = header[1] if header[1].startswith("bias_") else None
    script_path = Path(script_path) if script_path else csv_path.with_name(csv_path.stem + "_plot.py")
    text = _PLOT_TEMPLATE.format(
        title=f"HOL versus {x}", csv_name=csv_path.name, csv_path=str(csv_path.resolve()),
        png_path=str(csv_path.with_suffix(".png").resolve()), x=x, family=family, curves=curves,
        xlabel=x)
    script_path.write_text(text, encoding="utf-8")
    return script_path

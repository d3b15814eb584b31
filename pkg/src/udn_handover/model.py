"""Scenario parameters, unit handling and the derived two-tier geometry.

Internal units are meters, watts, linear bias, m/s and BS per m^2.  User-facing
values (dBm, dB, km/h, BS/km^2) are converted once, in :func:`normalize_units`.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

KM2 = 1e6  # m^2 per km^2
KMH = 1 / 3.6  # m/s per km/h

DEFAULT_CONFIG_PATH = Path(__file__).with_name("default_config.toml")


class ConfigError(ValueError):
    """Invalid scenario parameter; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


@dataclass(frozen=True)
class TierParams:
    """One tier of base stations.

    ``lam`` is in BS/m^2, ``power`` in watts, ``bias`` linear and ``height``
    in meters.  A zero intensity is allowed for programmatic limit cases
    (an empty tier); user configs must use a positive one.
    """

    id: str
    lam: float
    power: float
    bias: float = 1.0
    height: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"tiers.{self.id}.lambda", f"must be >= 0, got {self.lam}")
        if not (math.isfinite(self.power) and self.power > 0):
            raise ConfigError(f"tiers.{self.id}.power", f"must be > 0, got {self.power}")
        if not (math.isfinite(self.bias) and self.bias > 0):
            raise ConfigError(f"tiers.{self.id}.bias", f"must be > 0, got {self.bias}")
        if not (math.isfinite(self.height) and self.height >= 0):
            raise ConfigError(f"tiers.{self.id}.height", f"must be >= 0, got {self.height}")

    @property
    def weight(self) -> float:
        """Biased transmit power B*P."""
        return self.bias * self.power


@dataclass(frozen=True)
class SimSettings:
    """Monte Carlo settings.

    trajectory_length: meters of trajectory per realization (0 disables walking).
    window_side: simulation square side in meters; ``None`` selects the auto rule
        W = trajectory_length + 2 * guard.
    guard_factor: guard band g = guard_factor / sqrt(pi * lambda_min).
    """

    realizations: int = 200
    trajectory_length: float = 20_000.0
    step: float = 0.05
    window_side: float | None = None
    guard_factor: float = 5.0
    trajectory: str = "straight"
    refine_tol: float = 1e-3

    def __post_init__(self):
        if self.realizations < 1:
            raise ConfigError("sim.realizations", "must be positive")
        if not self.trajectory_length >= 0:
            raise ConfigError("sim.trajectory_length", "must be >= 0")
        if not self.step > 0:
            raise ConfigError("sim.step", "must be positive")
        if self.window_side is not None and not self.window_side > 0:
            raise ConfigError("sim.window_side", "must be positive")
        if not self.guard_factor > 0:
            raise ConfigError("sim.guard_factor", "must be positive")
        if self.trajectory not in ("straight", "waypoint"):
            raise ConfigError("sim.trajectory", "must be 'straight' or 'waypoint'")
        if not self.refine_tol > 0:
            raise ConfigError("sim.refine_tol", "must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    tiers: tuple[TierParams, ...]
    user_height: float = 0.0
    velocity: float = 30 * KMH
    eta: float = 4.0
    seed: int = 0
    sim: SimSettings = field(default_factory=SimSettings)

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))
        if not self.tiers:
            raise ConfigError("tiers", "at least one tier is required")
        ids = [t.id for t in self.tiers]
        if len(set(ids)) != len(ids):
            raise ConfigError("tiers", f"duplicate tier ids {ids}")
        if not (math.isfinite(self.eta) and self.eta > 2):
            raise ConfigError("user.eta", f"path-loss exponent must be > 2, got {self.eta}")
        if not (math.isfinite(self.user_height) and self.user_height >= 0):
            raise ConfigError("user.height", f"must be >= 0, got {self.user_height}")
        if not (math.isfinite(self.velocity) and self.velocity >= 0):
            raise ConfigError("user.velocity", f"must be >= 0, got {self.velocity}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")

    def tier_index(self, tier: int | str) -> int:
        if isinstance(tier, int):
            if not -len(self.tiers) <= tier < len(self.tiers):
                raise IndexError(f"no tier {tier}")
            return tier % len(self.tiers)
        for i, t in enumerate(self.tiers):
            if t.id == tier:
                return i
        raise KeyError(f"no tier with id {tier!r}")

    def with_tier(self, tier: int | str, **changes) -> ScenarioConfig:
        i = self.tier_index(tier)
        tiers = list(self.tiers)
        tiers[i] = replace(tiers[i], **changes)
        return replace(self, tiers=tuple(tiers))

    def flattened(self) -> ScenarioConfig:
        """Same scenario with user and every antenna at height zero."""
        return replace(self, user_height=0.0, tiers=tuple(replace(t, height=0.0) for t in self.tiers))


@dataclass(frozen=True)
class PairGeometry:
    """Derived quantities for an ordered tier pair (k, j).

    ``D_k``/``D_j`` are the signed threshold radicands
    beta_kj * h_uj^2 - h_uk^2 (and the mirror); ``L_k``/``L_j`` are their
    square roots clamped at zero.  A tier-k BS at horizontal distance below
    ``L_k`` beats every tier-j BS regardless of where it is.
    """

    k: int
    j: int
    beta_kj: float
    beta_jk: float
    lambda_kj: float
    lambda_jk: float
    h_uk: float
    h_uj: float
    D_k: float
    D_j: float
    L_k: float
    L_j: float


def _finite(value, name: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"not a number: {value!r}") from None
    if not math.isfinite(value):
        raise ConfigError(name, f"must be finite, got {value}")
    return value


def normalize_units(raw: Mapping[str, Any]) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from a user-facing key/value tree.

    Expected layout (the TOML config file maps onto it directly)::

        {"tiers": {"0": {"id": "m", "lambda_per_km2": 3, "power_dbm": 46,
                         "bias_db": 0, "height_m": 40}, ...},
         "user": {"height_m": 1.5, "velocity_kmh": 30, "eta": 4},
         "sim": {...}, "seed": 1}

    ``tiers`` may also be a list.  Powers are dBm, biases dB, intensities
    BS/km^2, velocity km/h.
    """
    tiers_raw = raw.get("tiers")
    if not tiers_raw:
        raise ConfigError("tiers", "missing")
    if isinstance(tiers_raw, Mapping):
        try:
            items = sorted(tiers_raw.items(), key=lambda kv: int(kv[0]))
        except ValueError:
            raise ConfigError("tiers", "section keys must be integers, e.g. [tiers.0]") from None
    else:
        items = list(enumerate(tiers_raw))

    tiers = []
    for key, t in items:
        prefix = f"tiers.{key}"
        lam = _finite(t.get("lambda_per_km2"), f"{prefix}.lambda_per_km2")
        if lam <= 0:
            raise ConfigError(f"{prefix}.lambda_per_km2", f"must be > 0, got {lam}")
        height = _finite(t.get("height_m", 0.0), f"{prefix}.height_m")
        if height < 0:
            raise ConfigError(f"{prefix}.height_m", f"must be >= 0, got {height}")
        if "power_dbm" in t:
            power = dbm_to_watts(_finite(t["power_dbm"], f"{prefix}.power_dbm"))
        else:
            power = _finite(t.get("power_w"), f"{prefix}.power_w")
        if power <= 0:
            raise ConfigError(f"{prefix}.power_w", f"must be > 0, got {power}")
        if "bias" in t:
            bias = _finite(t["bias"], f"{prefix}.bias")
            if bias <= 0:
                raise ConfigError(f"{prefix}.bias", f"must be > 0, got {bias}")
        else:
            bias = db_to_linear(_finite(t.get("bias_db", 0.0), f"{prefix}.bias_db"))
        tiers.append(TierParams(str(t.get("id", key)), lam / KM2, power, bias, height))

    user = raw.get("user", {})
    eta = _finite(user.get("eta", 4.0), "user.eta")
    if eta <= 2:
        raise ConfigError("user.eta", f"path-loss exponent must be > 2, got {eta}")
    user_height = _finite(user.get("height_m", 0.0), "user.height_m")
    if user_height < 0:
        raise ConfigError("user.height_m", f"must be >= 0, got {user_height}")
    velocity = _finite(user.get("velocity_kmh", 30.0), "user.velocity_kmh")
    if velocity < 0:
        raise ConfigError("user.velocity_kmh", f"must be >= 0, got {velocity}")

    s = raw.get("sim", {})
    defaults = SimSettings()
    window = s.get("window_side_m")
    sim = SimSettings(
        realizations=int(s.get("realizations", defaults.realizations)),
        trajectory_length=_finite(s.get("trajectory_length_m", defaults.trajectory_length),
                                  "sim.trajectory_length_m"),
        step=_finite(s.get("step_m", defaults.step), "sim.step_m"),
        window_side=None if window is None else _finite(window, "sim.window_side_m"),
        guard_factor=_finite(s.get("guard_factor", defaults.guard_factor), "sim.guard_factor"),
        trajectory=str(s.get("trajectory", defaults.trajectory)),
        refine_tol=_finite(s.get("refine_tol_m", defaults.refine_tol), "sim.refine_tol_m"),
    )
    seed = raw.get("seed", s.get("seed", 0))
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigError("seed", f"not an integer: {seed!r}") from None
    return ScenarioConfig(tuple(tiers), user_height, velocity * KMH, eta, seed, sim)


def to_raw(config: ScenarioConfig) -> dict:
    """Inverse of :func:`normalize_units` (user-facing units)."""
    tiers = {}
    for i, t in enumerate(config.tiers):
        tiers[str(i)] = {
            "id": t.id,
            "lambda_per_km2": t.lam * KM2,
            "power_dbm": watts_to_dbm(t.power),
            "bias_db": linear_to_db(t.bias),
            "height_m": t.height,
        }
    sim = {
        "realizations": config.sim.realizations,
        "trajectory_length_m": config.sim.trajectory_length,
        "step_m": config.sim.step,
        "guard_factor": config.sim.guard_factor,
        "trajectory": config.sim.trajectory,
        "refine_tol_m": config.sim.refine_tol,
    }
    if config.sim.window_side is not None:
        sim["window_side_m"] = config.sim.window_side
    return {
        "seed": config.seed,
        "tiers": tiers,
        "user": {"height_m": config.user_height, "velocity_kmh": config.velocity / KMH, "eta": config.eta},
        "sim": sim,
    }


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(round(v, 12))
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dumps_config(config: ScenarioConfig) -> str:
    raw = to_raw(config)
    lines = [f"seed = {raw['seed']}", ""]
    for key, tier in raw["tiers"].items():
        lines.append(f"[tiers.{key}]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in tier.items()]
        lines.append("")
    for section in ("user", "sim"):
        lines.append(f"[{section}]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in raw[section].items()]
        lines.append("")
    return "\n".join(lines)


def loads_config(text: str) -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", str(exc)) from None
    return normalize_units(raw)


def load_config(path: str | Path | None = None) -> ScenarioConfig:
    path = DEFAULT_CONFIG_PATH if path is None else Path(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    return loads_config(text)


def table_one(user_height: float = 1.5, **overrides) -> ScenarioConfig:
    """Shipped default scenario (macro 46 dBm/3 per km^2/40 m, small 24 dBm/10 per km^2/25 m)."""
    config = replace(load_config(), user_height=user_height)
    return replace(config, **overrides) if overrides else config


def pair_geometry(config: ScenarioConfig, k: int = 0, j: int = 1) -> PairGeometry:
    tk, tj = config.tiers[k], config.tiers[j]
    beta_kj = 1.0 if k == j else (tk.weight / tj.weight) ** (2.0 / config.eta)
    beta_jk = 1.0 if k == j else 1.0 / beta_kj
    h_uk = abs(config.user_height - tk.height)
    h_uj = abs(config.user_height - tj.height)
    if k == j:
        D_k = D_j = 0.0
    else:
        D_k = beta_kj * h_uj**2 - h_uk**2
        D_j = beta_jk * h_uk**2 - h_uj**2
    lam_k, lam_j = tk.lam, tj.lam
    den_k = lam_k + lam_j * beta_jk
    den_j = lam_j + lam_k * beta_kj
    return PairGeometry(
        k=k, j=j,
        beta_kj=beta_kj, beta_jk=beta_jk,
        lambda_kj=lam_k / den_k if den_k > 0 else 0.0,
        lambda_jk=lam_j / den_j if den_j > 0 else 0.0,
        h_uk=h_uk, h_uj=h_uj,
        D_k=D_k, D_j=D_j,
        L_k=math.sqrt(D_k) if D_k > 0 else 0.0,
        L_j=math.sqrt(D_j) if D_j > 0 else 0.0,
    )


def association_weight(tier: TierParams, eta: float) -> float:
    """(B*P)^(-2/eta): multiplier turning a squared distance into the exponentless metric."""
    return tier.weight ** (-2.0 / eta)


def biased_rss_metric(pos_user: Sequence[float], pos_bs: Sequence[float], tier: TierParams, eta: float) -> float:
    """Squared 3D distance scaled by (B*P)^(-2/eta); smaller means stronger biased RSS.

    The ordering over base stations equals the ordering of B*P*d^-eta
    reversed, without evaluating a power per comparison.  A co-located BS
    gives 0 and therefore always wins.
    """
    d2 = sum((a - b) ** 2 for a, b in zip(pos_user, pos_bs))
    return d2 * association_weight(tier, eta)

"""Request and response models of the HTTP service.

The config model mirrors the TOML file: user-facing units, tiers as a list
(or a mapping keyed by integer strings, as ``[tiers.N]`` sections parse).
Range checks that need the whole scenario stay in
:func:`udn_handover.model.normalize_units`; the service turns its
``ConfigError`` into a 422 response naming the field.
"""
from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

U64_MAX = 2**64 - 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TierModel(_Strict):
    id: str
    lambda_per_km2: float
    power_dbm: Optional[float] = None
    power_w: Optional[float] = None
    bias_db: Optional[float] = None
    bias: Optional[float] = None
    height_m: float = 0.0


class UserModel(_Strict):
    height_m: float = 0.0
    velocity_kmh: float = 30.0
    eta: float = 4.0


class SimModel(_Strict):
    realizations: int = 200
    trajectory_length_m: float = 20000.0
    step_m: float = 0.05
    window_side_m: Optional[float] = None
    guard_factor: float = 5.0
    trajectory: Literal["straight", "waypoint"] = "straight"
    refine_tol_m: float = 1e-3


class ConfigModel(_Strict):
    seed: int = Field(0, ge=0, le=U64_MAX)
    tiers: list[TierModel] = Field(min_length=1)
    user: UserModel = UserModel()
    sim: SimModel = SimModel()

    @field_validator("tiers", mode="before")
    @classmethod
    def _tiers_from_sections(cls, v):
        if isinstance(v, dict):
            try:
                return [v[k] for k in sorted(v, key=int)]
            except ValueError:
                raise ValueError("tier section keys must be integers, e.g. [tiers.0]") from None
        return v

    def raw(self) -> dict:
        return self.model_dump(exclude_none=True)


class ConfigResponse(BaseModel):
    config: ConfigModel
    toml: str


class SplitModel(BaseModel):
    total: float
    near: float
    far: float


class AnalyzeResponse(BaseModel):
    tier_ids: list[str]
    association: dict[str, SplitModel]
    thresholds_m: dict[str, float]
    hol_per_km: dict[str, float]
    rate_per_h: dict[str, float]
    hol_total_per_km: float
    hol_total_flat_per_km: float
    rate_total_per_h: float


class SweepRequest(_Strict):
    config: ConfigModel
    variable: Literal["user_height", "tier_intensity", "bias_db"]
    start: float
    stop: float
    points: int
    tier: Union[int, str] = 1
    families: list[float] = []
    family_tier: Union[int, str] = 1
    analytical: bool = True
    simulate: bool = False
    realizations: Optional[int] = None
    trajectory_length_m: Optional[float] = None
    events: bool = False


class EventFile(BaseModel):
    name: str
    csv: str


class SweepResponse(BaseModel):
    columns: list[str]
    csv: str
    failed_points: int
    events: list[EventFile] = []


class Tolerances(_Strict):
    rel: float = Field(0.05, gt=0)
    closed_form: float = Field(1e-9, gt=0)


class ValidateRequest(_Strict):
    config: ConfigModel
    tolerances: Tolerances = Tolerances()
    simulate: bool = True
    mutate_beta: Optional[float] = Field(None, gt=0)


class ValidationRowModel(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    point: str
    quantity: str
    analytical: float
    reference: float
    ci_halfwidth: float
    rel_error: float
    passed: bool
    source: str


class ValidateResponse(BaseModel):
    rows: list[ValidationRowModel]
    status: int
    report: str
    csv: str

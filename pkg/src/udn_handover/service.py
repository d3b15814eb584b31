"""HTTP service over the analytical engine, the simulator and the experiments."""
from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .analytics import analyze
from .experiments import (
    SweepSpec,
    corrupt_beta,
    format_report,
    run_sweep,
    validate,
    validation_csv,
)
from .model import ConfigError, ScenarioConfig, dumps_config, load_config, normalize_units, to_raw
from .schemas import (
    AnalyzeResponse,
    ConfigModel,
    ConfigResponse,
    EventFile,
    SplitModel,
    SweepRequest,
    SweepResponse,
    ValidateRequest,
    ValidateResponse,
    ValidationRowModel,
)
from .simulator import events_csv_text

app = FastAPI(title="udn-handover", version=__version__)


@app.exception_handler(ConfigError)
async def _config_error(request: Request, exc: ConfigError):
    detail = {"loc": exc.field.split("."), "field": exc.field, "msg": exc.message, "type": "config_error"}
    return JSONResponse(status_code=422, content={"detail": [detail]})


def _scenario(model: ConfigModel) -> ScenarioConfig:
    return normalize_units(model.raw())


def _config_response(config: ScenarioConfig) -> ConfigResponse:
    return ConfigResponse(config=ConfigModel.model_validate(to_raw(config)), toml=dumps_config(config))


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/config/default", response_model=ConfigResponse)
def default_config() -> ConfigResponse:
    return _config_response(load_config())


@app.post("/config/normalize", response_model=ConfigResponse)
def normalize(model: ConfigModel) -> ConfigResponse:
    return _config_response(_scenario(model))


@app.post("/analyze", response_model=AnalyzeResponse)
def analyze_endpoint(model: ConfigModel) -> AnalyzeResponse:
    config = _scenario(model)
    an = analyze(config)
    flat = analyze(config.flattened())
    ids = [t.id for t in config.tiers]
    labels = {(k, j): ids[k] + ids[j] for k in range(2) for j in range(2)}
    g = an.geometry
    return AnalyzeResponse(
        tier_ids=ids,
        association={ids[s.tier]: SplitModel(total=s.total, near=s.a1, far=s.a2) for s in an.association},
        thresholds_m={ids[g.k]: g.L_k, ids[g.j]: g.L_j},
        hol_per_km={labels[kj]: v * 1e3 for kj, v in an.report.hol.items()},
        rate_per_h={labels[kj]: v * 3600 for kj, v in an.report.rate.items()},
        hol_total_per_km=an.report.hol_total * 1e3,
        hol_total_flat_per_km=flat.report.hol_total * 1e3,
        rate_total_per_h=an.report.rate_total * 3600,
    )


@app.post("/sweep", response_model=SweepResponse)
def sweep_endpoint(req: SweepRequest) -> SweepResponse:
    spec = SweepSpec(req.variable, req.start, req.stop, req.points, _scenario(req.config),
                     tier=req.tier, families=tuple(req.families), family_tier=req.family_tier,
                     analytical=req.analytical, simulate=req.simulate, realizations=req.realizations,
                     trajectory_length=req.trajectory_length_m)
    table = run_sweep(spec, keep_events=req.events)
    events = []
    if req.events:
        events = [EventFile(name=f"events_{i:03d}.csv", csv=events_csv_text(res))
                  for i, res in enumerate(table.simulations)]
    failed = sum(bool(r.get("error")) for r in table.rows)
    return SweepResponse(columns=table.columns, csv=table.to_csv(), failed_points=failed, events=events)


@app.post("/validate", response_model=ValidateResponse)
def validate_endpoint(req: ValidateRequest) -> ValidateResponse:
    config = _scenario(req.config)
    mutate = None if req.mutate_beta is None else corrupt_beta(req.mutate_beta)
    rows, status = validate(config, req.tolerances.model_dump(), simulate=req.simulate, mutate=mutate)
    models = [ValidationRowModel(**asdict(r)) for r in rows]
    return ValidateResponse(rows=models, status=status, report=format_report(rows), csv=validation_csv(rows))

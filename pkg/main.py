"""
EquiSeek - Backend API
FastAPI application exposing the scenario catalog, pre-flight checks and
closed-loop runs over HTTP
"""
from datetime import datetime
import logging
from typing import Dict

from fastapi import FastAPI, HTTPException
from fastapi.concurrency import run_in_threadpool
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
import numpy as np

from config import Config
from schemas import (
    ErrorResponse, HealthResponse, NashRequest, NashResponse, RunRequest,
    RunResponse, ScenarioSummary,
)
from services.export_service import sample_stride
from services.scenario_service import SERIES, builtin_scenarios, check_scenario, run_scenario
from utils.errors import ConfigurationError, EquiSeekError, InputError, NoUniqueEquilibriumError
from utils.game import QuadraticGame, QuadraticPayoff, check_diagonal_dominance, assemble_hessian, nash_equilibrium

# Configure logging
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="EquiSeek API",
    description="Extremum and Nash equilibrium seeking through delay and PDE actuation channels",
    version="1.0.0"
)

# Configure CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=Config.CORS_ORIGINS,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

CATALOG = builtin_scenarios()


def _now() -> str:
    return datetime.utcnow().isoformat()


def _lookup(name: str):
    if name not in CATALOG:
        raise HTTPException(status_code=404, detail=f"Unknown scenario '{name}'")
    return CATALOG[name]


@app.on_event("startup")
async def startup_event():
    logger.info("Starting EquiSeek backend...")
    logger.info(f"{len(CATALOG)} built-in scenarios available")


@app.on_event("shutdown")
async def shutdown_event():
    logger.info("Shutting down EquiSeek backend...")


# API Endpoints
@app.get("/", response_model=Dict)
async def root():
    """Root endpoint with API information"""
    return {
        "name": "EquiSeek API",
        "version": "1.0.0",
        "description": "Scenario runner for extremum and Nash equilibrium seeking",
        "endpoints": {
            "health": "/health",
            "scenarios": "/scenarios",
            "scenario": "/scenarios/{name}",
            "check": "/scenarios/{name}/check (POST)",
            "run": "/scenarios/{name}/run (POST)",
            "nash": "/nash (POST)",
            "docs": "/docs"
        }
    }


@app.get("/health", response_model=HealthResponse)
async def health_check():
    return HealthResponse(status="healthy", timestamp=_now(), scenarios=len(CATALOG))


@app.get("/scenarios", response_model=list[ScenarioSummary])
async def list_scenarios():
    return [ScenarioSummary(name=s.name, description=s.description, players=len(s.players))
            for s in CATALOG.values()]


@app.get("/scenarios/{name}", response_model=Dict)
async def get_scenario(name: str):
    """Resolved configuration of a built-in scenario"""
    return _lookup(name).model_dump(mode="json")


@app.post("/scenarios/{name}/check", response_model=Dict)
async def check(name: str):
    """Stability report, resolved step and frozen estimator averages"""
    config = _lookup(name)
    try:
        return await run_in_threadpool(check_scenario, config)
    except (ConfigurationError, InputError, NoUniqueEquilibriumError) as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/scenarios/{name}/run", response_model=RunResponse)
async def run(name: str, request: RunRequest = None):
    """
    Run a built-in scenario

    Args:
        name: Catalog name
        request: Optional overrides of horizon, step, compensation and ε

    Returns:
        Metrics, divergence time and a decimated series summary
    """
    config = _lookup(name)
    request = request or RunRequest()
    try:
        # the loop is CPU-bound; keep it off the event loop
        result = await run_in_threadpool(
            run_scenario, config, t_end=request.t_end, dt=request.dt,
            compensation=request.compensation, epsilon=request.epsilon,
        )
    except (ConfigurationError, InputError, NoUniqueEquilibriumError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except EquiSeekError as e:
        logger.error(f"Run of '{name}' failed: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Simulation failed: {str(e)}")

    stride = sample_stride(result)
    series = {"t": result.times[::stride].tolist()}
    for signal in SERIES:
        series[signal] = result.series[signal][::stride].tolist()
    return RunResponse(
        success=True,
        name=result.name,
        dt=result.dt,
        steps=result.n_steps,
        wall_time=result.wall_time,
        config_hash=result.config_hash,
        divergence_time=result.divergence_time,
        theta_star=result.Theta_star.tolist(),
        final_Theta=result.series["Theta"][-1].tolist(),
        metrics=result.metrics.to_dict() if result.metrics else None,
        stability=result.stability.to_dict() if result.stability else {},
        series=series,
        timestamp=_now(),
    )


@app.post("/nash", response_model=NashResponse)
async def nash(request: NashRequest):
    """Closed-form Nash equilibrium of a posted quadratic game"""
    try:
        game = QuadraticGame(
            payoffs=tuple(
                QuadraticPayoff(owner=i, H=np.array(p.hessian), h=np.array(p.linear), c=p.constant)
                for i, p in enumerate(request.payoffs)
            ),
            epsilon=request.epsilon,
        )
        theta_star = nash_equilibrium(game)
    except (ConfigurationError, InputError, NoUniqueEquilibriumError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    return NashResponse(
        theta_star=theta_star.tolist(),
        payoffs_at_equilibrium=game.evaluate_all(theta_star).tolist(),
        dominance_passed=check_diagonal_dominance(assemble_hessian(game)).passed,
    )


# Error handlers
@app.exception_handler(HTTPException)
async def http_exception_handler(request, exc):
    """Custom HTTP exception handler"""
    return JSONResponse(
        status_code=exc.status_code,
        content=ErrorResponse(success=False, error=str(exc.detail), timestamp=_now()).model_dump()
    )


@app.exception_handler(Exception)
async def general_exception_handler(request, exc):
    """General exception handler"""
    logger.error(f"Unhandled exception: {str(exc)}")
    return JSONResponse(
        status_code=500,
        content=ErrorResponse(
            success=False,
            error="Internal server error",
            detail=str(exc),
            timestamp=_now()
        ).model_dump()
    )


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "main:app",
        host=Config.HOST,
        port=Config.PORT,
        reload=Config.DEBUG
    )

"""
EKG Pruning Service - FastAPI Application

Main application entry point with core configuration and routing.
"""

import time

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from api import __version__
from api.models.responses import HealthResponse
from api.routers import presets, runs
from api.utils.errors import register_exception_handlers
from lib.harness.config import get_settings
from lib.utils.gpu import get_gpu_info, get_optimal_device
from lib.utils.logging import setup_logging

settings = get_settings()
setup_logging(log_level=settings.log_level, use_json=settings.log_json)

# Track service start time for uptime calculation
START_TIME = time.time()

# Create FastAPI application
app = FastAPI(
    title="EKG Pruning Service",
    version=__version__,
    description=(
        "Run orchestration API for ensemble-knowledge-guided filter pruning: "
        "submit pipeline runs (search, memory bank, fine-tuning, evaluation, "
        "landscape analysis), poll their progress and fetch report tables."
    ),
    docs_url="/docs",
    redoc_url="/redoc",
)

# Configure CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Register exception handlers
register_exception_handlers(app)

# Register routers
app.include_router(runs.router, tags=["Runs"])
app.include_router(presets.router, tags=["Presets"])


@app.get("/", tags=["Root"])
async def root():
    """
    Service information.
    """
    return {
        "service": "EKG Pruning Service",
        "version": __version__,
        "status": "operational",
        "documentation": "/docs",
        "api_docs": "/redoc",
    }


@app.get("/health", tags=["Health"], response_model=HealthResponse)
async def health_check() -> HealthResponse:
    """
    Health check with uptime and the compute device runs will use.
    """
    return HealthResponse(
        status="healthy",
        uptime_seconds=time.time() - START_TIME,
        version=__version__,
        device=str(get_optimal_device(settings.device)),
        gpu=get_gpu_info(),
    )

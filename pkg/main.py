"""
Nonlocal Wave Lab - Main FastAPI Application

Spectral-Galerkin simulator for the wave equation with nonlocal weak damping,
integral anti-damping and a nonlinear source, exposed over HTTP next to the CLI.
"""

from fastapi import FastAPI

from app import __version__
from app.core.config import settings
from app.core.log import configure_logging
from app.routers import health, runs

configure_logging(settings.NLWAVE_LOG_LEVEL)

# Initialize the FastAPI app
app = FastAPI(
    title=settings.APP_TITLE,
    description=settings.APP_DESCRIPTION,
    version=__version__
)

# Include all routers
app.include_router(health.router)  # Health check routes (no prefix)
app.include_router(runs.router)    # Experiment routes (/runs)

# Root endpoint
@app.get("/")
async def root():
    """Root endpoint with API information."""
    return {
        "message": "Welcome to the Nonlocal Wave Lab API",
        "version": __version__,
        "commands": ["simulate", "verify", "sweep", "pair", "resolvent"],
        "features": [
            "Strang splitting with exact radial damping substep",
            "Stationary resolvent solver",
            "Absorbing-set sweeps",
            "Pair contraction probes",
            "Property verification suite"
        ],
        "docs": "/docs",
        "health": "/health"
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)

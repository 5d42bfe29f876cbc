"""
Health check and utility routes.
"""

from fastapi import APIRouter, Depends

from app import __version__
from app.core.config import Settings
from app.core.dependencies import get_run_store, get_settings
from app.services.run_store import RunStore

router = APIRouter(tags=["Health"])


@router.get("/health")
async def health_check(
    config: Settings = Depends(get_settings),
    store: RunStore = Depends(get_run_store)
):
    """
    Health check endpoint to verify server is running.
    """
    return {
        "status": "ok",
        "version": __version__,
        "environment": config.ENVIRONMENT,
        "output_root": str(store.root),
    }

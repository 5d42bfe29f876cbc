"""
FastAPI dependencies for shared services.
"""

from app.core.config import Settings, settings
from app.services.run_store import RunStore, run_store


def get_settings() -> Settings:
    """Process settings."""
    return settings


def get_run_store() -> RunStore:
    """Run store rooted at NLWAVE_OUT."""
    return run_store

"""
Configuration settings for the nonlocal wave simulator.
Handles environment variables and process-wide defaults.
"""

import logging
import os
from dotenv import load_dotenv

# Load environment variables
if os.getenv("ENVIRONMENT") != "production":
    load_dotenv()


class Settings:
    """Process settings loaded from environment variables."""

    # Output root used when no --out directory is given
    NLWAVE_OUT: str = os.getenv("NLWAVE_OUT", "runs")

    # Parallel trajectories in sweeps and pair experiments
    NLWAVE_WORKERS: int = int(os.getenv("NLWAVE_WORKERS", "1"))

    NLWAVE_LOG_LEVEL: str = os.getenv("NLWAVE_LOG_LEVEL", "INFO").upper()

    # Environment
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")

    # FastAPI Configuration
    APP_TITLE: str = "Nonlocal Wave Lab"
    APP_DESCRIPTION: str = (
        "Spectral-Galerkin simulator and verification harness for the wave equation "
        "with nonlocal weak damping and integral anti-damping"
    )

    def validate_required_settings(self) -> None:
        """Validate that environment overrides are usable."""
        if self.NLWAVE_WORKERS < 1:
            raise RuntimeError("NLWAVE_WORKERS must be a positive integer.")

        if not isinstance(logging.getLevelName(self.NLWAVE_LOG_LEVEL), int):
            raise RuntimeError(f"NLWAVE_LOG_LEVEL '{self.NLWAVE_LOG_LEVEL}' is not a logging level.")


# Global settings instance
settings = Settings()

# Validate settings on import
settings.validate_required_settings()

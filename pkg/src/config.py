"""
Configuration loader with validation.
Loads process-level settings from environment variables (optionally a .env file).
"""

import os
from pathlib import Path
from dotenv import load_dotenv

from src.utils.errors import ConfigurationError


class Config:
    """Application configuration loaded from environment variables."""

    def __init__(self):
        """Initialize configuration by loading and validating environment variables."""
        load_dotenv()
        self._validate_and_load()

    def _validate_and_load(self):
        """Load and validate all environment variables."""

        # Logging
        self.LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
        self.LOG_STRUCTURED = self._get_bool("LOG_STRUCTURED", "false")

        # Experiment execution
        self.ERM_WORKERS = self._get_int("ERM_WORKERS", str(min(8, os.cpu_count() or 1)))
        self.ERM_OUTPUT_DIR = Path(os.getenv("ERM_OUTPUT_DIR", "results"))

        # ERM solver
        self.ERM_SOLVER_TOL = self._get_float("ERM_SOLVER_TOL", "1e-9")
        self.ERM_SOLVER_MAX_ITER = self._get_int("ERM_SOLVER_MAX_ITER", "500")

        # Fixed-point solver
        self.THEORY_TOL = self._get_float("THEORY_TOL", "1e-8")
        self.THEORY_MAX_SWEEPS = self._get_int("THEORY_MAX_SWEEPS", "2000")
        self.THEORY_DAMPING = self._get_float("THEORY_DAMPING", "0.5")
        self.QUADRATURE_NODES = self._get_int("QUADRATURE_NODES", "127")

        # MCP server
        self.MCP_SERVER_NAME = os.getenv("MCP_SERVER_NAME", "erm-asymptotics")
        self.TRANSPORT_MODE = os.getenv("TRANSPORT_MODE", "stdio")
        self.HOST = os.getenv("HOST", "127.0.0.1")
        self.PORT = self._get_int("PORT", "8000")

        if not 0.0 < self.THEORY_DAMPING <= 1.0:
            raise ConfigurationError(
                f"THEORY_DAMPING must lie in (0, 1], got {self.THEORY_DAMPING}"
            )
        if self.ERM_WORKERS < 1:
            raise ConfigurationError(f"ERM_WORKERS must be >= 1, got {self.ERM_WORKERS}")

    def _get_int(self, key: str, default: str) -> int:
        """
        Read an integer environment variable.

        Raises:
            ConfigurationError: If the value does not parse as an integer
        """
        raw = os.getenv(key, default)
        try:
            return int(raw)
        except ValueError:
            raise ConfigurationError(f"Environment variable '{key}' must be an integer, got '{raw}'")

    def _get_float(self, key: str, default: str) -> float:
        """
        Read a float environment variable.

        Raises:
            ConfigurationError: If the value does not parse as a float
        """
        raw = os.getenv(key, default)
        try:
            return float(raw)
        except ValueError:
            raise ConfigurationError(f"Environment variable '{key}' must be a number, got '{raw}'")

    def _get_bool(self, key: str, default: str) -> bool:
        return os.getenv(key, default).lower() in ("1", "true", "yes")

    def output_dir(self, subdir: str = "") -> Path:
        """Return (and create) a directory under ERM_OUTPUT_DIR."""
        path = self.ERM_OUTPUT_DIR / subdir if subdir else self.ERM_OUTPUT_DIR
        path.mkdir(parents=True, exist_ok=True)
        return path


# Global configuration instance
# Import this in other modules: from src.config import config
try:
    config = Config()
except ConfigurationError as e:
    print(f"⚠️  Configuration Warning: {e.message}")
    print("💡 Fix your environment or .env file; library defaults are used where possible")
    config = None

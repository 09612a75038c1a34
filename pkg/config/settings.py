from pathlib import Path
from typing import List
import os
from dotenv import load_dotenv

# Load environment variables
env_path = Path(__file__).parent.parent / '.env'
load_dotenv(dotenv_path=env_path)

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']


class Settings:
    """Configuration settings loaded from environment variables."""

    OUTPUT_DIR: str = os.getenv('VNF_OUTPUT_DIR', 'output')
    TOPOLOGY_DIR: str = os.getenv('VNF_TOPOLOGY_DIR', str(Path(__file__).parent.parent / 'data' / 'topologies'))
    LOGGING_LEVEL: str = os.getenv('LOGGING_LEVEL', 'INFO').upper()
    DEFAULT_SEED: str = os.getenv('VNF_DEFAULT_SEED', '1')
    JOBS: str = os.getenv('VNF_JOBS', '1')
    LP_SOLVER_MSG: bool = os.getenv('VNF_LP_SOLVER_MSG', 'False').lower() in ('1', 'true', 'yes')
    MAX_INPUT_SIZE: int = int(os.getenv('VNF_MAX_INPUT_MB', '512')) * 1024 * 1024  # Convert MB to bytes

    @classmethod
    def validate_settings(cls) -> List[str]:
        """Validate settings; returns the names of invalid entries."""
        invalid_vars = []

        if not cls.OUTPUT_DIR:
            invalid_vars.append('OUTPUT_DIR')
        if cls.LOGGING_LEVEL not in LOG_LEVELS:
            invalid_vars.append('LOGGING_LEVEL')
        for var in ['DEFAULT_SEED', 'JOBS']:
            value = getattr(cls, var)
            if not value.isdigit():
                invalid_vars.append(var)
        if cls.JOBS.isdigit() and int(cls.JOBS) < 1:
            invalid_vars.append('JOBS')

        return invalid_vars

    @classmethod
    def is_valid(cls) -> bool:
        """Check if all settings are valid."""
        return len(cls.validate_settings()) == 0

    @classmethod
    def default_seed(cls) -> int:
        return int(cls.DEFAULT_SEED)

    @classmethod
    def default_jobs(cls) -> int:
        return int(cls.JOBS)

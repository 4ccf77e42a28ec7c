from pathlib import Path
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

ENV_PREFIX = "SLO_LEDGER_"


def _env(name: str, default: str) -> str:
    return os.getenv(f"{ENV_PREFIX}{name}", default)


# Base paths
ROOT_DIR = Path(__file__).parent.parent  # Gets the project root directory
DATA_DIR = Path(_env("DATA_DIR", str(ROOT_DIR / "data")))
STATE_DIR = DATA_DIR / "state"
REPORTS_DIR = DATA_DIR / "reports"
CONFIGS_DIR = ROOT_DIR / "configs"
DEFAULT_SCENARIO_PATH = CONFIGS_DIR / "default.yaml"

# API Settings
API_HOST = _env("API_HOST", "0.0.0.0")
API_PORT = int(_env("API_PORT", "8000"))
API_ALLOWED_ORIGINS = [o for o in _env("API_ALLOWED_ORIGINS", "").split(",") if o]

# Endpoints
API_BASE_URL = f"http://localhost:{API_PORT}"


class Config:
    # Logging
    LOG_LEVEL = _env("LOG_LEVEL", "INFO")
    LOG_JSON = _env("LOG_JSON", "false").lower() in ("1", "true", "yes")

    # Metrics storage and collection
    SCRAPE_INTERVAL = _env("SCRAPE_INTERVAL", "15s")
    SCRAPE_TIMEOUT_S = float(_env("SCRAPE_TIMEOUT_S", "5"))
    RETENTION = _env("RETENTION", "7d")
    LOOKBACK = _env("LOOKBACK", "5m")

    # SLO generation
    SLO_WINDOWS = tuple(_env("SLO_WINDOWS", "7d,28d,30d").split(","))
    GOOD_CODE_LABEL = _env("GOOD_CODE_LABEL", "code")
    LLM_ENDPOINT = _env("LLM_ENDPOINT", "http://localhost:11434/api/generate")
    LLM_MODEL = _env("LLM_MODEL", "llama3")
    LLM_TIMEOUT_S = float(_env("LLM_TIMEOUT_S", "30"))
    MAX_REPAIR_ATTEMPTS = int(_env("MAX_REPAIR_ATTEMPTS", "2"))

    # Federated learning
    HIDDEN_UNITS = int(_env("HIDDEN_UNITS", "8"))
    ERROR_RATIO_THRESHOLD = float(_env("ERROR_RATIO_THRESHOLD", "0.02"))
    LATENCY_THRESHOLD_S = float(_env("LATENCY_THRESHOLD_S", "1.0"))
    PERMUTATIONS = int(_env("PERMUTATIONS", "20"))

    # Ledger
    MAX_BLOCK_TXS = int(_env("MAX_BLOCK_TXS", "50"))
    BLOCK_INTERVAL_MS = int(_env("BLOCK_INTERVAL_MS", "200"))
    NETWORK_LATENCY_MS = int(_env("NETWORK_LATENCY_MS", "20"))

    # Monitoring
    MONITOR_INTERVAL = _env("MONITOR_INTERVAL", "1m")
    MONITOR_HORIZON = _env("MONITOR_HORIZON", "6h")
    CURRENT_BURN_WINDOW = _env("CURRENT_BURN_WINDOW", "1h")
    WEBHOOK_URL = os.getenv(f"{ENV_PREFIX}WEBHOOK_URL")

    # Data Configuration
    DATA_DIR = DATA_DIR
    STATE_DIR = STATE_DIR
    REPORTS_DIR = REPORTS_DIR

    @classmethod
    def ensure_dirs(cls) -> None:
        """Create the data directories used by the CLI and the API."""
        for directory in (cls.DATA_DIR, cls.STATE_DIR, cls.REPORTS_DIR):
            directory.mkdir(parents=True, exist_ok=True)

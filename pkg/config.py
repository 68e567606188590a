"""
Runtime configuration for evdom.

Values come from the environment (optionally a local .env file) and are read
once at import time.
"""
import os

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# --- Configuration ---
EVDOM_THREADS = int(os.getenv("EVDOM_THREADS", str(os.cpu_count() or 1)))
EVDOM_LOG_LEVEL = os.getenv("EVDOM_LOG_LEVEL", "WARNING").upper()
DEFAULT_EPS = float(os.getenv("EVDOM_DEFAULT_EPS", "1e-10"))
DEFAULT_SEED = int(os.getenv("EVDOM_DEFAULT_SEED", "42"))

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def thread_cap() -> int:
    """Number of worker threads allowed for independent samples."""
    return max(1, EVDOM_THREADS)

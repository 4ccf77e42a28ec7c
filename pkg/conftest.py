import sys
from pathlib import Path

# `src` is imported as a top-level package by the test suite and scripts
ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))
